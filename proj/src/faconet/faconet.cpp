#include "moda/faconet.hpp"

#include "moda/error.hpp"

#include <cmath>

namespace moda::faco {

void FacoConfig::validate() const {
    require(d > 0 && disc_hidden > 0, ErrorCode::ConfigError, "FaCo widths must be positive");
    require(lambda >= 0.0 && gan_weight >= 0.0, ErrorCode::ConfigError, "FaCo loss weights must be non-negative");
    require(adam.lr > 0.0, ErrorCode::ConfigError, "FaCo learning rate must be positive");
}

FacoBatch FacoBatch::from_samples(const std::vector<FacoSample>& samples) {
    require(!samples.empty(), ErrorCode::DatasetEmpty, "FaCo batch needs at least one sample");
    const std::size_t b = samples.size();
    FacoBatch batch{Tensor({b, kFaceWidth}), Tensor({b, kMouthWidth}), Tensor({b, kEyeWidth}), Tensor({b, kFaceWidth})};
    auto put = [](Tensor& dst, std::size_t row, std::span<const double> src) {
        std::copy(src.begin(), src.end(), dst.data().begin() + static_cast<std::ptrdiff_t>(row * dst.dim(1)));
    };
    for (std::size_t i = 0; i < b; ++i) {
        put(batch.subject, i, samples[i].subject.flat());
        put(batch.mouth, i, samples[i].mouth.flat());
        put(batch.eyes, i, samples[i].eyes.flat());
        put(batch.target, i, samples[i].target.flat());
    }
    return batch;
}

FacoNet::FacoNet(const FacoConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    nn::Rng rng(seed);
    const std::size_t d = cfg_.d;
    mouth_enc_ = nn::Mlp(gen_, "enc_mouth", {kMouthWidth, d, d}, rng);
    eye_enc_ = nn::Mlp(gen_, "enc_eyes", {kEyeWidth, d, d}, rng);
    face_enc_ = nn::Mlp(gen_, "enc_face", {kFaceWidth, d, d}, rng);
    composer_ = nn::Mlp(gen_, "composer", {2 * d, 2 * d, kFaceWidth}, rng);
    critic_ = nn::Mlp(disc_, "critic", {kFaceWidth, cfg_.disc_hidden, cfg_.disc_hidden, 1}, rng);
}

Var FacoNet::compose(const Var& subject, const Var& mouth, const Var& eyes) const {
    require(subject.shape().size() == 2 && subject.dim(1) == kFaceWidth, ErrorCode::ShapeMismatch,
            "FaCo subject must be [B x 1434], got " + shape_string(subject.shape()));
    require(mouth.shape().size() == 2 && mouth.dim(1) == kMouthWidth, ErrorCode::ShapeMismatch,
            "FaCo mouth must be [B x 120], got " + shape_string(mouth.shape()));
    require(eyes.shape().size() == 2 && eyes.dim(1) == kEyeWidth, ErrorCode::ShapeMismatch,
            "FaCo eyes must be [B x 180], got " + shape_string(eyes.shape()));
    require(mouth.dim(0) == subject.dim(0) && eyes.dim(0) == subject.dim(0), ErrorCode::ShapeMismatch,
            "FaCo inputs disagree on batch size");
    const Var p_m = mouth_enc_(mouth);
    const Var p_e = eye_enc_(eyes);
    const Var p_f = face_enc_(subject);
    const Var fused = ad::add(ad::concat_cols(p_m, p_e), ad::concat_cols(p_f, p_f));
    return ad::add(subject, composer_(fused));
}

motion::FacePoints FacoNet::compose(const motion::FacePoints& subject, const motion::MouthPoints& mouth,
                                    const motion::EyePoints& eyes) const {
    auto row = [](std::span<const double> flat) {
        return Var::constant(Tensor({1, flat.size()}, std::vector<double>(flat.begin(), flat.end())));
    };
    const Var out = compose(row(subject.flat()), row(mouth.flat()), row(eyes.flat()));
    return motion::FacePoints(out.value().storage());
}

Var FacoNet::discriminate(const Var& face) const {
    require(face.shape().size() == 2 && face.dim(1) == kFaceWidth, ErrorCode::ShapeMismatch,
            "discriminator input must be [B x 1434], got " + shape_string(face.shape()));
    return critic_(face);
}

Var loss_disc(const Var& z, const Var& z_hat) {
    return ad::add(ad::mean_square(ad::add_scalar(z, -1.0)), ad::mean_square(z_hat));
}

Var loss_gen(const Var& z_hat, const Var& pred, const Tensor& target, double lambda, double gan_weight) {
    require(pred.value().shape() == target.shape(), ErrorCode::ShapeMismatch,
            "generator output " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
    const Var adv = ad::scale(ad::mean_square(ad::add_scalar(z_hat, -1.0)), gan_weight);
    return ad::add(adv, ad::scale(ad::mean_abs_diff(pred, Var::constant(target)), lambda));
}

FacoTrainer::FacoTrainer(FacoNet& net)
    : net_(net), opt_g_(net.generator().all(), net.config().adam), opt_d_(net.discriminator().all(), net.config().adam) {}

FacoStepRecord FacoTrainer::step(const FacoBatch& batch) {
    const auto& cfg = net_.config();
    const Var subject = Var::constant(batch.subject);
    const Var mouth = Var::constant(batch.mouth);
    const Var eyes = Var::constant(batch.eyes);
    FacoStepRecord rec;

    const Var fake = net_.compose(subject, mouth, eyes);
    if (cfg.gan_weight > 0.0) {
        opt_d_.zero_grad();
        const Var ld = loss_disc(net_.discriminate(Var::constant(batch.target)), net_.discriminate(ad::detach(fake)));
        rec.disc = ld.item();
        require(std::isfinite(rec.disc), ErrorCode::NonFiniteLoss,
                "FaCo discriminator loss is not finite at step " + std::to_string(opt_d_.steps()));
        ad::backward(ld);
        opt_d_.step();
    }

    const Var z_hat = cfg.gan_weight > 0.0 ? net_.discriminate(fake) : Var::constant(Tensor({batch.size(), 1}, 1.0));
    const Var lg = loss_gen(z_hat, fake, batch.target, cfg.lambda, cfg.gan_weight);
    rec.gen = lg.item();
    rec.l1 = ad::mean_abs_diff(fake, Var::constant(batch.target)).item();
    require(std::isfinite(rec.gen), ErrorCode::NonFiniteLoss,
            "FaCo generator loss is not finite at step " + std::to_string(opt_g_.steps()) + " (l1 " +
                std::to_string(rec.l1) + ")");
    ad::backward(lg);
    opt_g_.step();
    // The generator pass also left gradients on the critic.
    opt_d_.zero_grad();
    return rec;
}

double mean_point_error(const FacoNet& net, const FacoBatch& batch) {
    const Var pred = net.compose(Var::constant(batch.subject), Var::constant(batch.mouth), Var::constant(batch.eyes));
    const auto& p = pred.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); i += 3) {
        const double dx = p[i] - batch.target[i];
        const double dy = p[i + 1] - batch.target[i + 1];
        const double dz = p[i + 2] - batch.target[i + 2];
        acc += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return acc / static_cast<double>(p.size() / 3);
}

}  // namespace moda::faco

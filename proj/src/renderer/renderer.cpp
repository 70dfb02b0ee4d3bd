#include "moda/renderer.hpp"

#include "moda/error.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace moda::render {

std::array<double, kTpeSize> tpe(std::uint64_t t) {
    std::array<double, kTpeSize> e{};
    for (std::size_t i = 0; i < kTpeSize / 2; ++i) {
        const double arg = static_cast<double>(t) * static_cast<double>(1u << i) / 100.0;
        e[2 * i] = std::sin(arg);
        e[2 * i + 1] = std::cos(arg);
    }
    return e;
}

void RendererConfig::validate() const {
    require(resolution >= 64 && std::has_single_bit(resolution), ErrorCode::ConfigError,
            "renderer resolution must be a power of two >= 64, got " + std::to_string(resolution));
    require(channels.size() >= levels(), ErrorCode::ConfigError,
            "renderer needs " + std::to_string(levels()) + " channel widths, got " + std::to_string(channels.size()));
    for (double w : {lambda_c, lambda_m, lambda_p, lambda_fm, gan_weight}) {
        require(w >= 0.0, ErrorCode::ConfigError, "renderer loss weights must be non-negative");
    }
    require(disc_scales >= 1 && disc_channels >= 1, ErrorCode::ConfigError, "discriminator needs a scale and width");
    require(adam.lr > 0.0, ErrorCode::ConfigError, "renderer learning rate must be positive");
}

std::size_t RendererConfig::levels() const { return static_cast<std::size_t>(std::countr_zero(resolution)); }

Tensor draw_condition(std::size_t width, std::size_t height, std::span<const motion::Vec2> face_2d,
                      std::span<const motion::Vec2> torso_2d, const motion::FaceTopology& topo, double half_width) {
    require(face_2d.size() == motion::kFacePoints, ErrorCode::ShapeMismatch, "condition needs 478 projected points");
    require(torso_2d.size() == motion::kTorsoPoints, ErrorCode::ShapeMismatch, "condition needs 18 torso points");
    Tensor cov({height, width}, 0.0);
    for (const auto& e : topo.edges) {
        raster::stroke_segment(cov, face_2d[e[0]], face_2d[e[1]], half_width);
    }
    raster::stroke_polyline(cov, torso_2d.subspan(0, motion::kTorsoPerSide), false, half_width);
    raster::stroke_polyline(cov, torso_2d.subspan(motion::kTorsoPerSide), false, half_width);
    for (auto& v : cov.data()) {
        v = 2.0 * v - 1.0;
    }
    return cov;
}

Tensor assemble_condition(std::span<const motion::Vec2> face_2d, std::span<const motion::Vec2> torso_2d,
                          const Tensor& reference, std::uint64_t t, const motion::FaceTopology& topo,
                          double half_width) {
    require(!reference.empty(), ErrorCode::EmptyReference, "condition frame needs a reference image");
    require(reference.rank() == 3 && reference.dim(0) == 3, ErrorCode::ShapeMismatch,
            "reference image must be [3 x H x W], got " + shape_string(reference.shape()));
    const std::size_t h = reference.dim(1), w = reference.dim(2);
    const Tensor raster = draw_condition(w, h, face_2d, torso_2d, topo, half_width);
    Tensor out({kConditionChannels, h, w});
    const std::size_t plane = h * w;
    auto dst = out.data();
    std::copy(raster.data().begin(), raster.data().end(), dst.begin());
    std::copy(reference.data().begin(), reference.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(plane));
    const auto enc = tpe(t);
    for (std::size_t i = 0; i < kTpeSize; ++i) {
        std::fill_n(dst.begin() + static_cast<std::ptrdiff_t>((4 + i) * plane), plane, enc[i]);
    }
    return out;
}

Tensor mouth_mask(std::span<const motion::Vec2> outer_mouth_2d, std::size_t width, std::size_t height,
                  double dilation) {
    const raster::Mask m = raster::dilate_disk(raster::polygon_mask(width, height, outer_mouth_2d), dilation);
    Tensor out({height, width});
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        out[i] = m.bits[i];
    }
    return out;
}

double psnr(const Tensor& a, const Tensor& b) {
    require(same_shape(a, b), ErrorCode::ShapeMismatch, "psnr operands differ in shape");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(4.0 / mse);
}

RandomConvFeatures::RandomConvFeatures(const std::vector<std::size_t>& channels, std::uint64_t seed) {
    nn::Rng rng(seed);
    std::size_t in = 3;
    for (std::size_t c : channels) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in * 9));
        Tensor w({c, in, 3, 3});
        for (auto& v : w.data()) {
            v = rng.uniform(-limit, limit);
        }
        weights_.push_back(Var::constant(std::move(w)));
        biases_.push_back(Var::constant(Tensor({c}, 0.0)));
        in = c;
    }
}

std::vector<Var> RandomConvFeatures::features(const Var& image) const {
    std::vector<Var> out;
    Var h = image;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = ad::leaky_relu(ad::conv2d(h, weights_[i], biases_[i], i == 0 ? 1 : 2, 1));
        out.push_back(h);
    }
    return out;
}

Var Renderer::ResBlock::operator()(const Var& x) const {
    return ad::leaky_relu(ad::add(x, b(ad::leaky_relu(a(x)))));
}

Renderer::Renderer(const RendererConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    nn::Rng rng(seed);
    const std::size_t levels = cfg_.levels();
    const auto& ch = cfg_.channels;
    for (std::size_t l = 0; l < levels; ++l) {
        const std::string name = "enc" + std::to_string(l);
        const std::size_t in = l == 0 ? kConditionChannels : ch[l - 1];
        Level level{nn::Conv2d(gen_, name + ".down", in, ch[l], 3, l == 0 ? 1 : 2, rng),
                    {nn::Conv2d(gen_, name + ".res.a", ch[l], ch[l], 3, 1, rng),
                     nn::Conv2d(gen_, name + ".res.b", ch[l], ch[l], 3, 1, rng)}};
        enc_.push_back(std::move(level));
    }
    // dec_[l] restores level l from level l + 1.
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        const std::string name = "dec" + std::to_string(l);
        UpLevel up{nn::Conv2d(gen_, name + ".fuse", ch[l + 1] + ch[l], ch[l], 3, 1, rng),
                   {nn::Conv2d(gen_, name + ".res.a", ch[l], ch[l], 3, 1, rng),
                    nn::Conv2d(gen_, name + ".res.b", ch[l], ch[l], 3, 1, rng)}};
        dec_.push_back(std::move(up));
    }
    out_ = nn::Conv2d(gen_, "out", ch[0], 3, 1, 1, rng);

    const std::size_t dc = cfg_.disc_channels;
    for (std::size_t s = 0; s < cfg_.disc_scales; ++s) {
        const std::string name = "d" + std::to_string(s);
        std::vector<nn::Conv2d> critic;
        critic.emplace_back(disc_, name + ".c0", 3 + kConditionChannels, dc, 3, 2, rng);
        critic.emplace_back(disc_, name + ".c1", dc, 2 * dc, 3, 2, rng);
        critic.emplace_back(disc_, name + ".c2", 2 * dc, 1, 3, 1, rng);
        critics_.push_back(std::move(critic));
    }
    perceptual_ = std::make_shared<RandomConvFeatures>(cfg_.perceptual_channels, seed ^ 0x9e3779b97f4a7c15ULL);
}

Var Renderer::generate(const Var& condition) const {
    require(condition.shape().size() == 4 && condition.dim(1) == kConditionChannels &&
                condition.dim(2) == cfg_.resolution && condition.dim(3) == cfg_.resolution,
            ErrorCode::ShapeMismatch,
            "generator input must be [N x 16 x " + std::to_string(cfg_.resolution) + " x " +
                std::to_string(cfg_.resolution) + "], got " + shape_string(condition.shape()));
    std::vector<Var> skips;
    Var h = condition;
    for (const auto& level : enc_) {
        h = level.res(ad::leaky_relu(level.down(h)));
        skips.push_back(h);
    }
    for (std::size_t l = dec_.size(); l-- > 0;) {
        h = ad::concat_channels(ad::upsample2x(h), skips[l]);
        h = dec_[l].res(ad::leaky_relu(dec_[l].fuse(h)));
    }
    return ad::tanh(out_(h));
}

DiscriminatorOutput Renderer::discriminate(const Var& image, const Var& condition) const {
    require(image.shape().size() == 4 && image.dim(1) == 3, ErrorCode::ShapeMismatch,
            "discriminator image must be [N x 3 x H x W]");
    require(condition.shape().size() == 4 && condition.dim(0) == image.dim(0) && condition.dim(2) == image.dim(2) &&
                condition.dim(3) == image.dim(3),
            ErrorCode::ShapeMismatch, "discriminator condition does not match the image");
    DiscriminatorOutput out;
    Var x = ad::concat_channels(image, condition);
    for (std::size_t s = 0; s < critics_.size(); ++s) {
        if (s > 0) {
            x = ad::avg_pool2x(x);
        }
        std::vector<Var> feats;
        Var h = x;
        for (std::size_t i = 0; i + 1 < critics_[s].size(); ++i) {
            h = ad::leaky_relu(critics_[s][i](h));
            feats.push_back(h);
        }
        out.scores.push_back(critics_[s].back()(h));
        out.features.push_back(std::move(feats));
    }
    return out;
}

void Renderer::zero_output_layer() {
    Var w = out_.weight();
    Var b = out_.bias();
    w.mutable_value().fill(0.0);
    b.mutable_value().fill(0.0);
}

namespace {

Var zero_scalar() { return Var::constant(Tensor::scalar(0.0)); }

Var sum_mean_abs(const std::vector<Var>& a, const std::vector<Var>& b) {
    require(a.size() == b.size(), ErrorCode::ShapeMismatch, "feature lists differ in length");
    Var total = zero_scalar();
    for (std::size_t i = 0; i < a.size(); ++i) {
        total = ad::add(total, ad::mean_abs_diff(a[i], b[i]));
    }
    return total;
}

}  // namespace

RendererLosses renderer_losses(const Var& generated, const Tensor& target, const Tensor& mask,
                               const std::vector<Var>& fake_scores, const std::vector<std::vector<Var>>& fake_features,
                               const std::vector<std::vector<Var>>& real_features,
                               const std::vector<Var>& perc_fake, const std::vector<Var>& perc_real,
                               const RendererConfig& cfg) {
    require(generated.value().shape() == target.shape(), ErrorCode::ShapeMismatch,
            "generated " + shape_string(generated.shape()) + " vs target " + shape_string(target.shape()));
    require(mask.shape() == target.shape(), ErrorCode::ShapeMismatch,
            "mouth mask " + shape_string(mask.shape()) + " vs target " + shape_string(target.shape()));
    RendererLosses l;
    l.gan = zero_scalar();
    for (const auto& p : fake_scores) {
        l.gan = ad::add(l.gan, ad::mean_square(ad::add_scalar(p, -1.0)));
    }
    l.color = ad::mean_abs_diff(generated, Var::constant(target));
    Tensor masked_target = target;
    for (std::size_t i = 0; i < masked_target.size(); ++i) {
        masked_target[i] *= mask[i];
    }
    l.mouth = ad::mean_abs_diff(ad::mul(generated, Var::constant(mask)), Var::constant(std::move(masked_target)));
    l.perceptual = sum_mean_abs(perc_fake, perc_real);
    require(fake_features.size() == real_features.size(), ErrorCode::ShapeMismatch,
            "feature-matching scale counts differ");
    l.feature_matching = zero_scalar();
    for (std::size_t s = 0; s < fake_features.size(); ++s) {
        l.feature_matching = ad::add(l.feature_matching, sum_mean_abs(fake_features[s], real_features[s]));
    }
    l.total = ad::add(ad::add(ad::add(ad::scale(l.gan, cfg.gan_weight), ad::scale(l.color, cfg.lambda_c)),
                              ad::add(ad::scale(l.mouth, cfg.lambda_m), ad::scale(l.perceptual, cfg.lambda_p))),
                      ad::scale(l.feature_matching, cfg.lambda_fm));
    return l;
}

Var discriminator_loss(const std::vector<Var>& real_scores, const std::vector<Var>& fake_scores) {
    require(real_scores.size() == fake_scores.size(), ErrorCode::ShapeMismatch, "score lists differ in length");
    Var total = zero_scalar();
    for (std::size_t s = 0; s < real_scores.size(); ++s) {
        total = ad::add(total, ad::add(ad::mean_square(ad::add_scalar(real_scores[s], -1.0)),
                                       ad::mean_square(fake_scores[s])));
    }
    return total;
}

RendererTrainer::RendererTrainer(Renderer& renderer)
    : renderer_(renderer),
      opt_g_(renderer.generator().all(), renderer.config().adam),
      opt_d_(renderer.discriminator().all(), renderer.config().adam) {}

RendererStepRecord RendererTrainer::step(const RendererBatch& batch) {
    const auto& cfg = renderer_.config();
    const Var cond = Var::constant(batch.condition);
    const Var real = Var::constant(batch.target);
    const Var fake = renderer_.generate(cond);
    RendererStepRecord rec;
    const bool adversarial = cfg.gan_weight > 0.0 || cfg.lambda_fm > 0.0;

    DiscriminatorOutput d_real;
    if (adversarial) {
        opt_d_.zero_grad();
        d_real = renderer_.discriminate(real, cond);
        const auto d_fake = renderer_.discriminate(ad::detach(fake), cond);
        const Var ld = discriminator_loss(d_real.scores, d_fake.scores);
        rec.disc = ld.item();
        require(std::isfinite(rec.disc), ErrorCode::NonFiniteLoss,
                "renderer discriminator loss is not finite at step " + std::to_string(opt_d_.steps()));
        ad::backward(ld);
        opt_d_.step();
        // Features of real frames under the updated critic, as fixed targets.
        d_real = renderer_.discriminate(real, cond);
        for (auto& scale : d_real.features) {
            for (auto& f : scale) {
                f = ad::detach(f);
            }
        }
    }

    DiscriminatorOutput d_fake;
    if (adversarial) {
        d_fake = renderer_.discriminate(fake, cond);
    }
    const auto& perc = renderer_.perceptual();
    std::vector<Var> perc_fake, perc_real;
    if (cfg.lambda_p > 0.0) {
        perc_fake = perc.features(fake);
        perc_real = perc.features(real);
    }
    const auto l = renderer_losses(fake, batch.target, batch.mask, d_fake.scores, d_fake.features, d_real.features,
                                   perc_fake, perc_real, cfg);
    rec.gan = l.gan.item();
    rec.color = l.color.item();
    rec.mouth = l.mouth.item();
    rec.perceptual = l.perceptual.item();
    rec.feature_matching = l.feature_matching.item();
    rec.total = l.total.item();
    require(std::isfinite(rec.total), ErrorCode::NonFiniteLoss,
            "renderer generator loss is not finite at step " + std::to_string(opt_g_.steps()) + " (color " +
                std::to_string(rec.color) + ")");
    ad::backward(l.total);
    opt_g_.step();
    opt_d_.zero_grad();
    return rec;
}

Tensor stack(const std::vector<Tensor>& frames) {
    require(!frames.empty(), ErrorCode::DatasetEmpty, "cannot stack zero frames");
    Shape shape{frames.size()};
    shape.insert(shape.end(), frames[0].shape().begin(), frames[0].shape().end());
    Tensor out(shape);
    const std::size_t each = frames[0].size();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        require(frames[i].shape() == frames[0].shape(), ErrorCode::ShapeMismatch, "frames differ in shape");
        std::copy(frames[i].data().begin(), frames[i].data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * each));
    }
    return out;
}

Tensor unstack(const Tensor& batch, std::size_t i) {
    require(batch.rank() >= 2 && i < batch.dim(0), ErrorCode::ShapeMismatch, "unstack index out of range");
    Shape shape(batch.shape().begin() + 1, batch.shape().end());
    const std::size_t each = shape_size(shape);
    return Tensor(shape, std::vector<double>(batch.data().begin() + static_cast<std::ptrdiff_t>(i * each),
                                             batch.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * each)));
}

}  // namespace moda::render

#include "moda/modanet.hpp"

#include "moda/error.hpp"

#include <cmath>
#include <numbers>

namespace moda::modanet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_stream(const Tensor& t, std::size_t width, const char* name) {
    require(t.rank() == 2 && t.dim(1) == width, ErrorCode::ShapeMismatch,
            std::string(name) + " stream must be [T x " + std::to_string(width) + "], got " + shape_string(t.shape()));
    require(t.all_finite(), ErrorCode::NonFiniteLoss, std::string(name) + " stream holds non-finite values");
}

}  // namespace

void ModaConfig::validate() const {
    require(audio_dim > 0 && d > 0 && d_l > 0, ErrorCode::ConfigError, "audio_dim, d and d_l must be positive");
    require(q > 0.0 && std::isfinite(q), ErrorCode::ConfigError, "q must be positive");
    require(ppe_period >= 1, ErrorCode::ConfigError, "ppe_period must be at least 1");
    require(heads >= 1 && d % heads == 0, ErrorCode::ConfigError, "d must be divisible by heads");
    for (double l : lambda) {
        require(l >= 0.0 && std::isfinite(l), ErrorCode::ConfigError, "task-loss weights must be non-negative");
    }
    require(logsigma_min < logsigma_max, ErrorCode::ConfigError, "logsigma clamp range is empty");
}

void MotionOutput::validate() const {
    check_stream(mouth, kMouthWidth, "mouth");
    check_stream(pose, kPoseWidth, "pose");
    check_stream(eyes, kEyeWidth, "eyes");
    check_stream(torso, kTorsoWidth, "torso");
    const std::size_t t = mouth.dim(0);
    require(pose.dim(0) == t && eyes.dim(0) == t && torso.dim(0) == t, ErrorCode::ShapeMismatch,
            "motion streams disagree on frame count");
}

MotionOutput MotionOutput::zeros(std::size_t frames) {
    return {Tensor({frames, kMouthWidth}, 0.0), Tensor({frames, kPoseWidth}, 0.0), Tensor({frames, kEyeWidth}, 0.0),
            Tensor({frames, kTorsoWidth}, 0.0)};
}

MotionOutput MotionVars::values() const { return {mouth.value(), pose.value(), eyes.value(), torso.value()}; }

Tensor alignment_bias(std::size_t frames) {
    Tensor m({frames, frames}, kNegInf);
    for (std::size_t i = 0; i < frames; ++i) {
        m.at(i, i) = 0.0;
    }
    return m;
}

Tensor causal_bias(std::size_t frames, double q) {
    require(q > 0.0, ErrorCode::ConfigError, "causal bias period parameter must be positive");
    Tensor m({frames, frames}, kNegInf);
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            m.at(i, j) = std::floor(static_cast<double>(i - j) * q);
        }
    }
    return m;
}

Tensor ppe_table(std::size_t frames, std::size_t width, std::size_t period) {
    require(period >= 1, ErrorCode::ConfigError, "PPE period must be at least 1");
    Tensor table({frames, width});
    for (std::size_t t = 0; t < frames; ++t) {
        const auto phase = static_cast<double>(t % period);
        for (std::size_t c = 0; c < width; ++c) {
            const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(width));
            table.at(t, c) = c % 2 == 0 ? std::sin(phase * freq) : std::cos(phase * freq);
        }
    }
    return table;
}

Var ppe(const Var& s, std::size_t period) {
    return ad::add(s, Var::constant(ppe_table(s.dim(0), s.dim(1), period)));
}

Tensor position_table(std::size_t frames, std::size_t width) {
    // A period longer than any clip makes the table non-repeating.
    return ppe_table(frames, width, std::numeric_limits<std::size_t>::max());
}

Var combine(const Var& s_a, const Var& v_s) {
    require(s_a.shape().size() == 2, ErrorCode::DimMismatch, "s_a must be [T x d]");
    require(v_s.size() == s_a.dim(1), ErrorCode::DimMismatch,
            "style code width " + std::to_string(v_s.size()) + " vs audio latent width " + std::to_string(s_a.dim(1)));
    return ad::add_row_vector(s_a, ad::reshape(v_s, {v_s.size()}));
}

Tensor reparameterize(const Tensor& mu, const Tensor& logsigma, nn::Rng& rng) {
    require(same_shape(mu, logsigma), ErrorCode::ShapeMismatch, "VAE moments differ in shape");
    Tensor x(mu.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eps = rng.normal();
        x[i] = mu[i] + std::exp(0.5 * logsigma[i]) * eps;
    }
    return x;
}

ModaNet::ModaNet(const ModaConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    nn::Rng rng(seed);
    const std::size_t d = cfg_.d;
    audio_enc_ = nn::Mlp(store_, "audio_enc", {cfg_.audio_dim, d, d}, rng);
    subject_enc_ = nn::Mlp(store_, "subject_enc", {motion::kFacePoints * 3, d, d}, rng);
    gamma_attn_ = nn::Attention(store_, "gamma", d, cfg_.heads, rng, true);
    spec_attn_ = nn::Attention(store_, "spec", d, cfg_.heads, rng, false);
    for (std::size_t i = 0; i < cfg_.n_enc_layers; ++i) {
        vae_enc_.emplace_back(store_, "vae_enc" + std::to_string(i), d, cfg_.heads, 2 * d, rng);
    }
    mu_head_ = nn::Linear(store_, "vae_mu", d, cfg_.d_l, rng);
    sigma_head_ = nn::Linear(store_, "vae_logsigma", d, cfg_.d_l, rng);
    latent_in_ = nn::Linear(store_, "vae_latent", cfg_.d_l, d, rng);
    for (std::size_t i = 0; i < cfg_.n_dec_layers; ++i) {
        vae_dec_.emplace_back(store_, "vae_dec" + std::to_string(i), d, cfg_.heads, 2 * d, rng);
    }
    mouth_tail_ = nn::Mlp(store_, "tail_mouth", {2 * d, d, kMouthWidth}, rng);
    pose_tail_ = nn::Mlp(store_, "tail_pose", {2 * d, d, kPoseWidth}, rng);
    eye_tail_ = nn::Mlp(store_, "tail_eyes", {2 * d, d, kEyeWidth}, rng);
    torso_tail_ = nn::Mlp(store_, "tail_torso", {2 * d, d, kTorsoWidth}, rng);
}

Var ModaNet::encode_audio(const Var& features) const {
    require(features.shape().size() == 2 && features.dim(1) == cfg_.audio_dim, ErrorCode::DimMismatch,
            "audio features must be [T x " + std::to_string(cfg_.audio_dim) + "], got " +
                shape_string(features.shape()));
    return audio_enc_(features);
}

Var ModaNet::encode_subject(const motion::FacePoints& vertices) const {
    Tensor flat({1, motion::FacePoints::kFlatSize});
    std::copy(vertices.flat().begin(), vertices.flat().end(), flat.data().begin());
    return encode_subject(Var::constant(std::move(flat)));
}

Var ModaNet::encode_subject(const Var& flat_vertices) const {
    require(flat_vertices.size() == motion::FacePoints::kFlatSize, ErrorCode::ShapeMismatch,
            "subject vertices must be 478 x 3");
    return subject_enc_(ad::reshape(flat_vertices, {1, motion::FacePoints::kFlatSize}));
}

Var ModaNet::gamma(const Var& s, Tensor* weights_out) const {
    const Var h = ppe(s, cfg_.ppe_period);
    Tensor bias = causal_bias(s.dim(0), cfg_.q);
    if (cfg_.causal_sign != 1.0) {
        for (auto& v : bias.data()) {
            v = std::isfinite(v) ? cfg_.causal_sign * v : v;
        }
    }
    return ad::add(h, gamma_attn_(h, h, h, bias, weights_out));
}

Var ModaNet::specific_attention(const Var& s_a, const Var& s, Tensor* weights_out) const {
    return specific_attention(s_a, s, alignment_bias(s.dim(0)), weights_out);
}

Var ModaNet::specific_attention(const Var& s_a, const Var& s, const Tensor& bias, Tensor* weights_out) const {
    require(s_a.shape() == s.shape(), ErrorCode::DimMismatch,
            "s_a " + shape_string(s_a.shape()) + " vs s " + shape_string(s.shape()));
    const Var query = gamma(s);
    const Var value = cfg_.value_source == ValueSource::Audio ? s_a : query;
    return spec_attn_(query, s_a, value, bias, weights_out);
}

ProbabilisticResult ModaNet::probabilistic_attention(const Var& s, Mode mode, std::uint64_t seed) const {
    const std::size_t frames = s.dim(0);
    Var h = s;
    for (const auto& layer : vae_enc_) {
        h = layer(h, Tensor());
    }
    const Var pooled = ad::mean_rows(h);
    ProbabilisticResult r;
    r.moments.mu = mu_head_(pooled);
    r.moments.logsigma = ad::clamp(sigma_head_(pooled), cfg_.logsigma_min, cfg_.logsigma_max);

    nn::Rng rng(seed);
    Var x;
    switch (mode) {
        case Mode::Train: {
            Tensor eps({1, cfg_.d_l});
            for (auto& e : eps.data()) {
                e = rng.normal();
            }
            // mu + exp(logsigma / 2) * eps keeps the graph through both moments.
            const Var stddev = ad::exp(ad::scale(r.moments.logsigma, 0.5));
            x = ad::add(r.moments.mu, ad::mul(stddev, Var::constant(std::move(eps))));
            break;
        }
        case Mode::Sample: x = Var::constant(rng.normal_tensor({1, cfg_.d_l})); break;
        case Mode::Mean: x = r.moments.mu; break;
    }
    r.x = x.value();

    Var dec = ad::add(ad::broadcast_rows(latent_in_(x), frames), Var::constant(position_table(frames, cfg_.d)));
    for (const auto& layer : vae_dec_) {
        dec = layer(dec, Tensor());
    }
    r.s_pa = dec;
    return r;
}

ForwardResult ModaNet::dual_attention(const Var& s, const Var& s_a, Mode mode, std::uint64_t seed) const {
    require(s.shape() == s_a.shape(), ErrorCode::DimMismatch, "dual attention inputs are not aligned");
    ForwardResult r;
    r.s_a = s_a;
    r.s = s;
    r.s_sa = specific_attention(s_a, s);
    auto prob = probabilistic_attention(s, mode, seed);
    r.s_pa = prob.s_pa;
    r.moments = prob.moments;
    r.s_t = ad::concat_cols(r.s_sa, r.s_pa);
    return r;
}

MotionVars ModaNet::decode(const Var& s_t) const {
    require(s_t.shape().size() == 2 && s_t.dim(1) == 2 * cfg_.d, ErrorCode::DimMismatch,
            "s_t must be [T x 2d], got " + shape_string(s_t.shape()));
    return {mouth_tail_(s_t), pose_tail_(s_t), eye_tail_(s_t), torso_tail_(s_t)};
}

ForwardResult ModaNet::forward(const Tensor& audio, const motion::FacePoints& subject, Mode mode,
                               std::uint64_t seed) const {
    require(audio.rank() == 2 && audio.dim(0) >= 1, ErrorCode::EmptyAudio, "forward needs at least one audio frame");
    const Var s_a = encode_audio(Var::constant(audio));
    const Var v_s = encode_subject(subject);
    ForwardResult r = dual_attention(combine(s_a, v_s), s_a, mode, seed);
    r.v_s = v_s;
    r.motion = decode(r.s_t);
    return r;
}

Var loss_tp(const MotionVars& pred, const MotionOutput& gt, const std::array<double, 4>& lambda) {
    const Var* p[4] = {&pred.mouth, &pred.pose, &pred.eyes, &pred.torso};
    const Tensor* g[4] = {&gt.mouth, &gt.pose, &gt.eyes, &gt.torso};
    Var total;
    for (std::size_t i = 0; i < 4; ++i) {
        require(p[i]->value().shape() == g[i]->shape(), ErrorCode::ShapeMismatch,
                "loss_tp stream " + std::to_string(i) + ": " + shape_string(p[i]->shape()) + " vs " +
                    shape_string(g[i]->shape()));
        const Var term = ad::scale(ad::mean_abs_diff(*p[i], Var::constant(*g[i])), lambda[i]);
        total = total.defined() ? ad::add(total, term) : term;
    }
    return total;
}

Var loss_kld(const VaeMoments& m) {
    require(m.mu.shape() == m.logsigma.shape(), ErrorCode::ShapeMismatch, "VAE moments differ in shape");
    const auto d_l = static_cast<double>(m.mu.size());
    // logsigma - mu^2 - sigma + 1, summed, times -1 / (2 d_l)
    const Var inner = ad::add_scalar(ad::sub(ad::sub(m.logsigma, ad::square(m.mu)), ad::exp(m.logsigma)), 1.0);
    return ad::scale(ad::sum(inner), -1.0 / (2.0 * d_l));
}

Var loss_total(const MotionVars& pred, const MotionOutput& gt, const VaeMoments& m,
               const std::array<double, 4>& lambda) {
    return ad::add(loss_tp(pred, gt, lambda), loss_kld(m));
}

std::vector<motion::MotionRepresentation> apply_to_template(const MotionOutput& out,
                                                            const motion::SubjectTemplate& subject) {
    out.validate();
    std::vector<motion::MotionRepresentation> frames(out.frames());
    auto row = [](const Tensor& t, std::size_t r) {
        return std::span<const double>(t.data()).subspan(r * t.dim(1), t.dim(1));
    };
    for (std::size_t t = 0; t < frames.size(); ++t) {
        auto& f = frames[t];
        f.mouth = motion::MouthPoints(motion::apply_displacement(row(out.mouth, t), subject.mouth.flat()));
        f.eyes = motion::EyePoints(motion::apply_displacement(row(out.eyes, t), subject.eyes.flat()));
        f.torso = motion::TorsoPoints(motion::apply_displacement(row(out.torso, t), subject.torso.flat()));
        f.pose = motion::apply_displacement(motion::HeadPose::from_flat(row(out.pose, t)), subject.pose);
        f.face = subject.face;
    }
    return frames;
}

MotionOutput displacements_from(const std::vector<motion::MotionRepresentation>& frames,
                                const motion::SubjectTemplate& subject) {
    MotionOutput out = MotionOutput::zeros(frames.size());
    auto put = [](Tensor& dst, std::size_t r, const std::vector<double>& v) {
        std::copy(v.begin(), v.end(), dst.data().begin() + static_cast<std::ptrdiff_t>(r * dst.dim(1)));
    };
    for (std::size_t t = 0; t < frames.size(); ++t) {
        put(out.mouth, t, motion::displacement(frames[t].mouth.flat(), subject.mouth.flat()));
        put(out.eyes, t, motion::displacement(frames[t].eyes.flat(), subject.eyes.flat()));
        put(out.torso, t, motion::displacement(frames[t].torso.flat(), subject.torso.flat()));
        const auto dp = motion::displacement(frames[t].pose, subject.pose).flat();
        put(out.pose, t, std::vector<double>(dp.begin(), dp.end()));
    }
    return out;
}

namespace {

StepLosses losses_of(const Var& tp, const Var& kld) { return {tp.item(), kld.item(), tp.item() + kld.item()}; }

}  // namespace

StepLosses train_step(const ModaNet& net, nn::Adam& opt, const Tensor& audio, const motion::SubjectTemplate& subject,
                      const MotionOutput& gt, std::uint64_t seed) {
    const ForwardResult fwd = net.forward(audio, subject.face, Mode::Train, seed);
    const Var tp = loss_tp(fwd.motion, gt, net.config().lambda);
    const Var kld = loss_kld(fwd.moments);
    const Var total = ad::add(tp, kld);
    require(std::isfinite(total.item()), ErrorCode::NonFiniteLoss,
            "MODA loss is not finite (tp " + std::to_string(tp.item()) + ", kld " + std::to_string(kld.item()) + ")");
    ad::backward(total);
    opt.step();
    return losses_of(tp, kld);
}

StepLosses evaluate_losses(const ModaNet& net, const Tensor& audio, const motion::SubjectTemplate& subject,
                           const MotionOutput& gt, std::uint64_t seed) {
    const ForwardResult fwd = net.forward(audio, subject.face, Mode::Train, seed);
    return losses_of(loss_tp(fwd.motion, gt, net.config().lambda), loss_kld(fwd.moments));
}

}  // namespace moda::modanet

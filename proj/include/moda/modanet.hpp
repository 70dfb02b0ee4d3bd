#pragma once

#include "moda/motion.hpp"
#include "moda/nn.hpp"

#include <array>
#include <cstdint>
#include <limits>

namespace moda::modanet {

using ad::Var;

enum class ValueSource { Audio, Motion };

// Train: x = mu + sigma * eps. Sample: x from the standard-normal prior.
// Mean: x = mu (the probabilistic branch collapsed to its mean).
enum class Mode { Train, Sample, Mean };

struct ModaConfig {
    std::size_t audio_dim = 80;
    std::size_t d = 256;
    std::size_t d_l = 64;
    double q = 1.0;
    // Causal-bias sign: +1 reproduces the printed floor((i-j)q); -1 penalises
    // distant frames instead.
    double causal_sign = 1.0;
    std::size_t ppe_period = 25;
    std::size_t heads = 1;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::array<double, 4> lambda{1.0, 1.0, 1.0, 1.0};  // mouth, pose, eyes, torso
    ValueSource value_source = ValueSource::Audio;
    double logsigma_min = -10.0;
    double logsigma_max = 10.0;

    void validate() const;
};

inline constexpr std::size_t kMouthWidth = motion::kMouthPoints * 3;
inline constexpr std::size_t kPoseWidth = motion::kPoseScalars;
inline constexpr std::size_t kEyeWidth = motion::kEyePoints * 3;
inline constexpr std::size_t kTorsoWidth = motion::kTorsoPoints * 3;

// Displacements per stream, one row per frame: [T x 120], [T x 6], [T x 180], [T x 54].
struct MotionOutput {
    Tensor mouth;
    Tensor pose;
    Tensor eyes;
    Tensor torso;

    std::size_t frames() const { return mouth.empty() ? 0 : mouth.dim(0); }
    void validate() const;
    static MotionOutput zeros(std::size_t frames);
};

struct MotionVars {
    Var mouth;
    Var pose;
    Var eyes;
    Var torso;

    MotionOutput values() const;
};

struct VaeMoments {
    Var mu;        // [1 x d_l]
    Var logsigma;  // [1 x d_l], log-variance
};

// --- masks and encodings -------------------------------------------------------
// 0 on the diagonal, -inf elsewhere.
Tensor alignment_bias(std::size_t frames);
// floor((i - j) q) for j <= i, -inf above the diagonal.
Tensor causal_bias(std::size_t frames, double q);
// [frames x width] sinusoidal table indexed by t mod period.
Tensor ppe_table(std::size_t frames, std::size_t width, std::size_t period);
Var ppe(const Var& s, std::size_t period);
// Non-periodic sinusoidal table used by the VAE decoder.
Tensor position_table(std::size_t frames, std::size_t width);

// s[t] = s_a[t] + v_s
Var combine(const Var& s_a, const Var& v_s);

// x = mu + exp(logsigma / 2) * eps, eps drawn from rng. logsigma = -inf gives x = mu.
Tensor reparameterize(const Tensor& mu, const Tensor& logsigma, nn::Rng& rng);

struct ProbabilisticResult {
    Var s_pa;
    VaeMoments moments;
    Tensor x;
};

struct ForwardResult {
    Var s_a;
    Var v_s;
    Var s;
    Var s_sa;
    Var s_pa;
    Var s_t;
    VaeMoments moments;
    MotionVars motion;
};

class ModaNet {
public:
    ModaNet(const ModaConfig& cfg, std::uint64_t seed);

    const ModaConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }

    // [T x audio_dim] -> [T x d]
    Var encode_audio(const Var& features) const;
    // 478 x 3 vertices -> [1 x d]
    Var encode_subject(const motion::FacePoints& vertices) const;
    Var encode_subject(const Var& flat_vertices) const;

    // Biased causal self-attention; weights_out receives the attention matrix.
    Var gamma(const Var& s, Tensor* weights_out = nullptr) const;
    Var specific_attention(const Var& s_a, const Var& s, Tensor* weights_out = nullptr) const;
    // Same with an explicit score bias in place of the alignment bias.
    Var specific_attention(const Var& s_a, const Var& s, const Tensor& bias, Tensor* weights_out) const;
    ProbabilisticResult probabilistic_attention(const Var& s, Mode mode, std::uint64_t seed) const;
    // s_t = s_sa ++ s_pa per time step, [T x 2d].
    ForwardResult dual_attention(const Var& s, const Var& s_a, Mode mode, std::uint64_t seed) const;
    MotionVars decode(const Var& s_t) const;

    ForwardResult forward(const Tensor& audio, const motion::FacePoints& subject, Mode mode,
                          std::uint64_t seed) const;

private:
    ModaConfig cfg_;
    nn::ParamStore store_;
    nn::Mlp audio_enc_;
    nn::Mlp subject_enc_;
    nn::Attention gamma_attn_;
    nn::Attention spec_attn_;
    std::vector<nn::TransformerLayer> vae_enc_;
    nn::Linear mu_head_;
    nn::Linear sigma_head_;
    nn::Linear latent_in_;
    std::vector<nn::TransformerLayer> vae_dec_;
    nn::Mlp mouth_tail_;
    nn::Mlp pose_tail_;
    nn::Mlp eye_tail_;
    nn::Mlp torso_tail_;
};

// --- losses ---------------------------------------------------------------------
Var loss_tp(const MotionVars& pred, const MotionOutput& gt, const std::array<double, 4>& lambda);
Var loss_kld(const VaeMoments& m);
Var loss_total(const MotionVars& pred, const MotionOutput& gt, const VaeMoments& m,
               const std::array<double, 4>& lambda);

// Absolute motion from displacements and the subject's references.
std::vector<motion::MotionRepresentation> apply_to_template(const MotionOutput& out,
                                                            const motion::SubjectTemplate& subject);
// Displacements of an absolute motion sequence from the subject's references.
MotionOutput displacements_from(const std::vector<motion::MotionRepresentation>& frames,
                                const motion::SubjectTemplate& subject);

struct StepLosses {
    double tp = 0.0;
    double kld = 0.0;
    double total = 0.0;
};

// One optimiser step on a single clip in Train mode.
StepLosses train_step(const ModaNet& net, nn::Adam& opt, const Tensor& audio, const motion::SubjectTemplate& subject,
                      const MotionOutput& gt, std::uint64_t seed);
// Loss evaluation without a parameter update.
StepLosses evaluate_losses(const ModaNet& net, const Tensor& audio, const motion::SubjectTemplate& subject,
                           const MotionOutput& gt, std::uint64_t seed);

}  // namespace moda::modanet

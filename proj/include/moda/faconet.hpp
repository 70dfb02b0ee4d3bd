#pragma once

#include "moda/motion.hpp"
#include "moda/nn.hpp"

#include <cstdint>
#include <vector>

namespace moda::faco {

using ad::Var;

inline constexpr std::size_t kFaceWidth = motion::FacePoints::kFlatSize;
inline constexpr std::size_t kMouthWidth = motion::MouthPoints::kFlatSize;
inline constexpr std::size_t kEyeWidth = motion::EyePoints::kFlatSize;

struct FacoConfig {
    std::size_t d = 256;
    std::size_t disc_hidden = 256;
    double lambda = 10.0;      // L1 weight in the generator objective
    double gan_weight = 1.0;   // 0 turns training into plain L1 regression
    nn::AdamConfig adam{};

    void validate() const;
};

// One training example: subject vertices, driving mouth/eye points, target face.
struct FacoSample {
    motion::FacePoints subject;
    motion::MouthPoints mouth;
    motion::EyePoints eyes;
    motion::FacePoints target;
};

// Rows of a batch, each flattened: [B x 1434], [B x 120], [B x 180].
struct FacoBatch {
    Tensor subject;
    Tensor mouth;
    Tensor eyes;
    Tensor target;

    std::size_t size() const { return subject.empty() ? 0 : subject.dim(0); }
    static FacoBatch from_samples(const std::vector<FacoSample>& samples);
};

class FacoNet {
public:
    FacoNet(const FacoConfig& cfg, std::uint64_t seed);

    const FacoConfig& config() const { return cfg_; }
    nn::ParamStore& generator() { return gen_; }
    const nn::ParamStore& generator() const { return gen_; }
    nn::ParamStore& discriminator() { return disc_; }
    const nn::ParamStore& discriminator() const { return disc_; }

    // P^F = S + Psi_c((p_m ++ p_e) + (p_f ++ p_f)), rows are independent samples.
    Var compose(const Var& subject, const Var& mouth, const Var& eyes) const;
    motion::FacePoints compose(const motion::FacePoints& subject, const motion::MouthPoints& mouth,
                               const motion::EyePoints& eyes) const;
    // [B x 1434] -> [B x 1]
    Var discriminate(const Var& face) const;

private:
    FacoConfig cfg_;
    nn::ParamStore gen_;
    nn::ParamStore disc_;
    nn::Mlp mouth_enc_;
    nn::Mlp eye_enc_;
    nn::Mlp face_enc_;
    nn::Mlp composer_;
    nn::Mlp critic_;
};

// mean((z - 1)^2) + mean(zhat^2)
Var loss_disc(const Var& z, const Var& z_hat);
// mean((zhat - 1)^2) * gan_weight + lambda * mean|gt - pred|
Var loss_gen(const Var& z_hat, const Var& pred, const Tensor& target, double lambda, double gan_weight = 1.0);

struct FacoStepRecord {
    double disc = 0.0;
    double gen = 0.0;
    double l1 = 0.0;
};

class FacoTrainer {
public:
    explicit FacoTrainer(FacoNet& net);
    // One discriminator update followed by one generator update.
    FacoStepRecord step(const FacoBatch& batch);
    nn::Adam& generator_optimizer() { return opt_g_; }
    nn::Adam& discriminator_optimizer() { return opt_d_; }

private:
    FacoNet& net_;
    nn::Adam opt_g_;
    nn::Adam opt_d_;
};

// Mean Euclidean distance between composed and target points.
double mean_point_error(const FacoNet& net, const FacoBatch& batch);

}  // namespace moda::faco

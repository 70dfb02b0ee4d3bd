#pragma once

#include "moda/nn.hpp"
#include "moda/raster.hpp"
#include "moda/topology.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace moda::render {

using ad::Var;

inline constexpr std::size_t kTpeSize = 12;
inline constexpr std::size_t kConditionChannels = 1 + 3 + kTpeSize;

// (sin(t 2^i / 100), cos(t 2^i / 100)) for i = 0..5.
std::array<double, kTpeSize> tpe(std::uint64_t t);

struct RendererConfig {
    std::size_t resolution = 256;
    std::vector<std::size_t> channels{64, 128, 256, 512, 512, 512, 512, 512};
    double lambda_c = 50.0;
    double lambda_m = 100.0;
    double lambda_p = 10.0;
    double lambda_fm = 1.0;
    double gan_weight = 1.0;
    std::size_t disc_scales = 2;
    std::size_t disc_channels = 64;
    std::vector<std::size_t> perceptual_channels{16, 32, 32};
    double mouth_dilation = 8.0;
    double stroke_half_width = 0.5;
    nn::AdamConfig adam{};

    void validate() const;
    // Encoder levels: resolution, resolution / 2, ..., 2.
    std::size_t levels() const;
};

// Rasterized landmark drawing [H x W] in [-1, 1]: background -1, strokes up to +1.
Tensor draw_condition(std::size_t width, std::size_t height, std::span<const motion::Vec2> face_2d,
                      std::span<const motion::Vec2> torso_2d, const motion::FaceTopology& topo,
                      double half_width = 0.5);

// [16 x H x W]: raster, reference image (3 x H x W, in [-1, 1]), 12 TPE planes.
Tensor assemble_condition(std::span<const motion::Vec2> face_2d, std::span<const motion::Vec2> torso_2d,
                          const Tensor& reference, std::uint64_t t, const motion::FaceTopology& topo,
                          double half_width = 0.5);

// Outer-mouth polygon filled and dilated by `dilation` pixels, as 0/1 [H x W].
Tensor mouth_mask(std::span<const motion::Vec2> outer_mouth_2d, std::size_t width, std::size_t height,
                  double dilation);

// Peak signal-to-noise ratio for images in [-1, 1] (peak-to-peak 2).
double psnr(const Tensor& a, const Tensor& b);

class PerceptualExtractor {
public:
    virtual ~PerceptualExtractor() = default;
    virtual std::vector<Var> features(const Var& image) const = 0;
};

// Fixed, randomly initialised conv stack; its weights are constants.
class RandomConvFeatures final : public PerceptualExtractor {
public:
    RandomConvFeatures(const std::vector<std::size_t>& channels, std::uint64_t seed);
    std::vector<Var> features(const Var& image) const override;

private:
    std::vector<Var> weights_;
    std::vector<Var> biases_;
};

struct DiscriminatorOutput {
    std::vector<Var> scores;                 // one patch map per scale
    std::vector<std::vector<Var>> features;  // intermediate activations per scale
};

class Renderer {
public:
    Renderer(const RendererConfig& cfg, std::uint64_t seed);

    const RendererConfig& config() const { return cfg_; }
    nn::ParamStore& generator() { return gen_; }
    const nn::ParamStore& generator() const { return gen_; }
    nn::ParamStore& discriminator() { return disc_; }
    const nn::ParamStore& discriminator() const { return disc_; }
    const PerceptualExtractor& perceptual() const { return *perceptual_; }
    void set_perceptual(std::shared_ptr<const PerceptualExtractor> extractor) { perceptual_ = std::move(extractor); }

    // [N x 16 x R x R] -> [N x 3 x R x R] in [-1, 1]
    Var generate(const Var& condition) const;
    // Conditional multiscale PatchGAN on (image ++ condition).
    DiscriminatorOutput discriminate(const Var& image, const Var& condition) const;

    // Zeroes the output projection so the generator emits a constant image.
    void zero_output_layer();

private:
    struct ResBlock {
        nn::Conv2d a;
        nn::Conv2d b;
        Var operator()(const Var& x) const;
    };
    struct Level {
        nn::Conv2d down;
        ResBlock res;
    };
    struct UpLevel {
        nn::Conv2d fuse;
        ResBlock res;
    };

    RendererConfig cfg_;
    nn::ParamStore gen_;
    nn::ParamStore disc_;
    std::vector<Level> enc_;
    std::vector<UpLevel> dec_;
    nn::Conv2d out_;
    std::vector<std::vector<nn::Conv2d>> critics_;
    std::shared_ptr<const PerceptualExtractor> perceptual_;
};

struct RendererLosses {
    Var gan;
    Var color;
    Var mouth;
    Var perceptual;
    Var feature_matching;
    Var total;
};

// Generator objective. fake_scores are the discriminator outputs on I_t;
// feature lists may be empty, which zeroes the corresponding term.
RendererLosses renderer_losses(const Var& generated, const Tensor& target, const Tensor& mask,
                               const std::vector<Var>& fake_scores, const std::vector<std::vector<Var>>& fake_features,
                               const std::vector<std::vector<Var>>& real_features,
                               const std::vector<Var>& perc_fake, const std::vector<Var>& perc_real,
                               const RendererConfig& cfg);

// Sum over scales of mean((p* - 1)^2) + mean(p^2).
Var discriminator_loss(const std::vector<Var>& real_scores, const std::vector<Var>& fake_scores);

struct RendererBatch {
    Tensor condition;  // [N x 16 x R x R]
    Tensor target;     // [N x 3 x R x R]
    Tensor mask;       // [N x 3 x R x R], 0/1
};

struct RendererStepRecord {
    double disc = 0.0;
    double gan = 0.0;
    double color = 0.0;
    double mouth = 0.0;
    double perceptual = 0.0;
    double feature_matching = 0.0;
    double total = 0.0;
};

class RendererTrainer {
public:
    explicit RendererTrainer(Renderer& renderer);
    RendererStepRecord step(const RendererBatch& batch);
    nn::Adam& generator_optimizer() { return opt_g_; }
    nn::Adam& discriminator_optimizer() { return opt_d_; }

private:
    Renderer& renderer_;
    nn::Adam opt_g_;
    nn::Adam opt_d_;
};

// Stacks per-frame [C x H x W] tensors into [N x C x H x W].
Tensor stack(const std::vector<Tensor>& frames);
// Selects frame i of a batch as [C x H x W].
Tensor unstack(const Tensor& batch, std::size_t i);

}  // namespace moda::render

#pragma once

#include "moda/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace moda::nn {

using ad::Var;

// Named trainable parameters of one network. Layers register their tensors
// here under dotted names ("audio_enc.l0.w"); checkpoints serialize the store.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::vector<std::string> names() const;
    std::vector<Var> all() const;
    std::size_t total_size() const;

    // Copies values from other; names and shapes must match exactly.
    void assign(const ParamStore& other);

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    std::map<std::string, Var> params_;
};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    std::uint64_t next() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

    Tensor normal_tensor(Shape shape, double stddev = 1.0);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

enum class Activation { None, LeakyRelu, Gelu, Tanh };

Var activate(const Var& x, Activation act);

class Linear {
public:
    Linear() = default;
    Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
           bool with_bias = true);

    // x: [rows x in] -> [rows x out]
    Var operator()(const Var& x) const;

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    const Var& weight() const { return weight_; }
    const Var& bias() const { return bias_; }

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    Var weight_;
    Var bias_;
};

// Stack of Linear layers with the activation between them (none after the last).
class Mlp {
public:
    Mlp() = default;
    Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng,
        Activation act = Activation::LeakyRelu);

    Var operator()(const Var& x) const;
    const Linear& last() const { return layers_.back(); }

private:
    std::vector<Linear> layers_;
    Activation act_ = Activation::LeakyRelu;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, std::size_t width);
    Var operator()(const Var& x) const;

private:
    Var gamma_;
    Var beta_;
};

// Single- or multi-head scaled dot-product attention with learned query/key
// projections. The value operand is passed in unprojected; callers that want a
// value projection apply it themselves.
class Attention {
public:
    Attention() = default;
    Attention(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads, Rng& rng,
              bool project_value);

    // query_src: [Tq x d], key_src: [Tk x d], value: [Tk x d], bias: [Tq x Tk] or empty.
    // weights_out, when given, receives the (head-averaged) attention weights.
    Var operator()(const Var& query_src, const Var& key_src, const Var& value, const Tensor& bias,
                   Tensor* weights_out = nullptr) const;

    std::size_t width() const { return width_; }

private:
    std::size_t width_ = 0;
    std::size_t heads_ = 1;
    bool project_value_ = false;
    Linear query_;
    Linear key_;
    Linear value_;
    Linear out_;
};

// Post-norm transformer encoder layer: x + SelfAttn(x) -> LN -> + FFN -> LN.
class TransformerLayer {
public:
    TransformerLayer() = default;
    TransformerLayer(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads,
                     std::size_t ffn_width, Rng& rng);
    Var operator()(const Var& x, const Tensor& bias) const;

private:
    Attention attn_;
    LayerNorm norm1_;
    LayerNorm norm2_;
    Mlp ffn_;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
           std::size_t stride, Rng& rng);
    Var operator()(const Var& x) const;
    const Var& weight() const { return weight_; }
    const Var& bias() const { return bias_; }

private:
    Var weight_;
    Var bias_;
    std::size_t stride_ = 1;
    std::size_t pad_ = 1;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

class Adam {
public:
    Adam() = default;
    Adam(std::vector<Var> params, AdamConfig cfg);

    // Applies one update from the accumulated gradients, then clears them.
    void step();
    void zero_grad();
    std::int64_t steps() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamConfig cfg_;
    std::int64_t step_ = 0;
};

// Binary archive of named tensors: magic, count, then per entry
// (name length, name, rank, dims, float64 payload), little endian.
void write_tensor_archive(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> read_tensor_archive(const std::filesystem::path& path);

}  // namespace moda::nn

#include "moda/nn.hpp"

#include "moda/error.hpp"
#include "moda/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace moda::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
    require(!contains(name), ErrorCode::ConfigError, "duplicate parameter " + name);
    Var v = Var::parameter(std::move(init));
    params_.emplace(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), ErrorCode::ConfigError, "unknown parameter " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) {
        out.push_back(name);
    }
    return out;
}

std::vector<Var> ParamStore::all() const {
    std::vector<Var> out;
    out.reserve(params_.size());
    for (const auto& [_, v] : params_) {
        out.push_back(v);
    }
    return out;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) {
        n += v.size();
    }
    return n;
}

void ParamStore::assign(const ParamStore& other) {
    require(other.params_.size() == params_.size(), ErrorCode::ShapeMismatch, "parameter sets differ in size");
    for (auto& [name, v] : params_) {
        const Var src = other.get(name);
        require(src.shape() == v.shape(), ErrorCode::ShapeMismatch, "parameter " + name + " shape differs");
        v.mutable_value() = src.value();
    }
}

void ParamStore::save(const std::filesystem::path& path) const {
    std::map<std::string, Tensor> tensors;
    for (const auto& [name, v] : params_) {
        tensors.emplace(name, v.value());
    }
    write_tensor_archive(path, tensors);
}

void ParamStore::load(const std::filesystem::path& path) {
    auto tensors = read_tensor_archive(path);
    require(tensors.size() == params_.size(), ErrorCode::FormatError,
            path.string() + ": archive holds " + std::to_string(tensors.size()) + " tensors, network has " +
                std::to_string(params_.size()));
    for (auto& [name, v] : params_) {
        auto it = tensors.find(name);
        require(it != tensors.end(), ErrorCode::FormatError, path.string() + ": missing tensor " + name);
        require(it->second.shape() == v.shape(), ErrorCode::FormatError,
                path.string() + ": tensor " + name + " has shape " + shape_string(it->second.shape()));
        v.mutable_value() = std::move(it->second);
    }
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) {
        x = stddev * normal();
    }
    return t;
}

Var activate(const Var& x, Activation act) {
    switch (act) {
        case Activation::None: return x;
        case Activation::LeakyRelu: return ad::leaky_relu(x, 0.2);
        case Activation::Gelu: return ad::gelu(x);
        case Activation::Tanh: return ad::tanh(x);
    }
    return x;
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias)
    : in_(in), out_(out) {
    // Glorot-uniform weights stored [in x out] so the forward pass is x * W.
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({in, out});
    for (auto& v : w.data()) {
        v = rng.uniform(-limit, limit);
    }
    weight_ = store.add(name + ".w", std::move(w));
    if (with_bias) {
        bias_ = store.add(name + ".b", Tensor({out}, 0.0));
    }
}

Var Linear::operator()(const Var& x) const {
    Var y = ad::matmul(x, weight_);
    return bias_.defined() ? ad::add_row_vector(y, bias_) : y;
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng,
         Activation act)
    : act_(act) {
    require(widths.size() >= 2, ErrorCode::ConfigError, "MLP " + name + " needs at least two widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers_.emplace_back(store, name + ".l" + std::to_string(i), widths[i], widths[i + 1], rng);
    }
}

Var Mlp::operator()(const Var& x) const {
    Var h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](h);
        if (i + 1 < layers_.size()) {
            h = activate(h, act_);
        }
    }
    return h;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t width)
    : gamma_(store.add(name + ".gamma", Tensor({width}, 1.0))), beta_(store.add(name + ".beta", Tensor({width}, 0.0))) {}

Var LayerNorm::operator()(const Var& x) const { return ad::layer_norm_rows(x, gamma_, beta_); }

Attention::Attention(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads, Rng& rng,
                     bool project_value)
    : width_(width), heads_(heads), project_value_(project_value) {
    require(heads >= 1 && width % heads == 0, ErrorCode::ConfigError,
            "attention width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
    query_ = Linear(store, name + ".q", width, width, rng);
    key_ = Linear(store, name + ".k", width, width, rng);
    if (project_value) {
        value_ = Linear(store, name + ".v", width, width, rng);
        out_ = Linear(store, name + ".o", width, width, rng);
    }
}

Var Attention::operator()(const Var& query_src, const Var& key_src, const Var& value, const Tensor& bias,
                          Tensor* weights_out) const {
    require(query_src.dim(1) == width_ && key_src.dim(1) == width_ && value.dim(1) == width_,
            ErrorCode::DimMismatch, "attention operand width differs from " + std::to_string(width_));
    require(key_src.dim(0) == value.dim(0), ErrorCode::DimMismatch, "attention key/value lengths differ");
    const Var q = query_(query_src);
    const Var k = key_(key_src);
    const Var v = project_value_ ? value_(value) : value;
    const std::size_t head_width = width_ / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_width));
    Var out;
    if (weights_out) {
        *weights_out = Tensor({query_src.dim(0), key_src.dim(0)}, 0.0);
    }
    for (std::size_t h = 0; h < heads_; ++h) {
        const Var qh = heads_ == 1 ? q : ad::slice_cols(q, h * head_width, head_width);
        const Var kh = heads_ == 1 ? k : ad::slice_cols(k, h * head_width, head_width);
        const Var vh = heads_ == 1 ? v : ad::slice_cols(v, h * head_width, head_width);
        const Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), bias);
        if (weights_out) {
            for (std::size_t i = 0; i < weights.size(); ++i) {
                (*weights_out)[i] += weights.value()[i] / static_cast<double>(heads_);
            }
        }
        const Var head = ad::matmul(weights, vh);
        out = out.defined() ? ad::concat_cols(out, head) : head;
    }
    return project_value_ ? out_(out) : out;
}

TransformerLayer::TransformerLayer(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads,
                                   std::size_t ffn_width, Rng& rng)
    : attn_(store, name + ".attn", width, heads, rng, true),
      norm1_(store, name + ".ln1", width),
      norm2_(store, name + ".ln2", width),
      ffn_(store, name + ".ffn", {width, ffn_width, width}, rng, Activation::Gelu) {}

Var TransformerLayer::operator()(const Var& x, const Tensor& bias) const {
    const Var h = norm1_(ad::add(x, attn_(x, x, x, bias)));
    return norm2_(ad::add(h, ffn_(h)));
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
               std::size_t stride, Rng& rng)
    : stride_(stride), pad_(kernel / 2) {
    // He-uniform for the leaky-ReLU stacks these feed.
    const double limit = std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
    Tensor w({out, in, kernel, kernel});
    for (auto& v : w.data()) {
        v = rng.uniform(-limit, limit);
    }
    weight_ = store.add(name + ".w", std::move(w));
    bias_ = store.add(name + ".b", Tensor({out}, 0.0));
}

Var Conv2d::operator()(const Var& x) const { return ad::conv2d(x, weight_, bias_, stride_, pad_); }

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.emplace_back(p.shape(), 0.0);
        v_.emplace_back(p.shape(), 0.0);
    }
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Tensor& g = params_[i].grad();
        if (g.size() != params_[i].size()) {
            continue;
        }
        Tensor& w = params_[i].mutable_value();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mh = m_[i][j] / bc1;
            const double vh = v_[i][j] / bc2;
            w[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
    zero_grad();
}

void Adam::zero_grad() { ad::zero_grad(params_); }

void Adam::save(const std::filesystem::path& path) const {
    std::map<std::string, Tensor> tensors;
    char key[32];
    for (std::size_t i = 0; i < params_.size(); ++i) {
        std::snprintf(key, sizeof key, "m.%06zu", i);
        tensors.emplace(key, m_[i]);
        std::snprintf(key, sizeof key, "v.%06zu", i);
        tensors.emplace(key, v_[i]);
    }
    tensors.emplace("step", Tensor::scalar(static_cast<double>(step_)));
    write_tensor_archive(path, tensors);
}

void Adam::load(const std::filesystem::path& path) {
    auto tensors = read_tensor_archive(path);
    char key[32];
    for (std::size_t i = 0; i < params_.size(); ++i) {
        std::snprintf(key, sizeof key, "m.%06zu", i);
        auto m = tensors.find(key);
        std::snprintf(key, sizeof key, "v.%06zu", i);
        auto v = tensors.find(key);
        require(m != tensors.end() && v != tensors.end() && m->second.shape() == params_[i].shape(),
                ErrorCode::FormatError, path.string() + ": optimizer state does not match network");
        m_[i] = m->second;
        v_[i] = v->second;
    }
    auto s = tensors.find("step");
    require(s != tensors.end(), ErrorCode::FormatError, path.string() + ": optimizer step missing");
    step_ = static_cast<std::int64_t>(s->second[0]);
}

namespace {
constexpr char kArchiveMagic[8] = {'M', 'O', 'D', 'A', 'T', 'N', 'S', '1'};
}

void write_tensor_archive(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors) {
    std::string blob(kArchiveMagic, sizeof kArchiveMagic);
    io::append_le<std::uint64_t>(blob, tensors.size());
    for (const auto& [name, t] : tensors) {
        io::append_le<std::uint64_t>(blob, name.size());
        blob += name;
        io::append_le<std::uint64_t>(blob, t.rank());
        for (std::size_t d : t.shape()) {
            io::append_le<std::uint64_t>(blob, d);
        }
        for (double v : t.data()) {
            io::append_le<double>(blob, v);
        }
    }
    io::write_file_atomic(path, blob);
}

std::map<std::string, Tensor> read_tensor_archive(const std::filesystem::path& path) {
    const std::string blob = io::read_file(path);
    io::ByteReader in(blob, path.string());
    require(blob.size() >= sizeof kArchiveMagic && std::memcmp(blob.data(), kArchiveMagic, sizeof kArchiveMagic) == 0,
            ErrorCode::FormatError, path.string() + ": not a tensor archive");
    in.skip(sizeof kArchiveMagic);
    std::map<std::string, Tensor> out;
    const auto count = in.read<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = in.read<std::uint64_t>();
        std::string name = in.read_string(len);
        const auto rank = in.read<std::uint64_t>();
        Shape shape(rank);
        for (auto& d : shape) {
            d = in.read<std::uint64_t>();
        }
        Tensor t(shape);
        for (auto& v : t.data()) {
            v = in.read<double>();
        }
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace moda::nn

#include "moda/pipeline.hpp"

#include "moda/audio.hpp"
#include "moda/io.hpp"
#include "moda/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>

namespace moda::pipeline {

namespace fs = std::filesystem;
using ad::Var;
using modanet::MotionOutput;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// --- json overlay ------------------------------------------------------------------

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    require(j.is_object(), ErrorCode::ConfigError, where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        require(known, ErrorCode::ConfigError, "unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void take(const Json& j, const char* key, T& field, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    try {
        field = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        fail(ErrorCode::ConfigError, where + "." + key + ": " + e.what());
    }
}

Json moda_json(const modanet::ModaConfig& c) {
    return {{"audio_dim", c.audio_dim},
            {"d", c.d},
            {"d_l", c.d_l},
            {"q", c.q},
            {"causal_sign", c.causal_sign},
            {"ppe_period", c.ppe_period},
            {"heads", c.heads},
            {"n_enc_layers", c.n_enc_layers},
            {"n_dec_layers", c.n_dec_layers},
            {"lambda", c.lambda},
            {"value_source", c.value_source == modanet::ValueSource::Audio ? "audio" : "motion"},
            {"logsigma_min", c.logsigma_min},
            {"logsigma_max", c.logsigma_max}};
}

void moda_from(const Json& j, modanet::ModaConfig& c) {
    const std::string w = "moda.net";
    check_keys(j,
               {"audio_dim", "d", "d_l", "q", "causal_sign", "ppe_period", "heads", "n_enc_layers", "n_dec_layers",
                "lambda", "value_source", "logsigma_min", "logsigma_max"},
               w);
    take(j, "audio_dim", c.audio_dim, w);
    take(j, "d", c.d, w);
    take(j, "d_l", c.d_l, w);
    take(j, "q", c.q, w);
    take(j, "causal_sign", c.causal_sign, w);
    take(j, "ppe_period", c.ppe_period, w);
    take(j, "heads", c.heads, w);
    take(j, "n_enc_layers", c.n_enc_layers, w);
    take(j, "n_dec_layers", c.n_dec_layers, w);
    take(j, "lambda", c.lambda, w);
    take(j, "logsigma_min", c.logsigma_min, w);
    take(j, "logsigma_max", c.logsigma_max, w);
    if (j.contains("value_source")) {
        std::string v;
        take(j, "value_source", v, w);
        require(v == "audio" || v == "motion", ErrorCode::ConfigError, w + ".value_source must be audio or motion");
        c.value_source = v == "audio" ? modanet::ValueSource::Audio : modanet::ValueSource::Motion;
    }
}

Json faco_json(const faco::FacoConfig& c) {
    return {{"d", c.d}, {"disc_hidden", c.disc_hidden}, {"lambda", c.lambda}, {"gan_weight", c.gan_weight}};
}

void faco_from(const Json& j, faco::FacoConfig& c) {
    const std::string w = "faco.net";
    check_keys(j, {"d", "disc_hidden", "lambda", "gan_weight"}, w);
    take(j, "d", c.d, w);
    take(j, "disc_hidden", c.disc_hidden, w);
    take(j, "lambda", c.lambda, w);
    take(j, "gan_weight", c.gan_weight, w);
}

Json renderer_json(const render::RendererConfig& c) {
    return {{"resolution", c.resolution},
            {"channels", c.channels},
            {"lambda_c", c.lambda_c},
            {"lambda_m", c.lambda_m},
            {"lambda_p", c.lambda_p},
            {"lambda_fm", c.lambda_fm},
            {"gan_weight", c.gan_weight},
            {"disc_scales", c.disc_scales},
            {"disc_channels", c.disc_channels},
            {"perceptual_channels", c.perceptual_channels},
            {"mouth_dilation", c.mouth_dilation},
            {"stroke_half_width", c.stroke_half_width}};
}

void renderer_from(const Json& j, render::RendererConfig& c) {
    const std::string w = "renderer.net";
    check_keys(j,
               {"resolution", "channels", "lambda_c", "lambda_m", "lambda_p", "lambda_fm", "gan_weight", "disc_scales",
                "disc_channels", "perceptual_channels", "mouth_dilation", "stroke_half_width"},
               w);
    take(j, "resolution", c.resolution, w);
    take(j, "channels", c.channels, w);
    take(j, "lambda_c", c.lambda_c, w);
    take(j, "lambda_m", c.lambda_m, w);
    take(j, "lambda_p", c.lambda_p, w);
    take(j, "lambda_fm", c.lambda_fm, w);
    take(j, "gan_weight", c.gan_weight, w);
    take(j, "disc_scales", c.disc_scales, w);
    take(j, "disc_channels", c.disc_channels, w);
    take(j, "perceptual_channels", c.perceptual_channels, w);
    take(j, "mouth_dilation", c.mouth_dilation, w);
    take(j, "stroke_half_width", c.stroke_half_width, w);
}

Json schedule_json(const StageSchedule& s) {
    return {{"epochs", s.epochs}, {"batch", s.batch}, {"max_steps", s.max_steps}, {"val_every", s.val_every},
            {"lr", s.lr}, {"decay", s.decay}};
}

void schedule_from(const Json& j, StageSchedule& s, const std::string& w) {
    check_keys(j, {"epochs", "batch", "max_steps", "val_every", "lr", "decay"}, w);
    take(j, "epochs", s.epochs, w);
    take(j, "batch", s.batch, w);
    take(j, "max_steps", s.max_steps, w);
    take(j, "val_every", s.val_every, w);
    take(j, "lr", s.lr, w);
    take(j, "decay", s.decay, w);
}

// --- small tensor helpers ----------------------------------------------------------

Tensor rows(const Tensor& t, std::size_t begin, std::size_t end) {
    const std::size_t w = t.dim(1);
    std::vector<double> out(t.storage().begin() + static_cast<std::ptrdiff_t>(begin * w),
                            t.storage().begin() + static_cast<std::ptrdiff_t>(end * w));
    return Tensor({end - begin, w}, std::move(out));
}

MotionOutput rows(const MotionOutput& m, std::size_t begin, std::size_t end) {
    return {rows(m.mouth, begin, end), rows(m.pose, begin, end), rows(m.eyes, begin, end), rows(m.torso, begin, end)};
}

template <typename Fn>
auto tagged(Stage stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        std::string msg = e.what();
        const std::string code = std::string(moda::to_string(e.code())) + ": ";
        if (msg.rfind(code, 0) == 0) {
            msg.erase(0, code.size());
        }
        throw Error(e.code(), "[" + to_string(stage) + "] " + msg);
    }
}

void check_finite(double v, Stage stage, std::int64_t step) {
    require(std::isfinite(v), ErrorCode::NonFiniteLoss,
            to_string(stage) + " loss is not finite at step " + std::to_string(step));
}

// --- checkpoint writing ------------------------------------------------------------

void write_checkpoint(const fs::path& dir, const Manifest& m, const std::function<void(const fs::path&)>& payload) {
    const fs::path tmp = dir.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    payload(tmp);
    write_manifest(tmp, m);
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

Manifest checked_manifest(const fs::path& dir, const PipelineConfig& cfg, Stage stage) {
    Manifest m = read_manifest(dir);
    require(m.stage == stage, ErrorCode::ConfigError,
            dir.string() + " holds a " + to_string(m.stage) + " checkpoint, expected " + to_string(stage));
    const std::string h = config_hash(cfg, stage);
    require(m.config_hash == h, ErrorCode::ConfigError,
            dir.string() + ": config hash " + m.config_hash + " does not match the current " + to_string(stage) +
                " config (" + h + ")");
    return m;
}

modanet::ModaConfig moda_config(const PipelineConfig& cfg) {
    modanet::ModaConfig c = cfg.moda;
    c.audio_dim = cfg.n_mels;
    return c;
}

faco::FacoConfig faco_config(const PipelineConfig& cfg) {
    faco::FacoConfig c = cfg.faco;
    c.adam = cfg.adam(Stage::Faco);
    return c;
}

render::RendererConfig renderer_config(const PipelineConfig& cfg) {
    render::RendererConfig c = cfg.renderer;
    c.adam = cfg.adam(Stage::Renderer);
    return c;
}

// --- stage runners -----------------------------------------------------------------

class Runner {
public:
    virtual ~Runner() = default;
    virtual std::size_t steps_per_epoch() const = 0;
    // One optimiser step; returns named training losses, "total" first.
    virtual std::vector<std::pair<std::string, double>> step(std::int64_t step) = 0;
    // Named validation metrics; "val" is the selection criterion.
    virtual std::map<std::string, double> validate() = 0;
    virtual void save(const fs::path& dir) const = 0;
    virtual void load(const fs::path& dir) = 0;
    virtual void set_lr(double lr) = 0;
};

std::vector<Window> segment_windows(const std::vector<std::pair<std::size_t, std::size_t>>& segments,
                                    const PipelineConfig& cfg) {
    std::vector<Window> out;
    for (const auto& [b, e] : segments) {
        for (const auto& [s, t] : sliding_windows(e - b, cfg.window, cfg.stride)) {
            out.emplace_back(b + s, b + t);
        }
    }
    return out;
}

class ModaRunner final : public Runner {
public:
    ModaRunner(const prep::Dataset& data, const PipelineConfig& cfg)
        : data_(data),
          cfg_(cfg),
          net_(moda_config(cfg), cfg.seed),
          opt_(net_.params().all(), cfg.adam(Stage::Moda)),
          gt_(modanet::displacements_from(data.frames, data.subject)) {
        require(data.audio.dim(1) == cfg.n_mels, ErrorCode::ConfigError,
                "dataset features have dim " + std::to_string(data.audio.dim(1)) + ", config expects " +
                    std::to_string(cfg.n_mels));
        train_ = segment_windows(data.train_segments(), cfg);
        if (data.val_end > data.val_begin) {
            val_ = segment_windows({{data.val_begin, data.val_end}}, cfg);
        } else {
            val_ = train_;
        }
    }

    std::size_t steps_per_epoch() const override {
        const std::size_t b = cfg_.moda_schedule.batch;
        return (train_.size() + b - 1) / b;
    }

    std::vector<std::pair<std::string, double>> step(std::int64_t step) override {
        nn::Rng rng(mix(cfg_.seed, static_cast<std::uint64_t>(step)));
        const std::size_t batch = cfg_.moda_schedule.batch;
        double tp = 0.0, kld = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const Window w = train_[rng.next() % train_.size()];
            const auto fwd = net_.forward(rows(data_.audio, w.first, w.second), data_.subject.face,
                                          modanet::Mode::Train, rng.next());
            const auto l_tp = modanet::loss_tp(fwd.motion, rows(gt_, w.first, w.second), net_.config().lambda);
            const auto l_kld = modanet::loss_kld(fwd.moments);
            const auto total = ad::scale(ad::add(l_tp, l_kld), 1.0 / static_cast<double>(batch));
            check_finite(total.item(), Stage::Moda, step);
            ad::backward(total);
            tp += l_tp.item() / static_cast<double>(batch);
            kld += l_kld.item() / static_cast<double>(batch);
        }
        opt_.step();
        return {{"total", tp + kld}, {"tp", tp}, {"kld", kld}};
    }

    std::map<std::string, double> validate() override {
        double tp = 0.0, kld = 0.0;
        for (std::size_t k = 0; k < val_.size(); ++k) {
            const auto [b, e] = val_[k];
            const auto l = modanet::evaluate_losses(net_, rows(data_.audio, b, e), data_.subject, rows(gt_, b, e),
                                                    mix(cfg_.seed ^ 0x5eedULL, k));
            tp += l.tp;
            kld += l.kld;
        }
        const double n = static_cast<double>(val_.size());
        return {{"val", (tp + kld) / n}, {"val_tp", tp / n}, {"val_kld", kld / n}};
    }

    void save(const fs::path& dir) const override {
        net_.params().save(dir / "params.bin");
        opt_.save(dir / "optim.bin");
    }

    void load(const fs::path& dir) override {
        net_.params().load(dir / "params.bin");
        opt_.load(dir / "optim.bin");
    }

    void set_lr(double lr) override { opt_.set_lr(lr); }

private:
    const prep::Dataset& data_;
    PipelineConfig cfg_;
    modanet::ModaNet net_;
    nn::Adam opt_;
    MotionOutput gt_;
    std::vector<Window> train_;
    std::vector<Window> val_;
};

std::vector<faco::FacoSample> faco_samples(const prep::Dataset& data, const std::vector<std::size_t>& idx) {
    std::vector<faco::FacoSample> out;
    out.reserve(idx.size());
    for (std::size_t t : idx) {
        const auto& f = data.frames[t];
        out.push_back({data.subject.face, f.mouth, f.eyes, f.face});
    }
    return out;
}

class FacoRunner final : public Runner {
public:
    FacoRunner(const prep::Dataset& data, const PipelineConfig& cfg)
        : cfg_(cfg), net_(faco_config(cfg), cfg.seed), trainer_(net_) {
        train_ = faco_samples(data, data.train_indices());
        const auto val = data.val_indices();
        val_ = faco::FacoBatch::from_samples(val.empty() ? train_ : faco_samples(data, val));
    }

    std::size_t steps_per_epoch() const override {
        const std::size_t b = cfg_.faco_schedule.batch;
        return (train_.size() + b - 1) / b;
    }

    std::vector<std::pair<std::string, double>> step(std::int64_t step) override {
        nn::Rng rng(mix(cfg_.seed, static_cast<std::uint64_t>(step)));
        std::vector<faco::FacoSample> picked;
        const std::size_t batch = std::min(cfg_.faco_schedule.batch, train_.size());
        if (batch == train_.size()) {
            picked = train_;
        } else {
            for (std::size_t b = 0; b < batch; ++b) {
                picked.push_back(train_[rng.next() % train_.size()]);
            }
        }
        const auto rec = trainer_.step(faco::FacoBatch::from_samples(picked));
        check_finite(rec.gen, Stage::Faco, step);
        return {{"total", rec.gen}, {"disc", rec.disc}, {"l1", rec.l1}};
    }

    std::map<std::string, double> validate() override {
        const double e = faco::mean_point_error(net_, val_);
        return {{"val", e}};
    }

    void save(const fs::path& dir) const override {
        net_.generator().save(dir / "params.bin");
        net_.discriminator().save(dir / "disc.bin");
        trainer_.generator_optimizer().save(dir / "optim.bin");
        trainer_.discriminator_optimizer().save(dir / "optim_d.bin");
    }

    void load(const fs::path& dir) override {
        net_.generator().load(dir / "params.bin");
        net_.discriminator().load(dir / "disc.bin");
        trainer_.generator_optimizer().load(dir / "optim.bin");
        trainer_.discriminator_optimizer().load(dir / "optim_d.bin");
    }

    void set_lr(double lr) override {
        trainer_.generator_optimizer().set_lr(lr);
        trainer_.discriminator_optimizer().set_lr(lr);
    }

private:
    PipelineConfig cfg_;
    faco::FacoNet net_;
    mutable faco::FacoTrainer trainer_;
    std::vector<faco::FacoSample> train_;
    faco::FacoBatch val_;
};

class RendererRunner final : public Runner {
public:
    RendererRunner(const prep::Dataset& data, const PipelineConfig& cfg)
        : data_(data), cfg_(cfg), net_(renderer_config(cfg), cfg.seed), trainer_(net_) {
        const std::size_t r = cfg.renderer.resolution;
        require(data.width == r && data.height == r, ErrorCode::ConfigError,
                "renderer resolution " + std::to_string(r) + " does not match the " + std::to_string(data.width) +
                    "x" + std::to_string(data.height) + " dataset frames");
        reference_ = data.load_frame(0);
        train_ = data.train_indices();
        val_ = data.val_indices();
        if (val_.empty()) {
            val_ = train_;
        }
        // Validation renders at most 32 evenly spaced frames.
        if (val_.size() > 32) {
            std::vector<std::size_t> picked;
            for (std::size_t i = 0; i < 32; ++i) {
                picked.push_back(val_[i * val_.size() / 32]);
            }
            val_ = picked;
        }
    }

    std::size_t steps_per_epoch() const override {
        const std::size_t b = cfg_.renderer_schedule.batch;
        return (train_.size() + b - 1) / b;
    }

    std::vector<std::pair<std::string, double>> step(std::int64_t step) override {
        nn::Rng rng(mix(cfg_.seed, static_cast<std::uint64_t>(step)));
        std::vector<std::size_t> picked;
        for (std::size_t b = 0; b < cfg_.renderer_schedule.batch; ++b) {
            picked.push_back(train_[rng.next() % train_.size()]);
        }
        const auto rec = trainer_.step(renderer_batch(data_, picked, reference_, net_.config()));
        check_finite(rec.total, Stage::Renderer, step);
        return {{"total", rec.total}, {"disc", rec.disc},    {"color", rec.color},
                {"mouth", rec.mouth}, {"perceptual", rec.perceptual}};
    }

    std::map<std::string, double> validate() override {
        double l1 = 0.0, p = 0.0;
        for (std::size_t t : val_) {
            const auto batch = renderer_batch(data_, {t}, reference_, net_.config());
            const Tensor img = render::unstack(net_.generate(Var::constant(batch.condition)).value(), 0);
            const Tensor target = render::unstack(batch.target, 0);
            double acc = 0.0;
            for (std::size_t i = 0; i < img.size(); ++i) {
                acc += std::abs(img[i] - target[i]);
            }
            l1 += acc / static_cast<double>(img.size());
            p += std::min(render::psnr(img, target), 100.0);
        }
        const double n = static_cast<double>(val_.size());
        return {{"val", l1 / n}, {"psnr", p / n}};
    }

    void save(const fs::path& dir) const override {
        net_.generator().save(dir / "params.bin");
        net_.discriminator().save(dir / "disc.bin");
        trainer_.generator_optimizer().save(dir / "optim.bin");
        trainer_.discriminator_optimizer().save(dir / "optim_d.bin");
    }

    void load(const fs::path& dir) override {
        net_.generator().load(dir / "params.bin");
        net_.discriminator().load(dir / "disc.bin");
        trainer_.generator_optimizer().load(dir / "optim.bin");
        trainer_.discriminator_optimizer().load(dir / "optim_d.bin");
    }

    void set_lr(double lr) override {
        trainer_.generator_optimizer().set_lr(lr);
        trainer_.discriminator_optimizer().set_lr(lr);
    }

private:
    const prep::Dataset& data_;
    PipelineConfig cfg_;
    render::Renderer net_;
    mutable render::RendererTrainer trainer_;
    Tensor reference_;
    std::vector<std::size_t> train_;
    std::vector<std::size_t> val_;
};

std::unique_ptr<Runner> make_runner(Stage stage, const prep::Dataset& data, const PipelineConfig& cfg) {
    switch (stage) {
        case Stage::Moda:
            return std::make_unique<ModaRunner>(data, cfg);
        case Stage::Faco:
            return std::make_unique<FacoRunner>(data, cfg);
        case Stage::Renderer:
            return std::make_unique<RendererRunner>(data, cfg);
    }
    fail(ErrorCode::ConfigError, "unknown stage");
}

class CsvLog {
public:
    CsvLog(const fs::path& path, bool append) {
        fs::create_directories(path.parent_path());
        const bool fresh = !append || !fs::exists(path);
        out_.open(path, fresh ? std::ios::trunc : std::ios::app);
        require(out_.good(), ErrorCode::IoError, "cannot open " + path.string());
        if (fresh) {
            out_ << "step,phase,name,value\n";
        }
    }
    void row(std::int64_t step, const char* phase, const std::string& name, double value) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", value);
        out_ << step << ',' << phase << ',' << name << ',' << buf << '\n';
    }
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

}  // namespace

// --- config ------------------------------------------------------------------------

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::Moda:
            return "moda";
        case Stage::Faco:
            return "faco";
        case Stage::Renderer:
            return "renderer";
    }
    return "?";
}

Stage parse_stage(const std::string& name) {
    for (Stage s : kStages) {
        if (to_string(s) == name) {
            return s;
        }
    }
    fail(ErrorCode::ConfigError, "unknown stage '" + name + "' (expected moda, faco or renderer)");
}

const StageSchedule& PipelineConfig::schedule(Stage stage) const {
    switch (stage) {
        case Stage::Moda:
            return moda_schedule;
        case Stage::Faco:
            return faco_schedule;
        default:
            return renderer_schedule;
    }
}

StageSchedule& PipelineConfig::schedule(Stage stage) {
    return const_cast<StageSchedule&>(std::as_const(*this).schedule(stage));
}

nn::AdamConfig PipelineConfig::adam(Stage stage) const {
    nn::AdamConfig a;
    a.lr = schedule(stage).lr;
    a.beta1 = beta1;
    a.beta2 = beta2;
    return a;
}

double StageSchedule::lr_at(std::int64_t step, std::int64_t total) const {
    if (decay != "cosine" || total <= 0) {
        return lr;
    }
    const double x = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

void PipelineConfig::validate() const {
    for (Stage s : kStages) {
        const auto& sc = schedule(s);
        const std::string w = to_string(s) + ".schedule";
        require(sc.lr > 0.0 && std::isfinite(sc.lr), ErrorCode::ConfigError, w + ".lr must be positive");
        require(sc.epochs > 0, ErrorCode::ConfigError, w + ".epochs must be positive");
        require(sc.batch > 0, ErrorCode::ConfigError, w + ".batch must be positive");
        require(sc.decay == "constant" || sc.decay == "cosine", ErrorCode::ConfigError,
                w + ".decay must be constant or cosine");
    }
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::ConfigError,
            "optimizer betas must lie in [0, 1)");
    require(window > 0, ErrorCode::ConfigError, "window must be positive");
    require(stride > 0 && stride <= window, ErrorCode::ConfigError, "stride must lie in [1, window]");
    require(fps > 0.0, ErrorCode::ConfigError, "fps must be positive");
    require(n_mels > 0, ErrorCode::ConfigError, "n_mels must be positive");
    try {
        moda_config(*this).validate();
        faco.validate();
        renderer.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.what());
    }
}

Json PipelineConfig::stage_json(Stage stage) const {
    switch (stage) {
        case Stage::Moda:
            return {{"net", moda_json(moda)}, {"schedule", schedule_json(moda_schedule)}};
        case Stage::Faco:
            return {{"net", faco_json(faco)}, {"schedule", schedule_json(faco_schedule)}};
        case Stage::Renderer:
            return {{"net", renderer_json(renderer)}, {"schedule", schedule_json(renderer_schedule)}};
    }
    return {};
}

Json PipelineConfig::to_json() const {
    Json j{{"seed", seed},     {"fps", fps},       {"n_mels", n_mels},
           {"window", window}, {"stride", stride}, {"optimizer", {{"beta1", beta1}, {"beta2", beta2}}}};
    for (Stage s : kStages) {
        j[to_string(s)] = stage_json(s);
    }
    return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j, const PipelineConfig& base) {
    PipelineConfig c = base;
    const std::string w = "config";
    check_keys(j, {"seed", "fps", "n_mels", "window", "stride", "optimizer", "moda", "faco", "renderer"}, w);
    take(j, "seed", c.seed, w);
    take(j, "fps", c.fps, w);
    take(j, "n_mels", c.n_mels, w);
    take(j, "window", c.window, w);
    take(j, "stride", c.stride, w);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        check_keys(o, {"beta1", "beta2"}, "optimizer");
        take(o, "beta1", c.beta1, "optimizer");
        take(o, "beta2", c.beta2, "optimizer");
    }
    for (Stage s : kStages) {
        const std::string name = to_string(s);
        if (!j.contains(name)) {
            continue;
        }
        const auto& sj = j.at(name);
        check_keys(sj, {"net", "schedule"}, name);
        if (sj.contains("net")) {
            if (s == Stage::Moda) {
                moda_from(sj.at("net"), c.moda);
            } else if (s == Stage::Faco) {
                faco_from(sj.at("net"), c.faco);
            } else {
                renderer_from(sj.at("net"), c.renderer);
            }
        }
        if (sj.contains("schedule")) {
            schedule_from(sj.at("schedule"), c.schedule(s), name + ".schedule");
        }
    }
    c.moda.audio_dim = c.n_mels;
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, const PipelineConfig& base) {
    Json j;
    try {
        j = Json::parse(io::read_file(path));
    } catch (const Json::exception& e) {
        fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.what());
    }
    return from_json(j, base);
}

PipelineConfig PipelineConfig::preset(const std::string& name) {
    PipelineConfig c;
    if (name == "paper") {
        for (Stage s : kStages) {
            c.schedule(s).lr = 1e-4;
        }
        return c;
    }
    require(name == "desk", ErrorCode::ConfigError, "unknown preset '" + name + "' (expected desk or paper)");
    c.moda.d = 64;
    c.moda.d_l = 32;
    c.faco.d = 64;
    c.faco.disc_hidden = 64;
    c.renderer.resolution = 64;
    c.renderer.channels = {16, 32, 32, 32, 32, 32};
    c.renderer.disc_channels = 16;
    c.renderer.perceptual_channels = {8, 16, 16};
    // 8 px at 256^2, scaled with the resolution.
    c.renderer.mouth_dilation = 2.0;
    c.moda_schedule = {1, 1, 2000, 200, 3e-3, "cosine"};
    c.faco_schedule = {1, 10, 500, 100, 1e-3, "cosine"};
    c.renderer_schedule = {1, 1, 2000, 250, 1e-3, "cosine"};
    return c;
}

std::string config_hash(const PipelineConfig& cfg, Stage stage) {
    Json j = cfg.stage_json(stage).at("net");
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    if (stage == Stage::Moda) {
        j["audio_dim"] = cfg.n_mels;
    }
    return hex(fnv1a(j.dump()));
}

// --- windows -----------------------------------------------------------------------

std::vector<Window> sliding_windows(std::size_t total, std::size_t window, std::size_t stride) {
    require(total >= 1, ErrorCode::InconsistentWindows, "sliding_windows needs at least one frame");
    require(window >= 1 && stride >= 1 && stride <= window, ErrorCode::ConfigError,
            "window " + std::to_string(window) + " / stride " + std::to_string(stride) + " is invalid");
    if (total <= window) {
        return {{0, total}};
    }
    std::vector<Window> out;
    std::size_t start = 0;
    while (true) {
        out.emplace_back(start, start + window);
        if (start + window >= total) {
            break;
        }
        start += stride;
        if (start + window > total) {
            out.emplace_back(total - window, total);
            break;
        }
    }
    return out;
}

MotionOutput blend_windows(const std::vector<MotionOutput>& parts, const std::vector<Window>& windows) {
    require(!windows.empty() && parts.size() == windows.size(), ErrorCode::InconsistentWindows,
            std::to_string(parts.size()) + " predictions for " + std::to_string(windows.size()) + " windows");
    require(windows.front().first == 0, ErrorCode::InconsistentWindows, "first window must start at frame 0");
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto [s, e] = windows[k];
        require(e > s, ErrorCode::InconsistentWindows, "window " + std::to_string(k) + " is empty");
        require(parts[k].frames() == e - s, ErrorCode::InconsistentWindows,
                "window " + std::to_string(k) + " spans " + std::to_string(e - s) + " frames but its prediction has " +
                    std::to_string(parts[k].frames()));
        if (k > 0) {
            const auto [ps, pe] = windows[k - 1];
            require(s > ps && s <= pe && e > pe, ErrorCode::InconsistentWindows,
                    "window " + std::to_string(k) + " does not continue window " + std::to_string(k - 1));
        }
    }
    const std::size_t total = windows.back().second;
    MotionOutput out = MotionOutput::zeros(total);
    Tensor* dst[] = {&out.mouth, &out.pose, &out.eyes, &out.torso};
    std::size_t covered = 0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto [s, e] = windows[k];
        const Tensor* src[] = {&parts[k].mouth, &parts[k].pose, &parts[k].eyes, &parts[k].torso};
        const double overlap = static_cast<double>(covered - s);
        for (std::size_t t = s; t < e; ++t) {
            const double alpha = t < covered ? static_cast<double>(t - s) / overlap : 1.0;
            for (int c = 0; c < 4; ++c) {
                const std::size_t w = dst[c]->dim(1);
                for (std::size_t i = 0; i < w; ++i) {
                    double& v = (*dst[c])[t * w + i];
                    const double p = (*src[c])[(t - s) * w + i];
                    v = t < covered ? (1.0 - alpha) * v + alpha * p : p;
                }
            }
        }
        covered = e;
    }
    return out;
}

// --- checkpoints -------------------------------------------------------------------

fs::path checkpoint_dir(const fs::path& root, Stage stage, const std::string& which) {
    return root / "checkpoints" / to_string(stage) / which;
}

void write_manifest(const fs::path& dir, const Manifest& m) {
    io::write_json(dir / "manifest.json", {{"stage", to_string(m.stage)},
                                           {"config_hash", m.config_hash},
                                           {"step", m.step},
                                           {"cfg", m.cfg},
                                           {"metrics", m.metrics}});
}

Manifest read_manifest(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    require(fs::exists(p), ErrorCode::MissingCheckpoint, "no checkpoint manifest at " + p.string());
    const Json j = io::read_json(p);
    Manifest m;
    try {
        m.stage = parse_stage(j.at("stage").get<std::string>());
        m.config_hash = j.at("config_hash").get<std::string>();
        m.step = j.at("step").get<std::int64_t>();
        m.cfg = j.value("cfg", Json::object());
        m.metrics = j.value("metrics", std::map<std::string, double>{});
    } catch (const Json::exception& e) {
        fail(ErrorCode::FormatError, p.string() + ": " + e.what());
    }
    return m;
}

modanet::ModaNet load_moda(const fs::path& dir, const PipelineConfig& cfg) {
    checked_manifest(dir, cfg, Stage::Moda);
    modanet::ModaNet net(moda_config(cfg), cfg.seed);
    net.params().load(dir / "params.bin");
    return net;
}

faco::FacoNet load_faco(const fs::path& dir, const PipelineConfig& cfg) {
    checked_manifest(dir, cfg, Stage::Faco);
    faco::FacoNet net(faco_config(cfg), cfg.seed);
    net.generator().load(dir / "params.bin");
    if (fs::exists(dir / "disc.bin")) {
        net.discriminator().load(dir / "disc.bin");
    }
    return net;
}

render::Renderer load_renderer(const fs::path& dir, const PipelineConfig& cfg) {
    checked_manifest(dir, cfg, Stage::Renderer);
    render::Renderer net(renderer_config(cfg), cfg.seed);
    net.generator().load(dir / "params.bin");
    if (fs::exists(dir / "disc.bin")) {
        net.discriminator().load(dir / "disc.bin");
    }
    return net;
}

// --- training ----------------------------------------------------------------------

TrainResult train(Stage stage, const prep::Dataset& data, const PipelineConfig& cfg, const fs::path& out,
                  const TrainOptions& opts) {
    cfg.validate();
    require(!data.train_indices().empty(), ErrorCode::DatasetEmpty,
            "dataset at " + data.clip_dir.string() + " has no training frames");
    return tagged(stage, [&] {
        auto runner = make_runner(stage, data, cfg);
        const StageSchedule& sched = cfg.schedule(stage);
        const std::size_t spe = std::max<std::size_t>(runner->steps_per_epoch(), 1);
        const auto total = static_cast<std::int64_t>(opts.steps      ? opts.steps
                                                     : sched.max_steps ? sched.max_steps
                                                                       : sched.epochs * spe);
        const auto val_every = static_cast<std::int64_t>(sched.val_every ? sched.val_every : spe);
        const fs::path best_dir = checkpoint_dir(out, stage, "best");
        const fs::path last_dir = checkpoint_dir(out, stage, "last");

        TrainResult res;
        res.best = best_dir;
        res.last = last_dir;
        res.best_val = std::numeric_limits<double>::infinity();
        std::int64_t step = 0;
        if (opts.resume) {
            const Manifest m = checked_manifest(last_dir, cfg, stage);
            runner->load(last_dir);
            step = m.step;
            if (fs::exists(best_dir / "manifest.json")) {
                const Manifest b = read_manifest(best_dir);
                if (b.metrics.count("val") != 0) {
                    res.best_val = b.metrics.at("val");
                }
            }
            if (m.metrics.count("val") != 0) {
                res.last_val = m.metrics.at("val");
            }
        }
        res.first_step = step;

        CsvLog log(out / "logs" / (to_string(stage) + ".csv"), opts.resume);
        const std::string hash = config_hash(cfg, stage);
        while (step < total) {
            runner->set_lr(sched.lr_at(step, total));
            const auto losses = runner->step(step);
            ++step;
            for (const auto& [name, v] : losses) {
                log.row(step, "train", name, v);
            }
            if (opts.progress) {
                opts.progress(step, losses.front().second);
            }
            if (step % val_every != 0 && step != total) {
                continue;
            }
            auto metrics = runner->validate();
            for (const auto& [name, v] : metrics) {
                log.row(step, "val", name, v);
            }
            log.flush();
            const double val = metrics.at("val");
            check_finite(val, stage, step);
            metrics["train"] = losses.front().second;
            const Manifest m{stage, hash, step, cfg.stage_json(stage), metrics};
            auto payload = [&](const fs::path& dir) { runner->save(dir); };
            write_checkpoint(last_dir, m, payload);
            res.last_val = val;
            if (val <= res.best_val) {
                res.best_val = val;
                write_checkpoint(best_dir, m, payload);
            }
        }
        res.last_step = step;
        return res;
    });
}

// --- rendering inputs --------------------------------------------------------------

FrameInputs frame_inputs(const motion::MotionRepresentation& frame, const motion::FaceTopology& topo,
                         const Tensor& reference, std::uint64_t t, const render::RendererConfig& cfg) {
    const std::size_t r = cfg.resolution;
    const auto camera = motion::CameraModel::default_for(r, r);
    const auto face_pts = frame.face.points();
    const auto face_2d = motion::project(motion::to_camera(face_pts, frame.pose), camera);
    std::vector<motion::Vec2> torso_2d;
    for (const auto& p : frame.torso.points()) {
        torso_2d.push_back({p.x * static_cast<double>(r), p.y * static_cast<double>(r)});
    }
    FrameInputs in;
    in.condition = render::assemble_condition(face_2d, torso_2d, reference, t, topo, cfg.stroke_half_width);
    const auto ring = motion::outer_mouth_ring(frame.mouth, topo);
    const auto ring_2d = motion::project(motion::to_camera(ring, frame.pose), camera);
    const Tensor m = render::mouth_mask(ring_2d, r, r, cfg.mouth_dilation);
    in.mask = Tensor({3, r, r});
    for (std::size_t c = 0; c < 3; ++c) {
        std::copy(m.storage().begin(), m.storage().end(), in.mask.storage().begin() + static_cast<std::ptrdiff_t>(c * r * r));
    }
    return in;
}

render::RendererBatch renderer_batch(const prep::Dataset& data, const std::vector<std::size_t>& frames,
                                     const Tensor& reference, const render::RendererConfig& cfg) {
    std::vector<Tensor> cond, target, mask;
    for (std::size_t t : frames) {
        auto in = frame_inputs(data.frames[t], data.topology, reference, t, cfg);
        cond.push_back(std::move(in.condition));
        mask.push_back(std::move(in.mask));
        target.push_back(data.load_frame(t));
    }
    return {render::stack(cond), render::stack(target), render::stack(mask)};
}

// --- inference ---------------------------------------------------------------------

Tensor audio_features(const fs::path& wav, double fps, std::size_t n_mels, const fs::path& cache_dir) {
    fs::path cached;
    if (!cache_dir.empty()) {
        const std::string key = io::read_file(wav) + "|" + std::to_string(fps) + "|" + std::to_string(n_mels);
        cached = cache_dir / ("features-" + hex(fnv1a(key)) + ".bin");
        if (fs::exists(cached)) {
            return audio::read_feature_file(cached).features;
        }
    }
    auto seq = audio::fallback_filterbank(audio::load_wav(wav), fps, n_mels);
    // Same float32 rounding as the cache files, so caching never changes results.
    for (double& v : seq.features.data()) {
        v = static_cast<double>(static_cast<float>(v));
    }
    if (!cached.empty()) {
        fs::create_directories(cache_dir);
        audio::write_feature_file(cached, seq);
    }
    return seq.features;
}

std::vector<motion::MotionRepresentation> generate_motion(const modanet::ModaNet& moda, const faco::FacoNet& faco,
                                                          const Tensor& audio, const motion::SubjectTemplate& subject,
                                                          const PipelineConfig& cfg, const InferOptions& opts,
                                                          std::vector<Window>* windows_out) {
    require(audio.rank() == 2 && audio.dim(0) > 0, ErrorCode::EmptyAudio, "no audio frames to animate");
    const auto windows = sliding_windows(audio.dim(0), cfg.window, cfg.stride);
    const auto mode = opts.mode == SampleMode::Sample ? modanet::Mode::Sample : modanet::Mode::Mean;
    std::vector<MotionOutput> parts;
    tagged(Stage::Moda, [&] {
        for (std::size_t k = 0; k < windows.size(); ++k) {
            const auto [s, e] = windows[k];
            parts.push_back(moda.forward(rows(audio, s, e), subject.face, mode, mix(opts.seed, k)).motion.values());
        }
    });
    auto frames = modanet::apply_to_template(blend_windows(parts, windows), subject);
    tagged(Stage::Faco, [&] {
        for (auto& f : frames) {
            f.face = faco.compose(subject.face, f.mouth, f.eyes);
        }
    });
    if (windows_out != nullptr) {
        *windows_out = windows;
    }
    return frames;
}

void write_motion(const fs::path& path, const std::vector<motion::MotionRepresentation>& frames) {
    const std::size_t n = frames.size();
    Tensor mouth({n, modanet::kMouthWidth}), pose({n, modanet::kPoseWidth}), eyes({n, modanet::kEyeWidth}),
        torso({n, modanet::kTorsoWidth}), face({n, faco::kFaceWidth});
    auto put = [](Tensor& t, std::size_t row, auto span) {
        std::copy(span.begin(), span.end(), t.storage().begin() + static_cast<std::ptrdiff_t>(row * t.dim(1)));
    };
    for (std::size_t t = 0; t < n; ++t) {
        put(mouth, t, frames[t].mouth.flat());
        put(eyes, t, frames[t].eyes.flat());
        put(torso, t, frames[t].torso.flat());
        put(face, t, frames[t].face.flat());
        const auto p = frames[t].pose.flat();
        put(pose, t, std::span<const double>(p));
    }
    nn::write_tensor_archive(path, {{"mouth", mouth}, {"pose", pose}, {"eyes", eyes}, {"torso", torso}, {"face", face}});
}

std::vector<motion::MotionRepresentation> read_motion(const fs::path& path) {
    require(fs::exists(path), ErrorCode::MissingStream, "no motion dump at " + path.string());
    const auto a = nn::read_tensor_archive(path);
    for (const char* key : {"mouth", "pose", "eyes", "torso", "face"}) {
        require(a.count(key) != 0, ErrorCode::MissingStream, path.string() + " has no '" + key + "' stream");
    }
    const std::size_t n = a.at("mouth").dim(0);
    for (const auto& [key, t] : a) {
        require(t.rank() == 2 && t.dim(0) == n, ErrorCode::LengthMismatch,
                path.string() + ": stream '" + key + "' has a different frame count");
    }
    auto row = [&](const char* key, std::size_t t) {
        const Tensor& x = a.at(key);
        const auto w = x.dim(1);
        return std::vector<double>(x.storage().begin() + static_cast<std::ptrdiff_t>(t * w),
                                   x.storage().begin() + static_cast<std::ptrdiff_t>((t + 1) * w));
    };
    std::vector<motion::MotionRepresentation> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        out[t].mouth = motion::MouthPoints(row("mouth", t));
        out[t].eyes = motion::EyePoints(row("eyes", t));
        out[t].torso = motion::TorsoPoints(row("torso", t));
        out[t].face = motion::FacePoints(row("face", t));
        const auto p = row("pose", t);
        out[t].pose = motion::HeadPose::from_flat(p);
    }
    return out;
}

InferResult infer(const fs::path& wav, const prep::Dataset& subject_data, const fs::path& ckpt_root,
                  const PipelineConfig& cfg, const fs::path& out, const InferOptions& opts) {
    cfg.validate();
    const auto moda = tagged(Stage::Moda, [&] { return load_moda(checkpoint_dir(ckpt_root, Stage::Moda, "best"), cfg); });
    const auto faco = tagged(Stage::Faco, [&] { return load_faco(checkpoint_dir(ckpt_root, Stage::Faco, "best"), cfg); });
    std::optional<render::Renderer> renderer;
    if (opts.render_frames) {
        renderer.emplace(tagged(Stage::Renderer, [&] {
            return load_renderer(checkpoint_dir(ckpt_root, Stage::Renderer, "best"), cfg);
        }));
    }
    const Tensor audio = audio_features(wav, cfg.fps, cfg.n_mels, opts.cache_dir);

    InferResult res;
    res.motion = generate_motion(moda, faco, audio, subject_data.subject, cfg, opts, &res.windows);
    res.frames = res.motion.size();

    fs::create_directories(out);
    write_motion(out / "motion.bin", res.motion);
    if (renderer) {
        const std::size_t r = cfg.renderer.resolution;
        require(subject_data.width == r && subject_data.height == r, ErrorCode::ConfigError,
                "renderer resolution " + std::to_string(r) + " does not match the subject's reference frame");
        const Tensor reference = subject_data.load_frame(0);
        fs::create_directories(out / "frames");
        tagged(Stage::Renderer, [&] {
            for (std::size_t t = 0; t < res.frames; ++t) {
                const auto in = frame_inputs(res.motion[t], subject_data.topology, reference, t, cfg.renderer);
                const Tensor cond = render::stack({in.condition});
                const Tensor img = render::unstack(renderer->generate(Var::constant(cond)).value(), 0);
                char name[32];
                std::snprintf(name, sizeof name, "%06zu.png", t);
                const fs::path dst = out / "frames" / name;
                const fs::path tmp = dst.string() + ".tmp";
                io::write_png(tmp, io::tensor_to_image(img));
                fs::rename(tmp, dst);
            }
        });
    }
    Json windows = Json::array();
    for (const auto& [s, e] : res.windows) {
        windows.push_back({s, e});
    }
    Json hashes;
    for (Stage s : kStages) {
        hashes[to_string(s)] = config_hash(cfg, s);
    }
    io::write_json(out / "manifest.json", {{"frames", res.frames},
                                           {"fps", cfg.fps},
                                           {"seed", opts.seed},
                                           {"mode", opts.mode == SampleMode::Sample ? "sample" : "mean"},
                                           {"audio", fs::absolute(wav).string()},
                                           {"windows", windows},
                                           {"rendered", opts.render_frames},
                                           {"config_hash", hashes}});
    return res;
}

// --- evaluation --------------------------------------------------------------------

metrics::Report evaluate(const std::vector<fs::path>& pred_dirs, const prep::Dataset& gt, const EvaluateOptions& opts) {
    require(!pred_dirs.empty(), ErrorCode::MissingStream, "evaluate needs at least one prediction directory");
    std::vector<std::vector<motion::MotionRepresentation>> preds;
    for (const auto& d : pred_dirs) {
        preds.push_back(read_motion(d / "motion.bin"));
    }
    std::size_t n = gt.size();
    for (const auto& p : preds) {
        n = std::min(n, p.size());
    }
    require(n > 0, ErrorCode::TooShort, "no frames to evaluate");

    auto mouth_seq = [&](const std::vector<motion::MotionRepresentation>& m) {
        metrics::PointSequence s(n);
        for (std::size_t t = 0; t < n; ++t) {
            s[t] = m[t].mouth.points();
        }
        return s;
    };
    const auto camera = motion::CameraModel::default_for(opts.iou_grid, opts.iou_grid);
    auto rings = [&](const std::vector<motion::MotionRepresentation>& m) {
        std::vector<std::vector<motion::Vec2>> out(n);
        for (std::size_t t = 0; t < n; ++t) {
            out[t] = motion::project(motion::outer_mouth_ring(m[t].mouth, gt.topology), camera);
        }
        return out;
    };

    metrics::Report report;
    const auto gt_mouth = mouth_seq(gt.frames);
    const auto gt_rings = rings(gt.frames);
    double lmd = 0.0, lmdv = 0.0, ma = 0.0;
    for (const auto& p : preds) {
        lmd += metrics::lmd(mouth_seq(p), gt_mouth);
        if (n >= 2) {
            lmdv += metrics::lmd_v(mouth_seq(p), gt_mouth);
        }
        ma += metrics::mouth_iou(rings(p), gt_rings, opts.iou_grid, opts.iou_grid);
    }
    const double k = static_cast<double>(preds.size());
    report.values["lmd"] = lmd / k;
    if (n >= 2) {
        report.values["lmd_v"] = lmdv / k;
    }
    report.values["ma"] = ma / k;
    report.notes["frames"] = std::to_string(n);

    // TCM on the rendered frames of the first prediction.
    const fs::path frames_dir = pred_dirs.front() / "frames";
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", 0);
    if (n >= 2 && fs::exists(frames_dir / name)) {
        std::vector<Tensor> ref, gen;
        std::vector<metrics::FlowField> ref_flow, gen_flow;
        for (std::size_t t = 0; t < n; ++t) {
            std::snprintf(name, sizeof name, "%06zu.png", t);
            require(fs::exists(frames_dir / name), ErrorCode::MissingStream, "missing frame " + (frames_dir / name).string());
            gen.push_back(io::image_to_tensor(io::read_png(frames_dir / name)));
            ref.push_back(gt.load_frame(t));
        }
        if (same_shape(ref.front(), gen.front())) {
            const std::size_t h = ref.front().dim(1), w = ref.front().dim(2);
            for (std::size_t t = 1; t < n; ++t) {
                std::snprintf(name, sizeof name, "%06zu.bin", t);
                ref_flow.push_back(opts.gt_flow_dir.empty() ? metrics::FlowField::zero(w, h)
                                                            : metrics::read_flow(opts.gt_flow_dir / name));
                gen_flow.push_back(opts.pred_flow_dir.empty() ? metrics::FlowField::zero(w, h)
                                                              : metrics::read_flow(opts.pred_flow_dir / name));
            }
            report.values["tcm"] = metrics::tcm(ref, gen, ref_flow, gen_flow);
            report.notes["tcm_flow"] = opts.gt_flow_dir.empty() || opts.pred_flow_dir.empty() ? "zero" : "files";
        } else {
            report.notes["tcm"] = "skipped: rendered frames differ in size from the ground truth";
        }
    } else {
        report.notes["tcm"] = "skipped: no rendered frames";
    }

    if (preds.size() >= 2) {
        std::vector<metrics::PointSequence> samples;
        for (const auto& p : preds) {
            metrics::PointSequence s(n);
            for (std::size_t t = 0; t < n; ++t) {
                s[t] = p[t].mouth.points();
                for (const auto& v : p[t].eyes.points()) {
                    s[t].push_back(v);
                }
                for (const auto& v : p[t].torso.points()) {
                    s[t].push_back(v);
                }
                const auto& r = p[t].pose.rotation;
                const auto& tr = p[t].pose.translation;
                s[t].push_back({r[0], r[1], r[2]});
                s[t].push_back({tr[0], tr[1], tr[2]});
            }
            samples.push_back(std::move(s));
        }
        report.values["diversity"] = metrics::diversity(samples);
    } else {
        report.notes["diversity"] = "skipped: needs two or more predictions";
    }

    if (!opts.external_scores.empty()) {
        const Json ext = io::read_json(opts.external_scores);
        require(ext.is_object(), ErrorCode::FormatError, opts.external_scores.string() + " must hold a JSON object");
        for (const auto& [key, v] : ext.items()) {
            require(v.is_number(), ErrorCode::FormatError, "external score '" + key + "' is not a number");
            report.values[key] = v.get<double>();
        }
    }
    return report;
}

}  // namespace moda::pipeline

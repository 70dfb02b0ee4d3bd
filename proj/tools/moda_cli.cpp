// moda: command-line driver for preprocessing, training, inference and evaluation.

#include "moda/io.hpp"
#include "moda/pipeline.hpp"
#include "moda/synthetic.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace moda;
using namespace moda::pipeline;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct ConfigFlags {
    std::string preset = "desk";
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> window;
    std::optional<std::size_t> stride;

    void attach(CLI::App* app) {
        app->add_option("--preset", preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));
        app->add_option("--config", config, "JSON config with per-stage sections");
        app->add_option("--seed", seed, "Random seed");
        app->add_option("--window", window, "Sliding-window length in frames");
        app->add_option("--stride", stride, "Sliding-window stride in frames");
    }

    // Preset, then the config file (or the fallback written next to a run),
    // then explicit flags.
    PipelineConfig resolve(const fs::path& fallback = {}) const {
        PipelineConfig cfg = PipelineConfig::preset(preset);
        if (!config.empty()) {
            cfg = PipelineConfig::load(config, cfg);
        } else if (!fallback.empty() && fs::exists(fallback)) {
            cfg = PipelineConfig::load(fallback, cfg);
        }
        if (seed) {
            cfg.seed = *seed;
        }
        if (window) {
            cfg.window = *window;
        }
        if (stride) {
            cfg.stride = *stride;
        }
        cfg.validate();
        return cfg;
    }
};

fs::path cache_dir() {
    const char* env = std::getenv("MODA_CACHE");
    return env != nullptr ? fs::path(env) : fs::path();
}

int exit_code(const Error& e) {
    switch (e.code()) {
        case ErrorCode::ConfigError:
            return kConfig;
        case ErrorCode::NonFiniteLoss:
            return kNumeric;
        default:
            return kData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audio-driven talking portrait pipeline"};
    app.require_subcommand(1);

    // synth-clip
    auto* synth_cmd = app.add_subcommand("synth-clip", "Write a procedural talking-head clip");
    fs::path synth_out;
    synth::ClipSpec spec;
    synth_cmd->add_option("--out", synth_out, "Clip directory")->required();
    synth_cmd->add_option("--frames", spec.frames, "Frame count");
    synth_cmd->add_option("--size", spec.width, "Frame width and height");
    synth_cmd->add_option("--seed", spec.seed, "Random seed");

    // preprocess
    auto* prep_cmd = app.add_subcommand("preprocess", "Build a processed dataset from a clip directory");
    fs::path prep_clip, prep_out, prep_features;
    prep::DatasetOptions prep_opts;
    prep_cmd->add_option("--clip", prep_clip, "Clip directory")->required();
    prep_cmd->add_option("--out", prep_out, "Output directory")->required();
    prep_cmd->add_option("--features", prep_features, "Precomputed audio features (.bin with .json manifest)");
    prep_cmd->add_option("--val-fraction", prep_opts.val_fraction, "Validation fraction");
    prep_cmd->add_option("--split-seed", prep_opts.split_seed, "Seed of the validation block offset");
    prep_cmd->add_option("--fps", prep_opts.fps, "Video frame rate");
    prep_cmd->add_option("--n-mels", prep_opts.n_mels, "Filterbank size");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train one stage or all three");
    ConfigFlags train_flags;
    train_flags.attach(train_cmd);
    fs::path train_data, train_out;
    std::string train_stage = "all";
    std::size_t train_steps = 0;
    bool train_resume = false;
    train_cmd->add_option("--data", train_data, "Processed dataset")->required();
    train_cmd->add_option("--out", train_out, "Run directory")->required();
    train_cmd->add_option("--stage", train_stage, "moda, faco, renderer or all")
        ->check(CLI::IsMember({"moda", "faco", "renderer", "all"}));
    train_cmd->add_option("--steps", train_steps, "Override the schedule length");
    train_cmd->add_flag("--resume", train_resume, "Continue from the last checkpoint");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Generate motion and frames from audio");
    ConfigFlags infer_flags;
    infer_flags.attach(infer_cmd);
    fs::path infer_audio, infer_data, infer_ckpt, infer_out;
    std::string infer_mode = "sample";
    bool infer_no_render = false;
    infer_cmd->add_option("--audio", infer_audio, "16-bit PCM wav")->required();
    infer_cmd->add_option("--data", infer_data, "Processed dataset of the subject")->required();
    infer_cmd->add_option("--ckpt", infer_ckpt, "Run directory holding checkpoints/")->required();
    infer_cmd->add_option("--out", infer_out, "Output directory")->required();
    infer_cmd->add_option("--mode", infer_mode, "sample or mean")->check(CLI::IsMember({"sample", "mean"}));
    infer_cmd->add_flag("--no-render", infer_no_render, "Write the motion dump only");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against a processed dataset");
    std::vector<fs::path> eval_pred;
    fs::path eval_data, eval_out;
    EvaluateOptions eval_opts;
    eval_cmd->add_option("--pred", eval_pred, "Inference output directories")->required();
    eval_cmd->add_option("--data", eval_data, "Ground-truth processed dataset")->required();
    eval_cmd->add_option("--out", eval_out, "Report directory")->required();
    eval_cmd->add_option("--pred-flow", eval_opts.pred_flow_dir, "Flow files for the predicted frames");
    eval_cmd->add_option("--gt-flow", eval_opts.gt_flow_dir, "Flow files for the ground-truth frames");
    eval_cmd->add_option("--external", eval_opts.external_scores, "JSON object of external scores");

    // inspect-checkpoint
    auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "Print a checkpoint manifest and its tensors");
    fs::path inspect_dir;
    inspect_cmd->add_option("dir", inspect_dir, "Checkpoint directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (synth_cmd->parsed()) {
            spec.height = spec.width;
            synth::write_clip(synth::generate_clip(spec), synth_out);
            std::printf("wrote %zu frames to %s\n", spec.frames, synth_out.c_str());
        } else if (prep_cmd->parsed()) {
            prep_opts.feature_file = prep_features;
            const auto data = prep::build_dataset(prep_clip, prep_opts);
            data.save(prep_out);
            std::printf("%zu frames, %zu train, validation [%zu, %zu)\n", data.size(), data.train_indices().size(),
                        data.val_begin, data.val_end);
        } else if (train_cmd->parsed()) {
            const auto cfg = train_flags.resolve();
            const auto data = prep::Dataset::load(train_data);
            fs::create_directories(train_out);
            io::write_json(train_out / "config.json", cfg.to_json());
            std::vector<Stage> stages;
            if (train_stage == "all") {
                stages.assign(std::begin(kStages), std::end(kStages));
            } else {
                stages.push_back(parse_stage(train_stage));
            }
            for (Stage s : stages) {
                TrainOptions opts;
                opts.resume = train_resume;
                opts.steps = train_steps;
                const auto t0 = std::chrono::steady_clock::now();
                opts.progress = [&](std::int64_t step, double loss) {
                    if (step % 50 == 0) {
                        const double secs =
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                        std::fprintf(stderr, "[%s] step %lld  loss %.6g  %.1fs\n", to_string(s).c_str(),
                                     static_cast<long long>(step), loss, secs);
                    }
                };
                const auto r = train(s, data, cfg, train_out, opts);
                std::printf("%s: steps %lld..%lld, best val %.6g, last val %.6g\n", to_string(s).c_str(),
                            static_cast<long long>(r.first_step), static_cast<long long>(r.last_step), r.best_val,
                            r.last_val);
            }
        } else if (infer_cmd->parsed()) {
            const auto cfg = infer_flags.resolve(infer_ckpt / "config.json");
            const auto data = prep::Dataset::load(infer_data);
            InferOptions opts;
            opts.seed = cfg.seed;
            opts.mode = infer_mode == "sample" ? SampleMode::Sample : SampleMode::Mean;
            opts.render_frames = !infer_no_render;
            opts.cache_dir = cache_dir();
            const auto r = infer(infer_audio, data, infer_ckpt, cfg, infer_out, opts);
            std::printf("%zu frames in %zu windows -> %s\n", r.frames, r.windows.size(), infer_out.c_str());
        } else if (eval_cmd->parsed()) {
            const auto data = prep::Dataset::load(eval_data);
            const auto report = evaluate(eval_pred, data, eval_opts);
            fs::create_directories(eval_out);
            report.write(eval_out / "metrics.json", eval_out / "metrics.txt");
            std::cout << report.to_text();
        } else if (inspect_cmd->parsed()) {
            const auto m = read_manifest(inspect_dir);
            std::printf("stage        %s\nstep         %lld\nconfig hash  %s\n", to_string(m.stage).c_str(),
                        static_cast<long long>(m.step), m.config_hash.c_str());
            for (const auto& [k, v] : m.metrics) {
                std::printf("metric       %-10s %.6g\n", k.c_str(), v);
            }
            std::size_t total = 0;
            for (const char* file : {"params.bin", "disc.bin"}) {
                if (!fs::exists(inspect_dir / file)) {
                    continue;
                }
                std::printf("%s\n", file);
                for (const auto& [name, t] : nn::read_tensor_archive(inspect_dir / file)) {
                    std::printf("  %-40s %s\n", name.c_str(), shape_string(t.shape()).c_str());
                    total += t.size();
                }
            }
            std::printf("parameters   %zu\n", total);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kData;
    }
    return kOk;
}

#pragma once

#include "moda/faconet.hpp"
#include "moda/metrics.hpp"
#include "moda/modanet.hpp"
#include "moda/preprocess.hpp"
#include "moda/renderer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace moda::pipeline {

using Json = nlohmann::json;

enum class Stage { Moda, Faco, Renderer };

std::string to_string(Stage stage);
// "moda", "faco" or "renderer"; anything else throws ConfigError.
Stage parse_stage(const std::string& name);
inline constexpr Stage kStages[] = {Stage::Moda, Stage::Faco, Stage::Renderer};

struct StageSchedule {
    std::size_t epochs = 1;
    std::size_t batch = 1;
    // Overrides epochs when non-zero.
    std::size_t max_steps = 0;
    // Validation period in steps; 0 validates once per epoch.
    std::size_t val_every = 0;
    double lr = 1e-4;
    // "constant" or "cosine" (half-cosine from lr to 0 over the run).
    std::string decay = "constant";

    double lr_at(std::int64_t step, std::int64_t total) const;
};

struct PipelineConfig {
    modanet::ModaConfig moda;
    faco::FacoConfig faco;
    render::RendererConfig renderer;
    StageSchedule moda_schedule{200, 32};
    StageSchedule faco_schedule{300, 32};
    StageSchedule renderer_schedule{100, 4};
    double beta1 = 0.9;
    double beta2 = 0.99;
    std::size_t window = 300;
    std::size_t stride = 150;
    double fps = 25.0;
    std::size_t n_mels = 80;
    std::uint64_t seed = 0;

    void validate() const;

    const StageSchedule& schedule(Stage stage) const;
    StageSchedule& schedule(Stage stage);
    nn::AdamConfig adam(Stage stage) const;

    Json to_json() const;
    Json stage_json(Stage stage) const;
    // Overlays the keys present in j onto base; unknown keys throw ConfigError.
    static PipelineConfig from_json(const Json& j, const PipelineConfig& base);
    static PipelineConfig load(const std::filesystem::path& path, const PipelineConfig& base);
    // "paper" (full scale) or "desk" (64^2 renderer, d = 64, a few thousand steps).
    static PipelineConfig preset(const std::string& name);
};

// FNV-1a over the network section of a stage plus the optimiser betas; the
// schedule is excluded so a run can be extended with more steps.
std::string config_hash(const PipelineConfig& cfg, Stage stage);

// --- sliding windows ------------------------------------------------------------
using Window = std::pair<std::size_t, std::size_t>;

// Windows start on the stride grid; the last one is right-aligned to T.
// T <= window gives the single window (0, T).
std::vector<Window> sliding_windows(std::size_t total, std::size_t window = 300, std::size_t stride = 150);

// Linear crossfade over each overlap [s, e): the later window gets weight
// (t - s) / (e - s). Non-overlapped frames are copied.
modanet::MotionOutput blend_windows(const std::vector<modanet::MotionOutput>& parts, const std::vector<Window>& windows);

// --- checkpoints ------------------------------------------------------------------
struct Manifest {
    Stage stage = Stage::Moda;
    std::string config_hash;
    std::int64_t step = 0;
    Json cfg;
    std::map<std::string, double> metrics;
};

// {root}/checkpoints/{stage}/{best,last}
std::filesystem::path checkpoint_dir(const std::filesystem::path& root, Stage stage, const std::string& which);

void write_manifest(const std::filesystem::path& dir, const Manifest& m);
// Throws MissingCheckpoint when the directory or its manifest is absent.
Manifest read_manifest(const std::filesystem::path& dir);

// Network parameters of one stage, rebuilt from the config and filled from a
// checkpoint directory. Hash mismatches throw ConfigError.
modanet::ModaNet load_moda(const std::filesystem::path& dir, const PipelineConfig& cfg);
faco::FacoNet load_faco(const std::filesystem::path& dir, const PipelineConfig& cfg);
render::Renderer load_renderer(const std::filesystem::path& dir, const PipelineConfig& cfg);

// --- training ---------------------------------------------------------------------
struct TrainOptions {
    bool resume = false;
    // Overrides the schedule length when non-zero.
    std::size_t steps = 0;
    // Called after each logged step with (step, total loss).
    std::function<void(std::int64_t, double)> progress;
};

struct TrainResult {
    std::int64_t first_step = 0;
    std::int64_t last_step = 0;
    double best_val = 0.0;
    double last_val = 0.0;
    std::filesystem::path best;
    std::filesystem::path last;
};

// Trains one stage on a processed dataset, writing {out}/checkpoints/{stage}
// and {out}/logs/{stage}.csv. Throws DatasetEmpty or NonFiniteLoss.
TrainResult train(Stage stage, const prep::Dataset& data, const PipelineConfig& cfg, const std::filesystem::path& out,
                  const TrainOptions& opts = {});

// --- rendering inputs -------------------------------------------------------------
struct FrameInputs {
    Tensor condition;  // [16 x R x R]
    Tensor mask;       // [3 x R x R]
};

// Camera-space projection of a canonical frame at the renderer resolution.
// Torso points are stored normalised and are scaled by R.
FrameInputs frame_inputs(const motion::MotionRepresentation& frame, const motion::FaceTopology& topo,
                         const Tensor& reference, std::uint64_t t, const render::RendererConfig& cfg);

// Training targets of the renderer stage for the given frames.
render::RendererBatch renderer_batch(const prep::Dataset& data, const std::vector<std::size_t>& frames,
                                     const Tensor& reference, const render::RendererConfig& cfg);

// --- inference --------------------------------------------------------------------
enum class SampleMode { Sample, Mean };

struct InferOptions {
    std::uint64_t seed = 0;
    SampleMode mode = SampleMode::Sample;
    bool render_frames = true;
    // Directory for cached audio features; empty disables caching.
    std::filesystem::path cache_dir;
};

struct InferResult {
    std::size_t frames = 0;
    std::vector<Window> windows;
    std::vector<motion::MotionRepresentation> motion;
};

// Features for a wav file, read from or stored in cache_dir when set.
Tensor audio_features(const std::filesystem::path& wav, double fps, std::size_t n_mels,
                      const std::filesystem::path& cache_dir);

// Motion for a feature sequence: windowed MODA, blended, applied to the subject,
// with the face composed by FaCo-Net.
std::vector<motion::MotionRepresentation> generate_motion(const modanet::ModaNet& moda, const faco::FacoNet& faco,
                                                          const Tensor& audio, const motion::SubjectTemplate& subject,
                                                          const PipelineConfig& cfg, const InferOptions& opts,
                                                          std::vector<Window>* windows_out = nullptr);

// Writes {out}/frames/%06d.png, {out}/motion.bin and {out}/manifest.json.
// Reads the best checkpoint of every stage under ckpt_root.
InferResult infer(const std::filesystem::path& wav, const prep::Dataset& subject_data,
                  const std::filesystem::path& ckpt_root, const PipelineConfig& cfg, const std::filesystem::path& out,
                  const InferOptions& opts = {});

void write_motion(const std::filesystem::path& path, const std::vector<motion::MotionRepresentation>& motion);
std::vector<motion::MotionRepresentation> read_motion(const std::filesystem::path& path);

// --- evaluation -------------------------------------------------------------------
struct EvaluateOptions {
    // Flow files per prediction: {flow_dir}/%06d.bin for pairs (t-1, t).
    std::filesystem::path pred_flow_dir;
    std::filesystem::path gt_flow_dir;
    // JSON object of externally computed scores, e.g. {"sync": 4.2, "niqe": 6.1}.
    std::filesystem::path external_scores;
    std::size_t iou_grid = 256;
};

// pred_dirs hold infer outputs; diversity needs two or more. Missing motion
// dumps throw MissingStream.
metrics::Report evaluate(const std::vector<std::filesystem::path>& pred_dirs, const prep::Dataset& gt,
                         const EvaluateOptions& opts = {});

}  // namespace moda::pipeline

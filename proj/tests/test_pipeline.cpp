#include "doctest.h"

#include "moda/io.hpp"
#include "moda/pipeline.hpp"
#include "moda/synthetic.hpp"

#include <filesystem>

using namespace moda;
using namespace moda::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("moda_test_pipeline_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

PipelineConfig tiny_config() {
    PipelineConfig c = PipelineConfig::preset("desk");
    c.moda.d = 16;
    c.moda.d_l = 8;
    c.faco.d = 16;
    c.faco.disc_hidden = 16;
    c.renderer.channels = {4, 4, 4, 4, 4, 4};
    c.renderer.disc_channels = 4;
    c.renderer.perceptual_channels = {4, 4};
    c.window = 20;
    c.stride = 10;
    c.moda_schedule = {1, 2, 4, 2, 1e-3, "constant"};
    c.faco_schedule = {1, 4, 4, 2, 1e-3};
    c.renderer_schedule = {1, 1, 4, 2, 1e-3};
    c.validate();
    return c;
}

const prep::Dataset& shared_dataset() {
    static const prep::Dataset data = [] {
        synth::ClipSpec spec;
        spec.frames = 50;
        spec.seed = 3;
        const fs::path dir = scratch("clip");
        synth::write_clip(synth::generate_clip(spec), dir);
        prep::DatasetOptions opts;
        opts.split_seed = 1;
        return prep::build_dataset(dir, opts);
    }();
    return data;
}

modanet::MotionOutput constant_output(std::size_t frames, double v) {
    auto m = modanet::MotionOutput::zeros(frames);
    for (Tensor* t : {&m.mouth, &m.pose, &m.eyes, &m.torso}) {
        for (auto& x : t->data()) {
            x = v;
        }
    }
    return m;
}

}  // namespace

TEST_CASE("sliding_windows: examples") {
    CHECK(sliding_windows(300) == std::vector<Window>{{0, 300}});
    CHECK(sliding_windows(450) == std::vector<Window>{{0, 300}, {150, 450}});
    CHECK(sliding_windows(200) == std::vector<Window>{{0, 200}});
    CHECK(sliding_windows(500) == std::vector<Window>{{0, 300}, {150, 450}, {200, 500}});
    CHECK(sliding_windows(1) == std::vector<Window>{{0, 1}});
    CHECK_THROWS_AS(sliding_windows(10, 5, 6), Error);
}

TEST_CASE("sliding_windows: cover law for T in [1, 10000]") {
    for (const auto& [window, stride] : {std::pair<std::size_t, std::size_t>{300, 150}, {7, 3}, {5, 5}}) {
        for (std::size_t t = 1; t <= 10000; ++t) {
            const auto w = sliding_windows(t, window, stride);
            bool ok = !w.empty() && w.front().first == 0 && w.back().second == t;
            for (std::size_t k = 0; k < w.size() && ok; ++k) {
                ok = w[k].second - w[k].first == std::min(window, t);
                if (k > 0) {
                    ok = ok && w[k].first > w[k - 1].first && w[k].first <= w[k - 1].second;
                }
            }
            if (!ok) {
                FAIL("cover law broken at T = " << t << ", window " << window);
            }
        }
    }
}

TEST_CASE("blend_windows: identity, identical overlaps, midpoint mean") {
    const auto single = constant_output(30, 0.25);
    CHECK(blend_windows({single}, {{0, 30}}).mouth.storage() == single.mouth.storage());

    const auto a = constant_output(300, 1.0);
    const auto same = blend_windows({a, a}, sliding_windows(450));
    for (double v : same.torso.storage()) {
        REQUIRE(v == 1.0);
    }

    const auto b = constant_output(300, 3.0);
    const auto mixed = blend_windows({a, b}, sliding_windows(450));
    const std::size_t w = modanet::kPoseWidth;
    CHECK(mixed.pose[149 * w] == 1.0);
    CHECK(mixed.pose[150 * w] == 1.0);
    CHECK(mixed.pose[225 * w] == 2.0);
    CHECK(mixed.pose[300 * w] == 3.0);
    CHECK(mixed.pose[449 * w] == 3.0);
    // Weight of the later window ramps linearly across the overlap.
    CHECK(mixed.pose[180 * w] == doctest::Approx(1.0 + 2.0 * 30.0 / 150.0));

    CHECK_THROWS_WITH_AS(blend_windows({a}, sliding_windows(450)), doctest::Contains("InconsistentWindows"), Error);
    CHECK_THROWS_WITH_AS(blend_windows({a, constant_output(200, 0)}, sliding_windows(450)),
                         doctest::Contains("InconsistentWindows"), Error);
    CHECK_THROWS_WITH_AS(blend_windows({a, a}, {{0, 300}, {301, 601}}), doctest::Contains("InconsistentWindows"),
                         Error);
}

TEST_CASE("config: presets, json round trip, overrides and hash") {
    const auto paper = PipelineConfig::preset("paper");
    CHECK(paper.moda_schedule.epochs == 200);
    CHECK(paper.faco_schedule.epochs == 300);
    CHECK(paper.renderer_schedule.epochs == 100);
    CHECK(paper.moda_schedule.batch == 32);
    CHECK(paper.renderer_schedule.batch == 4);
    CHECK(paper.renderer.resolution == 256);
    CHECK(paper.adam(Stage::Faco).lr == 1e-4);
    CHECK(paper.adam(Stage::Faco).beta2 == 0.99);
    const auto desk = PipelineConfig::preset("desk");
    CHECK(desk.renderer.resolution == 64);
    CHECK(desk.moda.d == 64);
    CHECK_THROWS_WITH_AS(PipelineConfig::preset("laptop"), doctest::Contains("ConfigError"), Error);

    const auto back = PipelineConfig::from_json(desk.to_json(), paper);
    CHECK(back.to_json() == desk.to_json());

    const auto over = PipelineConfig::from_json(
        io::Json::parse(R"({"seed": 9, "moda": {"schedule": {"lr": 0.005}}, "renderer": {"net": {"gan_weight": 0}}})"),
        desk);
    CHECK(over.seed == 9);
    CHECK(over.moda_schedule.lr == 0.005);
    CHECK(over.renderer.gan_weight == 0.0);
    CHECK(over.moda.d == 64);

    CHECK_THROWS_WITH_AS(PipelineConfig::from_json(io::Json::parse(R"({"moda": {"net": {"dd": 3}}})"), desk),
                         doctest::Contains("unknown key 'dd'"), Error);
    CHECK_THROWS_WITH_AS(PipelineConfig::from_json(io::Json::parse(R"({"faco": {"schedule": {"lr": -1}}})"), desk),
                         doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_WITH_AS(PipelineConfig::from_json(io::Json::parse(R"({"window": 10, "stride": 20})"), desk),
                         doctest::Contains("ConfigError"), Error);

    auto longer = desk;
    longer.moda_schedule.max_steps = 99;
    CHECK(config_hash(longer, Stage::Moda) == config_hash(desk, Stage::Moda));
    auto wider = desk;
    wider.moda.d = 32;
    CHECK(config_hash(wider, Stage::Moda) != config_hash(desk, Stage::Moda));
    CHECK(config_hash(wider, Stage::Faco) == config_hash(desk, Stage::Faco));
}

TEST_CASE("checkpoint round trip gives bit-identical forward passes") {
    const auto cfg = tiny_config();
    const fs::path dir = scratch("ckpt");
    CHECK_THROWS_WITH_AS(load_moda(dir, cfg), doctest::Contains("MissingCheckpoint"), Error);

    modanet::ModaNet net(cfg.moda, 77);
    write_manifest(dir, {Stage::Moda, config_hash(cfg, Stage::Moda), 12, cfg.stage_json(Stage::Moda), {}});
    net.params().save(dir / "params.bin");
    const auto loaded = load_moda(dir, cfg);

    const auto& data = shared_dataset();
    Tensor audio({10, cfg.n_mels});
    std::copy(data.audio.storage().begin(), data.audio.storage().begin() + 10 * 80, audio.storage().begin());
    const auto a = net.forward(audio, data.subject.face, modanet::Mode::Sample, 5).motion.values();
    const auto b = loaded.forward(audio, data.subject.face, modanet::Mode::Sample, 5).motion.values();
    CHECK(a.mouth.storage() == b.mouth.storage());
    CHECK(a.pose.storage() == b.pose.storage());
    CHECK(a.torso.storage() == b.torso.storage());

    auto other = cfg;
    other.moda.d = 8;
    CHECK_THROWS_WITH_AS(load_moda(dir, other), doctest::Contains("config hash"), Error);
    CHECK_THROWS_WITH_AS(load_faco(dir, cfg), doctest::Contains("ConfigError"), Error);
    fs::remove_all(dir);
}

TEST_CASE("train, resume, infer and evaluate on a toy clip") {
    const auto cfg = tiny_config();
    const auto& data = shared_dataset();
    const fs::path out = scratch("run");

    for (Stage s : kStages) {
        const auto r = train(s, data, cfg, out);
        CHECK(r.first_step == 0);
        CHECK(r.last_step == 4);
        CHECK(fs::exists(r.best / "manifest.json"));
        CHECK(fs::exists(r.last / "params.bin"));
        CHECK(fs::exists(out / "logs" / (to_string(s) + ".csv")));
        const auto best = read_manifest(r.best);
        const auto last = read_manifest(r.last);
        CHECK(last.step == 4);
        CHECK(best.metrics.at("val") <= last.metrics.at("val"));
        CHECK(best.config_hash == config_hash(cfg, s));
    }

    TrainOptions more;
    more.resume = true;
    more.steps = 6;
    const auto resumed = train(Stage::Moda, data, cfg, out, more);
    CHECK(resumed.first_step == 4);
    CHECK(resumed.last_step == 6);
    CHECK(read_manifest(resumed.last).step == 6);
    CHECK(read_manifest(resumed.best).metrics.at("val") <= read_manifest(resumed.last).metrics.at("val"));

    const fs::path wav = data.clip_dir / "audio.wav";
    InferOptions opts;
    opts.seed = 4;
    const auto r1 = infer(wav, data, out, cfg, out / "pred1", opts);
    const auto r2 = infer(wav, data, out, cfg, out / "pred2", opts);
    CHECK(r1.frames == 50);
    CHECK(r1.windows.size() == 4);
    CHECK(fs::exists(out / "pred1" / "frames" / "000049.png"));
    CHECK(io::read_file(out / "pred1" / "motion.bin") == io::read_file(out / "pred2" / "motion.bin"));
    CHECK(io::read_file(out / "pred1" / "frames" / "000017.png") == io::read_file(out / "pred2" / "frames" / "000017.png"));
    CHECK(read_motion(out / "pred1" / "motion.bin")[3].pose == r1.motion[3].pose);

    opts.seed = 5;
    opts.render_frames = false;
    const auto r3 = infer(wav, data, out, cfg, out / "pred3", opts);
    CHECK(r3.motion[10].pose != r1.motion[10].pose);

    opts.mode = SampleMode::Mean;
    const auto m1 = infer(wav, data, out, cfg, out / "mean1", opts);
    opts.seed = 6;
    const auto m2 = infer(wav, data, out, cfg, out / "mean2", opts);
    CHECK(m1.motion[10].pose == m2.motion[10].pose);

    EvaluateOptions eo;
    const auto report = evaluate({out / "pred1", out / "pred3"}, data, eo);
    CHECK(report.values.count("lmd") == 1);
    CHECK(report.values.count("lmd_v") == 1);
    CHECK(report.values.at("ma") >= 0.0);
    CHECK(report.values.at("ma") <= 1.0);
    CHECK(report.values.count("tcm") == 1);
    CHECK(report.values.at("diversity") > 0.0);

    io::write_json(out / "external.json", {{"sync", 4.2}});
    eo.external_scores = out / "external.json";
    CHECK(evaluate({out / "mean1", out / "mean2"}, data, eo).values.at("sync") == 4.2);
    CHECK(evaluate({out / "mean1", out / "mean2"}, data, {}).values.at("diversity") == 0.0);

    fs::create_directories(out / "empty");
    CHECK_THROWS_WITH_AS(evaluate({out / "empty"}, data, {}), doctest::Contains("MissingStream"), Error);

    const fs::path bare = scratch("bare");
    CHECK_THROWS_WITH_AS(infer(wav, data, bare, cfg, bare / "p", {}), doctest::Contains("MissingCheckpoint"), Error);
    fs::remove_all(bare);
    fs::remove_all(out);
}

TEST_CASE("feature cache is reused") {
    const auto& data = shared_dataset();
    const fs::path cache = scratch("cache");
    const auto a = audio_features(data.clip_dir / "audio.wav", 25.0, 80, cache);
    CHECK(std::distance(fs::directory_iterator(cache), fs::directory_iterator{}) >= 1);
    const auto b = audio_features(data.clip_dir / "audio.wav", 25.0, 80, cache);
    CHECK(a.dim(0) == 50);
    CHECK(a.storage() == b.storage());
    fs::remove_all(cache);
}

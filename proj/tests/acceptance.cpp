// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "gradcheck.hpp"

#include "moda/io.hpp"
#include "moda/metrics.hpp"
#include "moda/pipeline.hpp"
#include "moda/raster.hpp"
#include "moda/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

using namespace moda;
using ad::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run(int id, const char* name, double budget_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget_s) {
        o.pass = false;
        o.detail += " [over time budget]";
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s  %2d  %-22s %8.2fs / %5.0fs  %s\n", o.pass ? "PASS" : "FAIL", id, name, secs, budget_s,
                o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("moda_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

prep::Dataset synthetic_dataset(const std::string& name, std::size_t frames, std::uint64_t seed, double val_fraction) {
    synth::ClipSpec spec;
    spec.frames = frames;
    spec.seed = seed;
    const fs::path dir = scratch(name);
    synth::write_clip(synth::generate_clip(spec), dir);
    prep::DatasetOptions opts;
    opts.val_fraction = val_fraction;
    return prep::build_dataset(dir, opts);
}

std::vector<Var> with_prefix(const nn::ParamStore& store, const std::string& prefix) {
    std::vector<Var> out;
    for (const auto& name : store.names()) {
        if (name.rfind(prefix, 0) == 0) {
            out.push_back(store.get(name));
        }
    }
    return out;
}

// --- 1 ---------------------------------------------------------------------------
Outcome masks() {
    const double inf = std::numeric_limits<double>::infinity();
    std::size_t checked = 0;
    for (std::size_t t = 1; t <= 16; ++t) {
        const Tensor ma = modanet::alignment_bias(t);
        for (double q : {1.0, 0.5, 0.3, 2.0, 0.1}) {
            const Tensor mt = modanet::causal_bias(t, q);
            for (std::size_t i = 1; i <= t; ++i) {
                for (std::size_t j = 1; j <= t; ++j) {
                    const double want_a = i == j ? 0.0 : -inf;
                    const double want_t = j <= i ? std::floor(static_cast<double>(i - j) * q) : -inf;
                    if (ma.at(i - 1, j - 1) != want_a || mt.at(i - 1, j - 1) != want_t) {
                        return {false, "mismatch at T=" + std::to_string(t) + " (" + std::to_string(i) + "," +
                                           std::to_string(j) + ")"};
                    }
                    ++checked;
                }
            }
        }
        const Tensor scores = testing::random_tensor({t, t}, 100 + t, 10.0);
        const Tensor w = ad::softmax_rows(Var::constant(scores), ma).value();
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < t; ++j) {
                if (w.at(i, j) != (i == j ? 1.0 : 0.0)) {
                    return {false, "softmax row " + std::to_string(i) + " not one-hot at T=" + std::to_string(t)};
                }
            }
        }
    }
    return {true, std::to_string(checked) + " entries, one-hot rows for T = 1..16"};
}

// --- 2 ---------------------------------------------------------------------------
Outcome causality() {
    modanet::ModaConfig cfg;
    cfg.audio_dim = 8;
    cfg.d = 16;
    cfg.d_l = 8;
    modanet::ModaNet net(cfg, 21);
    std::mt19937_64 rng(22);
    std::normal_distribution<double> noise(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t frames = 2 + rng() % 40;
        const std::size_t t = rng() % (frames - 1);
        Tensor s = testing::random_tensor({frames, cfg.d}, rng());
        const Tensor before = net.gamma(Var::constant(s)).value();
        for (std::size_t r = t + 1; r < frames; ++r) {
            for (std::size_t c = 0; c < cfg.d; ++c) {
                s.at(r, c) += noise(rng);
            }
        }
        const Tensor after = net.gamma(Var::constant(s)).value();
        for (std::size_t r = 0; r <= t; ++r) {
            for (std::size_t c = 0; c < cfg.d; ++c) {
                if (before.at(r, c) != after.at(r, c)) {
                    return {false, "trial " + std::to_string(trial) + ": row " + std::to_string(r) + " changed"};
                }
            }
        }
    }
    return {true, "100 trials bit-identical"};
}

// --- 3 ---------------------------------------------------------------------------
Outcome kld() {
    const Var zero = Var::constant(Tensor({1, 32}, 0.0));
    if (modanet::loss_kld({zero, zero}).item() != 0.0) {
        return {false, "KLD(0, 0) != 0"};
    }
    std::mt19937_64 rng(31);
    std::normal_distribution<double> dist(0.0, 1.5);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t dl = 1 + rng() % 32;
        Tensor m({1, dl}), lv({1, dl});
        double kl = 0.0;
        for (std::size_t i = 0; i < dl; ++i) {
            m[i] = dist(rng);
            lv[i] = dist(rng);
            // KL(N(m, v) || N(0, 1)) per latent dimension, averaged.
            const double v = std::exp(lv[i]);
            kl += 0.5 * (v + m[i] * m[i] - 1.0 - lv[i]);
        }
        kl /= static_cast<double>(dl);
        worst = std::max(worst, std::abs(modanet::loss_kld({Var::constant(m), Var::constant(lv)}).item() - kl));
    }
    return {worst < 1e-6, "max |err| " + fmt("%.2e", worst) + " over 1000 pairs"};
}

// --- 4 ---------------------------------------------------------------------------
Outcome gradients() {
    const double tol = 1e-4;
    double worst = 0.0;
    std::string where;
    auto note = [&](const std::string& name, const testing::GradCheckResult& r) {
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            where = name + " (" + r.worst + ")";
        }
    };

    modanet::ModaConfig mc;
    mc.audio_dim = 6;
    mc.d = 8;
    mc.d_l = 4;
    mc.ppe_period = 5;
    modanet::ModaNet moda(mc, 41);
    const Tensor audio = testing::random_tensor({4, 6}, 42);
    const motion::FacePoints face(testing::random_tensor({motion::FacePoints::kFlatSize}, 43, 0.3).storage());
    const modanet::MotionOutput gt{testing::random_tensor({4, modanet::kMouthWidth}, 44),
                                   testing::random_tensor({4, modanet::kPoseWidth}, 45),
                                   testing::random_tensor({4, modanet::kEyeWidth}, 46),
                                   testing::random_tensor({4, modanet::kTorsoWidth}, 47)};
    auto moda_loss = [&] {
        const auto fwd = moda.forward(audio, face, modanet::Mode::Train, 5);
        return modanet::loss_total(fwd.motion, gt, fwd.moments, {1, 1, 1, 1});
    };
    for (const char* p : {"tail_", "audio_enc", "subject_enc", "vae_enc", "vae_mu", "vae_logsigma", "vae_latent",
                          "vae_dec"}) {
        // Some decoder gradients are near 1e-6, where a 1e-5 step is dominated by cancellation.
        note(std::string("moda.") + p, testing::grad_check(moda_loss, with_prefix(moda.params(), p), 8, 1e-4));
    }
    // Under the hard alignment bias the specific branch ignores its query path;
    // a zero bias exercises the attention projections.
    auto attn_loss = [&] {
        const Var sa = moda.encode_audio(Var::constant(audio));
        const Var s = modanet::combine(sa, moda.encode_subject(face));
        return ad::mean(ad::square(moda.specific_attention(sa, s, Tensor({4, 4}, 0.0), nullptr)));
    };
    for (const char* p : {"gamma", "spec"}) {
        note(std::string("moda.") + p, testing::grad_check(attn_loss, with_prefix(moda.params(), p), 8, 1e-5));
    }

    faco::FacoConfig fc;
    fc.d = 8;
    fc.disc_hidden = 8;
    faco::FacoNet fnet(fc, 48);
    const Tensor subj = testing::random_tensor({2, faco::kFaceWidth}, 49, 0.5);
    const Tensor mouth = testing::random_tensor({2, faco::kMouthWidth}, 50, 0.5);
    const Tensor eyes = testing::random_tensor({2, faco::kEyeWidth}, 51, 0.5);
    const Tensor target = testing::random_tensor({2, faco::kFaceWidth}, 52, 0.5);
    auto gen_loss = [&] {
        const Var fake = fnet.compose(Var::constant(subj), Var::constant(mouth), Var::constant(eyes));
        return faco::loss_gen(fnet.discriminate(fake), fake, target, 10.0);
    };
    note("faco.generator", testing::grad_check(gen_loss, fnet.generator().all(), 6, 1e-5));
    auto disc_loss = [&] {
        return faco::loss_disc(fnet.discriminate(Var::constant(target)), fnet.discriminate(Var::constant(subj)));
    };
    note("faco.discriminator", testing::grad_check(disc_loss, fnet.discriminator().all(), 8, 1e-5));

    render::RendererConfig rc;
    rc.resolution = 64;
    rc.channels = {4, 4, 4, 4, 4, 4};
    rc.disc_channels = 4;
    rc.perceptual_channels = {4, 4};
    render::Renderer r(rc, 53);
    const Var cond = Var::constant(testing::random_tensor({1, 16, 64, 64}, 54));
    const Tensor img_target = testing::random_tensor({1, 3, 64, 64}, 55, 0.5);
    auto render_loss = [&] {
        const Var fake = r.generate(cond);
        Var l = ad::mean_square(ad::sub(fake, Var::constant(img_target)));
        for (const auto& s : r.discriminate(fake, cond).scores) {
            l = ad::add(l, ad::mean_square(ad::add_scalar(s, -1.0)));
        }
        return l;
    };
    note("renderer.generator", testing::grad_check(render_loss, r.generator().all(), 3, 1e-6, 1e-4));
    auto critic_loss = [&] {
        const auto real = r.discriminate(Var::constant(img_target), cond);
        const auto fake = r.discriminate(ad::detach(r.generate(cond)), cond);
        return render::discriminator_loss(real.scores, fake.scores);
    };
    note("renderer.discriminator", testing::grad_check(critic_loss, r.discriminator().all(), 4, 1e-5));
    const Tensor small_target = testing::random_tensor({1, 3, 8, 8}, 56, 0.5);
    const Tensor small_mask({1, 3, 8, 8}, 1.0);
    Var image = Var::parameter(testing::random_tensor({1, 3, 8, 8}, 57, 0.5));
    Var score = Var::parameter(testing::random_tensor({1, 1, 2, 2}, 58));
    Var feat = Var::parameter(testing::random_tensor({1, 2, 4, 4}, 59));
    const Var feat_real = Var::constant(testing::random_tensor({1, 2, 4, 4}, 60));
    auto objective = [&] {
        return render::renderer_losses(image, small_target, small_mask, {score}, {{feat}}, {{feat_real}},
                                       r.perceptual().features(image),
                                       r.perceptual().features(Var::constant(small_target)), rc)
            .total;
    };
    note("renderer.losses", testing::grad_check(objective, {image, score, feat}, 24, 1e-7));

    return {worst < tol, "max rel error " + fmt("%.2e", worst) + (worst < tol ? "" : " at " + where)};
}

// --- 5 ---------------------------------------------------------------------------
Outcome overfit(const fs::path& run_dir) {
    std::ostringstream detail;
    bool ok = true;
    const auto desk = pipeline::PipelineConfig::preset("desk");

    const auto clip50 = synthetic_dataset("clip50", 50, 61, 0.0);
    const auto m = pipeline::train(pipeline::Stage::Moda, clip50, desk, run_dir);
    const double tp = pipeline::read_manifest(m.last).metrics.at("val_tp");
    ok = ok && tp < 1e-2;
    detail << "MODA L_TP " << fmt("%.2e", tp) << " @" << m.last_step;

    const auto clip10 = synthetic_dataset("clip10", 10, 62, 0.0);
    const auto f = pipeline::train(pipeline::Stage::Faco, clip10, desk, run_dir);
    const double err = pipeline::read_manifest(f.last).metrics.at("val");
    ok = ok && err < 1e-2;
    detail << "; FaCo err " << fmt("%.2e", err) << " @" << f.last_step;

    const auto clip20 = synthetic_dataset("clip20", 20, 63, 0.0);
    pipeline::TrainOptions ro;
    ro.steps = 600;
    const auto r = pipeline::train(pipeline::Stage::Renderer, clip20, desk, run_dir, ro);
    const double psnr = pipeline::read_manifest(r.last).metrics.at("psnr");
    ok = ok && psnr > 30.0;
    detail << "; renderer PSNR " << fmt("%.2f", psnr) << " dB @" << r.last_step;
    return {ok, detail.str()};
}

// --- 6 ---------------------------------------------------------------------------
Outcome diversity(const fs::path& run_dir) {
    const auto desk = pipeline::PipelineConfig::preset("desk");
    const auto data = synthetic_dataset("clip_div", 50, 64, 0.0);
    const auto moda = pipeline::load_moda(pipeline::checkpoint_dir(run_dir, pipeline::Stage::Moda, "last"), desk);
    auto samples = [&](modanet::Mode mode) {
        std::vector<metrics::PointSequence> out;
        for (std::uint64_t seed = 0; seed < 16; ++seed) {
            const auto mo = moda.forward(data.audio, data.subject.face, mode, 1000 + seed).motion.values();
            const auto frames = modanet::apply_to_template(mo, data.subject);
            metrics::PointSequence s;
            for (const auto& fr : frames) {
                auto pts = fr.mouth.points();
                for (const auto& p : fr.eyes.points()) {
                    pts.push_back(p);
                }
                for (const auto& p : fr.torso.points()) {
                    pts.push_back(p);
                }
                pts.push_back({fr.pose.rotation[0], fr.pose.rotation[1], fr.pose.rotation[2]});
                pts.push_back({fr.pose.translation[0], fr.pose.translation[1], fr.pose.translation[2]});
                s.push_back(std::move(pts));
            }
            out.push_back(std::move(s));
        }
        return out;
    };
    const double sampled = metrics::diversity(samples(modanet::Mode::Sample));
    const double mean = metrics::diversity(samples(modanet::Mode::Mean));
    return {sampled > 0.0 && mean == 0.0, "sampling " + fmt("%.3e", sampled) + ", mean branch " + fmt("%.1f", mean)};
}

// --- 7 ---------------------------------------------------------------------------
Outcome tcm() {
    std::vector<Tensor> video;
    for (int t = 0; t < 5; ++t) {
        video.push_back(testing::random_tensor({3, 16, 16}, 70 + static_cast<std::uint64_t>(t), 0.5));
    }
    const std::vector<metrics::FlowField> zero(4, metrics::FlowField::zero(16, 16));
    const double same = metrics::tcm(video, video, zero, zero);

    // Reference 0 -> 0.1 and generated 0 -> 0.2 on one 1x2x2 pair:
    // residuals 4 * 0.01 and 4 * 0.04, r = (0.04 + 1e-8) / (0.16 + 1e-8).
    const std::vector<Tensor> ref{Tensor({1, 2, 2}, 0.0), Tensor({1, 2, 2}, 0.1)};
    const std::vector<Tensor> gen{Tensor({1, 2, 2}, 0.0), Tensor({1, 2, 2}, 0.2)};
    const std::vector<metrics::FlowField> z1{metrics::FlowField::zero(2, 2)};
    const double manual = std::exp(-((0.04 + 1e-8) / (0.16 + 1e-8) - 1.0));
    const double got = metrics::tcm(ref, gen, z1, z1);
    const bool ok = std::abs(same - 1.0) <= 1e-6 && std::abs(got - manual) <= 1e-6;
    return {ok, "identical " + fmt("%.9f", same) + ", hand case " + fmt("%.9f", got) + " vs " + fmt("%.9f", manual)};
}

// --- 8 ---------------------------------------------------------------------------
prep::SegmentationMap shoulders(std::size_t w, std::size_t h, double slope) {
    prep::SegmentationMap seg{w, h, std::vector<std::uint8_t>(w * h, 0)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w) - 0.5;
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
            const double au = std::abs(u);
            const double top = 0.72 + slope * std::max(0.0, au - 0.1) * std::max(0.0, au - 0.1);
            std::uint8_t l = (au < 0.1 && v > 0.5) || v > top ? 3 : 0;
            const double fu = u / 0.22, fv = (v - 0.35) / 0.25;
            if (fu * fu + fv * fv < 1.0) {
                l = 2;
            } else if (fu * fu + (fv + 0.3) * (fv + 0.3) < 1.1 && l == 0) {
                l = 1;
            }
            seg.labels[y * w + x] = l;
        }
    }
    return seg;
}

double distance_to_polyline(motion::Vec2 p, const std::vector<motion::Vec2>& line) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double dx = line[i + 1].x - line[i].x, dy = line[i + 1].y - line[i].y;
        const double len2 = dx * dx + dy * dy;
        const double t = len2 > 0 ? std::clamp(((p.x - line[i].x) * dx + (p.y - line[i].y) * dy) / len2, 0.0, 1.0) : 0;
        best = std::min(best, std::hypot(line[i].x + t * dx - p.x, line[i].y + t * dy - p.y));
    }
    return best;
}

Outcome torso() {
    for (double slope : {1.0, 2.0, 3.0}) {
        const auto t = prep::extract_torso_points(shoulders(64, 64, slope), 4.0);
        for (std::size_t i = 0; i < motion::kTorsoPerSide; ++i) {
            const auto l = t.point(i), r = t.point(motion::kTorsoPerSide + i);
            if (!(l.x < 32.0 && r.x > 32.0) || std::abs((64.0 - l.x) - r.x) > 2.0 || std::abs(l.y - r.y) > 2.0) {
                return {false, "slope " + fmt("%.0f", slope) + ": pair " + std::to_string(i) + " not mirrored"};
            }
        }
    }

    std::mt19937_64 rng(81);
    for (int trial = 0; trial < 50; ++trial) {
        prep::SegmentationMap seg{64, 64, std::vector<std::uint8_t>(64 * 64)};
        for (auto& l : seg.labels) {
            l = static_cast<std::uint8_t>(rng() % 4);
        }
        seg.labels[rng() % seg.labels.size()] = 3;
        const auto b = prep::semantic_boundary(seg);
        for (long y = 0; y < 64; ++y) {
            for (long x = 0; x < 64; ++x) {
                bool want = false;
                if (seg.at(x, y) == 3) {
                    for (auto [dx, dy] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
                        const long xx = x + dx, yy = y + dy;
                        if (xx >= 0 && yy >= 0 && xx < 64 && yy < 64) {
                            const auto n = seg.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
                            want = want || n == 0 || n == 1;
                        }
                    }
                }
                if (static_cast<bool>(b.at(x, y)) != want) {
                    return {false, "boundary mismatch on random map " + std::to_string(trial)};
                }
            }
        }
        const auto d = raster::dilate_square(b, 1, 2);
        for (long y = 0; y < 64; ++y) {
            for (long x = 0; x < 64; ++x) {
                bool any = false;
                for (long yy = std::max(0L, y - 2); yy <= std::min(63L, y + 2); ++yy) {
                    for (long xx = std::max(0L, x - 2); xx <= std::min(63L, x + 2); ++xx) {
                        any = any || b.at(xx, yy);
                    }
                }
                if (static_cast<bool>(d.at(x, y)) != any) {
                    return {false, "dilation mismatch on random map " + std::to_string(trial)};
                }
            }
        }
        // Skyline of the dilated band as a polyline, then fit and densify.
        std::vector<motion::Vec2> sky;
        for (std::size_t x = 0; x < 64; ++x) {
            for (std::size_t y = 0; y < 64; ++y) {
                if (d.at(x, y)) {
                    sky.push_back({static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5});
                    break;
                }
            }
        }
        if (sky.size() >= 3) {
            const double eps = 0.5 + static_cast<double>(rng() % 40) / 10.0;
            const auto fit = prep::polygon_fit(sky, eps);
            for (const auto& p : sky) {
                if (distance_to_polyline(p, fit) > eps + 1e-12) {
                    return {false, "polygon fit exceeds epsilon on random map " + std::to_string(trial)};
                }
            }
            const auto dense = prep::densify(fit, 1.0);
            for (std::size_t i = 0; i + 1 < dense.size(); ++i) {
                if (std::hypot(dense[i + 1].x - dense[i].x, dense[i + 1].y - dense[i].y) > 1.0 + 1e-12) {
                    return {false, "densify spacing above 1 px on random map " + std::to_string(trial)};
                }
            }
        }
    }
    return {true, "9 + 9 mirrored points on 3 masks; 50 random maps match the oracles"};
}

// --- 9 ---------------------------------------------------------------------------
Outcome tpe() {
    const auto z = render::tpe(0);
    static_assert(std::tuple_size_v<decltype(z)> == 12);
    for (std::size_t i = 0; i < 6; ++i) {
        if (z[2 * i] != 0.0 || z[2 * i + 1] != 1.0) {
            return {false, "t = 0 is not the (0, 1) pattern"};
        }
    }
    for (std::uint64_t t = 0; t < 100000; t += 7) {
        for (double v : render::tpe(t)) {
            if (std::abs(v) > 1.0) {
                return {false, "value above 1 at t = " + std::to_string(t)};
            }
        }
    }
    return {true, "dim 12, t = 0 exact, |v| <= 1"};
}

// --- 10 --------------------------------------------------------------------------
Outcome determinism() {
    for (std::size_t t = 1; t <= 10000; ++t) {
        const auto w = pipeline::sliding_windows(t);
        bool ok = w.front().first == 0 && w.back().second == t;
        for (std::size_t k = 1; k < w.size(); ++k) {
            ok = ok && w[k].first <= w[k - 1].second && w[k].first > w[k - 1].first;
        }
        if (!ok) {
            return {false, "cover law broken at T = " + std::to_string(t)};
        }
    }

    auto cfg = pipeline::PipelineConfig::preset("desk");
    cfg.moda.d = 16;
    cfg.moda.d_l = 8;
    cfg.faco.d = 16;
    cfg.faco.disc_hidden = 16;
    cfg.renderer.channels = {4, 4, 4, 4, 4, 4};
    cfg.renderer.disc_channels = 4;
    cfg.renderer.perceptual_channels = {4, 4};
    cfg.window = 30;
    cfg.stride = 15;
    cfg.seed = 5;
    const auto data = synthetic_dataset("clip_det", 50, 91, 0.2);
    const fs::path run = scratch("run_det");
    pipeline::TrainOptions opts;
    opts.steps = 5;
    for (auto s : pipeline::kStages) {
        pipeline::train(s, data, cfg, run, opts);
    }
    pipeline::InferOptions io_opts;
    io_opts.seed = 11;
    const fs::path wav = data.clip_dir / "audio.wav";
    const auto a = pipeline::infer(wav, data, run, cfg, run / "a", io_opts);
    const auto b = pipeline::infer(wav, data, run, cfg, run / "b", io_opts);
    if (a.frames != 50) {
        return {false, "expected 50 frames for 2 s of audio, got " + std::to_string(a.frames)};
    }
    if (io::read_file(run / "a" / "motion.bin") != io::read_file(run / "b" / "motion.bin")) {
        return {false, "motion dumps differ"};
    }
    for (std::size_t t = 0; t < a.frames; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", t);
        if (io::read_file(run / "a" / "frames" / name) != io::read_file(run / "b" / "frames" / name)) {
            return {false, std::string("frame ") + name + " differs"};
        }
    }
    return {true, "cover law T = 1..10000; 50 frames + motion dump bit-identical over " +
                      std::to_string(a.windows.size()) + " windows"};
}

}  // namespace

int main() {
    const fs::path run_dir = scratch("overfit");
    run(1, "mask-correctness", 1, masks);
    run(2, "causality", 10, causality);
    run(3, "kld", 5, kld);
    run(4, "gradient-suite", 120, gradients);
    run(5, "overfit", 900, [&] { return overfit(run_dir); });
    run(6, "diversity-ablation", 120, [&] { return diversity(run_dir); });
    run(7, "tcm", 5, tcm);
    run(8, "torso-extraction", 30, torso);
    run(9, "tpe", 1, tpe);
    run(10, "pipeline-determinism", 300, determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}

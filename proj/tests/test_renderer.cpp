#include "doctest.h"
#include "gradcheck.hpp"

#include "moda/error.hpp"
#include "moda/renderer.hpp"

#include <cmath>
#include <set>

using namespace moda;
using namespace moda::render;
using ad::Var;
using motion::Vec2;

namespace {

RendererConfig tiny_config() {
    RendererConfig cfg;
    cfg.resolution = 64;
    cfg.channels = {4, 4, 4, 4, 4, 4};
    cfg.disc_channels = 4;
    cfg.perceptual_channels = {4, 4};
    cfg.adam.lr = 1e-3;
    return cfg;
}

std::vector<Vec2> face_ring(double cx, double cy, double r) {
    std::vector<Vec2> pts(motion::kFacePoints);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(pts.size());
        pts[i] = {cx + r * std::cos(a), cy + r * std::sin(a)};
    }
    return pts;
}

std::vector<Vec2> torso_line(double y) {
    std::vector<Vec2> pts(motion::kTorsoPoints);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = {2.5 + 3.0 * static_cast<double>(i), y};
    }
    return pts;
}

}  // namespace

TEST_CASE("tpe: closed-form values") {
    const auto z = tpe(0);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(z[2 * i] == 0.0);
        CHECK(z[2 * i + 1] == 1.0);
    }
    const auto e = tpe(100);
    CHECK(e[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
    CHECK(e[10] == doctest::Approx(std::sin(32.0)).epsilon(1e-14));
    CHECK(e[11] == doctest::Approx(std::cos(32.0)).epsilon(1e-14));
}

TEST_CASE("tpe: bounded and unique over a clip") {
    for (std::uint64_t t : {0ull, 1ull, 999ull, 123456ull, 1000000ull}) {
        for (double v : tpe(t)) {
            CHECK(std::abs(v) <= 1.0);
        }
    }
    std::set<std::array<double, kTpeSize>> seen;
    for (std::uint64_t t = 0; t < 100; ++t) {
        seen.insert(tpe(t));
    }
    CHECK(seen.size() == 100);
}

TEST_CASE("condition: layout, determinism and off-screen blank") {
    const auto topo = motion::FaceTopology::synthetic();
    const Tensor ref = testing::random_tensor({3, 32, 32}, 4, 1.0);
    const auto face = face_ring(16, 16, 8);
    const auto torso = torso_line(28.5);
    const Tensor a = assemble_condition(face, torso, ref, 7, topo);
    const Tensor b = assemble_condition(face, torso, ref, 7, topo);
    REQUIRE(a.shape() == Shape{16, 32, 32});
    CHECK(a.storage() == b.storage());
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < 32 * 32; ++i) {
        lo = std::min(lo, a[i]);
        hi = std::max(hi, a[i]);
    }
    CHECK(lo == -1.0);
    CHECK(hi == 1.0);
    for (std::size_t i = 0; i < 3 * 32 * 32; ++i) {
        CHECK(a[32 * 32 + i] == ref[i]);
    }
    const auto enc = tpe(7);
    for (std::size_t c = 0; c < kTpeSize; ++c) {
        CHECK(a.at(0, 4 + c, 5, 9) == enc[c]);
    }

    const auto off_face = face_ring(-500, -500, 8);
    std::vector<Vec2> off_torso(motion::kTorsoPoints, Vec2{-900, 900});
    const Tensor blank = draw_condition(32, 32, off_face, off_torso, topo);
    for (double v : blank.data()) {
        CHECK(v == -1.0);
    }
    CHECK_THROWS_WITH_AS(assemble_condition(face, torso, Tensor{}, 0, topo), doctest::Contains("EmptyReference"),
                         Error);
}

TEST_CASE("mouth mask: dilation radius") {
    // 2x2 pixel square at (10..12, 10..12), dilated by 3.
    const std::vector<Vec2> sq{{10, 10}, {12, 10}, {12, 12}, {10, 12}};
    const Tensor m = mouth_mask(sq, 24, 24, 3.0);
    CHECK(m.at(10, 10) == 1.0);
    CHECK(m.at(10, 14) == 1.0);  // 3 px right of the last filled column
    CHECK(m.at(10, 15) == 0.0);
    CHECK(m.at(14, 14) == 0.0);  // diagonal distance sqrt(18) > 3
    const Tensor none = mouth_mask(sq, 24, 24, 0.0);
    double count = 0.0;
    for (double v : none.data()) {
        count += v;
    }
    CHECK(count == 4.0);
}

TEST_CASE("psnr: oracle values") {
    Tensor a({3, 4, 4}, 0.0), b({3, 4, 4}, 0.0);
    CHECK(std::isinf(psnr(a, b)));
    b.fill(0.02);  // mse 4e-4 -> 10 log10(1e4) = 40
    CHECK(psnr(a, b) == doctest::Approx(40.0).epsilon(1e-12));
    b.fill(2.0);  // mse 4 -> 0 dB
    CHECK(psnr(a, b) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("config: validation") {
    RendererConfig cfg = tiny_config();
    CHECK(cfg.levels() == 6);
    cfg.resolution = 48;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.channels = {4, 4};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.lambda_m = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_NOTHROW(RendererConfig{}.validate());
    CHECK(RendererConfig{}.levels() == 8);
}

TEST_CASE("generator: shape, range, zero output layer") {
    Renderer r(tiny_config(), 3);
    const Var cond = Var::constant(testing::random_tensor({2, 16, 64, 64}, 5, 1.0));
    const Var out = r.generate(cond);
    REQUIRE(out.shape() == Shape{2, 3, 64, 64});
    for (double v : out.value().data()) {
        CHECK(std::abs(v) < 1.0);
    }
    r.zero_output_layer();
    const Var flat = r.generate(cond);
    for (double v : flat.value().data()) {
        CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(r.generate(Var::constant(Tensor({1, 15, 64, 64}))), Error);
}

TEST_CASE("discriminator: score maps per scale") {
    Renderer r(tiny_config(), 3);
    const Var img = Var::constant(testing::random_tensor({1, 3, 64, 64}, 6, 1.0));
    const Var cond = Var::constant(testing::random_tensor({1, 16, 64, 64}, 7, 1.0));
    const auto d = r.discriminate(img, cond);
    REQUIRE(d.scores.size() == 2);
    CHECK(d.scores[0].shape() == Shape{1, 1, 16, 16});
    CHECK(d.scores[1].shape() == Shape{1, 1, 8, 8});
    CHECK(d.features[0].size() == 2);
}

TEST_CASE("losses: identical images, uniform error, random oracle") {
    const RendererConfig cfg;
    const Tensor target = testing::random_tensor({1, 3, 8, 8}, 8, 0.5);
    const Tensor mask({1, 3, 8, 8}, 1.0);
    const std::vector<Var> ones{Var::constant(Tensor({1, 1, 2, 2}, 1.0))};
    const std::vector<std::vector<Var>> feats{{Var::constant(Tensor({1, 2, 4, 4}, 0.3))}};
    const std::vector<Var> perc{Var::constant(Tensor({1, 2, 4, 4}, 0.1))};
    auto l = renderer_losses(Var::constant(target), target, mask, ones, feats, feats, perc, perc, cfg);
    CHECK(l.total.item() == 0.0);

    // Uniform error 0.1 with a full mask: 50 * 0.1 + 100 * 0.1 = 15.
    Tensor shifted = target;
    for (auto& v : shifted.data()) {
        v += 0.1;
    }
    l = renderer_losses(Var::constant(shifted), target, mask, ones, feats, feats, perc, perc, cfg);
    CHECK(l.total.item() == doctest::Approx(15.0).epsilon(1e-12));

    const Tensor gen = testing::random_tensor({1, 3, 8, 8}, 9, 1.0);
    Tensor half_mask({1, 3, 8, 8}, 0.0);
    for (std::size_t i = 0; i < half_mask.size(); i += 2) {
        half_mask[i] = 1.0;
    }
    const Tensor p = testing::random_tensor({1, 1, 2, 2}, 10, 1.0);
    const Tensor fa = testing::random_tensor({1, 2, 4, 4}, 11, 1.0), fr = testing::random_tensor({1, 2, 4, 4}, 12, 1.0);
    const Tensor qa = testing::random_tensor({1, 2, 4, 4}, 13, 1.0), qr = testing::random_tensor({1, 2, 4, 4}, 14, 1.0);
    l = renderer_losses(Var::constant(gen), target, half_mask, {Var::constant(p)}, {{Var::constant(fa)}},
                        {{Var::constant(fr)}}, {Var::constant(qa)}, {Var::constant(qr)}, cfg);
    double gan = 0, color = 0, mouth = 0, fm = 0, pc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        gan += (p[i] - 1) * (p[i] - 1) / p.size();
    }
    for (std::size_t i = 0; i < gen.size(); ++i) {
        color += std::abs(gen[i] - target[i]) / gen.size();
        mouth += std::abs(half_mask[i] * gen[i] - half_mask[i] * target[i]) / gen.size();
    }
    for (std::size_t i = 0; i < fa.size(); ++i) {
        fm += std::abs(fa[i] - fr[i]) / fa.size();
        pc += std::abs(qa[i] - qr[i]) / qa.size();
    }
    CHECK(l.gan.item() == doctest::Approx(gan).epsilon(1e-12));
    CHECK(l.color.item() == doctest::Approx(color).epsilon(1e-12));
    CHECK(l.mouth.item() == doctest::Approx(mouth).epsilon(1e-12));
    CHECK(l.total.item() == doctest::Approx(gan + 50 * color + 100 * mouth + 10 * pc + fm).epsilon(1e-12));
}

TEST_CASE("discriminator loss: perfect critic is zero") {
    const std::vector<Var> real{Var::constant(Tensor({1, 1, 4, 4}, 1.0)), Var::constant(Tensor({1, 1, 2, 2}, 1.0))};
    const std::vector<Var> fake{Var::constant(Tensor({1, 1, 4, 4}, 0.0)), Var::constant(Tensor({1, 1, 2, 2}, 0.0))};
    CHECK(discriminator_loss(real, fake).item() == 0.0);
    CHECK(discriminator_loss(fake, real).item() == doctest::Approx(4.0));
}

TEST_CASE("gradients: generator and discriminator") {
    Renderer r(tiny_config(), 11);
    const Var cond = Var::constant(testing::random_tensor({1, 16, 64, 64}, 15, 1.0));
    const Tensor target = testing::random_tensor({1, 3, 64, 64}, 16, 0.5);
    const auto cfg = r.config();

    // Squared error keeps the probe away from L1 kinks inside the network.
    auto gen_loss = [&] {
        const Var fake = r.generate(cond);
        const auto d = r.discriminate(fake, cond);
        Var l = ad::mean_square(ad::sub(fake, Var::constant(target)));
        for (const auto& s : d.scores) {
            l = ad::add(l, ad::mean_square(ad::add_scalar(s, -1.0)));
        }
        return l;
    };
    const auto g = testing::grad_check(gen_loss, r.generator().all(), 4, 1e-6, 1e-4);
    INFO(g.worst);
    CHECK(g.max_rel_error < 1e-4);

    // Full objective with respect to the generated image, on a small input.
    const Tensor small_target = testing::random_tensor({1, 3, 8, 8}, 21, 0.5);
    const Tensor small_mask({1, 3, 8, 8}, 1.0);
    Var image = Var::parameter(testing::random_tensor({1, 3, 8, 8}, 22, 0.5));
    Var score = Var::parameter(testing::random_tensor({1, 1, 2, 2}, 23, 1.0));
    Var feat = Var::parameter(testing::random_tensor({1, 2, 4, 4}, 24, 1.0));
    const Var feat_real = Var::constant(testing::random_tensor({1, 2, 4, 4}, 25, 1.0));
    auto objective = [&] {
        const Var real_image = Var::constant(small_target);
        return renderer_losses(image, small_target, small_mask, {score}, {{feat}}, {{feat_real}},
                               r.perceptual().features(image), r.perceptual().features(real_image), cfg)
            .total;
    };
    const auto o = testing::grad_check(objective, {image, score, feat}, 24, 1e-7);
    INFO(o.worst);
    CHECK(o.max_rel_error < 1e-4);

    auto disc_loss = [&] {
        const auto real = r.discriminate(Var::constant(target), cond);
        const auto fake = r.discriminate(ad::detach(r.generate(cond)), cond);
        return discriminator_loss(real.scores, fake.scores);
    };
    const auto d = testing::grad_check(disc_loss, r.discriminator().all(), 6, 1e-5);
    INFO(d.worst);
    CHECK(d.max_rel_error < 1e-4);
}

TEST_CASE("trainer: reproducible steps and falling color loss") {
    RendererConfig cfg = tiny_config();
    const Tensor cond = testing::random_tensor({2, 16, 64, 64}, 17, 1.0);
    const Tensor target = testing::random_tensor({2, 3, 64, 64}, 18, 0.5);
    const RendererBatch batch{cond, target, Tensor({2, 3, 64, 64}, 0.0)};
    Renderer a(cfg, 1), b(cfg, 1);
    RendererTrainer ta(a), tb(b);
    const auto ra = ta.step(batch);
    const auto rb = tb.step(batch);
    CHECK(ra.total == rb.total);
    CHECK(ra.disc == rb.disc);
    double last = ra.color;
    for (int i = 0; i < 15; ++i) {
        last = ta.step(batch).color;
    }
    CHECK(last < ra.color);
    CHECK(ta.discriminator_optimizer().steps() == 16);
}

TEST_CASE("stack and unstack round trip") {
    const Tensor x = testing::random_tensor({3, 4, 5}, 19), y = testing::random_tensor({3, 4, 5}, 20);
    const Tensor s = stack({x, y});
    REQUIRE(s.shape() == Shape{2, 3, 4, 5});
    CHECK(unstack(s, 1).storage() == y.storage());
    CHECK_THROWS_AS(stack({x, Tensor({2, 2})}), Error);
}

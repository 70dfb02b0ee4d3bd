#include "doctest.h"
#include "gradcheck.hpp"

#include "moda/error.hpp"
#include "moda/faconet.hpp"

#include <cmath>

using namespace moda;
using namespace moda::faco;
using ad::Var;

namespace {

FacoConfig tiny_config() {
    FacoConfig cfg;
    cfg.d = 8;
    cfg.disc_hidden = 8;
    cfg.adam.lr = 1e-3;
    return cfg;
}

FacoBatch random_batch(std::size_t b, std::uint64_t seed) {
    return {testing::random_tensor({b, kFaceWidth}, seed, 0.5), testing::random_tensor({b, kMouthWidth}, seed + 1, 0.5),
            testing::random_tensor({b, kEyeWidth}, seed + 2, 0.5), testing::random_tensor({b, kFaceWidth}, seed + 3, 0.5)};
}

}  // namespace

TEST_CASE("compose: shape contract and determinism") {
    FacoNet net(tiny_config(), 1);
    const motion::FacePoints s(testing::random_tensor({kFaceWidth}, 1).storage());
    const motion::MouthPoints m(testing::random_tensor({kMouthWidth}, 2).storage());
    const motion::EyePoints e(testing::random_tensor({kEyeWidth}, 3).storage());
    const auto a = net.compose(s, m, e);
    const auto b = net.compose(s, m, e);
    CHECK(a == b);
    CHECK(a.points().size() == 478);
    CHECK_THROWS_AS(net.compose(Var::constant(Tensor({1, 10})), Var::constant(Tensor({1, kMouthWidth})),
                                Var::constant(Tensor({1, kEyeWidth}))),
                    Error);
}

TEST_CASE("compose is independent of batch ordering") {
    FacoNet net(tiny_config(), 2);
    const FacoBatch batch = random_batch(4, 10);
    const Var all = net.compose(Var::constant(batch.subject), Var::constant(batch.mouth), Var::constant(batch.eyes));
    for (std::size_t i = 0; i < 4; ++i) {
        auto row = [i](const Tensor& t) {
            const std::size_t w = t.dim(1);
            return Var::constant(Tensor({1, w}, std::vector<double>(t.data().begin() + i * w, t.data().begin() + (i + 1) * w)));
        };
        const Var one = net.compose(row(batch.subject), row(batch.mouth), row(batch.eyes));
        for (std::size_t c = 0; c < kFaceWidth; ++c) {
            CHECK(std::abs(one.value()[c] - all.value().at(i, c)) < 1e-12);
        }
    }
}

TEST_CASE("discriminator: zero weights, finiteness and shape") {
    FacoNet net(tiny_config(), 3);
    const Var x = Var::constant(testing::random_tensor({3, kFaceWidth}, 4));
    const Var z = net.discriminate(x);
    CHECK(z.shape() == Shape{3, 1});
    CHECK(z.value().all_finite());
    for (auto v : net.discriminator().all()) {
        v.mutable_value().fill(0.0);
    }
    const Var z0 = net.discriminate(x);
    for (double v : z0.value().data()) {
        CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(net.discriminate(Var::constant(Tensor({1, 5}))), Error);
}

TEST_CASE("LSGAN objectives") {
    auto sc = [](double v) { return Var::constant(Tensor::scalar(v)); };
    CHECK(loss_disc(sc(1.0), sc(0.0)).item() == 0.0);
    CHECK(loss_disc(sc(0.0), sc(1.0)).item() == 2.0);
    CHECK(loss_disc(sc(0.5), sc(0.5)).item() == 0.5);

    const Tensor gt = testing::random_tensor({2, kFaceWidth}, 5);
    CHECK(loss_gen(sc(1.0), Var::constant(gt), gt, 10.0).item() == 0.0);
    Tensor off = gt;
    for (auto& v : off.data()) {
        v += 0.1;
    }
    CHECK(loss_gen(sc(0.0), Var::constant(off), gt, 10.0).item() == doctest::Approx(2.0).epsilon(1e-12));

    const Tensor zh = testing::random_tensor({2, 1}, 6);
    const Tensor pred = testing::random_tensor({2, kFaceWidth}, 7);
    double adv = 0.0;
    for (double v : zh.data()) {
        adv += (v - 1.0) * (v - 1.0);
    }
    adv /= 2.0;
    double l1 = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        l1 += std::abs(gt[i] - pred[i]);
    }
    l1 /= static_cast<double>(gt.size());
    CHECK(std::abs(loss_gen(Var::constant(zh), Var::constant(pred), gt, 3.5).item() - (adv + 3.5 * l1)) < 1e-6);
    CHECK(loss_gen(Var::constant(zh), Var::constant(pred), gt, 3.5).item() >= 0.0);
}

TEST_CASE("gradient checks for composer and discriminator") {
    FacoNet net(tiny_config(), 4);
    const FacoBatch batch = random_batch(2, 20);
    auto gen_loss = [&] {
        const Var fake = net.compose(Var::constant(batch.subject), Var::constant(batch.mouth), Var::constant(batch.eyes));
        return loss_gen(net.discriminate(fake), fake, batch.target, 10.0);
    };
    const auto rg = testing::grad_check(gen_loss, net.generator().all(), 8, 1e-5);
    INFO(rg.worst);
    CHECK(rg.max_rel_error < 1e-4);
    auto disc_loss = [&] {
        return loss_disc(net.discriminate(Var::constant(batch.target)), net.discriminate(Var::constant(batch.subject)));
    };
    const auto rd = testing::grad_check(disc_loss, net.discriminator().all(), 12, 1e-5);
    INFO(rd.worst);
    CHECK(rd.max_rel_error < 1e-4);
}

TEST_CASE("training step: reproducible, finite, and loss decreases") {
    const FacoBatch batch = random_batch(10, 30);
    FacoNet a(tiny_config(), 5);
    FacoNet b(tiny_config(), 5);
    FacoTrainer ta(a);
    FacoTrainer tb(b);
    const auto ra = ta.step(batch);
    const auto rb = tb.step(batch);
    CHECK(ra.gen == rb.gen);
    CHECK(ra.disc == rb.disc);
    CHECK(std::isfinite(ra.gen));
    double last = ra.l1;
    for (int i = 0; i < 60; ++i) {
        last = ta.step(batch).l1;
    }
    CHECK(last < ra.l1);
}

TEST_CASE("disabling the adversarial term gives plain L1 regression") {
    FacoConfig cfg = tiny_config();
    cfg.gan_weight = 0.0;
    FacoNet net(cfg, 6);
    FacoTrainer trainer(net);
    const FacoBatch batch = random_batch(3, 40);
    const auto rec = trainer.step(batch);
    CHECK(rec.disc == 0.0);
    CHECK(rec.gen == doctest::Approx(10.0 * rec.l1).epsilon(1e-12));
    CHECK(trainer.discriminator_optimizer().steps() == 0);
}

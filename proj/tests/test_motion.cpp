#include "doctest.h"

#include "moda/motion.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace moda;
using namespace moda::motion;

namespace {

// Rodrigues rotation about a unit axis; independent of the Euler code path.
Mat3 axis_angle(Vec3 k, double angle) {
    const double c = std::cos(angle), s = std::sin(angle), v = 1.0 - c;
    return {{{k.x * k.x * v + c, k.x * k.y * v - k.z * s, k.x * k.z * v + k.y * s},
             {k.y * k.x * v + k.z * s, k.y * k.y * v + c, k.y * k.z * v - k.x * s},
             {k.z * k.x * v - k.y * s, k.z * k.y * v + k.x * s, k.z * k.z * v + c}}};
}

double det(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

HeadPose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> tr(-5.0, 5.0);
    HeadPose p;
    for (int i = 0; i < 3; ++i) {
        p.rotation[i] = ang(rng);
        p.translation[i] = tr(rng);
    }
    return p;
}

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) {
        p = {d(rng), d(rng), d(rng)};
    }
    return pts;
}

double dist(Vec3 a, Vec3 b) { return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z)); }

}  // namespace

TEST_CASE("euler_to_matrix examples") {
    const Mat3 id = euler_to_matrix(HeadPose{});
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(id[i][j] == (i == j ? 1.0 : 0.0));
        }
    }
    HeadPose half;
    half.rotation = {std::numbers::pi, 0.0, 0.0};
    const Mat3 r = euler_to_matrix(half);
    const double expected[3][3] = {{1, 0, 0}, {0, -1, 0}, {0, 0, -1}};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(r[i][j] == doctest::Approx(expected[i][j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("euler_to_matrix is orthonormal and agrees with axis-angle composition") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const HeadPose p = random_pose(rng);
        const Mat3 r = euler_to_matrix(p);
        const Mat3 rrt = multiply(r, transpose(r));
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                REQUIRE(std::abs(rrt[i][j] - (i == j ? 1.0 : 0.0)) < 1e-6);
            }
        }
        REQUIRE(std::abs(det(r) - 1.0) < 1e-6);
        const Mat3 oracle = multiply(multiply(axis_angle({1, 0, 0}, p.rotation[0]), axis_angle({0, 1, 0}, p.rotation[1])),
                                     axis_angle({0, 0, 1}, p.rotation[2]));
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                REQUIRE(std::abs(r[i][j] - oracle[i][j]) < 1e-12);
            }
        }
    }
}

TEST_CASE("to_camera examples") {
    std::mt19937_64 rng(4);
    const auto pts = random_points(rng, 10);
    const auto same = to_camera(pts, HeadPose{});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(same[i].x == pts[i].x);
        CHECK(same[i].y == pts[i].y);
        CHECK(same[i].z == pts[i].z);
    }
    HeadPose shift;
    shift.translation = {1, 2, 3};
    const std::vector<Vec3> origin{{0, 0, 0}};
    const auto moved = to_camera(origin, shift);
    CHECK(moved[0].x == 1.0);
    CHECK(moved[0].y == 2.0);
    CHECK(moved[0].z == 3.0);
}

TEST_CASE("rigid transforms preserve pairwise distances and invert exactly") {
    std::mt19937_64 rng(5);
    double worst_iso = 0.0;
    double worst_trip = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const HeadPose p = random_pose(rng);
        const auto pts = random_points(rng, 12);
        const auto cam = to_camera(pts, p);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                worst_iso = std::max(worst_iso, std::abs(dist(pts[i], pts[j]) - dist(cam[i], cam[j])));
            }
        }
        const auto back = to_canonical(cam, p);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            worst_trip = std::max(worst_trip, dist(back[i], pts[i]));
        }
    }
    CHECK(worst_iso < 1e-6);
    CHECK(worst_trip < 1e-6);
    const std::vector<Vec3> one{{0.3, -0.2, 0.9}};
    const auto id = to_canonical(one, HeadPose{});
    CHECK(id[0].x == 0.3);
    CHECK(id[0].z == 0.9);
}

TEST_CASE("projection examples") {
    CameraModel ortho;
    ortho.scale = 1.0;
    ortho.principal = {0, 0};
    const std::vector<Vec3> p{{3, 4, 9}};
    const auto o = project(p, ortho);
    CHECK(o[0].x == 3.0);
    CHECK(o[0].y == 4.0);

    CameraModel pin;
    pin.mode = CameraModel::Mode::Pinhole;
    pin.scale = 2.0;
    pin.principal = {0, 0};
    const std::vector<Vec3> q{{1, 1, 2}};
    const auto r = project(q, pin);
    CHECK(r[0].x == 1.0);
    CHECK(r[0].y == 1.0);

    const std::vector<Vec3> flat{{1, 1, 0}};
    try {
        project(flat, pin);
        FAIL("expected NonPositiveDepth");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPositiveDepth);
    }
    CameraModel bad;
    bad.scale = 0.0;
    CHECK_THROWS_AS(project(p, bad), Error);
}

TEST_CASE("displacement arithmetic") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> xf(MouthPoints::kFlatSize), rf(MouthPoints::kFlatSize);
    for (auto& v : xf) v = d(rng);
    for (auto& v : rf) v = d(rng);
    const MouthPoints x(xf), r(rf);
    const auto zero = displacement(x, x);
    for (double v : zero.flat()) {
        CHECK(v == 0.0);
    }
    CHECK(displacement(x, MouthPoints{}) == x);
    // x - r + r is not bit-exact in floating point in general; the property
    // is exactness of the recovered reference offsets for this construction.
    const auto delta = displacement(x, r);
    const auto back = apply_displacement(delta, r);
    for (std::size_t i = 0; i < xf.size(); ++i) {
        CHECK(back.flat()[i] == doctest::Approx(xf[i]).epsilon(1e-15));
    }
    HeadPose a, b;
    a.rotation = {0.1, 0.2, 0.3};
    b.translation = {1, 1, 1};
    CHECK(apply_displacement(displacement(a, b), b).rotation == a.rotation);
    const std::vector<double> three(3, 1.0), four(4, 1.0);
    CHECK_THROWS_AS(displacement(std::span<const double>(three), std::span<const double>(four)), Error);
}

TEST_CASE("point sets enforce their cardinality") {
    CHECK_THROWS_AS(FacePoints(std::vector<double>(477 * 3)), Error);
    CHECK_NOTHROW(FacePoints(std::vector<double>(478 * 3)));
    CHECK(torso_side(8) == TorsoSide::Left);
    CHECK(torso_side(9) == TorsoSide::Right);
    MotionRepresentation rep;
    CHECK(rep.mouth.flat().size() == 120);
    CHECK(rep.eyes.flat().size() == 180);
    CHECK(rep.face.flat().size() == 1434);
    CHECK(rep.torso.flat().size() == 54);
    CHECK(rep.pose.flat().size() == 6);
}

TEST_CASE("landmark and pose files round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "moda_motion_io";
    std::filesystem::create_directories(dir);
    LandmarkSequence seq;
    seq.frames = 2;
    seq.points = 3;
    seq.values = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17.5};
    write_landmarks(dir / "landmarks.bin", seq);
    const auto back = read_landmarks(dir / "landmarks.bin");
    CHECK(back.frames == 2);
    CHECK(back.points == 3);
    CHECK(back.values == seq.values);
    CHECK(back.frame(1)[2].z == 17.5);
    std::vector<HeadPose> poses(3);
    poses[1].rotation = {0.5, -0.25, 0.125};
    write_poses(dir / "poses.bin", poses);
    const auto pb = read_poses(dir / "poses.bin");
    REQUIRE(pb.size() == 3);
    CHECK(pb[1] == poses[1]);
    std::filesystem::remove_all(dir);
}

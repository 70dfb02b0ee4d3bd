#pragma once

#include "moda/error.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace moda::motion {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr std::size_t kMouthPoints = 40;
inline constexpr std::size_t kEyePoints = 60;
inline constexpr std::size_t kFacePoints = 478;
inline constexpr std::size_t kTorsoPoints = 18;
inline constexpr std::size_t kTorsoPerSide = 9;
inline constexpr std::size_t kPoseScalars = 6;

// A fixed-cardinality set of 3D points stored flat as [N x 3].
template <std::size_t N>
class PointSet {
public:
    static constexpr std::size_t kCount = N;
    static constexpr std::size_t kFlatSize = N * 3;

    PointSet() : coords_(kFlatSize, 0.0) {}

    explicit PointSet(std::vector<double> flat) : coords_(std::move(flat)) {
        require(coords_.size() == kFlatSize, ErrorCode::ShapeMismatch,
                "expected " + std::to_string(N) + " x 3 coordinates, got " + std::to_string(coords_.size()));
        for (double v : coords_) {
            require(std::isfinite(v), ErrorCode::ShapeMismatch, "point coordinates must be finite");
        }
    }

    explicit PointSet(std::span<const Vec3> points) : coords_(kFlatSize) {
        require(points.size() == N, ErrorCode::ShapeMismatch,
                "expected " + std::to_string(N) + " points, got " + std::to_string(points.size()));
        for (std::size_t i = 0; i < N; ++i) {
            set(i, points[i]);
        }
    }

    Vec3 point(std::size_t i) const { return {coords_[3 * i], coords_[3 * i + 1], coords_[3 * i + 2]}; }
    void set(std::size_t i, Vec3 p) {
        coords_[3 * i] = p.x;
        coords_[3 * i + 1] = p.y;
        coords_[3 * i + 2] = p.z;
    }

    std::vector<Vec3> points() const {
        std::vector<Vec3> out(N);
        for (std::size_t i = 0; i < N; ++i) {
            out[i] = point(i);
        }
        return out;
    }

    std::span<const double> flat() const { return coords_; }
    std::span<double> flat() { return coords_; }

    bool operator==(const PointSet&) const = default;

private:
    std::vector<double> coords_;
};

using MouthPoints = PointSet<kMouthPoints>;
using EyePoints = PointSet<kEyePoints>;
using FacePoints = PointSet<kFacePoints>;
// Rows 0..8 are the left shoulder, rows 9..17 the right one.
using TorsoPoints = PointSet<kTorsoPoints>;

enum class TorsoSide { Left, Right };
inline TorsoSide torso_side(std::size_t row) { return row < kTorsoPerSide ? TorsoSide::Left : TorsoSide::Right; }

// Euler angles in radians and a translation in camera units.
struct HeadPose {
    std::array<double, 3> rotation{};
    std::array<double, 3> translation{};

    std::array<double, kPoseScalars> flat() const {
        return {rotation[0], rotation[1], rotation[2], translation[0], translation[1], translation[2]};
    }
    static HeadPose from_flat(std::span<const double> v);

    bool operator==(const HeadPose&) const = default;
};

struct MotionRepresentation {
    MouthPoints mouth;
    EyePoints eyes;
    FacePoints face;
    HeadPose pose;
    TorsoPoints torso;
};

// Canonical face of the conditioned subject and the per-stream reference
// values X-bar that motion displacements are measured against.
struct SubjectTemplate {
    FacePoints face;
    MouthPoints mouth;
    EyePoints eyes;
    HeadPose pose;
    TorsoPoints torso;
};

// Rotation composition order. IntrinsicXYZ rotates about x, then the new y,
// then the new z: R = Rx(theta) * Ry(phi) * Rz(psi).
enum class EulerOrder { IntrinsicXYZ, IntrinsicZYX };

Mat3 euler_to_matrix(const HeadPose& pose, EulerOrder order = EulerOrder::IntrinsicXYZ);
Mat3 transpose(const Mat3& m);
Mat3 multiply(const Mat3& a, const Mat3& b);
Vec3 apply(const Mat3& m, Vec3 p);

// camera = R * canonical + t, row-wise.
std::vector<Vec3> to_camera(std::span<const Vec3> points, const HeadPose& pose,
                            EulerOrder order = EulerOrder::IntrinsicXYZ);
// canonical = R^T * (camera - t)
std::vector<Vec3> to_canonical(std::span<const Vec3> points, const HeadPose& pose,
                               EulerOrder order = EulerOrder::IntrinsicXYZ);

struct CameraModel {
    enum class Mode { Orthographic, Pinhole };
    Mode mode = Mode::Orthographic;
    double scale = 1.0;  // pixels per unit (orthographic) or focal length in pixels (pinhole)
    Vec2 principal{};
    std::size_t width = 256;
    std::size_t height = 256;

    void validate() const;
    // Orthographic camera framing a face of unit inter-ocular distance at the
    // image centre.
    static CameraModel default_for(std::size_t width, std::size_t height);
};

std::vector<Vec2> project(std::span<const Vec3> points, const CameraModel& camera);

// Displacement of x relative to a reference and its inverse.
template <std::size_t N>
PointSet<N> displacement(const PointSet<N>& x, const PointSet<N>& reference) {
    std::vector<double> out(PointSet<N>::kFlatSize);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x.flat()[i] - reference.flat()[i];
    }
    return PointSet<N>(std::move(out));
}

template <std::size_t N>
PointSet<N> apply_displacement(const PointSet<N>& delta, const PointSet<N>& reference) {
    std::vector<double> out(PointSet<N>::kFlatSize);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = reference.flat()[i] + delta.flat()[i];
    }
    return PointSet<N>(std::move(out));
}

HeadPose displacement(const HeadPose& x, const HeadPose& reference);
HeadPose apply_displacement(const HeadPose& delta, const HeadPose& reference);

// Dynamic-size variants for flat arrays; ShapeMismatch when sizes differ.
std::vector<double> displacement(std::span<const double> x, std::span<const double> reference);
std::vector<double> apply_displacement(std::span<const double> delta, std::span<const double> reference);

// Landmark sequence files: `<stem>.bin` holds frames x points x dims float32
// values, `<stem>.json` holds {"frames", "points", "dims"}.
struct LandmarkSequence {
    std::size_t frames = 0;
    std::size_t points = 0;
    std::size_t dims = 3;
    std::vector<double> values;

    std::vector<Vec3> frame(std::size_t t) const;
};
void write_landmarks(const std::filesystem::path& bin_path, const LandmarkSequence& seq);
LandmarkSequence read_landmarks(const std::filesystem::path& bin_path);

// Pose files: 6 float32 per frame, no sidecar.
void write_poses(const std::filesystem::path& path, std::span<const HeadPose> poses);
std::vector<HeadPose> read_poses(const std::filesystem::path& path);

}  // namespace moda::motion

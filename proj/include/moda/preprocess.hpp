#pragma once

#include "moda/motion.hpp"
#include "moda/raster.hpp"
#include "moda/tensor.hpp"
#include "moda/topology.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace moda::prep {

using motion::Vec2;
using motion::Vec3;

struct Palette {
    std::uint8_t background = 0;
    std::uint8_t hair = 1;
    std::uint8_t face = 2;
    std::uint8_t body = 3;

    // {"background": 0, "hair": 1, "face": 2, "upper_body": 3}
    static Palette load(const std::filesystem::path& path);
};

struct SegmentationMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> labels;  // row-major

    std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
    static SegmentationMap read_png(const std::filesystem::path& path);
};

struct CanonicalFace {
    motion::FacePoints face;
    motion::MouthPoints mouth;
    motion::EyePoints eyes;
};

CanonicalFace canonicalize(std::span<const Vec3> camera_landmarks, const motion::HeadPose& pose,
                           const motion::FaceTopology& topo);

// Body pixels 4-adjacent to background or hair. Throws NoBody.
raster::Mask semantic_boundary(const SegmentationMap& seg, const Palette& palette = {});

// Douglas-Peucker on an open polyline; keeps both endpoints. Throws TooFewPoints
// for fewer than three points.
std::vector<Vec2> polygon_fit(std::span<const Vec2> contour, double epsilon);

// Points along the polyline spaced at most `step` apart, vertices included.
std::vector<Vec2> densify(std::span<const Vec2> polyline, double step);

struct TorsoConfig {
    std::size_t k = 9;
    std::size_t dilation_radius = 1;  // 3 x 3 structuring element
    std::size_t dilation_iterations = 2;
    double epsilon = 2.0;
    double densify_step = 1.0;
};

// Shoulder contour, split at the centre of the face bounding box and ordered
// from the centre outward.
struct ShoulderContours {
    std::vector<Vec2> left;
    std::vector<Vec2> right;
    double split_x = 0.0;
};
ShoulderContours shoulder_contours(const SegmentationMap& seg, const Palette& palette, const TorsoConfig& cfg);

// Picks k candidates nearest to k anchors spaced uniformly along the
// polyline's arc. Ties go to lower x, then lower y.
std::vector<Vec2> select_along_arc(std::span<const Vec2> polyline, std::span<const Vec2> candidates, std::size_t k);

// Rows 0..k-1 left side, k..2k-1 right side, in pixel coordinates with
// z = face_depth. Throws NoBody or DegenerateContour.
motion::TorsoPoints extract_torso_points(const SegmentationMap& seg, double face_depth, const Palette& palette = {},
                                         const TorsoConfig& cfg = {});

struct DatasetOptions {
    double fps = 25.0;
    std::size_t n_mels = 80;
    double val_fraction = 0.2;
    std::uint64_t split_seed = 0;
    std::filesystem::path feature_file;  // precomputed features; empty means filterbank
    TorsoConfig torso{};
};

// Canonical per-frame motion of one clip. Torso points are stored in
// normalized image coordinates (x / W, y / H) with z = mean face depth.
struct Dataset {
    std::filesystem::path clip_dir;
    std::size_t width = 0;
    std::size_t height = 0;
    double fps = 25.0;
    motion::FaceTopology topology;
    Tensor audio;  // [T x dim]
    std::vector<motion::MotionRepresentation> frames;
    motion::SubjectTemplate subject;  // reference values from frame 0
    std::size_t val_begin = 0;
    std::size_t val_end = 0;

    std::size_t size() const { return frames.size(); }
    std::vector<std::size_t> train_indices() const;
    std::vector<std::size_t> val_indices() const;
    // Contiguous runs of training frames, as [begin, end).
    std::vector<std::pair<std::size_t, std::size_t>> train_segments() const;

    std::filesystem::path frame_path(std::size_t t) const;
    Tensor load_frame(std::size_t t) const;  // [3 x H x W] in [-1, 1]

    void save(const std::filesystem::path& dir) const;
    static Dataset load(const std::filesystem::path& dir);
};

Dataset build_dataset(const std::filesystem::path& clip_dir, const DatasetOptions& opts = {});

}  // namespace moda::prep

#pragma once

#include "moda/motion.hpp"
#include "moda/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace moda::metrics {

using motion::Vec2;
using motion::Vec3;

// Sequences of point sets: frames x points.
using PointSequence = std::vector<std::vector<Vec3>>;

// Mean Euclidean distance over frames and points.
double lmd(const PointSequence& pred, const PointSequence& gt);
// lmd of first temporal differences. Throws TooShort below two frames.
double lmd_v(const PointSequence& pred, const PointSequence& gt);

// Mean over frames of |A n B| / |A u B| of rasterized polygons on a
// width x height grid. Polygons with fewer than 3 points or zero area throw
// DegeneratePolygon. Two empty masks count as IoU 1.
double mouth_iou(const std::vector<std::vector<Vec2>>& pred, const std::vector<std::vector<Vec2>>& gt,
                 std::size_t width, std::size_t height);

// Per-pixel displacement [H x W x 2]: pixel (x, y) of frame t samples frame
// t-1 at (x + u, y + v).
struct FlowField {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> uv;

    static FlowField zero(std::size_t width, std::size_t height);
    void validate() const;
};
void write_flow(const std::filesystem::path& bin_path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& bin_path);

// Bilinear backward warp of a [C x H x W] image; samples clamp to the border.
Tensor warp(const Tensor& image, const FlowField& flow);

inline constexpr double kTcmEpsilon = 1e-8;

// Mean over t >= 1 of exp(-(r_t - 1)) with
// r_t = (|O_t - W(O_{t-1})|^2 + eps) / (|V_t - W(V_{t-1})|^2 + eps).
double tcm(const std::vector<Tensor>& reference, const std::vector<Tensor>& generated,
           const std::vector<FlowField>& ref_flows, const std::vector<FlowField>& gen_flows,
           double epsilon = kTcmEpsilon);

// Mean over (frame, point, coordinate) of the population variance across
// samples. Throws TooFewSamples below two samples.
double diversity(const std::vector<PointSequence>& samples);

struct Report {
    std::map<std::string, double> values;
    std::map<std::string, std::string> notes;

    std::string to_text() const;
    void write(const std::filesystem::path& json_path, const std::filesystem::path& text_path) const;
};

}  // namespace moda::metrics

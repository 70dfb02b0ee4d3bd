#pragma once

#include "moda/motion.hpp"
#include "moda/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

// Small software rasterizer for masks, polygons and strokes on [H x W]
// planes. Pixel (x, y) covers [x, x+1) x [y, y+1); its centre is (x+0.5, y+0.5).
namespace moda::raster {

using motion::Vec2;

// Binary mask, row-major, 0 or 1.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}
    std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
    std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
    std::size_t count() const;
};

// Even-odd point-in-polygon test.
bool inside_polygon(std::span<const Vec2> poly, double x, double y);

// Pixels whose centre lies inside the polygon.
Mask polygon_mask(std::size_t width, std::size_t height, std::span<const Vec2> poly);

// Fractional coverage in [0, 1] from samples x samples sub-pixel points.
Tensor polygon_coverage(std::size_t width, std::size_t height, std::span<const Vec2> poly, std::size_t samples = 4);

// Anti-aliased stroke: coverage = clamp(half_width + 0.5 - distance, 0, 1) to
// the segment, max-combined into plane ([H x W]).
void stroke_segment(Tensor& plane, Vec2 a, Vec2 b, double half_width = 0.5);
void stroke_polyline(Tensor& plane, std::span<const Vec2> points, bool closed, double half_width = 0.5);

// Dilation by a (2r+1) x (2r+1) square, applied `iterations` times.
Mask dilate_square(const Mask& mask, std::size_t radius, std::size_t iterations);
// Dilation by a Euclidean disk of the given radius.
Mask dilate_disk(const Mask& mask, double radius);

// |signed area| of a polygon.
double polygon_area(std::span<const Vec2> poly);

// Distance from p to segment ab.
double segment_distance(Vec2 p, Vec2 a, Vec2 b);

}  // namespace moda::raster

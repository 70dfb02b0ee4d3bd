#include "moda/raster.hpp"

#include <algorithm>
#include <cmath>

namespace moda::raster {

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

bool inside_polygon(std::span<const Vec2> poly, double x, double y) {
    bool in = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = poly[i], b = poly[j];
        if ((a.y > y) != (b.y > y)) {
            const double xc = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x < xc) {
                in = !in;
            }
        }
    }
    return in;
}

namespace {

struct Box {
    std::size_t x0, x1, y0, y1;  // half-open
};

Box bounds(std::span<const Vec2> pts, double pad, std::size_t width, std::size_t height) {
    double lx = 1e300, hx = -1e300, ly = 1e300, hy = -1e300;
    for (const auto& p : pts) {
        lx = std::min(lx, p.x);
        hx = std::max(hx, p.x);
        ly = std::min(ly, p.y);
        hy = std::max(hy, p.y);
    }
    auto clampi = [](double v, std::size_t hi) {
        return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(hi)));
    };
    return {clampi(std::floor(lx - pad), width), clampi(std::ceil(hx + pad) + 1, width),
            clampi(std::floor(ly - pad), height), clampi(std::ceil(hy + pad) + 1, height)};
}

}  // namespace

Mask polygon_mask(std::size_t width, std::size_t height, std::span<const Vec2> poly) {
    Mask m(width, height);
    if (poly.size() < 3) {
        return m;
    }
    const Box b = bounds(poly, 1.0, width, height);
    for (std::size_t y = b.y0; y < b.y1; ++y) {
        for (std::size_t x = b.x0; x < b.x1; ++x) {
            m.at(x, y) = inside_polygon(poly, x + 0.5, y + 0.5) ? 1 : 0;
        }
    }
    return m;
}

Tensor polygon_coverage(std::size_t width, std::size_t height, std::span<const Vec2> poly, std::size_t samples) {
    Tensor cov({height, width}, 0.0);
    if (poly.size() < 3) {
        return cov;
    }
    const Box b = bounds(poly, 1.0, width, height);
    const double inv = 1.0 / static_cast<double>(samples * samples);
    for (std::size_t y = b.y0; y < b.y1; ++y) {
        for (std::size_t x = b.x0; x < b.x1; ++x) {
            std::size_t hits = 0;
            for (std::size_t sy = 0; sy < samples; ++sy) {
                for (std::size_t sx = 0; sx < samples; ++sx) {
                    const double px = x + (sx + 0.5) / static_cast<double>(samples);
                    const double py = y + (sy + 0.5) / static_cast<double>(samples);
                    hits += inside_polygon(poly, px, py) ? 1 : 0;
                }
            }
            cov.at(y, x) = static_cast<double>(hits) * inv;
        }
    }
    return cov;
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

void stroke_segment(Tensor& plane, Vec2 a, Vec2 b, double half_width) {
    const std::size_t height = plane.dim(0), width = plane.dim(1);
    const Vec2 ends[2] = {a, b};
    const Box box = bounds(ends, half_width + 1.0, width, height);
    for (std::size_t y = box.y0; y < box.y1; ++y) {
        for (std::size_t x = box.x0; x < box.x1; ++x) {
            const double d = segment_distance({x + 0.5, y + 0.5}, a, b);
            const double c = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
            double& v = plane.at(y, x);
            v = std::max(v, c);
        }
    }
}

void stroke_polyline(Tensor& plane, std::span<const Vec2> points, bool closed, double half_width) {
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        stroke_segment(plane, points[i], points[i + 1], half_width);
    }
    if (closed && points.size() > 2) {
        stroke_segment(plane, points.back(), points.front(), half_width);
    }
}

Mask dilate_square(const Mask& mask, std::size_t radius, std::size_t iterations) {
    Mask cur = mask;
    const auto r = static_cast<std::ptrdiff_t>(radius);
    const auto w = static_cast<std::ptrdiff_t>(mask.width), h = static_cast<std::ptrdiff_t>(mask.height);
    for (std::size_t it = 0; it < iterations; ++it) {
        Mask next(mask.width, mask.height);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
            for (std::ptrdiff_t x = 0; x < w; ++x) {
                std::uint8_t v = 0;
                for (std::ptrdiff_t dy = -r; dy <= r && !v; ++dy) {
                    for (std::ptrdiff_t dx = -r; dx <= r && !v; ++dx) {
                        const std::ptrdiff_t yy = y + dy, xx = x + dx;
                        if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                            v = cur.bits[static_cast<std::size_t>(yy * w + xx)];
                        }
                    }
                }
                next.bits[static_cast<std::size_t>(y * w + x)] = v;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

Mask dilate_disk(const Mask& mask, double radius) {
    Mask out(mask.width, mask.height);
    const auto r = static_cast<std::ptrdiff_t>(std::ceil(radius));
    const auto w = static_cast<std::ptrdiff_t>(mask.width), h = static_cast<std::ptrdiff_t>(mask.height);
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            if (!mask.bits[static_cast<std::size_t>(y * w + x)]) {
                continue;
            }
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::ptrdiff_t yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < h && xx >= 0 && xx < w &&
                        static_cast<double>(dx * dx + dy * dy) <= radius * radius) {
                        out.bits[static_cast<std::size_t>(yy * w + xx)] = 1;
                    }
                }
            }
        }
    }
    return out;
}

double polygon_area(std::span<const Vec2> poly) {
    if (poly.size() < 3) {
        return 0.0;
    }
    double a = 0.0;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        a += poly[j].x * poly[i].y - poly[i].x * poly[j].y;
    }
    return std::abs(a) * 0.5;
}

}  // namespace moda::raster

#include "moda/metrics.hpp"

#include "moda/io.hpp"
#include "moda/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace moda::metrics {

namespace {

void check_pair(const PointSequence& pred, const PointSequence& gt) {
    require(pred.size() == gt.size(), ErrorCode::ShapeMismatch,
            "sequences differ in length: " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
    for (std::size_t t = 0; t < pred.size(); ++t) {
        require(pred[t].size() == gt[t].size() && !pred[t].empty(), ErrorCode::ShapeMismatch,
                "frame " + std::to_string(t) + " differs in point count");
    }
}

double norm(Vec3 a, Vec3 b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

PointSequence velocity(const PointSequence& s) {
    PointSequence out(s.size() - 1);
    for (std::size_t t = 1; t < s.size(); ++t) {
        out[t - 1].resize(s[t].size());
        for (std::size_t i = 0; i < s[t].size(); ++i) {
            out[t - 1][i] = {s[t][i].x - s[t - 1][i].x, s[t][i].y - s[t - 1][i].y, s[t][i].z - s[t - 1][i].z};
        }
    }
    return out;
}

}  // namespace

double lmd(const PointSequence& pred, const PointSequence& gt) {
    check_pair(pred, gt);
    require(!pred.empty(), ErrorCode::TooShort, "lmd needs at least one frame");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        for (std::size_t i = 0; i < pred[t].size(); ++i) {
            acc += norm(pred[t][i], gt[t][i]);
            ++n;
        }
    }
    return acc / static_cast<double>(n);
}

double lmd_v(const PointSequence& pred, const PointSequence& gt) {
    require(pred.size() >= 2 && gt.size() >= 2, ErrorCode::TooShort, "lmd_v needs at least two frames");
    check_pair(pred, gt);
    return lmd(velocity(pred), velocity(gt));
}

double mouth_iou(const std::vector<std::vector<Vec2>>& pred, const std::vector<std::vector<Vec2>>& gt,
                 std::size_t width, std::size_t height) {
    require(pred.size() == gt.size(), ErrorCode::ShapeMismatch, "mouth sequences differ in length");
    require(!pred.empty(), ErrorCode::TooShort, "mouth_iou needs at least one frame");
    double acc = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        for (const auto* poly : {&pred[t], &gt[t]}) {
            require(poly->size() >= 3 && raster::polygon_area(*poly) > 0.0, ErrorCode::DegeneratePolygon,
                    "mouth polygon of frame " + std::to_string(t) + " is degenerate");
        }
        const auto a = raster::polygon_mask(width, height, pred[t]);
        const auto b = raster::polygon_mask(width, height, gt[t]);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < a.bits.size(); ++i) {
            inter += a.bits[i] & b.bits[i];
            uni += a.bits[i] | b.bits[i];
        }
        acc += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return acc / static_cast<double>(pred.size());
}

FlowField FlowField::zero(std::size_t width, std::size_t height) {
    return {width, height, std::vector<double>(width * height * 2, 0.0)};
}

void FlowField::validate() const {
    require(uv.size() == width * height * 2, ErrorCode::ShapeMismatch, "flow payload does not match H x W x 2");
    for (double v : uv) {
        require(std::isfinite(v), ErrorCode::ShapeMismatch, "flow values must be finite");
    }
}

void write_flow(const std::filesystem::path& bin_path, const FlowField& flow) {
    flow.validate();
    io::write_f32(bin_path, flow.uv);
    io::write_json(bin_path.string() + ".json", {{"width", flow.width}, {"height", flow.height}, {"channels", 2}});
}

FlowField read_flow(const std::filesystem::path& bin_path) {
    const auto j = io::read_json(bin_path.string() + ".json");
    FlowField f;
    try {
        f.width = j.at("width").get<std::size_t>();
        f.height = j.at("height").get<std::size_t>();
    } catch (const io::Json::exception& e) {
        fail(ErrorCode::FormatError, bin_path.string() + ".json: " + e.what());
    }
    f.uv = io::read_f32(bin_path);
    f.validate();
    return f;
}

Tensor warp(const Tensor& image, const FlowField& flow) {
    require(image.rank() == 3 && image.dim(1) == flow.height && image.dim(2) == flow.width, ErrorCode::ShapeMismatch,
            "flow " + std::to_string(flow.width) + "x" + std::to_string(flow.height) + " does not match image " +
                shape_string(image.shape()));
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out(image.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t k = (y * w + x) * 2;
            const double sx = std::clamp(static_cast<double>(x) + flow.uv[k], 0.0, static_cast<double>(w - 1));
            const double sy = std::clamp(static_cast<double>(y) + flow.uv[k + 1], 0.0, static_cast<double>(h - 1));
            const auto x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
            const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* p = image.data().data() + ch * h * w;
                out[ch * h * w + y * w + x] = (1 - fy) * ((1 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1]) +
                                              fy * ((1 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1]);
            }
        }
    }
    return out;
}

double tcm(const std::vector<Tensor>& reference, const std::vector<Tensor>& generated,
           const std::vector<FlowField>& ref_flows, const std::vector<FlowField>& gen_flows, double epsilon) {
    require(reference.size() == generated.size(), ErrorCode::LengthMismatch,
            "reference has " + std::to_string(reference.size()) + " frames, generated " +
                std::to_string(generated.size()));
    require(reference.size() >= 2, ErrorCode::LengthMismatch, "tcm needs at least two frames");
    require(ref_flows.size() == reference.size() - 1 && gen_flows.size() == reference.size() - 1,
            ErrorCode::LengthMismatch, "tcm needs one flow per consecutive frame pair");
    auto residual = [](const Tensor& cur, const Tensor& prev, const FlowField& flow) {
        const Tensor w = warp(prev, flow);
        double acc = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const double d = cur[i] - w[i];
            acc += d * d;
        }
        return acc;
    };
    double acc = 0.0;
    for (std::size_t t = 1; t < reference.size(); ++t) {
        require(same_shape(reference[t], generated[t]), ErrorCode::ShapeMismatch,
                "frame " + std::to_string(t) + " differs in shape");
        const double num = residual(reference[t], reference[t - 1], ref_flows[t - 1]);
        const double den = residual(generated[t], generated[t - 1], gen_flows[t - 1]);
        acc += std::exp(-((num + epsilon) / (den + epsilon) - 1.0));
    }
    return acc / static_cast<double>(reference.size() - 1);
}

double diversity(const std::vector<PointSequence>& samples) {
    require(samples.size() >= 2, ErrorCode::TooFewSamples,
            "diversity needs at least two samples, got " + std::to_string(samples.size()));
    for (const auto& s : samples) {
        check_pair(s, samples.front());
    }
    const double n = static_cast<double>(samples.size());
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < samples[0].size(); ++t) {
        for (std::size_t i = 0; i < samples[0][t].size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                auto get = [&](const PointSequence& s) {
                    const Vec3 p = s[t][i];
                    return c == 0 ? p.x : (c == 1 ? p.y : p.z);
                };
                // Deviations from the first sample, so identical samples give exactly 0.
                const double base = get(samples.front());
                double mean = 0.0;
                for (const auto& s : samples) {
                    mean += get(s) - base;
                }
                mean /= n;
                double var = 0.0;
                for (const auto& s : samples) {
                    const double d = get(s) - base - mean;
                    var += d * d;
                }
                acc += var / n;
                ++count;
            }
        }
    }
    return acc / static_cast<double>(count);
}

std::string Report::to_text() const {
    std::string out = "metric        value\n";
    char line[128];
    for (const auto& [k, v] : values) {
        std::snprintf(line, sizeof line, "%-12s  %.6f\n", k.c_str(), v);
        out += line;
    }
    for (const auto& [k, v] : notes) {
        out += k + ": " + v + "\n";
    }
    return out;
}

void Report::write(const std::filesystem::path& json_path, const std::filesystem::path& text_path) const {
    io::write_json(json_path, {{"metrics", values}, {"notes", notes}});
    io::write_file_atomic(text_path, to_text());
}

}  // namespace moda::metrics

#include "moda/synthetic.hpp"

#include "moda/io.hpp"
#include "moda/nn.hpp"
#include "moda/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace moda::synth {

using motion::Vec2;
using motion::Vec3;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMouthY = 0.55;
constexpr double kFaceCx = 0.0, kFaceCy = 0.05, kFaceRx = 0.95, kFaceRy = 1.2;
constexpr double kHeadY = -0.35, kHeadZ = 4.0;

double depth_at(double x, double y) {
    const double u = x / kFaceRx, v = (y - kFaceCy) / kFaceRy;
    return -0.4 * std::sqrt(std::max(0.0, 1.0 - u * u - v * v));
}

void ellipse(std::vector<Vec3>& pts, std::size_t first, std::size_t n, double cx, double cy, double rx, double ry) {
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
        const double x = cx + rx * std::cos(a), y = cy + ry * std::sin(a);
        pts[first + i] = {x, y, depth_at(x, y)};
    }
}

void brow(std::vector<Vec3>& pts, std::size_t first, double cx) {
    for (std::size_t i = 0; i < 14; ++i) {
        const double s = -1.0 + 2.0 * static_cast<double>(i) / 13.0;
        const double x = cx + 0.2 * s, y = -0.45 - 0.05 * (1.0 - s * s);
        pts[first + i] = {x, y, depth_at(x, y)};
    }
}

std::vector<Vec2> image_points(std::span<const Vec3> pts, std::size_t first, std::size_t n, std::size_t width,
                               std::size_t height) {
    const auto cam = motion::CameraModel::default_for(width, height);
    return motion::project(pts.subspan(first, n), cam);
}

// Upper-body silhouette in pixels; sways with the head translation.
std::vector<Vec2> body_polygon(const motion::HeadPose& pose, std::size_t width, std::size_t height) {
    const double w = static_cast<double>(width), h = static_cast<double>(height);
    const double sway = 0.25 * pose.translation[0];
    std::vector<Vec2> left;
    const std::size_t n = 24;
    for (std::size_t i = 0; i <= n; ++i) {
        const double phi = 0.5 * kPi * static_cast<double>(i) / static_cast<double>(n);
        left.push_back({0.38 - 0.40 * std::sin(phi), 0.80 + 0.14 * (1.0 - std::cos(phi))});
    }
    std::vector<Vec2> poly;
    poly.push_back({(0.38 + sway) * w, 0.60 * h});
    for (const auto& p : left) {
        poly.push_back({(p.x + sway) * w, p.y * h});
    }
    poly.push_back({(-0.02 + sway) * w, 1.05 * h});
    poly.push_back({(1.02 + sway) * w, 1.05 * h});
    for (auto it = left.rbegin(); it != left.rend(); ++it) {
        poly.push_back({(1.0 - it->x + sway) * w, it->y * h});
    }
    poly.push_back({(0.62 + sway) * w, 0.60 * h});
    return poly;
}

std::vector<Vec2> hair_polygon(const motion::HeadPose& pose, std::size_t width, std::size_t height,
                               const SubjectStyle& style) {
    std::vector<Vec3> ring(48);
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const double a = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(ring.size());
        ring[i] = {1.05 * kFaceRx * style.width * std::cos(a), -0.12 + 1.12 * kFaceRy * style.height * std::sin(a),
                   0.0};
    }
    const auto cam_pts = motion::to_camera(ring, pose);
    return motion::project(cam_pts, motion::CameraModel::default_for(width, height));
}

struct Rgb {
    double r, g, b;
};

void paint(Tensor& img, const Tensor& coverage, Rgb c) {
    const std::size_t plane = coverage.size();
    const double col[3] = {c.r, c.g, c.b};
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double a = coverage[i];
            img[ch * plane + i] = img[ch * plane + i] * (1.0 - a) + col[ch] * a;
        }
    }
}

}  // namespace

motion::FacePoints canonical_face(double mouth_open, double eye_open, const SubjectStyle& style) {
    std::vector<Vec3> p(motion::kFacePoints);
    ellipse(p, 0, 20, 0.0, kMouthY, 0.35, 0.06 + 0.18 * mouth_open);
    ellipse(p, 20, 20, 0.0, kMouthY, 0.25, 0.02 + 0.14 * mouth_open);
    ellipse(p, 40, 16, -0.5, -0.25, 0.17, 0.02 + 0.07 * eye_open);
    ellipse(p, 56, 16, 0.5, -0.25, 0.17, 0.02 + 0.07 * eye_open);
    brow(p, 72, -0.5);
    brow(p, 86, 0.5);
    ellipse(p, 100, 64, kFaceCx, kFaceCy, kFaceRx, kFaceRy);
    for (std::size_t i = 0; i < 6; ++i) {
        const double y = -0.15 + 0.07 * static_cast<double>(i);
        p[164 + i] = {0.0, y, depth_at(0.0, y) - 0.15};
    }
    for (std::size_t i = 0; i < 6; ++i) {
        const double a = kPi * (0.15 + 0.7 * static_cast<double>(i) / 5.0);
        const double x = 0.12 * std::cos(a), y = 0.25 + 0.05 * std::sin(a);
        p[170 + i] = {x, y, depth_at(x, y) - 0.08};
    }
    // Interior fill on a golden-angle spiral.
    const std::size_t interior = motion::kFacePoints - 176;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < interior; ++i) {
        const double r = 0.85 * std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(interior));
        const double a = golden * static_cast<double>(i);
        const double x = kFaceCx + r * kFaceRx * std::cos(a), y = kFaceCy + r * kFaceRy * std::sin(a);
        p[176 + i] = {x, y, depth_at(x, y)};
    }
    for (auto& q : p) {
        q.x *= style.width;
        q.y *= style.height;
    }
    return motion::FacePoints(p);
}

std::vector<std::uint8_t> draw_labels(std::span<const Vec3> camera_points, const motion::HeadPose& pose,
                                      std::size_t width, std::size_t height, const SubjectStyle& style) {
    std::vector<std::uint8_t> labels(width * height, kBackground);
    auto fill = [&](const raster::Mask& m, std::uint8_t label) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (m.bits[i]) {
                labels[i] = label;
            }
        }
    };
    fill(raster::polygon_mask(width, height, body_polygon(pose, width, height)), kBody);
    fill(raster::polygon_mask(width, height, hair_polygon(pose, width, height, style)), kHair);
    fill(raster::polygon_mask(width, height, image_points(camera_points, 100, 64, width, height)), kFace);
    return labels;
}

Tensor draw_frame(std::span<const Vec3> camera_points, const motion::HeadPose& pose, std::size_t width,
                  std::size_t height, const SubjectStyle& style) {
    Tensor img({3, height, width});
    const std::size_t plane = width * height;
    const Rgb bg{0.85, 0.88, 0.92};
    for (std::size_t i = 0; i < plane; ++i) {
        img[i] = bg.r;
        img[plane + i] = bg.g;
        img[2 * plane + i] = bg.b;
    }
    const double tone = 0.08 * style.skin;
    paint(img, raster::polygon_coverage(width, height, body_polygon(pose, width, height)), {0.25, 0.35, 0.60});
    paint(img, raster::polygon_coverage(width, height, hair_polygon(pose, width, height, style)), {0.20, 0.12, 0.08});
    paint(img, raster::polygon_coverage(width, height, image_points(camera_points, 100, 64, width, height)),
          {0.93 + tone, 0.76 + tone, 0.62 + tone});
    for (std::size_t first : {40u, 56u}) {
        paint(img, raster::polygon_coverage(width, height, image_points(camera_points, first, 16, width, height)),
              {0.10, 0.10, 0.15});
    }
    Tensor brows({height, width}, 0.0);
    raster::stroke_polyline(brows, image_points(camera_points, 72, 14, width, height), false, 0.6);
    raster::stroke_polyline(brows, image_points(camera_points, 86, 14, width, height), false, 0.6);
    paint(img, brows, {0.30, 0.20, 0.10});
    paint(img, raster::polygon_coverage(width, height, image_points(camera_points, 0, 20, width, height)),
          {0.70, 0.20, 0.25});
    paint(img, raster::polygon_coverage(width, height, image_points(camera_points, 20, 20, width, height)),
          {0.25, 0.05, 0.08});
    for (auto& v : img.data()) {
        v = std::clamp(2.0 * v - 1.0, -1.0, 1.0);
    }
    return img;
}

SyntheticClip generate_clip(const ClipSpec& spec) {
    require(spec.frames >= 1, ErrorCode::ConfigError, "synthetic clip needs at least one frame");
    require(spec.fps > 0.0 && spec.sample_rate > 0.0, ErrorCode::ConfigError, "fps and sample rate must be positive");
    require(spec.width >= 16 && spec.height >= 16, ErrorCode::ConfigError, "synthetic frames must be at least 16 px");
    nn::Rng rng(spec.seed);
    SyntheticClip clip;
    clip.spec = spec;
    const double ph[6] = {rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi),
                          rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi)};

    // Blinks of four frames at irregular intervals.
    std::vector<std::size_t> blinks;
    for (std::size_t t = static_cast<std::size_t>(rng.uniform(5, 30)); t < spec.frames;
         t += static_cast<std::size_t>(rng.uniform(30, 70))) {
        blinks.push_back(t);
    }

    const std::size_t samples_per_frame = static_cast<std::size_t>(std::llround(spec.sample_rate / spec.fps));
    clip.audio.sample_rate = spec.sample_rate;
    double phase = 0.0;
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const double tt = static_cast<double>(t);
        const double open = std::clamp(
            0.45 + 0.35 * std::sin(2 * kPi * tt / 7.3 + ph[0]) + 0.2 * std::sin(2 * kPi * tt / 3.1 + ph[1]), 0.0, 1.0);
        double eye = 1.0;
        for (std::size_t b : blinks) {
            if (t >= b && t < b + 4) {
                eye = 0.1 + 0.3 * std::abs(static_cast<double>(t - b) - 1.5);
            }
        }
        motion::HeadPose pose;
        pose.rotation = {0.05 * std::sin(2 * kPi * tt / 60 + ph[2]), 0.08 * std::sin(2 * kPi * tt / 90 + ph[3]),
                         0.03 * std::sin(2 * kPi * tt / 45 + ph[4])};
        pose.translation = {0.04 * std::sin(2 * kPi * tt / 80 + ph[5]), kHeadY, kHeadZ};

        const auto face = canonical_face(open, eye, spec.style);
        const auto pts = face.points();
        auto cam = motion::to_camera(pts, pose);

        clip.mouth_open.push_back(open);
        clip.eye_open.push_back(eye);
        clip.poses.push_back(pose);
        clip.canonical.push_back(face);
        clip.labels.push_back(draw_labels(cam, pose, spec.width, spec.height, spec.style));
        clip.images.push_back(draw_frame(cam, pose, spec.width, spec.height, spec.style));
        clip.camera.push_back(std::move(cam));

        const double amp = 0.05 + 0.5 * open, freq = 180.0 + 320.0 * open;
        for (std::size_t i = 0; i < samples_per_frame; ++i) {
            clip.audio.samples.push_back(amp * std::sin(phase));
            phase += 2 * kPi * freq / spec.sample_rate;
        }
        phase = std::fmod(phase, 2 * kPi);
    }
    return clip;
}

void write_clip(const SyntheticClip& clip, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "seg");
    const auto& spec = clip.spec;
    motion::LandmarkSequence seq;
    seq.frames = clip.camera.size();
    seq.points = motion::kFacePoints;
    seq.dims = 3;
    char name[32];
    for (std::size_t t = 0; t < clip.camera.size(); ++t) {
        for (const auto& p : clip.camera[t]) {
            seq.values.insert(seq.values.end(), {p.x, p.y, p.z});
        }
        std::snprintf(name, sizeof name, "%06zu.png", t);
        io::write_png(dir / "frames" / name, io::tensor_to_image(clip.images[t]));
        io::Image seg;
        seg.width = spec.width;
        seg.height = spec.height;
        seg.channels = 1;
        seg.pixels = clip.labels[t];
        io::write_png(dir / "seg" / name, seg);
    }
    motion::write_landmarks(dir / "landmarks.bin", seq);
    motion::write_poses(dir / "poses.bin", clip.poses);
    io::write_wav(dir / "audio.wav", {clip.audio.samples, clip.audio.sample_rate});
    io::write_json(dir / "palette.json", {{"background", kBackground}, {"hair", kHair}, {"face", kFace},
                                          {"upper_body", kBody}});
    motion::FaceTopology::synthetic().save(dir / "topology.json");
    io::write_json(dir / "clip.json", {{"frames", clip.camera.size()}, {"fps", spec.fps}, {"width", spec.width},
                                       {"height", spec.height}, {"seed", spec.seed}});
}

}  // namespace moda::synth

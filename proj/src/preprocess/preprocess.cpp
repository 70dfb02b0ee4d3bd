#include "moda/preprocess.hpp"

#include "moda/audio.hpp"
#include "moda/io.hpp"
#include "moda/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace moda::prep {

namespace fs = std::filesystem;

Palette Palette::load(const fs::path& path) {
    const auto j = io::read_json(path);
    Palette p;
    try {
        p.background = j.at("background").get<std::uint8_t>();
        p.hair = j.at("hair").get<std::uint8_t>();
        p.face = j.at("face").get<std::uint8_t>();
        p.body = j.at("upper_body").get<std::uint8_t>();
    } catch (const io::Json::exception& e) {
        fail(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
    return p;
}

SegmentationMap SegmentationMap::read_png(const fs::path& path) {
    const io::Image img = io::read_png(path);
    require(img.channels == 1, ErrorCode::FormatError, path.string() + ": label image must be single-channel");
    return {img.width, img.height, img.pixels};
}

CanonicalFace canonicalize(std::span<const Vec3> camera_landmarks, const motion::HeadPose& pose,
                           const motion::FaceTopology& topo) {
    require(camera_landmarks.size() == motion::kFacePoints, ErrorCode::ShapeMismatch,
            "canonicalize expects 478 landmarks, got " + std::to_string(camera_landmarks.size()));
    const motion::FacePoints face(motion::to_canonical(camera_landmarks, pose));
    return {face, motion::select_mouth(face, topo), motion::select_eyes(face, topo)};
}

raster::Mask semantic_boundary(const SegmentationMap& seg, const Palette& palette) {
    raster::Mask out(seg.width, seg.height);
    bool any_body = false;
    auto open = [&](std::size_t x, std::size_t y) {
        const auto l = seg.at(x, y);
        return l == palette.background || l == palette.hair;
    };
    for (std::size_t y = 0; y < seg.height; ++y) {
        for (std::size_t x = 0; x < seg.width; ++x) {
            if (seg.at(x, y) != palette.body) {
                continue;
            }
            any_body = true;
            const bool edge = (x > 0 && open(x - 1, y)) || (x + 1 < seg.width && open(x + 1, y)) ||
                              (y > 0 && open(x, y - 1)) || (y + 1 < seg.height && open(x, y + 1));
            out.at(x, y) = edge ? 1 : 0;
        }
    }
    require(any_body, ErrorCode::NoBody, "segmentation has no upper-body pixels");
    return out;
}

namespace {

void dp_recurse(std::span<const Vec2> pts, std::size_t lo, std::size_t hi, double eps, std::vector<bool>& keep) {
    if (hi <= lo + 1) {
        return;
    }
    double worst = -1.0;
    std::size_t idx = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
        const double d = raster::segment_distance(pts[i], pts[lo], pts[hi]);
        if (d > worst) {
            worst = d;
            idx = i;
        }
    }
    if (worst > eps) {
        keep[idx] = true;
        dp_recurse(pts, lo, idx, eps, keep);
        dp_recurse(pts, idx, hi, eps, keep);
    }
}

double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool lower_xy(Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }

}  // namespace

std::vector<Vec2> polygon_fit(std::span<const Vec2> contour, double epsilon) {
    require(contour.size() >= 3, ErrorCode::TooFewPoints,
            "polygon fitting needs at least 3 points, got " + std::to_string(contour.size()));
    std::vector<bool> keep(contour.size(), false);
    keep.front() = keep.back() = true;
    dp_recurse(contour, 0, contour.size() - 1, epsilon, keep);
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < contour.size(); ++i) {
        if (keep[i]) {
            out.push_back(contour[i]);
        }
    }
    return out;
}

std::vector<Vec2> densify(std::span<const Vec2> polyline, double step) {
    std::vector<Vec2> out;
    if (polyline.empty()) {
        return out;
    }
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
        const Vec2 a = polyline[i], b = polyline[i + 1];
        const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dist(a, b) / step)));
        for (std::size_t s = 0; s < n; ++s) {
            const double f = static_cast<double>(s) / static_cast<double>(n);
            out.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
        }
    }
    out.push_back(polyline.back());
    return out;
}

ShoulderContours shoulder_contours(const SegmentationMap& seg, const Palette& palette, const TorsoConfig& cfg) {
    const raster::Mask band =
        raster::dilate_square(semantic_boundary(seg, palette), cfg.dilation_radius, cfg.dilation_iterations);

    // Split line: centre of the face bounding box, or of the body when no face is labelled.
    std::size_t fx0 = seg.width, fx1 = 0, bx0 = seg.width, bx1 = 0;
    for (std::size_t y = 0; y < seg.height; ++y) {
        for (std::size_t x = 0; x < seg.width; ++x) {
            const auto l = seg.at(x, y);
            if (l == palette.face) {
                fx0 = std::min(fx0, x);
                fx1 = std::max(fx1, x);
            } else if (l == palette.body) {
                bx0 = std::min(bx0, x);
                bx1 = std::max(bx1, x);
            }
        }
    }
    ShoulderContours c;
    c.split_x = fx0 <= fx1 ? 0.5 * static_cast<double>(fx0 + fx1 + 1) : 0.5 * static_cast<double>(bx0 + bx1 + 1);

    // Skyline: the topmost band pixel of every column.
    for (std::size_t x = 0; x < seg.width; ++x) {
        for (std::size_t y = 0; y < seg.height; ++y) {
            if (band.at(x, y)) {
                const Vec2 p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
                (p.x < c.split_x ? c.left : c.right).push_back(p);
                break;
            }
        }
    }
    std::reverse(c.left.begin(), c.left.end());
    return c;
}

std::vector<Vec2> select_along_arc(std::span<const Vec2> polyline, std::span<const Vec2> candidates, std::size_t k) {
    require(candidates.size() >= k, ErrorCode::DegenerateContour,
            "shoulder contour has " + std::to_string(candidates.size()) + " candidates, need " + std::to_string(k));
    std::vector<double> cum{0.0};
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
        cum.push_back(cum.back() + dist(polyline[i], polyline[i + 1]));
    }
    const double total = cum.back();
    std::vector<bool> used(candidates.size(), false);
    std::vector<Vec2> out;
    for (std::size_t j = 0; j < k; ++j) {
        const double s = k == 1 ? 0.0 : total * static_cast<double>(j) / static_cast<double>(k - 1);
        std::size_t seg_i = 0;
        while (seg_i + 2 < cum.size() && cum[seg_i + 1] < s) {
            ++seg_i;
        }
        Vec2 anchor = polyline.front();
        if (polyline.size() > 1) {
            const double len = cum[seg_i + 1] - cum[seg_i];
            const double f = len > 0.0 ? std::clamp((s - cum[seg_i]) / len, 0.0, 1.0) : 0.0;
            const Vec2 a = polyline[seg_i], b = polyline[seg_i + 1];
            anchor = {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
        }
        std::size_t best = candidates.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (used[i]) {
                continue;
            }
            const double d = dist(candidates[i], anchor);
            if (d < best_d || (d == best_d && lower_xy(candidates[i], candidates[best]))) {
                best_d = d;
                best = i;
            }
        }
        used[best] = true;
        out.push_back(candidates[best]);
    }
    return out;
}

motion::TorsoPoints extract_torso_points(const SegmentationMap& seg, double face_depth, const Palette& palette,
                                         const TorsoConfig& cfg) {
    require(std::isfinite(face_depth), ErrorCode::ShapeMismatch, "face depth must be finite");
    require(2 * cfg.k == motion::kTorsoPoints, ErrorCode::ConfigError,
            "torso representation holds 9 points per side, k = " + std::to_string(cfg.k));
    const auto contours = shoulder_contours(seg, palette, cfg);
    motion::TorsoPoints out;
    std::size_t row = 0;
    for (const auto* side : {&contours.left, &contours.right}) {
        require(side->size() >= 3, ErrorCode::DegenerateContour,
                "shoulder contour has only " + std::to_string(side->size()) + " columns");
        const auto fitted = polygon_fit(*side, cfg.epsilon);
        const auto candidates = densify(fitted, cfg.densify_step);
        for (const auto& p : select_along_arc(fitted, candidates, cfg.k)) {
            out.set(row++, {p.x, p.y, face_depth});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> Dataset::train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < size(); ++t) {
        if (t < val_begin || t >= val_end) {
            out.push_back(t);
        }
    }
    return out;
}

std::vector<std::size_t> Dataset::val_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t t = val_begin; t < val_end; ++t) {
        out.push_back(t);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Dataset::train_segments() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (val_begin > 0) {
        out.emplace_back(0, val_begin);
    }
    if (val_end < size()) {
        out.emplace_back(val_end, size());
    }
    return out;
}

fs::path Dataset::frame_path(std::size_t t) const {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", t);
    return clip_dir / "frames" / name;
}

Tensor Dataset::load_frame(std::size_t t) const { return io::image_to_tensor(io::read_png(frame_path(t))); }

namespace {

template <std::size_t N>
Tensor stack_points(const std::vector<motion::MotionRepresentation>& frames,
                    const motion::PointSet<N>& (*get)(const motion::MotionRepresentation&)) {
    Tensor out({frames.size(), N * 3});
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto flat = get(frames[t]).flat();
        std::copy(flat.begin(), flat.end(), out.data().begin() + static_cast<std::ptrdiff_t>(t * N * 3));
    }
    return out;
}

template <std::size_t N>
motion::PointSet<N> row_points(const Tensor& t, std::size_t row) {
    const std::size_t w = N * 3;
    return motion::PointSet<N>(std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(row * w),
                                                   t.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * w)));
}

std::size_t count_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        return 0;
    }
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        n += e.path().extension() == ".png" ? 1 : 0;
    }
    return n;
}

}  // namespace

void Dataset::save(const fs::path& dir) const {
    fs::create_directories(dir);
    std::map<std::string, Tensor> arrays;
    arrays["audio"] = audio;
    arrays["face"] = stack_points<motion::kFacePoints>(frames, [](const motion::MotionRepresentation& m) -> const motion::FacePoints& { return m.face; });
    arrays["mouth"] = stack_points<motion::kMouthPoints>(frames, [](const motion::MotionRepresentation& m) -> const motion::MouthPoints& { return m.mouth; });
    arrays["eyes"] = stack_points<motion::kEyePoints>(frames, [](const motion::MotionRepresentation& m) -> const motion::EyePoints& { return m.eyes; });
    arrays["torso"] = stack_points<motion::kTorsoPoints>(frames, [](const motion::MotionRepresentation& m) -> const motion::TorsoPoints& { return m.torso; });
    Tensor pose({frames.size(), motion::kPoseScalars});
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto f = frames[t].pose.flat();
        std::copy(f.begin(), f.end(), pose.data().begin() + static_cast<std::ptrdiff_t>(t * motion::kPoseScalars));
    }
    arrays["pose"] = pose;
    nn::write_tensor_archive(dir / "arrays.bin", arrays);
    topology.save(dir / "topology.json");
    io::write_json(dir / "dataset.json", {{"clip_dir", fs::absolute(clip_dir).string()},
                                          {"frames", size()},
                                          {"width", width},
                                          {"height", height},
                                          {"fps", fps},
                                          {"val_begin", val_begin},
                                          {"val_end", val_end}});
}

Dataset Dataset::load(const fs::path& dir) {
    require(fs::exists(dir / "dataset.json"), ErrorCode::DatasetEmpty, dir.string() + " holds no processed dataset");
    const auto j = io::read_json(dir / "dataset.json");
    Dataset d;
    std::size_t frames = 0;
    try {
        d.clip_dir = j.at("clip_dir").get<std::string>();
        frames = j.at("frames").get<std::size_t>();
        d.width = j.at("width").get<std::size_t>();
        d.height = j.at("height").get<std::size_t>();
        d.fps = j.at("fps").get<double>();
        d.val_begin = j.at("val_begin").get<std::size_t>();
        d.val_end = j.at("val_end").get<std::size_t>();
    } catch (const io::Json::exception& e) {
        fail(ErrorCode::FormatError, (dir / "dataset.json").string() + ": " + e.what());
    }
    d.topology = motion::FaceTopology::load(dir / "topology.json");
    auto arrays = nn::read_tensor_archive(dir / "arrays.bin");
    for (const char* key : {"audio", "face", "mouth", "eyes", "torso", "pose"}) {
        require(arrays.count(key) && arrays[key].rank() == 2 && arrays[key].dim(0) == frames, ErrorCode::FormatError,
                (dir / "arrays.bin").string() + ": stream " + key + " missing or mis-sized");
    }
    d.audio = arrays["audio"];
    for (std::size_t t = 0; t < frames; ++t) {
        motion::MotionRepresentation m;
        m.face = row_points<motion::kFacePoints>(arrays["face"], t);
        m.mouth = row_points<motion::kMouthPoints>(arrays["mouth"], t);
        m.eyes = row_points<motion::kEyePoints>(arrays["eyes"], t);
        m.torso = row_points<motion::kTorsoPoints>(arrays["torso"], t);
        m.pose = motion::HeadPose::from_flat(
            std::span<const double>(arrays["pose"].data()).subspan(t * motion::kPoseScalars, motion::kPoseScalars));
        d.frames.push_back(std::move(m));
    }
    require(!d.frames.empty(), ErrorCode::DatasetEmpty, dir.string() + " has no frames");
    const auto& f0 = d.frames.front();
    d.subject = {f0.face, f0.mouth, f0.eyes, f0.pose, f0.torso};
    return d;
}

Dataset build_dataset(const fs::path& clip_dir, const DatasetOptions& opts) {
    require(fs::is_directory(clip_dir), ErrorCode::DatasetEmpty, clip_dir.string() + " is not a directory");
    require(opts.val_fraction >= 0.0 && opts.val_fraction < 1.0, ErrorCode::ConfigError,
            "validation fraction must lie in [0, 1)");

    // Count every stream before reading any of them in full.
    std::map<std::string, std::size_t> counts;
    counts["frames"] = count_pngs(clip_dir / "frames");
    counts["seg"] = count_pngs(clip_dir / "seg");
    motion::LandmarkSequence lms;
    if (fs::exists(clip_dir / "landmarks.bin")) {
        lms = motion::read_landmarks(clip_dir / "landmarks.bin");
        require(lms.points == motion::kFacePoints && lms.dims == 3, ErrorCode::ShapeMismatch,
                "landmarks.bin must hold 478 x 3 points per frame");
    }
    counts["landmarks"] = lms.frames;
    std::vector<motion::HeadPose> poses;
    if (fs::exists(clip_dir / "poses.bin")) {
        poses = motion::read_poses(clip_dir / "poses.bin");
    }
    counts["poses"] = poses.size();
    audio::Waveform wave;
    if (fs::exists(clip_dir / "audio.wav")) {
        wave = audio::load_wav(clip_dir / "audio.wav");
    }
    counts["audio"] = audio::frame_count(wave.samples.size(), wave.sample_rate, opts.fps);

    const std::size_t n = counts["frames"];
    std::string mismatch;
    for (const auto& [name, c] : counts) {
        if (c != n) {
            mismatch += " " + name + "=" + std::to_string(c);
        }
    }
    if (!mismatch.empty()) {
        fail(ErrorCode::CountMismatch, clip_dir.string() + ": stream lengths differ (frames=" + std::to_string(n) +
                                           "):" + mismatch);
    }
    require(n > 0, ErrorCode::DatasetEmpty, clip_dir.string() + " has no frames");

    Dataset d;
    d.clip_dir = clip_dir;
    d.fps = opts.fps;
    d.topology = fs::exists(clip_dir / "topology.json") ? motion::FaceTopology::load(clip_dir / "topology.json")
                                                         : motion::FaceTopology::synthetic();
    const Palette palette =
        fs::exists(clip_dir / "palette.json") ? Palette::load(clip_dir / "palette.json") : Palette{};

    if (opts.feature_file.empty()) {
        d.audio = audio::extract_features(wave, opts.fps, audio::FilterbankExtractor({opts.n_mels})).features;
    } else {
        d.audio = audio::extract_features(wave, opts.fps, audio::FileFeatureExtractor(opts.feature_file)).features;
    }

    d.frames.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto cam = lms.frame(t);
        const auto canon = canonicalize(cam, poses[t], d.topology);
        double depth = 0.0;
        for (const auto& p : cam) {
            depth += p.z;
        }
        depth /= static_cast<double>(cam.size());

        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", t);
        const auto seg = SegmentationMap::read_png(clip_dir / "seg" / name);
        if (t == 0) {
            d.width = seg.width;
            d.height = seg.height;
        }
        require(seg.width == d.width && seg.height == d.height, ErrorCode::ShapeMismatch,
                std::string("segmentation ") + name + " differs in size from frame 0");
        motion::TorsoPoints torso = extract_torso_points(seg, depth, palette, opts.torso);
        for (std::size_t i = 0; i < motion::kTorsoPoints; ++i) {
            const auto p = torso.point(i);
            torso.set(i, {p.x / static_cast<double>(d.width), p.y / static_cast<double>(d.height), p.z});
        }
        d.frames[t] = {canon.mouth, canon.eyes, canon.face, poses[t], torso};
    }
    const auto& f0 = d.frames.front();
    d.subject = {f0.face, f0.mouth, f0.eyes, f0.pose, f0.torso};

    const auto val_len = static_cast<std::size_t>(std::llround(opts.val_fraction * static_cast<double>(n)));
    nn::Rng rng(opts.split_seed);
    const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, n - val_len)(rng.engine());
    d.val_begin = offset;
    d.val_end = offset + val_len;
    return d;
}

}  // namespace moda::prep

#include "moda/motion.hpp"

#include "moda/io.hpp"

namespace moda::motion {

HeadPose HeadPose::from_flat(std::span<const double> v) {
    require(v.size() == kPoseScalars, ErrorCode::ShapeMismatch, "head pose needs 6 scalars");
    HeadPose p;
    for (std::size_t i = 0; i < 3; ++i) {
        p.rotation[i] = v[i];
        p.translation[i] = v[3 + i];
    }
    return p;
}

namespace {

Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}

Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}

Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

}  // namespace

Mat3 transpose(const Mat3& m) {
    Mat3 t{};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            t[i][j] = m[j][i];
        }
    }
    return t;
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t k = 0; k < 3; ++k) {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    return c;
}

Vec3 apply(const Mat3& m, Vec3 p) {
    return {m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z, m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z};
}

Mat3 euler_to_matrix(const HeadPose& pose, EulerOrder order) {
    const auto& r = pose.rotation;
    switch (order) {
        case EulerOrder::IntrinsicXYZ: return multiply(multiply(rot_x(r[0]), rot_y(r[1])), rot_z(r[2]));
        case EulerOrder::IntrinsicZYX: return multiply(multiply(rot_z(r[2]), rot_y(r[1])), rot_x(r[0]));
    }
    return rot_x(0.0);
}

std::vector<Vec3> to_camera(std::span<const Vec3> points, const HeadPose& pose, EulerOrder order) {
    const Mat3 r = euler_to_matrix(pose, order);
    std::vector<Vec3> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 q = apply(r, points[i]);
        out[i] = {q.x + pose.translation[0], q.y + pose.translation[1], q.z + pose.translation[2]};
    }
    return out;
}

std::vector<Vec3> to_canonical(std::span<const Vec3> points, const HeadPose& pose, EulerOrder order) {
    const Mat3 rt = transpose(euler_to_matrix(pose, order));
    std::vector<Vec3> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 d{points[i].x - pose.translation[0], points[i].y - pose.translation[1],
                     points[i].z - pose.translation[2]};
        out[i] = apply(rt, d);
    }
    return out;
}

void CameraModel::validate() const {
    require(scale > 0.0 && std::isfinite(scale), ErrorCode::ConfigError, "camera scale/focal must be positive");
    require(width > 0 && height > 0, ErrorCode::ConfigError, "camera image size must be positive");
}

CameraModel CameraModel::default_for(std::size_t width, std::size_t height) {
    CameraModel cam;
    cam.mode = Mode::Orthographic;
    cam.width = width;
    cam.height = height;
    cam.scale = static_cast<double>(std::min(width, height)) / 4.0;
    cam.principal = {static_cast<double>(width) / 2.0, static_cast<double>(height) / 2.0};
    return cam;
}

std::vector<Vec2> project(std::span<const Vec3> points, const CameraModel& camera) {
    camera.validate();
    std::vector<Vec2> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 p = points[i];
        if (camera.mode == CameraModel::Mode::Orthographic) {
            out[i] = {p.x * camera.scale + camera.principal.x, p.y * camera.scale + camera.principal.y};
        } else {
            require(p.z > 0.0, ErrorCode::NonPositiveDepth,
                    "pinhole projection of point " + std::to_string(i) + " with z = " + std::to_string(p.z));
            out[i] = {camera.scale * p.x / p.z + camera.principal.x, camera.scale * p.y / p.z + camera.principal.y};
        }
    }
    return out;
}

HeadPose displacement(const HeadPose& x, const HeadPose& reference) {
    HeadPose d;
    for (std::size_t i = 0; i < 3; ++i) {
        d.rotation[i] = x.rotation[i] - reference.rotation[i];
        d.translation[i] = x.translation[i] - reference.translation[i];
    }
    return d;
}

HeadPose apply_displacement(const HeadPose& delta, const HeadPose& reference) {
    HeadPose x;
    for (std::size_t i = 0; i < 3; ++i) {
        x.rotation[i] = reference.rotation[i] + delta.rotation[i];
        x.translation[i] = reference.translation[i] + delta.translation[i];
    }
    return x;
}

std::vector<double> displacement(std::span<const double> x, std::span<const double> reference) {
    require(x.size() == reference.size(), ErrorCode::ShapeMismatch,
            "displacement of " + std::to_string(x.size()) + " values against " + std::to_string(reference.size()));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] - reference[i];
    }
    return out;
}

std::vector<double> apply_displacement(std::span<const double> delta, std::span<const double> reference) {
    require(delta.size() == reference.size(), ErrorCode::ShapeMismatch,
            "displacement of " + std::to_string(delta.size()) + " values against " +
                std::to_string(reference.size()));
    std::vector<double> out(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        out[i] = reference[i] + delta[i];
    }
    return out;
}

std::vector<Vec3> LandmarkSequence::frame(std::size_t t) const {
    require(dims == 3, ErrorCode::ShapeMismatch, "landmark frames need 3 dims");
    require(t < frames, ErrorCode::ShapeMismatch, "landmark frame index out of range");
    std::vector<Vec3> out(points);
    const double* base = values.data() + t * points * 3;
    for (std::size_t i = 0; i < points; ++i) {
        out[i] = {base[3 * i], base[3 * i + 1], base[3 * i + 2]};
    }
    return out;
}

namespace {
std::filesystem::path manifest_path(const std::filesystem::path& bin_path) {
    std::filesystem::path p = bin_path;
    p.replace_extension(".json");
    return p;
}
}  // namespace

void write_landmarks(const std::filesystem::path& bin_path, const LandmarkSequence& seq) {
    require(seq.values.size() == seq.frames * seq.points * seq.dims, ErrorCode::ShapeMismatch,
            "landmark sequence size does not match its header");
    io::write_f32(bin_path, seq.values);
    io::write_json(manifest_path(bin_path), {{"frames", seq.frames}, {"points", seq.points}, {"dims", seq.dims}});
}

LandmarkSequence read_landmarks(const std::filesystem::path& bin_path) {
    const auto manifest = io::read_json(manifest_path(bin_path));
    LandmarkSequence seq;
    try {
        seq.frames = manifest.at("frames").get<std::size_t>();
        seq.points = manifest.at("points").get<std::size_t>();
        seq.dims = manifest.at("dims").get<std::size_t>();
    } catch (const io::Json::exception& e) {
        fail(ErrorCode::FormatError, manifest_path(bin_path).string() + ": " + e.what());
    }
    seq.values = io::read_f32(bin_path);
    require(seq.values.size() == seq.frames * seq.points * seq.dims, ErrorCode::FormatError,
            bin_path.string() + ": payload does not match manifest");
    return seq;
}

void write_poses(const std::filesystem::path& path, std::span<const HeadPose> poses) {
    std::vector<double> flat;
    flat.reserve(poses.size() * kPoseScalars);
    for (const auto& p : poses) {
        const auto f = p.flat();
        flat.insert(flat.end(), f.begin(), f.end());
    }
    io::write_f32(path, flat);
}

std::vector<HeadPose> read_poses(const std::filesystem::path& path) {
    const auto flat = io::read_f32(path);
    require(flat.size() % kPoseScalars == 0, ErrorCode::FormatError, path.string() + ": not 6 floats per frame");
    std::vector<HeadPose> poses(flat.size() / kPoseScalars);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        poses[i] = HeadPose::from_flat(std::span<const double>(flat).subspan(i * kPoseScalars, kPoseScalars));
    }
    return poses;
}

}  // namespace moda::motion

#include "moda/topology.hpp"

#include "moda/io.hpp"

#include <set>

namespace moda::motion {

namespace {

void ring(std::vector<std::array<std::size_t, 2>>& edges, std::size_t first, std::size_t count, bool closed) {
    for (std::size_t i = 0; i + 1 < count; ++i) {
        edges.push_back({first + i, first + i + 1});
    }
    if (closed) {
        edges.push_back({first + count - 1, first});
    }
}

}  // namespace

void FaceTopology::validate() const {
    require(mouth_index.size() == kMouthPoints, ErrorCode::CountMismatch,
            "mouth index map has " + std::to_string(mouth_index.size()) + " entries, expected 40");
    require(eye_index.size() == kEyePoints, ErrorCode::CountMismatch,
            "eye index map has " + std::to_string(eye_index.size()) + " entries, expected 60");
    require(outer_mouth.size() >= 3, ErrorCode::CountMismatch, "outer mouth ring needs at least 3 points");
    for (std::size_t i : mouth_index) {
        require(i < kFacePoints, ErrorCode::ShapeMismatch, "mouth index out of range");
    }
    for (std::size_t i : eye_index) {
        require(i < kFacePoints, ErrorCode::ShapeMismatch, "eye index out of range");
    }
    for (std::size_t i : outer_mouth) {
        require(i < kMouthPoints, ErrorCode::ShapeMismatch, "outer mouth ring index out of range");
    }
    for (const auto& e : edges) {
        require(e[0] < kFacePoints && e[1] < kFacePoints, ErrorCode::ShapeMismatch, "mesh edge index out of range");
    }
    std::set<std::size_t> seen(mouth_index.begin(), mouth_index.end());
    seen.insert(eye_index.begin(), eye_index.end());
    require(seen.size() == kMouthPoints + kEyePoints, ErrorCode::ShapeMismatch, "mouth and eye index maps overlap");
}

FaceTopology FaceTopology::synthetic() {
    FaceTopology t;
    for (std::size_t i = 0; i < kMouthPoints; ++i) {
        t.mouth_index.push_back(i);
    }
    for (std::size_t i = 0; i < kEyePoints; ++i) {
        t.eye_index.push_back(kMouthPoints + i);
    }
    for (std::size_t i = 0; i < 20; ++i) {
        t.outer_mouth.push_back(i);
    }
    ring(t.edges, 0, 20, true);     // outer lips
    ring(t.edges, 20, 20, true);    // inner lips
    ring(t.edges, 40, 16, true);    // left eye
    ring(t.edges, 56, 16, true);    // right eye
    ring(t.edges, 72, 14, false);   // left brow
    ring(t.edges, 86, 14, false);   // right brow
    ring(t.edges, 100, 64, true);   // face oval
    ring(t.edges, 164, 12, false);  // nose
    return t;
}

FaceTopology FaceTopology::load(const std::filesystem::path& path) {
    const auto j = io::read_json(path);
    FaceTopology t;
    try {
        t.mouth_index = j.at("mouth").get<std::vector<std::size_t>>();
        t.eye_index = j.at("eyes").get<std::vector<std::size_t>>();
        t.outer_mouth = j.at("outer_mouth").get<std::vector<std::size_t>>();
        t.edges = j.at("edges").get<std::vector<std::array<std::size_t, 2>>>();
    } catch (const io::Json::exception& e) {
        fail(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
    t.validate();
    return t;
}

void FaceTopology::save(const std::filesystem::path& path) const {
    io::write_json(path, {{"mouth", mouth_index}, {"eyes", eye_index}, {"outer_mouth", outer_mouth}, {"edges", edges}});
}

MouthPoints select_mouth(const FacePoints& face, const FaceTopology& topo) {
    MouthPoints m;
    for (std::size_t i = 0; i < kMouthPoints; ++i) {
        m.set(i, face.point(topo.mouth_index[i]));
    }
    return m;
}

EyePoints select_eyes(const FacePoints& face, const FaceTopology& topo) {
    EyePoints e;
    for (std::size_t i = 0; i < kEyePoints; ++i) {
        e.set(i, face.point(topo.eye_index[i]));
    }
    return e;
}

std::vector<Vec3> outer_mouth_ring(const MouthPoints& mouth, const FaceTopology& topo) {
    std::vector<Vec3> ring_pts;
    ring_pts.reserve(topo.outer_mouth.size());
    for (std::size_t i : topo.outer_mouth) {
        ring_pts.push_back(mouth.point(i));
    }
    return ring_pts;
}

}  // namespace moda::motion

#pragma once

#include "moda/motion.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace moda::motion {

// Which of the 478 dense points form the mouth and eye subsets, how the outer
// lip ring is ordered, and which point pairs are drawn as mesh edges.
struct FaceTopology {
    std::vector<std::size_t> mouth_index;  // 40 rows of the dense face
    std::vector<std::size_t> eye_index;    // 60 rows of the dense face
    std::vector<std::size_t> outer_mouth;  // ring order, positions within the 40 mouth points
    std::vector<std::array<std::size_t, 2>> edges;

    void validate() const;

    // Layout produced by the built-in synthetic face generator.
    static FaceTopology synthetic();
    static FaceTopology load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

MouthPoints select_mouth(const FacePoints& face, const FaceTopology& topo);
EyePoints select_eyes(const FacePoints& face, const FaceTopology& topo);
// Outer lip ring (in ring order) of a mouth point set.
std::vector<Vec3> outer_mouth_ring(const MouthPoints& mouth, const FaceTopology& topo);

}  // namespace moda::motion

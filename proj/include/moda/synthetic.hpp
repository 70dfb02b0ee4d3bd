#pragma once

#include "moda/audio.hpp"
#include "moda/motion.hpp"
#include "moda/tensor.hpp"
#include "moda/topology.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

// Procedural talking-head clips in the on-disk layout the preprocessor reads.
// The face follows FaceTopology::synthetic(); mouth opening is driven by the
// same per-frame signal that modulates the audio tone.
namespace moda::synth {

struct SubjectStyle {
    double width = 1.0;   // horizontal scale of the face
    double height = 1.0;  // vertical scale of the face
    double skin = 0.0;    // shifts the skin tone, [-1, 1]
};

struct ClipSpec {
    std::size_t frames = 50;
    double fps = 25.0;
    double sample_rate = 16000.0;
    std::size_t width = 64;
    std::size_t height = 64;
    std::uint64_t seed = 0;
    SubjectStyle style{};
};

// Palette of the label images.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kHair = 1;
inline constexpr std::uint8_t kFace = 2;
inline constexpr std::uint8_t kBody = 3;

struct SyntheticClip {
    ClipSpec spec;
    std::vector<double> mouth_open;  // [0, 1] per frame
    std::vector<double> eye_open;    // [0, 1] per frame
    std::vector<motion::HeadPose> poses;
    std::vector<motion::FacePoints> canonical;
    std::vector<std::vector<motion::Vec3>> camera;  // 478 points per frame
    std::vector<std::vector<std::uint8_t>> labels;  // H x W per frame
    std::vector<Tensor> images;                     // [3 x H x W] in [-1, 1]
    audio::Waveform audio;
};

motion::FacePoints canonical_face(double mouth_open, double eye_open, const SubjectStyle& style = {});

// Label map and RGB frame for one pose/face.
std::vector<std::uint8_t> draw_labels(std::span<const motion::Vec3> camera_points, const motion::HeadPose& pose,
                                      std::size_t width, std::size_t height, const SubjectStyle& style);
Tensor draw_frame(std::span<const motion::Vec3> camera_points, const motion::HeadPose& pose, std::size_t width,
                  std::size_t height, const SubjectStyle& style);

SyntheticClip generate_clip(const ClipSpec& spec);

// {dir}/frames/%06d.png, landmarks.bin(+.json), poses.bin, seg/%06d.png,
// palette.json, topology.json, audio.wav
void write_clip(const SyntheticClip& clip, const std::filesystem::path& dir);

}  // namespace moda::synth

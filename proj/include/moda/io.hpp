#pragma once

#include "moda/error.hpp"
#include "moda/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace moda::io {

using Json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void append_le(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class ByteReader {
public:
    ByteReader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}

    template <typename T>
    T read() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string read_string(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        require(pos_ + n <= data_.size(), ErrorCode::FormatError, origin_ + ": truncated");
    }
    const std::string& data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

// Flat little-endian float32 array plus a JSON sidecar at `<path>.json`
// (or an explicitly named manifest). The manifest records the shape under
// caller-chosen keys, e.g. {frames, points, dims} or {frames, dim, fps}.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path);

// 8-bit or 16-bit PNG I/O. Images are [C x H x W] tensors with values in
// [0, 1]; label maps are returned raw.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;  // interleaved, row-major
};
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

// [3 x H x W] in [-1, 1] <-> 8-bit RGB.
Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const Tensor& chw);

struct PcmAudio {
    std::vector<double> samples;  // mono, [-1, 1]
    double sample_rate = 0.0;
};
// 16-bit PCM WAV; multi-channel input is averaged to mono.
PcmAudio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const PcmAudio& audio);

}  // namespace moda::io

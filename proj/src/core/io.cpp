#include "moda/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace moda::io {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(static_cast<bool>(out), ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Json read_json(const std::filesystem::path& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        fail(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& value) {
    write_file_atomic(path, value.dump(2) + "\n");
}

void write_f32(const std::filesystem::path& path, std::span<const double> values) {
    std::string blob;
    blob.reserve(values.size() * 4);
    for (double v : values) {
        append_le<float>(blob, static_cast<float>(v));
    }
    write_file_atomic(path, blob);
}

std::vector<double> read_f32(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    require(blob.size() % 4 == 0, ErrorCode::FormatError, path.string() + ": size is not a multiple of 4");
    std::vector<double> out(blob.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, blob.data() + 4 * i, 4);
        out[i] = f;
    }
    return out;
}

namespace {

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadGuard() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteGuard() { png_destroy_write_struct(&png, &info); }
};

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};

}  // namespace

Image read_png(const std::filesystem::path& path) {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    require(fp != nullptr, ErrorCode::IoError, "cannot open " + path.string());
    PngReadGuard g;
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    g.info = png_create_info_struct(g.png);
    require(g.png && g.info, ErrorCode::IoError, "libpng init failed");
    if (setjmp(png_jmpbuf(g.png))) {
        fail(ErrorCode::FormatError, path.string() + ": invalid PNG");
    }
    png_init_io(g.png, fp.get());
    png_read_info(g.png, g.info);
    png_set_strip_16(g.png);
    png_set_packing(g.png);
    const auto color = png_get_color_type(g.png, g.info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(g.png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(g.png, g.info) < 8) {
        png_set_expand_gray_1_2_4_to_8(g.png);
    }
    png_read_update_info(g.png, g.info);
    Image img;
    img.width = png_get_image_width(g.png, g.info);
    img.height = png_get_image_height(g.png, g.info);
    img.channels = png_get_channels(g.png, g.info);
    img.pixels.resize(img.width * img.height * img.channels);
    std::vector<png_bytep> rows(img.height);
    for (std::size_t y = 0; y < img.height; ++y) {
        rows[y] = img.pixels.data() + y * img.width * img.channels;
    }
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    require(image.channels == 1 || image.channels == 3 || image.channels == 4, ErrorCode::FormatError,
            "PNG needs 1, 3 or 4 channels");
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::unique_ptr<FILE, FileCloser> fp(std::fopen(tmp.c_str(), "wb"));
        require(fp != nullptr, ErrorCode::IoError, "cannot write " + tmp.string());
        PngWriteGuard g;
        g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        g.info = png_create_info_struct(g.png);
        require(g.png && g.info, ErrorCode::IoError, "libpng init failed");
        if (setjmp(png_jmpbuf(g.png))) {
            fail(ErrorCode::IoError, "PNG encode failed for " + path.string());
        }
        png_init_io(g.png, fp.get());
        const int color = image.channels == 1 ? PNG_COLOR_TYPE_GRAY
                          : image.channels == 3 ? PNG_COLOR_TYPE_RGB
                                                : PNG_COLOR_TYPE_RGBA;
        png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                     color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(g.png, g.info);
        for (std::size_t y = 0; y < image.height; ++y) {
            png_write_row(g.png, const_cast<png_bytep>(image.pixels.data() + y * image.width * image.channels));
        }
        png_write_end(g.png, nullptr);
    }
    std::filesystem::rename(tmp, path);
}

Tensor image_to_tensor(const Image& image) {
    const std::size_t c_out = 3;
    Tensor t({c_out, image.height, image.width});
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            for (std::size_t c = 0; c < c_out; ++c) {
                const std::size_t src_c = std::min(c, image.channels - 1);
                const double v = image.pixels[(y * image.width + x) * image.channels + src_c] / 255.0;
                t[(c * image.height + y) * image.width + x] = 2.0 * v - 1.0;
            }
        }
    }
    return t;
}

Image tensor_to_image(const Tensor& chw) {
    require(chw.rank() == 3, ErrorCode::ShapeMismatch, "tensor_to_image expects [C x H x W]");
    Image img;
    img.channels = chw.dim(0);
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.pixels.resize(img.width * img.height * img.channels);
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < img.height; ++y) {
            for (std::size_t x = 0; x < img.width; ++x) {
                const double v = std::clamp((chw[(c * img.height + y) * img.width + x] + 1.0) * 0.5, 0.0, 1.0);
                img.pixels[(y * img.width + x) * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

PcmAudio read_wav(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    ByteReader in(blob, path.string());
    require(in.read_string(4) == "RIFF", ErrorCode::FormatError, path.string() + ": not RIFF");
    in.skip(4);
    require(in.read_string(4) == "WAVE", ErrorCode::FormatError, path.string() + ": not WAVE");
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (in.remaining() >= 8) {
        const std::string id = in.read_string(4);
        const auto size = in.read<std::uint32_t>();
        if (id == "fmt ") {
            format = in.read<std::uint16_t>();
            channels = in.read<std::uint16_t>();
            rate = in.read<std::uint32_t>();
            in.skip(6);
            bits = in.read<std::uint16_t>();
            in.skip(size - 16);
            have_fmt = true;
        } else if (id == "data") {
            require(have_fmt, ErrorCode::FormatError, path.string() + ": data chunk before fmt");
            require(format == 1 && bits == 16 && channels >= 1, ErrorCode::FormatError,
                    path.string() + ": only 16-bit PCM is supported");
            PcmAudio audio;
            audio.sample_rate = rate;
            const std::size_t frames = size / (2u * channels);
            audio.samples.resize(frames);
            for (std::size_t i = 0; i < frames; ++i) {
                double acc = 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    acc += in.read<std::int16_t>() / 32768.0;
                }
                audio.samples[i] = acc / channels;
            }
            return audio;
        } else {
            in.skip(size + (size & 1u));
        }
    }
    fail(ErrorCode::FormatError, path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const PcmAudio& audio) {
    std::string blob = "RIFF";
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
    append_le<std::uint32_t>(blob, 36 + data_bytes);
    blob += "WAVEfmt ";
    append_le<std::uint32_t>(blob, 16);
    append_le<std::uint16_t>(blob, 1);
    append_le<std::uint16_t>(blob, 1);
    append_le<std::uint32_t>(blob, static_cast<std::uint32_t>(audio.sample_rate));
    append_le<std::uint32_t>(blob, static_cast<std::uint32_t>(audio.sample_rate) * 2);
    append_le<std::uint16_t>(blob, 2);
    append_le<std::uint16_t>(blob, 16);
    blob += "data";
    append_le<std::uint32_t>(blob, data_bytes);
    for (double s : audio.samples) {
        const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
        append_le<std::int16_t>(blob, static_cast<std::int16_t>(std::lround(c * 32768.0)));
    }
    write_file_atomic(path, blob);
}

}  // namespace moda::io

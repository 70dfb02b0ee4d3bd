#pragma once

#include "moda/tensor.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace moda::audio {

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 16000.0;

    void validate() const;
};

// One feature row per video frame: [frames x dim].
struct AudioFeatureSequence {
    Tensor features;
    double fps = 25.0;

    std::size_t frames() const { return features.empty() ? 0 : features.dim(0); }
    std::size_t dim() const { return features.empty() ? 0 : features.dim(1); }
};

// Number of whole video frames covered by n samples: floor(fps * n / rate).
std::size_t frame_count(std::size_t samples, double sample_rate, double fps);

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual AudioFeatureSequence extract(const Waveform& wave, double fps) const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::string name() const = 0;
};

struct FilterbankConfig {
    std::size_t n_mels = 80;
    double window_seconds = 0.025;
    double min_hz = 0.0;
    double max_hz = 0.0;  // 0 means Nyquist
    double energy_floor = 1e-10;
};

// Log-mel filterbank energies with one Hann window centred on each video
// frame; samples outside the waveform read as zero.
class FilterbankExtractor final : public FeatureExtractor {
public:
    explicit FilterbankExtractor(FilterbankConfig cfg = {});
    AudioFeatureSequence extract(const Waveform& wave, double fps) const override;
    std::size_t dim() const override { return cfg_.n_mels; }
    std::string name() const override { return "filterbank"; }

    const FilterbankConfig& config() const { return cfg_; }

    // Triangular HTK-mel filters over the rfft bins, [n_mels x (fft_size/2 + 1)].
    static Tensor mel_filters(std::size_t n_mels, std::size_t fft_size, double sample_rate, double min_hz,
                              double max_hz);
    static std::size_t fft_size_for(std::size_t window_samples);
    static double hz_to_mel(double hz);
    static double mel_to_hz(double mel);

    // Sample index at the centre of video frame k.
    static std::size_t frame_center(std::size_t k, double sample_rate, double fps);

private:
    FilterbankConfig cfg_;
};

// Features precomputed by an external model: float32 [frames x dim] plus a
// `<stem>.json` manifest {frames, dim, fps}. Extraction returns the first
// frame_count rows; the file must cover the waveform.
class FileFeatureExtractor final : public FeatureExtractor {
public:
    explicit FileFeatureExtractor(const std::filesystem::path& bin_path);
    AudioFeatureSequence extract(const Waveform& wave, double fps) const override;
    std::size_t dim() const override { return stored_.dim(); }
    std::string name() const override { return "file"; }

private:
    AudioFeatureSequence stored_;
    std::string origin_;
};

AudioFeatureSequence extract_features(const Waveform& wave, double fps, const FeatureExtractor& extractor);
AudioFeatureSequence fallback_filterbank(const Waveform& wave, double fps, std::size_t n_mels);

void write_feature_file(const std::filesystem::path& bin_path, const AudioFeatureSequence& seq);
AudioFeatureSequence read_feature_file(const std::filesystem::path& bin_path);

Waveform load_wav(const std::filesystem::path& path);

}  // namespace moda::audio

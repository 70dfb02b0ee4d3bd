#include "moda/audio.hpp"

#include "moda/error.hpp"
#include "moda/io.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

namespace moda::audio {

void Waveform::validate() const {
    require(sample_rate > 0.0 && std::isfinite(sample_rate), ErrorCode::ConfigError, "sample rate must be positive");
    for (double s : samples) {
        require(std::isfinite(s), ErrorCode::FormatError, "waveform contains non-finite samples");
    }
}

std::size_t frame_count(std::size_t samples, double sample_rate, double fps) {
    require(sample_rate > 0.0 && fps > 0.0, ErrorCode::ConfigError, "sample rate and fps must be positive");
    const double exact = fps * static_cast<double>(samples) / sample_rate;
    // Guard against 24.999999 for exact multiples.
    return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

double FilterbankExtractor::hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double FilterbankExtractor::mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t FilterbankExtractor::fft_size_for(std::size_t window_samples) {
    std::size_t n = 1;
    while (n < window_samples) {
        n <<= 1;
    }
    return n;
}

std::size_t FilterbankExtractor::frame_center(std::size_t k, double sample_rate, double fps) {
    return static_cast<std::size_t>(std::floor((static_cast<double>(k) + 0.5) * sample_rate / fps));
}

Tensor FilterbankExtractor::mel_filters(std::size_t n_mels, std::size_t fft_size, double sample_rate, double min_hz,
                                        double max_hz) {
    const std::size_t bins = fft_size / 2 + 1;
    const double top = max_hz > 0.0 ? max_hz : sample_rate / 2.0;
    const double mel_lo = hz_to_mel(min_hz);
    const double mel_hi = hz_to_mel(top);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    }
    Tensor filters({n_mels, bins}, 0.0);
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
        for (std::size_t b = 0; b < bins; ++b) {
            const double hz = static_cast<double>(b) * sample_rate / static_cast<double>(fft_size);
            double w = 0.0;
            if (hz > left && hz <= centre) {
                w = (hz - left) / (centre - left);
            } else if (hz > centre && hz < right) {
                w = (right - hz) / (right - centre);
            }
            filters.at(m, b) = w;
        }
    }
    return filters;
}

FilterbankExtractor::FilterbankExtractor(FilterbankConfig cfg) : cfg_(cfg) {
    require(cfg_.n_mels >= 1, ErrorCode::ConfigError, "n_mels must be at least 1");
    require(cfg_.window_seconds > 0.0, ErrorCode::ConfigError, "analysis window must be positive");
}

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(p);
    }
};

}  // namespace

AudioFeatureSequence FilterbankExtractor::extract(const Waveform& wave, double fps) const {
    wave.validate();
    require(fps > 0.0, ErrorCode::ConfigError, "fps must be positive");
    const std::size_t frames = frame_count(wave.samples.size(), wave.sample_rate, fps);
    require(frames >= 1, ErrorCode::EmptyAudio,
            std::to_string(wave.samples.size()) + " samples are shorter than one video frame");

    const auto window = static_cast<std::size_t>(std::lround(cfg_.window_seconds * wave.sample_rate));
    const std::size_t nfft = fft_size_for(window);
    const std::size_t bins = nfft / 2 + 1;
    const Tensor filters = mel_filters(cfg_.n_mels, nfft, wave.sample_rate, cfg_.min_hz, cfg_.max_hz);

    std::vector<double> hann(window);
    for (std::size_t i = 0; i < window; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(window));
    }

    std::unique_ptr<fftw_plan_s, PlanDeleter> plan;
    {
        std::vector<double> in(nfft);
        std::vector<fftw_complex> out(bins);
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED));
    }

    AudioFeatureSequence seq;
    seq.fps = fps;
    seq.features = Tensor({frames, cfg_.n_mels});
    const auto n = static_cast<std::ptrdiff_t>(wave.samples.size());
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto frame_total = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel
    {
        std::vector<double> buf(nfft);
        std::vector<fftw_complex> spec(bins);
        std::vector<double> power(bins);
#pragma omp for schedule(static)
        for (std::ptrdiff_t k = 0; k < frame_total; ++k) {
            const auto centre = static_cast<std::ptrdiff_t>(frame_center(static_cast<std::size_t>(k), wave.sample_rate, fps));
            std::fill(buf.begin(), buf.end(), 0.0);
            for (std::size_t i = 0; i < window; ++i) {
                const std::ptrdiff_t s = centre - half + static_cast<std::ptrdiff_t>(i);
                if (s >= 0 && s < n) {
                    buf[i] = wave.samples[static_cast<std::size_t>(s)] * hann[i];
                }
            }
            fftw_execute_dft_r2c(plan.get(), buf.data(), spec.data());
            for (std::size_t b = 0; b < bins; ++b) {
                power[b] = spec[b][0] * spec[b][0] + spec[b][1] * spec[b][1];
            }
            for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
                double e = 0.0;
                for (std::size_t b = 0; b < bins; ++b) {
                    e += filters.at(m, b) * power[b];
                }
                seq.features.at(static_cast<std::size_t>(k), m) = std::log(std::max(e, cfg_.energy_floor));
            }
        }
    }
    return seq;
}

FileFeatureExtractor::FileFeatureExtractor(const std::filesystem::path& bin_path)
    : stored_(read_feature_file(bin_path)), origin_(bin_path.string()) {}

AudioFeatureSequence FileFeatureExtractor::extract(const Waveform& wave, double fps) const {
    wave.validate();
    const std::size_t frames = frame_count(wave.samples.size(), wave.sample_rate, fps);
    require(frames >= 1, ErrorCode::EmptyAudio, "waveform shorter than one video frame");
    require(std::abs(stored_.fps - fps) < 1e-9, ErrorCode::ConfigError,
            origin_ + ": features stored at " + std::to_string(stored_.fps) + " fps, requested " + std::to_string(fps));
    require(stored_.frames() >= frames, ErrorCode::CountMismatch,
            origin_ + ": " + std::to_string(stored_.frames()) + " feature rows for " + std::to_string(frames) + " frames");
    AudioFeatureSequence seq;
    seq.fps = fps;
    seq.features = Tensor({frames, stored_.dim()});
    std::copy_n(stored_.features.data().begin(), frames * stored_.dim(), seq.features.data().begin());
    return seq;
}

AudioFeatureSequence extract_features(const Waveform& wave, double fps, const FeatureExtractor& extractor) {
    AudioFeatureSequence seq = extractor.extract(wave, fps);
    require(seq.frames() == frame_count(wave.samples.size(), wave.sample_rate, fps), ErrorCode::CountMismatch,
            extractor.name() + " extractor broke the frame-count law");
    require(seq.features.all_finite(), ErrorCode::NonFiniteLoss, extractor.name() + " produced non-finite features");
    return seq;
}

AudioFeatureSequence fallback_filterbank(const Waveform& wave, double fps, std::size_t n_mels) {
    FilterbankConfig cfg;
    cfg.n_mels = n_mels;
    return FilterbankExtractor(cfg).extract(wave, fps);
}

void write_feature_file(const std::filesystem::path& bin_path, const AudioFeatureSequence& seq) {
    io::write_f32(bin_path, seq.features.data());
    std::filesystem::path manifest = bin_path;
    manifest.replace_extension(".json");
    io::write_json(manifest, {{"frames", seq.frames()}, {"dim", seq.dim()}, {"fps", seq.fps}});
}

AudioFeatureSequence read_feature_file(const std::filesystem::path& bin_path) {
    std::filesystem::path manifest_path = bin_path;
    manifest_path.replace_extension(".json");
    const auto manifest = io::read_json(manifest_path);
    AudioFeatureSequence seq;
    std::size_t frames = 0, dim = 0;
    try {
        frames = manifest.at("frames").get<std::size_t>();
        dim = manifest.at("dim").get<std::size_t>();
        seq.fps = manifest.at("fps").get<double>();
    } catch (const io::Json::exception& e) {
        fail(ErrorCode::FormatError, manifest_path.string() + ": " + e.what());
    }
    auto values = io::read_f32(bin_path);
    require(values.size() == frames * dim, ErrorCode::FormatError, bin_path.string() + ": payload does not match manifest");
    seq.features = Tensor({frames, dim}, std::move(values));
    return seq;
}

Waveform load_wav(const std::filesystem::path& path) {
    auto pcm = io::read_wav(path);
    return Waveform{std::move(pcm.samples), pcm.sample_rate};
}

}  // namespace moda::audio

#include "moda/tensor.hpp"

#include "moda/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace moda {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? " x " : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(shape_size(shape_) == data_.size(), ErrorCode::ShapeMismatch,
            "tensor data has " + std::to_string(data_.size()) + " elements, shape " +
                shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)));
}

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(), ErrorCode::ShapeMismatch,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), ErrorCode::ShapeMismatch, "max_abs_diff size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
        case ErrorCode::EmptyAudio: return "EmptyAudio";
        case ErrorCode::NoBody: return "NoBody";
        case ErrorCode::DegenerateContour: return "DegenerateContour";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::TooShort: return "TooShort";
        case ErrorCode::DegeneratePolygon: return "DegeneratePolygon";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::InconsistentWindows: return "InconsistentWindows";
        case ErrorCode::EmptyReference: return "EmptyReference";
        case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
        case ErrorCode::MissingStream: return "MissingStream";
        case ErrorCode::DatasetEmpty: return "DatasetEmpty";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::FormatError: return "FormatError";
    }
    return "Unknown";
}

}  // namespace moda

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace hazeprop {

/// Dense 2-D grid of doubles, row-major. Used for transmission maps,
/// depth maps and single image channels.
class ScalarField {
public:
    ScalarField() = default;

    ScalarField(int height, int width, double fill = 0.0)
        : height_(height), width_(width),
          values_(static_cast<size_t>(check_shape(height, width)) , fill) {}

    ScalarField(int height, int width, std::vector<double> values)
        : height_(height), width_(width), values_(std::move(values)) {
        check_shape(height, width);
        if (values_.size() != static_cast<size_t>(height) * static_cast<size_t>(width))
            throw std::invalid_argument("ScalarField: value count does not match shape");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double operator()(int i, int j) const { return values_[static_cast<size_t>(i) * width_ + j]; }
    double& operator()(int i, int j) { return values_[static_cast<size_t>(i) * width_ + j]; }
    double at(size_t idx) const { return values_[idx]; }
    double& at(size_t idx) { return values_[idx]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    const double* data() const { return values_.data(); }
    double* data() { return values_.data(); }

    bool same_shape(const ScalarField& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { values_.assign(values_.size(), v); }

    /// Clamp every value into [lo, hi].
    void clamp(double lo, double hi) {
        for (double& v : values_) v = v < lo ? lo : (v > hi ? hi : v);
    }

    double min_value() const {
        double m = values_.empty() ? 0.0 : values_[0];
        for (double v : values_) m = std::min(m, v);
        return m;
    }

    double max_value() const {
        double m = values_.empty() ? 0.0 : values_[0];
        for (double v : values_) m = std::max(m, v);
        return m;
    }

    double mean() const {
        if (values_.empty()) return 0.0;
        double s = 0.0;
        for (double v : values_) s += v;
        return s / static_cast<double>(values_.size());
    }

private:
    static int check_shape(int height, int width) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("ScalarField: shape must be positive");
        return height * width;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("field add: shape mismatch");
    ScalarField out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at(i) += b.at(i);
    return out;
}

inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("field sub: shape mismatch");
    ScalarField out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at(i) -= b.at(i);
    return out;
}

inline ScalarField operator*(double s, const ScalarField& a) {
    ScalarField out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at(i) *= s;
    return out;
}

inline double dot(const ScalarField& a, const ScalarField& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("field dot: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.at(i) * b.at(i);
    return s;
}

/// Three equally shaped channels, values nominally in [0,1].
class ImageRGB {
public:
    ImageRGB() = default;

    ImageRGB(int height, int width, double fill = 0.0)
        : ch_{ScalarField(height, width, fill), ScalarField(height, width, fill),
              ScalarField(height, width, fill)} {}

    ImageRGB(ScalarField r, ScalarField g, ScalarField b)
        : ch_{std::move(r), std::move(g), std::move(b)} {
        if (!ch_[0].same_shape(ch_[1]) || !ch_[0].same_shape(ch_[2]))
            throw std::invalid_argument("ImageRGB: channel shapes differ");
    }

    int height() const { return ch_[0].height(); }
    int width() const { return ch_[0].width(); }
    size_t pixel_count() const { return ch_[0].size(); }
    bool empty() const { return ch_[0].empty(); }

    const ScalarField& channel(int c) const { return ch_[c]; }
    ScalarField& channel(int c) { return ch_[c]; }

    bool same_shape(const ImageRGB& o) const { return ch_[0].same_shape(o.ch_[0]); }

    bool all_finite() const {
        return ch_[0].all_finite() && ch_[1].all_finite() && ch_[2].all_finite();
    }

    void clamp(double lo, double hi) {
        for (auto& c : ch_) c.clamp(lo, hi);
    }

private:
    ScalarField ch_[3];
};

/// Square odd-sized convolution kernel.
class Kernel2D {
public:
    Kernel2D() = default;

    explicit Kernel2D(int size, double fill = 0.0)
        : size_(check_size(size)), taps_(static_cast<size_t>(size) * size, fill) {}

    Kernel2D(int size, std::vector<double> taps) : size_(check_size(size)), taps_(std::move(taps)) {
        if (taps_.size() != static_cast<size_t>(size) * size)
            throw std::invalid_argument("Kernel2D: tap count does not match size");
    }

    int size() const { return size_; }
    int radius() const { return (size_ - 1) / 2; }

    double operator()(int i, int j) const { return taps_[static_cast<size_t>(i) * size_ + j]; }
    double& operator()(int i, int j) { return taps_[static_cast<size_t>(i) * size_ + j]; }

    const std::vector<double>& taps() const { return taps_; }
    std::vector<double>& taps() { return taps_; }

    double sum() const {
        double s = 0.0;
        for (double t : taps_) s += t;
        return s;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double t : taps_) s += t * t;
        return std::sqrt(s);
    }

private:
    static int check_size(int size) {
        if (size < 1 || size % 2 == 0)
            throw std::invalid_argument("Kernel2D: size must be odd and positive");
        return size;
    }

    int size_ = 0;
    std::vector<double> taps_;
};

inline double dot(const Kernel2D& a, const Kernel2D& b) {
    if (a.size() != b.size()) throw std::invalid_argument("kernel dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.taps().size(); ++i) s += a.taps()[i] * b.taps()[i];
    return s;
}

}  // namespace hazeprop

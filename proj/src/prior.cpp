#include "hazeprop/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hazeprop/conv.hpp"

namespace hazeprop {

AtmosphericLight estimate_airlight(const ImageRGB& img, int window) {
    if (img.empty()) throw std::invalid_argument("estimate_airlight: empty image");
    AtmosphericLight a;
    for (int c = 0; c < 3; ++c) {
        const double m = min_filter(img.channel(c), window).max_value();
        a[c] = std::clamp(m, 0.05, 1.0);
    }
    return a;
}

namespace {

// Largest prior candidate at one sample given the channel's global extremes.
// Returns the fallback 1 when every denominator is degenerate.
inline double prior_pixel(const double* value, const double* denom_hat,
                          const double* denom_check, const double* a, int channels) {
    constexpr double kDenomFloor = 1e-6;
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int c = 0; c < channels; ++c) {
        const double num = value[c] - a[c];
        if (std::abs(denom_hat[c]) >= kDenomFloor) {
            best = std::max(best, num / denom_hat[c]);
            any = true;
        }
        if (std::abs(denom_check[c]) >= kDenomFloor) {
            best = std::max(best, num / denom_check[c]);
            any = true;
        }
    }
    if (!any) return 1.0;
    return std::clamp(best, 0.0, 1.0);
}

}  // namespace

ScalarField prior_transmission(const ImageRGB& img, const AtmosphericLight& a,
                               const PriorParams& p) {
    if (img.empty()) throw std::invalid_argument("prior_transmission: empty image");
    double denom_hat[3], denom_check[3];
    for (int c = 0; c < 3; ++c) {
        denom_hat[c] = p.alpha_hat * img.channel(c).max_value() - a[c];
        denom_check[c] = p.alpha_check * img.channel(c).min_value() - a[c];
    }
    ScalarField t(img.height(), img.width());
    for (size_t i = 0; i < t.size(); ++i) {
        const double value[3] = {img.channel(0).at(i), img.channel(1).at(i),
                                 img.channel(2).at(i)};
        t.at(i) = prior_pixel(value, denom_hat, denom_check, a.c, 3);
    }
    return t;
}

ScalarField prior_transmission_single(const ScalarField& channel, double a_c,
                                      const PriorParams& p) {
    if (channel.empty()) throw std::invalid_argument("prior_transmission_single: empty field");
    const double denom_hat = p.alpha_hat * channel.max_value() - a_c;
    const double denom_check = p.alpha_check * channel.min_value() - a_c;
    ScalarField t(channel.height(), channel.width());
    for (size_t i = 0; i < t.size(); ++i) {
        const double v = channel.at(i);
        t.at(i) = prior_pixel(&v, &denom_hat, &denom_check, &a_c, 1);
    }
    return t;
}

ScalarField dark_channel(const ImageRGB& img, int patch) {
    if (img.empty()) throw std::invalid_argument("dark_channel: empty image");
    ScalarField channel_min(img.height(), img.width());
    for (size_t i = 0; i < channel_min.size(); ++i)
        channel_min.at(i) = std::min({img.channel(0).at(i), img.channel(1).at(i),
                                      img.channel(2).at(i)});
    return min_filter(channel_min, patch);
}

ScalarField dcp_transmission(const ImageRGB& img, const AtmosphericLight& a, int patch,
                             double omega) {
    ImageRGB normalized = img;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < normalized.pixel_count(); ++i)
            normalized.channel(c).at(i) /= a[c];
    ScalarField t = dark_channel(normalized, patch);
    for (size_t i = 0; i < t.size(); ++i) t.at(i) = std::clamp(1.0 - omega * t.at(i), 0.0, 1.0);
    return t;
}

AtmosphericLight underwater_background_light(const ImageRGB& img) {
    if (img.empty()) throw std::invalid_argument("underwater_background_light: empty image");
    const size_t n = img.pixel_count();

    std::vector<double> luminance(n);
    for (size_t i = 0; i < n; ++i)
        luminance[i] =
            (img.channel(0).at(i) + img.channel(1).at(i) + img.channel(2).at(i)) / 3.0;

    // Brightest 0.1% (at least one pixel); ranking ties resolved toward the
    // earlier row-major index so the subset is deterministic.
    const size_t keep = std::max<size_t>(1, n / 1000);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                      [&](size_t a, size_t b) {
                          if (luminance[a] != luminance[b]) return luminance[a] > luminance[b];
                          return a < b;
                      });

    size_t best_idx = order[0];
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < keep; ++k) {
        const size_t i = order[k];
        const double r = img.channel(0).at(i);
        const double score = std::min(img.channel(1).at(i) - r, img.channel(2).at(i) - r);
        if (score > best_score || (score == best_score && i < best_idx)) {
            best_score = score;
            best_idx = i;
        }
    }

    // The selected pixel is returned verbatim; unlike hazy airlight, B is
    // only ever subtracted, never divided by, so no floor is applied.
    AtmosphericLight b;
    for (int c = 0; c < 3; ++c) b[c] = img.channel(c).at(best_idx);
    return b;
}

}  // namespace hazeprop

#include "hazeprop/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hazeprop {

void RecoveryConfig::validate() const {
    if (epsilon <= 0.0 || epsilon > 0.1)
        throw std::invalid_argument("RecoveryConfig: epsilon must lie in (0, 0.1]");
}

ImageRGB recover_radiance(const ImageRGB& img, const ScalarField& t, const AtmosphericLight& a,
                          const RecoveryConfig& cfg) {
    cfg.validate();
    if (!img.channel(0).same_shape(t))
        throw std::invalid_argument("recover_radiance: transmission shape mismatch");
    ImageRGB out(img.height(), img.width());
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < img.pixel_count(); ++i) {
            const double tt = std::max(t.at(i), cfg.epsilon);
            out.channel(c).at(i) = a[c] + (img.channel(c).at(i) - a[c]) / tt;
        }
    }
    if (cfg.clamp_output) out.clamp(0.0, 1.0);
    return out;
}

ImageRGB recover_radiance_per_channel(const ImageRGB& img, const ScalarField t_rgb[3],
                                      const AtmosphericLight& b, const RecoveryConfig& cfg) {
    cfg.validate();
    ImageRGB out(img.height(), img.width());
    for (int c = 0; c < 3; ++c) {
        if (!img.channel(c).same_shape(t_rgb[c]))
            throw std::invalid_argument("recover_radiance_per_channel: shape mismatch");
        for (size_t i = 0; i < img.pixel_count(); ++i) {
            const double tt = std::max(t_rgb[c].at(i), cfg.epsilon);
            out.channel(c).at(i) = b[c] + (img.channel(c).at(i) - b[c]) / tt;
        }
    }
    if (cfg.clamp_output) out.clamp(0.0, 1.0);
    return out;
}

ImageRGB color_constancy_normalize(const ImageRGB& img) {
    if (img.empty()) throw std::invalid_argument("color_constancy_normalize: empty image");
    double means[3];
    for (int c = 0; c < 3; ++c) means[c] = img.channel(c).mean();
    const double target = (means[0] + means[1] + means[2]) / 3.0;
    ImageRGB out = img;
    for (int c = 0; c < 3; ++c) {
        if (means[c] < 1e-6) continue;  // leave an all-dark channel unscaled
        if (std::abs(means[c] - target) <= 1e-14 * (1.0 + target)) continue;  // already balanced
        const double gain = target / means[c];
        for (size_t i = 0; i < out.pixel_count(); ++i) out.channel(c).at(i) *= gain;
    }
    out.clamp(0.0, 1.0);
    return out;
}

DehazeOutput pipeline_dehaze(const ImageRGB& img, const NetworkParams& model,
                             const PriorParams& prior, const RecoveryConfig& cfg) {
    ForwardResult fwd = network_forward(img, model, prior, cfg.epsilon);
    DehazeOutput out;
    out.airlight = fwd.airlight;
    out.transmission = std::move(fwd.t_final);
    out.radiance = recover_radiance(img, out.transmission, out.airlight, cfg);
    return out;
}

namespace {

// Per-channel propagation: each channel runs the scalar network with its own
// prior map computed against that channel's background light.
void propagate_per_channel(const ImageRGB& img, const NetworkParams& model,
                           const PriorParams& prior, const AtmosphericLight& b, double epsilon,
                           ScalarField t_out[3]) {
    for (int c = 0; c < 3; ++c) {
        const ScalarField prior_map = prior_transmission_single(img.channel(c), b[c], prior);
        t_out[c] = network_forward_field(prior_map, prior_map, model).back();
        t_out[c].clamp(epsilon, 1.0);
    }
}

}  // namespace

UnderwaterOutput pipeline_underwater(const ImageRGB& img, const NetworkParams& model,
                                     const PriorParams& prior, const UnderwaterOptions& opts,
                                     const RecoveryConfig& cfg) {
    model.validate();
    cfg.validate();
    UnderwaterOutput out;
    out.background = underwater_background_light(img);

    ImageRGB latent = img;
    if (opts.use_separation) {
        TruncatedGradientOperator op_l(opts.tau, opts.inner_iters);
        LaplacianSmoothOperator op_p(opts.inner_iters);
        SeparationResult sep = run_separation(img, op_l, op_p, opts.separation);
        latent = std::move(sep.latent);
        out.color_shift = std::move(sep.corruption);
        out.separation_report = std::move(sep.report);
    } else {
        out.color_shift = ImageRGB(img.height(), img.width(), 0.0);
    }

    propagate_per_channel(latent, model, prior, out.background, cfg.epsilon, out.transmission);
    const ImageRGB restored =
        recover_radiance_per_channel(latent, out.transmission, out.background, cfg);
    out.radiance = color_constancy_normalize(restored);
    return out;
}

DerainOutput pipeline_derain(const ImageRGB& img, const NetworkParams& model,
                             const PriorParams& prior, const GMMModel& gmm,
                             const DerainOptions& opts, const RecoveryConfig& cfg) {
    model.validate();
    cfg.validate();
    if (!gmm.fitted()) throw std::invalid_argument("pipeline_derain: GMM model not fitted");

    DerainOutput out;
    ImageRGB latent = img;
    if (opts.use_separation) {
        TruncatedGradientOperator op_l(opts.tau, opts.inner_iters);
        PatchGmmOperator op_p(gmm, opts.gmm_stride);
        SeparationResult sep = run_separation(img, op_l, op_p, opts.separation);
        latent = std::move(sep.latent);
        out.rain = std::move(sep.corruption);
        out.separation_report = std::move(sep.report);
    } else {
        out.rain = ImageRGB(img.height(), img.width(), 0.0);
    }

    DehazeOutput dehazed = pipeline_dehaze(latent, model, prior, cfg);
    out.radiance = std::move(dehazed.radiance);
    out.transmission = std::move(dehazed.transmission);
    out.airlight = dehazed.airlight;
    return out;
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0.0;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < a.pixel_count(); ++i) {
            const double d = a.channel(c).at(i) - b.channel(c).at(i);
            mse += d * d;
        }
    mse /= 3.0 * a.pixel_count();
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

ScalarField luminance(const ImageRGB& img) {
    ScalarField y(img.height(), img.width());
    for (size_t i = 0; i < y.size(); ++i)
        y.at(i) = 0.299 * img.channel(0).at(i) + 0.587 * img.channel(1).at(i) +
                  0.114 * img.channel(2).at(i);
    return y;
}

}  // namespace

double ssim(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
    constexpr int kWindow = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    if (a.height() < kWindow || a.width() < kWindow)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");

    double weight[kWindow][kWindow];
    double wsum = 0.0;
    for (int i = 0; i < kWindow; ++i)
        for (int j = 0; j < kWindow; ++j) {
            const double di = i - (kWindow - 1) / 2.0, dj = j - (kWindow - 1) / 2.0;
            weight[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
            wsum += weight[i][j];
        }
    for (auto& row : weight)
        for (double& v : row) v /= wsum;

    const ScalarField ya = luminance(a), yb = luminance(b);
    double total = 0.0;
    int windows = 0;
    for (int i = 0; i + kWindow <= a.height(); ++i) {
        for (int j = 0; j + kWindow <= a.width(); ++j) {
            double mu_a = 0, mu_b = 0;
            for (int u = 0; u < kWindow; ++u)
                for (int v = 0; v < kWindow; ++v) {
                    mu_a += weight[u][v] * ya(i + u, j + v);
                    mu_b += weight[u][v] * yb(i + u, j + v);
                }
            double var_a = 0, var_b = 0, cov = 0;
            for (int u = 0; u < kWindow; ++u)
                for (int v = 0; v < kWindow; ++v) {
                    const double da = ya(i + u, j + v) - mu_a;
                    const double db = yb(i + u, j + v) - mu_b;
                    var_a += weight[u][v] * da * da;
                    var_b += weight[u][v] * db * db;
                    cov += weight[u][v] * da * db;
                }
            const double s = ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                             ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
            total += s;
            ++windows;
        }
    }
    return total / windows;
}

}  // namespace hazeprop

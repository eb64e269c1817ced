#pragma once

#include "hazeprop/field.hpp"

namespace hazeprop {

/// Global atmospheric (or underwater background) light, one value per channel.
/// Components are kept strictly positive: derived ratios divide by them.
struct AtmosphericLight {
    double c[3] = {1.0, 1.0, 1.0};

    double operator[](int i) const { return c[i]; }
    double& operator[](int i) { return c[i]; }
};

/// Scaling parameters of the bounded-radiance transmission prior and the
/// window of the airlight min-filter.
struct PriorParams {
    double alpha_hat = 1.5;
    double alpha_check = 1.5;
    int window = 15;
};

/// Per channel, the maximum of the min-filtered channel, clamped into
/// [0.05, 1] so downstream ratios stay well defined.
AtmosphericLight estimate_airlight(const ImageRGB& img, int window = 15);

/// Bounded-radiance prior transmission map. For each pixel the maximum over
/// channels of the two ratio candidates
///   (I_c - A_c) / (alpha_hat * max(I_c) - A_c)
///   (I_c - A_c) / (alpha_check * min(I_c) - A_c)
/// projected onto [0,1] last. Candidates whose denominator magnitude falls
/// below 1e-6 are skipped; a pixel with no usable candidate gets 1.
ScalarField prior_transmission(const ImageRGB& img, const AtmosphericLight& a,
                               const PriorParams& p);

/// Single-channel variant used by the per-wavelength underwater propagation:
/// the same two candidates evaluated on one channel only.
ScalarField prior_transmission_single(const ScalarField& channel, double a_c,
                                      const PriorParams& p);

/// Patch-window minimum over channels; the classical comparison baseline.
ScalarField dark_channel(const ImageRGB& img, int patch);

/// Transmission estimate of the dark-channel baseline:
/// 1 - omega * min_patch min_c (I_c / A_c). Comparison baseline only.
ScalarField dcp_transmission(const ImageRGB& img, const AtmosphericLight& a, int patch,
                             double omega = 0.95);

/// Background light from the brightest 0.1% pixels (by mean intensity),
/// picking the member that is simultaneously most green- and blue-shifted
/// relative to red: argmax of min(I_g - I_r, I_b - I_r). Ties break at the
/// first row-major index.
AtmosphericLight underwater_background_light(const ImageRGB& img);

}  // namespace hazeprop

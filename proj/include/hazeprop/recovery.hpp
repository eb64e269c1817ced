#pragma once

#include "hazeprop/field.hpp"
#include "hazeprop/gmm.hpp"
#include "hazeprop/network.hpp"
#include "hazeprop/prior.hpp"
#include "hazeprop/separation.hpp"

namespace hazeprop {

struct RecoveryConfig {
    double epsilon = 0.01;  // transmission floor in the division
    bool clamp_output = true;

    void validate() const;
};

/// J = A + (I - A) / max(t, epsilon), per channel with a shared map.
ImageRGB recover_radiance(const ImageRGB& img, const ScalarField& t, const AtmosphericLight& a,
                          const RecoveryConfig& cfg = {});

/// Per-channel variant: channel c uses t_c and B_c.
ImageRGB recover_radiance_per_channel(const ImageRGB& img, const ScalarField t_rgb[3],
                                      const AtmosphericLight& b, const RecoveryConfig& cfg = {});

/// Rescale channels so their means agree (gain m/mean_c with m the mean of
/// channel means), then clip. Channels with a near-zero mean are left alone.
ImageRGB color_constancy_normalize(const ImageRGB& img);

struct DehazeOutput {
    ImageRGB radiance;
    ScalarField transmission;
    AtmosphericLight airlight;
};

DehazeOutput pipeline_dehaze(const ImageRGB& img, const NetworkParams& model,
                             const PriorParams& prior, const RecoveryConfig& cfg = {});

struct UnderwaterOutput {
    ImageRGB radiance;
    ScalarField transmission[3];
    AtmosphericLight background;
    ImageRGB color_shift;  // separated P layer
    ConvergenceReport separation_report;
};

struct UnderwaterOptions {
    SeparationOptions separation;
    double tau = 0.01;         // gradient-preservation threshold of the L prior
    int inner_iters = 30;
    bool use_separation = true;  // the ablation arm runs the plain per-channel path
};

/// Background light, task-aware separation (gradient-truncation prior on L,
/// Laplacian smoothing on P), per-channel propagation on the latent layer,
/// per-channel recovery, color constancy normalization.
UnderwaterOutput pipeline_underwater(const ImageRGB& img, const NetworkParams& model,
                                     const PriorParams& prior, const UnderwaterOptions& opts = {},
                                     const RecoveryConfig& cfg = {});

struct DerainOutput {
    ImageRGB radiance;
    ImageRGB rain;  // separated P layer
    ScalarField transmission;
    AtmosphericLight airlight;
    ConvergenceReport separation_report;
};

struct DerainOptions {
    SeparationOptions separation;
    double tau = 0.01;
    int inner_iters = 30;
    int gmm_stride = 2;
    bool use_separation = true;
};

/// Separation with the patch-GMM prior on the rain layer, then the dehazing
/// pipeline on the latent layer.
DerainOutput pipeline_derain(const ImageRGB& img, const NetworkParams& model,
                             const PriorParams& prior, const GMMModel& gmm,
                             const DerainOptions& opts = {}, const RecoveryConfig& cfg = {});

/// 10*log10(1/MSE) over all channels, peak 1.0, capped at 99 dB.
double psnr(const ImageRGB& a, const ImageRGB& b);

/// Mean local SSIM on luminance, 11x11 Gaussian window sigma 1.5,
/// K1=0.01, K2=0.03, dynamic range 1.0. Windows fully inside the image.
double ssim(const ImageRGB& a, const ImageRGB& b);

}  // namespace hazeprop

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazeprop/activation.hpp"
#include "hazeprop/dct.hpp"
#include "hazeprop/field.hpp"
#include "hazeprop/prior.hpp"

namespace hazeprop {

/// Coordinates of one convolution filter in the average-discarded DCT basis.
/// The realized kernel sum_i coeffs[i] * d_i is zero-mean by construction.
struct FilterSpec {
    std::vector<double> coeffs;
};

/// Whether the prior term enters a stage with the sign written in the
/// residual definition (t+ = t - D - lambda*P) or the sign appearing in the
/// unrolled input/output relation (t+ = t - D + lambda*P). The source text
/// is inconsistent between the two; both are supported.
enum class SignConvention { paper_eq2, unrolled_eq11 };

SignConvention sign_convention_from_string(const std::string& s);
std::string to_string(SignConvention c);

/// Learnable state of one residual stage.
struct StageParams {
    int kernel_size = 5;
    std::vector<FilterSpec> filters;               // K pre-rotation kernels
    std::vector<PiecewiseActivation> activations;  // K nonlinearities
    double lambda_p = 0.1;
    // When tied, the pre-activation kernel is the 180-degree rotation of the
    // post-activation kernel, which makes the stage the negative gradient of
    // a pointwise energy. Untied stages use the same kernel on both sides
    // and the energy audit does not apply.
    bool tied_rotation = true;

    int filter_count() const { return static_cast<int>(filters.size()); }
    int control_points() const {
        return filters.empty() || activations.empty() ? 0 : activations[0].count();
    }
};

/// Full unrolled network: L stages sharing one shape.
struct NetworkParams {
    std::vector<StageParams> stages;
    SignConvention sign = SignConvention::unrolled_eq11;

    int stage_count() const { return static_cast<int>(stages.size()); }
    int kernel_size() const { return stages.empty() ? 0 : stages[0].kernel_size; }
    int filter_count() const { return stages.empty() ? 0 : stages[0].filter_count(); }
    int control_points() const { return stages.empty() ? 0 : stages[0].control_points(); }

    /// Learnable scalars: L * (K*(n^2-1) + K*M + 1).
    size_t parameter_count() const;

    /// Throws std::invalid_argument when stages disagree on shape or a
    /// coefficient vector has the wrong length.
    void validate() const;
};

/// Shared, cached DCT basis per kernel size. Thread-safe.
const DCTBasis& shared_dct_basis(int kernel_size);

/// Realize the post-activation kernel (omega_hat) of filter k.
Kernel2D realize_filter(const FilterSpec& spec, int kernel_size);

/// Filters initialized one-per-atom from the average-discarded DCT basis and
/// activations sampled from the influence function 2z/(1+z^2); lambda_p 0.1.
StageParams default_stage(int kernel_size, int filter_count, int control_points);

/// All coefficients, activation values and lambda_p zero: an identity stage.
StageParams zero_stage(int kernel_size, int filter_count, int control_points);

NetworkParams default_network(int stage_count, int kernel_size, int filter_count,
                              int control_points,
                              SignConvention sign = SignConvention::unrolled_eq11);

NetworkParams zero_network(int stage_count, int kernel_size, int filter_count,
                           int control_points,
                           SignConvention sign = SignConvention::unrolled_eq11);

/// The filter/activation/filter cascade
///   D(t) = sum_k conv(phi_k(conv(t, w_check_k)), w_hat_k)
/// with w_check_k = rot180(w_hat_k) when tied.
ScalarField data_submodule(const ScalarField& t, const StageParams& s);

/// One residual update t+ = t - D(t) -/+ lambda_p * prior_map; the prior sign
/// follows the convention. No clamping between stages.
ScalarField stage_forward(const ScalarField& t, const ScalarField& prior_map,
                          const StageParams& s, SignConvention convention);

struct ForwardResult {
    ScalarField t_final;             // clamped to [epsilon, 1]
    std::vector<ScalarField> trace;  // t^0 .. t^L, unclamped
    ScalarField prior_map;           // P(I), shared by all stages
    AtmosphericLight airlight;
};

/// Full pass: prior transmission as t^0, L residual stages, final clamp.
ForwardResult network_forward(const ImageRGB& img, const NetworkParams& params,
                              const PriorParams& prior, double epsilon = 0.01);

/// Stage loop on a prepared initial map (used per channel underwater and by
/// the training path). Returns the unclamped trace of length L+1.
std::vector<ScalarField> network_forward_field(const ScalarField& t0,
                                               const ScalarField& prior_map,
                                               const NetworkParams& params);

/// Gibbs energy of one tied stage: sum_k sum_x rho_k((w_check_k conv t)(x)).
/// The inner (pre-activation) kernel appears inside rho so that the stage's
/// data submodule is exactly the negative gradient of this scalar on the
/// interior. Throws std::invalid_argument for untied stages.
double energy_eval(const ScalarField& t, const StageParams& s);

struct EnergyAuditReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int samples = 0;
    bool tied = true;  // false: audit not applicable, errors are zero
};

/// Compare data_submodule against the negative central-difference gradient of
/// energy_eval at randomly chosen interior pixels (margin kernel_size-1, so
/// boundary padding never enters). Relative error uses an absolute floor.
EnergyAuditReport energy_grad_check(const ScalarField& t, const StageParams& s,
                                    int sample_count = 100, uint64_t seed = 17);

}  // namespace hazeprop

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hazeprop/field.hpp"
#include "hazeprop/network.hpp"
#include "hazeprop/prior.hpp"

namespace hazeprop {

/// Hazy observation plus ground-truth transmission crop.
struct TrainingPair {
    ImageRGB observation;
    ScalarField target;
};

/// Flat view of every learnable scalar of a network. Layout is stage-major:
/// for each stage, all filter coefficients (filter-major), then all
/// activation control values (activation-major), then lambda_p.
using GradientVector = std::vector<double>;

/// Copy learnable scalars out of / back into a network. The two are exact
/// inverses; pack(unpack(x)) == x.
GradientVector pack_parameters(const NetworkParams& params);
void unpack_parameters(const GradientVector& x, NetworkParams& params);

/// Quadratic training cost 1/2 * sum (t_L - t_star)^2, unnormalized.
double loss(const ScalarField& t_l, const ScalarField& t_star);

struct BackpropResult {
    double loss = 0.0;
    GradientVector grad;
};

/// Loss and exact analytic gradient for one pair. Differentiates the
/// unclamped stage trace; convolution adjoints are the exact transposes of
/// the symmetric-padded operators so the result matches finite differences
/// at the boundary too.
BackpropResult backprop(const TrainingPair& pair, const NetworkParams& params,
                        const PriorParams& prior);

/// Same, starting from a precomputed initial map and prior map (the network
/// input pipeline is not differentiated; it does not depend on parameters).
BackpropResult backprop_from_maps(const ScalarField& t0, const ScalarField& prior_map,
                                  const ScalarField& target, const NetworkParams& params);

struct LbfgsOptions {
    int max_iterations = 200;
    int memory = 10;
    double gradient_tolerance = 1e-5;  // relative to the initial gradient norm
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    bool project_lambda_nonnegative = false;
    int threads = 0;  // 0: hardware concurrency
};

struct FitReport {
    int iterations = 0;
    std::vector<double> loss_trajectory;  // value at x0, then after each accepted step
    double terminal_gradient_norm = 0.0;
    double wall_seconds = 0.0;
    bool line_search_failed = false;
    bool converged = false;
};

/// Objective: x -> (value, gradient).
using Objective = std::function<double(const GradientVector&, GradientVector&)>;

/// Limited-memory BFGS with strong-Wolfe line search. Deterministic; on
/// line-search failure returns the best iterate seen with the report flagged.
GradientVector lbfgs_minimize(const Objective& objective, GradientVector x0,
                              const LbfgsOptions& opts, FitReport& report);

/// Fit every learnable scalar of `params0` to the training pairs.
std::pair<NetworkParams, FitReport> lbfgs_fit(const std::vector<TrainingPair>& pairs,
                                              const NetworkParams& params0,
                                              const PriorParams& prior,
                                              const LbfgsOptions& opts = {});

enum class TrainMode { greedy, joint, greedy_then_joint };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct TrainShape {
    int stage_count = 5;
    int kernel_size = 5;
    int filter_count = 24;
    int control_points = 31;
    SignConvention sign = SignConvention::unrolled_eq11;
};

struct TrainResult {
    NetworkParams params;
    std::vector<FitReport> reports;  // one per optimization pass
};

/// greedy: stages are appended and fitted one at a time with earlier stages
/// frozen. joint: all stages fitted together from the default init.
/// greedy_then_joint: greedy pass, then joint refinement from its optimum.
TrainResult train_schedule(const std::vector<TrainingPair>& pairs, const TrainShape& shape,
                           TrainMode mode, const PriorParams& prior,
                           const LbfgsOptions& opts = {});

}  // namespace hazeprop

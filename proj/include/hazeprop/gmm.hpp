#pragma once

#include <cstdint>
#include <vector>

#include "hazeprop/field.hpp"
#include "hazeprop/separation.hpp"

namespace hazeprop {

/// Gaussian mixture over mean-removed image patches (dimension patch*patch;
/// the removed mean makes the intrinsic rank one lower, handled by the
/// covariance eigenvalue floor).
struct GMMModel {
    int patch = 8;
    int dim = 0;                       // patch*patch
    std::vector<double> weights;       // n_components
    std::vector<std::vector<double>> means;        // n_components x dim
    std::vector<std::vector<double>> covariances;  // n_components x dim*dim, row-major

    int component_count() const { return static_cast<int>(weights.size()); }
    bool fitted() const { return !weights.empty() && dim == patch * patch; }
};

struct GmmFitOptions {
    int n_components = 3;
    int em_iters = 50;
    uint64_t seed = 0;
    int stride = 1;            // patch sampling stride in the training fields
    int max_patches = 20000;   // subsample cap, seeded
};

struct GmmFitInfo {
    std::vector<double> log_likelihood;  // per EM iteration, non-decreasing
    bool degenerate_fallback = false;    // identical patches, single component
};

/// Standard EM on mean-removed patches with k-means++ style seeding and a
/// 1e-6 eigenvalue floor on covariances. Deterministic per seed.
GMMModel fit_gmm_patches(const std::vector<ScalarField>& samples, int patch,
                         const GmmFitOptions& opts, GmmFitInfo* info = nullptr);

/// EPLL-style approximate MAP: per strided patch, pick the component with the
/// highest responsibility at noise level 1/mu, apply its Wiener filter
/// Sigma (Sigma + (1/mu) Id)^-1 to the mean-removed patch, and average the
/// overlapping reconstructions.
ScalarField operator_patch_gmm(const ScalarField& p, const GMMModel& gmm, double mu,
                               int stride = 1);

class PatchGmmOperator final : public PriorOperator {
public:
    explicit PatchGmmOperator(GMMModel model, int stride = 2)
        : model_(std::move(model)), stride_(stride) {}
    std::string name() const override { return "patch-gmm"; }
    ScalarField apply(const ScalarField& x, double mu) const override {
        return operator_patch_gmm(x, model_, mu, stride_);
    }

private:
    GMMModel model_;
    int stride_;
};

}  // namespace hazeprop

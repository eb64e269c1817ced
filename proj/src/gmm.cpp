#include "hazeprop/gmm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hazeprop/rng.hpp"

namespace hazeprop {

namespace {

constexpr double kEigenFloor = 1e-6;
constexpr double kLog2Pi = 1.8378770664093453;

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<VectorXd> extract_patches(const std::vector<ScalarField>& samples, int patch,
                                      int stride) {
    std::vector<VectorXd> out;
    for (const auto& f : samples) {
        if (f.height() < patch || f.width() < patch) continue;
        for (int i = 0; i + patch <= f.height(); i += stride) {
            for (int j = 0; j + patch <= f.width(); j += stride) {
                VectorXd v(patch * patch);
                int idx = 0;
                for (int a = 0; a < patch; ++a)
                    for (int b = 0; b < patch; ++b) v[idx++] = f(i + a, j + b);
                v.array() -= v.mean();
                out.push_back(std::move(v));
            }
        }
    }
    return out;
}

struct Component {
    double weight;
    VectorXd mean;
    MatrixXd cov;
    // Derived, refreshed after each M step:
    MatrixXd cov_inv;
    double log_norm;  // -0.5*(d log 2pi + log det)
};

void refresh_derived(Component& c) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(c.cov);
    VectorXd evals = es.eigenvalues().cwiseMax(kEigenFloor);
    const MatrixXd& evecs = es.eigenvectors();
    c.cov = evecs * evals.asDiagonal() * evecs.transpose();
    c.cov_inv = evecs * evals.cwiseInverse().asDiagonal() * evecs.transpose();
    double logdet = 0.0;
    for (int i = 0; i < evals.size(); ++i) logdet += std::log(evals[i]);
    c.log_norm = -0.5 * (c.mean.size() * kLog2Pi + logdet);
}

double log_gaussian(const Component& c, const VectorXd& x) {
    const VectorXd d = x - c.mean;
    return c.log_norm - 0.5 * d.dot(c.cov_inv * d);
}

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

GMMModel fit_gmm_patches(const std::vector<ScalarField>& samples, int patch,
                         const GmmFitOptions& opts, GmmFitInfo* info) {
    if (patch < 2) throw std::invalid_argument("fit_gmm_patches: patch must be >= 2");
    if (opts.n_components < 1)
        throw std::invalid_argument("fit_gmm_patches: need >= 1 component");

    std::vector<VectorXd> patches = extract_patches(samples, patch, opts.stride);
    if (static_cast<int>(patches.size()) < 10 * opts.n_components)
        throw std::invalid_argument("fit_gmm_patches: need at least 10 patches per component");

    Rng rng(opts.seed);
    if (static_cast<int>(patches.size()) > opts.max_patches) {
        // Seeded Fisher-Yates prefix shuffle, keep the first max_patches.
        for (int i = 0; i < opts.max_patches; ++i) {
            const size_t j = i + rng.next_below(patches.size() - i);
            std::swap(patches[i], patches[j]);
        }
        patches.resize(opts.max_patches);
    }

    const int d = patch * patch;
    const size_t n = patches.size();
    int n_components = opts.n_components;

    // Degenerate data: every patch identical (e.g. all-constant fields give
    // all-zero mean-removed patches).
    double spread = 0.0;
    for (const auto& p : patches) spread = std::max(spread, (p - patches[0]).lpNorm<Eigen::Infinity>());
    if (spread < 1e-12) n_components = 1;
    if (info) info->degenerate_fallback = n_components == 1 && opts.n_components > 1;

    // k-means++ style seeding.
    std::vector<VectorXd> centers;
    centers.push_back(patches[rng.next_below(n)]);
    std::vector<double> dist2(n, 0.0);
    while (static_cast<int>(centers.size()) < n_components) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, (patches[i] - c).squaredNorm());
            dist2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0.0) {
            double target = rng.next_double() * total, acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.next_below(n);
        }
        centers.push_back(patches[pick]);
    }

    // Initial components from the hard assignment to the nearest center.
    std::vector<Component> comps(n_components);
    {
        std::vector<int> assign(n);
        std::vector<int> count(n_components, 0);
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int k = 0; k < n_components; ++k) {
                const double dd = (patches[i] - centers[k]).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = k;
                }
            }
            assign[i] = best;
            ++count[best];
        }
        for (int k = 0; k < n_components; ++k) {
            comps[k].weight = std::max(1, count[k]) / static_cast<double>(n);
            comps[k].mean = VectorXd::Zero(d);
            comps[k].cov = MatrixXd::Zero(d, d);
        }
        for (size_t i = 0; i < n; ++i) comps[assign[i]].mean += patches[i];
        for (int k = 0; k < n_components; ++k)
            comps[k].mean /= std::max(1, count[k]);
        for (size_t i = 0; i < n; ++i) {
            const VectorXd dd = patches[i] - comps[assign[i]].mean;
            comps[assign[i]].cov += dd * dd.transpose();
        }
        for (int k = 0; k < n_components; ++k) {
            comps[k].cov /= std::max(1, count[k]);
            refresh_derived(comps[k]);
        }
        // Renormalize weights after the max(1, .) guard.
        double wsum = 0.0;
        for (const auto& c : comps) wsum += c.weight;
        for (auto& c : comps) c.weight /= wsum;
    }

    // EM.
    MatrixXd resp(n, n_components);
    for (int iter = 0; iter < opts.em_iters; ++iter) {
        // E step.
        double ll = 0.0;
        std::vector<double> logp(n_components);
        for (size_t i = 0; i < n; ++i) {
            for (int k = 0; k < n_components; ++k)
                logp[k] = std::log(comps[k].weight) + log_gaussian(comps[k], patches[i]);
            const double lse = log_sum_exp(logp);
            ll += lse;
            for (int k = 0; k < n_components; ++k) resp(i, k) = std::exp(logp[k] - lse);
        }
        if (info) info->log_likelihood.push_back(ll);

        // M step.
        for (int k = 0; k < n_components; ++k) {
            const double nk = resp.col(k).sum();
            if (nk < 1e-10) continue;  // starved component keeps parameters
            VectorXd mean = VectorXd::Zero(d);
            for (size_t i = 0; i < n; ++i) mean += resp(i, k) * patches[i];
            mean /= nk;
            MatrixXd cov = MatrixXd::Zero(d, d);
            for (size_t i = 0; i < n; ++i) {
                const VectorXd dd = patches[i] - mean;
                cov.noalias() += resp(i, k) * (dd * dd.transpose());
            }
            cov /= nk;
            comps[k].weight = nk / static_cast<double>(n);
            comps[k].mean = std::move(mean);
            comps[k].cov = std::move(cov);
            refresh_derived(comps[k]);
        }
    }

    GMMModel model;
    model.patch = patch;
    model.dim = d;
    for (const auto& c : comps) {
        model.weights.push_back(c.weight);
        model.means.emplace_back(c.mean.data(), c.mean.data() + d);
        std::vector<double> cov(static_cast<size_t>(d) * d);
        Eigen::Map<MatrixXd>(cov.data(), d, d) = c.cov;
        model.covariances.push_back(std::move(cov));
    }
    return model;
}

ScalarField operator_patch_gmm(const ScalarField& p, const GMMModel& gmm, double mu,
                               int stride) {
    if (!gmm.fitted()) throw std::invalid_argument("operator_patch_gmm: model not fitted");
    if (mu <= 0.0) throw std::invalid_argument("operator_patch_gmm: mu must be > 0");
    const int ps = gmm.patch, d = gmm.dim;
    if (p.height() < ps || p.width() < ps)
        throw std::invalid_argument("operator_patch_gmm: field smaller than the patch");
    const int n_components = gmm.component_count();
    const double noise_var = 1.0 / mu;

    // Per-component Wiener filter Sigma (Sigma + (1/mu) I)^-1 and the
    // selection likelihood under Sigma + (1/mu) I.
    std::vector<MatrixXd> wiener(n_components);
    std::vector<MatrixXd> sel_inv(n_components);
    std::vector<double> sel_log_norm(n_components);
    std::vector<VectorXd> means(n_components);
    for (int k = 0; k < n_components; ++k) {
        const Eigen::Map<const MatrixXd> cov(gmm.covariances[k].data(), d, d);
        means[k] = Eigen::Map<const VectorXd>(gmm.means[k].data(), d);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
        const VectorXd evals = es.eigenvalues().cwiseMax(0.0);
        const MatrixXd& evecs = es.eigenvectors();
        const VectorXd shifted = evals.array() + noise_var;
        wiener[k] = evecs * (evals.array() / shifted.array()).matrix().asDiagonal() *
                    evecs.transpose();
        sel_inv[k] = evecs * shifted.cwiseInverse().asDiagonal() * evecs.transpose();
        double logdet = 0.0;
        for (int i = 0; i < d; ++i) logdet += std::log(shifted[i]);
        sel_log_norm[k] = std::log(std::max(gmm.weights[k], 1e-300)) -
                          0.5 * (d * kLog2Pi + logdet);
    }

    ScalarField acc(p.height(), p.width(), 0.0);
    ScalarField count(p.height(), p.width(), 0.0);

    // Strided grid that always covers the last row/column of patches.
    auto positions = [stride](int extent, int patch) {
        std::vector<int> pos;
        for (int i = 0; i + patch <= extent; i += stride) pos.push_back(i);
        if (pos.empty() || pos.back() != extent - patch) pos.push_back(extent - patch);
        return pos;
    };
    const std::vector<int> rows = positions(p.height(), ps);
    const std::vector<int> cols = positions(p.width(), ps);

    VectorXd patch_vec(d);
    for (int i : rows) {
        for (int j : cols) {
            int idx = 0;
            for (int a = 0; a < ps; ++a)
                for (int b = 0; b < ps; ++b) patch_vec[idx++] = p(i + a, j + b);
            const double mean = patch_vec.mean();
            patch_vec.array() -= mean;

            int best = 0;
            double best_score = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < n_components; ++k) {
                const VectorXd dd = patch_vec - means[k];
                const double score = sel_log_norm[k] - 0.5 * dd.dot(sel_inv[k] * dd);
                if (score > best_score) {
                    best_score = score;
                    best = k;
                }
            }
            const VectorXd filtered =
                means[best] + wiener[best] * (patch_vec - means[best]);

            idx = 0;
            for (int a = 0; a < ps; ++a)
                for (int b = 0; b < ps; ++b) {
                    acc(i + a, j + b) += filtered[idx++] + mean;
                    count(i + a, j + b) += 1.0;
                }
        }
    }
    for (size_t i = 0; i < acc.size(); ++i)
        acc.at(i) = count.at(i) > 0 ? acc.at(i) / count.at(i) : p.at(i);
    return acc;
}

}  // namespace hazeprop

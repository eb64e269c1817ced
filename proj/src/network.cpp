#include "hazeprop/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "hazeprop/conv.hpp"
#include "hazeprop/rng.hpp"

namespace hazeprop {

SignConvention sign_convention_from_string(const std::string& s) {
    if (s == "paper_eq2") return SignConvention::paper_eq2;
    if (s == "unrolled_eq11") return SignConvention::unrolled_eq11;
    throw std::invalid_argument("unknown sign convention: " + s);
}

std::string to_string(SignConvention c) {
    return c == SignConvention::paper_eq2 ? "paper_eq2" : "unrolled_eq11";
}

size_t NetworkParams::parameter_count() const {
    size_t total = 0;
    for (const auto& s : stages) {
        const size_t atoms = static_cast<size_t>(s.kernel_size) * s.kernel_size - 1;
        total += s.filters.size() * atoms;
        for (const auto& a : s.activations) total += a.count();
        total += 1;  // lambda_p
    }
    return total;
}

void NetworkParams::validate() const {
    if (stages.empty()) throw std::invalid_argument("network: needs at least one stage");
    const int n = stages[0].kernel_size;
    const int k = stages[0].filter_count();
    const int m = stages[0].control_points();
    if (n < 3 || n % 2 == 0) throw std::invalid_argument("network: kernel size must be odd >= 3");
    if (k < 1) throw std::invalid_argument("network: needs at least one filter per stage");
    for (const auto& s : stages) {
        if (s.kernel_size != n || s.filter_count() != k || s.control_points() != m)
            throw std::invalid_argument("network: stages disagree on shape");
        if (s.activations.size() != s.filters.size())
            throw std::invalid_argument("network: filter/activation count mismatch");
        const size_t atoms = static_cast<size_t>(n) * n - 1;
        for (const auto& f : s.filters)
            if (f.coeffs.size() != atoms)
                throw std::invalid_argument("network: filter coefficient count mismatch");
    }
}

const DCTBasis& shared_dct_basis(int kernel_size) {
    static std::mutex mutex;
    static std::map<int, DCTBasis> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(kernel_size);
    if (it == cache.end()) it = cache.emplace(kernel_size, dct_atoms(kernel_size)).first;
    return it->second;
}

Kernel2D realize_filter(const FilterSpec& spec, int kernel_size) {
    return dct_reconstruct(shared_dct_basis(kernel_size), spec.coeffs);
}

StageParams default_stage(int kernel_size, int filter_count, int control_points) {
    const int atoms = kernel_size * kernel_size - 1;
    StageParams s;
    s.kernel_size = kernel_size;
    s.filters.resize(filter_count);
    for (int k = 0; k < filter_count; ++k) {
        s.filters[k].coeffs.assign(atoms, 0.0);
        s.filters[k].coeffs[k % atoms] = 1.0;  // one basis atom per filter
    }
    s.activations.assign(filter_count, PiecewiseActivation::influence_init(control_points));
    s.lambda_p = 0.1;
    return s;
}

StageParams zero_stage(int kernel_size, int filter_count, int control_points) {
    StageParams s;
    s.kernel_size = kernel_size;
    s.filters.assign(filter_count, FilterSpec{std::vector<double>(
                                       static_cast<size_t>(kernel_size) * kernel_size - 1, 0.0)});
    s.activations.assign(filter_count, PiecewiseActivation::zero_init(control_points));
    s.lambda_p = 0.0;
    return s;
}

NetworkParams default_network(int stage_count, int kernel_size, int filter_count,
                              int control_points, SignConvention sign) {
    NetworkParams p;
    p.sign = sign;
    p.stages.assign(stage_count, default_stage(kernel_size, filter_count, control_points));
    p.validate();
    return p;
}

NetworkParams zero_network(int stage_count, int kernel_size, int filter_count,
                           int control_points, SignConvention sign) {
    NetworkParams p;
    p.sign = sign;
    p.stages.assign(stage_count, zero_stage(kernel_size, filter_count, control_points));
    p.validate();
    return p;
}

ScalarField data_submodule(const ScalarField& t, const StageParams& s) {
    ScalarField out(t.height(), t.width(), 0.0);
    for (int k = 0; k < s.filter_count(); ++k) {
        const Kernel2D w_hat = realize_filter(s.filters[k], s.kernel_size);
        const Kernel2D w_check = s.tied_rotation ? rot180(w_hat) : w_hat;
        ScalarField u = conv2d_same(t, w_check);
        for (size_t i = 0; i < u.size(); ++i) u.at(i) = s.activations[k].eval(u.at(i));
        const ScalarField d = conv2d_same(u, w_hat);
        for (size_t i = 0; i < out.size(); ++i) out.at(i) += d.at(i);
    }
    return out;
}

ScalarField stage_forward(const ScalarField& t, const ScalarField& prior_map,
                          const StageParams& s, SignConvention convention) {
    if (!t.same_shape(prior_map))
        throw std::invalid_argument("stage_forward: prior map shape mismatch");
    const double sign = convention == SignConvention::unrolled_eq11 ? 1.0 : -1.0;
    ScalarField d = data_submodule(t, s);
    ScalarField out(t.height(), t.width());
    for (size_t i = 0; i < out.size(); ++i)
        out.at(i) = t.at(i) - d.at(i) + sign * s.lambda_p * prior_map.at(i);
    return out;
}

std::vector<ScalarField> network_forward_field(const ScalarField& t0,
                                               const ScalarField& prior_map,
                                               const NetworkParams& params) {
    std::vector<ScalarField> trace;
    trace.reserve(params.stage_count() + 1);
    trace.push_back(t0);
    for (const auto& stage : params.stages)
        trace.push_back(stage_forward(trace.back(), prior_map, stage, params.sign));
    return trace;
}

ForwardResult network_forward(const ImageRGB& img, const NetworkParams& params,
                              const PriorParams& prior, double epsilon) {
    params.validate();
    ForwardResult res;
    res.airlight = estimate_airlight(img, prior.window);
    res.prior_map = prior_transmission(img, res.airlight, prior);
    res.trace = network_forward_field(res.prior_map, res.prior_map, params);
    res.t_final = res.trace.back();
    res.t_final.clamp(epsilon, 1.0);
    return res;
}

double energy_eval(const ScalarField& t, const StageParams& s) {
    if (!s.tied_rotation)
        throw std::invalid_argument(
            "energy_eval: audit unavailable, stage does not tie the rotated kernel pair");
    double energy = 0.0;
    for (int k = 0; k < s.filter_count(); ++k) {
        const Kernel2D w_check = rot180(realize_filter(s.filters[k], s.kernel_size));
        const ScalarField u = conv2d_same(t, w_check);
        for (size_t i = 0; i < u.size(); ++i) energy += s.activations[k].antiderivative(u.at(i));
    }
    return energy;
}

EnergyAuditReport energy_grad_check(const ScalarField& t, const StageParams& s,
                                    int sample_count, uint64_t seed) {
    const int margin = s.kernel_size - 1;  // both convolutions clear the border
    if (t.height() <= 2 * margin || t.width() <= 2 * margin)
        throw std::invalid_argument("energy_grad_check: field too small for interior sampling");

    const ScalarField d = data_submodule(t, s);
    EnergyAuditReport report;
    report.samples = sample_count;

    Rng rng(seed);
    const double h = 1e-5;
    ScalarField probe = t;
    for (int q = 0; q < sample_count; ++q) {
        const int i = margin + static_cast<int>(rng.next_below(t.height() - 2 * margin));
        const int j = margin + static_cast<int>(rng.next_below(t.width() - 2 * margin));
        const double saved = probe(i, j);
        probe(i, j) = saved + h;
        const double e_plus = energy_eval(probe, s);
        probe(i, j) = saved - h;
        const double e_minus = energy_eval(probe, s);
        probe(i, j) = saved;

        const double fd_neg_grad = -(e_plus - e_minus) / (2.0 * h);
        const double abs_err = std::abs(fd_neg_grad - d(i, j));
        const double rel_err = abs_err / std::max(std::abs(d(i, j)), 1e-6);
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        report.max_rel_error = std::max(report.max_rel_error, rel_err);
    }
    return report;
}

}  // namespace hazeprop

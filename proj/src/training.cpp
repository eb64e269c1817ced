#include "hazeprop/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <thread>

#include "hazeprop/conv.hpp"

namespace hazeprop {

// --- parameter packing -------------------------------------------------------

GradientVector pack_parameters(const NetworkParams& params) {
    GradientVector x;
    x.reserve(params.parameter_count());
    for (const auto& s : params.stages) {
        for (const auto& f : s.filters) x.insert(x.end(), f.coeffs.begin(), f.coeffs.end());
        for (const auto& a : s.activations)
            x.insert(x.end(), a.values().begin(), a.values().end());
        x.push_back(s.lambda_p);
    }
    return x;
}

void unpack_parameters(const GradientVector& x, NetworkParams& params) {
    if (x.size() != params.parameter_count())
        throw std::invalid_argument("unpack_parameters: size mismatch");
    size_t pos = 0;
    for (auto& s : params.stages) {
        for (auto& f : s.filters) {
            std::copy(x.begin() + pos, x.begin() + pos + f.coeffs.size(), f.coeffs.begin());
            pos += f.coeffs.size();
        }
        for (auto& a : s.activations) {
            std::vector<double> q(x.begin() + pos, x.begin() + pos + a.count());
            pos += a.count();
            a.set_values(std::move(q));
        }
        s.lambda_p = x[pos++];
    }
}

// --- loss and backprop -------------------------------------------------------

double loss(const ScalarField& t_l, const ScalarField& t_star) {
    if (!t_l.same_shape(t_star)) throw std::invalid_argument("loss: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < t_l.size(); ++i) {
        const double d = t_l.at(i) - t_star.at(i);
        acc += d * d;
    }
    return 0.5 * acc;
}

namespace {

// Per-stage gradient block sizes within the flat layout.
struct StageLayout {
    size_t coeffs_per_filter;
    size_t values_per_activation;
    size_t filters;
    size_t stride;  // total scalars per stage

    explicit StageLayout(const StageParams& s)
        : coeffs_per_filter(static_cast<size_t>(s.kernel_size) * s.kernel_size - 1),
          values_per_activation(static_cast<size_t>(s.control_points())),
          filters(static_cast<size_t>(s.filter_count())),
          stride(filters * coeffs_per_filter + filters * values_per_activation + 1) {}

    size_t coeff_offset(size_t k) const { return k * coeffs_per_filter; }
    size_t value_offset(size_t k) const {
        return filters * coeffs_per_filter + k * values_per_activation;
    }
    size_t lambda_offset() const { return stride - 1; }
};

}  // namespace

BackpropResult backprop_from_maps(const ScalarField& t0, const ScalarField& prior_map,
                                  const ScalarField& target, const NetworkParams& params) {
    params.validate();
    const int stage_count = params.stage_count();
    const std::vector<ScalarField> trace = network_forward_field(t0, prior_map, params);

    BackpropResult result;
    result.loss = loss(trace.back(), target);
    result.grad.assign(params.parameter_count(), 0.0);

    const double prior_sign = params.sign == SignConvention::unrolled_eq11 ? 1.0 : -1.0;

    // Adjoint of the final state.
    ScalarField tbar = trace.back() - target;

    size_t stage_base = result.grad.size();
    for (int l = stage_count - 1; l >= 0; --l) {
        const StageParams& s = params.stages[l];
        const StageLayout layout(s);
        stage_base -= layout.stride;
        const ScalarField& t_in = trace[l];

        // lambda_p enters as +/- lambda * prior_map.
        result.grad[stage_base + layout.lambda_offset()] = prior_sign * dot(tbar, prior_map);

        // The data term enters with a minus: dJ/dD = -tbar.
        ScalarField dbar(tbar.height(), tbar.width());
        for (size_t i = 0; i < dbar.size(); ++i) dbar.at(i) = -tbar.at(i);

        ScalarField t_in_bar = tbar;  // identity skip path
        for (size_t k = 0; k < layout.filters; ++k) {
            const Kernel2D w_hat = realize_filter(s.filters[k], s.kernel_size);
            const Kernel2D w_check = s.tied_rotation ? rot180(w_hat) : w_hat;
            const PiecewiseActivation& phi = s.activations[k];

            // Forward intermediates of this filter pipeline.
            const ScalarField u = conv2d_same(t_in, w_check);
            ScalarField v(u.height(), u.width());
            for (size_t i = 0; i < u.size(); ++i) v.at(i) = phi.eval(u.at(i));

            // Outer convolution: adjoint into v, gradient into w_hat.
            const ScalarField vbar = conv2d_same_adjoint(dbar, w_hat);
            Kernel2D w_hat_grad = conv2d_kernel_grad(v, dbar, s.kernel_size);

            // Activation: control-value gradients via hat weights, and the
            // pointwise slope for the chain into u.
            double* qgrad = result.grad.data() + stage_base + layout.value_offset(k);
            ScalarField ubar(u.height(), u.width());
            for (size_t i = 0; i < u.size(); ++i) {
                const auto nw = phi.value_weights(u.at(i));
                qgrad[nw.left] += vbar.at(i) * nw.w_left;
                qgrad[nw.left + 1] += vbar.at(i) * nw.w_right;
                ubar.at(i) = vbar.at(i) * phi.slope(u.at(i));
            }

            // Inner convolution: adjoint into t, gradient into w_check.
            const ScalarField t_contrib = conv2d_same_adjoint(ubar, w_check);
            for (size_t i = 0; i < t_in_bar.size(); ++i) t_in_bar.at(i) += t_contrib.at(i);
            const Kernel2D w_check_grad = conv2d_kernel_grad(t_in, ubar, s.kernel_size);

            // Both occurrences of the stored kernel: the rotated inner copy
            // folds back through rot180 (tied) or directly (untied).
            if (s.tied_rotation) {
                const Kernel2D folded = rot180(w_check_grad);
                for (size_t i = 0; i < w_hat_grad.taps().size(); ++i)
                    w_hat_grad.taps()[i] += folded.taps()[i];
            } else {
                for (size_t i = 0; i < w_hat_grad.taps().size(); ++i)
                    w_hat_grad.taps()[i] += w_check_grad.taps()[i];
            }

            // Chain into the DCT coefficients.
            const std::vector<double> coeff_grad =
                dct_project(shared_dct_basis(s.kernel_size), w_hat_grad);
            double* cgrad = result.grad.data() + stage_base + layout.coeff_offset(k);
            for (size_t i = 0; i < coeff_grad.size(); ++i) cgrad[i] += coeff_grad[i];
        }
        tbar = std::move(t_in_bar);
    }
    return result;
}

BackpropResult backprop(const TrainingPair& pair, const NetworkParams& params,
                        const PriorParams& prior) {
    if (!pair.observation.channel(0).same_shape(pair.target))
        throw std::invalid_argument("backprop: observation/target shape mismatch");
    const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
    const ScalarField prior_map = prior_transmission(pair.observation, a, prior);
    return backprop_from_maps(prior_map, prior_map, pair.target, params);
}

// --- L-BFGS ------------------------------------------------------------------

namespace {

double norm2(const GradientVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double vdot(const GradientVector& a, const GradientVector& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct CurvaturePair {
    GradientVector s, y;
    double rho;
};

// Strong-Wolfe line search, the bracket-and-zoom scheme. phi(a) evaluates the
// objective at x + a*d and fills the gradient; returns the accepted step or 0.
class WolfeSearch {
public:
    WolfeSearch(const Objective& f, const GradientVector& x, const GradientVector& d,
                double f0, double g0, double c1, double c2)
        : f_(f), x_(x), d_(d), f0_(f0), g0_(g0), c1_(c1), c2_(c2), probe_(x.size()),
          grad_(x.size()) {}

    double run(double alpha_init, double& f_out, GradientVector& g_out) {
        double alpha_prev = 0.0, f_prev = f0_, g_prev = g0_;
        double alpha = alpha_init;
        for (int iter = 0; iter < 30; ++iter) {
            const double fa = eval(alpha);
            const double ga = dir_derivative();
            if (fa > f0_ + c1_ * alpha * g0_ || (iter > 0 && fa >= f_prev))
                return zoom(alpha_prev, f_prev, g_prev, alpha, fa, ga, f_out, g_out);
            if (std::abs(ga) <= -c2_ * g0_) {
                f_out = fa;
                g_out = grad_;
                return alpha;
            }
            if (ga >= 0.0) return zoom(alpha, fa, ga, alpha_prev, f_prev, g_prev, f_out, g_out);
            alpha_prev = alpha;
            f_prev = fa;
            g_prev = ga;
            alpha *= 2.0;
        }
        return 0.0;
    }

private:
    double eval(double alpha) {
        for (size_t i = 0; i < x_.size(); ++i) probe_[i] = x_[i] + alpha * d_[i];
        return f_(probe_, grad_);
    }

    double dir_derivative() const { return vdot(grad_, d_); }

    double zoom(double lo, double f_lo, double g_lo, double hi, double f_hi, double g_hi,
                double& f_out, GradientVector& g_out) {
        (void)f_hi;
        (void)g_hi;
        for (int iter = 0; iter < 40; ++iter) {
            const double alpha = 0.5 * (lo + hi);
            if (alpha == lo || alpha == hi) break;  // interval exhausted
            const double fa = eval(alpha);
            const double ga = dir_derivative();
            if (fa > f0_ + c1_ * alpha * g0_ || fa >= f_lo) {
                hi = alpha;
            } else {
                if (std::abs(ga) <= -c2_ * g0_) {
                    f_out = fa;
                    g_out = grad_;
                    return alpha;
                }
                if (ga * (hi - lo) >= 0.0) hi = lo;
                lo = alpha;
                f_lo = fa;
                g_lo = ga;
            }
        }
        // Sufficient decrease without the curvature certificate still moves
        // the iterate downhill; fall back to the best bracketed point.
        if (f_lo < f0_ + c1_ * lo * g0_ && lo > 0.0) {
            const double fa = eval(lo);
            f_out = fa;
            g_out = grad_;
            return lo;
        }
        return 0.0;
    }

    const Objective& f_;
    const GradientVector& x_;
    const GradientVector& d_;
    double f0_, g0_, c1_, c2_;
    GradientVector probe_;
    GradientVector grad_;
};

}  // namespace

GradientVector lbfgs_minimize(const Objective& objective, GradientVector x,
                              const LbfgsOptions& opts, FitReport& report) {
    const auto t_start = std::chrono::steady_clock::now();
    const size_t n = x.size();

    GradientVector grad(n);
    double f = objective(x, grad);
    report.loss_trajectory.push_back(f);

    const double g0_norm = norm2(grad);
    const double tol = std::max(1e-12, opts.gradient_tolerance * g0_norm);

    std::deque<CurvaturePair> history;
    GradientVector best_x = x;
    double best_f = f;

    int iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        const double gnorm = norm2(grad);
        if (gnorm <= tol) {
            report.converged = true;
            break;
        }

        // Two-loop recursion.
        GradientVector d(n);
        for (size_t i = 0; i < n; ++i) d[i] = -grad[i];
        std::vector<double> alpha_hist(history.size());
        for (size_t h = history.size(); h-- > 0;) {
            const auto& cp = history[h];
            alpha_hist[h] = cp.rho * vdot(cp.s, d);
            for (size_t i = 0; i < n; ++i) d[i] -= alpha_hist[h] * cp.y[i];
        }
        if (!history.empty()) {
            const auto& last = history.back();
            const double gamma = vdot(last.s, last.y) / vdot(last.y, last.y);
            for (size_t i = 0; i < n; ++i) d[i] *= gamma;
        }
        for (size_t h = 0; h < history.size(); ++h) {
            const auto& cp = history[h];
            const double beta = cp.rho * vdot(cp.y, d);
            for (size_t i = 0; i < n; ++i) d[i] += (alpha_hist[h] - beta) * cp.s[i];
        }

        double dir_deriv = vdot(grad, d);
        if (dir_deriv >= 0.0) {  // curvature went bad; restart from steepest descent
            history.clear();
            for (size_t i = 0; i < n; ++i) d[i] = -grad[i];
            dir_deriv = vdot(grad, d);
            if (dir_deriv >= 0.0) break;  // gradient is exactly zero
        }

        const double alpha_init = history.empty() ? std::min(1.0, 1.0 / norm2(d)) : 1.0;
        WolfeSearch search(objective, x, d, f, dir_deriv, opts.wolfe_c1, opts.wolfe_c2);
        GradientVector g_new(n);
        double f_new = f;
        const double alpha = search.run(alpha_init, f_new, g_new);
        if (alpha <= 0.0) {
            report.line_search_failed = true;
            break;
        }

        GradientVector s(n), y(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = alpha * d[i];
            x[i] += s[i];
            y[i] = g_new[i] - grad[i];
        }
        const double sy = vdot(s, y);
        if (sy > 1e-12 * norm2(s) * norm2(y)) {
            history.push_back({std::move(s), std::move(y), 1.0 / sy});
            if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
        }

        f = f_new;
        grad = std::move(g_new);
        report.loss_trajectory.push_back(f);
        if (f < best_f) {
            best_f = f;
            best_x = x;
        }
    }

    report.iterations = iter;
    report.terminal_gradient_norm = norm2(grad);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return f <= best_f ? x : best_x;
}

// --- data-parallel objective over training pairs -----------------------------

namespace {

struct PreparedPair {
    ScalarField prior_map;  // doubles as t0
    ScalarField target;
};

std::vector<PreparedPair> prepare_pairs(const std::vector<TrainingPair>& pairs,
                                        const PriorParams& prior) {
    std::vector<PreparedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!p.observation.channel(0).same_shape(p.target))
            throw std::invalid_argument("training pair: observation/target shape mismatch");
        const AtmosphericLight a = estimate_airlight(p.observation, prior.window);
        out.push_back({prior_transmission(p.observation, a, prior), p.target});
    }
    return out;
}

// Sums per-pair losses and gradients. Pairs are processed concurrently and
// reduced in index order so results do not depend on scheduling.
class SummedObjective {
public:
    SummedObjective(std::vector<PreparedPair> pairs, NetworkParams templ, int threads)
        : pairs_(std::move(pairs)), template_(std::move(templ)) {
        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        threads_ = threads > 0 ? threads : static_cast<int>(hw);
        threads_ = std::min<int>(threads_, static_cast<int>(pairs_.size()));
        threads_ = std::max(threads_, 1);
    }

    double operator()(const GradientVector& x, GradientVector& grad) {
        NetworkParams params = template_;
        unpack_parameters(x, params);

        std::vector<BackpropResult> results(pairs_.size());
        if (threads_ == 1) {
            for (size_t i = 0; i < pairs_.size(); ++i) results[i] = eval_one(i, params);
        } else {
            std::vector<std::thread> workers;
            std::atomic<size_t> next{0};
            for (int w = 0; w < threads_; ++w) {
                workers.emplace_back([&] {
                    for (size_t i = next.fetch_add(1); i < pairs_.size();
                         i = next.fetch_add(1))
                        results[i] = eval_one(i, params);
                });
            }
            for (auto& w : workers) w.join();
        }

        grad.assign(x.size(), 0.0);
        double total = 0.0;
        for (const auto& r : results) {
            total += r.loss;
            for (size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
        }
        return total;
    }

private:
    BackpropResult eval_one(size_t i, const NetworkParams& params) const {
        return backprop_from_maps(pairs_[i].prior_map, pairs_[i].prior_map, pairs_[i].target,
                                  params);
    }

    std::vector<PreparedPair> pairs_;
    NetworkParams template_;
    int threads_;
};

}  // namespace

std::pair<NetworkParams, FitReport> lbfgs_fit(const std::vector<TrainingPair>& pairs,
                                              const NetworkParams& params0,
                                              const PriorParams& prior,
                                              const LbfgsOptions& opts) {
    if (pairs.empty()) throw std::invalid_argument("lbfgs_fit: no training pairs");
    params0.validate();

    SummedObjective objective(prepare_pairs(pairs, prior), params0, opts.threads);
    FitReport report;
    GradientVector x =
        lbfgs_minimize([&objective](const GradientVector& v, GradientVector& g) {
            return objective(v, g);
        }, pack_parameters(params0), opts, report);

    NetworkParams fitted = params0;
    unpack_parameters(x, fitted);
    if (opts.project_lambda_nonnegative)
        for (auto& s : fitted.stages) s.lambda_p = std::max(0.0, s.lambda_p);
    return {std::move(fitted), std::move(report)};
}

// --- schedules ---------------------------------------------------------------

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "greedy") return TrainMode::greedy;
    if (s == "joint") return TrainMode::joint;
    if (s == "greedy_then_joint") return TrainMode::greedy_then_joint;
    throw std::invalid_argument("unknown train mode: " + s);
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::greedy: return "greedy";
        case TrainMode::joint: return "joint";
        default: return "greedy_then_joint";
    }
}

namespace {

// Fit only the last stage of `params`, freezing everything before it.
std::pair<NetworkParams, FitReport> fit_last_stage(const std::vector<TrainingPair>& pairs,
                                                   const NetworkParams& params,
                                                   const PriorParams& prior,
                                                   const LbfgsOptions& opts) {
    NetworkParams head = params;
    head.stages.pop_back();
    const size_t frozen = head.stages.empty() ? 0 : head.parameter_count();

    SummedObjective full_objective(prepare_pairs(pairs, prior), params, opts.threads);

    GradientVector x_full = pack_parameters(params);

    auto objective = [&](const GradientVector& x_tail, GradientVector& g_tail) {
        GradientVector x = x_full;
        std::copy(x_tail.begin(), x_tail.end(), x.begin() + frozen);
        GradientVector g_full;
        const double f = full_objective(x, g_full);
        g_tail.assign(g_full.begin() + frozen, g_full.end());
        return f;
    };

    FitReport report;
    GradientVector x_tail0(x_full.begin() + frozen, x_full.end());
    GradientVector x_tail = lbfgs_minimize(objective, std::move(x_tail0), opts, report);

    GradientVector x = x_full;
    std::copy(x_tail.begin(), x_tail.end(), x.begin() + frozen);
    NetworkParams fitted = params;
    unpack_parameters(x, fitted);
    return {std::move(fitted), std::move(report)};
}

}  // namespace

TrainResult train_schedule(const std::vector<TrainingPair>& pairs, const TrainShape& shape,
                           TrainMode mode, const PriorParams& prior,
                           const LbfgsOptions& opts) {
    TrainResult result;
    if (mode == TrainMode::joint) {
        NetworkParams init = default_network(shape.stage_count, shape.kernel_size,
                                             shape.filter_count, shape.control_points,
                                             shape.sign);
        auto [fitted, report] = lbfgs_fit(pairs, init, prior, opts);
        result.params = std::move(fitted);
        result.reports.push_back(std::move(report));
        return result;
    }

    // Greedy pass: grow the network stage by stage.
    NetworkParams current;
    current.sign = shape.sign;
    for (int l = 0; l < shape.stage_count; ++l) {
        current.stages.push_back(
            default_stage(shape.kernel_size, shape.filter_count, shape.control_points));
        auto [fitted, report] = fit_last_stage(pairs, current, prior, opts);
        current = std::move(fitted);
        result.reports.push_back(std::move(report));
    }

    if (mode == TrainMode::greedy_then_joint) {
        auto [fitted, report] = lbfgs_fit(pairs, current, prior, opts);
        current = std::move(fitted);
        result.reports.push_back(std::move(report));
    }
    result.params = std::move(current);
    return result;
}

}  // namespace hazeprop

#include "hazeprop/separation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hazeprop/conv.hpp"

namespace hazeprop {

// --- linear pieces for the smoothing operators --------------------------------

namespace {

// Forward differences with reflective boundary (zero across the last border,
// since the reflected neighbor equals the edge sample).
void forward_diff(const ScalarField& f, ScalarField& dx, ScalarField& dy) {
    const int h = f.height(), w = f.width();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            dx(i, j) = j + 1 < w ? f(i, j + 1) - f(i, j) : 0.0;
            dy(i, j) = i + 1 < h ? f(i + 1, j) - f(i, j) : 0.0;
        }
}

// Exact adjoint of forward_diff: negative backward divergence.
void forward_diff_adjoint(const ScalarField& dx, const ScalarField& dy, ScalarField& out) {
    const int h = dx.height(), w = dx.width();
    out.fill(0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (j + 1 < w) {
                out(i, j + 1) += dx(i, j);
                out(i, j) -= dx(i, j);
            }
            if (i + 1 < h) {
                out(i + 1, j) += dy(i, j);
                out(i, j) -= dy(i, j);
            }
        }
}

// 5-point Laplacian with reflective boundary.
ScalarField laplacian(const ScalarField& f) {
    const int h = f.height(), w = f.width();
    ScalarField out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double up = f(reflect_index(i - 1, h), j);
            const double down = f(reflect_index(i + 1, h), j);
            const double left = f(i, reflect_index(j - 1, w));
            const double right = f(i, reflect_index(j + 1, w));
            out(i, j) = up + down + left + right - 4.0 * f(i, j);
        }
    return out;
}

// Adjoint of the reflective-boundary Laplacian (scatter form).
ScalarField laplacian_adjoint(const ScalarField& g) {
    const int h = g.height(), w = g.width();
    ScalarField out(h, w, 0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double v = g(i, j);
            out(reflect_index(i - 1, h), j) += v;
            out(reflect_index(i + 1, h), j) += v;
            out(i, reflect_index(j - 1, w)) += v;
            out(i, reflect_index(j + 1, w)) += v;
            out(i, j) -= 4.0 * v;
        }
    return out;
}

// Conjugate gradients on apply(x) = b, starting from x0.
ScalarField conjugate_gradient(const std::function<ScalarField(const ScalarField&)>& apply,
                               const ScalarField& b, const ScalarField& x0, int iters) {
    ScalarField x = x0;
    ScalarField r = b - apply(x);
    ScalarField p = r;
    double rs = dot(r, r);
    if (rs == 0.0) return x;
    for (int it = 0; it < iters; ++it) {
        const ScalarField ap = apply(p);
        const double pap = dot(p, ap);
        if (pap <= 0.0) break;
        const double alpha = rs / pap;
        for (size_t i = 0; i < x.size(); ++i) {
            x.at(i) += alpha * p.at(i);
            r.at(i) -= alpha * ap.at(i);
        }
        const double rs_new = dot(r, r);
        if (rs_new < 1e-28) break;
        const double beta = rs_new / rs;
        for (size_t i = 0; i < p.size(); ++i) p.at(i) = r.at(i) + beta * p.at(i);
        rs = rs_new;
    }
    return x;
}

}  // namespace

ScalarField operator_truncated_gradient(const ScalarField& l, double tau, double mu,
                                        int inner_iters) {
    if (tau <= 0.0) throw std::invalid_argument("operator_truncated_gradient: tau must be > 0");
    if (mu <= 0.0) throw std::invalid_argument("operator_truncated_gradient: mu must be > 0");
    const int h = l.height(), w = l.width();
    ScalarField dx(h, w), dy(h, w);
    forward_diff(l, dx, dy);

    // Hard truncation: the pointwise minimizer of min(g^2, tau) keeps only
    // gradients that are already large.
    for (size_t i = 0; i < dx.size(); ++i) {
        if (dx.at(i) * dx.at(i) < tau) dx.at(i) = 0.0;
        if (dy.at(i) * dy.at(i) < tau) dy.at(i) = 0.0;
    }

    ScalarField div(h, w);
    forward_diff_adjoint(dx, dy, div);
    ScalarField b(h, w);
    for (size_t i = 0; i < b.size(); ++i) b.at(i) = mu * l.at(i) + div.at(i);

    auto apply = [mu, h, w](const ScalarField& x) {
        ScalarField gx(h, w), gy(h, w), out(h, w);
        forward_diff(x, gx, gy);
        forward_diff_adjoint(gx, gy, out);
        for (size_t i = 0; i < out.size(); ++i) out.at(i) += mu * x.at(i);
        return out;
    };
    return conjugate_gradient(apply, b, l, inner_iters);
}

ScalarField operator_laplacian_smooth(const ScalarField& p, double mu, int inner_iters) {
    if (mu <= 0.0) throw std::invalid_argument("operator_laplacian_smooth: mu must be > 0");
    ScalarField b = p;
    for (size_t i = 0; i < b.size(); ++i) b.at(i) *= mu;
    auto apply = [mu](const ScalarField& x) {
        ScalarField out = laplacian_adjoint(laplacian(x));
        for (size_t i = 0; i < out.size(); ++i) out.at(i) = mu * x.at(i) + 2.0 * out.at(i);
        return out;
    };
    return conjugate_gradient(apply, b, p, inner_iters);
}

// --- half-quadratic iterations -------------------------------------------------

SeparationState SeparationState::init(const ImageRGB& observation, double mu_l, double mu_p,
                                      double eta) {
    if (mu_l <= 0.0 || mu_p <= 0.0) throw std::invalid_argument("separation: mu must be > 0");
    if (eta <= 1.0) throw std::invalid_argument("separation: eta must exceed 1");
    SeparationState st;
    st.latent = observation;                                     // L0 = I
    st.corruption = ImageRGB(observation.height(), observation.width(), 0.0);  // P0 = 0
    st.aux_l = st.latent;
    st.aux_p = st.corruption;
    st.mu_l = mu_l;
    st.mu_p = mu_p;
    st.eta = eta;
    return st;
}

namespace {

// Project x into [0, bound] pointwise; counts samples that moved more than
// a tolerance (operator contract violations).
int project_box(ImageRGB& x, const ImageRGB& bound) {
    int violations = 0;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < x.pixel_count(); ++i) {
            double& v = x.channel(c).at(i);
            const double clamped = std::clamp(v, 0.0, bound.channel(c).at(i));
            if (std::abs(clamped - v) > 1e-9) ++violations;
            v = clamped;
        }
    return violations;
}

}  // namespace

SeparationState hq_step(const ImageRGB& observation, const SeparationState& st,
                        const PriorOperator& op_l, const PriorOperator& op_p) {
    if (!observation.same_shape(st.latent))
        throw std::invalid_argument("hq_step: state/observation shape mismatch");
    SeparationState next = st;

    // Y_L+ = A_L(L), then the closed-form L update.
    for (int c = 0; c < 3; ++c)
        next.aux_l.channel(c) = op_l.apply(st.latent.channel(c), st.mu_l);
    next.box_violations += project_box(next.aux_l, observation);
    for (int c = 0; c < 3; ++c) {
        const auto& i_c = observation.channel(c);
        const auto& p_c = st.corruption.channel(c);
        const auto& y_c = next.aux_l.channel(c);
        auto& l_c = next.latent.channel(c);
        const double inv = 1.0 / (1.0 + st.mu_l);
        for (size_t i = 0; i < i_c.size(); ++i)
            l_c.at(i) = inv * (i_c.at(i) - p_c.at(i) + st.mu_l * y_c.at(i));
    }
    project_box(next.latent, observation);

    // Y_P+ = A_P(P), then the P update against the fresh L.
    for (int c = 0; c < 3; ++c)
        next.aux_p.channel(c) = op_p.apply(st.corruption.channel(c), st.mu_p);
    next.box_violations += project_box(next.aux_p, observation);
    for (int c = 0; c < 3; ++c) {
        const auto& i_c = observation.channel(c);
        const auto& l_c = next.latent.channel(c);
        const auto& y_c = next.aux_p.channel(c);
        auto& p_c = next.corruption.channel(c);
        const double inv = 1.0 / (1.0 + st.mu_p);
        for (size_t i = 0; i < i_c.size(); ++i) {
            double v = inv * (i_c.at(i) - l_c.at(i) + st.mu_p * y_c.at(i));
            // Normalization: keep the split consistent, P <= I - L.
            v = std::min(v, i_c.at(i) - l_c.at(i) < 0.0 ? 0.0 : i_c.at(i) - l_c.at(i));
            p_c.at(i) = std::clamp(v, 0.0, i_c.at(i));
        }
    }

    next.mu_l = st.eta * st.mu_l;
    next.mu_p = st.eta * st.mu_p;
    next.iteration = st.iteration + 1;
    return next;
}

namespace {

double rms_diff(const ImageRGB& a, const ImageRGB& b) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < a.pixel_count(); ++i) {
            const double d = a.channel(c).at(i) - b.channel(c).at(i);
            acc += d * d;
        }
    return std::sqrt(acc / (3.0 * a.pixel_count()));
}

// Least-squares slope of y against iteration index.
double fitted_slope(const std::vector<double>& y, size_t begin) {
    const size_t n = y.size() - begin;
    if (n < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t k = 0; k < n; ++k) {
        const double x = static_cast<double>(k);
        sx += x;
        sy += y[begin + k];
        sxx += x * x;
        sxy += x * y[begin + k];
    }
    const double denom = n * sxx - sx * sx;
    return denom == 0.0 ? 0.0 : (n * sxy - sx * sy) / denom;
}

}  // namespace

SeparationResult run_separation(const ImageRGB& observation, const PriorOperator& op_l,
                                const PriorOperator& op_p, const SeparationOptions& opts) {
    if (opts.max_iter < 1) throw std::invalid_argument("run_separation: max_iter must be >= 1");
    SeparationState st = SeparationState::init(observation, opts.mu_l, opts.mu_p, opts.eta);

    ConvergenceReport report;
    std::vector<double> certificate_l, certificate_p;
    double mu_l_k = opts.mu_l, mu_p_k = opts.mu_p;

    for (int k = 0; k < opts.max_iter; ++k) {
        const SeparationState next = hq_step(observation, st, op_l, op_p);
        const double dl = rms_diff(next.latent, st.latent);
        const double dp = rms_diff(next.corruption, st.corruption);
        const double dyl = rms_diff(next.aux_l, st.aux_l);
        const double dyp = rms_diff(next.aux_p, st.aux_p);
        report.diff_l.push_back(dl);
        report.diff_p.push_back(dp);
        report.diff_yl.push_back(dyl);
        report.diff_yp.push_back(dyp);
        certificate_l.push_back(std::max(dl, dyl) * mu_l_k);
        certificate_p.push_back(std::max(dp, dyp) * mu_p_k);
        mu_l_k *= opts.eta;
        mu_p_k *= opts.eta;
        st = next;

        if (std::max({dl, dp, dyl, dyp}) < opts.tolerance) {
            report.cauchy_pass = true;
            break;
        }
    }
    report.iterations = st.iteration;

    // Certificate: the scaled differences must be bounded, i.e. show no
    // growth trend across the trailing window.
    for (double v : certificate_l) report.certificate_bound = std::max(report.certificate_bound, v);
    for (double v : certificate_p) report.certificate_bound = std::max(report.certificate_bound, v);
    const size_t window = 100;
    const size_t begin_l = certificate_l.size() > window ? certificate_l.size() - window : 0;
    const double slope_l = fitted_slope(certificate_l, begin_l);
    const double slope_p = fitted_slope(certificate_p, begin_l);
    const double scale = std::max(1e-12, report.certificate_bound);
    report.certificate_pass =
        slope_l <= 1e-3 * scale && slope_p <= 1e-3 * scale && report.cauchy_pass;

    // Geometric decay rate of the dominant difference sequence.
    std::vector<double> log_max;
    for (size_t k = 0; k < report.diff_l.size(); ++k) {
        const double m = std::max({report.diff_l[k], report.diff_p[k], report.diff_yl[k],
                                   report.diff_yp[k]});
        if (m > 0) log_max.push_back(std::log(m));
    }
    report.decay_rate = log_max.size() >= 2 ? std::exp(fitted_slope(log_max, 0)) : 0.0;

    SeparationResult result;
    result.latent = st.latent;
    result.corruption = st.corruption;
    result.report = std::move(report);
    return result;
}

}  // namespace hazeprop

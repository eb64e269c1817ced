#pragma once

#include <stdexcept>
#include <vector>

#include "hazeprop/field.hpp"

namespace hazeprop {

/// Piecewise-linear pointwise nonlinearity with an odd number of control
/// points on a uniform grid over [-1, 1]. Outside the grid the terminal
/// segments extend linearly, so the negative antiderivative stays piecewise
/// quadratic and globally defined.
class PiecewiseActivation {
public:
    PiecewiseActivation() = default;

    explicit PiecewiseActivation(std::vector<double> values) : q_(std::move(values)) {
        if (q_.size() < 3 || q_.size() % 2 == 0)
            throw std::invalid_argument("PiecewiseActivation: need an odd count >= 3");
        rebuild_integral_table();
    }

    static double node_position(int i, int count) {
        return -1.0 + 2.0 * i / (count - 1);
    }

    /// Unified influence function 2z/(1+z^2) sampled at the node grid.
    static PiecewiseActivation influence_init(int count);

    /// phi(z) = z on the grid (and beyond, since terminal slopes are 1).
    static PiecewiseActivation identity_init(int count);

    static PiecewiseActivation zero_init(int count);

    int count() const { return static_cast<int>(q_.size()); }
    const std::vector<double>& values() const { return q_; }

    /// Replace the control values (the learnable degrees of freedom).
    void set_values(std::vector<double> values) {
        if (values.size() != q_.size())
            throw std::invalid_argument("PiecewiseActivation: value count changed");
        q_ = std::move(values);
        rebuild_integral_table();
    }

    double eval(double z) const {
        const auto [s, w] = locate(z);
        return (1.0 - w) * q_[s] + w * q_[s + 1];
    }

    /// Segment slope; the derivative away from the nodes.
    double slope(double z) const {
        const auto [s, w] = locate(z);
        (void)w;
        return (q_[s + 1] - q_[s]) * inv_step_;
    }

    /// rho(z) = -integral_0^z phi, the negative antiderivative with rho(0)=0.
    /// Piecewise quadratic, exact per segment.
    double antiderivative(double z) const {
        const auto [s, w] = locate(z);
        const double dz = z - position(s);
        const double m = (q_[s + 1] - q_[s]) * inv_step_;
        return -(integral_at_node_[s] + q_[s] * dz + 0.5 * m * dz * dz);
    }

    /// Hat weights of eval(z) with respect to the two bracketing control
    /// values: d phi / d q_s = 1-w, d phi / d q_{s+1} = w. Extrapolation makes
    /// w leave [0,1] at the ends.
    struct NodeWeights {
        int left;
        double w_left;
        double w_right;
    };
    NodeWeights value_weights(double z) const {
        const auto [s, w] = locate(z);
        return {s, 1.0 - w, w};
    }

    double position(int i) const { return node_position(i, count()); }

private:
    // Segment index clamped to [0, M-2] plus the local coordinate; w < 0 or
    // w > 1 encodes linear extrapolation through the terminal segments.
    std::pair<int, double> locate(double z) const {
        const int last = count() - 2;
        int s = static_cast<int>((z + 1.0) * 0.5 * (count() - 1));
        s = s < 0 ? 0 : (s > last ? last : s);
        return {s, (z - position(s)) * inv_step_};
    }

    void rebuild_integral_table() {
        const int m = count();
        inv_step_ = (m - 1) / 2.0;
        const double step = 2.0 / (m - 1);
        // integral_at_node_[s] = integral_0^{p_s} phi; built from the center
        // node (p = 0) outward so rho(0) = 0 exactly.
        integral_at_node_.assign(m, 0.0);
        const int mid = (m - 1) / 2;
        for (int s = mid; s + 1 < m; ++s)
            integral_at_node_[s + 1] =
                integral_at_node_[s] + 0.5 * (q_[s] + q_[s + 1]) * step;
        for (int s = mid; s > 0; --s)
            integral_at_node_[s - 1] =
                integral_at_node_[s] - 0.5 * (q_[s - 1] + q_[s]) * step;
    }

    std::vector<double> q_;
    std::vector<double> integral_at_node_;
    double inv_step_ = 0.0;
};

inline PiecewiseActivation PiecewiseActivation::influence_init(int count) {
    std::vector<double> q(count);
    for (int i = 0; i < count; ++i) {
        const double p = node_position(i, count);
        q[i] = 2.0 * p / (1.0 + p * p);
    }
    return PiecewiseActivation(std::move(q));
}

inline PiecewiseActivation PiecewiseActivation::identity_init(int count) {
    std::vector<double> q(count);
    for (int i = 0; i < count; ++i) q[i] = node_position(i, count);
    return PiecewiseActivation(std::move(q));
}

inline PiecewiseActivation PiecewiseActivation::zero_init(int count) {
    return PiecewiseActivation(std::vector<double>(count, 0.0));
}

}  // namespace hazeprop

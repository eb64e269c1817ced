#include <doctest.h>

#include <cmath>

#include "hazeprop/conv.hpp"
#include "hazeprop/network.hpp"
#include "hazeprop/rng.hpp"
#include "hazeprop/synth.hpp"

using namespace hazeprop;

namespace {

ScalarField random_field(int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    ScalarField f(h, w);
    for (size_t i = 0; i < f.size(); ++i) f.at(i) = rng.uniform(lo, hi);
    return f;
}

StageParams random_stage(int n, int k, int m, uint64_t seed) {
    StageParams s = default_stage(n, k, m);
    Rng rng(seed);
    for (auto& f : s.filters)
        for (double& c : f.coeffs) c += rng.uniform(-0.3, 0.3);
    for (auto& a : s.activations) {
        std::vector<double> q = a.values();
        for (double& v : q) v += rng.uniform(-0.2, 0.2);
        a.set_values(std::move(q));
    }
    s.lambda_p = rng.uniform(-0.5, 0.5);
    return s;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("zero filters give a zero data submodule") {
    const StageParams s = zero_stage(3, 2, 9);
    const ScalarField out = data_submodule(random_field(10, 10, 1), s);
    CHECK(out.min_value() == 0.0);
    CHECK(out.max_value() == 0.0);
}

TEST_CASE("single-atom pipeline equals the explicit two-step convolution") {
    const DCTBasis basis = shared_dct_basis(3);
    StageParams s = zero_stage(3, 1, 31);
    s.filters[0].coeffs[4] = 1.0;  // one atom as the realized kernel
    s.activations[0] = PiecewiseActivation::identity_init(31);

    const ScalarField t = random_field(12, 12, 2, -0.4, 0.4);
    const Kernel2D d = basis.atoms[4];
    const ScalarField expected = conv2d_same(conv2d_same(t, rot180(d)), d);
    CHECK(max_abs_diff(data_submodule(t, s), expected) < 1e-12);
}

TEST_CASE("full filter bank matches a per-filter pipeline sum") {
    const StageParams s = random_stage(5, 24, 31, 3);
    const ScalarField t = random_field(16, 16, 4);

    ScalarField expected(16, 16, 0.0);
    for (int k = 0; k < s.filter_count(); ++k) {
        const Kernel2D w_hat = realize_filter(s.filters[k], 5);
        ScalarField u = conv2d_same(t, rot180(w_hat));
        for (size_t i = 0; i < u.size(); ++i) u.at(i) = s.activations[k].eval(u.at(i));
        const ScalarField piece = conv2d_same(u, w_hat);
        for (size_t i = 0; i < expected.size(); ++i) expected.at(i) += piece.at(i);
    }
    CHECK(max_abs_diff(data_submodule(t, s), expected) < 1e-10);
}

TEST_CASE("stage_forward") {
    const ScalarField t = random_field(10, 10, 5);
    const ScalarField prior_map = random_field(10, 10, 6);

    SUBCASE("identity stage") {
        const StageParams s = zero_stage(3, 2, 9);
        CHECK(max_abs_diff(stage_forward(t, prior_map, s, SignConvention::unrolled_eq11), t) ==
              0.0);
    }
    SUBCASE("prior-only stage adds the weighted prior") {
        StageParams s = zero_stage(3, 2, 9);
        s.lambda_p = 1.0;
        const ScalarField out = stage_forward(t, prior_map, s, SignConvention::unrolled_eq11);
        CHECK(max_abs_diff(out, t + prior_map) == 0.0);
        const ScalarField out2 = stage_forward(t, prior_map, s, SignConvention::paper_eq2);
        CHECK(max_abs_diff(out2, t - prior_map) == 0.0);
    }
    SUBCASE("compositional oracle") {
        const StageParams s = random_stage(3, 4, 15, 7);
        const ScalarField d = data_submodule(t, s);
        const ScalarField out = stage_forward(t, prior_map, s, SignConvention::unrolled_eq11);
        for (size_t i = 0; i < t.size(); ++i)
            CHECK(out.at(i) ==
                  doctest::Approx(t.at(i) - d.at(i) + s.lambda_p * prior_map.at(i))
                      .epsilon(1e-14));
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(stage_forward(t, random_field(9, 10, 8), zero_stage(3, 2, 9),
                                      SignConvention::unrolled_eq11),
                        std::invalid_argument);
    }
}

TEST_CASE("network_forward with zero parameters degenerates to the prior") {
    const ImageRGB img = procedural_scene(32, 32, 9);
    const NetworkParams params = zero_network(3, 3, 2, 9);
    const PriorParams prior;
    const ForwardResult res = network_forward(img, params, prior, 0.01);

    ScalarField expected =
        prior_transmission(img, estimate_airlight(img, prior.window), prior);
    CHECK(max_abs_diff(res.trace.back(), expected) == 0.0);
    expected.clamp(0.01, 1.0);
    CHECK(max_abs_diff(res.t_final, expected) == 0.0);
    CHECK(res.trace.size() == 4);
}

TEST_CASE("default-shape forward pass stays inside the clamp range") {
    const ImageRGB img = procedural_scene(180, 180, 10);
    const NetworkParams params = default_network(5, 5, 24, 31);
    const ForwardResult res = network_forward(img, params, PriorParams{}, 0.01);
    CHECK(res.trace.size() == 6);
    CHECK(res.t_final.min_value() >= 0.01);
    CHECK(res.t_final.max_value() <= 1.0);
    CHECK(res.t_final.all_finite());
}

TEST_CASE("data submodule is translation equivariant on the interior") {
    const int n = 3, margin = 2 * (n - 1);
    const StageParams s = random_stage(n, 3, 15, 11);
    const ScalarField t = random_field(20, 20, 12);

    ScalarField shifted(20, 20, 0.0);
    for (int i = 1; i < 20; ++i)
        for (int j = 1; j < 20; ++j) shifted(i, j) = t(i - 1, j - 1);

    const ScalarField d = data_submodule(t, s);
    const ScalarField d_shift = data_submodule(shifted, s);
    for (int i = margin + 1; i < 20 - margin; ++i)
        for (int j = margin + 1; j < 20 - margin; ++j)
            CHECK(std::abs(d_shift(i, j) - d(i - 1, j - 1)) < 1e-10);
}

TEST_CASE("energy of zero activations is zero") {
    StageParams s = zero_stage(5, 3, 9);
    for (auto& f : s.filters) f.coeffs[0] = 1.0;  // nonzero filters, zero phi
    CHECK(energy_eval(random_field(12, 12, 13), s) == 0.0);
}

TEST_CASE("linear activation energy is the closed-form quadratic") {
    StageParams s = zero_stage(5, 1, 31);
    s.filters[0].coeffs[7] = 1.0;
    s.activations[0] = PiecewiseActivation::identity_init(31);
    const ScalarField t = random_field(14, 14, 14, -0.5, 0.5);

    const Kernel2D w_check = rot180(realize_filter(s.filters[0], 5));
    const ScalarField u = conv2d_same(t, w_check);
    double expected = 0.0;
    for (size_t i = 0; i < u.size(); ++i) expected -= 0.5 * u.at(i) * u.at(i);
    CHECK(energy_eval(t, s) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("energy is deterministic and finite") {
    const StageParams s = random_stage(3, 4, 15, 15);
    const ScalarField t = random_field(10, 10, 16);
    const double e1 = energy_eval(t, s), e2 = energy_eval(t, s);
    CHECK(e1 == e2);
    CHECK(std::isfinite(e1));
}

TEST_CASE("untied stages reject the energy audit") {
    StageParams s = random_stage(3, 2, 9, 17);
    s.tied_rotation = false;
    CHECK_THROWS_AS(energy_eval(random_field(8, 8, 18), s), std::invalid_argument);
}

TEST_CASE("Gibbs form: energy equals the negative log unnormalized density") {
    const StageParams s = random_stage(3, 3, 15, 19);
    const ScalarField t = random_field(10, 10, 20);
    // log prod_k exp(-rho_k) = sum_k -rho_k; the energy must be its negation.
    double log_density = 0.0;
    for (int k = 0; k < s.filter_count(); ++k) {
        const Kernel2D w_check = rot180(realize_filter(s.filters[k], s.kernel_size));
        const ScalarField u = conv2d_same(t, w_check);
        for (size_t i = 0; i < u.size(); ++i)
            log_density += -s.activations[k].antiderivative(u.at(i));
    }
    CHECK(energy_eval(t, s) == -log_density);
}

TEST_CASE("data submodule is the negative energy gradient (linear case)") {
    StageParams s = zero_stage(3, 2, 31);
    s.filters[0].coeffs[1] = 0.8;
    s.filters[1].coeffs[5] = -0.6;
    s.activations[0] = PiecewiseActivation::identity_init(31);
    s.activations[1] = PiecewiseActivation::identity_init(31);
    const ScalarField t = random_field(16, 16, 21, -0.4, 0.4);
    const EnergyAuditReport rep = energy_grad_check(t, s, 100, 22);
    CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("zero stage passes the gradient audit with both sides zero") {
    const StageParams s = zero_stage(3, 2, 9);
    const EnergyAuditReport rep = energy_grad_check(random_field(12, 12, 23), s, 50, 24);
    CHECK(rep.max_abs_error < 1e-12);
}

TEST_CASE("influence-function stages pass the finite-difference audit") {
    const StageParams s = random_stage(5, 4, 31, 25);
    const ScalarField t = random_field(20, 20, 26, -0.8, 0.8);
    const EnergyAuditReport rep = energy_grad_check(t, s, 100, 27);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("parameter shape validation") {
    NetworkParams p = default_network(2, 3, 2, 9);
    p.stages[1].kernel_size = 5;
    p.stages[1] = default_stage(5, 2, 9);
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

}  // TEST_SUITE

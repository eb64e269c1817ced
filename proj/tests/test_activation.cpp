#include <doctest.h>

#include <cmath>

#include "hazeprop/activation.hpp"
#include "hazeprop/rng.hpp"

using namespace hazeprop;

TEST_SUITE("activation") {

TEST_CASE("influence initialization hits 1 at z=1") {
    const PiecewiseActivation phi = PiecewiseActivation::influence_init(31);
    CHECK(phi.eval(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(phi.eval(-1.0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(phi.eval(0.0) == 0.0);
}

TEST_CASE("evaluation interpolates the control points") {
    Rng rng(3);
    std::vector<double> q(31);
    for (double& v : q) v = rng.uniform(-2.0, 2.0);
    const PiecewiseActivation phi(q);
    for (int i = 0; i < phi.count(); ++i)
        CHECK(phi.eval(phi.position(i)) == doctest::Approx(q[i]).epsilon(1e-14));
    for (int i = 0; i + 1 < phi.count(); ++i) {
        const double mid = 0.5 * (phi.position(i) + phi.position(i + 1));
        CHECK(phi.eval(mid) == doctest::Approx(0.5 * (q[i] + q[i + 1])).epsilon(1e-13));
    }
}

TEST_CASE("linear extrapolation uses the terminal segment slopes") {
    const PiecewiseActivation phi = PiecewiseActivation::identity_init(15);
    CHECK(phi.eval(2.5) == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(phi.eval(-3.0) == doctest::Approx(-3.0).epsilon(1e-14));
}

TEST_CASE("antiderivative of the zero activation is zero") {
    const PiecewiseActivation phi = PiecewiseActivation::zero_init(9);
    for (double z : {-2.0, -0.3, 0.0, 0.7, 1.9}) CHECK(phi.antiderivative(z) == 0.0);
}

TEST_CASE("antiderivative of the identity is -z^2/2") {
    const PiecewiseActivation phi = PiecewiseActivation::identity_init(31);
    for (double z : {-1.0, -0.5, -0.1, 0.0, 0.25, 0.6, 1.0})
        CHECK(phi.antiderivative(z) == doctest::Approx(-0.5 * z * z).epsilon(1e-14));
    CHECK(phi.antiderivative(0.0) == 0.0);
}

TEST_CASE("finite differences of rho recover -phi") {
    Rng rng(11);
    std::vector<double> q(21);
    for (double& v : q) v = rng.uniform(-1.0, 1.0);
    const PiecewiseActivation phi(q);
    const double h = 1e-6;
    for (int trial = 0; trial < 200; ++trial) {
        const double z = rng.uniform(-1.5, 1.5);
        const double fd = (phi.antiderivative(z + h) - phi.antiderivative(z - h)) / (2.0 * h);
        CHECK(fd == doctest::Approx(-phi.eval(z)).epsilon(1e-6));
    }
}

TEST_CASE("value weights are the interpolation hat functions") {
    Rng rng(13);
    std::vector<double> q(11);
    for (double& v : q) v = rng.uniform(-1.0, 1.0);
    const PiecewiseActivation phi(q);
    for (int trial = 0; trial < 50; ++trial) {
        const double z = rng.uniform(-1.4, 1.4);
        const auto nw = phi.value_weights(z);
        const double recon = nw.w_left * q[nw.left] + nw.w_right * q[nw.left + 1];
        CHECK(recon == doctest::Approx(phi.eval(z)).epsilon(1e-13));
        CHECK(nw.w_left + nw.w_right == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("even or tiny node counts are rejected") {
    CHECK_THROWS_AS(PiecewiseActivation(std::vector<double>(10, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(PiecewiseActivation(std::vector<double>(1, 0.0)), std::invalid_argument);
}

}  // TEST_SUITE

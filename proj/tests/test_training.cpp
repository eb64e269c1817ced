#include <doctest.h>

#include <cmath>

#include "hazeprop/network.hpp"
#include "hazeprop/rng.hpp"
#include "hazeprop/synth.hpp"
#include "hazeprop/training.hpp"

using namespace hazeprop;

namespace {

ScalarField random_field(int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    ScalarField f(h, w);
    for (size_t i = 0; i < f.size(); ++i) f.at(i) = rng.uniform(lo, hi);
    return f;
}

TrainingPair synthetic_pair(int size, uint64_t seed) {
    const ImageRGB scene = procedural_scene(size, size, seed);
    const ScalarField depth = procedural_depth(DepthKind::perlin, size, size, seed + 1);
    HazeRecipe r;
    r.a = 0.85;
    r.beta = 1.0;
    r.crop = size;
    r.seed = seed;
    const HazySample s = synth_hazy(scene, depth, r);
    return {s.observation, s.transmission};
}

NetworkParams perturbed_network(int stages, int kernel, int filters, int nodes,
                                uint64_t seed) {
    NetworkParams p = default_network(stages, kernel, filters, nodes);
    Rng rng(seed);
    for (auto& s : p.stages) {
        for (auto& f : s.filters)
            for (double& c : f.coeffs) c += rng.uniform(-0.2, 0.2);
        for (auto& a : s.activations) {
            std::vector<double> q = a.values();
            for (double& v : q) v += rng.uniform(-0.1, 0.1);
            a.set_values(std::move(q));
        }
        s.lambda_p += rng.uniform(-0.2, 0.2);
    }
    return p;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("loss basics") {
    const ScalarField a = random_field(6, 6, 1);
    CHECK(loss(a, a) == 0.0);

    ScalarField b = a;
    b(2, 3) += 1.0;
    CHECK(loss(b, a) == doctest::Approx(0.5).epsilon(1e-15));

    const ScalarField c = random_field(6, 6, 2);
    double expected = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.at(i) - c.at(i);
        expected += 0.5 * d * d;
    }
    CHECK(loss(a, c) == doctest::Approx(expected).epsilon(1e-15));

    CHECK_THROWS_AS(loss(a, random_field(5, 6, 3)), std::invalid_argument);
}

TEST_CASE("parameter count of the reference shape is 6605") {
    const NetworkParams p = default_network(5, 5, 24, 31);
    CHECK(p.parameter_count() == 6605);
    CHECK(pack_parameters(p).size() == 6605);
}

TEST_CASE("pack/unpack round trip") {
    const NetworkParams p = perturbed_network(2, 3, 2, 9, 4);
    const GradientVector x = pack_parameters(p);
    NetworkParams q = zero_network(2, 3, 2, 9);
    unpack_parameters(x, q);
    CHECK(pack_parameters(q) == x);
}

TEST_CASE("zero-parameter network: lambda gradient is the one-term chain") {
    const TrainingPair pair = synthetic_pair(16, 5);
    const int stages = 3;
    const NetworkParams params = zero_network(stages, 3, 2, 9);
    const PriorParams prior;

    const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
    const ScalarField prior_map = prior_transmission(pair.observation, a, prior);

    const BackpropResult res = backprop(pair, params, prior);
    const double expected = dot(prior_map - pair.target, prior_map);  // t0 == prior_map

    const size_t per_stage = params.parameter_count() / stages;
    for (int l = 0; l < stages; ++l) {
        const double got = res.grad[(l + 1) * per_stage - 1];
        CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("skip path: with D == 0 every stage sees the final residual") {
    const TrainingPair pair = synthetic_pair(16, 6);
    NetworkParams params = zero_network(3, 3, 2, 9);
    for (auto& s : params.stages) s.lambda_p = 0.3;
    const PriorParams prior;

    const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
    const ScalarField prior_map = prior_transmission(pair.observation, a, prior);
    const auto trace = network_forward_field(prior_map, prior_map, params);
    const double expected = dot(trace.back() - pair.target, prior_map);

    const BackpropResult res = backprop(pair, params, prior);
    const size_t per_stage = params.parameter_count() / 3;
    for (int l = 0; l < 3; ++l)
        CHECK(res.grad[(l + 1) * per_stage - 1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences everywhere") {
    const TrainingPair pair = synthetic_pair(16, 7);
    const NetworkParams params = perturbed_network(2, 3, 2, 31, 8);
    const PriorParams prior;

    const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
    const ScalarField prior_map = prior_transmission(pair.observation, a, prior);

    const BackpropResult res =
        backprop_from_maps(prior_map, prior_map, pair.target, params);

    GradientVector x = pack_parameters(params);
    NetworkParams probe = params;
    auto eval = [&](const GradientVector& v) {
        unpack_parameters(v, probe);
        return loss(network_forward_field(prior_map, prior_map, probe).back(), pair.target);
    };

    const double h = 1e-5;
    double max_rel = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = eval(x);
        x[i] = saved - h;
        const double fm = eval(x);
        x[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double rel =
            std::abs(fd - res.grad[i]) / std::max(std::abs(res.grad[i]), 1e-6);
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("untied stages also pass the finite-difference check") {
    const TrainingPair pair = synthetic_pair(16, 9);
    NetworkParams params = perturbed_network(2, 3, 2, 15, 10);
    for (auto& s : params.stages) s.tied_rotation = false;
    const PriorParams prior;

    const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
    const ScalarField prior_map = prior_transmission(pair.observation, a, prior);
    const BackpropResult res =
        backprop_from_maps(prior_map, prior_map, pair.target, params);

    GradientVector x = pack_parameters(params);
    NetworkParams probe = params;
    for (auto& s : probe.stages) s.tied_rotation = false;
    auto eval = [&](const GradientVector& v) {
        unpack_parameters(v, probe);
        return loss(network_forward_field(prior_map, prior_map, probe).back(), pair.target);
    };

    Rng rng(11);
    const double h = 1e-5;
    for (int trial = 0; trial < 40; ++trial) {
        const size_t i = rng.next_below(x.size());
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = eval(x);
        x[i] = saved - h;
        const double fm = eval(x);
        x[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::abs(fd - res.grad[i]) / std::max(std::abs(res.grad[i]), 1e-6) < 1e-4);
    }
}

TEST_CASE("lbfgs returns immediately at a stationary point") {
    // f(x) = |x - 1|^2 evaluated exactly at its optimum.
    FitReport report;
    const GradientVector best = lbfgs_minimize(
        [](const GradientVector& x, GradientVector& g) {
            double f = 0.0;
            g.assign(x.size(), 0.0);
            for (size_t i = 0; i < x.size(); ++i) {
                const double d = x[i] - 1.0;
                f += d * d;
                g[i] = 2.0 * d;
            }
            return f;
        },
        GradientVector(4, 1.0), LbfgsOptions{}, report);
    CHECK(report.iterations == 0);
    CHECK(report.converged);
    CHECK(best == GradientVector(4, 1.0));
}

TEST_CASE("fitting lambda on a D==0 network reaches the closed-form optimum") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 4; ++i) pairs.push_back(synthetic_pair(16, 20 + i));

    NetworkParams init = zero_network(1, 3, 2, 9);
    const PriorParams prior;

    // Closed form: min_lambda 1/2 sum ||t0 + lambda*P - t*||^2 with t0 = P.
    double num = 0.0, den = 0.0;
    for (const auto& pair : pairs) {
        const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
        const ScalarField p = prior_transmission(pair.observation, a, prior);
        num += dot(pair.target - p, p);
        den += dot(p, p);
    }
    const double lambda_star = num / den;

    LbfgsOptions opts;
    opts.max_iterations = 100;
    opts.gradient_tolerance = 1e-12;
    opts.threads = 1;
    const auto [fitted, report] = lbfgs_fit(pairs, init, prior, opts);
    CHECK(fitted.stages[0].lambda_p == doctest::Approx(lambda_star).epsilon(1e-8));
}

TEST_CASE("desk-scale fit halves the loss and the trajectory never increases") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back(synthetic_pair(24, 40 + i));

    const NetworkParams init = default_network(2, 3, 2, 15);
    LbfgsOptions opts;
    opts.max_iterations = 80;
    const auto [fitted, report] = lbfgs_fit(pairs, init, PriorParams{}, opts);

    REQUIRE(report.loss_trajectory.size() >= 2);
    CHECK(report.loss_trajectory.back() < 0.5 * report.loss_trajectory.front());
    for (size_t i = 1; i < report.loss_trajectory.size(); ++i)
        CHECK(report.loss_trajectory[i] <= report.loss_trajectory[i - 1]);
}

TEST_CASE("fits are deterministic") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 3; ++i) pairs.push_back(synthetic_pair(16, 60 + i));
    const NetworkParams init = default_network(1, 3, 2, 9);
    LbfgsOptions opts;
    opts.max_iterations = 25;

    const auto [m1, r1] = lbfgs_fit(pairs, init, PriorParams{}, opts);
    const auto [m2, r2] = lbfgs_fit(pairs, init, PriorParams{}, opts);
    CHECK(pack_parameters(m1) == pack_parameters(m2));
    CHECK(r1.loss_trajectory == r2.loss_trajectory);
    CHECK(r1.iterations == r2.iterations);
    CHECK(r1.terminal_gradient_norm == r2.terminal_gradient_norm);
}

TEST_CASE("single-stage greedy and joint schedules coincide") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 3; ++i) pairs.push_back(synthetic_pair(16, 70 + i));
    TrainShape shape;
    shape.stage_count = 1;
    shape.kernel_size = 3;
    shape.filter_count = 2;
    shape.control_points = 9;
    LbfgsOptions opts;
    opts.max_iterations = 20;

    const TrainResult greedy = train_schedule(pairs, shape, TrainMode::greedy, PriorParams{}, opts);
    const TrainResult joint = train_schedule(pairs, shape, TrainMode::joint, PriorParams{}, opts);
    CHECK(pack_parameters(greedy.params) == pack_parameters(joint.params));
}

TEST_CASE("joint refinement never loses to the greedy pass it starts from") {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 4; ++i) pairs.push_back(synthetic_pair(16, 80 + i));
    TrainShape shape;
    shape.stage_count = 2;
    shape.kernel_size = 3;
    shape.filter_count = 2;
    shape.control_points = 9;
    LbfgsOptions opts;
    opts.max_iterations = 30;

    const TrainResult greedy =
        train_schedule(pairs, shape, TrainMode::greedy, PriorParams{}, opts);
    const TrainResult refined =
        train_schedule(pairs, shape, TrainMode::greedy_then_joint, PriorParams{}, opts);

    const double greedy_loss = greedy.reports.back().loss_trajectory.back();
    const double refined_loss = refined.reports.back().loss_trajectory.back();
    CHECK(refined_loss <= greedy_loss + 1e-12);
}

}  // TEST_SUITE

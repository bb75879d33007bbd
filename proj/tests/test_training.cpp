#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <utility>

#include "sspod/training.hpp"

using Catch::Approx;
using namespace sspod;

namespace {

// Deterministic evaluator that counts how often each integer is requested.
struct CountingEvaluator {
    explicit CountingEvaluator(std::function<double(double)> fn_) : f(std::move(fn_)) {}

    std::function<double(double)> f;
    std::map<double, int> calls;
    std::uint64_t seed = 5;
    std::size_t samples = 1000;

    ObjectiveEvaluator fn() {
        return [this](double beta) {
            ++calls[beta];
            return ObjectiveEstimate{f(beta), 0.0, samples, seed};
        };
    }
};

DistanceObservables obs_of(const Vector& reference, const Vector& truth) { return {reference, truth, Vector()}; }

}  // namespace

TEST_CASE("observed_distance: zero, Pythagoras, weights") {
    const Vector ref = (Vector(2) << 1.0, 1.0).finished();
    CHECK(observed_distance(ref, obs_of(ref, ref)) == 0.0);
    const Vector u = (Vector(2) << 4.0, 5.0).finished();
    CHECK(observed_distance(u, obs_of(ref, ref)) == Approx(5.0).epsilon(1e-15));

    DistanceObservables w{ref, ref, (Vector(2) << 4.0, 1.0).finished()};
    CHECK(observed_distance(u, w) == Approx(std::sqrt(4.0 * 9.0 + 16.0)));
    CHECK_THROWS_AS(observed_distance(Vector::Zero(3), w), DimensionError);

    DistanceObservables bad{ref, ref, (Vector(2) << 1.0, 0.0).finished()};
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("trapezoid weights: exact on linear integrands, convergent on quadratics") {
    Vector grid(7);
    grid << 0.0, 0.05, 0.2, 0.21, 0.5, 0.8, 1.0;
    const Vector w = trapezoid_weights(grid);
    CHECK(w.sum() == Approx(1.0).epsilon(1e-15));
    const DistanceObservables obs{Vector::Zero(7), Vector::Zero(7), w};

    // squared difference 3t + 1 is linear, so the rule integrates it exactly: 5/2
    Vector diff(7);
    for (Index i = 0; i < 7; ++i) diff(i) = std::sqrt(3.0 * grid(i) + 1.0);
    CHECK(std::pow(observed_distance(diff, obs), 2) == Approx(2.5).epsilon(1e-12));

    // (2t + 1)^2 on a fine uniform grid approaches 13/3
    auto g = [](double t) { return 2.0 * t + 1.0; };
    const Vector fine = Vector::LinSpaced(20001, 0.0, 1.0);
    Vector fd(fine.size());
    for (Index i = 0; i < fine.size(); ++i) fd(i) = g(fine(i));
    const DistanceObservables fo{Vector::Zero(fine.size()), Vector::Zero(fine.size()), trapezoid_weights(fine)};
    CHECK(std::pow(observed_distance(fd, fo), 2) == Approx(13.0 / 3.0).epsilon(1e-8));

    CHECK_THROWS_AS(trapezoid_weights(Vector::Zero(1)), DimensionError);
    CHECK_THROWS_AS(trapezoid_weights((Vector(3) << 0.0, 0.5, 0.5).finished()), ParameterError);
}

TEST_CASE("estimate_objective: degenerate expectations") {
    const Vector ref = Vector::Zero(3);
    const Vector truth = (Vector(3) << 1.0, 2.0, 2.0).finished();
    const Vector p = (Vector(3) << 0.0, 0.0, 1.0).finished();
    const std::vector<DistanceObservables> obs{obs_of(ref, truth)};
    auto fixed = [&](double, const RandomStream&) { return std::vector<Vector>{p}; };
    const ObjectiveEstimate e = estimate_objective(3.0, fixed, obs, 10, 1);
    CHECK(e.value == Approx((1.0 - 3.0) * (1.0 - 3.0)));
    CHECK(e.std_error == 0.0);
    CHECK(e.samples == 10);

    const std::vector<DistanceObservables> same{obs_of(ref, ref)};
    auto at_ref = [&](double, const RandomStream&) { return std::vector<Vector>{ref}; };
    CHECK(estimate_objective(3.0, at_ref, same, 10, 1).value == 0.0);

    CHECK_THROWS_AS(estimate_objective(3.0, fixed, obs, 1, 1), ParameterError);
    CHECK_THROWS_AS(estimate_objective(3.0, fixed, {}, 10, 1), ParameterError);
}

TEST_CASE("estimate_objective: averages over observation sets and replays") {
    const std::vector<DistanceObservables> obs{obs_of(Vector::Zero(1), Vector::Constant(1, 1.0)),
                                               obs_of(Vector::Zero(1), Vector::Constant(1, 3.0))};
    auto predict = [](double beta, const RandomStream& s) {
        StreamEngine e(s);
        return std::vector<Vector>{Vector::Constant(1, e.normal() / beta), Vector::Constant(1, 2.0)};
    };
    const ObjectiveEstimate a = estimate_objective(2.0, predict, obs, 1000, 11, 1);
    const ObjectiveEstimate b = estimate_objective(2.0, predict, obs, 1000, 11, 3);
    CHECK(a.value == b.value);
    CHECK(a.value >= 0.0);

    const ObjectiveEstimate c = estimate_objective(2.0, predict, obs, 1000, 12, 1);
    CHECK(std::abs(a.value - c.value) <= 5.0 * std::hypot(a.std_error, c.std_error));
    CHECK(a.value != c.value);
}

TEST_CASE("ObjectiveCache and interpolated objective") {
    CountingEvaluator ev{[](double b) { return b == 3.0 ? 10.0 : (b == 4.0 ? 6.0 : 0.0); }};
    ObjectiveCache cache;
    CHECK(interpolated_objective(3.5, cache, ev.fn()) == Approx(8.0));
    CHECK(cache.evaluations() == 2);
    const std::size_t hits = cache.hits();
    CHECK(interpolated_objective(3.0, cache, ev.fn()) == 10.0);
    CHECK(cache.evaluations() == 2);
    CHECK(cache.hits() == hits + 1);
    CHECK(ev.calls[3.0] == 1);
    CHECK(ev.calls[4.0] == 1);

    CountingEvaluator mono{[](double b) { return 100.0 / b; }};
    ObjectiveCache mc;
    for (double b = 2.0; b < 9.0; b += 0.125) {
        const double v = interpolated_objective(b, mc, mono.fn());
        const double lo = std::min(100.0 / std::floor(b), 100.0 / std::ceil(b));
        const double hi = std::max(100.0 / std::floor(b), 100.0 / std::ceil(b));
        CHECK(v >= lo);
        CHECK(v <= hi);
    }

    CountingEvaluator drift{[](double) { return 1.0; }};
    ObjectiveCache dc;
    dc.at(2, drift.fn());
    drift.seed = 6;
    CHECK_THROWS_AS(dc.at(3, drift.fn()), ParameterError);
}

TEST_CASE("brent_bounded: smooth minimum and boundary minima") {
    const BoundedMinimum q = brent_bounded([](double x) { return (x - 1.7) * (x - 1.7) + 2.0; }, -3.0, 5.0, 1e-10, 500);
    CHECK(q.converged);
    CHECK(q.x == Approx(1.7).margin(1e-7));
    CHECK(q.fx == Approx(2.0).margin(1e-12));

    const BoundedMinimum up = brent_bounded([](double x) { return x; }, 2.0, 9.0, 1e-6, 500);
    CHECK(up.x == Approx(2.0).margin(1e-5));
    const BoundedMinimum down = brent_bounded([](double x) { return -x; }, 2.0, 9.0, 1e-6, 500);
    CHECK(down.x == Approx(9.0).margin(1e-5));

    const BoundedMinimum capped = brent_bounded([](double x) { return std::cos(x); }, 0.0, 6.0, 1e-12, 3);
    CHECK_FALSE(capped.converged);
    CHECK(capped.evaluations == 3);
    CHECK_THROWS_AS(brent_bounded([](double x) { return x; }, 1.0, 0.0, 1e-3, 10), ParameterError);
}

TEST_CASE("optimize_beta: quadratic mock lands next to the analytic minimum") {
    CountingEvaluator ev{[](double b) { return (b - 7.3) * (b - 7.3); }};
    TrainingConfig cfg;
    cfg.beta_lower = 4.0;
    cfg.beta_upper = 20.0;
    const TrainingResult r = optimize_beta(cfg, ev.fn());
    CHECK(r.beta >= 7.0);
    CHECK(r.beta <= 8.0);
    CHECK(r.beta == 7.0);  // |7 - 7.3| < |8 - 7.3|
    CHECK(r.converged);
    for (const auto& [beta, n] : ev.calls) CHECK(n == 1);
    CHECK(r.objective_evaluations == ev.calls.size());
    CHECK(!r.trace.empty());
    for (const auto& t : r.trace) {
        CHECK(t.mc_samples == 1000);
        CHECK(t.seed == 5);
    }
}

TEST_CASE("optimize_beta: increasing objective returns the lower bound") {
    CountingEvaluator ev{[](double b) { return b * b; }};
    TrainingConfig cfg;
    cfg.beta_lower = 3.0;
    cfg.beta_upper = 30.0;
    CHECK(optimize_beta(cfg, ev.fn()).beta == 3.0);
}

TEST_CASE("optimize_beta: integer minimum found with each integer evaluated once") {
    CountingEvaluator ev{[](double b) { return std::abs(b - 12.0) + 0.01 * (b - 12.0) * (b - 12.0); }};
    TrainingConfig cfg;
    cfg.beta_lower = 4.0;
    cfg.beta_upper = 40.0;
    ObjectiveCache cache;
    const TrainingResult r = optimize_beta(cfg, ev.fn(), &cache);
    CHECK(r.beta == 12.0);

    // exhaustive integer scan oracle
    double best = 4.0;
    for (double b = 4.0; b <= 40.0; b += 1.0) {
        if (ev.f(b) < ev.f(best)) best = b;
    }
    CHECK(r.beta == best);
    for (const auto& [beta, n] : ev.calls) {
        CHECK(n == 1);
        CHECK(beta == std::floor(beta));
    }
    CHECK(ev.calls.size() <= 37);
    CHECK(cache.evaluations() == ev.calls.size());
    CHECK(r.objective_evaluations == ev.calls.size());

    // identical rerun reproduces result and trace
    CountingEvaluator again{ev.f};
    const TrainingResult r2 = optimize_beta(cfg, again.fn());
    CHECK(r2.beta == r.beta);
    REQUIRE(r2.trace.size() == r.trace.size());
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        CHECK(r2.trace[i].beta == r.trace[i].beta);
        CHECK(r2.trace[i].value == r.trace[i].value);
    }
}

TEST_CASE("optimize_beta: configuration errors") {
    CountingEvaluator ev{[](double b) { return b; }};
    TrainingConfig cfg;
    cfg.beta_lower = 5.0;
    cfg.beta_upper = 4.0;
    CHECK_THROWS_AS(optimize_beta(cfg, ev.fn()), ParameterError);
    cfg.beta_lower = 4.2;
    cfg.beta_upper = 4.8;
    CHECK_THROWS_AS(optimize_beta(cfg, ev.fn()), ParameterError);
    cfg.beta_upper = 9.0;
    cfg.mc_samples = 1;
    CHECK_THROWS_AS(optimize_beta(cfg, ev.fn()), ParameterError);
}

TEST_CASE("refine_beta_real: degenerate window and a smooth mock minimum") {
    CountingEvaluator ev{[](double b) { return (b - 4.32) * (b - 4.32) + 0.1; }};
    TrainingConfig cfg;
    cfg.beta_lower = 4.0;
    cfg.beta_upper = 40.0;
    cfg.refinement.enabled = true;
    cfg.refinement.half_width = 0.0;
    const TrainingResult degenerate = refine_beta_real(5.0, cfg, ev.fn());
    CHECK(degenerate.beta == 5.0);
    CHECK(ev.calls.empty());

    cfg.refinement.half_width = 1.0;
    // window [4, 6]; the lower end is clipped to the bound when beta_int = 4
    const TrainingResult r = refine_beta_real(5.0, cfg, ev.fn());
    // sqrt(eps) |x| dominates the configured 1e-10, giving ~1e-7 resolution
    CHECK(r.beta == Approx(4.32).margin(1e-6));
    CHECK(r.converged);
    CHECK(r.objective_evaluations == r.trace.size());
    for (const auto& t : r.trace) {
        CHECK(t.beta >= 4.0);
        CHECK(t.beta <= 6.0);
    }
    const TrainingResult clipped = refine_beta_real(4.0, cfg, ev.fn());
    CHECK(clipped.beta == Approx(4.32).margin(1e-6));
    for (const auto& t : clipped.trace) CHECK(t.beta >= 4.0);
}

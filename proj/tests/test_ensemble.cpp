#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sspod/ensemble.hpp"
#include "sspod/problems.hpp"
#include "sspod/sampler.hpp"

using Catch::Approx;
using namespace sspod;

namespace {

EnsemblePrediction from_rows(const Matrix& rows) {
    EnsemblePrediction e;
    e.samples = rows;
    for (Index i = 0; i < rows.rows(); ++i) e.stream_indices.push_back(static_cast<std::uint64_t>(i));
    return e;
}

struct StaticDesk {
    SpectralStiffness spectral;
    LinearStaticSystem system;
    PodDecomposition pod;
    Index m = 0;
};

// n = 40 linear static problem whose snapshots are responses to random modal loads.
StaticDesk static_desk() {
    StaticDesk d;
    const Index n = 40;
    d.spectral = build_spectral_stiffness(n);
    d.system.stiffness = d.spectral.dense();
    d.system.constraints = d.spectral.constraints();
    d.system.force = d.spectral.modes.col(0) + 0.3 * d.spectral.modes.col(2) + 0.1 * d.spectral.modes.col(5);
    std::mt19937_64 rng(40);
    d.m = 30;
    Matrix snaps(n, d.m);
    for (Index j = 0; j < d.m; ++j) {
        const Vector coeff = oracle::gaussian(rng, 8, 1);
        snaps.col(j) = d.spectral.solve(d.spectral.eigvals, d.spectral.modes.leftCols(8) * coeff);
    }
    d.pod = compact_svd(center(snaps).centered);
    return d;
}

}  // namespace

TEST_CASE("QoiExtractor: kinds, reduced extraction and validation") {
    const Vector x = Vector::LinSpaced(6, 0.0, 5.0);
    CHECK(QoiExtractor::full_state(6).extract(x) == x);
    const QoiExtractor s = QoiExtractor::sparse({1, 4});
    CHECK(s.extract(x) == (Vector(2) << 1.0, 4.0).finished());
    CHECK(s.grid == (Vector(2) << 1.0, 4.0).finished());

    std::mt19937_64 rng(1);
    const Matrix v = oracle::qr_basis(oracle::gaussian(rng, 6, 2));
    const Vector q = (Vector(2) << 0.5, -1.0).finished();
    CHECK((s.extract(v, q) - s.extract(Vector(v * q))).norm() <= 1e-15);

    Trajectory tr;
    tr.times = Vector::LinSpaced(3, 0.0, 0.2);
    tr.x = Matrix::Constant(2, 3, 1.0);
    tr.v = Matrix::Constant(2, 3, 2.0);
    tr.a = Matrix::Constant(2, 3, 3.0);
    CHECK(QoiExtractor::dof(1, 1, tr.times).extract(tr) == Vector::Constant(3, 2.0));
    CHECK(QoiExtractor::dof(0, 2, tr.times).extract(tr) == Vector::Constant(3, 3.0));
    CHECK(QoiExtractor::dof(0, 0, tr.times).extract(Matrix::Identity(2, 2), tr) == Vector::Constant(3, 1.0));

    CHECK_THROWS_AS(QoiExtractor::sparse({7}).validate(6), DimensionError);
    CHECK_THROWS_AS(QoiExtractor::sparse({3, 2}).validate(6), ParameterError);
    CHECK_THROWS_AS(QoiExtractor::dof(0, 3, tr.times).validate(2), ParameterError);
    CHECK_THROWS_AS(QoiExtractor::full_state(2).extract(tr), ParameterError);
}

TEST_CASE("run_srom: degenerate and full-basis samplers") {
    const StaticDesk d = static_desk();
    const Index k = 3;
    const Matrix vk = d.pod.modes.leftCols(k);
    const QoiExtractor qoi = QoiExtractor::full_state(40);
    const Vector rom = vk * solve_linear_static(galerkin_reduce(d.system, SubspaceBasis{vk}));

    auto solve = [&](const SubspaceBasis& w) {
        return qoi.extract(w.basis, solve_linear_static(galerkin_reduce(d.system, w)));
    };
    const EnsemblePrediction fixed = run_srom([&](const RandomStream&) { return SubspaceBasis{vk}; }, solve, 2, 1);
    REQUIRE(fixed.count() == 2);
    CHECK(fixed.samples.row(0) == fixed.samples.row(1));
    CHECK((fixed.samples.row(0).transpose() - rom).norm() == 0.0);

    const Vector hdm = solve_linear_static(d.system);
    const Matrix full = d.spectral.modes;
    const EnsemblePrediction exact = run_srom([&](const RandomStream&) { return SubspaceBasis{full}; }, solve, 3, 1);
    for (Index i = 0; i < 3; ++i) CHECK((exact.samples.row(i).transpose() - hdm).norm() <= 1e-10 * hdm.norm());

    CHECK_THROWS_AS(run_srom([&](const RandomStream&) { return SubspaceBasis{vk}; }, solve, 1, 1), ParameterError);
}

TEST_CASE("run_srom: staged and naive paths agree and replay across thread counts") {
    const StaticDesk d = static_desk();
    const Index r = d.pod.rank;
    REQUIRE(r == 8);  // responses to random loads on 8 modes
    const SsppcaModel model = SsppcaModel::from_pod(d.pod, d.m, 3, 6.0);
    const auto staged = two_stage_reduce(d.system, d.pod.modes);
    const QoiExtractor qoi = QoiExtractor::full_state(40);

    auto staged_row = [&](const SubspaceBasis& u) {
        const auto rom = inner_reduce(staged, u);
        return qoi.extract(rom.basis, solve_linear_static(rom));
    };
    auto naive_row = [&](const SubspaceBasis& w) {
        return qoi.extract(w.basis, solve_linear_static(galerkin_reduce(d.system, w)));
    };
    auto draw_u = [&](const RandomStream& s) { return sample_reduced_any(model, s); };
    auto draw_w = [&](const RandomStream& s) { return sample_ambient(model, d.pod.modes, s); };

    const EnsemblePrediction a = run_srom(draw_u, staged_row, 200, 17);
    const EnsemblePrediction b = run_srom(draw_w, naive_row, 200, 17);
    CHECK((a.samples - b.samples).norm() <= 1e-10 * b.samples.norm());

    const EnsemblePrediction c = run_srom(draw_u, staged_row, 200, 17, EnsembleOptions{4, FailurePolicy::Abort});
    CHECK(a.samples == c.samples);
    CHECK(a.stream_indices == c.stream_indices);

    const PredictionSummary sa = summarize(a, 0.95);
    const PredictionSummary sc = summarize(c, 0.95);
    CHECK(sa.mean == sc.mean);
    CHECK(sa.lower == sc.lower);
    CHECK(sa.upper == sc.upper);
}

TEST_CASE("run_srom: failure policies") {
    auto draw = [](const RandomStream& s) { return SubspaceBasis{Matrix::Constant(1, 1, static_cast<double>(s.stream_index))}; };
    auto solve = [](const SubspaceBasis& w) {
        if (w.basis(0, 0) == 2.0 || w.basis(0, 0) == 5.0) throw SingularityError("boom");
        return Vector::Constant(2, w.basis(0, 0));
    };
    try {
        (void)run_srom(draw, solve, 8, 3, EnsembleOptions{3, FailurePolicy::Abort});
        FAIL("expected SampleError");
    } catch (const SampleError& e) {
        CHECK(e.index() == 2);
    }
    const EnsemblePrediction kept = run_srom(draw, solve, 8, 3, EnsembleOptions{1, FailurePolicy::DropAndRecord});
    CHECK(kept.count() == 6);
    CHECK(kept.dropped == std::vector<std::uint64_t>{2, 5});
    CHECK(kept.drop_reasons.size() == 2);
    CHECK(kept.samples(2, 0) == 3.0);
}

TEST_CASE("split_columns partitions the grid") {
    const EnsemblePrediction e = from_rows(Matrix::Random(4, 5));
    const auto parts = split_columns(e, {2, 3});
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].samples == e.samples.leftCols(2));
    CHECK(parts[1].samples == e.samples.rightCols(3));
    CHECK_THROWS_AS(split_columns(e, {2, 2}), DimensionError);
}

TEST_CASE("summarize: constant ensemble, order statistics, Gaussian quantiles") {
    const PredictionSummary c = summarize(from_rows(Matrix::Constant(5, 3, 2.5)), 0.95);
    CHECK(c.lower == c.mean);
    CHECK(c.upper == c.mean);
    CHECK(c.std.norm() == 0.0);

    Matrix seq(100, 1);
    for (Index i = 0; i < 100; ++i) seq(99 - i, 0) = static_cast<double>(i + 1);
    const PredictionSummary q = summarize(from_rows(seq), 0.5);
    CHECK(q.lower(0) == Approx(25.75).epsilon(1e-14));
    CHECK(q.upper(0) == Approx(75.25).epsilon(1e-14));
    CHECK(q.mean(0) == Approx(50.5));
    CHECK(q.std(0) == Approx(std::sqrt(100.0 * 101.0 / 12.0)).epsilon(1e-12));

    std::mt19937_64 rng(5);
    const PredictionSummary g = summarize(from_rows(oracle::gaussian(rng, 100000, 1)), 0.95);
    CHECK(std::abs(g.lower(0) + 1.96) <= 0.03);
    CHECK(std::abs(g.upper(0) - 1.96) <= 0.03);

    CHECK_THROWS_AS(summarize(from_rows(Matrix::Ones(1, 2)), 0.9), ParameterError);
    CHECK_THROWS_AS(summarize(from_rows(Matrix::Ones(3, 2)), 1.0), ParameterError);
}

TEST_CASE("summarize: intervals widen with level and bracket the mean") {
    std::mt19937_64 rng(6);
    const EnsemblePrediction e = from_rows(oracle::gaussian(rng, 300, 40));
    const PredictionSummary narrow = summarize(e, 0.5);
    const PredictionSummary wide = summarize(e, 0.95);
    for (Index j = 0; j < 40; ++j) {
        CHECK(wide.upper(j) - wide.lower(j) >= narrow.upper(j) - narrow.lower(j));
        CHECK(narrow.lower(j) <= narrow.upper(j));
        CHECK(wide.lower(j) <= wide.mean(j));
        CHECK(wide.mean(j) <= wide.upper(j));
        CHECK(wide.std(j) >= 0.0);
    }
}

TEST_CASE("coverage: closed intervals and counts") {
    PredictionSummary s;
    s.mean = Vector::Zero(4);
    s.std = Vector::Ones(4);
    s.lower = Vector::Constant(4, -1.0);
    s.upper = Vector::Constant(4, 1.0);
    CHECK(coverage(s, s.mean).coverage == 1.0);

    const Vector truth = (Vector(4) << -1.0, 1.0, 1.5, -3.0).finished();
    const CoverageReport r = coverage(s, truth);
    CHECK(r.coverage == 0.5);
    CHECK(r.points_inside == 2);
    CHECK(r.points_total == 4);
    CHECK(r.mean_pi_width == 2.0);
    CHECK_THROWS_AS(coverage(s, Vector::Zero(3)), DimensionError);
}

TEST_CASE("coverage of a truth drawn from the ensemble distribution is near nominal") {
    std::mt19937_64 rng(7);
    const Index grid = 2000;
    const EnsemblePrediction e = from_rows(oracle::gaussian(rng, 1000, grid));
    const Vector truth = oracle::gaussian(rng, grid, 1);
    const CoverageReport r = coverage(summarize(e, 0.9), truth);
    const double se = std::sqrt(0.9 * 0.1 / grid);
    CHECK(std::abs(r.coverage - 0.9) <= 4.0 * se + 0.01);
}

TEST_CASE("sorted_quantile interpolates between order statistics") {
    const std::vector<double> v{1.0, 2.0, 4.0};
    CHECK(sorted_quantile(v, 0.0) == 1.0);
    CHECK(sorted_quantile(v, 1.0) == 4.0);
    CHECK(sorted_quantile(v, 0.75) == Approx(3.0));
    CHECK(sorted_quantile({7.0}, 0.3) == 7.0);
}

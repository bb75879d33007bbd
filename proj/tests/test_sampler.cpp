#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sspod/sampler.hpp"

using namespace sspod;

namespace {

SsppcaModel make_model(std::initializer_list<double> s, Index k, double beta) {
    Vector v(static_cast<Index>(s.size()));
    Index i = 0;
    for (double x : s) v(i++) = x;
    return SsppcaModel{v, k, beta};
}

double largest_angle(const Matrix& a, const Matrix& b) { return principal_angles(a, b).maxCoeff(); }

}  // namespace

TEST_CASE("SsppcaModel validation") {
    CHECK_NOTHROW(make_model({2, 1}, 1, 1.0).validate());
    CHECK_THROWS_AS(make_model({1, 2}, 1, 1.0).validate(), ParameterError);
    CHECK_THROWS_AS(make_model({2, 0}, 1, 1.0).validate(), ParameterError);
    CHECK_THROWS_AS(make_model({2, 1}, 3, 3.0).validate(), ParameterError);
    CHECK_THROWS_AS(make_model({2, 1}, 2, 1.5).validate(), ParameterError);
    CHECK_THROWS_AS(make_model({2, 1}, 1, INFINITY).validate(), ParameterError);
    CHECK_THROWS_AS(sample_reduced(make_model({2, 1}, 1, 1.5), RandomStream{1, 0}), ParameterError);
}

TEST_CASE("SsppcaModel::from_pod takes square roots of covariance eigenvalues") {
    PodDecomposition pod;
    pod.singular_values = Vector(2);
    pod.singular_values << 6.0, 2.0;
    pod.rank = 2;
    const SsppcaModel m = SsppcaModel::from_pod(pod, 4, 1, 3.0);
    CHECK(m.scales(0) == Catch::Approx(3.0));
    CHECK(m.scales(1) == Catch::Approx(1.0));
}

TEST_CASE("sample_reduced: full-dimensional subspace") {
    const SsppcaModel m = make_model({3, 2, 1}, 3, 3.0);
    for (std::uint64_t i = 0; i < 10; ++i) {
        const Matrix u = sample_reduced(m, RandomStream{5, i}).basis;
        CHECK((u * u.transpose() - Matrix::Identity(3, 3)).norm() <= 1e-12);
    }
}

TEST_CASE("sample_reduced: beta = k equals polar orthonormalization of the same draw") {
    const SsppcaModel m = make_model({4, 3, 1.5, 1, 0.5}, 3, 3.0);
    for (std::uint64_t i = 0; i < 200; ++i) {
        const RandomStream stream{77, i};
        const Matrix u = sample_reduced(m, stream).basis;
        const Matrix polar = polar_orthonormalize(m.scales.asDiagonal() * draw_resample_matrix(m, stream)).basis;
        CHECK(projector_distance(u, polar) <= 1e-10);
        CHECK(orthonormality_error(u) <= 1e-10);
    }
}

TEST_CASE("sample_reduced is deterministic per stream and distinct across streams") {
    const SsppcaModel m = make_model({2, 1.5, 1, 0.3}, 2, 5.0);
    const Matrix a = sample_reduced(m, RandomStream{9, 3}).basis;
    const Matrix b = sample_reduced(m, RandomStream{9, 3}).basis;
    const Matrix c = sample_reduced(m, RandomStream{9, 4}).basis;
    const Matrix d = sample_reduced(m, RandomStream{10, 3}).basis;
    CHECK(a == b);
    CHECK(projector_distance(a, c) > 1e-6);
    CHECK(projector_distance(a, d) > 1e-6);
}

TEST_CASE("sample_reduced: r=2, k=1 angle follows the angular central Gaussian density") {
    const SsppcaModel m = make_model({2, 1}, 1, 1.0);
    const int samples = 10000;
    const int bins = 20;
    std::vector<double> observed(bins, 0.0);
    for (int i = 0; i < samples; ++i) {
        const Matrix u = sample_reduced(m, RandomStream{2024, static_cast<std::uint64_t>(i)}).basis;
        double theta = std::atan2(u(1, 0), u(0, 0));
        if (theta < 0.0) theta += std::numbers::pi;
        if (theta >= std::numbers::pi) theta -= std::numbers::pi;
        const int b = std::min(bins - 1, static_cast<int>(theta / std::numbers::pi * bins));
        observed[static_cast<std::size_t>(b)] += 1.0;
    }
    auto density = [](double t) {
        const double c = std::cos(t);
        const double s = std::sin(t);
        return 1.0 / (c * c / 4.0 + s * s);
    };
    const double total = oracle::simpson(density, 0.0, std::numbers::pi, 4000);
    std::vector<double> expected(bins);
    const double w = std::numbers::pi / bins;
    for (int b = 0; b < bins; ++b) {
        expected[static_cast<std::size_t>(b)] = samples * oracle::simpson(density, b * w, (b + 1) * w, 200) / total;
    }
    CHECK(oracle::chi_squared_p_value(observed, expected) > 0.01);
}

TEST_CASE("sample_fractional: integer beta reproduces sample_reduced bit for bit") {
    const SsppcaModel m = make_model({3, 2, 1, 0.5}, 2, 4.0);
    for (std::uint64_t i = 0; i < 20; ++i) {
        CHECK(sample_fractional(m, RandomStream{1, i}).basis == sample_reduced(m, RandomStream{1, i}).basis);
    }
}

TEST_CASE("sample_fractional: beta = 4.32 draws five columns and weights the last by 0.32") {
    const SsppcaModel m = make_model({6, 5, 4, 3, 2, 1}, 4, 4.32);
    const RandomStream stream{432, 0};
    const Matrix z = draw_resample_matrix(m, stream);
    REQUIRE(z.rows() == 6);
    REQUIRE(z.cols() == 5);
    StreamEngine engine(stream);
    const Matrix raw = engine.normal_matrix(6, 5);
    CHECK(z.leftCols(4) == raw.leftCols(4));
    CHECK((z.col(4) - (4.32 - 4.0) * raw.col(4)).norm() <= 1e-15 * raw.col(4).norm());

    const Matrix expected = principal_subspace_map(m.scales.asDiagonal() * z, 4).basis;
    CHECK(sample_fractional(m, stream).basis == expected);
}

TEST_CASE("sample_fractional: continuity in beta at an integer") {
    const SsppcaModel a = make_model({3, 2, 1.2, 0.7, 0.4}, 2, 2.0);
    SsppcaModel b = a;
    b.beta = 2.0 + 1e-9;
    std::vector<double> dist;
    for (std::uint64_t i = 0; i < 100; ++i) {
        dist.push_back(projector_distance(sample_fractional(a, RandomStream{8, i}).basis,
                                          sample_fractional(b, RandomStream{8, i}).basis));
    }
    std::nth_element(dist.begin(), dist.begin() + 50, dist.end());
    CHECK(dist[50] <= 1e-4);
}

TEST_CASE("sample_ambient: canonical embedding and constraint preservation") {
    const SsppcaModel m = make_model({3, 2, 1}, 2, 4.0);
    const Matrix canon = Matrix::Identity(7, 3);
    const RandomStream stream{3, 1};
    const Matrix w = sample_ambient(m, canon, stream).basis;
    const Matrix u = sample_reduced(m, stream).basis;
    CHECK(w.topRows(3) == u);
    CHECK(w.bottomRows(4).norm() == 0.0);

    std::mt19937_64 rng(4);
    const Matrix b = oracle::gaussian(rng, 12, 2);
    // modes orthogonal to range(B)
    Eigen::HouseholderQR<Matrix> qr(b);
    const Matrix q = qr.householderQ();
    const Matrix modes = q.middleCols(2, 3);
    for (std::uint64_t i = 0; i < 100; ++i) {
        const Matrix wi = sample_ambient(m, modes, RandomStream{6, i}).basis;
        CHECK((b.transpose() * wi).norm() <= 1e-10);
        CHECK(orthonormality_error(wi) <= 1e-10);
    }
}

TEST_CASE("sample_ambient: precondition errors") {
    const SsppcaModel m = make_model({3, 2, 1}, 2, 4.0);
    Matrix bad = Matrix::Identity(6, 3);
    bad(0, 0) = 1.1;
    CHECK_THROWS_AS(sample_ambient(m, bad, RandomStream{}), PreconditionError);
    CHECK_THROWS_AS(sample_ambient(m, Matrix::Identity(6, 2), RandomStream{}), DimensionError);
}

TEST_CASE("sample_ambient matches the direct definition in distribution") {
    const Index n = 8, r = 4, k = 2;
    const int beta = 6;
    const int count = 2000;
    std::mt19937_64 rng(808);
    const Matrix modes = oracle::random_orthogonal(rng, n).leftCols(r);
    const Vector lambda = (Vector(r) << 4.0, 2.0, 1.0, 0.5).finished();
    const SsppcaModel m{lambda.cwiseSqrt(), k, static_cast<double>(beta)};
    const Matrix vk = modes.leftCols(k);
    const Matrix sqrt_s = oracle::sqrtm_spd(modes * lambda.asDiagonal() * modes.transpose());

    std::vector<double> low_rank_max, low_rank_min, direct_max, direct_min;
    for (int i = 0; i < count; ++i) {
        const Vector a = principal_angles(sample_ambient(m, modes, RandomStream{55, static_cast<std::uint64_t>(i)}).basis, vk);
        low_rank_max.push_back(a.maxCoeff());
        low_rank_min.push_back(a.minCoeff());
        const Matrix x = sqrt_s * oracle::gaussian(rng, n, beta);
        const Vector b = principal_angles(oracle::full_svd_leading(x, k), vk);
        direct_max.push_back(b.maxCoeff());
        direct_min.push_back(b.minCoeff());
    }
    CHECK(oracle::ks_two_sample(low_rank_max, direct_max).p_value > 0.01);
    CHECK(oracle::ks_two_sample(low_rank_min, direct_min).p_value > 0.01);
}

TEST_CASE("sample_ambient: uniform subspaces when all scales are equal") {
    const Index r = 5, k = 2;
    const int count = 5000;
    const SsppcaModel m{Vector::Ones(r), k, 3.0};
    Matrix sum = Matrix::Zero(r, r);
    Matrix sum_sq = Matrix::Zero(r, r);
    for (int i = 0; i < count; ++i) {
        const Matrix u = sample_reduced(m, RandomStream{13, static_cast<std::uint64_t>(i)}).basis;
        const Matrix p = u * u.transpose();
        sum += p;
        sum_sq += p.cwiseAbs2();
    }
    const Matrix mean = sum / count;
    const Matrix var = (sum_sq / count - mean.cwiseAbs2()) * (count / (count - 1.0));
    const Matrix target = (static_cast<double>(k) / r) * Matrix::Identity(r, r);
    for (Index i = 0; i < r; ++i) {
        for (Index j = 0; j < r; ++j) {
            const double se = std::sqrt(var(i, j) / count);
            CHECK(std::abs(mean(i, j) - target(i, j)) <= 5.0 * se);
        }
    }
}

TEST_CASE("sample_ensemble: ordering, singleton and thread independence") {
    std::mt19937_64 rng(2);
    const Matrix modes = oracle::random_orthogonal(rng, 15).leftCols(4);
    const SsppcaModel m = make_model({3, 2, 1, 0.5}, 2, 5.5);

    const auto one = sample_ensemble(m, modes, 1, 42);
    REQUIRE(one.size() == 1);
    CHECK(one[0].basis == sample_ambient(m, modes, RandomStream{42, 0}).basis);

    const auto serial = sample_ensemble(m, modes, 64, 42, 1);
    const auto threaded = sample_ensemble(m, modes, 64, 42, 4);
    REQUIRE(serial.size() == threaded.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].basis == threaded[i].basis);
        CHECK(serial[i].basis == sample_ambient(m, modes, RandomStream{42, i}).basis);
    }
    CHECK_THROWS_AS(sample_ensemble(m, modes, 0, 42), ParameterError);
}

TEST_CASE("larger beta concentrates samples around the principal subspace") {
    const Index n = 20, r = 8, k = 3;
    std::mt19937_64 rng(20);
    const Matrix modes = oracle::random_orthogonal(rng, n).leftCols(r);
    Vector s(r);
    for (Index i = 0; i < r; ++i) s(i) = 1.0 / (1.0 + 0.5 * static_cast<double>(i));
    const Matrix vk = modes.leftCols(k);

    double previous = INFINITY;
    for (double beta : {3.0, 12.0, 48.0, 192.0}) {
        const SsppcaModel m{s, k, beta};
        const auto ens = sample_ensemble(m, modes, 500, 99);
        double mean = 0.0;
        for (const auto& w : ens) mean += largest_angle(w.basis, vk);
        mean /= 500.0;
        CHECK(mean <= previous);
        previous = mean;
    }

    const SsppcaModel low{s, k, 3.0};
    const SsppcaModel high{s, k, 150.0};
    double mean_low = 0.0, mean_high = 0.0;
    const auto a = sample_ensemble(low, modes, 1000, 7);
    const auto b = sample_ensemble(high, modes, 1000, 7);
    for (int i = 0; i < 1000; ++i) {
        mean_low += largest_angle(a[static_cast<std::size_t>(i)].basis, vk);
        mean_high += largest_angle(b[static_cast<std::size_t>(i)].basis, vk);
    }
    CHECK(mean_high < mean_low);
}

TEST_CASE("samples at large beta rarely beat the principal subspace in MACG density") {
    const Index n = 20, r = 8, k = 3;
    std::mt19937_64 rng(30);
    const Matrix modes = oracle::random_orthogonal(rng, n).leftCols(r);
    Vector lambda(r);
    for (Index i = 0; i < r; ++i) lambda(i) = 4.0 / (1.0 + static_cast<double>(i));
    const CovarianceModel sigma{modes, lambda, 0.1 * lambda(r - 1)};
    const SubspaceBasis vk{modes.leftCols(k)};
    const double at_mode = macg_log_pdf(vk, sigma);

    const SsppcaModel m{lambda.cwiseSqrt(), k, 50.0 * k};
    const auto ens = sample_ensemble(m, modes, 1000, 3);
    int below = 0;
    for (const auto& w : ens) below += macg_log_pdf(w, sigma) <= at_mode;
    CHECK(below >= 990);
}

TEST_CASE("MACG mode at the principal subspace for beta = k") {
    std::mt19937_64 rng(64);
    std::uniform_real_distribution<double> u(0.3, 6.0);
    for (int trial = 0; trial < 5; ++trial) {
        const Index n = 6 + trial, k = 1 + trial % 3;
        Vector lambda(n);
        for (Index i = 0; i < n; ++i) lambda(i) = u(rng);
        std::sort(lambda.data(), lambda.data() + n, std::greater<>());
        const Matrix v = oracle::random_orthogonal(rng, n);
        const CovarianceModel sigma{v, lambda, 0.0};
        const double mode = macg_log_pdf(SubspaceBasis{v.leftCols(k)}, sigma);
        const SsppcaModel m{lambda.cwiseSqrt(), k, static_cast<double>(k)};
        for (const auto& w : sample_ensemble(m, v, 300, 100 + trial)) CHECK(macg_log_pdf(w, sigma) < mode);
    }
}

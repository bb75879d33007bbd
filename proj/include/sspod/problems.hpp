#pragma once

// Generators for the benchmark problems: DST-I spectral stiffness, the
// parametric cubic problem, Latin hypercube designs, calibrated stiffness
// perturbations, measurement noise, sparse sensors and a lumped-mass
// structural dynamics surrogate.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "sspod/random.hpp"
#include "sspod/rom.hpp"
#include "sspod/subspace.hpp"

namespace sspod {

/// Orthogonal DST-I matrix of order m: sqrt(2/(m+1)) sin(j k pi / (m+1)).
inline Matrix dst1_matrix(Index m) {
    if (m < 1) throw ParameterError("dst1_matrix: order must be >= 1");
    const double h = std::numbers::pi / static_cast<double>(m + 1);
    const double scale = std::sqrt(2.0 / static_cast<double>(m + 1));
    // reduce j*k mod 2(m+1) in integers before taking the sine
    const Index period = 2 * (m + 1);
    std::vector<double> table(static_cast<std::size_t>(period));
    for (Index q = 0; q < period; ++q) table[static_cast<std::size_t>(q)] = std::sin(static_cast<double>(q) * h);
    Matrix s(m, m);
    for (Index k = 0; k < m; ++k) {
        for (Index j = 0; j < m; ++j) {
            s(j, k) = scale * table[static_cast<std::size_t>(((j + 1) * (k + 1)) % period)];
        }
    }
    return s;
}

/// K = Phi diag(4 pi^2 j^2) Phi^T with Phi = [0; S; 0] (S the DST-I of
/// order n-2), so the first and last DoF are clamped: B = [e_1 e_n].
struct SpectralStiffness {
    Matrix modes;    // n x (n-2)
    Vector eigvals;  // 4 pi^2 j^2, j = 1..n-2

    Index dim() const { return modes.rows(); }

    Matrix constraints() const {
        const Index n = dim();
        Matrix b = Matrix::Zero(n, 2);
        b(0, 0) = 1.0;
        b(n - 1, 1) = 1.0;
        return b;
    }

    Matrix dense(const Vector& spectrum) const { return modes * spectrum.asDiagonal() * modes.transpose(); }
    Matrix dense() const {
        // Entrywise closed form: K_il = (4 pi^2 / N) [S(i-l) - S(i+l)], with
        // S(p) = sum_j j^2 cos(j p pi / N), N = n - 1, summed in long double.
        // The plain triple product loses ~1e-8 relative accuracy at n = 1000.
        const Index n = dim();
        const Index big_n = n - 1;
        const Index period = 2 * big_n;
        const long double pi = std::numbers::pi_v<long double>;
        std::vector<long double> c(static_cast<std::size_t>(period));
        for (Index q = 0; q < period; ++q) c[static_cast<std::size_t>(q)] = std::cos(pi * q / big_n);
        std::vector<long double> sums(static_cast<std::size_t>(period));
        for (Index p = 0; p < period; ++p) {
            long double acc = 0.0L;
            for (Index j = 1; j < big_n; ++j) {
                acc += static_cast<long double>(j) * j * c[static_cast<std::size_t>((j * p) % period)];
            }
            sums[static_cast<std::size_t>(p)] = acc;
        }
        const long double scale = 4.0L * pi * pi / big_n;
        Matrix k = Matrix::Zero(n, n);
        for (Index i = 1; i < n - 1; ++i) {
            for (Index l = 1; l < n - 1; ++l) {
                const auto d = static_cast<std::size_t>(std::abs(i - l));
                const auto s = static_cast<std::size_t>(i + l);
                k(i, l) = static_cast<double>(scale * (sums[d] - sums[s]));
            }
        }
        return k;
    }

    /// Phi diag(spectrum)^{-1} Phi^T f: the static response of the stiffness
    /// with eigenvalues `spectrum` in the same eigenbasis.
    Vector solve(const Vector& spectrum, const Vector& f) const {
        return modes * (modes.transpose() * f).cwiseQuotient(spectrum);
    }
};

inline SpectralStiffness build_spectral_stiffness(Index n) {
    if (n < 3) throw ParameterError("build_spectral_stiffness: n must be >= 3");
    SpectralStiffness out;
    out.modes = Matrix::Zero(n, n - 2);
    out.modes.middleRows(1, n - 2) = dst1_matrix(n - 2);
    out.eigvals.resize(n - 2);
    for (Index j = 0; j < n - 2; ++j) {
        const double jj = static_cast<double>(j + 1);
        out.eigvals(j) = 4.0 * std::numbers::pi * std::numbers::pi * jj * jj;
    }
    return out;
}

namespace detail {

// g / ||g||_inf with g = modes.col(1..5) * mu.
inline Vector normalized_mode_sum(const Matrix& modes, const Vector& mu) {
    if (mu.size() != 5) throw DimensionError("modal_force: parameter vector must have 5 entries");
    const Vector g = modes.middleCols(1, 5) * mu;
    const double norm = g.cwiseAbs().maxCoeff();
    if (!(norm > 0.0)) throw ParameterError("modal_force: force is identically zero, normalization undefined");
    return g / norm;
}

}  // namespace detail

/// f = g / ||g||_inf with g = sum_{i=2}^{6} mu_i phi_i (mu has 5 entries).
inline Vector modal_force(const SpectralStiffness& k, const Vector& mu) {
    return detail::normalized_mode_sum(k.modes, mu);
}

struct CubicProblem {
    SpectralStiffness spectral;
    NonlinearCubicSystem system;
};

inline CubicProblem build_cubic_problem(Index n, double alpha) {
    if (n < 8) throw ParameterError("build_cubic_problem: n must be >= 8");
    if (!(alpha > 0.0)) throw ParameterError("build_cubic_problem: alpha must be positive");
    CubicProblem out;
    out.spectral = build_spectral_stiffness(n);
    out.system.stiffness = out.spectral.dense();
    out.system.cubic_coeff = alpha;
    out.system.constraints = out.spectral.constraints();
    out.system.force_map = [modes = Matrix(out.spectral.modes.leftCols(6))](const Vector& mu) {
        return detail::normalized_mode_sum(modes, mu);
    };
    return out;
}

/// count x dims Latin hypercube design on [0,1]^dims: every column places
/// exactly one point in each of the `count` equal cells, jittered uniformly.
inline Matrix lhs_sample(Index dims, Index count, const RandomStream& stream) {
    if (count < 1 || dims < 1) throw ParameterError("lhs_sample: dims and count must be >= 1");
    StreamEngine engine(stream);
    Matrix out(count, dims);
    std::vector<Index> perm(static_cast<std::size_t>(count));
    const double width = 1.0 / static_cast<double>(count);
    for (Index d = 0; d < dims; ++d) {
        for (Index i = 0; i < count; ++i) perm[static_cast<std::size_t>(i)] = i;
        // Fisher-Yates driven by the stream's uniforms (portable across standard libraries).
        for (Index i = count - 1; i > 0; --i) {
            auto j = static_cast<Index>(engine.uniform() * static_cast<double>(i + 1));
            if (j > i) j = i;
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        for (Index i = 0; i < count; ++i) {
            out(i, d) = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + engine.uniform()) * width;
        }
    }
    return out;
}

/// Lambda_eps = diag(c z_j lambda_j), with c fixing ||Lambda_eps||_F = ratio ||Lambda||_F.
struct StiffnessPerturbation {
    Vector delta;  // diagonal of Lambda_eps
    double scale = 0.0;

    Vector perturbed(const Vector& eigvals) const { return eigvals + delta; }
};

inline StiffnessPerturbation perturb_stiffness(const SpectralStiffness& base, double ratio, const RandomStream& stream) {
    if (!(ratio >= 0.0)) throw ParameterError("perturb_stiffness: ratio must be non-negative");
    StiffnessPerturbation out;
    out.delta = Vector::Zero(base.eigvals.size());
    if (ratio == 0.0) return out;
    StreamEngine engine(stream);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const Vector z = engine.normal_vector(base.eigvals.size());
        const Vector raw = z.cwiseProduct(base.eigvals);
        const double raw_norm = raw.norm();
        if (raw_norm > 0.0) {
            out.scale = ratio * base.eigvals.norm() / raw_norm;
            out.delta = out.scale * raw;
            return out;
        }
    }
    throw ParameterError("perturb_stiffness: Gaussian draw was identically zero twice");
}

struct NoisyObservation {
    Vector values;
    double sigma = 0.0;
};

/// x + eta, eta ~ N(0, sigma^2 I) with sigma = level * RMS(x).
inline NoisyObservation add_noise(const Vector& x, double level, const RandomStream& stream) {
    if (!(level >= 0.0)) throw ParameterError("add_noise: level must be non-negative");
    NoisyObservation out{x, 0.0};
    if (x.size() == 0 || level == 0.0) return out;
    out.sigma = level * std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
    StreamEngine engine(stream);
    for (Index i = 0; i < x.size(); ++i) out.values(i) += out.sigma * engine.normal();
    return out;
}

/// Node indices (0-based, nodes at i/(n-1)) nearest to the equidistant
/// interior positions j/(sensors+1), j = 1..sensors.
inline std::vector<Index> observe_sparse(Index n, Index sensors) {
    if (n < 3 || sensors < 1) throw ParameterError("observe_sparse: need n >= 3 and at least one sensor");
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(sensors));
    for (Index j = 1; j <= sensors; ++j) {
        const double pos = static_cast<double>(j) / static_cast<double>(sensors + 1);
        const auto i = static_cast<Index>(std::llround(pos * static_cast<double>(n - 1)));
        if (i <= 0 || i >= n - 1) throw ParameterError("observe_sparse: sensor falls on the boundary");
        if (!idx.empty() && i <= idx.back()) throw ParameterError("observe_sparse: grid too coarse, sensors collide");
        idx.push_back(i);
    }
    return idx;
}

inline Vector gather(const Vector& x, const std::vector<Index>& idx) {
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = x(idx[i]);
    return out;
}

inline Matrix gather_rows(const Matrix& a, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = a.row(idx[i]);
    return out;
}

/// Lumped-mass chain standing in for an exported structural model.
struct SurrogateSpec {
    Index n = 60;
    Index bandwidth = 2;          // springs reach up to this many neighbours
    double base_mass = 1.0;
    double heavy_mass_ratio = 100.0;
    Index heavy_dof = 15;         // carries the large mass and the load
    double spring = 1000.0;       // nearest-neighbour stiffness
    double anchor = 10.0;         // grounding springs at both chain ends
    double rayleigh = 1e-3;       // C = rayleigh * K
    double impulse_amplitude = 100.0;
    double impulse_duration = 0.01;  // half-sine pulse length
};

/// Banded SPD stiffness with spatially varying springs, diagonal mass with
/// one heavy DoF, Rayleigh damping, half-sine pulse at the heavy DoF.
inline LinearDynamicSystem surrogate_dynamics(const SurrogateSpec& spec) {
    const Index n = spec.n;
    if (n < 10) throw ParameterError("surrogate_dynamics: n must be >= 10");
    if (spec.heavy_dof < 0 || spec.heavy_dof >= n) throw ParameterError("surrogate_dynamics: heavy DoF out of range");
    if (spec.bandwidth < 1) throw ParameterError("surrogate_dynamics: bandwidth must be >= 1");
    if (!(spec.impulse_duration > 0.0)) throw ParameterError("surrogate_dynamics: impulse duration must be positive");

    LinearDynamicSystem sys;
    sys.mass = Matrix::Zero(n, n);
    sys.mass.diagonal().setConstant(spec.base_mass);
    sys.mass(spec.heavy_dof, spec.heavy_dof) = spec.heavy_mass_ratio * spec.base_mass;

    sys.stiffness = Matrix::Zero(n, n);
    auto add_spring = [&](Index i, Index j, double k) {
        sys.stiffness(i, i) += k;
        sys.stiffness(j, j) += k;
        sys.stiffness(i, j) -= k;
        sys.stiffness(j, i) -= k;
    };
    for (Index d = 1; d <= spec.bandwidth; ++d) {
        for (Index i = 0; i + d < n; ++i) {
            const double variation = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + static_cast<double>(d));
            add_spring(i, i + d, spec.spring * variation / static_cast<double>(d * d));
        }
    }
    sys.stiffness(0, 0) += spec.anchor;
    sys.stiffness(n - 1, n - 1) += spec.anchor;
    sys.damping = spec.rayleigh * sys.stiffness;

    Vector shape = Vector::Zero(n);
    shape(spec.heavy_dof) = 1.0;
    const double amp = spec.impulse_amplitude;
    const double tau = spec.impulse_duration;
    sys.load = LoadHistory{shape, [amp, tau](double t) {
                               return (t >= 0.0 && t <= tau) ? amp * std::sin(std::numbers::pi * t / tau) : 0.0;
                           }};
    sys.x0 = Vector::Zero(n);
    sys.v0 = Vector::Zero(n);
    return sys;
}

}  // namespace sspod

#pragma once

// Full-order and Galerkin-reduced solvers for linear static, cubic
// nonlinear static and linear dynamic systems, with the two-stage
// (V_r, then U_k) reduction used by stochastic ensembles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sspod/errors.hpp"
#include "sspod/subspace.hpp"

namespace sspod {

/// K x = f subject to B^T x = 0.
struct LinearStaticSystem {
    Matrix stiffness;
    Vector force;
    Matrix constraints;  // n x n_CD, possibly zero columns

    Index dim() const { return stiffness.rows(); }
};

using ForceMap = std::function<Vector(const Vector&)>;

/// K x + alpha x^3 = f(mu) (cube taken entrywise) subject to B^T x = 0.
struct NonlinearCubicSystem {
    Matrix stiffness;
    double cubic_coeff = 0.0;
    ForceMap force_map;
    Matrix constraints;

    Index dim() const { return stiffness.rows(); }
};

/// Separable load f(t) = amplitude(t) * shape.
struct LoadHistory {
    Vector shape;
    std::function<double(double)> amplitude;

    Vector at(double t) const { return amplitude ? Vector(amplitude(t) * shape) : Vector::Zero(shape.size()); }
};

/// M x'' + C x' + K x = f(t), x(0) = x0, x'(0) = v0.
struct LinearDynamicSystem {
    Matrix mass;
    Matrix damping;
    Matrix stiffness;
    LoadHistory load;
    Vector x0;
    Vector v0;

    Index dim() const { return stiffness.rows(); }
};

/// Reduced-coordinate reduction of a cubic system. Only K is projected;
/// the cubic term is lifted to full space through `basis` at every solve.
struct CubicOperators {
    Matrix stiffness;  // basis^T K basis
    double cubic_coeff = 0.0;
    ForceMap force_map;  // full-space force

    Index dim() const { return stiffness.rows(); }
};

/// Operators projected onto range(basis), plus the basis (in full space)
/// that maps reduced coordinates back: x = basis q.
template <class Operators>
struct ReducedSystem {
    Operators operators;
    Matrix basis;
};

/// Operators projected once onto the POD modes V_r. Per-sample reductions
/// with U_k (r x k) then work entirely in r dimensions.
template <class Operators>
struct StagedOperators {
    Operators operators;
    Matrix modes;
};

/// Counts of Galerkin projections, keyed by ambient dimension. Used to audit
/// that staged ensembles never touch n-dimensional operators after stage one.
struct ProjectionStats {
    long calls = 0;
    Index max_ambient_dim = 0;
};

namespace detail {

inline ProjectionStats& projection_stats_storage() {
    thread_local ProjectionStats stats;
    return stats;
}

inline void record_projection(Index ambient_dim) {
    auto& s = projection_stats_storage();
    ++s.calls;
    s.max_ambient_dim = std::max(s.max_ambient_dim, ambient_dim);
}

inline void require_basis(const Matrix& basis, Index n, const char* op) {
    if (basis.rows() != n) {
        throw DimensionError(std::string(op) + ": basis has " + std::to_string(basis.rows()) + " rows, system has " +
                             std::to_string(n));
    }
    if (basis.cols() < 1) throw DimensionError(std::string(op) + ": empty basis");
}

inline Matrix congruence(const Matrix& a, const Matrix& basis) {
    Matrix out = basis.transpose() * (a * basis);
    return out;
}

}  // namespace detail

inline ProjectionStats projection_stats() { return detail::projection_stats_storage(); }
inline void reset_projection_stats() { detail::projection_stats_storage() = {}; }

// ---------------------------------------------------------------------------
// Galerkin projection

inline ReducedSystem<LinearStaticSystem> galerkin_reduce(const LinearStaticSystem& sys, const SubspaceBasis& basis) {
    const Matrix& v = basis.basis;
    detail::require_basis(v, sys.dim(), "galerkin_reduce");
    if (sys.force.size() != sys.dim()) throw DimensionError("galerkin_reduce: force length differs from n");
    detail::record_projection(sys.dim());
    LinearStaticSystem red{detail::congruence(sys.stiffness, v), v.transpose() * sys.force, Matrix(v.cols(), 0)};
    return {std::move(red), v};
}

inline ReducedSystem<CubicOperators> galerkin_reduce(const NonlinearCubicSystem& sys, const SubspaceBasis& basis) {
    const Matrix& v = basis.basis;
    detail::require_basis(v, sys.dim(), "galerkin_reduce");
    detail::record_projection(sys.dim());
    return {CubicOperators{detail::congruence(sys.stiffness, v), sys.cubic_coeff, sys.force_map}, v};
}

inline ReducedSystem<LinearDynamicSystem> galerkin_reduce(const LinearDynamicSystem& sys, const SubspaceBasis& basis) {
    const Matrix& v = basis.basis;
    const Index n = sys.dim();
    detail::require_basis(v, n, "galerkin_reduce");
    if (sys.mass.rows() != n || sys.damping.rows() != n || sys.load.shape.size() != n) {
        throw DimensionError("galerkin_reduce: dynamic operators have inconsistent sizes");
    }
    detail::record_projection(n);
    LinearDynamicSystem red;
    red.mass = detail::congruence(sys.mass, v);
    red.damping = detail::congruence(sys.damping, v);
    red.stiffness = detail::congruence(sys.stiffness, v);
    red.load = LoadHistory{v.transpose() * sys.load.shape, sys.load.amplitude};
    red.x0 = sys.x0.size() == n ? Vector(v.transpose() * sys.x0) : Vector::Zero(v.cols());
    red.v0 = sys.v0.size() == n ? Vector(v.transpose() * sys.v0) : Vector::Zero(v.cols());
    return {std::move(red), v};
}

/// Stage one: project every operator onto range(V_r) once.
template <class System>
auto two_stage_reduce(const System& sys, const Matrix& modes) {
    auto reduced = galerkin_reduce(sys, SubspaceBasis{modes});
    using Ops = decltype(reduced.operators);
    return StagedOperators<Ops>{std::move(reduced.operators), modes};
}

/// Stage two: A_W = U_k^T A_r U_k for every operator; overall basis V_r U_k.
template <class Ops>
ReducedSystem<Ops> inner_reduce(const StagedOperators<Ops>& staged, const SubspaceBasis& inner) {
    if (inner.basis.rows() != staged.modes.cols()) {
        throw DimensionError("inner_reduce: inner basis rows differ from the staged rank");
    }
    if constexpr (std::is_same_v<Ops, CubicOperators>) {
        detail::record_projection(staged.operators.dim());
        return {CubicOperators{detail::congruence(staged.operators.stiffness, inner.basis), staged.operators.cubic_coeff,
                               staged.operators.force_map},
                staged.modes * inner.basis};
    } else {
        auto red = galerkin_reduce(staged.operators, inner);
        red.basis = staged.modes * inner.basis;
        return red;
    }
}

// ---------------------------------------------------------------------------
// Constraint handling

/// Parametrization x = N y of the admissible set {x : B^T x = 0}.
/// Canonical constraints (columns of B that are unit vectors) are handled
/// by dropping DoFs; general constraints by an orthonormal null-space basis.
class AdmissibleSpace {
public:
    AdmissibleSpace(Index n, const Matrix& constraints) : n_(n) {
        if (constraints.cols() == 0) {
            canonical_ = true;
            for (Index i = 0; i < n; ++i) free_.push_back(i);
            return;
        }
        if (constraints.rows() != n) throw DimensionError("AdmissibleSpace: constraint matrix has wrong row count");
        std::vector<bool> fixed(static_cast<std::size_t>(n), false);
        canonical_ = true;
        for (Index j = 0; j < constraints.cols() && canonical_; ++j) {
            Index hit = -1;
            for (Index i = 0; i < n; ++i) {
                const double v = constraints(i, j);
                if (v == 0.0) continue;
                if (hit >= 0) {
                    canonical_ = false;
                    break;
                }
                hit = i;
            }
            if (hit < 0) canonical_ = false;
            if (canonical_) fixed[static_cast<std::size_t>(hit)] = true;
        }
        if (canonical_) {
            for (Index i = 0; i < n; ++i) {
                if (!fixed[static_cast<std::size_t>(i)]) free_.push_back(i);
            }
        } else {
            Eigen::ColPivHouseholderQR<Matrix> qr(constraints);
            const Index rank = qr.rank();
            Matrix q = qr.householderQ();
            null_ = q.rightCols(n - rank);
        }
    }

    Index size() const { return canonical_ ? static_cast<Index>(free_.size()) : null_.cols(); }

    Matrix restrict_operator(const Matrix& a) const {
        if (!canonical_) return null_.transpose() * a * null_;
        const Index m = size();
        Matrix out(m, m);
        for (Index j = 0; j < m; ++j) {
            for (Index i = 0; i < m; ++i) out(i, j) = a(free_[i], free_[j]);
        }
        return out;
    }

    Vector restrict_vector(const Vector& v) const {
        if (!canonical_) return null_.transpose() * v;
        Vector out(size());
        for (Index i = 0; i < size(); ++i) out(i) = v(free_[i]);
        return out;
    }

    Vector expand(const Vector& y) const {
        if (!canonical_) return null_ * y;
        Vector x = Vector::Zero(n_);
        for (Index i = 0; i < size(); ++i) x(free_[i]) = y(i);
        return x;
    }

private:
    Index n_;
    bool canonical_ = true;
    std::vector<Index> free_;
    Matrix null_;
};

namespace detail {

// Symmetric LDL^T solve that reports singular (or numerically singular) operators.
inline Vector symmetric_solve(const Matrix& a, const Vector& b, const char* op) {
    if (a.rows() == 0) return Vector();
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw SingularityError(std::string(op) + ": factorization failed");
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (!(d.minCoeff() > 1e-14 * d.maxCoeff())) throw SingularityError(std::string(op) + ": operator is singular");
    return ldlt.solve(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Static solvers

/// Full-order K x = f on the admissible set.
inline Vector solve_linear_static(const LinearStaticSystem& sys) {
    const Index n = sys.dim();
    if (sys.stiffness.cols() != n || sys.force.size() != n) throw DimensionError("solve_linear_static: size mismatch");
    const AdmissibleSpace space(n, sys.constraints);
    return space.expand(detail::symmetric_solve(space.restrict_operator(sys.stiffness), space.restrict_vector(sys.force),
                                                "solve_linear_static"));
}

/// Reduced coordinates q of V^T K V q = V^T f.
inline Vector solve_linear_static(const ReducedSystem<LinearStaticSystem>& rom) {
    return detail::symmetric_solve(rom.operators.stiffness, rom.operators.force, "solve_linear_static");
}

struct NewtonResult {
    Vector solution;
    int iterations = 0;
    double residual = 0.0;                 // infinity norm of the final residual
    std::vector<double> residual_history;  // one entry per evaluated iterate
};

struct NewtonOptions {
    double tolerance = 1e-10;  // absolute, infinity norm of the residual
    int max_iterations = 50;
};

/// Newton-Raphson on K x + alpha x^3 = f(mu) with Jacobian K + 3 alpha diag(x^2).
inline NewtonResult newton_cubic(const NonlinearCubicSystem& sys, const Vector& mu, const Vector& guess,
                                 const NewtonOptions& opts = {}) {
    const Index n = sys.dim();
    if (!(sys.cubic_coeff > 0.0)) throw ParameterError("solve_nonlinear_cubic: cubic coefficient must be positive");
    const Vector f = sys.force_map(mu);
    if (f.size() != n || guess.size() != n) throw DimensionError("solve_nonlinear_cubic: size mismatch");
    const AdmissibleSpace space(n, sys.constraints);
    const double alpha = sys.cubic_coeff;

    NewtonResult res;
    Vector y = space.restrict_vector(guess);
    for (int it = 0;; ++it) {
        const Vector x = space.expand(y);
        const Vector r = space.restrict_vector(sys.stiffness * x + alpha * x.array().cube().matrix() - f);
        res.residual = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
        res.residual_history.push_back(res.residual);
        res.iterations = it;
        if (res.residual <= opts.tolerance) {
            res.solution = x;
            return res;
        }
        if (it >= opts.max_iterations) {
            throw IterationError("solve_nonlinear_cubic: Newton did not converge", res.residual, it);
        }
        Matrix jac = sys.stiffness;
        jac.diagonal().array() += 3.0 * alpha * x.array().square();
        y -= detail::symmetric_solve(space.restrict_operator(jac), r, "solve_nonlinear_cubic");
    }
}

inline Vector solve_nonlinear_cubic(const NonlinearCubicSystem& sys, const Vector& mu, const Vector& guess,
                                    double tol = 1e-10, int max_iter = 50) {
    return newton_cubic(sys, mu, guess, NewtonOptions{tol, max_iter}).solution;
}

/// Newton on V^T K V q + alpha V^T (V q)^3 = V^T f(mu); the cubic term and
/// its Jacobian V^T diag(3 alpha (Vq)^2) V are formed by lifting to full space.
inline NewtonResult newton_rom_cubic(const ReducedSystem<CubicOperators>& rom, const Vector& mu, const Vector& guess,
                                     const NewtonOptions& opts = {}) {
    const Matrix& v = rom.basis;
    const CubicOperators& ops = rom.operators;
    if (!(ops.cubic_coeff >= 0.0)) throw ParameterError("solve_rom_nonlinear: cubic coefficient must be non-negative");
    if (guess.size() != v.cols() || ops.stiffness.rows() != v.cols()) throw DimensionError("solve_rom_nonlinear: size mismatch");
    const Vector fr = v.transpose() * ops.force_map(mu);
    const double alpha = ops.cubic_coeff;

    NewtonResult res;
    Vector q = guess;
    for (int it = 0;; ++it) {
        const Vector x = v * q;
        const Vector r = ops.stiffness * q + alpha * (v.transpose() * x.array().cube().matrix()) - fr;
        res.residual = r.cwiseAbs().maxCoeff();
        res.residual_history.push_back(res.residual);
        res.iterations = it;
        if (res.residual <= opts.tolerance) {
            res.solution = q;
            return res;
        }
        if (it >= opts.max_iterations) {
            throw IterationError("solve_rom_nonlinear: Newton did not converge", res.residual, it);
        }
        const Vector w = 3.0 * alpha * x.array().square();
        const Matrix jac = ops.stiffness + v.transpose() * w.asDiagonal() * v;
        q -= detail::symmetric_solve(jac, r, "solve_rom_nonlinear");
    }
}

inline Vector solve_rom_nonlinear(const ReducedSystem<CubicOperators>& rom, const Vector& mu, const Vector& guess,
                                  double tol = 1e-10, int max_iter = 50) {
    return newton_rom_cubic(rom, mu, guess, NewtonOptions{tol, max_iter}).solution;
}

/// Convenience form: reduce, then solve from the zero guess.
inline Vector solve_rom_nonlinear(const SubspaceBasis& basis, const NonlinearCubicSystem& sys, const Vector& mu,
                                  double tol = 1e-10, int max_iter = 50) {
    const auto rom = galerkin_reduce(sys, basis);
    return solve_rom_nonlinear(rom, mu, Vector::Zero(basis.dim()), tol, max_iter);
}

// ---------------------------------------------------------------------------
// Dynamics

struct Trajectory {
    Vector times;
    Matrix x;  // dim x steps
    Matrix v;
    Matrix a;

    Index steps() const { return times.size(); }
};

struct NewmarkParams {
    double gamma = 0.5;
    double beta = 0.25;
};

/// Number of grid points floor(t_end / dt) + 1, robust to dt not dividing
/// t_end exactly in binary.
inline Index newmark_step_count(double dt, double t_end) {
    return static_cast<Index>(std::floor(t_end / dt * (1.0 + 1e-12))) + 1;
}

/// Implicit Newmark integration on the uniform grid t_j = j dt.
inline Trajectory newmark_integrate(const LinearDynamicSystem& sys, double dt, double t_end, NewmarkParams p = {}) {
    if (!(dt > 0.0)) throw ParameterError("newmark_integrate: dt must be positive");
    if (!(p.beta > 0.0)) throw ParameterError("newmark_integrate: beta_nm must be positive");
    if (!(t_end >= 0.0)) throw ParameterError("newmark_integrate: t_end must be non-negative");
    const Index n = sys.dim();
    if (sys.mass.rows() != n || sys.damping.rows() != n || sys.load.shape.size() != n) {
        throw DimensionError("newmark_integrate: operator sizes differ");
    }
    const Index steps = newmark_step_count(dt, t_end);
    Trajectory tr;
    tr.times.resize(steps);
    for (Index j = 0; j < steps; ++j) tr.times(j) = dt * static_cast<double>(j);
    tr.x.resize(n, steps);
    tr.v.resize(n, steps);
    tr.a.resize(n, steps);

    const Matrix& m = sys.mass;
    const Matrix& c = sys.damping;
    const Matrix& k = sys.stiffness;
    const Vector x0 = sys.x0.size() == n ? sys.x0 : Vector::Zero(n);
    const Vector v0 = sys.v0.size() == n ? sys.v0 : Vector::Zero(n);

    Eigen::LLT<Matrix> mass_ldlt(m);
    if (mass_ldlt.info() != Eigen::Success) {
        throw SingularityError("newmark_integrate: mass matrix is not positive definite");
    }
    tr.x.col(0) = x0;
    tr.v.col(0) = v0;
    tr.a.col(0) = mass_ldlt.solve(sys.load.at(0.0) - c * v0 - k * x0);

    const double a0 = 1.0 / (p.beta * dt * dt);
    const double a1 = p.gamma / (p.beta * dt);
    const double a2 = 1.0 / (p.beta * dt);
    const double a3 = 1.0 / (2.0 * p.beta) - 1.0;
    const double a4 = p.gamma / p.beta - 1.0;
    const double a5 = dt * (p.gamma / (2.0 * p.beta) - 1.0);

    const Matrix k_eff = k + a1 * c + a0 * m;
    Eigen::LDLT<Matrix> eff(k_eff);
    {
        const Vector d = eff.vectorD().cwiseAbs();
        if (eff.info() != Eigen::Success || !(d.minCoeff() > 1e-14 * d.maxCoeff())) {
            throw SingularityError("newmark_integrate: effective stiffness is singular");
        }
    }

    for (Index j = 0; j + 1 < steps; ++j) {
        const auto xn = tr.x.col(j);
        const auto vn = tr.v.col(j);
        const auto an = tr.a.col(j);
        const Vector rhs = sys.load.at(tr.times(j + 1)) + m * (a0 * xn + a2 * vn + a3 * an) + c * (a1 * xn + a4 * vn + a5 * an);
        const Vector xn1 = eff.solve(rhs);
        const Vector an1 = a0 * (xn1 - xn) - a2 * vn - a3 * an;
        tr.v.col(j + 1) = vn + dt * ((1.0 - p.gamma) * an + p.gamma * an1);
        tr.a.col(j + 1) = an1;
        tr.x.col(j + 1) = xn1;
    }
    return tr;
}

inline Trajectory newmark_integrate(const ReducedSystem<LinearDynamicSystem>& rom, double dt, double t_end,
                                    NewmarkParams p = {}) {
    return newmark_integrate(rom.operators, dt, t_end, p);
}

// ---------------------------------------------------------------------------
// Reconstruction

inline Vector reconstruct(const Matrix& basis, const Vector& q) {
    if (basis.cols() != q.size()) throw DimensionError("reconstruct: basis/coordinate size mismatch");
    return basis * q;
}

inline Trajectory reconstruct(const Matrix& basis, const Trajectory& reduced) {
    if (basis.cols() != reduced.x.rows()) throw DimensionError("reconstruct: basis/trajectory size mismatch");
    return Trajectory{reduced.times, basis * reduced.x, basis * reduced.v, basis * reduced.a};
}

}  // namespace sspod

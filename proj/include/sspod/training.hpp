#pragma once

// Training of the concentration beta: Monte-Carlo estimates of
// f(beta) = E[ |d_o(u_L) - d_o(u_E)|^2 | beta ], memoized at integer beta,
// linearly interpolated in between, and minimized by bounded Brent search.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sspod/errors.hpp"
#include "sspod/parallel.hpp"
#include "sspod/random.hpp"
#include "sspod/subspace.hpp"

namespace sspod {

/// Reference prediction u_L^o and observation u_E on a common grid, with
/// optional quadrature weights for the discrete L2 norm.
struct DistanceObservables {
    Vector reference;
    Vector truth;
    Vector weights;  // empty: unit weights

    void validate() const {
        if (reference.size() != truth.size()) throw DimensionError("DistanceObservables: reference/truth lengths differ");
        if (weights.size() != 0) {
            if (weights.size() != reference.size()) throw DimensionError("DistanceObservables: weight length differs");
            if (!(weights.minCoeff() > 0.0)) throw ParameterError("DistanceObservables: weights must be positive");
        }
    }
};

/// d_o(u) = sqrt(sum_i w_i (u_i - u_ref_i)^2).
inline double observed_distance(const Vector& u, const DistanceObservables& obs) {
    if (u.size() != obs.reference.size()) throw DimensionError("observed_distance: length mismatch");
    const Vector diff = u - obs.reference;
    if (obs.weights.size() == 0) return diff.norm();
    if (obs.weights.size() != u.size()) throw DimensionError("observed_distance: weight length mismatch");
    return std::sqrt(obs.weights.dot(diff.cwiseAbs2()));
}

/// Composite trapezoid weights on a (possibly nonuniform) grid.
inline Vector trapezoid_weights(const Vector& grid) {
    const Index g = grid.size();
    if (g < 2) throw DimensionError("trapezoid_weights: need at least two grid points");
    Vector w = Vector::Zero(g);
    for (Index i = 0; i + 1 < g; ++i) {
        const double h = grid(i + 1) - grid(i);
        if (!(h > 0.0)) throw ParameterError("trapezoid_weights: grid must be strictly increasing");
        w(i) += 0.5 * h;
        w(i + 1) += 0.5 * h;
    }
    return w;
}

struct ObjectiveEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

/// predict(beta, stream) returns one prediction per observation set, in the
/// order of `obs`. For each draw the squared discrepancy is averaged over the
/// observation sets; the estimate is the mean over draws.
template <class Predict>
ObjectiveEstimate estimate_objective(double beta, Predict&& predict, const std::vector<DistanceObservables>& obs,
                                     std::size_t mc_samples, std::uint64_t seed, unsigned threads = 1) {
    if (mc_samples < 2) throw ParameterError("estimate_objective: need at least two Monte-Carlo samples");
    if (obs.empty()) throw ParameterError("estimate_objective: no observations");
    std::vector<double> truth_distance(obs.size());
    for (std::size_t j = 0; j < obs.size(); ++j) {
        obs[j].validate();
        truth_distance[j] = observed_distance(obs[j].truth, obs[j]);
    }
    std::vector<double> per_draw(mc_samples);
    parallel_for(mc_samples, threads, [&](std::size_t i) {
        const std::vector<Vector> u = predict(beta, RandomStream{seed, i});
        if (u.size() != obs.size()) throw DimensionError("estimate_objective: prediction count differs from observations");
        double acc = 0.0;
        for (std::size_t j = 0; j < obs.size(); ++j) {
            const double d = observed_distance(u[j], obs[j]) - truth_distance[j];
            acc += d * d;
        }
        per_draw[i] = acc / static_cast<double>(obs.size());
    });
    double mean = 0.0;
    for (double v : per_draw) mean += v;
    mean /= static_cast<double>(mc_samples);
    double ss = 0.0;
    for (double v : per_draw) ss += (v - mean) * (v - mean);
    const double n = static_cast<double>(mc_samples);
    return {mean, std::sqrt(ss / (n - 1.0) / n), mc_samples, seed};
}

using ObjectiveEvaluator = std::function<ObjectiveEstimate(double beta)>;

/// Memoized Monte-Carlo estimates at integer beta. All entries share one
/// (sample count, seed) pair.
class ObjectiveCache {
public:
    struct Entry {
        double value;
        std::size_t samples;
        std::uint64_t seed;
    };

    ObjectiveCache() = default;

    /// Cached value at integer beta, evaluating on first request.
    double at(long beta, const ObjectiveEvaluator& evaluate) {
        if (auto it = entries_.find(beta); it != entries_.end()) {
            ++hits_;
            return it->second.value;
        }
        const ObjectiveEstimate est = evaluate(static_cast<double>(beta));
        if (!entries_.empty()) {
            const Entry& first = entries_.begin()->second;
            if (first.samples != est.samples || first.seed != est.seed) {
                throw ParameterError("ObjectiveCache: evaluator changed sample count or seed between entries");
            }
        }
        entries_.emplace(beta, Entry{est.value, est.samples, est.seed});
        ++evaluations_;
        return est.value;
    }

    bool contains(long beta) const { return entries_.count(beta) != 0; }
    const std::map<long, Entry>& entries() const { return entries_; }
    std::size_t evaluations() const { return evaluations_; }
    std::size_t hits() const { return hits_; }

private:
    std::map<long, Entry> entries_;
    std::size_t evaluations_ = 0;
    std::size_t hits_ = 0;
};

/// Linear interpolation of the cached objective between floor(beta) and ceil(beta).
inline double interpolated_objective(double beta, ObjectiveCache& cache, const ObjectiveEvaluator& evaluate) {
    const double lo = std::floor(beta);
    const double hi = std::ceil(beta);
    const double f_lo = cache.at(static_cast<long>(lo), evaluate);
    if (lo == hi) return f_lo;
    const double f_hi = cache.at(static_cast<long>(hi), evaluate);
    const double t = beta - lo;
    return (1.0 - t) * f_lo + t * f_hi;
}

struct BoundedMinimum {
    double x = 0.0;
    double fx = 0.0;
    int evaluations = 0;
    bool converged = false;
};

/// Bounded Brent minimization (golden-section steps with successive
/// parabolic interpolation) on [a, b]. Stops when the bracket is within
/// 2 (sqrt(eps) |x| + xtol / 3) of the current best point, or after
/// `max_evaluations` function calls.
template <class F>
BoundedMinimum brent_bounded(F&& f, double a, double b, double xtol, int max_evaluations) {
    if (!(a <= b)) throw ParameterError("brent_bounded: lower bound exceeds upper bound");
    if (!(xtol > 0.0)) throw ParameterError("brent_bounded: tolerance must be positive");
    const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
    const double golden_mean = 0.5 * (3.0 - std::sqrt(5.0));

    double fulc = a + golden_mean * (b - a);
    double nfc = fulc;
    double xf = fulc;
    double rat = 0.0;
    double e = 0.0;
    double fx = f(xf);
    int num = 1;
    double ffulc = fx;
    double fnfc = fx;
    double xm = 0.5 * (a + b);
    double tol1 = sqrt_eps * std::abs(xf) + xtol / 3.0;
    double tol2 = 2.0 * tol1;
    bool converged = true;

    auto sign_nonzero = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 1.0); };

    while (std::abs(xf - xm) > (tol2 - 0.5 * (b - a))) {
        if (num >= max_evaluations) {
            converged = false;
            break;
        }
        bool golden = true;
        if (std::abs(e) > tol1) {
            golden = false;
            double r = (xf - nfc) * (fx - ffulc);
            double q = (xf - fulc) * (fx - fnfc);
            double p = (xf - fulc) * q - (xf - nfc) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            r = e;
            e = rat;
            if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - xf) && p < q * (b - xf)) {
                rat = p / q;
                const double x = xf + rat;
                if ((x - a) < tol2 || (b - x) < tol2) rat = tol1 * sign_nonzero(xm - xf);
            } else {
                golden = true;
            }
        }
        if (golden) {
            e = (xf >= xm) ? a - xf : b - xf;
            rat = golden_mean * e;
        }
        const double x = xf + sign_nonzero(rat) * std::max(std::abs(rat), tol1);
        const double fu = f(x);
        ++num;
        if (fu <= fx) {
            if (x >= xf) {
                a = xf;
            } else {
                b = xf;
            }
            fulc = nfc;
            ffulc = fnfc;
            nfc = xf;
            fnfc = fx;
            xf = x;
            fx = fu;
        } else {
            if (x < xf) {
                a = x;
            } else {
                b = x;
            }
            if (fu <= fnfc || nfc == xf) {
                fulc = nfc;
                ffulc = fnfc;
                nfc = x;
                fnfc = fu;
            } else if (fu <= ffulc || fulc == xf || fulc == nfc) {
                fulc = x;
                ffulc = fu;
            }
        }
        xm = 0.5 * (a + b);
        tol1 = sqrt_eps * std::abs(xf) + xtol / 3.0;
        tol2 = 2.0 * tol1;
    }
    return {xf, fx, num, converged};
}

struct RefinementConfig {
    bool enabled = false;
    double half_width = 1.0;
    std::size_t mc_samples = 100000;
    double tolerance = 1e-10;
};

struct TrainingConfig {
    std::size_t mc_samples = 1000;
    double beta_lower = 1.0;  // k
    double beta_upper = 10.0;
    double tolerance = 1e-3;
    int max_iterations = 100;
    RefinementConfig refinement;

    void validate() const {
        if (!(beta_lower <= beta_upper)) throw ParameterError("TrainingConfig: beta bounds are not ordered");
        if (!(beta_lower >= 1.0)) throw ParameterError("TrainingConfig: lower beta bound must be >= 1");
        if (mc_samples < 2 || (refinement.enabled && refinement.mc_samples < 2)) {
            throw ParameterError("TrainingConfig: Monte-Carlo sample counts must be >= 2");
        }
        if (!(tolerance > 0.0) || (refinement.enabled && !(refinement.tolerance > 0.0))) {
            throw ParameterError("TrainingConfig: tolerances must be positive");
        }
        if (refinement.enabled && !(refinement.half_width >= 0.0)) {
            throw ParameterError("TrainingConfig: refinement half-width must be non-negative");
        }
    }
};

struct TraceEntry {
    int iteration = 0;
    double beta = 0.0;
    double value = 0.0;
    std::size_t mc_samples = 0;
    std::uint64_t seed = 0;
};

struct TrainingResult {
    double beta = 0.0;
    double value = 0.0;
    bool converged = true;
    std::vector<TraceEntry> trace;
    std::size_t objective_evaluations = 0;  // Monte-Carlo estimates actually computed
};

/// Integer-stage training: bounded Brent search on the interpolated
/// objective. The interpolant is piecewise linear, so its minimizer is an
/// integer node; the search result is snapped to the better of the two
/// integers bracketing it (both already cached).
inline TrainingResult optimize_beta(const TrainingConfig& config, const ObjectiveEvaluator& evaluate,
                                    ObjectiveCache* shared_cache = nullptr) {
    config.validate();
    ObjectiveCache local;
    ObjectiveCache& cache = shared_cache != nullptr ? *shared_cache : local;
    const std::size_t before = cache.evaluations();
    TrainingResult out;
    auto objective = [&](double beta) {
        const double v = interpolated_objective(beta, cache, evaluate);
        const auto& first = cache.entries().begin()->second;
        out.trace.push_back({static_cast<int>(out.trace.size()), beta, v, first.samples, first.seed});
        return v;
    };
    const double lo = std::ceil(config.beta_lower);
    const double hi = std::floor(config.beta_upper);
    if (!(lo <= hi)) throw ParameterError("optimize_beta: no integer lies within the beta bounds");
    const BoundedMinimum m = brent_bounded(objective, lo, hi, config.tolerance, config.max_iterations);

    const double f_lo = interpolated_objective(std::floor(m.x), cache, evaluate);
    const double f_hi = interpolated_objective(std::ceil(m.x), cache, evaluate);
    out.beta = (f_hi < f_lo) ? std::ceil(m.x) : std::floor(m.x);
    out.value = std::min(f_lo, f_hi);
    out.converged = m.converged;
    out.objective_evaluations = cache.evaluations() - before;
    return out;
}

/// Real-valued refinement in [beta_int - w, beta_int + w] clipped to the
/// bounds, evaluating the objective directly (fractional sampling, no
/// interpolation) with the refinement sample count.
inline TrainingResult refine_beta_real(double beta_int, const TrainingConfig& config, const ObjectiveEvaluator& evaluate) {
    config.validate();
    const double lo = std::max(config.beta_lower, beta_int - config.refinement.half_width);
    const double hi = std::min(config.beta_upper, beta_int + config.refinement.half_width);
    if (!(lo <= hi)) throw ParameterError("refine_beta_real: refinement window is empty");
    TrainingResult out;
    if (lo == hi) {
        out.beta = beta_int;
        return out;
    }
    auto objective = [&](double beta) {
        const ObjectiveEstimate e = evaluate(beta);
        out.trace.push_back({static_cast<int>(out.trace.size()), beta, e.value, e.samples, e.seed});
        ++out.objective_evaluations;
        return e.value;
    };
    const BoundedMinimum m = brent_bounded(objective, lo, hi, config.refinement.tolerance, config.max_iterations);
    out.beta = m.x;
    out.value = m.fx;
    out.converged = m.converged;
    return out;
}

}  // namespace sspod

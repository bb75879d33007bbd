#pragma once

// Stochastic ROM ensembles and their prediction statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sspod/errors.hpp"
#include "sspod/parallel.hpp"
#include "sspod/random.hpp"
#include "sspod/rom.hpp"
#include "sspod/subspace.hpp"

namespace sspod {

enum class QoiKind { FullState, Dof, Sparse };

/// Which scalar outputs to read off a solution, and their evaluation grid
/// (spatial indices or time stamps).
struct QoiExtractor {
    QoiKind kind = QoiKind::FullState;
    std::vector<Index> indices;  // Dof: one entry; Sparse: several
    int derivative = 0;          // Dof on a trajectory: 0 displacement, 1 velocity, 2 acceleration
    Vector grid;

    Index size() const { return grid.size(); }

    void validate(Index state_dim) const {
        for (Index i : indices) {
            if (i < 0 || i >= state_dim) throw DimensionError("QoiExtractor: index out of range");
        }
        if (kind == QoiKind::Dof && indices.size() != 1) throw ParameterError("QoiExtractor: Dof kind needs one index");
        if (derivative < 0 || derivative > 2) throw ParameterError("QoiExtractor: derivative order must be 0, 1 or 2");
        for (Index i = 1; i < grid.size(); ++i) {
            if (!(grid(i) > grid(i - 1))) throw ParameterError("QoiExtractor: grid must be strictly increasing");
        }
    }

    static QoiExtractor full_state(Index n) {
        QoiExtractor q;
        q.kind = QoiKind::FullState;
        q.grid = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
        return q;
    }

    static QoiExtractor sparse(std::vector<Index> idx) {
        QoiExtractor q;
        q.kind = QoiKind::Sparse;
        q.grid.resize(static_cast<Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) q.grid(static_cast<Index>(i)) = static_cast<double>(idx[i]);
        q.indices = std::move(idx);
        return q;
    }

    static QoiExtractor dof(Index index, int derivative, const Vector& times) {
        QoiExtractor q;
        q.kind = QoiKind::Dof;
        q.indices = {index};
        q.derivative = derivative;
        q.grid = times;
        return q;
    }

    /// Static state (full space).
    Vector extract(const Vector& x) const {
        switch (kind) {
            case QoiKind::FullState: return x;
            case QoiKind::Sparse: {
                Vector out(static_cast<Index>(indices.size()));
                for (std::size_t i = 0; i < indices.size(); ++i) out(static_cast<Index>(i)) = x(indices[i]);
                return out;
            }
            case QoiKind::Dof: return Vector::Constant(1, x(indices.front()));
        }
        return {};
    }

    /// Static state given in reduced coordinates: only the needed rows of
    /// the basis are touched.
    Vector extract(const Matrix& basis, const Vector& q) const {
        if (kind == QoiKind::FullState) return basis * q;
        Vector out(static_cast<Index>(indices.size()));
        for (std::size_t i = 0; i < indices.size(); ++i) out(static_cast<Index>(i)) = basis.row(indices[i]).dot(q);
        return out;
    }

    /// Time history of one DoF from a full-space trajectory.
    Vector extract(const Trajectory& tr) const {
        if (kind != QoiKind::Dof) throw ParameterError("QoiExtractor: trajectories need the Dof kind");
        const Matrix& m = derivative == 0 ? tr.x : (derivative == 1 ? tr.v : tr.a);
        return m.row(indices.front()).transpose();
    }

    /// Time history of one DoF from a reduced trajectory, x = basis q.
    Vector extract(const Matrix& basis, const Trajectory& reduced) const {
        if (kind != QoiKind::Dof) throw ParameterError("QoiExtractor: trajectories need the Dof kind");
        const Matrix& m = derivative == 0 ? reduced.x : (derivative == 1 ? reduced.v : reduced.a);
        return (basis.row(indices.front()) * m).transpose();
    }
};

enum class FailurePolicy { Abort, DropAndRecord };

struct EnsembleOptions {
    unsigned threads = 1;
    FailurePolicy failure_policy = FailurePolicy::Abort;
};

/// Row i holds the QoI of the SROM realization drawn from stream index
/// `stream_indices[i]` of `master_seed`.
struct EnsemblePrediction {
    Matrix samples;  // count x grid
    std::vector<std::uint64_t> stream_indices;
    std::vector<std::uint64_t> dropped;  // indices removed under DropAndRecord
    std::vector<std::string> drop_reasons;
    std::uint64_t master_seed = 0;

    Index count() const { return samples.rows(); }
    Index grid_size() const { return samples.cols(); }
};

/// Drive `count` SROM realizations: draw(stream) -> basis, solve(basis) -> QoI.
/// Rows come out in stream-index order whatever the thread count.
template <class Draw, class Solve>
EnsemblePrediction run_srom(Draw&& draw, Solve&& solve, std::size_t count, std::uint64_t master_seed,
                            const EnsembleOptions& opts = {}) {
    if (count < 2) throw ParameterError("run_srom: count must be >= 2");
    std::vector<Vector> rows(count);
    std::vector<std::optional<std::string>> failures(count);
    parallel_for(count, opts.threads, [&](std::size_t i) {
        try {
            rows[i] = solve(draw(RandomStream{master_seed, i}));
        } catch (const std::exception& e) {
            if (opts.failure_policy == FailurePolicy::Abort) throw SampleError(i, e.what());
            failures[i] = e.what();
        }
    });

    EnsemblePrediction out;
    out.master_seed = master_seed;
    Index grid = -1;
    for (std::size_t i = 0; i < count; ++i) {
        if (failures[i]) {
            out.dropped.push_back(i);
            out.drop_reasons.push_back(*failures[i]);
            continue;
        }
        if (grid < 0) grid = rows[i].size();
        if (rows[i].size() != grid) throw DimensionError("run_srom: realizations returned QoIs of different length");
        out.stream_indices.push_back(i);
    }
    if (out.stream_indices.size() < 2) throw Error("run_srom: fewer than two realizations succeeded");
    out.samples.resize(static_cast<Index>(out.stream_indices.size()), grid);
    for (std::size_t r = 0; r < out.stream_indices.size(); ++r) {
        out.samples.row(static_cast<Index>(r)) = rows[out.stream_indices[r]].transpose();
    }
    return out;
}

/// Split an ensemble whose rows concatenate several QoIs into one ensemble
/// per QoI (`widths` sums to the grid size).
inline std::vector<EnsemblePrediction> split_columns(const EnsemblePrediction& joint, const std::vector<Index>& widths) {
    std::vector<EnsemblePrediction> out;
    Index offset = 0;
    for (Index w : widths) {
        EnsemblePrediction part = joint;
        part.samples = joint.samples.middleCols(offset, w);
        offset += w;
        out.push_back(std::move(part));
    }
    if (offset != joint.grid_size()) throw DimensionError("split_columns: widths do not match the grid size");
    return out;
}

struct PredictionSummary {
    Vector mean;
    Vector std;
    Vector lower;
    Vector upper;
    double level = 0.95;

    Index size() const { return mean.size(); }
};

/// Empirical p-quantile of sorted data, linear interpolation between order
/// statistics at position (N-1) p.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Pointwise mean, standard deviation and central `level` prediction interval.
inline PredictionSummary summarize(const EnsemblePrediction& ens, double level) {
    if (ens.count() < 2) throw ParameterError("summarize: need at least two realizations");
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("summarize: level must lie in (0, 1)");
    const Index g = ens.grid_size();
    const Index count = ens.count();
    PredictionSummary s;
    s.level = level;
    s.mean = ens.samples.colwise().mean().transpose();
    s.std.resize(g);
    s.lower.resize(g);
    s.upper.resize(g);
    const double tail = 0.5 * (1.0 - level);
    std::vector<double> col(static_cast<std::size_t>(count));
    for (Index j = 0; j < g; ++j) {
        double ss = 0.0;
        for (Index i = 0; i < count; ++i) {
            const double v = ens.samples(i, j);
            col[static_cast<std::size_t>(i)] = v;
            ss += (v - s.mean(j)) * (v - s.mean(j));
        }
        s.std(j) = std::sqrt(ss / static_cast<double>(count - 1));
        std::sort(col.begin(), col.end());
        s.lower(j) = sorted_quantile(col, tail);
        s.upper(j) = sorted_quantile(col, 1.0 - tail);
    }
    return s;
}

struct CoverageReport {
    double coverage = 0.0;
    double mean_pi_width = 0.0;
    Index points_total = 0;
    Index points_inside = 0;
};

/// Fraction of truth values inside the closed interval [lower, upper].
inline CoverageReport coverage(const PredictionSummary& s, const Vector& truth) {
    if (truth.size() != s.size()) throw DimensionError("coverage: truth and summary grids differ");
    if (truth.size() == 0) throw DimensionError("coverage: empty grid");
    CoverageReport r;
    r.points_total = truth.size();
    for (Index j = 0; j < truth.size(); ++j) {
        if (s.lower(j) <= truth(j) && truth(j) <= s.upper(j)) ++r.points_inside;
    }
    r.coverage = static_cast<double>(r.points_inside) / static_cast<double>(r.points_total);
    r.mean_pi_width = (s.upper - s.lower).mean();
    return r;
}

}  // namespace sspod

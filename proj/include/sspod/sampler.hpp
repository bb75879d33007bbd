#pragma once

// Random principal subspaces from MACG_{n,k,beta}(S): the subspace spanned
// by the k leading left singular vectors of a centered beta-sample drawn
// from N(0, S). Sampling happens in the r-dimensional eigen-coordinates of
// S and is lifted by the POD modes afterwards.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sspod/parallel.hpp"
#include "sspod/random.hpp"
#include "sspod/subspace.hpp"

namespace sspod {

/// Scale spectrum s (square roots of the covariance eigenvalues), subspace
/// dimension k and concentration beta of MACG_{r,k,beta}(diag(s)^2).
struct SsppcaModel {
    Vector scales;
    Index k = 1;
    double beta = 1.0;

    Index rank() const { return scales.size(); }
    bool integer_beta() const { return beta == std::floor(beta); }

    void validate() const {
        const Index r = scales.size();
        if (r == 0) throw ParameterError("SsppcaModel: empty scale vector");
        for (Index i = 0; i < r; ++i) {
            if (!(scales(i) > 0.0)) throw ParameterError("SsppcaModel: scales must be strictly positive");
            if (i > 0 && scales(i) > scales(i - 1)) throw ParameterError("SsppcaModel: scales must be non-increasing");
        }
        if (k < 1 || k > r) throw ParameterError("SsppcaModel: k must lie in [1, r]");
        if (!(beta >= static_cast<double>(k)) || !std::isfinite(beta)) {
            throw ParameterError("SsppcaModel: beta must be finite and >= k");
        }
    }

    /// Model from a POD: scales are sqrt(sigma_i^2 / m).
    static SsppcaModel from_pod(const PodDecomposition& pod, Index sample_count, Index k, double beta) {
        SsppcaModel model{pod.covariance_eigenvalues(sample_count).cwiseSqrt(), k, beta};
        model.validate();
        return model;
    }
};

/// Gaussian sample with ceil(beta) columns, drawn column by column. For a
/// non-integer beta the final column is weighted by beta - floor(beta).
inline Matrix draw_resample_matrix(const SsppcaModel& model, const RandomStream& stream) {
    const auto columns = static_cast<Index>(std::ceil(model.beta));
    StreamEngine engine(stream);
    Matrix z = engine.normal_matrix(model.rank(), columns);
    if (!model.integer_beta()) z.col(columns - 1) *= model.beta - std::floor(model.beta);
    return z;
}

/// One draw from MACG_{r,k,beta}(diag(s)^2) with integer beta: the k leading
/// left singular vectors of diag(s) Z, Z an r x beta standard Gaussian.
inline SubspaceBasis sample_reduced(const SsppcaModel& model, const RandomStream& stream) {
    model.validate();
    if (!model.integer_beta()) throw ParameterError("sample_reduced: beta must be an integer (use sample_fractional)");
    const Matrix m = model.scales.asDiagonal() * draw_resample_matrix(model, stream);
    return principal_subspace_map(m, model.k);
}

/// Real-valued beta. Integer beta reproduces sample_reduced exactly.
inline SubspaceBasis sample_fractional(const SsppcaModel& model, const RandomStream& stream) {
    model.validate();
    if (model.integer_beta()) return sample_reduced(model, stream);
    const Matrix m = model.scales.asDiagonal() * draw_resample_matrix(model, stream);
    return principal_subspace_map(m, model.k);
}

/// Draw in eigen-coordinates, integer or fractional beta alike.
inline SubspaceBasis sample_reduced_any(const SsppcaModel& model, const RandomStream& stream) {
    return model.integer_beta() ? sample_reduced(model, stream) : sample_fractional(model, stream);
}

namespace detail {

inline void require_orthonormal_modes(const Matrix& modes, Index r) {
    if (modes.cols() != r) {
        throw DimensionError("sample_ambient: modes have " + std::to_string(modes.cols()) + " columns, model rank is " +
                             std::to_string(r));
    }
    if (orthonormality_error(modes) > 1e-10 * std::sqrt(static_cast<double>(r))) {
        throw PreconditionError("sample_ambient: modes are not orthonormal");
    }
}

}  // namespace detail

/// W = V_r U_k: a draw from MACG_{n,k,beta}(V_r diag(s)^2 V_r^T).
inline SubspaceBasis sample_ambient(const SsppcaModel& model, const Matrix& modes, const RandomStream& stream) {
    detail::require_orthonormal_modes(modes, model.rank());
    return SubspaceBasis{modes * sample_reduced_any(model, stream).basis};
}

/// Reduced draws U_k for stream indices 0..count-1, in index order.
inline std::vector<SubspaceBasis> sample_reduced_ensemble(const SsppcaModel& model, std::size_t count,
                                                          std::uint64_t master_seed, unsigned threads = 1) {
    model.validate();
    std::vector<SubspaceBasis> out(count);
    parallel_for(count, threads, [&](std::size_t i) { out[i] = sample_reduced_any(model, RandomStream{master_seed, i}); });
    return out;
}

/// Ambient draws W_i = V_r U_k^{(i)}; sample i uses stream index i.
inline std::vector<SubspaceBasis> sample_ensemble(const SsppcaModel& model, const Matrix& modes, std::size_t count,
                                                  std::uint64_t master_seed, unsigned threads = 1) {
    if (count < 1) throw ParameterError("sample_ensemble: count must be >= 1");
    model.validate();
    detail::require_orthonormal_modes(modes, model.rank());
    std::vector<SubspaceBasis> out(count);
    parallel_for(count, threads, [&](std::size_t i) {
        out[i] = SubspaceBasis{modes * sample_reduced_any(model, RandomStream{master_seed, i}).basis};
    });
    return out;
}

}  // namespace sspod

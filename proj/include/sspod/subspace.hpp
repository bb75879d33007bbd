#pragma once

// Deterministic linear-algebra foundation: snapshot centering, compact SVD
// (POD), orthonormalization maps, closed-form PPCA estimates and the MACG
// log-density on the Grassmann manifold.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "sspod/errors.hpp"

namespace sspod {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Singular values at or below this fraction of the largest are dropped.
inline constexpr double kRankTolerance = 1e-12;
/// Minimum relative separation sigma_k - sigma_{k+1} for the principal map.
inline constexpr double kGapTolerance = 1e-12;

struct SnapshotSet {
    Matrix data;      // n x m, one state per column
    Vector mean;      // n
    Matrix centered;  // data - mean * 1^T
};

struct PodDecomposition {
    Matrix modes;            // n x r, orthonormal columns
    Vector singular_values;  // r, positive, non-increasing
    Matrix right_vectors;    // m x r
    Index rank = 0;

    /// Eigenvalues of the sample covariance (1/m) X0 X0^T: sigma_i^2 / m.
    Vector covariance_eigenvalues(Index sample_count) const {
        return singular_values.array().square() / static_cast<double>(sample_count);
    }
};

/// An orthonormal basis standing for the subspace it spans.
struct SubspaceBasis {
    Matrix basis;  // n x k, basis^T basis = I

    Index ambient_dim() const { return basis.rows(); }
    Index dim() const { return basis.cols(); }
};

/// C = eigvecs diag(eigvals - noise) eigvecs^T + noise I.
///
/// The retained block carries the leading eigenpairs; every direction
/// orthogonal to `eigvecs` has variance `noise_floor`.
struct CovarianceModel {
    Matrix eigvecs;  // n x r orthonormal
    Vector eigvals;  // r, non-increasing, each >= noise_floor
    double noise_floor = 0.0;

    Index ambient_dim() const { return eigvecs.rows(); }

    Matrix dense() const {
        Vector excess = eigvals.array() - noise_floor;
        Matrix c = eigvecs * excess.asDiagonal() * eigvecs.transpose();
        c.diagonal().array() += noise_floor;
        return c;
    }
};

/// ||B^T B - I||_F.
inline double orthonormality_error(const Matrix& b) {
    return (b.transpose() * b - Matrix::Identity(b.cols(), b.cols())).norm();
}

/// Frobenius distance between orthogonal projectors B1 B1^T and B2 B2^T,
/// evaluated without forming n x n matrices.
inline double projector_distance(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("projector_distance: ambient dimensions differ");
    // residual form; k_a + k_b - 2|a'b|^2 cancels catastrophically near zero
    const double d2 = (b - a * (a.transpose() * b)).squaredNorm() + (a - b * (b.transpose() * a)).squaredNorm();
    return std::sqrt(d2);
}

/// Principal angles (ascending) between range(a) and range(b), both orthonormal.
inline Vector principal_angles(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("principal_angles: ambient dimensions differ");
    Eigen::JacobiSVD<Matrix> svd(a.transpose() * b);
    Vector cosines = svd.singularValues();
    Vector angles(cosines.size());
    for (Index i = 0; i < cosines.size(); ++i) {
        angles(i) = std::acos(std::clamp(cosines(i), -1.0, 1.0));
    }
    return angles;
}

namespace detail {

// Flip column signs so that each column's largest-magnitude entry (lowest
// index on ties) is positive. `partner` (e.g. right singular vectors) is
// flipped alongside to keep the factorization intact.
inline void fix_signs(Matrix& cols, Matrix* partner = nullptr) {
    for (Index j = 0; j < cols.cols(); ++j) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index i = 0; i < cols.rows(); ++i) {
            const double v = std::abs(cols(i, j));
            if (v > best_abs) {
                best_abs = v;
                best = i;
            }
        }
        if (cols(best, j) < 0.0) {
            cols.col(j) *= -1.0;
            if (partner != nullptr) partner->col(j) *= -1.0;
        }
    }
}

inline void require_nonempty(const Matrix& m, const char* op) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DimensionError(std::string(op) + ": empty matrix");
    }
}

}  // namespace detail

inline SnapshotSet center(const Matrix& snapshots) {
    detail::require_nonempty(snapshots, "center");
    SnapshotSet out;
    out.data = snapshots;
    out.mean = snapshots.rowwise().mean();
    out.centered = snapshots.colwise() - out.mean;
    return out;
}

/// Compact SVD X0 = V_r diag(sigma_r) W_r^T, discarding sigma_i <= tol * sigma_1.
inline PodDecomposition compact_svd(const Matrix& centered, double rank_tolerance = kRankTolerance) {
    detail::require_nonempty(centered, "compact_svd");
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv(0) > 0.0)) throw RankError("compact_svd: matrix has rank zero");
    Index r = 0;
    while (r < sv.size() && sv(r) > rank_tolerance * sv(0)) ++r;

    PodDecomposition pod;
    pod.rank = r;
    pod.singular_values = sv.head(r);
    pod.modes = svd.matrixU().leftCols(r);
    pod.right_vectors = svd.matrixV().leftCols(r);
    detail::fix_signs(pod.modes, &pod.right_vectors);
    return pod;
}

/// Smallest j with sum_{i<=j} sigma_i^2 >= tau * sum_i sigma_i^2.
inline Index select_rank(const Vector& singular_values, double energy_threshold) {
    if (!(energy_threshold > 0.0 && energy_threshold < 1.0)) {
        throw ParameterError("select_rank: energy threshold must lie in (0, 1)");
    }
    if (singular_values.size() == 0) throw DimensionError("select_rank: empty spectrum");
    const double total = singular_values.squaredNorm();
    double cumulative = 0.0;
    for (Index j = 0; j < singular_values.size(); ++j) {
        cumulative += singular_values(j) * singular_values(j);
        if (cumulative >= energy_threshold * total) return j + 1;
    }
    return singular_values.size();
}

/// pi(M) = M (M^T M)^{-1/2}, evaluated as the orthogonal polar factor U V^T.
inline SubspaceBasis polar_orthonormalize(const Matrix& m) {
    detail::require_nonempty(m, "polar_orthonormalize");
    if (m.cols() > m.rows()) throw DimensionError("polar_orthonormalize: more columns than rows");
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > kRankTolerance * sv(0))) {
        throw SingularityError("polar_orthonormalize: matrix is not of full column rank");
    }
    return SubspaceBasis{svd.matrixU() * svd.matrixV().transpose()};
}

/// pi_k(M): left singular vectors of the k largest singular values.
inline SubspaceBasis principal_subspace_map(const Matrix& m, Index k, double gap_tolerance = kGapTolerance) {
    detail::require_nonempty(m, "principal_subspace_map");
    const Index p = std::min(m.rows(), m.cols());
    if (k < 1 || k > p) throw ParameterError("principal_subspace_map: k must lie in [1, min(n, m)]");
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    const double next = (k < p) ? sv(k) : 0.0;
    if (!(sv(k - 1) - next > gap_tolerance * sv(0))) {
        throw GapError("principal_subspace_map: no spectral gap after singular value " + std::to_string(k));
    }
    Matrix u = svd.matrixU().leftCols(k);
    detail::fix_signs(u);
    return SubspaceBasis{std::move(u)};
}

/// Closed-form PPCA estimate: retained eigenpairs unchanged, noise floor the
/// mean of the trailing n - k eigenvalues. `eigvals` is the full length-n
/// spectrum of the sample covariance. When `eigvecs` is empty the model is
/// expressed in eigen-coordinates (canonical vectors).
inline CovarianceModel ppca_mle(const Vector& eigvals, Index k, const Matrix& eigvecs = Matrix()) {
    const Index n = eigvals.size();
    if (k < 1 || k >= n) throw ParameterError("ppca_mle: latent dimension must satisfy 1 <= k < n");
    for (Index i = 0; i < n; ++i) {
        if (eigvals(i) < 0.0) throw ParameterError("ppca_mle: negative eigenvalue");
        if (i > 0 && eigvals(i) > eigvals(i - 1)) throw ParameterError("ppca_mle: eigenvalues not sorted");
    }
    CovarianceModel model;
    model.noise_floor = eigvals.tail(n - k).mean();
    model.eigvals = eigvals.head(k);
    if (eigvecs.size() == 0) {
        model.eigvecs = Matrix::Identity(n, k);
    } else {
        if (eigvecs.rows() != n || eigvecs.cols() < k) throw DimensionError("ppca_mle: eigenvector block too small");
        model.eigvecs = eigvecs.leftCols(k);
    }
    return model;
}

namespace detail {

inline void require_positive_definite(const CovarianceModel& c, const char* op) {
    const Index n = c.ambient_dim();
    const Index r = c.eigvals.size();
    if (c.eigvecs.cols() != r) throw DimensionError(std::string(op) + ": eigvecs/eigvals size mismatch");
    if (r < n && !(c.noise_floor > 0.0)) {
        throw SingularityError(std::string(op) + ": covariance is singular (zero noise floor on a rank-deficient model)");
    }
    for (Index i = 0; i < r; ++i) {
        if (!(c.eigvals(i) > 0.0)) throw SingularityError(std::string(op) + ": covariance has a zero eigenvalue");
    }
}

inline double log_det(const CovarianceModel& c) {
    const Index n = c.ambient_dim();
    const Index r = c.eigvals.size();
    double out = c.eigvals.array().log().sum();
    if (r < n) out += static_cast<double>(n - r) * std::log(c.noise_floor);
    return out;
}

}  // namespace detail

/// L = -(m/2) [n ln 2pi + ln|C| + tr(C^{-1} S)], where S has eigenvalues
/// `sample_cov_eigvals` and shares its leading eigenvectors with the model.
inline double gaussian_log_likelihood(const Vector& sample_cov_eigvals, const CovarianceModel& model, Index m) {
    const Index n = model.ambient_dim();
    const Index r = model.eigvals.size();
    if (sample_cov_eigvals.size() != n) throw DimensionError("gaussian_log_likelihood: spectrum length differs from n");
    detail::require_positive_definite(model, "gaussian_log_likelihood");
    double trace = (sample_cov_eigvals.head(r).array() / model.eigvals.array()).sum();
    if (r < n) trace += sample_cov_eigvals.tail(n - r).sum() / model.noise_floor;
    const double nd = static_cast<double>(n);
    return -0.5 * static_cast<double>(m) * (nd * std::log(2.0 * std::numbers::pi) + detail::log_det(model) + trace);
}

/// log p(X X^T; Sigma) = -(n/2) ln|X^T Sigma^{-1} X| - (k/2) ln|Sigma|,
/// with respect to the normalized invariant measure on Gr(n, k).
inline double macg_log_pdf(const SubspaceBasis& subspace, const CovarianceModel& sigma) {
    const Index n = sigma.ambient_dim();
    const Index k = subspace.dim();
    if (subspace.ambient_dim() != n) throw DimensionError("macg_log_pdf: subspace and covariance dimensions differ");
    detail::require_positive_definite(sigma, "macg_log_pdf");
    const Index r = sigma.eigvals.size();

    // X^T Sigma^{-1} X = (1/noise) X^T X + Y^T diag(1/lambda - 1/noise) Y, Y = V^T X.
    const Matrix y = sigma.eigvecs.transpose() * subspace.basis;
    Vector weights = sigma.eigvals.cwiseInverse();
    Matrix gram;
    if (r < n) {
        const double inv_noise = 1.0 / sigma.noise_floor;
        weights.array() -= inv_noise;
        gram = inv_noise * (subspace.basis.transpose() * subspace.basis) + y.transpose() * weights.asDiagonal() * y;
    } else {
        gram = y.transpose() * weights.asDiagonal() * y;
    }
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw SingularityError("macg_log_pdf: X^T Sigma^{-1} X is not positive definite");
    double log_det_gram = 0.0;
    for (Index i = 0; i < k; ++i) log_det_gram += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * static_cast<double>(n) * log_det_gram - 0.5 * static_cast<double>(k) * detail::log_det(sigma);
}

}  // namespace sspod

#pragma once

// Dense complex helpers: PSD square roots, range/complement bases, norms,
// seeded random points and unitaries.

#include "kchar/scalar.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace kchar {

inline constexpr double kRankCutoff = 1e-10;
inline constexpr double kClampTolerance = 1e-10;

class NotPositive : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

using VecD = Eigen::VectorXd;

struct PsdRoot {
    MatC root;      // principal square root, eigenvalues below the cutoff dropped
    MatC range;     // orthonormal eigenvectors with eigenvalue > cutoff
    VecD root_values;  // square roots of the kept eigenvalues, matching `range`
    MatC pinv_root;    // Moore-Penrose inverse of `root`
    double min_eigenvalue = 0.0;
};

inline MatC hermitian_part(const MatC& A) { return 0.5 * (A + A.adjoint()); }

/// Principal square root of a Hermitian PSD matrix. Eigenvalues in
/// [-clamp, 0) are treated as zero; anything lower throws.
inline PsdRoot psd_sqrt(const MatC& A, double clamp = kClampTolerance, double cutoff = kRankCutoff,
                        const std::string& what = "matrix") {
    const Eigen::Index n = A.rows();
    PsdRoot out;
    if (n == 0) {
        out.root = out.pinv_root = MatC(0, 0);
        out.range = MatC(0, 0);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(A));
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    const VecD& lam = es.eigenvalues();
    out.min_eigenvalue = lam.minCoeff();
    if (out.min_eigenvalue < -clamp)
        throw NotPositive(what + " has eigenvalue " + std::to_string(out.min_eigenvalue) + " below -" +
                          std::to_string(clamp));
    const MatC& Q = es.eigenvectors();
    // Eigenvalues at or below the cutoff count as zero in the root as well:
    // rounding noise of 1e-16 would otherwise turn into 1e-8 entries.
    VecD root = VecD::Zero(n);
    VecD inv = VecD::Zero(n);
    int kept = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (lam(i) > cutoff) {
            root(i) = std::sqrt(lam(i));
            ++kept;
        }
    out.range = MatC(n, kept);
    out.root_values = VecD(kept);
    // Keep the largest eigenvalues first.
    int col = 0;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (lam(i) > cutoff) {
            out.range.col(col) = Q.col(i);
            out.root_values(col) = root(i);
            inv(i) = 1.0 / root(i);
            ++col;
        }
    }
    out.root = Q * root.cast<Complex>().asDiagonal() * Q.adjoint();
    out.pinv_root = Q * inv.cast<Complex>().asDiagonal() * Q.adjoint();
    return out;
}

inline double opnorm(const MatC& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatC> svd(A);
    return svd.singularValues()(0);
}

inline double min_eigenvalue(const MatC& A) {
    if (A.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(A), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Orthonormal basis of the column space (singular values above cutoff).
inline MatC range_basis(const MatC& A, double cutoff = kRankCutoff) {
    if (A.cols() == 0 || A.rows() == 0) return MatC(A.rows(), 0);
    Eigen::JacobiSVD<MatC> svd(A, Eigen::ComputeThinU);
    const VecD& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    return svd.matrixU().leftCols(rank);
}

/// Orthonormal basis of the orthogonal complement of the column space of A in C^rows.
inline MatC complement_basis(const MatC& A, double cutoff = kRankCutoff) {
    const Eigen::Index n = A.rows();
    if (A.cols() == 0) return MatC::Identity(n, n);
    Eigen::JacobiSVD<MatC> svd(A, Eigen::ComputeFullU);
    const VecD& sv = svd.singularValues();
    int rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    return svd.matrixU().rightCols(n - rank);
}

/// Rotates each column so that its largest-magnitude entry is real positive.
inline void canonicalize_phases(MatC& basis) {
    for (Eigen::Index j = 0; j < basis.cols(); ++j) {
        Eigen::Index best = 0;
        double mag = -1.0;
        for (Eigen::Index i = 0; i < basis.rows(); ++i) {
            // Ties broken towards the first index, with a little slack for rounding.
            if (std::abs(basis(i, j)) > mag + 1e-12) {
                mag = std::abs(basis(i, j));
                best = i;
            }
        }
        if (mag > 0.0) basis.col(j) *= std::conj(basis(best, j)) / mag;
    }
}

inline MatC kron(const MatC& A, const MatC& B) {
    MatC out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

/// Unitary polar factor of a square matrix.
inline MatC polar_unitary(const MatC& A) {
    Eigen::JacobiSVD<MatC> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

inline bool has_orthonormal_columns(const MatC& P, double tol = 1e-10) {
    return (P.adjoint() * P - MatC::Identity(P.cols(), P.cols())).cwiseAbs().maxCoeff() <= tol || P.cols() == 0;
}

using Rng = std::mt19937_64;

inline Complex gaussian_complex(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

inline VecC random_vector(int n, Rng& rng) {
    VecC v(n);
    for (int i = 0; i < n; ++i) v(i) = gaussian_complex(rng);
    return v;
}

inline VecC random_unit_vector(int n, Rng& rng) {
    VecC v = random_vector(n, rng);
    return v / v.norm();
}

/// Haar-distributed unitary from QR of a Ginibre matrix with phase correction.
inline MatC random_unitary(int n, Rng& rng) {
    MatC G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = gaussian_complex(rng);
    Eigen::HouseholderQR<MatC> qr(G);
    MatC Q = qr.householderQ() * MatC::Identity(n, n);
    MatC R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j) {
        const double mag = std::abs(R(j, j));
        if (mag > 0.0) Q.col(j) *= R(j, j) / mag;
    }
    return Q;
}

/// Point in the open ball of C^d with norm uniform in [0, max_radius).
inline VecC random_ball_point(int d, double max_radius, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, max_radius);
    const double r = u(rng);
    return random_unit_vector(d, rng) * r;
}

}  // namespace kchar

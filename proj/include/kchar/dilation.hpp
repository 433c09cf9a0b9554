#pragma once

// The dilation isometry V: H -> H_k (x) Ran Delta,
//     V h = sum_alpha a_alpha z^alpha (x) Delta (T^alpha)* h,
// in the orthonormal basis e(alpha) (x) r_j of the target, together with the
// associated tuple on Ker V*.

#include "kchar/kernel_series.hpp"
#include "kchar/linalg.hpp"
#include "kchar/multiindex.hpp"
#include "kchar/operator_tuple.hpp"

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kchar {

class NotPure : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Coordinates on H_k (x) C^r truncated to degree <= D: block alpha (graded order), r entries each.
struct TargetSpace {
    MultiIndexSet basis;
    int r = 0;

    TargetSpace() = default;
    TargetSpace(int d, int D, int r_) : basis(MultiIndexSet::up_to_degree(d, D)), r(r_) {}

    int size() const { return basis.size() * r; }
    int block(const MultiIndex& alpha) const { return basis.find(alpha) * r; }
    int degree() const { return basis.size() ? basis[basis.size() - 1].degree() : 0; }
};

/// (M_{z_i} (x) I_r) on the truncated target, orthonormal monomial basis.
inline MatC target_shift(const KernelSeries<Rational>& k, const TargetSpace& X, int i) {
    MatC M = MatC::Zero(X.size(), X.size());
    const int D = X.degree();
    for (const auto& alpha : X.basis) {
        if (alpha.degree() == D) continue;
        const MultiIndex next = alpha.plus_unit(i);
        const double w = std::sqrt(to_double(lift_to_multiindex(k.coeffs(), alpha)) /
                                   to_double(lift_to_multiindex(k.coeffs(), next)));
        for (int j = 0; j < X.r; ++j) M(X.block(next) + j, X.block(alpha) + j) = w;
    }
    return M;
}

struct DilationData {
    MatC V;          // target x n
    MatC ran_delta;  // n x r, orthonormal
    MatC delta_r;    // r x n: Delta in Ran Delta coordinates
    TargetSpace target;
    int target_degree = 0;
    int nilpotency = -1;  // -1 when T is not nilpotent
    bool exact = false;   // no truncation loss: nilpotent and target_degree >= p - 1
    double isometry_residual = 0.0;
};

inline DilationData build_dilation(const TupleC& T, const KernelSeries<Rational>& k, const DefectData& defect,
                                   int target_degree, double purity_tol = 1e-10, const SeriesOptions& opt = {}) {
    const auto purity = purity_check(T, k, defect.delta_sq, opt, purity_tol);
    if (!purity.pure) throw NotPure("not pure: purity residual " + std::to_string(purity.residual));
    DilationData D;
    D.ran_delta = defect.ran_delta;
    D.delta_r = defect.ran_delta.adjoint() * defect.delta;
    D.target_degree = target_degree;
    D.target = TargetSpace(T.dim(), target_degree, static_cast<int>(D.ran_delta.cols()));
    const auto p = nilpotency_degree(T);
    D.nilpotency = p ? *p : -1;
    D.exact = p && target_degree >= *p - 1;
    if (target_degree > k.truncation()) throw std::out_of_range("target degree beyond kernel truncation");
    PowerTable<Complex> table(T, target_degree);
    D.V = MatC::Zero(D.target.size(), T.size());
    for (const auto& alpha : D.target.basis) {
        const double a = to_double(lift_to_multiindex(k.coeffs(), alpha));
        D.V.middleRows(D.target.block(alpha), D.target.r) = std::sqrt(a) * D.delta_r * table(alpha).adjoint();
    }
    D.isometry_residual = opnorm(D.V.adjoint() * D.V - MatC::Identity(T.size(), T.size()));
    return D;
}

/// ||V*(M_i (x) I) - T_i V*|| per coordinate, on target columns of degree < target_degree
/// (where the truncated shift is exact).
inline std::vector<double> intertwining_residual(const DilationData& D, const TupleC& T, const KernelSeries<Rational>& k) {
    std::vector<int> cols;
    for (const auto& alpha : D.target.basis)
        if (alpha.degree() < D.target_degree)
            for (int j = 0; j < D.target.r; ++j) cols.push_back(D.target.block(alpha) + j);
    std::vector<double> out;
    const MatC Vs = D.V.adjoint();
    for (int i = 0; i < T.dim(); ++i) {
        const MatC lhs = Vs * target_shift(k, D.target, i);
        const MatC rhs = T[i] * Vs;
        MatC diff(T.size(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) diff.col(static_cast<Eigen::Index>(c)) = lhs.col(cols[c]) - rhs.col(cols[c]);
        out.push_back(opnorm(diff));
    }
    return out;
}

/// k_w (x) xi in target coordinates, truncated to the target degree.
inline VecC kernel_vector(const DilationData& D, const KernelSeries<Rational>& k, const VecC& w, const VecC& xi) {
    VecC out = VecC::Zero(D.target.size());
    for (const auto& alpha : D.target.basis) {
        const double a = to_double(lift_to_multiindex(k.coeffs(), alpha));
        out.segment(D.target.block(alpha), D.target.r) = std::sqrt(a) * std::conj(monomial(w, alpha)) * xi;
    }
    return out;
}

struct KernelVectorAction {
    VecC value;             // k_w(T) Delta xi
    double disagreement = 0.0;  // against V*(k_w (x) xi)
};

/// V*(k_w (x) xi) = k_w(T) Delta xi; both sides are computed and compared.
inline KernelVectorAction kernel_vector_action(const DilationData& D, const TupleC& T, const KernelSeries<Rational>& k,
                                               const VecC& w, const VecC& xi, double tol = 1e-10) {
    if (xi.size() != D.target.r) throw std::invalid_argument("xi must be given in Ran Delta coordinates");
    KernelVectorAction out;
    const VecC lhs = D.V.adjoint() * kernel_vector(D, k, w, xi);
    out.value = operator_series(T, k.coeffs(), w) * D.delta_r.adjoint() * xi;
    out.disagreement = (lhs - out.value).norm();
    if (out.disagreement > tol)
        throw std::runtime_error("V*(k_w (x) xi) and k_w(T) Delta xi disagree by " + std::to_string(out.disagreement) +
                                 "; target degree too small");
    return out;
}

struct AssociatedTupleCertificate {
    int window = 0;
    int kernel_dim = 0;          // dim of Ker V* inside the window
    double min_eigenvalue = 0.0;
    bool holds = true;           // min eigenvalue >= -tol (supporting evidence only)
    bool vacuous = false;        // Ker V* meets the window trivially
    VecC witness;                // eigenvector of the minimum, target coordinates
};

/// Form I - sum_{alpha != 0} b^(l)_alpha B^alpha (B^alpha)* on Ker V* inside the
/// degree window. Since V*(M (x) I) = T V*, Ker V* is invariant and
/// B^alpha* = P_K (M^alpha (x) I)*, so the form only needs adjoint shifts,
/// which never leave the window.
inline AssociatedTupleCertificate associated_tuple_test(const TupleC& T, const KernelSeries<Rational>& k,
                                                        const KernelSeries<Rational>& l, const DefectData& defect,
                                                        int window, double tol = 1e-10) {
    const auto p = nilpotency_degree(T);
    if (!p) throw std::invalid_argument("associated tuple test needs a nilpotent tuple");
    if (window < *p - 1)
        throw std::invalid_argument("window " + std::to_string(window) + " too small to separate Ker V* (need >= " +
                                    std::to_string(*p - 1) + ")");
    const Series<Rational> b = b_series(l);
    if (b.truncation() < window) throw std::out_of_range("l truncation below window");
    const DilationData D = build_dilation(T, k, defect, window);
    AssociatedTupleCertificate cert;
    cert.window = window;
    const MatC Q = complement_basis(D.V);
    cert.kernel_dim = static_cast<int>(Q.cols());
    if (cert.kernel_dim == 0) {
        cert.vacuous = true;
        return cert;
    }
    const int m = D.target.size();
    const MatC PK = MatC::Identity(m, m) - D.V * D.V.adjoint();
    std::vector<MatC> shifts;
    for (int i = 0; i < T.dim(); ++i) shifts.push_back(target_shift(k, D.target, i));
    const TupleC M(shifts);
    PowerTable<Complex> table(M, window);
    MatC F = Q.adjoint() * Q;
    for (const auto& alpha : table.index()) {
        if (alpha.is_zero()) continue;
        const double c = to_double(lift_to_multiindex(b, alpha));
        if (c == 0.0) continue;
        const MatC X = PK * table(alpha).adjoint() * Q;
        F -= c * (X.adjoint() * X);
    }
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(F));
    cert.min_eigenvalue = es.eigenvalues()(0);
    cert.witness = Q * es.eigenvectors().col(0);
    cert.holds = cert.min_eigenvalue >= -tol;
    return cert;
}

}  // namespace kchar

#pragma once

// Commuting operator tuples on a finite basis, model multiplication tuples,
// defect operators and the operator series k_w(T).
//
// Rational tuples live in a basis with diagonal Gram matrix W (the model
// tuples use the monomial basis z^alpha with W = diag(1/a_alpha)); the adjoint
// is then W^{-1} A^H W and no square roots are ever taken. Complex tuples use
// an orthonormal basis.

#include "kchar/kernel_series.hpp"
#include "kchar/linalg.hpp"
#include "kchar/multiindex.hpp"
#include "kchar/scalar.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kchar {

class NotAContraction : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class NoConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SeriesOptions {
    int degree_cap = 64;
    double stop_tol = 1e-13;
    int stable_steps = 3;  // consecutive small increments required to stop
    double psd_tol = kClampTolerance;
};

template <class S>
class OperatorTuple {
public:
    OperatorTuple() = default;

    OperatorTuple(std::vector<Mat<S>> ops, std::vector<MultiIndex> labels = {}, std::vector<S> weights = {})
        : ops_(std::move(ops)), labels_(std::move(labels)), weights_(std::move(weights)) {
        if (ops_.empty()) throw std::invalid_argument("operator tuple needs d >= 1");
        const Eigen::Index n = ops_[0].rows();
        for (const auto& A : ops_)
            if (A.rows() != n || A.cols() != n) throw std::invalid_argument("tuple entries must be square and equal-sized");
        if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != n)
            throw std::invalid_argument("basis label count does not match matrix size");
        if (!weights_.empty()) {
            if (static_cast<Eigen::Index>(weights_.size()) != n) throw std::invalid_argument("weight count mismatch");
            for (const auto& w : weights_)
                if (!(real_part(w) > 0.0)) throw std::invalid_argument("Gram weights must be positive");
        }
        check_commuting();
    }

    int dim() const { return static_cast<int>(ops_.size()); }
    int size() const { return static_cast<int>(ops_[0].rows()); }
    const Mat<S>& operator[](int i) const { return ops_[static_cast<std::size_t>(i)]; }
    const std::vector<Mat<S>>& ops() const { return ops_; }
    const std::vector<MultiIndex>& labels() const { return labels_; }
    const std::vector<S>& weights() const { return weights_; }
    bool orthonormal_basis() const { return weights_.empty(); }

    Mat<S> identity() const { return Mat<S>::Identity(size(), size()); }

    /// Hilbert-space adjoint of a matrix expressed in this tuple's basis.
    Mat<S> adjoint(const Mat<S>& A) const {
        Mat<S> out(A.cols(), A.rows());
        for (Eigen::Index i = 0; i < A.cols(); ++i)
            for (Eigen::Index j = 0; j < A.rows(); ++j) {
                out(i, j) = conj(A(j, i));
                if (!weights_.empty()) out(i, j) = out(i, j) * weights_[static_cast<std::size_t>(j)] /
                                                   weights_[static_cast<std::size_t>(i)];
            }
        return out;
    }

    /// Gram matrix of the basis (identity for orthonormal bases).
    Mat<S> gram() const {
        Mat<S> G = identity();
        if (!weights_.empty())
            for (int i = 0; i < size(); ++i) G(i, i) = weights_[static_cast<std::size_t>(i)];
        return G;
    }

private:
    static double real_part(const S& w) {
        if constexpr (std::is_same_v<S, Complex>) {
            return w.real();
        } else {
            return to_double(w);
        }
    }

    void check_commuting() const {
        double scale = 0.0;
        for (const auto& A : ops_) scale = std::max(scale, max_abs(A));
        for (std::size_t i = 0; i < ops_.size(); ++i)
            for (std::size_t j = i + 1; j < ops_.size(); ++j) {
                Mat<S> c = ops_[i] * ops_[j] - ops_[j] * ops_[i];
                if constexpr (is_exact_v<S>) {
                    if (!is_exact_zero(c)) throw std::invalid_argument("tuple entries do not commute");
                } else {
                    if (max_abs(c) > 1e-12 * std::max(1.0, scale * scale))
                        throw std::invalid_argument("tuple entries do not commute");
                }
            }
    }

    std::vector<Mat<S>> ops_;
    std::vector<MultiIndex> labels_;
    std::vector<S> weights_;
};

using TupleQ = OperatorTuple<Rational>;
using TupleC = OperatorTuple<Complex>;

/// Float view of a tuple in an orthonormal basis: A -> W^{1/2} A W^{-1/2}.
inline TupleC to_float(const TupleQ& T) {
    std::vector<MatC> ops;
    std::vector<double> sq;
    for (const auto& w : T.weights()) sq.push_back(std::sqrt(to_double(w)));
    for (const auto& A : T.ops()) {
        MatC B = to_complex(A);
        if (!sq.empty())
            for (Eigen::Index i = 0; i < B.rows(); ++i)
                for (Eigen::Index j = 0; j < B.cols(); ++j) B(i, j) *= sq[static_cast<std::size_t>(i)] / sq[static_cast<std::size_t>(j)];
        ops.push_back(std::move(B));
    }
    return TupleC(std::move(ops), T.labels());
}

template <class S>
S lifted(const KernelSeries<Rational>& k, const MultiIndex& alpha) {
    return from_rational<S>(lift_to_multiindex(k.coeffs(), alpha));
}

template <class S>
S lifted(const Series<Rational>& c, const MultiIndex& alpha) {
    return from_rational<S>(lift_to_multiindex(c, alpha));
}

/// Compression of (M_{z_1}, ..., M_{z_d}) on H_k to polynomials of degree <= N.
/// Rational: monomial basis, 0/1 shift matrices, weights 1/a_alpha.
/// Complex: orthonormal basis e(alpha) = sqrt(a_alpha) z^alpha.
template <class S>
OperatorTuple<S> model_tuple(const KernelSeries<Rational>& k, int d, int N) {
    if (N < 0) throw std::invalid_argument("model degree must be >= 0");
    if (N > k.truncation()) throw std::out_of_range("model degree exceeds kernel truncation");
    const MultiIndexSet basis = MultiIndexSet::up_to_degree(d, N);
    const int n = basis.size();
    std::vector<Mat<S>> ops(static_cast<std::size_t>(d), Mat<S>::Zero(n, n));
    std::vector<S> weights;
    for (int c = 0; c < n; ++c) {
        const MultiIndex& alpha = basis[c];
        if constexpr (is_exact_v<S>) weights.push_back(Rational(1) / lift_to_multiindex(k.coeffs(), alpha));
        if (alpha.degree() == N) continue;
        for (int i = 0; i < d; ++i) {
            const MultiIndex next = alpha.plus_unit(i);
            const int r = basis.find(next);
            if constexpr (is_exact_v<S>) {
                ops[static_cast<std::size_t>(i)](r, c) = Rational(1);
            } else {
                const double ratio = to_double(lift_to_multiindex(k.coeffs(), alpha)) /
                                     to_double(lift_to_multiindex(k.coeffs(), next));
                ops[static_cast<std::size_t>(i)](r, c) = S(std::sqrt(ratio));
            }
        }
    }
    return OperatorTuple<S>(std::move(ops), basis.items(), std::move(weights));
}

/// T^alpha by direct multiplication.
template <class S>
Mat<S> apply_power(const OperatorTuple<S>& T, const MultiIndex& alpha) {
    if (alpha.dim() != T.dim()) throw std::invalid_argument("multi-index dimension does not match tuple");
    Mat<S> P = T.identity();
    for (int i = 0; i < T.dim(); ++i)
        for (int e = 0; e < alpha[i]; ++e) P = T[i] * P;
    return P;
}

/// Precomputed table of T^alpha, |alpha| <= D, built by T^{alpha+e_i} = T_i T^alpha.
/// Immutable after construction, so it can be shared between readers.
template <class S>
class PowerTable {
public:
    PowerTable() = default;
    PowerTable(const OperatorTuple<S>& T, int D) : d_(T.dim()), max_degree_(D) {
        index_ = MultiIndexSet::up_to_degree(T.dim(), D);
        powers_.reserve(static_cast<std::size_t>(index_.size()));
        for (const auto& alpha : index_) {
            if (alpha.is_zero()) {
                powers_.push_back(T.identity());
                continue;
            }
            int i = 0;
            while (alpha[i] == 0) ++i;
            MultiIndex prev = *alpha.subtract(MultiIndex::unit(T.dim(), i));
            powers_.push_back(T[i] * powers_[static_cast<std::size_t>(index_.find(prev))]);
        }
    }

    int max_degree() const { return max_degree_; }
    const MultiIndexSet& index() const { return index_; }

    const Mat<S>& operator()(const MultiIndex& alpha) const {
        const int pos = index_.find(alpha);
        if (pos < 0) throw std::out_of_range("power " + alpha.str() + " not in table");
        return powers_[static_cast<std::size_t>(pos)];
    }

private:
    int d_ = 1;
    int max_degree_ = 0;
    MultiIndexSet index_;
    std::vector<Mat<S>> powers_;
};

template <class S>
bool negligible(const Mat<S>& A, double tol) {
    if constexpr (is_exact_v<S>) {
        (void)tol;
        return is_exact_zero(A);
    } else {
        return max_abs(A) <= tol;
    }
}

/// Smallest p with T^alpha = 0 for all |alpha| = p, or nullopt when the
/// tuple is not nilpotent. Commuting nilpotent n x n matrices are jointly
/// triangularizable, so p <= n whenever it exists.
template <class S>
std::optional<int> nilpotency_degree(const OperatorTuple<S>& T, double tol = 1e-13) {
    double scale = 1.0;
    for (const auto& A : T.ops()) scale = std::max(scale, max_abs(A));
    const int n = T.size();
    PowerTable<S> table(T, n);
    for (int p = 0; p <= n; ++p) {
        bool all_zero = true;
        for (const auto& alpha : enumerate_degree(T.dim(), p))
            if (!negligible(table(alpha), tol * std::pow(scale, p))) {
                all_zero = false;
                break;
            }
        if (all_zero) return p;
    }
    return std::nullopt;
}

/// sum_{|alpha| = n} c_alpha T^alpha (T^alpha)^adj from a table.
template <class S>
Mat<S> layer_sum(const OperatorTuple<S>& T, const PowerTable<S>& table, const Series<Rational>& c, int n,
                 const Mat<S>* middle = nullptr) {
    Mat<S> acc = Mat<S>::Zero(T.size(), T.size());
    if (c[n] == 0) return acc;
    for (const auto& alpha : enumerate_degree(T.dim(), n)) {
        const Mat<S>& P = table(alpha);
        const S coeff = lifted<S>(c, alpha);
        if (middle)
            acc += coeff * (P * (*middle) * T.adjoint(P));
        else
            acc += coeff * (P * T.adjoint(P));
    }
    return acc;
}

/// Result of summing sum_{lo <= |alpha| <= D} c_alpha T^alpha X (T^alpha)^adj.
template <class S>
struct WeightedSum {
    Mat<S> value;
    int degree_used = 0;
    bool exact = false;  // true when the sum terminated by nilpotency
    std::vector<double> increments;
};

template <class S>
WeightedSum<S> weighted_sum(const OperatorTuple<S>& T, const Series<Rational>& c, int lo, const SeriesOptions& opt,
                            const Mat<S>* middle = nullptr) {
    WeightedSum<S> out;
    out.value = Mat<S>::Zero(T.size(), T.size());
    const auto p = nilpotency_degree(T);
    if (p) {
        const int top = std::min(*p - 1, c.truncation());
        if (*p - 1 > c.truncation())
            throw std::out_of_range("series truncation " + std::to_string(c.truncation()) +
                                    " below nilpotency degree " + std::to_string(*p));
        PowerTable<S> table(T, std::max(top, 0));
        for (int n = lo; n <= top; ++n) {
            Mat<S> inc = layer_sum(T, table, c, n, middle);
            out.increments.push_back(max_abs(inc));
            out.value += inc;
        }
        out.degree_used = std::max(top, lo - 1);
        out.exact = true;
        return out;
    }
    if constexpr (is_exact_v<S>) {
        throw NoConvergence("exact series evaluation needs a nilpotent tuple");
    } else {
        const int cap = std::min(opt.degree_cap, c.truncation());
        int small = 0;
        // Powers are rebuilt layer by layer to keep memory bounded.
        std::map<std::vector<int>, Mat<S>> layer;
        layer.emplace(MultiIndex(T.dim()).entries(), T.identity());
        for (int n = 0; n <= cap; ++n) {
            if (n > 0) {
                std::map<std::vector<int>, Mat<S>> next;
                for (const auto& alpha : enumerate_degree(T.dim(), n)) {
                    int i = 0;
                    while (alpha[i] == 0) ++i;
                    MultiIndex prev = *alpha.subtract(MultiIndex::unit(T.dim(), i));
                    next.emplace(alpha.entries(), T[i] * layer.at(prev.entries()));
                }
                layer = std::move(next);
            }
            if (n < lo) continue;
            Mat<S> inc = Mat<S>::Zero(T.size(), T.size());
            if (c[n] != 0)
                for (const auto& alpha : enumerate_degree(T.dim(), n)) {
                    const Mat<S>& P = layer.at(alpha.entries());
                    const S coeff = lifted<S>(c, alpha);
                    inc += middle ? Mat<S>(coeff * (P * (*middle) * T.adjoint(P))) : Mat<S>(coeff * (P * T.adjoint(P)));
                }
            const double size = opnorm(inc);
            out.increments.push_back(size);
            out.value += inc;
            out.degree_used = n;
            small = size < opt.stop_tol ? small + 1 : 0;
            if (small >= opt.stable_steps) return out;
        }
        throw NoConvergence("series increments did not fall below " + std::to_string(opt.stop_tol) + " by degree " +
                            std::to_string(cap));
    }
}

/// I - sum_{alpha != 0} b_alpha T^alpha (T^alpha)^adj for the kernels k and s.
template <class S>
struct DefectSquares {
    Mat<S> delta_sq;
    Mat<S> gamma_sq;
    int b_support_degree = 0;
    bool exact = false;
    std::vector<double> increments_k;
    std::vector<double> increments_s;
};

template <class S>
DefectSquares<S> defect_squares(const OperatorTuple<S>& T, const KernelSeries<Rational>& k,
                                const KernelSeries<Rational>& s, const SeriesOptions& opt = {}) {
    if (k.dim() != T.dim() || s.dim() != T.dim()) throw std::invalid_argument("kernel and tuple dimensions differ");
    DefectSquares<S> out;
    const auto bk = weighted_sum(T, b_series(k), 1, opt);
    const auto bs = weighted_sum(T, b_series(s), 1, opt);
    out.delta_sq = T.identity() - bk.value;
    out.gamma_sq = T.identity() - bs.value;
    out.b_support_degree = std::max(bk.degree_used, bs.degree_used);
    out.exact = bk.exact && bs.exact;
    out.increments_k = bk.increments;
    out.increments_s = bs.increments;
    return out;
}

/// Exact PSD test for a self-adjoint operator in a diagonal-Gram basis:
/// symmetric elimination on the Hermitian matrix W A.
inline bool is_psd_exact(const TupleQ& T, const MatQ& A) {
    MatQ M = T.gram() * A;
    const Eigen::Index n = M.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (M(i, j) != M(j, i)) throw std::invalid_argument("operator is not self-adjoint");
    std::vector<bool> done(static_cast<std::size_t>(n), false);
    for (Eigen::Index step = 0; step < n; ++step) {
        Eigen::Index piv = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (done[static_cast<std::size_t>(i)]) continue;
            if (sgn(M(i, i)) < 0) return false;
            if (sgn(M(i, i)) > 0 && piv < 0) piv = i;
        }
        if (piv < 0) {
            // Remaining diagonal is zero: PSD only if the remaining block vanishes.
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j)
                    if (!done[static_cast<std::size_t>(i)] && !done[static_cast<std::size_t>(j)] && sgn(M(i, j)) != 0)
                        return false;
            return true;
        }
        done[static_cast<std::size_t>(piv)] = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (done[static_cast<std::size_t>(i)]) continue;
            const Rational f = M(i, piv) / M(piv, piv);
            for (Eigen::Index j = 0; j < n; ++j)
                if (!done[static_cast<std::size_t>(j)]) M(i, j) -= f * M(piv, j);
        }
    }
    return true;
}

/// Delta, Gamma and their ranges in an orthonormal basis.
struct DefectData {
    MatC delta_sq, gamma_sq;
    MatC delta, gamma;
    MatC ran_delta;   // orthonormal columns spanning Ran Delta
    MatC ran_gamma;   // orthonormal columns spanning Ran Gamma
    MatC gamma_pinv;  // Moore-Penrose inverse of Gamma
    double min_eig_delta = 0.0, min_eig_gamma = 0.0;
    int b_support_degree = 0;
    bool exact_truncation = false;
    std::vector<double> increments_k, increments_s;
};

inline DefectData defect_data(const TupleC& T, const KernelSeries<Rational>& k, const KernelSeries<Rational>& s,
                              const SeriesOptions& opt = {}) {
    if (!T.orthonormal_basis()) throw std::invalid_argument("float defect data needs an orthonormal basis");
    auto sq = defect_squares(T, k, s, opt);
    DefectData out;
    out.delta_sq = hermitian_part(sq.delta_sq);
    out.gamma_sq = hermitian_part(sq.gamma_sq);
    out.b_support_degree = sq.b_support_degree;
    out.exact_truncation = sq.exact;
    out.increments_k = sq.increments_k;
    out.increments_s = sq.increments_s;
    PsdRoot rd, rg;
    try {
        rd = psd_sqrt(out.delta_sq, opt.psd_tol, kRankCutoff, "I - sum b^(k) T^a T^a*");
    } catch (const NotPositive& e) {
        throw NotAContraction(std::string("not a 1/k-contraction: ") + e.what());
    }
    try {
        rg = psd_sqrt(out.gamma_sq, opt.psd_tol, kRankCutoff, "I - sum b^(s) T^a T^a*");
    } catch (const NotPositive& e) {
        throw NotAContraction(std::string("not a 1/s-contraction: ") + e.what());
    }
    out.delta = rd.root;
    out.gamma = rg.root;
    out.ran_delta = rd.range;
    canonicalize_phases(out.ran_delta);
    out.ran_gamma = rg.range;
    out.gamma_pinv = rg.pinv_root;
    out.min_eig_delta = rd.min_eigenvalue;
    out.min_eig_gamma = rg.min_eigenvalue;
    return out;
}

struct PurityReport {
    double residual = 0.0;
    bool exact = false;  // the sum terminated by nilpotency and, in exact mode, vanished exactly
    bool pure = false;
    int degree_used = 0;
};

/// || I - sum_alpha a_alpha T^alpha Delta^2 (T^alpha)^adj ||.
template <class S>
PurityReport purity_check(const OperatorTuple<S>& T, const KernelSeries<Rational>& k, const Mat<S>& delta_sq,
                          const SeriesOptions& opt = {}, double tol = 1e-10) {
    PurityReport rep;
    WeightedSum<S> sum;
    try {
        sum = weighted_sum(T, k.coeffs(), 0, opt, &delta_sq);
    } catch (const NoConvergence&) {
        rep.residual = std::numeric_limits<double>::infinity();
        return rep;
    }
    const Mat<S> diff = T.identity() - sum.value;
    rep.degree_used = sum.degree_used;
    if constexpr (is_exact_v<S>) {
        rep.residual = max_abs(diff);
        rep.exact = sum.exact;
        rep.pure = is_exact_zero(diff);
    } else {
        rep.residual = opnorm(diff);
        rep.exact = false;
        rep.pure = rep.residual <= tol;
    }
    return rep;
}

/// sum_alpha c_alpha conj(w^alpha) T^alpha.
inline MatC operator_series(const TupleC& T, const Series<Rational>& c, const VecC& w, const SeriesOptions& opt = {}) {
    if (w.size() != T.dim()) throw std::invalid_argument("point dimension mismatch");
    if (w.norm() >= 1.0) throw std::domain_error("point on or outside the unit sphere");
    const auto p = nilpotency_degree(T);
    MatC out = MatC::Zero(T.size(), T.size());
    if (p) {
        const int top = *p - 1;
        if (top > c.truncation()) throw std::out_of_range("series truncation below nilpotency degree");
        PowerTable<Complex> table(T, std::max(top, 0));
        for (const auto& alpha : table.index())
            out += lifted<Complex>(c, alpha) * std::conj(monomial(w, alpha)) * table(alpha);
        return out;
    }
    const int cap = std::min(opt.degree_cap, c.truncation());
    int small = 0;
    std::map<std::vector<int>, MatC> layer;
    layer.emplace(MultiIndex(T.dim()).entries(), T.identity());
    for (int n = 0; n <= cap; ++n) {
        if (n > 0) {
            std::map<std::vector<int>, MatC> next;
            for (const auto& alpha : enumerate_degree(T.dim(), n)) {
                int i = 0;
                while (alpha[i] == 0) ++i;
                MultiIndex prev = *alpha.subtract(MultiIndex::unit(T.dim(), i));
                next.emplace(alpha.entries(), T[i] * layer.at(prev.entries()));
            }
            layer = std::move(next);
        }
        MatC inc = MatC::Zero(T.size(), T.size());
        for (const auto& alpha : enumerate_degree(T.dim(), n))
            inc += lifted<Complex>(c, alpha) * std::conj(monomial(w, alpha)) * layer.at(alpha.entries());
        out += inc;
        small = opnorm(inc) < opt.stop_tol ? small + 1 : 0;
        if (small >= opt.stable_steps) return out;
    }
    throw NoConvergence("operator series did not converge by degree " + std::to_string(cap));
}

struct Compression {
    TupleC tuple;
    double coinvariance_defect = 0.0;  // max_i ||(I - P P*) T_i* P||
    bool coinvariant = true;
};

/// P* T_i P for an orthonormal basis P; co-invariance is measured, not enforced.
inline Compression compress(const TupleC& T, const MatC& P, double tol = 1e-10) {
    if (P.rows() != T.size()) throw std::invalid_argument("subspace basis has the wrong ambient dimension");
    if (!has_orthonormal_columns(P, tol)) throw std::invalid_argument("subspace basis is not orthonormal");
    Compression out;
    std::vector<MatC> ops;
    const MatC proj = MatC::Identity(T.size(), T.size()) - P * P.adjoint();
    for (const auto& A : T.ops()) {
        ops.push_back(P.adjoint() * A * P);
        out.coinvariance_defect = std::max(out.coinvariance_defect, opnorm(proj * A.adjoint() * P));
    }
    out.coinvariant = out.coinvariance_defect <= tol;
    out.tuple = TupleC(std::move(ops));
    return out;
}

/// Compression of a model tuple to the cyclic co-invariant subspace spanned by
/// (T^alpha)* v for a random v supported on the top degree layer.
inline Compression random_coinvariant_compression(const TupleC& model, Rng& rng) {
    const auto& labels = model.labels();
    if (labels.empty()) throw std::invalid_argument("random compression needs basis labels");
    int top = 0;
    for (const auto& a : labels) top = std::max(top, a.degree());
    VecC v = VecC::Zero(model.size());
    for (int i = 0; i < model.size(); ++i)
        if (labels[static_cast<std::size_t>(i)].degree() == top) v(i) = gaussian_complex(rng);
    PowerTable<Complex> table(model, top);
    MatC span(model.size(), table.index().size());
    for (int j = 0; j < table.index().size(); ++j) span.col(j) = table(table.index()[j]).adjoint() * v;
    MatC P = range_basis(span);
    return compress(model, P);
}

/// <(I - sum_{alpha != 0} b^(l)_alpha M^alpha P M^alpha*) v, v> / <v, v> on
/// the co-invariant subspace of H_k spanned by monomials of degree >= N+1,
/// truncated to degrees <= window. Vectors are given in monomial coordinates
/// of degree <= window (rational, exact).
inline std::vector<Rational> quadratic_form_certificate(const KernelSeries<Rational>& k, const KernelSeries<Rational>& l,
                                                        int N, int window, const std::vector<VecQ>& test_vectors) {
    if (window < N + 1) throw std::invalid_argument("window must reach degree N+1");
    const TupleQ M = model_tuple<Rational>(k, k.dim(), window);
    const int n = M.size();
    MatQ P = MatQ::Zero(n, n);
    for (int i = 0; i < n; ++i)
        if (M.labels()[static_cast<std::size_t>(i)].degree() >= N + 1) P(i, i) = 1;
    const Series<Rational> b = b_series(l);
    if (b.truncation() < window) throw std::out_of_range("l truncation below window");
    // Only degrees carrying a non-zero b^(l)_n are needed.
    int top = 0;
    for (int m = 1; m <= window; ++m)
        if (b[m] != 0) top = m;
    PowerTable<Rational> table(M, top);
    MatQ F = MatQ::Identity(n, n);
    for (const auto& alpha : table.index()) {
        if (alpha.is_zero()) continue;
        const Rational c = lift_to_multiindex(b, alpha);
        if (c == 0) continue;
        const MatQ& A = table(alpha);
        F -= c * (A * P * M.adjoint(A));
    }
    const MatQ G = M.gram();
    std::vector<Rational> out;
    for (const auto& v : test_vectors) {
        if (v.size() != n) throw std::invalid_argument("test vector outside the degree window");
        for (int i = 0; i < n; ++i)
            if (P(i, i) == 0 && v(i) != 0) throw std::invalid_argument("test vector outside the degree window");
        const Rational norm = (v.transpose() * G * v)(0, 0);
        if (norm == 0) throw std::invalid_argument("zero test vector");
        const Rational value = (v.transpose() * G * F * v)(0, 0);
        out.push_back(canonical(value / norm));
    }
    return out;
}

}  // namespace kchar

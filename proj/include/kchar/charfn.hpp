#pragma once

// Characteristic function of a pure 1/k-contraction through a CNP factor s of
// k = s * g.
//
// Spaces (T nilpotent of degree p, window cap L >= p):
//   I = {alpha : 0 < |alpha| <= L, b^(s)_alpha != 0},   H~ = (+)_{alpha in I} H
//   J = {alpha : |alpha| <= L, a^(g)_alpha != 0},        E  = (+)_{alpha in J} Ran Delta
//   T~ = row[sqrt(b_alpha) T^alpha],  Pi = col[sqrt(g_alpha) Delta (T^alpha)*]
// Blocks with |alpha| >= p carry T^alpha = 0; there D_T~ is the identity and
// the E-block lies in H^ = E - Ran Pi. Those "tail" blocks get identity
// columns appended after the "head" coordinates, so raising L only appends.
//
// The input space X = D_T~-space (+) H^ is coordinatized as
//   [ head D_T~ (q_h) | head H^ (h_h) | tail blocks in graded order ]
// where a tail alpha in I adds n columns and a tail alpha in J adds r columns.
//
//   U = [[T~*, B], [Pi, D]] : H (+) X -> H~ (+) E
//   theta_gamma = sqrt(g_gamma) D_gamma
//               + sum_{alpha in I, alpha <= gamma} a^(k)_{gamma-alpha} sqrt(b_alpha) Delta (T^{gamma-alpha})* B_alpha

#include "kchar/dilation.hpp"
#include "kchar/kernel_series.hpp"
#include "kchar/linalg.hpp"
#include "kchar/multiindex.hpp"
#include "kchar/operator_tuple.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kchar {

class CharFnError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CharFnOptions {
    int cap = -1;                   // window L; -1 selects p + 2
    double rank_cutoff = kRankCutoff;  // applied to squared quantities (eigenvalues of Delta^2, Gamma^2, D_T~^2)
    double clamp = kClampTolerance;
    double u_tol = 1e-8;
    SeriesOptions series;
};

struct XBlock {
    enum class Kind { head_defect, head_hhat, tail_tilde, tail_e };
    Kind kind;
    MultiIndex alpha;  // meaningful for tail blocks
    int offset = 0;
    int size = 0;
};

struct CharFnData {
    KernelFactorization<Rational> factorization;
    TupleC T;
    DefectData defect;
    int n = 0, r = 0, d = 1;
    int p = 0;    // nilpotency degree
    int cap = 0;  // L

    std::vector<MultiIndex> index_set;    // I, graded
    std::vector<MultiIndex> e_index_set;  // J, graded
    int head_i = 0, head_j = 0;           // how many leading entries of I, J are head blocks

    MatC delta_r;     // r x n
    MatC ttilde;      // n x n|I|   (tail columns zero)
    MatC pi;          // r|J| x n   (tail rows zero)
    MatC u;           // r|J_h| x n, u = Pi Gamma^+ on Ran Gamma
    MatC dt_basis;    // n|I_h| x q_h, orthonormal basis of the head defect space of T~
    VecD dt_values;   // square roots of the kept eigenvalues of I - T~*T~
    MatC hhat_head;   // r|J_h| x h_h
    MatC B;           // n|I| x x_dim
    MatC D;           // r|J| x x_dim
    std::vector<XBlock> x_layout;
    int x_dim = 0;

    MultiIndexSet theta_index;
    std::vector<MatC> theta;  // r x x_dim per gamma in theta_index
    int theta_degree = 0;     // largest |gamma| with theta_gamma != 0

    double u_defect = 0.0;  // ||Pi Gamma^+ Gamma - Pi||

    int i_block(const MultiIndex& a) const { return find_in(index_set, a) * n; }
    int e_block(const MultiIndex& a) const { return find_in(e_index_set, a) * r; }

    const MatC& theta_at(const MultiIndex& g) const { return theta[static_cast<std::size_t>(theta_index.find(g))]; }

private:
    static int find_in(const std::vector<MultiIndex>& v, const MultiIndex& a) {
        auto it = std::find(v.begin(), v.end(), a);
        return it == v.end() ? -1 : static_cast<int>(it - v.begin());
    }
};

namespace detail {
inline double lifted_d(const Series<Rational>& c, const MultiIndex& a) { return to_double(lift_to_multiindex(c, a)); }
}  // namespace detail

inline CharFnData build_charfn(const TupleC& T, const KernelFactorization<Rational>& F, const CharFnOptions& opt = {}) {
    if (!T.orthonormal_basis()) throw std::invalid_argument("characteristic function needs an orthonormal basis");
    const auto p = nilpotency_degree(T);
    if (!p) throw CharFnError("characteristic function construction needs a nilpotent tuple");
    CharFnData C;
    C.factorization = F;
    C.T = T;
    C.n = T.size();
    C.d = T.dim();
    C.p = *p;
    C.cap = std::max(opt.cap < 0 ? C.p + 2 : opt.cap, C.p);
    const KernelSeries<Rational>& k = F.k;
    const KernelSeries<Rational>& s = F.s;
    const Series<Rational>& g = F.g;
    if (C.cap + C.p > F.truncation())
        throw std::out_of_range("factorization truncation " + std::to_string(F.truncation()) + " below cap + p = " +
                                std::to_string(C.cap + C.p));

    C.defect = defect_data(T, k, s, opt.series);
    const auto purity = purity_check(T, k, C.defect.delta_sq, opt.series);
    if (!purity.pure) throw NotPure("not pure: purity residual " + std::to_string(purity.residual));
    const int n = C.n;
    const MatC& R = C.defect.ran_delta;
    C.r = static_cast<int>(R.cols());
    const int r = C.r;
    C.delta_r = R.adjoint() * C.defect.delta;

    const Series<Rational> bs = b_series(s);
    for (const auto& a : enumerate_degree_range(C.d, 1, C.cap))
        if (bs[a.degree()] != 0) C.index_set.push_back(a);
    for (const auto& a : enumerate_up_to_degree(C.d, C.cap))
        if (g[a.degree()] != 0) C.e_index_set.push_back(a);
    C.head_i = static_cast<int>(std::count_if(C.index_set.begin(), C.index_set.end(), [&](const MultiIndex& a) { return a.degree() < C.p; }));
    C.head_j = static_cast<int>(std::count_if(C.e_index_set.begin(), C.e_index_set.end(), [&](const MultiIndex& a) { return a.degree() < C.p; }));
    const int nI = static_cast<int>(C.index_set.size()), nJ = static_cast<int>(C.e_index_set.size());

    PowerTable<Complex> powers(T, std::max(C.p - 1, 0));
    auto power = [&](const MultiIndex& a) -> MatC {
        return a.degree() < C.p ? powers(a) : MatC::Zero(n, n);
    };

    // T~ and Pi.
    C.ttilde = MatC::Zero(n, n * nI);
    for (int b = 0; b < C.head_i; ++b) {
        const MultiIndex& a = C.index_set[static_cast<std::size_t>(b)];
        C.ttilde.middleCols(b * n, n) = std::sqrt(detail::lifted_d(bs, a)) * power(a);
    }
    C.pi = MatC::Zero(r * nJ, n);
    for (int b = 0; b < C.head_j; ++b) {
        const MultiIndex& a = C.e_index_set[static_cast<std::size_t>(b)];
        C.pi.middleRows(b * r, r) = std::sqrt(detail::lifted_d(g, a)) * C.delta_r * power(a).adjoint();
    }
    const MatC pi_head = C.pi.topRows(r * C.head_j);
    const MatC ttilde_head = C.ttilde.leftCols(n * C.head_i);

    // u = Pi Gamma^+ on Ran Gamma.
    C.u = pi_head * C.defect.gamma_pinv;
    C.u_defect = opnorm(C.u * C.defect.gamma - pi_head);
    if (C.u_defect > opt.u_tol)
        throw CharFnError("u ill-defined: ||Pi Gamma^+ Gamma - Pi|| = " + std::to_string(C.u_defect));

    // Defect space of T~ on the head.
    {
        const int m = n * C.head_i;
        const MatC form = MatC::Identity(m, m) - ttilde_head.adjoint() * ttilde_head;
        PsdRoot dt;
        try {
            dt = psd_sqrt(form, opt.clamp, opt.rank_cutoff, "I - T~*T~");
        } catch (const NotPositive& e) {
            throw CharFnError(std::string("T~ not a contraction: ") + e.what());
        }
        C.dt_basis = dt.range;
        canonicalize_phases(C.dt_basis);
        C.dt_values = dt.root_values;
    }
    // H^ on the head: complement of Ran Pi. Singular values of Pi are roots of
    // eigenvalues of Gamma^2, so the cutoff is the root of the shared one.
    C.hhat_head = complement_basis(pi_head, std::sqrt(opt.rank_cutoff));
    canonicalize_phases(C.hhat_head);

    // Layout of X.
    const int qh = static_cast<int>(C.dt_basis.cols()), hh = static_cast<int>(C.hhat_head.cols());
    int offset = 0;
    C.x_layout.push_back({XBlock::Kind::head_defect, MultiIndex(C.d), offset, qh});
    offset += qh;
    C.x_layout.push_back({XBlock::Kind::head_hhat, MultiIndex(C.d), offset, hh});
    offset += hh;
    for (const auto& a : enumerate_degree_range(C.d, C.p, C.cap)) {
        if (bs[a.degree()] != 0) {
            C.x_layout.push_back({XBlock::Kind::tail_tilde, a, offset, n});
            offset += n;
        }
        if (g[a.degree()] != 0) {
            C.x_layout.push_back({XBlock::Kind::tail_e, a, offset, r});
            offset += r;
        }
    }
    C.x_dim = offset;

    // B and D.
    C.B = MatC::Zero(n * nI, C.x_dim);
    C.D = MatC::Zero(r * nJ, C.x_dim);
    // B on the defect space: x -> D_T~ Q x = Q diag(sqrt(lambda)) x.
    C.B.block(0, 0, n * C.head_i, qh) = C.dt_basis * C.dt_values.cast<Complex>().asDiagonal();
    // D = -u T~ on the defect space, -inclusion on H^.
    C.D.block(0, 0, r * C.head_j, qh) = -C.u * ttilde_head * C.dt_basis;
    C.D.block(0, qh, r * C.head_j, hh) = -C.hhat_head;
    for (const auto& blk : C.x_layout) {
        if (blk.kind == XBlock::Kind::tail_tilde)
            C.B.block(C.i_block(blk.alpha), blk.offset, n, n) = MatC::Identity(n, n);
        else if (blk.kind == XBlock::Kind::tail_e)
            C.D.block(C.e_block(blk.alpha), blk.offset, r, r) = -MatC::Identity(r, r);
    }

    // Taylor coefficients.
    C.theta_index = MultiIndexSet::up_to_degree(C.d, C.cap + C.p - 1);
    for (const auto& gamma : C.theta_index) {
        MatC th = MatC::Zero(r, C.x_dim);
        if (gamma.degree() <= C.cap && g[gamma.degree()] != 0)
            th += std::sqrt(detail::lifted_d(g, gamma)) * C.D.middleRows(C.e_block(gamma), r);
        for (const auto& a : C.index_set) {
            const auto rest = gamma.subtract(a);
            if (!rest || rest->degree() >= C.p) continue;
            const double coeff = detail::lifted_d(k.coeffs(), *rest) * std::sqrt(detail::lifted_d(bs, a));
            th += coeff * C.delta_r * powers(*rest).adjoint() * C.B.middleRows(C.i_block(a), n);
        }
        if (max_abs(th) > 1e-14) C.theta_degree = std::max(C.theta_degree, gamma.degree());
        C.theta.push_back(std::move(th));
    }
    return C;
}

/// sum_gamma theta_gamma z^gamma.
inline MatC theta_taylor(const CharFnData& C, const VecC& z) {
    MatC out = MatC::Zero(C.r, C.x_dim);
    for (int i = 0; i < C.theta_index.size(); ++i) out += monomial(z, C.theta_index[i]) * C.theta[static_cast<std::size_t>(i)];
    return out;
}

/// Z(z) = row[sqrt(b_alpha) z^alpha I] over I.
inline MatC z_row(const CharFnData& C, const VecC& z) {
    const Series<Rational> bs = b_series(C.factorization.s);
    MatC Z = MatC::Zero(C.n, C.n * static_cast<int>(C.index_set.size()));
    for (std::size_t b = 0; b < C.index_set.size(); ++b)
        Z.middleCols(static_cast<Eigen::Index>(b) * C.n, C.n) =
            std::sqrt(detail::lifted_d(bs, C.index_set[b])) * monomial(z, C.index_set[b]) * MatC::Identity(C.n, C.n);
    return Z;
}

/// sum_{alpha in J} sqrt(g_alpha) D_alpha z^alpha + Delta k_z(T)* Z(z) B, evaluated directly.
inline MatC theta_direct(const CharFnData& C, const VecC& z) {
    const Series<Rational>& g = C.factorization.g;
    MatC out = MatC::Zero(C.r, C.x_dim);
    for (const auto& a : C.e_index_set)
        out += std::sqrt(detail::lifted_d(g, a)) * monomial(z, a) * C.D.middleRows(C.e_block(a), C.r);
    const MatC kz = operator_series(C.T, C.factorization.k.coeffs(), z);
    out += C.delta_r * kz.adjoint() * z_row(C, z) * C.B;
    return out;
}

inline MatC theta_eval(const CharFnData& C, const VecC& z, double tol = 1e-10) {
    if (z.size() != C.d) throw std::invalid_argument("point dimension mismatch");
    if (z.norm() >= 1.0) throw std::domain_error("point on or outside the unit sphere");
    const MatC a = theta_taylor(C, z);
    const MatC b = theta_direct(C, z);
    const double diff = a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
    if (diff > tol)
        throw CharFnError("Taylor and direct evaluations of theta disagree by " + std::to_string(diff));
    return a;
}

/// theta(z) theta(w)* including the coordinates of X beyond the cap, which
/// contribute sum_{n>L} g_n t^n I + sum_{n>L} b^(s)_n t^n Delta k_z(T)* k_w(T) Delta.
inline MatC theta_gram(const CharFnData& C, const VecC& z, const VecC& w) {
    const Complex t = inner(z, w);
    const Series<Rational>& g = C.factorization.g;
    const Series<Rational> bs = b_series(C.factorization.s);
    Complex tail_e(0.0, 0.0), tail_i(0.0, 0.0);
    Complex power = std::pow(t, C.cap + 1);
    for (int m = C.cap + 1; m <= g.truncation(); ++m) {
        tail_e += to_double(g[m]) * power;
        tail_i += to_double(bs[m]) * power;
        power *= t;
    }
    const MatC tz = theta_taylor(C, z), tw = theta_taylor(C, w);
    const MatC kz = operator_series(C.T, C.factorization.k.coeffs(), z);
    const MatC kw = operator_series(C.T, C.factorization.k.coeffs(), w);
    const MatC defect_part = C.delta_r * kz.adjoint() * kw * C.delta_r.adjoint();
    return tz * tw.adjoint() + tail_e * MatC::Identity(C.r, C.r) + tail_i * defect_part;
}

/// max || s(z,w) theta(z) theta(w)* - k(z,w) I + Delta k_z(T)* k_w(T) Delta ||.
inline double pointwise_residual(const CharFnData& C, const std::vector<std::pair<VecC, VecC>>& samples) {
    double worst = 0.0;
    for (const auto& [z, w] : samples) {
        const Complex t = inner(z, w);
        const Complex sv = evaluate_series(C.factorization.s.coeffs(), t);
        const Complex kv = evaluate_series(C.factorization.k.coeffs(), t);
        const MatC kz = operator_series(C.T, C.factorization.k.coeffs(), z);
        const MatC kw = operator_series(C.T, C.factorization.k.coeffs(), w);
        const MatC rhs = kv * MatC::Identity(C.r, C.r) - C.delta_r * kz.adjoint() * kw * C.delta_r.adjoint();
        worst = std::max(worst, opnorm(sv * theta_gram(C, z, w) - rhs));
    }
    return worst;
}

struct BlockRelations {
    double ttilde_b = 0.0;         // ||T~*T~ + BB* - I||
    double pi_ttilde = 0.0;        // ||Pi T~ + D B*||
    double pi_d = 0.0;             // ||Pi Pi* + DD* - I||
    double column_isometry = 0.0;  // ||T~T~* + Pi*Pi - I||
    double unitary_left = 0.0;     // ||U*U - I||
    double unitary_right = 0.0;    // ||UU* - I||
    double ttilde_defect = 0.0;    // ||T~T~* - (I - Gamma^2)||
    double defect_intertwining = 0.0;  // ||T~ D_T~ - Gamma T~||
    double pi_gamma = 0.0;         // ||Pi*Pi - Gamma^2||
    bool square = false;

    double max_block() const { return std::max({ttilde_b, pi_ttilde, pi_d}); }
};

inline BlockRelations block_relations(const CharFnData& C) {
    BlockRelations rel;
    const int n = C.n;
    const int hI = static_cast<int>(C.ttilde.cols()), hE = static_cast<int>(C.pi.rows());
    rel.ttilde_b = opnorm(C.ttilde.adjoint() * C.ttilde + C.B * C.B.adjoint() - MatC::Identity(hI, hI));
    rel.pi_ttilde = opnorm(C.pi * C.ttilde + C.D * C.B.adjoint());
    rel.pi_d = opnorm(C.pi * C.pi.adjoint() + C.D * C.D.adjoint() - MatC::Identity(hE, hE));
    rel.column_isometry = opnorm(C.ttilde * C.ttilde.adjoint() + C.pi.adjoint() * C.pi - MatC::Identity(n, n));
    rel.ttilde_defect = opnorm(C.ttilde * C.ttilde.adjoint() - (MatC::Identity(n, n) - C.defect.gamma_sq));
    rel.pi_gamma = opnorm(C.pi.adjoint() * C.pi - C.defect.gamma_sq);
    {
        const MatC th = C.ttilde.leftCols(n * C.head_i);
        const MatC dt = C.dt_basis * C.dt_values.cast<Complex>().asDiagonal() * C.dt_basis.adjoint();
        rel.defect_intertwining = opnorm(th * dt - C.defect.gamma * th);
    }
    const int rows = hI + hE, cols = n + C.x_dim;
    rel.square = rows == cols;
    MatC U = MatC::Zero(rows, cols);
    U.block(0, 0, hI, n) = C.ttilde.adjoint();
    U.block(0, n, hI, C.x_dim) = C.B;
    U.block(hI, 0, hE, n) = C.pi;
    U.block(hI, n, hE, C.x_dim) = C.D;
    rel.unitary_left = opnorm(U.adjoint() * U - MatC::Identity(cols, cols));
    rel.unitary_right = opnorm(U * U.adjoint() - MatC::Identity(rows, rows));
    return rel;
}

/// || g_z(T)* - k_z(T)* (I - Z(z) T~*) ||.
inline double i4_residual(const CharFnData& C, const VecC& z) {
    const MatC gz = operator_series(C.T, C.factorization.g, z);
    const MatC kz = operator_series(C.T, C.factorization.k.coeffs(), z);
    const MatC rhs = kz.adjoint() * (MatC::Identity(C.n, C.n) - z_row(C, z) * C.ttilde.adjoint());
    return opnorm(gz.adjoint() - rhs);
}

struct ZContraction {
    double norm_sq = 0.0;      // sum_n b^(s)_n |z|^{2n}
    double closed_form = 0.0;  // 1 - 1/s(z,z)
    double finite_norm_sq = 0.0;  // ||Z(z)||^2 restricted to the materialized index set
};

inline ZContraction z_contraction(const CharFnData& C, const VecC& z) {
    ZContraction out;
    const Series<Rational> bs = b_series(C.factorization.s);
    const double t = z.squaredNorm();
    out.norm_sq = std::real(evaluate_series(bs, Complex(t, 0.0)));
    out.closed_form = 1.0 - 1.0 / std::real(evaluate_series(C.factorization.s.coeffs(), Complex(t, 0.0)));
    const MatC Z = z_row(C, z);
    out.finite_norm_sq = std::pow(opnorm(Z), 2);
    return out;
}

struct GammaIdentityExact {
    bool exact_zero = false;
    double max_entry = 0.0;
};

/// sum_{alpha} a^(g)_alpha T^alpha Delta^2 (T^alpha)^adj = Gamma^2 in rational arithmetic.
inline GammaIdentityExact gamma_identity_exact(const TupleQ& T, const KernelFactorization<Rational>& F, const SeriesOptions& opt = {}) {
    const auto sq = defect_squares(T, F.k, F.s, opt);
    const auto sum = weighted_sum(T, F.g, 0, opt, &sq.delta_sq);
    const MatQ diff = sum.value - sq.gamma_sq;
    return {is_exact_zero(diff), max_abs(diff)};
}

// ---------------------------------------------------------------------------
// The multiplier M_theta : H_s (x) X -> H_k (x) Ran Delta

struct MultiplierMatrix {
    MatC M;
    TargetSpace target;      // degrees <= target_degree, r per block
    MultiIndexSet source;    // degrees <= source_degree
    int x_dim = 0;
    int source_degree = 0, target_degree = 0;
    int exact_window = 0;    // degrees where VV* + MM* = I is unaffected by truncation
    bool exact = false;      // target_degree >= source_degree + theta degree
    double discarded_mass = 0.0;  // Frobenius mass of blocks beyond the target degree
};

inline MultiplierMatrix build_multiplier(const CharFnData& C, int source_degree, int target_degree) {
    MultiplierMatrix out;
    const auto& k = C.factorization.k;
    const auto& s = C.factorization.s;
    out.source_degree = source_degree;
    out.target_degree = target_degree;
    out.target = TargetSpace(C.d, target_degree, C.r);
    out.source = MultiIndexSet::up_to_degree(C.d, source_degree);
    out.x_dim = C.x_dim;
    out.exact = target_degree >= source_degree + C.theta_degree;
    out.exact_window = std::min({source_degree, target_degree, C.cap});
    if (source_degree + C.theta_degree > k.truncation())
        throw std::out_of_range("multiplier degrees exceed the kernel truncation");
    out.M = MatC::Zero(out.target.size(), out.source.size() * C.x_dim);
    double dropped = 0.0;
    for (int sb = 0; sb < out.source.size(); ++sb) {
        const MultiIndex& beta = out.source[sb];
        const double as = detail::lifted_d(s.coeffs(), beta);
        for (int gi = 0; gi < C.theta_index.size(); ++gi) {
            const MultiIndex& gamma = C.theta_index[gi];
            const MatC& th = C.theta[static_cast<std::size_t>(gi)];
            const MultiIndex delta = beta + gamma;
            const double w = std::sqrt(as / detail::lifted_d(k.coeffs(), delta));
            if (delta.degree() > target_degree) {
                dropped += w * w * th.squaredNorm();
                continue;
            }
            out.M.block(out.target.block(delta), sb * C.x_dim, C.r, C.x_dim) += w * th;
        }
    }
    out.discarded_mass = std::sqrt(dropped);
    return out;
}

struct FactorizationResidual {
    double restricted = 0.0;
    double unrestricted = 0.0;
    int window = 0;
};

/// || VV* + M M* - I || on the target, restricted to degrees <= the multiplier's exact window.
inline FactorizationResidual factorization_residual(const DilationData& D, const MultiplierMatrix& M) {
    if (D.target.size() != M.target.size() || D.target.r != M.target.r)
        throw std::invalid_argument("dilation and multiplier targets differ");
    FactorizationResidual out;
    out.window = M.exact_window;
    const int m = D.target.size();
    const MatC R = D.V * D.V.adjoint() + M.M * M.M.adjoint() - MatC::Identity(m, m);
    out.unrestricted = opnorm(R);
    int keep = 0;
    for (const auto& a : D.target.basis)
        if (a.degree() <= out.window) keep += D.target.r;
    // Graded order puts the window first.
    out.restricted = opnorm(R.topLeftCorner(keep, keep));
    return out;
}

// ---------------------------------------------------------------------------
// k-inner part

struct KInnerReport {
    MatC basis;        // x_dim x dim M, orthonormal
    VecD g_eigenvalues;
    double max_shift_inner = 0.0;  // max over 1 <= |alpha| <= check_degree
    int check_degree = 0;
};

class EmptyKInner : public CharFnError {
public:
    using CharFnError::CharFnError;
};

/// G = sum_gamma theta_gamma* theta_gamma ||z^gamma||^2, so <Gx, x> = ||M_theta x||^2 on constants.
inline MatC constant_gram(const CharFnData& C) {
    MatC G = MatC::Zero(C.x_dim, C.x_dim);
    for (int i = 0; i < C.theta_index.size(); ++i) {
        const MatC& th = C.theta[static_cast<std::size_t>(i)];
        G += th.adjoint() * th / detail::lifted_d(C.factorization.k.coeffs(), C.theta_index[i]);
    }
    return G;
}

/// S_alpha = sum_gamma theta_{gamma+alpha}* theta_gamma ||z^{gamma+alpha}||^2, i.e.
/// <(M_z^alpha (x) I) theta x, theta y> = y* S_alpha x.
inline MatC shift_gram(const CharFnData& C, const MultiIndex& alpha) {
    MatC S = MatC::Zero(C.x_dim, C.x_dim);
    for (int i = 0; i < C.theta_index.size(); ++i) {
        const MultiIndex up = C.theta_index[i] + alpha;
        const int j = C.theta_index.find(up);
        if (j < 0) continue;
        S += C.theta[static_cast<std::size_t>(j)].adjoint() * C.theta[static_cast<std::size_t>(i)] /
             detail::lifted_d(C.factorization.k.coeffs(), up);
    }
    return S;
}

inline KInnerReport k_inner_subspace(const CharFnData& C, int check_degree = 3, double tol = 1e-9) {
    KInnerReport rep;
    rep.check_degree = check_degree;
    const MatC G = constant_gram(C);
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(G));
    rep.g_eigenvalues = es.eigenvalues();
    std::vector<int> keep;
    for (int i = 0; i < rep.g_eigenvalues.size(); ++i)
        if (std::abs(rep.g_eigenvalues(i) - 1.0) <= tol) keep.push_back(i);
    if (keep.empty()) throw EmptyKInner("empty k-inner space: no eigenvalue of G within tolerance of 1");
    rep.basis = MatC(C.x_dim, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) rep.basis.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
    canonicalize_phases(rep.basis);
    for (const auto& alpha : enumerate_degree_range(C.d, 1, check_degree)) {
        const MatC S = rep.basis.adjoint() * shift_gram(C, alpha) * rep.basis;
        rep.max_shift_inner = std::max(rep.max_shift_inner, S.size() ? S.cwiseAbs().maxCoeff() : 0.0);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Two factorizations of the same k

struct AlignmentSample {
    VecC z;
    VecC xi;  // Ran Delta coordinates
};

struct Alignment {
    double gram_residual = 0.0;    // max |Gram_1 - Gram_2|
    double kernel_residual = 0.0;  // max |Gram_i - (k(z,w) xi*eta - <V*(k_w (x) eta), V*(k_z (x) xi)>)|
    MatC Vm;                       // correspondence between the sampled spans, orthonormal coordinates
    double vm_defect = 0.0;        // ||Vm* Vm - I||
    int rank = 0;
};

class AlignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline MatC alignment_gram(const CharFnData& C, const std::vector<AlignmentSample>& pts) {
    const int m = static_cast<int>(pts.size());
    MatC G(m, m);
    for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l) {
            const Complex t = inner(pts[static_cast<std::size_t>(j)].z, pts[static_cast<std::size_t>(l)].z);
            const Complex sv = evaluate_series(C.factorization.s.coeffs(), t);
            G(j, l) = sv * (pts[static_cast<std::size_t>(j)].xi.adjoint() *
                            theta_gram(C, pts[static_cast<std::size_t>(j)].z, pts[static_cast<std::size_t>(l)].z) *
                            pts[static_cast<std::size_t>(l)].xi)(0, 0);
        }
    return G;
}

inline Alignment align_factorizations(const CharFnData& C1, const CharFnData& C2, const std::vector<AlignmentSample>& pts,
                                      double tol = 1e-8) {
    if (C1.T.dim() != C2.T.dim() || C1.n != C2.n) throw AlignmentError("mismatched tuples");
    for (int i = 0; i < C1.T.dim(); ++i)
        if (max_abs(MatC(C1.T[i] - C2.T[i])) > 1e-12) throw AlignmentError("mismatched tuples");
    if (!(C1.factorization.k.coeffs().truncated(std::min(C1.factorization.truncation(), C2.factorization.truncation())) ==
          C2.factorization.k.coeffs().truncated(std::min(C1.factorization.truncation(), C2.factorization.truncation()))))
        throw AlignmentError("factorizations are of different kernels");
    Alignment out;
    const MatC G1 = alignment_gram(C1, pts), G2 = alignment_gram(C2, pts);
    out.gram_residual = (G1 - G2).cwiseAbs().maxCoeff();
    const int m = static_cast<int>(pts.size());
    for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l) {
            const auto& a = pts[static_cast<std::size_t>(j)];
            const auto& b = pts[static_cast<std::size_t>(l)];
            const Complex kv = evaluate_series(C1.factorization.k.coeffs(), inner(a.z, b.z));
            const MatC kz = operator_series(C1.T, C1.factorization.k.coeffs(), a.z);
            const MatC kw = operator_series(C1.T, C1.factorization.k.coeffs(), b.z);
            const Complex v = (a.xi.adjoint() * (kv * MatC::Identity(C1.r, C1.r) -
                                                 C1.delta_r * kz.adjoint() * kw * C1.delta_r.adjoint()) * b.xi)(0, 0);
            out.kernel_residual = std::max({out.kernel_residual, std::abs(G1(j, l) - v), std::abs(G2(j, l) - v)});
        }
    if (out.gram_residual > tol)
        throw AlignmentError("Gram matrices of the two factorizations differ by " + std::to_string(out.gram_residual));
    // Orthonormal coordinates on each sampled span from its Gram matrix.
    auto frame = [](const MatC& G, MatC& W, VecD& lam) {
        Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(G));
        std::vector<int> keep;
        const double top = es.eigenvalues().maxCoeff();
        for (int i = 0; i < G.rows(); ++i)
            if (es.eigenvalues()(i) > 1e-9 * std::max(1.0, top)) keep.push_back(i);
        W = MatC(G.rows(), static_cast<Eigen::Index>(keep.size()));
        lam = VecD(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            W.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
            lam(static_cast<Eigen::Index>(j)) = es.eigenvalues()(keep[j]);
        }
    };
    MatC W1, W2;
    VecD l1, l2;
    frame(G1, W1, l1);
    frame(G2, W2, l2);
    const VecD i1 = l1.cwiseSqrt().cwiseInverse(), i2 = l2.cwiseSqrt().cwiseInverse();
    out.Vm = i2.cast<Complex>().asDiagonal() * W2.adjoint() * G2 * W1 * i1.cast<Complex>().asDiagonal();
    out.rank = static_cast<int>(W1.cols());
    out.vm_defect = opnorm(out.Vm.adjoint() * out.Vm - MatC::Identity(out.Vm.cols(), out.Vm.cols()));
    return out;
}

// ---------------------------------------------------------------------------
// Functional model and coincidence

struct FunctionalModel {
    TupleC model;                   // V* (M_i (x) I) V: the compressed tuple in the basis given by V
    double intertwining = 0.0;      // max_i ||(M_i (x) I)* V - V T_i*||
    double compression = 0.0;       // max_i ||V*(M_i (x) I)V - T_i||
    double range_orthogonality = 0.0;  // ||V* M_theta|| on the exact window
};

inline FunctionalModel functional_model(const CharFnData& C, const DilationData& D, const MultiplierMatrix& M,
                                        double tol = 1e-8) {
    const auto fr = factorization_residual(D, M);
    if (fr.restricted > tol)
        throw CharFnError("factorization residual " + std::to_string(fr.restricted) + " too large for a functional model");
    if (D.target_degree < C.p) throw std::invalid_argument("functional model needs target degree >= nilpotency degree");
    FunctionalModel out;
    std::vector<MatC> ops;
    for (int i = 0; i < C.d; ++i) {
        const MatC Mi = target_shift(C.factorization.k, D.target, i);
        ops.push_back(D.V.adjoint() * Mi * D.V);
        out.intertwining = std::max(out.intertwining, opnorm(Mi.adjoint() * D.V - D.V * C.T[i].adjoint()));
        out.compression = std::max(out.compression, opnorm(ops.back() - C.T[i]));
    }
    out.model = TupleC(std::move(ops));
    int keep = 0;
    for (const auto& a : D.target.basis)
        if (a.degree() <= fr.window) keep += D.target.r;
    int keep_cols = 0;
    for (const auto& b : M.source)
        if (b.degree() <= fr.window) keep_cols += C.x_dim;
    out.range_orthogonality = opnorm(D.V.topRows(keep).adjoint() * M.M.topLeftCorner(keep, keep_cols));
    return out;
}

struct Coincidence {
    double residual = std::numeric_limits<double>::infinity();  // max_gamma ||theta'_gamma - U2 theta_gamma U1*||
    int nullity = 0;
    MatC U1, U2;  // U1 on X, U2 on Ran Delta
    bool dims_match = false;
};

/// Looks for constant unitaries with theta'_gamma = U2 theta_gamma U1* by solving
/// A theta_gamma = theta'_gamma C and C theta_gamma* = theta'_gamma* A for all gamma
/// (intertwiners of the self-adjoint families [[0, theta], [theta*, 0]]) and
/// taking polar parts of a random solution.
inline Coincidence coincidence(const CharFnData& C1, const CharFnData& C2, Rng& rng, double null_tol = 1e-6) {
    Coincidence out;
    const int r1 = C1.r, r2 = C2.r, x1 = C1.x_dim, x2 = C2.x_dim;
    out.dims_match = r1 == r2 && x1 == x2 && C1.d == C2.d;
    if (!out.dims_match) return out;
    std::vector<MultiIndex> gammas = C1.theta_index.items();
    for (const auto& g : C2.theta_index)
        if (!C1.theta_index.contains(g)) gammas.push_back(g);
    auto th = [](const CharFnData& C, const MultiIndex& g) -> MatC {
        const int i = C.theta_index.find(g);
        return i < 0 ? MatC::Zero(C.r, C.x_dim) : C.theta[static_cast<std::size_t>(i)];
    };
    const int na = r2 * r1, nc = x2 * x1, unknowns = na + nc;
    MatC normal = MatC::Zero(unknowns, unknowns);
    for (const auto& g : gammas) {
        const MatC t1 = th(C1, g), t2 = th(C2, g);
        // A t1 - t2 C = 0  (r2 x x1 equations)
        MatC E1 = MatC::Zero(r2 * x1, unknowns);
        E1.leftCols(na) = kron(t1.transpose(), MatC::Identity(r2, r2));
        E1.rightCols(nc) = -kron(MatC::Identity(x1, x1), t2);
        // C t1* - t2* A = 0  (x2 x r1 equations)
        MatC E2 = MatC::Zero(x2 * r1, unknowns);
        E2.rightCols(nc) = kron(MatC(t1.conjugate()), MatC::Identity(x2, x2));
        E2.leftCols(na) = -kron(MatC::Identity(r1, r1), MatC(t2.adjoint()));
        normal += E1.adjoint() * E1 + E2.adjoint() * E2;
    }
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(normal));
    VecC y = VecC::Zero(unknowns);
    for (int i = 0; i < unknowns; ++i) {
        if (es.eigenvalues()(i) > null_tol * null_tol) break;
        ++out.nullity;
        y += gaussian_complex(rng) * es.eigenvectors().col(i);
    }
    if (out.nullity == 0) {
        out.residual = 0.0;
        for (const auto& g : gammas) out.residual = std::max(out.residual, opnorm(th(C2, g)));
        return out;
    }
    const MatC A = Eigen::Map<const MatC>(y.data(), r2, r1);
    const MatC Cm = Eigen::Map<const MatC>(y.data() + na, x2, x1);
    out.U2 = r1 ? polar_unitary(A) : MatC(0, 0);
    out.U1 = x1 ? polar_unitary(Cm) : MatC(0, 0);
    out.residual = 0.0;
    for (const auto& g : gammas)
        out.residual = std::max(out.residual, opnorm(th(C2, g) - out.U2 * th(C1, g) * out.U1.adjoint()));
    return out;
}


// ---------------------------------------------------------------------------
// Exact cross-check of VV* + M M* = I for configurations whose data is rational

/// Best rational approximation with denominator <= max_den, accepted only within tol.
inline std::optional<Rational> rationalize(double x, double tol = 1e-12, long max_den = 1000000) {
    if (!std::isfinite(x)) return std::nullopt;
    // Continued fraction convergents h/k.
    long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double y = x;
    for (int it = 0; it < 64; ++it) {
        const double a = std::floor(y);
        if (std::abs(a) > 1e15) break;
        const long ai = static_cast<long>(a);
        const long h2 = ai * h1 + h0, k2 = ai * k1 + k0;
        if (k2 > max_den) break;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) <= tol) return canonical(Rational(h1, k1));
        const double frac = y - a;
        if (frac == 0.0) break;
        y = 1.0 / frac;
    }
    if (k1 != 0 && std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) <= tol) return canonical(Rational(h1, k1));
    return std::nullopt;
}

inline std::optional<Rational> exact_sqrt(const Rational& q) {
    if (sgn(q) < 0) return std::nullopt;
    const Rational c = canonical(q);
    if (!mpz_perfect_square_p(c.get_num_mpz_t()) || !mpz_perfect_square_p(c.get_den_mpz_t())) return std::nullopt;
    Integer num, den;
    mpz_sqrt(num.get_mpz_t(), c.get_num_mpz_t());
    mpz_sqrt(den.get_mpz_t(), c.get_den_mpz_t());
    return canonical(Rational(num, den));
}

inline std::optional<MatQ> rationalize(const MatC& A, double tol = 1e-12) {
    MatQ out(A.rows(), A.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            if (std::abs(A(i, j).imag()) > tol) return std::nullopt;
            auto q = rationalize(A(i, j).real(), tol);
            if (!q) return std::nullopt;
            out(i, j) = *q;
        }
    return out;
}

struct ExactFactorizationCheck {
    bool attempted = false;   // false when some datum is not rational
    bool exact_zero = false;
    std::string reason;
    int window = 0;
};

/// Re-assembles V and M_theta in rational arithmetic (T, Delta, theta must be
/// rational up to 1e-12 and the normalizing weights perfect squares) and tests
/// VV* + M M* - I = 0 exactly on degrees <= min(source, target, cap).
inline ExactFactorizationCheck exact_factorization_check(const CharFnData& C, int source_degree, int target_degree) {
    ExactFactorizationCheck out;
    out.window = std::min({source_degree, target_degree, C.cap});
    const auto& k = C.factorization.k;
    const auto& s = C.factorization.s;
    std::vector<MatQ> ops;
    for (const auto& A : C.T.ops()) {
        auto q = rationalize(A);
        if (!q) {
            out.reason = "tuple entries are not rational";
            return out;
        }
        ops.push_back(*q);
    }
    const TupleQ TQ(ops);
    const auto sq = defect_squares(TQ, k, s);
    if (sq.delta_sq * sq.delta_sq != sq.delta_sq) {
        out.reason = "Delta^2 is not idempotent, so Delta has no rational form";
        return out;
    }
    auto dr = rationalize(C.delta_r);
    if (!dr || MatQ(dr->transpose() * (*dr)) != sq.delta_sq) {
        out.reason = "Ran Delta basis is not rational";
        return out;
    }
    std::vector<MatQ> theta;
    for (const auto& th : C.theta) {
        auto q = rationalize(th);
        if (!q) {
            out.reason = "Taylor coefficients are not rational";
            return out;
        }
        theta.push_back(*q);
    }
    const TargetSpace X(C.d, target_degree, C.r);
    const MultiIndexSet src = MultiIndexSet::up_to_degree(C.d, source_degree);
    PowerTable<Rational> powers(TQ, target_degree);
    MatQ V = MatQ::Zero(X.size(), C.n);
    for (const auto& a : X.basis) {
        auto w = exact_sqrt(lift_to_multiindex(k.coeffs(), a));
        if (!w) {
            out.reason = "kernel weight is not a perfect square";
            return out;
        }
        V.middleRows(X.block(a), C.r) = *w * (*dr) * powers(a).transpose();
    }
    MatQ M = MatQ::Zero(X.size(), src.size() * C.x_dim);
    for (int b = 0; b < src.size(); ++b)
        for (int gi = 0; gi < C.theta_index.size(); ++gi) {
            const MultiIndex delta = src[b] + C.theta_index[gi];
            if (delta.degree() > target_degree) continue;
            auto w = exact_sqrt(lift_to_multiindex(s.coeffs(), src[b]) / lift_to_multiindex(k.coeffs(), delta));
            if (!w) {
                out.reason = "multiplier weight is not a perfect square";
                return out;
            }
            M.block(X.block(delta), b * C.x_dim, C.r, C.x_dim) += *w * theta[static_cast<std::size_t>(gi)];
        }
    out.attempted = true;
    int keep = 0;
    for (const auto& a : X.basis)
        if (a.degree() <= out.window) keep += C.r;
    const MatQ R = (V * V.transpose() + M * M.transpose()).topLeftCorner(keep, keep) - MatQ::Identity(keep, keep);
    out.exact_zero = is_exact_zero(R);
    if (!out.exact_zero) out.reason = "residual is non-zero";
    return out;
}

}  // namespace kchar

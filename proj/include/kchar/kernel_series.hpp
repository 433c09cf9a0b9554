#pragma once

// One-variable coefficient calculus for unitarily invariant kernels
//     k(z, w) = sum_n a_n <z, w>^n,   a_0 = 1, a_n > 0.
// Every binary operation truncates to the smaller truncation order.

#include "kchar/multiindex.hpp"
#include "kchar/scalar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kchar {

inline constexpr int kDefaultTruncation = 32;
inline constexpr double kDefaultSignTolerance = 1e-12;

class KernelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a quotient k/s has a negative coefficient.
class NotAFactorization : public KernelError {
public:
    using KernelError::KernelError;
};

/// Finite coefficient list c_0..c_N; entries may have any sign.
template <class S>
class Series {
public:
    Series() = default;
    explicit Series(std::vector<S> coeffs) : c_(std::move(coeffs)) {
        if (c_.empty()) throw std::invalid_argument("series needs at least one coefficient");
    }

    int truncation() const { return static_cast<int>(c_.size()) - 1; }
    int size() const { return static_cast<int>(c_.size()); }

    const S& operator[](int n) const { return c_[static_cast<std::size_t>(n)]; }

    const S& at(int n) const {
        if (n < 0 || n > truncation())
            throw std::out_of_range("coefficient " + std::to_string(n) + " beyond truncation " +
                                    std::to_string(truncation()));
        return c_[static_cast<std::size_t>(n)];
    }

    const std::vector<S>& coeffs() const { return c_; }

    Series truncated(int N) const {
        if (N > truncation()) throw std::out_of_range("cannot extend a series by truncation");
        return Series(std::vector<S>(c_.begin(), c_.begin() + N + 1));
    }

    friend bool operator==(const Series& a, const Series& b) { return a.c_ == b.c_; }

private:
    std::vector<S> c_;
};

template <class S>
using RealSeries = Series<S>;

/// Coefficients a_n of a unitarily invariant kernel on the ball B_d.
template <class S>
class KernelSeries {
public:
    KernelSeries() = default;

    KernelSeries(Series<S> a, int dim, std::string label = {}) : a_(std::move(a)), dim_(dim), label_(std::move(label)) {
        if (dim_ < 1) throw std::invalid_argument("kernel dimension must be >= 1");
        if (!(a_[0] == S(1))) throw std::invalid_argument("kernel series needs a_0 = 1");
        for (int n = 0; n <= a_.truncation(); ++n)
            if (!(a_[n] > S(0)))
                throw std::invalid_argument("kernel coefficient a_" + std::to_string(n) + " must be strictly positive");
    }

    const Series<S>& coeffs() const { return a_; }
    const S& operator[](int n) const { return a_[n]; }
    const S& at(int n) const { return a_.at(n); }
    int truncation() const { return a_.truncation(); }
    int dim() const { return dim_; }
    const std::string& label() const { return label_; }

    /// The radius-of-convergence-one hypothesis on CNP factors is carried as
    /// metadata; no finite certificate for it exists.
    bool radius_one_assumed() const { return radius_one_assumed_; }
    KernelSeries with_radius_one_assumed(bool flag = true) const {
        KernelSeries out = *this;
        out.radius_one_assumed_ = flag;
        return out;
    }

    KernelSeries truncated(int N) const {
        KernelSeries out(a_.truncated(N), dim_, label_);
        out.radius_one_assumed_ = radius_one_assumed_;
        return out;
    }

private:
    Series<S> a_;
    int dim_ = 1;
    std::string label_;
    bool radius_one_assumed_ = false;
};

template <class T, class S>
Series<T> series_cast(const Series<S>& s) {
    std::vector<T> out;
    out.reserve(s.coeffs().size());
    for (const auto& c : s.coeffs()) {
        if constexpr (std::is_same_v<S, Rational> && !std::is_same_v<T, Rational>) {
            out.push_back(T(c.get_d()));
        } else {
            out.push_back(T(c));
        }
    }
    return Series<T>(std::move(out));
}

template <class T, class S>
KernelSeries<T> kernel_cast(const KernelSeries<S>& k) {
    return KernelSeries<T>(series_cast<T>(k.coeffs()), k.dim(), k.label())
        .with_radius_one_assumed(k.radius_one_assumed());
}

// ---------------------------------------------------------------------------
// Series arithmetic

/// Coefficientwise convolution, truncated to the smaller truncation.
template <class S>
Series<S> cauchy_product(const Series<S>& p, const Series<S>& q) {
    const int N = std::min(p.truncation(), q.truncation());
    std::vector<S> out(static_cast<std::size_t>(N + 1), S(0));
    for (int n = 0; n <= N; ++n) {
        S acc(0);
        for (int i = 0; i <= n; ++i) acc += p[n - i] * q[i];
        out[static_cast<std::size_t>(n)] = acc;
    }
    return Series<S>(std::move(out));
}

template <class S>
KernelSeries<S> cauchy_product(const KernelSeries<S>& p, const KernelSeries<S>& q) {
    if (p.dim() != q.dim()) throw std::invalid_argument("kernel dimension mismatch");
    std::string label = p.label().empty() || q.label().empty() ? std::string{} : p.label() + "*" + q.label();
    return KernelSeries<S>(cauchy_product(p.coeffs(), q.coeffs()), p.dim(), label);
}

/// Convolution inverse of a series with p_0 = 1.
template <class S>
Series<S> reciprocal(const Series<S>& p) {
    if (!(p[0] == S(1))) throw std::invalid_argument("reciprocal needs leading coefficient 1");
    const int N = p.truncation();
    std::vector<S> c(static_cast<std::size_t>(N + 1), S(0));
    c[0] = S(1);
    for (int n = 1; n <= N; ++n) {
        S acc(0);
        for (int i = 1; i <= n; ++i) acc += p[i] * c[static_cast<std::size_t>(n - i)];
        c[static_cast<std::size_t>(n)] = -acc;
    }
    return Series<S>(std::move(c));
}

/// b_n with sum_{n>=1} b_n t^n = 1 - 1/sum_n a_n t^n; the returned b_0 is 0.
template <class S>
Series<S> b_series(const KernelSeries<S>& k) {
    Series<S> c = reciprocal(k.coeffs());
    std::vector<S> b(c.coeffs().size(), S(0));
    for (int n = 1; n <= c.truncation(); ++n) b[static_cast<std::size_t>(n)] = -c[n];
    return Series<S>(std::move(b));
}

/// q with l * q = k coefficientwise.
template <class S>
Series<S> quotient(const Series<S>& k, const Series<S>& l) {
    if (!(l[0] == S(1))) throw std::invalid_argument("quotient needs l_0 = 1");
    const int N = std::min(k.truncation(), l.truncation());
    std::vector<S> q(static_cast<std::size_t>(N + 1), S(0));
    for (int n = 0; n <= N; ++n) {
        S acc = k[n];
        for (int i = 0; i < n; ++i) acc -= q[static_cast<std::size_t>(i)] * l[n - i];
        q[static_cast<std::size_t>(n)] = acc;
    }
    return Series<S>(std::move(q));
}

template <class S>
Series<S> quotient(const KernelSeries<S>& k, const KernelSeries<S>& l) {
    return quotient(k.coeffs(), l.coeffs());
}

// ---------------------------------------------------------------------------
// Certificates

namespace detail {
template <class S>
bool negative(const S& x, double tol) {
    if constexpr (is_exact_v<S>) {
        (void)tol;
        return sgn(x) < 0;
    } else {
        return to_double(x) < -tol;
    }
}
}  // namespace detail

/// Sign certificate over the coefficients 1..N (or 0..N).
struct SignCertificate {
    bool holds = true;
    int checked_up_to = 0;
    std::optional<int> first_negative;
};

template <class S>
SignCertificate nonnegative_certificate(const Series<S>& c, int first, double tol) {
    SignCertificate cert;
    cert.checked_up_to = c.truncation();
    for (int n = first; n <= c.truncation(); ++n) {
        if (detail::negative(c[n], tol)) {
            cert.holds = false;
            cert.first_negative = n;
            break;
        }
    }
    return cert;
}

/// CNP test: b_n >= 0 for 1 <= n <= N.
template <class S>
SignCertificate is_cnp(const KernelSeries<S>& k, double tol = kDefaultSignTolerance) {
    return nonnegative_certificate(b_series(k), 1, tol);
}

struct QuotientCertificate : SignCertificate {
    std::vector<double> quotient;  // float view, for reporting
};

/// Whether k/l has non-negative coefficients up to truncation, i.e. whether
/// M_z on H_k is a 1/l-contraction.
template <class S>
QuotientCertificate is_positive_quotient(const KernelSeries<S>& k, const KernelSeries<S>& l,
                                         double tol = kDefaultSignTolerance) {
    Series<S> q = quotient(k, l);
    QuotientCertificate cert;
    static_cast<SignCertificate&>(cert) = nonnegative_certificate(q, 0, tol);
    for (const auto& c : q.coeffs()) cert.quotient.push_back(to_double(c));
    return cert;
}

template <class S>
struct KernelFactorization {
    KernelSeries<S> k;
    KernelSeries<S> s;  // CNP factor
    Series<S> g;        // non-negative, g_0 = 1

    int truncation() const { return g.truncation(); }
};

/// Computes g = k/s and checks that k = s*g is a CNP factorization at this truncation.
template <class S>
KernelFactorization<S> factorize_with_cnp(const KernelSeries<S>& k, const KernelSeries<S>& s,
                                          double tol = kDefaultSignTolerance) {
    if (k.dim() != s.dim()) throw std::invalid_argument("kernel dimension mismatch");
    const auto cnp = is_cnp(s, tol);
    if (!cnp.holds)
        throw NotAFactorization("factor '" + s.label() + "' fails the CNP certificate at n = " +
                                std::to_string(*cnp.first_negative));
    const int N = std::min(k.truncation(), s.truncation());
    Series<S> g = quotient(k.coeffs(), s.coeffs());
    if (!(g[0] == S(1))) throw NotAFactorization("quotient has g_0 != 1");
    const auto sign = nonnegative_certificate(g, 0, tol);
    if (!sign.holds)
        throw NotAFactorization("not a factorization: g_" + std::to_string(*sign.first_negative) + " < 0");
    for (int n = 0; n <= N; ++n) {
        if (s[n] > k[n] || g[n] > k[n])
            throw std::logic_error("factor coefficient exceeds a_" + std::to_string(n) + "^(k)");
    }
    return {k.truncated(N), s.truncated(N).with_radius_one_assumed(true), g};
}

struct AdmissibilityReport {
    double ratio_sup = 0.0;        // max_{n<N} a_n / a_{n+1}
    int ratio_argmax = 0;
    double partial_sum_bound = 0.0;  // max over n <= N, D <= n of |1 - sum_{j<=D} b_j a_{n-j} / a_n|
    double min_final_value = 1.0;    // min over n of the complete sum (D = n)
    int checked_up_to = 0;
    bool certified = false;
    std::string verdict;
};

/// Truncation-level admissibility certificate. The diagonal of
/// I - sum_{|alpha| <= D} b_alpha M^alpha M^alpha* at a monomial of degree n
/// reduces (multinomial Vandermonde) to 1 - sum_{j<=D} b_j a_{n-j} / a_n.
template <class S>
AdmissibilityReport admissibility_report(const KernelSeries<S>& k, double tol = kDefaultSignTolerance) {
    AdmissibilityReport rep;
    const int N = k.truncation();
    rep.checked_up_to = N;
    for (int n = 0; n < N; ++n) {
        const double r = to_double(k[n]) / to_double(k[n + 1]);
        if (r > rep.ratio_sup) {
            rep.ratio_sup = r;
            rep.ratio_argmax = n;
        }
    }
    const Series<S> b = b_series(k);
    for (int n = 0; n <= N; ++n) {
        S acc(0);
        rep.partial_sum_bound = std::max(rep.partial_sum_bound, 1.0);
        for (int D = 1; D <= n; ++D) {
            acc += b[D] * k[n - D];
            rep.partial_sum_bound =
                std::max(rep.partial_sum_bound, std::abs(1.0 - to_double(acc) / to_double(k[n])));
        }
        const double final_value = 1.0 - to_double(acc) / to_double(k[n]);
        rep.min_final_value = std::min(rep.min_final_value, final_value);
    }
    rep.certified = std::isfinite(rep.ratio_sup) && rep.min_final_value >= -tol;
    rep.verdict = rep.certified ? "certified up to N = " + std::to_string(N)
                                : "not certified at truncation " + std::to_string(N);
    return rep;
}

// ---------------------------------------------------------------------------
// Multi-index lift and evaluation

/// c_{|alpha|} * binom(|alpha|, alpha).
template <class S>
S lift_to_multiindex(const Series<S>& c, const MultiIndex& alpha) {
    const int n = alpha.degree();
    if (n > c.truncation())
        throw std::out_of_range("degree " + std::to_string(n) + " beyond truncation " + std::to_string(c.truncation()));
    if constexpr (is_exact_v<S>) {
        return c[n] * Rational(multinomial(alpha));
    } else {
        return c[n] * S(multinomial_double(alpha));
    }
}

/// Off-cone indices (a failed subtraction) carry coefficient zero.
template <class S>
S lift_to_multiindex(const Series<S>& c, const std::optional<MultiIndex>& alpha) {
    return alpha ? lift_to_multiindex(c, *alpha) : S(0);
}

template <class S>
S lift_to_multiindex(const KernelSeries<S>& k, const MultiIndex& alpha) {
    return lift_to_multiindex(k.coeffs(), alpha);
}

/// sum_{alpha <= beta} p_alpha q_{beta - alpha} with lifted coefficients.
template <class S>
S lifted_convolution(const Series<S>& p, const Series<S>& q, const MultiIndex& beta) {
    S acc(0);
    for (const auto& alpha : enumerate_up_to_degree(beta.dim(), beta.degree())) {
        if (!alpha.dominated_by(beta)) continue;
        acc += lift_to_multiindex(p, alpha) * lift_to_multiindex(q, beta.subtract(alpha));
    }
    return acc;
}

inline Complex inner(const VecC& z, const VecC& w) {
    if (z.size() != w.size()) throw std::invalid_argument("point dimension mismatch");
    Complex acc(0.0, 0.0);
    for (Eigen::Index i = 0; i < z.size(); ++i) acc += z(i) * std::conj(w(i));
    return acc;
}

/// z^alpha for a point z.
inline Complex monomial(const VecC& z, const MultiIndex& alpha) {
    Complex acc(1.0, 0.0);
    for (int i = 0; i < alpha.dim(); ++i)
        for (int e = 0; e < alpha[i]; ++e) acc *= z(i);
    return acc;
}

template <class S>
Complex evaluate_series(const Series<S>& c, Complex t) {
    Complex acc(0.0, 0.0), power(1.0, 0.0);
    for (int n = 0; n <= c.truncation(); ++n) {
        acc += to_double(c[n]) * power;
        power *= t;
    }
    return acc;
}

struct KernelValue {
    Complex value;
    double tail_bound = 0.0;  // estimate; +inf when the ratio heuristic fails
    bool exact = false;
};

/// Partial sum of k(z, w) plus a geometric tail estimate from the growth of
/// the stored coefficients. With truncated semantics the partial sum is the value.
template <class S>
KernelValue evaluate(const KernelSeries<S>& k, const VecC& z, const VecC& w, bool truncated_semantics = false) {
    if (z.size() != k.dim() || w.size() != k.dim()) throw std::invalid_argument("point dimension mismatch");
    if (z.norm() >= 1.0 || w.norm() >= 1.0) throw std::domain_error("point on or outside the unit sphere");
    const Complex t = inner(z, w);
    KernelValue out;
    out.value = evaluate_series(k.coeffs(), t);
    if (truncated_semantics) {
        out.exact = true;
        return out;
    }
    const int N = k.truncation();
    double growth = 0.0;
    for (int n = N / 2; n < N; ++n) growth = std::max(growth, to_double(k[n + 1]) / to_double(k[n]));
    if (N == 0) growth = 1.0;
    const double r = std::abs(t);
    if (r == 0.0) {
        out.tail_bound = 0.0;
    } else if (growth * r < 1.0) {
        out.tail_bound = to_double(k[N]) * std::pow(r, N + 1) * growth / (1.0 - growth * r);
    } else {
        out.tail_bound = std::numeric_limits<double>::infinity();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Named kernels

/// Generalized Bergman kernel (1 - <z,w>)^{-m}: a_n = binom(n + m - 1, n).
inline KernelSeries<Rational> bergman_kernel(int m, int d, int N = kDefaultTruncation) {
    if (m < 1) throw std::invalid_argument("Bergman parameter m must be >= 1");
    if (N < 0) throw std::invalid_argument("truncation must be >= 0");
    std::vector<Rational> a;
    for (int n = 0; n <= N; ++n) a.emplace_back(binomial(n + m - 1, n));
    return KernelSeries<Rational>(Series<Rational>(std::move(a)), d, m == 1 ? "DA" : "k" + std::to_string(m));
}

/// Drury-Arveson kernel (Szego kernel when d = 1).
inline KernelSeries<Rational> drury_arveson_kernel(int d, int N = kDefaultTruncation) { return bergman_kernel(1, d, N); }

/// Dirichlet-type kernel with a_n = 1/(n+1).
inline KernelSeries<Rational> dirichlet_kernel(int d, int N = kDefaultTruncation) {
    if (N < 0) throw std::invalid_argument("truncation must be >= 0");
    std::vector<Rational> a;
    for (int n = 0; n <= N; ++n) a.emplace_back(Rational(1, n + 1));
    return KernelSeries<Rational>(Series<Rational>(std::move(a)), d, "Dirichlet");
}

}  // namespace kchar

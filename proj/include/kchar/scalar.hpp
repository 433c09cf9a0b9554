#pragma once

// Scalar backends shared by every module: exact rationals (GMP) for coefficient
// and squared-operator identities, complex doubles for anything needing roots.

#include <gmpxx.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace Eigen {
template <>
struct NumTraits<mpq_class> : GenericNumTraits<mpq_class> {
    using Real = mpq_class;
    using NonInteger = mpq_class;
    using Nested = mpq_class;
    using Literal = mpq_class;
    enum {
        IsInteger = 0,
        IsSigned = 1,
        IsComplex = 0,
        RequireInitialization = 1,
        ReadCost = 6,
        AddCost = 150,
        MulCost = 100
    };
    static inline Real epsilon() { return 0; }
    static inline Real dummy_precision() { return 0; }
    static inline int digits10() { return 0; }
};
}  // namespace Eigen

namespace kchar {

using Rational = mpq_class;
using Integer = mpz_class;
using Complex = std::complex<double>;

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatC = Mat<Complex>;
using VecC = Vec<Complex>;
using MatQ = Mat<Rational>;
using VecQ = Vec<Rational>;

/// Compile-time description of a scalar backend.
template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<Rational> {
    static constexpr bool exact = true;
    static constexpr const char* name = "exact";
};

template <>
struct ScalarTraits<double> {
    static constexpr bool exact = false;
    static constexpr const char* name = "float";
};

template <>
struct ScalarTraits<Complex> {
    static constexpr bool exact = false;
    static constexpr const char* name = "float";
};

template <class S>
inline constexpr bool is_exact_v = ScalarTraits<S>::exact;

inline Rational canonical(Rational q) {
    q.canonicalize();
    return q;
}

/// Parses "p/q", "p" or a plain decimal integer into a canonical rational.
inline Rational parse_rational(const std::string& text) {
    auto trimmed = text;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) trimmed.erase(0, 1);
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
    if (trimmed.empty()) throw std::invalid_argument("empty rational literal");
    if (trimmed.front() == '+') trimmed.erase(0, 1);
    Rational q;
    if (q.set_str(trimmed, 10) != 0) throw std::invalid_argument("malformed rational literal '" + text + "'");
    if (q.get_den() == 0) throw std::invalid_argument("zero denominator in '" + text + "'");
    q.canonicalize();
    return q;
}

inline std::string to_string(const Rational& q) {
    return canonical(q).get_str(10);
}

inline double to_double(const Rational& q) { return q.get_d(); }
inline double to_double(double x) { return x; }

inline double magnitude(const Rational& q) { return std::abs(q.get_d()); }
inline double magnitude(double x) { return std::abs(x); }
inline double magnitude(const Complex& x) { return std::abs(x); }

template <class S>
S from_rational(const Rational& q) {
    if constexpr (std::is_same_v<S, Rational>) {
        return q;
    } else {
        return S(q.get_d());
    }
}

template <class S>
S from_int(long v) {
    if constexpr (std::is_same_v<S, Rational>) {
        return Rational(v);
    } else {
        return S(static_cast<double>(v));
    }
}

inline Rational conj(const Rational& q) { return q; }
inline double conj(double x) { return x; }
inline Complex conj(const Complex& x) { return std::conj(x); }

inline bool is_zero(const Rational& q) { return sgn(q) == 0; }

template <class S>
Mat<Complex> to_complex(const Mat<S>& m) {
    Mat<Complex> out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if constexpr (std::is_same_v<S, Complex>) {
                out(i, j) = m(i, j);
            } else {
                out(i, j) = Complex(to_double(m(i, j)), 0.0);
            }
        }
    return out;
}

/// Largest absolute entry; used for residuals of matrices in non-orthonormal bases.
template <class S>
double max_abs(const Mat<S>& m) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) best = std::max(best, magnitude(m(i, j)));
    return best;
}

template <class S>
bool is_exact_zero(const Mat<S>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (!(m(i, j) == S(0))) return false;
    return true;
}

}  // namespace kchar

#include "kchar/kernel_series.hpp"
#include "kchar/kernel_spec.hpp"
#include "kchar/linalg.hpp"

#include <gtest/gtest.h>

using namespace kchar;

namespace {

// Pascal triangle in machine integers, independent of the library's binomial.
long long pascal(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::vector<long long> row{1};
    for (int i = 1; i <= n; ++i) {
        std::vector<long long> next(static_cast<std::size_t>(i + 1), 1);
        for (int j = 1; j < i; ++j) next[static_cast<std::size_t>(j)] = row[static_cast<std::size_t>(j - 1)] + row[static_cast<std::size_t>(j)];
        row = std::move(next);
    }
    return row[static_cast<std::size_t>(k)];
}

}  // namespace

TEST(KernelSeries, Validation) {
    EXPECT_THROW(KernelSeries<Rational>(Series<Rational>({Rational(2), Rational(1)}), 1), std::invalid_argument);
    EXPECT_THROW(KernelSeries<Rational>(Series<Rational>({Rational(1), Rational(0)}), 1), std::invalid_argument);
    EXPECT_THROW(KernelSeries<Rational>(Series<Rational>({Rational(1), Rational(-1)}), 1), std::invalid_argument);
    EXPECT_THROW(KernelSeries<Rational>(Series<Rational>({Rational(1)}), 0), std::invalid_argument);
    EXPECT_THROW(Series<Rational>(std::vector<Rational>{}), std::invalid_argument);
    const auto k = bergman_kernel(2, 1, 4);
    EXPECT_THROW((void)k.at(5), std::out_of_range);
    EXPECT_EQ(k[3], 4);
}

TEST(KernelSeries, BergmanBSeriesClosedForm) {
    for (int m = 1; m <= 6; ++m) {
        const auto b = b_series(bergman_kernel(m, 1, 20));
        EXPECT_EQ(b[0], 0);
        for (int n = 1; n <= 20; ++n) {
            const long long sign = n % 2 ? 1 : -1;
            EXPECT_EQ(b[n], Rational(static_cast<long>(sign * pascal(m, n)))) << "m=" << m << " n=" << n;
        }
    }
}

TEST(KernelSeries, DirichletBSeries) {
    const auto b = b_series(dirichlet_kernel(1, 50));
    EXPECT_EQ(b[1], Rational(1, 2));
    EXPECT_EQ(b[2], Rational(1, 12));
    // (1 - sum b_n t^n) * a(t) = 1.
    const auto one = cauchy_product(dirichlet_kernel(1, 50).coeffs(), reciprocal(dirichlet_kernel(1, 50).coeffs()));
    EXPECT_EQ(one[0], 1);
    for (int n = 1; n <= 50; ++n) EXPECT_EQ(one[n], 0);
}

TEST(KernelSeries, CnpVerdicts) {
    const auto da = is_cnp(drury_arveson_kernel(1, 200));
    EXPECT_TRUE(da.holds);
    EXPECT_EQ(da.checked_up_to, 200);
    for (int m = 2; m <= 6; ++m) {
        const auto c = is_cnp(bergman_kernel(m, 1, 20));
        EXPECT_FALSE(c.holds);
        ASSERT_TRUE(c.first_negative.has_value());
        EXPECT_EQ(*c.first_negative, 2);
    }
    EXPECT_TRUE(is_cnp(dirichlet_kernel(1, 50)).holds);
    // Float mode agrees on these.
    EXPECT_TRUE(is_cnp(kernel_cast<double>(dirichlet_kernel(1, 50))).holds);
    EXPECT_FALSE(is_cnp(kernel_cast<double>(bergman_kernel(3, 1, 10))).holds);
}

TEST(KernelSeries, QuotientAndFactorization) {
    // k_3 / k_1 = (1 - t)^{-2}.
    const auto cert = is_positive_quotient(bergman_kernel(3, 1, 30), drury_arveson_kernel(1, 30));
    EXPECT_TRUE(cert.holds);
    const auto q = quotient(bergman_kernel(3, 1, 30), drury_arveson_kernel(1, 30));
    for (int n = 0; n <= 30; ++n) EXPECT_EQ(q[n], n + 1);
    // k_1 / k_2 = 1 - t.
    EXPECT_FALSE(is_positive_quotient(drury_arveson_kernel(1, 10), bergman_kernel(2, 1, 10)).holds);

    const auto F = factorize_with_cnp(bergman_kernel(2, 2, 20), drury_arveson_kernel(2, 20));
    for (int n = 0; n <= 20; ++n) EXPECT_EQ(F.g[n], 1);
    EXPECT_TRUE(F.s.radius_one_assumed());
    EXPECT_THROW(factorize_with_cnp(bergman_kernel(3, 1, 10), bergman_kernel(2, 1, 10)), NotAFactorization);
    // Dirichlet / Szego = (1 - t) a_Dir has g_1 = -1/2.
    EXPECT_THROW(factorize_with_cnp(dirichlet_kernel(1, 10), drury_arveson_kernel(1, 10)), NotAFactorization);

    const auto dadir = cauchy_product(drury_arveson_kernel(1, 20), dirichlet_kernel(1, 20));
    const auto F2 = factorize_with_cnp(dadir, dirichlet_kernel(1, 20));
    for (int n = 0; n <= 20; ++n) EXPECT_EQ(F2.g[n], 1);
    // Harmonic numbers H_{n+1}.
    Rational h = 0;
    for (int n = 0; n <= 20; ++n) {
        h += Rational(1, n + 1);
        EXPECT_EQ(dadir[n], h);
    }
}

TEST(KernelSeries, LiftMatchesOneVariableSeries) {
    // sum_alpha a_alpha z^alpha conj(w^alpha) = sum_n a_n <z, w>^n, term by term.
    Rng rng(3);
    const auto k = bergman_kernel(3, 3, 12);
    for (int trial = 0; trial < 5; ++trial) {
        const VecC z = random_ball_point(3, 0.9, rng), w = random_ball_point(3, 0.9, rng);
        for (int n = 0; n <= 12; ++n) {
            Complex lhs(0, 0);
            for (const auto& a : enumerate_degree(3, n))
                lhs += to_double(lift_to_multiindex(k.coeffs(), a)) * monomial(z, a) * std::conj(monomial(w, a));
            const Complex rhs = to_double(k[n]) * std::pow(inner(z, w), n);
            EXPECT_LT(std::abs(lhs - rhs), 1e-12) << n;
        }
    }
    EXPECT_THROW(lift_to_multiindex(k.coeffs(), MultiIndex{13, 0, 0}), std::out_of_range);
    EXPECT_EQ(lift_to_multiindex(k.coeffs(), std::optional<MultiIndex>{}), 0);
}

TEST(KernelSeries, LiftedConvolutionIsProductKernel) {
    // Lifting commutes with the Cauchy product: (s*g)_alpha = sum_{beta <= alpha} s_beta g_{alpha - beta}.
    const auto s = drury_arveson_kernel(2, 8), g = dirichlet_kernel(2, 8);
    const auto k = cauchy_product(s, g);
    for (const auto& a : enumerate_up_to_degree(2, 8))
        EXPECT_EQ(lifted_convolution(s.coeffs(), g.coeffs(), a), lift_to_multiindex(k.coeffs(), a)) << a;
}

TEST(KernelSeries, EvaluateWithTailBound) {
    const auto k = bergman_kernel(2, 2, 40);
    VecC z(2), w(2);
    z << Complex(0.3, 0.1), Complex(0.2, 0.0);
    w << Complex(0.1, 0.0), Complex(0.0, 0.4);
    const auto v = evaluate(k, z, w);
    const Complex exact = 1.0 / std::pow(1.0 - inner(z, w), 2);
    EXPECT_LE(std::abs(v.value - exact), v.tail_bound + 1e-15);
    EXPECT_LT(v.tail_bound, 1e-20);
    VecC out(2);
    out << 1.0, 0.0;
    EXPECT_THROW(evaluate(k, out, w), std::domain_error);
}

TEST(KernelSeries, Admissibility) {
    const auto da = admissibility_report(drury_arveson_kernel(1, 30));
    EXPECT_TRUE(da.certified);
    EXPECT_NEAR(da.min_final_value, 0.0, 1e-15);
    const auto k2 = admissibility_report(bergman_kernel(2, 1, 30));
    EXPECT_TRUE(k2.certified);
    EXPECT_DOUBLE_EQ(k2.ratio_sup, 30.0 / 31.0);
}

TEST(KernelSpec, ParsesAndRejects) {
    EXPECT_EQ(kernel_from_json(Json::parse(R"({"kind":"bergman","m":2,"d":2,"truncation":5})")).coeffs(),
              bergman_kernel(2, 2, 5).coeffs());
    EXPECT_EQ(kernel_from_json(Json::parse(R"({"kind":"dirichlet","truncation":5})")).coeffs(),
              dirichlet_kernel(1, 5).coeffs());
    const auto c = kernel_from_json(Json::parse(R"({"kind":"coeffs","a":["1","1/2","1/3"],"d":2})"));
    EXPECT_EQ(c[2], Rational(1, 3));
    EXPECT_EQ(c.dim(), 2);
    const auto p = kernel_from_json(
        Json::parse(R"({"kind":"product","truncation":6,"factors":[{"kind":"szego"},{"kind":"dirichlet"}]})"));
    EXPECT_EQ(p.coeffs(), cauchy_product(drury_arveson_kernel(1, 6), dirichlet_kernel(1, 6)).coeffs());
    EXPECT_THROW(kernel_from_json(Json::parse(R"({"kind":"nope"})")), SpecError);
    EXPECT_THROW(kernel_from_json(Json::parse(R"({"kind":"coeffs","a":["2","1"]})")), SpecError);
    EXPECT_THROW(kernel_from_json(Json::parse(R"({"kind":"coeffs","a":["1","x"]})")), SpecError);
    EXPECT_THROW(kernel_from_json(Json::parse(R"({"kind":"bergman"})")), SpecError);
    EXPECT_THROW(kernel_from_json(Json::parse(R"([1,2])")), SpecError);
    EXPECT_THROW(load_kernel("/nonexistent.json"), SpecError);
    // Round trip through the coefficient form keeps exact rationals.
    const auto k = dirichlet_kernel(1, 7);
    EXPECT_EQ(kernel_from_json(kernel_to_json(k)).coeffs(), k.coeffs());
}

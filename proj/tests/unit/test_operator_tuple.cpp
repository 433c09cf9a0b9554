#include "kchar/operator_tuple.hpp"

#include <gtest/gtest.h>

using namespace kchar;

TEST(OperatorTuple, RejectsNonCommuting) {
    MatC A = MatC::Zero(2, 2), B = MatC::Zero(2, 2);
    A(1, 0) = 1.0;
    B(0, 1) = 1.0;
    EXPECT_THROW(TupleC({A, B}), std::invalid_argument);
    EXPECT_THROW(TupleC({A, MatC::Zero(3, 3)}), std::invalid_argument);
}

TEST(OperatorTuple, ModelTupleShape) {
    for (int d = 1; d <= 2; ++d)
        for (int N = 0; N <= 3; ++N) {
            const auto T = model_tuple<Rational>(bergman_kernel(2, d, 10), d, N);
            EXPECT_EQ(T.size(), MultiIndexSet::up_to_degree(d, N).size());
            EXPECT_EQ(nilpotency_degree(T), N + 1);
            EXPECT_EQ(nilpotency_degree(to_float(T)), N + 1);
        }
    EXPECT_THROW(model_tuple<Rational>(bergman_kernel(2, 1, 3), 1, 4), std::out_of_range);
}

TEST(OperatorTuple, WeightedAdjoint) {
    // <A x, y>_W = <x, A^adj y>_W for every vector pair.
    const auto T = model_tuple<Rational>(dirichlet_kernel(2, 10), 2, 2);
    const MatQ G = T.gram();
    for (int i = 0; i < T.dim(); ++i) {
        const MatQ lhs = T[i].transpose() * G;
        const MatQ rhs = G * T.adjoint(T[i]);
        EXPECT_TRUE(is_exact_zero(MatQ(lhs - rhs)));
    }
}

TEST(OperatorTuple, FloatModelIsUnitarilyEquivalent) {
    // The orthonormal view of the monomial model must have T_i* given by the
    // plain conjugate transpose, and its entries sqrt(a_alpha / a_{alpha+e_i}).
    const auto k = bergman_kernel(3, 2, 10);
    const auto Tq = model_tuple<Rational>(k, 2, 3);
    const auto Tc = model_tuple<Complex>(k, 2, 3);
    const auto Tf = to_float(Tq);
    for (int i = 0; i < 2; ++i) EXPECT_LT(max_abs(MatC(Tc[i] - Tf[i])), 1e-15);
    const auto& labels = Tc.labels();
    // e(0,0) -> sqrt(a_(0,0)/a_(1,0)) e(1,0) with a_(1,0) = 3.
    EXPECT_NEAR(std::abs(Tc[0](1, 0)), std::sqrt(1.0 / 3.0), 1e-15);
    EXPECT_EQ(labels[1], MultiIndex({1, 0}));
}

TEST(OperatorTuple, DefectOfModelIsProjectionOntoConstants) {
    for (int m = 1; m <= 3; ++m)
        for (int d = 1; d <= 2; ++d)
            for (int N = 0; N <= 3; ++N) {
                const auto k = bergman_kernel(m, d, 12);
                const auto T = model_tuple<Rational>(k, d, N);
                const auto sq = defect_squares(T, k, k);
                MatQ e0 = MatQ::Zero(T.size(), T.size());
                e0(0, 0) = 1;
                EXPECT_TRUE(is_exact_zero(MatQ(sq.delta_sq - e0))) << m << d << N;
                EXPECT_TRUE(sq.exact);
                const auto pur = purity_check(T, k, sq.delta_sq);
                EXPECT_TRUE(pur.pure);
                EXPECT_TRUE(pur.exact);
            }
}

TEST(OperatorTuple, ScalarContraction) {
    // T = [t] on C with the weighted Bergman kernel k_2: Delta^2 = (1 - t^2)^2,
    // and sum a_n t^{2n} Delta^2 = 1.
    const TupleC T({MatC::Constant(1, 1, 0.5)});
    const auto k2 = bergman_kernel(2, 1, 64);
    const auto sq = defect_squares(T, k2, k2);
    EXPECT_NEAR(sq.delta_sq(0, 0).real(), 0.5625, 1e-15);
    EXPECT_FALSE(sq.exact);
    const auto pur = purity_check(T, k2, sq.delta_sq);
    EXPECT_TRUE(pur.pure);
    EXPECT_LT(pur.residual, 1e-12);
}

TEST(OperatorTuple, NotAContraction) {
    const TupleC T({MatC::Constant(1, 1, 2.0)});
    const auto sz = drury_arveson_kernel(1, 32);
    EXPECT_THROW(defect_data(T, sz, sz), NotAContraction);
}

TEST(OperatorTuple, ExactSumNeedsNilpotency) {
    const TupleQ T({MatQ::Constant(1, 1, Rational(1, 2))});
    const auto sz = drury_arveson_kernel(1, 32);
    EXPECT_THROW(defect_squares(T, sz, sz), NoConvergence);
}

TEST(OperatorTuple, IsometryIsNotPure) {
    const TupleC T({MatC::Identity(1, 1)});
    const auto sz = drury_arveson_kernel(1, 32);
    const auto sq = defect_squares(T, sz, sz);
    const auto pur = purity_check(T, sz, sq.delta_sq);
    EXPECT_FALSE(pur.pure);
    EXPECT_NEAR(pur.residual, 1.0, 1e-15);
}

TEST(OperatorTuple, ExactPsdAgreesWithEigenvalues) {
    Rng rng(11);
    std::uniform_int_distribution<int> u(-3, 3);
    const TupleQ I({MatQ::Zero(3, 3)});
    int pos = 0, neg = 0;
    for (int trial = 0; trial < 200; ++trial) {
        MatQ L(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) L(i, j) = u(rng);
        MatQ A = L * L.transpose();
        if (trial % 2) A(2, 2) -= 1;
        Eigen::Matrix3d Ad;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) Ad(i, j) = to_double(A(i, j));
        const double lam = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(Ad).eigenvalues().minCoeff();
        if (std::abs(lam) < 1e-9) continue;  // singular cases decided exactly below
        const bool psd = is_psd_exact(I, A);
        EXPECT_EQ(psd, lam > 0) << A;
        (psd ? pos : neg)++;
    }
    EXPECT_GT(pos, 10);
    EXPECT_GT(neg, 10);
    MatQ singular = MatQ::Zero(2, 2);
    singular(0, 0) = 1;
    EXPECT_TRUE(is_psd_exact(TupleQ({MatQ::Zero(2, 2)}), singular));
    MatQ indefinite = MatQ::Zero(2, 2);
    indefinite(0, 1) = indefinite(1, 0) = 1;
    EXPECT_FALSE(is_psd_exact(TupleQ({MatQ::Zero(2, 2)}), indefinite));
}

TEST(OperatorTuple, OperatorSeriesOnJordanBlock) {
    MatC J = MatC::Zero(2, 2);
    J(1, 0) = 1.0;
    const TupleC T({J});
    VecC w(1);
    w << Complex(0.3, 0.4);
    // k_w(T) = sum conj(w)^n T^n = I + conj(w) J.
    const MatC expect = MatC::Identity(2, 2) + std::conj(w(0)) * J;
    EXPECT_LT(max_abs(MatC(operator_series(T, drury_arveson_kernel(1, 20).coeffs(), w) - expect)), 1e-15);
}

TEST(OperatorTuple, Compression) {
    Rng rng(5);
    const auto T = model_tuple<Complex>(bergman_kernel(2, 2, 10), 2, 3);
    const auto c = random_coinvariant_compression(T, rng);
    EXPECT_TRUE(c.coinvariant);
    EXPECT_LT(c.coinvariance_defect, 1e-10);
    EXPECT_LT(c.tuple.size(), T.size());
    EXPECT_TRUE(nilpotency_degree(c.tuple).has_value());
    MatC P = MatC::Zero(T.size(), 2);
    P(0, 0) = 1.0;
    P(1, 1) = 2.0;
    EXPECT_THROW(compress(T, P), std::invalid_argument);
}

TEST(OperatorTuple, QuadraticFormCertificate) {
    // k = l = k_2, model degree 0, tested on z^2: 1 - 2 * (a_1 / a_2) = 1 - 4/3.
    const auto k2 = bergman_kernel(2, 1, 10);
    VecQ v = VecQ::Zero(3);
    v(2) = 1;
    EXPECT_EQ(quadratic_form_certificate(k2, k2, 0, 2, {v}).front(), Rational(-1, 3));
    VecQ bad = VecQ::Zero(3);
    bad(0) = 1;
    EXPECT_THROW(quadratic_form_certificate(k2, k2, 0, 2, {bad}), std::invalid_argument);
}

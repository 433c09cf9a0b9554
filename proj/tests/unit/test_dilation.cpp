#include "kchar/dilation.hpp"
#include "kchar/presets.hpp"

#include <gtest/gtest.h>

using namespace kchar;

namespace {

MatC jordan(int n) {
    MatC J = MatC::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) J(i + 1, i) = 1.0;
    return J;
}

}  // namespace

TEST(Dilation, JordanBlockByHand) {
    // T e0 = e1 on the Hardy space: Delta^2 = I - TT* = e0 e0*, and
    // V e0 = 1 (x) e0, V e1 = z (x) e0.
    const TupleC T({jordan(2)});
    const auto sz = drury_arveson_kernel(1, 32);
    const auto defect = defect_data(T, sz, sz);
    const auto D = build_dilation(T, sz, defect, 4);
    ASSERT_EQ(D.target.r, 1);
    MatC expect = MatC::Zero(5, 2);
    expect(0, 0) = 1.0;
    expect(1, 1) = 1.0;
    // Ran Delta basis is e0 up to phase; canonical phase makes it +1.
    EXPECT_LT(max_abs(MatC(D.V - expect)), 1e-15);
    EXPECT_TRUE(D.exact);
    EXPECT_EQ(D.nilpotency, 2);
}

TEST(Dilation, ModelTuplesAreIsometricAndIntertwine) {
    for (const char* k : {"k1", "k2", "k3"})
        for (int d = 1; d <= 2; ++d)
            for (int N = 0; N <= 3; ++N) {
                const auto c = model_configuration(k, "da", d, N);
                const auto defect = defect_data(c.T, c.F.k, c.F.s);
                const auto D = build_dilation(c.T, c.F.k, defect, N + 2);
                EXPECT_LT(D.isometry_residual, 1e-10) << c.name;
                for (double r : intertwining_residual(D, c.T, c.F.k)) EXPECT_LT(r, 1e-10) << c.name;
            }
}

TEST(Dilation, KernelVectorAction) {
    Rng rng(2);
    const auto c = model_configuration("dadir", "dir", 2, 2);
    const auto defect = defect_data(c.T, c.F.k, c.F.s);
    const auto D = build_dilation(c.T, c.F.k, defect, 4);
    for (int i = 0; i < 20; ++i) {
        const VecC w = random_ball_point(2, 0.7, rng);
        const VecC xi = random_unit_vector(D.target.r, rng);
        const auto act = kernel_vector_action(D, c.T, c.F.k, w, xi);
        EXPECT_LT(act.disagreement, 1e-10);
    }
    // Too small a target drops terms of k_w(T).
    const auto small = build_dilation(c.T, c.F.k, defect, 1);
    EXPECT_FALSE(small.exact);
    VecC w(2);
    w << 0.5, 0.3;
    EXPECT_THROW(kernel_vector_action(small, c.T, c.F.k, w, VecC::Ones(1)), std::runtime_error);
    EXPECT_THROW(kernel_vector_action(D, c.T, c.F.k, w, VecC::Ones(3)), std::invalid_argument);
}

TEST(Dilation, CorruptedIsometryIsDetected) {
    const auto c = model_configuration("k2", "da", 2, 2);
    const auto defect = defect_data(c.T, c.F.k, c.F.s);
    auto D = build_dilation(c.T, c.F.k, defect, 4);
    D.V(3, 1) += 1e-4;
    EXPECT_GT(opnorm(D.V.adjoint() * D.V - MatC::Identity(c.T.size(), c.T.size())), 1e-5);
    double worst = 0.0;
    for (double r : intertwining_residual(D, c.T, c.F.k)) worst = std::max(worst, r);
    EXPECT_GT(worst, 1e-5);
}

TEST(Dilation, NotPure) {
    const TupleC T({MatC::Identity(1, 1)});
    const auto sz = drury_arveson_kernel(1, 32);
    // Delta = 0, so every vector lies outside the range of V.
    const auto defect = defect_data(T, sz, sz);
    EXPECT_THROW(build_dilation(T, sz, defect, 3), NotPure);
}

TEST(Dilation, AssociatedTuple) {
    const auto c = model_configuration("k2", "da", 1, 1);
    const auto defect = defect_data(c.T, c.F.k, c.F.s);
    const auto ok = associated_tuple_test(c.T, c.F.k, c.F.s, defect, 4);
    EXPECT_TRUE(ok.holds);
    EXPECT_GT(ok.kernel_dim, 0);
    // Through k_2 itself: the quadratic form on z^{N+2} is 1 - 2 (N+2)/(N+3) < 0.
    const auto k2 = bergman_kernel(2, 1, 32);
    const auto bad = associated_tuple_test(c.T, c.F.k, k2, defect, 4);
    EXPECT_FALSE(bad.holds);
    EXPECT_LE(bad.min_eigenvalue, 1.0 - 2.0 * 3.0 / 4.0 + 1e-12);
    EXPECT_THROW(associated_tuple_test(c.T, c.F.k, c.F.s, defect, 0), std::invalid_argument);
}

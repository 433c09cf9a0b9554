#include "kchar/multiindex.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace kchar;

namespace {

// Every tuple in [0, n]^d with entry sum n, by odometer.
std::set<std::vector<int>> brute_force_degree(int d, int n) {
    std::set<std::vector<int>> out;
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    while (true) {
        int s = 0;
        for (int x : e) s += x;
        if (s == n) out.insert(e);
        int i = 0;
        while (i < d && e[static_cast<std::size_t>(i)] == n) e[static_cast<std::size_t>(i++)] = 0;
        if (i == d) break;
        ++e[static_cast<std::size_t>(i)];
    }
    return out;
}

long long choose(int n, int k) {
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

TEST(MultiIndex, EnumerationMatchesBruteForce) {
    for (int d = 1; d <= 4; ++d)
        for (int n = 0; n <= 5; ++n) {
            const auto got = enumerate_degree(d, n);
            std::set<std::vector<int>> seen;
            for (const auto& a : got) seen.insert(a.entries());
            EXPECT_EQ(seen.size(), got.size()) << "duplicates at d=" << d << " n=" << n;
            EXPECT_EQ(seen, brute_force_degree(d, n));
            EXPECT_EQ(static_cast<long long>(got.size()), choose(n + d - 1, d - 1));
        }
}

TEST(MultiIndex, GradedOrder) {
    const auto all = enumerate_up_to_degree(2, 3);
    ASSERT_EQ(all.size(), 10u);
    EXPECT_EQ(all[0], MultiIndex({0, 0}));
    EXPECT_EQ(all[1], MultiIndex({1, 0}));
    EXPECT_EQ(all[2], MultiIndex({0, 1}));
    for (std::size_t i = 1; i < all.size(); ++i) {
        EXPECT_LE(all[i - 1].degree(), all[i].degree());
        EXPECT_TRUE(graded_less(all[i - 1], all[i]));
        EXPECT_FALSE(graded_less(all[i], all[i - 1]));
    }
    const auto range = enumerate_degree_range(3, 2, 3);
    EXPECT_EQ(range.size(), choose(4, 2) + choose(5, 2));
    EXPECT_EQ(range.front().degree(), 2);
    EXPECT_EQ(range.back().degree(), 3);
}

TEST(MultiIndex, Arithmetic) {
    const MultiIndex a{2, 1, 0}, b{1, 1, 0};
    EXPECT_EQ(a + b, MultiIndex({3, 2, 0}));
    EXPECT_EQ(*a.subtract(b), MultiIndex({1, 0, 0}));
    EXPECT_FALSE(b.subtract(a).has_value());
    EXPECT_TRUE(b.dominated_by(a));
    EXPECT_FALSE(a.dominated_by(b));
    EXPECT_EQ(a.plus_unit(2), MultiIndex({2, 1, 1}));
    EXPECT_EQ(MultiIndex::unit(3, 1), MultiIndex({0, 1, 0}));
    EXPECT_EQ(MultiIndex::first_axis(2, 4), MultiIndex({4, 0}));
    EXPECT_THROW(MultiIndex({1, -1}), std::invalid_argument);
    EXPECT_THROW(MultiIndex(0), std::invalid_argument);
    EXPECT_THROW((void)(a + MultiIndex{1, 1}), std::invalid_argument);
}

TEST(MultiIndex, SubtractDominationAgree) {
    const auto all = enumerate_up_to_degree(3, 3);
    for (const auto& a : all)
        for (const auto& b : all) {
            const auto diff = a.subtract(b);
            EXPECT_EQ(diff.has_value(), b.dominated_by(a));
            if (diff) EXPECT_EQ(*diff + b, a);
        }
}

TEST(MultiIndex, Multinomial) {
    EXPECT_EQ(multinomial(MultiIndex{2, 1}), 3);
    EXPECT_EQ(multinomial(MultiIndex{2, 2, 1}), 30);
    EXPECT_EQ(multinomial(MultiIndex{0, 0}), 1);
    // Product of binomials along the axes.
    for (const auto& a : enumerate_up_to_degree(3, 6)) {
        long long prod = 1;
        int acc = 0;
        for (int i = 0; i < 3; ++i) {
            acc += a[i];
            prod *= choose(acc, a[i]);
        }
        EXPECT_EQ(multinomial(a), Integer(static_cast<long>(prod))) << a;
    }
    // sum_{|alpha| = n} binom(n, alpha) = d^n.
    for (int d = 1; d <= 3; ++d)
        for (int n = 0; n <= 6; ++n) {
            Integer s = 0;
            for (const auto& a : enumerate_degree(d, n)) s += multinomial(a);
            Integer p = 1;
            for (int i = 0; i < n; ++i) p *= d;
            EXPECT_EQ(s, p);
        }
    EXPECT_EQ(binomial(5, 2), 10);
    EXPECT_EQ(binomial(3, 5), 0);
    EXPECT_EQ(factorial(10), 3628800);
}

TEST(MultiIndex, MultinomialDoubleOverflow) {
    EXPECT_DOUBLE_EQ(multinomial_double(MultiIndex{3, 2}), 10.0);
    EXPECT_THROW(multinomial_double(MultiIndex{40, 40}), std::overflow_error);
}

TEST(MultiIndex, SetLookup) {
    const auto set = MultiIndexSet::up_to_degree(2, 2);
    EXPECT_EQ(set.size(), 6);
    for (int i = 0; i < set.size(); ++i) EXPECT_EQ(set.find(set[i]), i);
    EXPECT_EQ(set.find(MultiIndex{3, 0}), -1);
    EXPECT_FALSE(set.contains(MultiIndex{0, 3}));
    EXPECT_TRUE(set.contains(MultiIndex{1, 1}));
}

#pragma once

// Multi-indices over Z^d_+ in graded lexicographic order.

#include "kchar/scalar.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kchar {

class MultiIndex {
public:
    MultiIndex() = default;

    /// Zero multi-index of dimension d.
    explicit MultiIndex(int d) : entries_(static_cast<std::size_t>(check_dim(d)), 0) {}

    MultiIndex(std::initializer_list<int> entries) : entries_(entries) { validate(); }

    explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) { validate(); }

    static MultiIndex unit(int d, int i) {
        MultiIndex e(d);
        e.entries_.at(static_cast<std::size_t>(i)) = 1;
        return e;
    }

    /// (n, 0, ..., 0)
    static MultiIndex first_axis(int d, int n) {
        MultiIndex e(d);
        e.entries_[0] = n;
        return e;
    }

    int dim() const { return static_cast<int>(entries_.size()); }
    int degree() const { return std::accumulate(entries_.begin(), entries_.end(), 0); }
    int operator[](int i) const { return entries_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& entries() const { return entries_; }
    bool is_zero() const { return degree() == 0; }

    MultiIndex operator+(const MultiIndex& other) const {
        require_same_dim(other);
        MultiIndex out = *this;
        for (std::size_t i = 0; i < entries_.size(); ++i) out.entries_[i] += other.entries_[i];
        return out;
    }

    MultiIndex plus_unit(int i) const {
        MultiIndex out = *this;
        out.entries_.at(static_cast<std::size_t>(i)) += 1;
        return out;
    }

    /// Componentwise difference; nullopt when the result leaves Z^d_+.
    std::optional<MultiIndex> subtract(const MultiIndex& other) const {
        require_same_dim(other);
        MultiIndex out = *this;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            out.entries_[i] -= other.entries_[i];
            if (out.entries_[i] < 0) return std::nullopt;
        }
        return out;
    }

    /// Componentwise <=.
    bool dominated_by(const MultiIndex& other) const {
        require_same_dim(other);
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i] > other.entries_[i]) return false;
        return true;
    }

    /// Graded order: lower degree first, then lexicographically larger first,
    /// so that (1,0) precedes (0,1).
    friend bool graded_less(const MultiIndex& a, const MultiIndex& b) {
        const int da = a.degree(), db = b.degree();
        if (da != db) return da < db;
        return a.entries_ > b.entries_;
    }

    friend bool operator==(const MultiIndex& a, const MultiIndex& b) { return a.entries_ == b.entries_; }
    friend bool operator!=(const MultiIndex& a, const MultiIndex& b) { return !(a == b); }
    friend bool operator<(const MultiIndex& a, const MultiIndex& b) { return graded_less(a, b); }

    std::string str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(entries_[i]);
        }
        return s + ")";
    }

    friend std::ostream& operator<<(std::ostream& os, const MultiIndex& a) { return os << a.str(); }

private:
    static int check_dim(int d) {
        if (d < 1) throw std::invalid_argument("multi-index dimension must be >= 1");
        return d;
    }

    void validate() const {
        if (entries_.empty()) throw std::invalid_argument("multi-index dimension must be >= 1");
        for (int e : entries_)
            if (e < 0) throw std::invalid_argument("multi-index entries must be non-negative");
    }

    void require_same_dim(const MultiIndex& other) const {
        if (other.dim() != dim()) throw std::invalid_argument("multi-index dimension mismatch");
    }

    std::vector<int> entries_;
};

/// All multi-indices of dimension d and exact degree n, lexicographically descending.
inline std::vector<MultiIndex> enumerate_degree(int d, int n) {
    if (d < 1) throw std::invalid_argument("dimension must be >= 1");
    if (n < 0) return {};
    std::vector<MultiIndex> out;
    std::vector<int> current(static_cast<std::size_t>(d), 0);
    // Recursive fill: first coordinate takes values n..0.
    auto fill = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == d - 1) {
            current[static_cast<std::size_t>(pos)] = remaining;
            out.emplace_back(current);
            return;
        }
        for (int v = remaining; v >= 0; --v) {
            current[static_cast<std::size_t>(pos)] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    fill(fill, 0, n);
    return out;
}

/// All multi-indices with |alpha| <= N in graded order.
inline std::vector<MultiIndex> enumerate_up_to_degree(int d, int N) {
    std::vector<MultiIndex> out;
    for (int n = 0; n <= N; ++n) {
        auto layer = enumerate_degree(d, n);
        out.insert(out.end(), layer.begin(), layer.end());
    }
    return out;
}

/// Multi-indices with lo <= |alpha| <= hi in graded order.
inline std::vector<MultiIndex> enumerate_degree_range(int d, int lo, int hi) {
    std::vector<MultiIndex> out;
    for (int n = std::max(lo, 0); n <= hi; ++n) {
        auto layer = enumerate_degree(d, n);
        out.insert(out.end(), layer.begin(), layer.end());
    }
    return out;
}

inline Integer factorial(int n) {
    Integer f;
    mpz_fac_ui(f.get_mpz_t(), static_cast<unsigned long>(n));
    return f;
}

inline Integer binomial(int n, int k) {
    if (k < 0 || k > n || n < 0) return 0;
    Integer b;
    mpz_bin_uiui(b.get_mpz_t(), static_cast<unsigned long>(n), static_cast<unsigned long>(k));
    return b;
}

/// |alpha|! / (alpha_1! ... alpha_d!), exact.
inline Integer multinomial(const MultiIndex& alpha) {
    Integer num = factorial(alpha.degree());
    for (int e : alpha.entries()) num /= factorial(e);
    return num;
}

/// Float view of multinomial; throws std::overflow_error beyond the exact range of double.
inline double multinomial_double(const MultiIndex& alpha) {
    Integer m = multinomial(alpha);
    static const Integer limit = Integer(1) << std::numeric_limits<double>::digits;
    if (m > limit) throw std::overflow_error("multinomial " + alpha.str() + " exceeds exact double range");
    return m.get_d();
}

/// Position lookup for a graded list of multi-indices.
class MultiIndexSet {
public:
    MultiIndexSet() = default;
    explicit MultiIndexSet(std::vector<MultiIndex> items) : items_(std::move(items)) {
        for (std::size_t i = 0; i < items_.size(); ++i) pos_.emplace(items_[i].entries(), static_cast<int>(i));
    }

    static MultiIndexSet up_to_degree(int d, int N) { return MultiIndexSet(enumerate_up_to_degree(d, N)); }

    int size() const { return static_cast<int>(items_.size()); }
    const MultiIndex& operator[](int i) const { return items_[static_cast<std::size_t>(i)]; }
    const std::vector<MultiIndex>& items() const { return items_; }

    /// -1 when absent.
    int find(const MultiIndex& a) const {
        auto it = pos_.find(a.entries());
        return it == pos_.end() ? -1 : it->second;
    }
    bool contains(const MultiIndex& a) const { return find(a) >= 0; }

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<MultiIndex> items_;
    std::map<std::vector<int>, int> pos_;
};

}  // namespace kchar

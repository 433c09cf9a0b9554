#pragma once

// Named configurations: a factorization k = s * g together with a pure tuple.

#include "kchar/kernel_series.hpp"
#include "kchar/linalg.hpp"
#include "kchar/operator_tuple.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kchar {

inline constexpr int kPresetTruncation = 48;

struct Configuration {
    std::string name;
    KernelFactorization<Rational> F;
    TupleC T;
    std::optional<TupleQ> exact;  // rational form, when the tuple has one
    bool model = false;           // compression of the shifts on H_k to degree <= N
    bool expect_pure = true;
    int N = -1;                   // model degree
};

/// Deterministic generator for one named configuration under a global seed,
/// independent of the order in which configurations run.
inline Rng config_rng(std::uint64_t seed, const std::string& name) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (char c : name) words.push_back(static_cast<unsigned char>(c));
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline KernelSeries<Rational> named_kernel(const std::string& name, int d, int N = kPresetTruncation) {
    if (name == "da" || name == "k1" || name == "szego") return drury_arveson_kernel(d, N);
    if (name == "k2") return bergman_kernel(2, d, N);
    if (name == "k3") return bergman_kernel(3, d, N);
    if (name == "dir") return dirichlet_kernel(d, N);
    if (name == "dadir") return cauchy_product(drury_arveson_kernel(d, N), dirichlet_kernel(d, N));
    throw std::invalid_argument("unknown kernel '" + name + "'");
}

inline Configuration model_configuration(const std::string& kname, const std::string& sname, int d, int N) {
    Configuration c;
    c.name = kname + "-" + sname + "-d" + std::to_string(d) + "-N" + std::to_string(N);
    const auto k = named_kernel(kname, d), s = named_kernel(sname, d);
    c.F = factorize_with_cnp(k, s);
    c.exact = model_tuple<Rational>(k, d, N);
    c.T = to_float(*c.exact);
    c.model = true;
    c.N = N;
    return c;
}

/// Nilpotent Jordan block of size n on the Hardy space: k = s = Szego, d = 1.
inline Configuration jordan_configuration(int n = 2) {
    Configuration c;
    c.name = n == 2 ? "jordan" : "jordan-" + std::to_string(n);
    const auto sz = drury_arveson_kernel(1, kPresetTruncation);
    c.F = factorize_with_cnp(sz, sz);
    MatQ J = MatQ::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) J(i + 1, i) = 1;
    c.exact = TupleQ({J});
    c.T = to_float(*c.exact);
    return c;
}

/// The identity on C^1 with the Szego kernel: an isometry, not pure.
inline Configuration nonpure_configuration() {
    Configuration c;
    c.name = "nonpure";
    const auto sz = drury_arveson_kernel(1, kPresetTruncation);
    c.F = factorize_with_cnp(sz, sz);
    c.exact = TupleQ({MatQ::Identity(1, 1)});
    c.T = to_float(*c.exact);
    c.expect_pure = false;
    return c;
}

/// Random co-invariant compression of the degree-N model tuple.
inline Configuration compression_configuration(const std::string& kname, const std::string& sname, int d, int N,
                                               std::uint64_t seed) {
    Configuration c;
    c.name = "compress-" + kname + "-" + sname + "-d" + std::to_string(d) + "-N" + std::to_string(N);
    const auto k = named_kernel(kname, d), s = named_kernel(sname, d);
    c.F = factorize_with_cnp(k, s);
    Rng rng = config_rng(seed, c.name);
    c.T = random_coinvariant_compression(to_float(model_tuple<Rational>(k, d, N)), rng).tuple;
    return c;
}

/// Direct sums of Jordan blocks with the given sizes (d = 1, Szego).
inline TupleC jordan_sum(const std::vector<int>& sizes) {
    int n = 0;
    for (int s : sizes) n += s;
    MatC J = MatC::Zero(n, n);
    int off = 0;
    for (int s : sizes) {
        for (int i = 0; i + 1 < s; ++i) J(off + i + 1, off + i) = 1.0;
        off += s;
    }
    return TupleC({J});
}

/// The configuration matrix run by the suite.
inline std::vector<Configuration> preset_matrix(std::uint64_t seed) {
    std::vector<Configuration> out;
    out.push_back(jordan_configuration());
    for (const char* k : {"k1", "k2", "k3"})
        for (int d = 1; d <= 2; ++d)
            for (int N = 0; N <= 3; ++N) out.push_back(model_configuration(k, "da", d, N));
    for (const char* s : {"da", "dir"})
        for (int d = 1; d <= 2; ++d)
            for (int N = 0; N <= 3; ++N) out.push_back(model_configuration("dadir", s, d, N));
    for (const char* k : {"k2", "k3"})
        for (int d = 1; d <= 2; ++d) out.push_back(compression_configuration(k, "da", d, 3, seed));
    for (int d = 1; d <= 2; ++d) out.push_back(compression_configuration("dadir", "dir", d, 3, seed));
    return out;
}

inline std::vector<std::string> preset_names(std::uint64_t seed = 0) {
    std::vector<std::string> names;
    for (const auto& c : preset_matrix(seed)) names.push_back(c.name);
    names.push_back("nonpure");
    return names;
}

/// Looks a preset up by name; model names follow "<k>-<s>-d<d>-N<N>".
inline Configuration preset(const std::string& name, std::uint64_t seed = 0) {
    if (name == "jordan") return jordan_configuration();
    if (name == "nonpure") return nonpure_configuration();
    for (auto& c : preset_matrix(seed))
        if (c.name == name) return c;
    throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace kchar

#pragma once

// JSON kernel descriptions. Rationals travel as decimal strings "p/q".
//
//   {"kind": "bergman", "m": 2, "d": 1, "truncation": 32}
//   {"kind": "dirichlet", "d": 1, "truncation": 32}
//   {"kind": "szego", "d": 1, "truncation": 32}
//   {"kind": "coeffs", "a": ["1", "1/2", "1/3"], "d": 1}
//   {"kind": "product", "factors": [<spec>, <spec>], "truncation": 32}

#include "kchar/kernel_series.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>

namespace kchar {

using Json = nlohmann::json;

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
inline int spec_int(const Json& j, const char* key, std::optional<int> fallback = std::nullopt) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw SpecError(std::string("kernel spec is missing '") + key + "'");
    }
    if (!j.at(key).is_number_integer()) throw SpecError(std::string("'") + key + "' must be an integer");
    return j.at(key).get<int>();
}
}  // namespace detail

/// `truncation_override`, when set, replaces the spec's truncation.
inline KernelSeries<Rational> kernel_from_json(const Json& j, std::optional<int> truncation_override = std::nullopt) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw SpecError("kernel spec must be an object with a string 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    auto trunc = [&] {
        const int N = truncation_override ? *truncation_override : detail::spec_int(j, "truncation", kDefaultTruncation);
        if (N < 0) throw SpecError("truncation must be >= 0");
        return N;
    };
    try {
        if (kind == "bergman") {
            const int m = detail::spec_int(j, "m");
            if (m < 1) throw SpecError("Bergman parameter m must be >= 1");
            return bergman_kernel(m, detail::spec_int(j, "d", 1), trunc());
        }
        if (kind == "szego" || kind == "drury-arveson") return drury_arveson_kernel(detail::spec_int(j, "d", 1), trunc());
        if (kind == "dirichlet") return dirichlet_kernel(detail::spec_int(j, "d", 1), trunc());
        if (kind == "coeffs") {
            if (!j.contains("a") || !j.at("a").is_array() || j.at("a").empty())
                throw SpecError("'coeffs' kernel needs a non-empty array 'a'");
            std::vector<Rational> a;
            for (const auto& e : j.at("a")) {
                if (e.is_string())
                    a.push_back(parse_rational(e.get<std::string>()));
                else if (e.is_number_integer())
                    a.emplace_back(e.get<long>());
                else
                    throw SpecError("coefficients must be rational strings or integers");
            }
            Series<Rational> s(std::move(a));
            if (truncation_override) {
                if (*truncation_override > s.truncation())
                    throw SpecError("requested truncation exceeds the listed coefficients");
                s = s.truncated(*truncation_override);
            }
            return KernelSeries<Rational>(s, detail::spec_int(j, "d", 1), j.value("label", std::string("custom")));
        }
        if (kind == "product") {
            if (!j.contains("factors") || !j.at("factors").is_array() || j.at("factors").size() < 2)
                throw SpecError("'product' kernel needs at least two factors");
            const int N = trunc();
            KernelSeries<Rational> acc = kernel_from_json(j.at("factors")[0], N);
            for (std::size_t i = 1; i < j.at("factors").size(); ++i) acc = cauchy_product(acc, kernel_from_json(j.at("factors")[i], N));
            return acc;
        }
    } catch (const SpecError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw SpecError(e.what());
    }
    throw SpecError("unknown kernel kind '" + kind + "'");
}

inline KernelSeries<Rational> load_kernel(const std::string& path, std::optional<int> truncation_override = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open kernel spec '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw SpecError("malformed JSON in '" + path + "': " + e.what());
    }
    return kernel_from_json(j, truncation_override);
}

inline Json series_to_json(const Series<Rational>& c) {
    Json out = Json::array();
    for (const auto& x : c.coeffs()) out.push_back(to_string(x));
    return out;
}

inline Json kernel_to_json(const KernelSeries<Rational>& k) {
    return Json{{"kind", "coeffs"}, {"label", k.label()}, {"d", k.dim()}, {"a", series_to_json(k.coeffs())}};
}

}  // namespace kchar

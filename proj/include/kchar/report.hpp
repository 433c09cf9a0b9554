#pragma once

// Run reports: one record per executed check, JSON output.

#include "kchar/kernel_spec.hpp"

#include <chrono>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kchar {

inline constexpr const char* kSchemaVersion = "1.0.0";

enum class Verdict { pass, fail, certificate_only };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::certificate_only: return "certificate-only";
    }
    return "fail";
}

struct Check {
    std::string name;
    Verdict verdict = Verdict::fail;
    std::optional<double> residual;
    std::optional<double> tolerance;
    bool exact = false;
    double elapsed_ms = 0.0;
    Json details = Json::object();
};

/// Tolerance check: pass iff residual <= tol.
inline Check bounded(std::string name, double residual, double tol, Json details = Json::object()) {
    Check c;
    c.name = std::move(name);
    c.residual = residual;
    c.tolerance = tol;
    c.verdict = residual <= tol ? Verdict::pass : Verdict::fail;
    c.details = std::move(details);
    return c;
}

/// Exact identity: pass iff it holds with no rounding at all.
inline Check exact_identity(std::string name, bool holds, double residual, Json details = Json::object()) {
    Check c;
    c.name = std::move(name);
    c.exact = true;
    c.residual = residual;
    c.tolerance = 0.0;
    c.verdict = holds ? Verdict::pass : Verdict::fail;
    c.details = std::move(details);
    return c;
}

inline Check predicate(std::string name, bool holds, Json details = Json::object(), bool exact = false) {
    Check c;
    c.name = std::move(name);
    c.exact = exact;
    c.verdict = holds ? Verdict::pass : Verdict::fail;
    c.details = std::move(details);
    return c;
}

/// Runs `body`, timing it; any exception becomes a failed check carrying the message.
inline std::vector<Check> timed(const std::string& name, const std::function<std::vector<Check>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Check> out;
    try {
        out = body();
    } catch (const std::exception& e) {
        Check c;
        c.name = name;
        c.verdict = Verdict::fail;
        c.details = Json{{"error", e.what()}};
        out = {c};
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (auto& c : out) c.elapsed_ms = ms / static_cast<double>(out.size());
    return out;
}

inline Json residual_json(const std::optional<double>& x) {
    if (!x) return nullptr;
    if (!std::isfinite(*x)) return "inf";
    return *x;
}

class RunReport {
public:
    Json config = Json::object();
    Json environment = Json::object();
    Json data = Json::object();

    void add(Check c) { checks_.push_back(std::move(c)); }
    void add(std::vector<Check> cs) {
        for (auto& c : cs) checks_.push_back(std::move(c));
    }

    const std::vector<Check>& checks() const { return checks_; }

    int count(Verdict v) const {
        int n = 0;
        for (const auto& c : checks_)
            if (c.verdict == v) ++n;
        return n;
    }

    bool any_fail() const { return count(Verdict::fail) > 0; }

    Json to_json(bool timing = true) const {
        Json checks = Json::array();
        for (const auto& c : checks_) {
            Json j{{"name", c.name}, {"verdict", to_string(c.verdict)}, {"residual", residual_json(c.residual)},
                   {"exact", c.exact}};
            if (c.tolerance) j["tolerance"] = *c.tolerance;
            if (timing) j["elapsed_ms"] = c.elapsed_ms;
            if (!c.details.empty()) j["details"] = c.details;
            checks.push_back(j);
        }
        Json out{{"schema_version", kSchemaVersion},
                 {"config", config},
                 {"environment", environment},
                 {"checks", checks},
                 {"summary",
                  {{"pass", count(Verdict::pass)},
                   {"fail", count(Verdict::fail)},
                   {"certificate_only", count(Verdict::certificate_only)}}}};
        if (!data.empty()) out["data"] = data;
        return out;
    }

private:
    std::vector<Check> checks_;
};

}  // namespace kchar

// kchar: kernel certificates, characteristic-function runs and the
// verification suite, reported as JSON.
//
// Exit codes: 0 pass (or certificate only), 1 a check failed, 2 bad input.

#include "kchar/suite.hpp"

#include <CLI11.hpp>
#include <gmp.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace kchar;

struct Globals {
    std::string out;
    std::uint64_t seed = 7;
    double tol = 1e-8;
    std::string mode = "exact";
    int degree_cap = -1;
    bool no_timing = false;
    int jobs = 1;
};

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json environment(const Globals& g) {
    return Json{{"scalar_mode", g.mode},
                {"degree_cap", g.degree_cap},
                {"seed", g.seed},
                {"tolerance", g.tol},
                {"rank_cutoff", kRankCutoff},
                {"clamp", kClampTolerance},
                {"series_cap", SeriesOptions{}.degree_cap},
                {"gmp", gmp_version},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)}};
}

int finish(RunReport& rep, const Globals& g, const std::string& command) {
    rep.environment = environment(g);
    rep.config["command"] = command;
    const Json j = rep.to_json(!g.no_timing);
    if (g.out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream f(g.out);
        if (!f) throw InputError("cannot write '" + g.out + "'");
        f << j.dump(2) << "\n";
        std::cout << command << ": " << rep.count(Verdict::pass) << " pass, " << rep.count(Verdict::fail) << " fail, "
                  << rep.count(Verdict::certificate_only) << " certificate-only -> " << g.out << "\n";
    }
    for (const auto& c : rep.checks())
        if (c.verdict == Verdict::fail) std::cerr << "FAIL " << c.name << "\n";
    return rep.any_fail() ? 1 : 0;
}

std::optional<int> opt_int(int v) { return v < 0 ? std::nullopt : std::optional<int>(v); }

// ---------------------------------------------------------------------------

int kernel_info(const Globals& g, const std::string& spec, int N) {
    const auto k = load_kernel(spec, opt_int(N));
    RunReport rep;
    rep.config = {{"spec", spec}, {"N", N}};
    const auto adm = admissibility_report(k, g.tol);
    const auto cnp = is_cnp(k);
    rep.data = {{"kernel", kernel_to_json(k)},
                {"b_series", series_to_json(b_series(k))},
                {"admissibility",
                 {{"ratio_sup", adm.ratio_sup},
                  {"ratio_argmax", adm.ratio_argmax},
                  {"partial_sum_bound", adm.partial_sum_bound},
                  {"min_final_value", adm.min_final_value},
                  {"verdict", adm.verdict}}},
                {"radius_one_assumed", k.radius_one_assumed()}};
    Check c;
    c.name = "CNP coefficient certificate";
    c.verdict = Verdict::certificate_only;
    c.exact = true;
    c.details = {{"holds", cnp.holds},
                 {"checked_up_to", cnp.checked_up_to},
                 {"first_negative", cnp.first_negative ? Json(*cnp.first_negative) : Json(nullptr)}};
    rep.add(c);
    Check a;
    a.name = "admissibility at truncation";
    a.verdict = Verdict::certificate_only;
    a.details = {{"certified", adm.certified}};
    rep.add(a);
    return finish(rep, g, "kernel info");
}

int kernel_cnp(const Globals& g, const std::string& spec, int N) {
    const auto k = load_kernel(spec, opt_int(N));
    RunReport rep;
    rep.config = {{"spec", spec}, {"N", k.truncation()}};
    SignCertificate cert;
    if (g.mode == "exact") {
        cert = is_cnp(k);
        rep.data["b_series"] = series_to_json(b_series(k));
    } else {
        const auto kf = kernel_cast<double>(k);
        cert = is_cnp(kf, g.tol);
        rep.data["b_series"] = b_series(kf).coeffs();
    }
    Check c = predicate("b_n >= 0 for 1 <= n <= " + std::to_string(cert.checked_up_to), cert.holds,
                        {{"checked_up_to", cert.checked_up_to},
                         {"first_negative", cert.first_negative ? Json(*cert.first_negative) : Json(nullptr)}},
                        g.mode == "exact");
    rep.add(c);
    return finish(rep, g, "kernel cnp");
}

int kernel_quotient(const Globals& g, const std::string& num, const std::string& den, int N) {
    const auto k = load_kernel(num, opt_int(N)), l = load_kernel(den, opt_int(N));
    if (k.dim() != l.dim()) throw InputError("kernels have different dimensions");
    RunReport rep;
    rep.config = {{"num", num}, {"den", den}, {"N", N}};
    const auto cert = is_positive_quotient(k, l);
    rep.data["quotient"] = series_to_json(quotient(k, l));
    rep.add(predicate("k/l has non-negative coefficients up to " + std::to_string(cert.checked_up_to), cert.holds,
                      {{"first_negative", cert.first_negative ? Json(*cert.first_negative) : Json(nullptr)}}, true));
    return finish(rep, g, "kernel quotient");
}

int kernel_factor(const Globals& g, const std::string& spec, const std::string& cnp, int N) {
    const auto k = load_kernel(spec, opt_int(N)), s = load_kernel(cnp, opt_int(N));
    if (k.dim() != s.dim()) throw InputError("kernels have different dimensions");
    RunReport rep;
    rep.config = {{"spec", spec}, {"cnp", cnp}, {"N", N}};
    try {
        const auto F = factorize_with_cnp(k, s);
        rep.data["g"] = series_to_json(F.g);
        rep.add(predicate("k = s * g with s CNP and g >= 0", true, {{"truncation", F.truncation()}}, true));
    } catch (const NotAFactorization& e) {
        rep.add(predicate("k = s * g with s CNP and g >= 0", false, {{"error", e.what()}}, true));
    }
    return finish(rep, g, "kernel factor");
}

// ---------------------------------------------------------------------------

struct CharfnArgs {
    std::string preset;
    std::string spec, cnp, tuple, dump;
    int N = -1;
};

Configuration load_configuration(const CharfnArgs& a, const Globals& g) {
    if (!a.preset.empty()) {
        if (!a.spec.empty() || !a.tuple.empty()) throw InputError("--preset excludes --spec and --tuple");
        try {
            return preset(a.preset, g.seed);
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
    }
    if (a.spec.empty() || a.cnp.empty()) throw InputError("need --preset, or --spec and --cnp");
    Configuration c;
    const auto k = load_kernel(a.spec, kPresetTruncation), s = load_kernel(a.cnp, kPresetTruncation);
    if (k.dim() != s.dim()) throw InputError("kernels have different dimensions");
    try {
        c.F = factorize_with_cnp(k, s);
    } catch (const NotAFactorization& e) {
        throw InputError(e.what());
    }
    if (!a.tuple.empty()) {
        if (a.N >= 0) throw InputError("--tuple excludes --N");
        c.T = load_tuple(a.tuple);
        if (c.T.dim() != k.dim()) throw InputError("tuple and kernel dimensions differ");
        c.name = a.tuple;
    } else {
        if (a.N < 0) throw InputError("need --tuple or a model degree --N");
        c.exact = model_tuple<Rational>(k, k.dim(), a.N);
        c.T = to_float(*c.exact);
        c.model = true;
        c.N = a.N;
        c.name = k.label() + "-" + s.label() + "-d" + std::to_string(k.dim()) + "-N" + std::to_string(a.N);
    }
    return c;
}

VerifyOptions verify_options(const Globals& g) {
    VerifyOptions o;
    o.cap = g.degree_cap;
    o.composite_tol = g.tol;
    o.exact = g.mode == "exact";
    o.seed = g.seed;
    return o;
}

void dump_theta(const std::string& path, const CharFnData& C) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw InputError("cannot write '" + path + "'");
    f << theta_to_json(C).dump(2) << "\n";
}

int charfn_build(const Globals& g, const CharfnArgs& a) {
    const Configuration c = load_configuration(a, g);
    RunReport rep;
    rep.config = {{"configuration", c.name}, {"options", options_json(verify_options(g))}};
    CharFnOptions opt;
    opt.cap = g.degree_cap;
    try {
        const CharFnData C = build_charfn(c.T, c.F, opt);
        rep.add(predicate(c.name + ": characteristic function built", true,
                          {{"x_dim", C.x_dim}, {"ran_delta_dim", C.r}, {"cap", C.cap}, {"nilpotency", C.p}}));
        rep.data["theta"] = theta_to_json(C);
        dump_theta(a.dump, C);
    } catch (const NotPure& e) {
        std::cerr << e.what() << "\n";
        rep.add(predicate(c.name + ": purity", false, {{"error", e.what()}}));
    }
    return finish(rep, g, "charfn build");
}

int charfn_verify(const Globals& g, const CharfnArgs& a) {
    const Configuration c = load_configuration(a, g);
    const VerifyOptions o = verify_options(g);
    RunReport rep;
    rep.config = {{"configuration", c.name}, {"options", options_json(o)}};
    auto res = verify_configuration(c, o);
    const Check& first = res.checks.front();
    if (first.verdict == Verdict::fail && first.residual)
        std::cerr << c.name << ": not pure, purity residual " << *first.residual << "\n";
    rep.add(std::move(res.checks));
    if (res.charfn) {
        rep.data["theta"] = theta_to_json(*res.charfn);
        dump_theta(a.dump, *res.charfn);
    }
    return finish(rep, g, "charfn verify");
}

int impossibility(const Globals& g, int m, int n, int N_max) {
    if (m < 1 || n < 1 || N_max < 0) throw InputError("need m >= 1, n >= 1, N_max >= 0");
    RunReport rep;
    rep.config = {{"m", m}, {"n", n}, {"N_max", N_max}};
    Json table;
    rep.add(impossibility_checks(m, n, N_max, &table));
    rep.data["sweep"] = table;
    return finish(rep, g, "impossibility");
}

int suite(const Globals& g) {
    SuiteOptions so;
    so.verify = verify_options(g);
    so.jobs = g.jobs;
    RunReport rep = run_suite(so);
    rep.config = {{"presets", preset_names(g.seed)}, {"options", options_json(so.verify)}};
    return finish(rep, g, "suite");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Characteristic functions of pure 1/k-contractions"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--out", g.out, "Write the JSON report here instead of stdout");
    app.add_option("--seed", g.seed, "Seed for random points, compressions and unitaries");
    app.add_option("--tol", g.tol, "Tolerance for composite float identities and float sign tests")->check(CLI::PositiveNumber);
    app.add_option("--mode", g.mode, "Scalar mode for checks that have a rational form")
        ->check(CLI::IsMember({"exact", "float"}));
    app.add_option("--degree-cap", g.degree_cap, "Window L of the construction (default: nilpotency + 2)");
    app.add_flag("--no-timing", g.no_timing, "Omit elapsed times so reports are byte-reproducible");

    std::function<int()> run;

    auto* kernel = app.add_subcommand("kernel", "Coefficient certificates for unitarily invariant kernels");
    kernel->require_subcommand(1);
    std::string spec, num, den, cnp;
    int N = -1;
    auto* info = kernel->add_subcommand("info", "Coefficients, b-series and admissibility");
    info->add_option("--spec", spec, "Kernel spec")->required();
    info->add_option("--N", N, "Truncation");
    info->callback([&] { run = [&] { return kernel_info(g, spec, N); }; });
    auto* cnpc = kernel->add_subcommand("cnp", "Complete Nevanlinna-Pick certificate b_n >= 0");
    cnpc->add_option("--spec", spec, "Kernel spec")->required();
    cnpc->add_option("--N", N, "Truncation");
    cnpc->callback([&] { run = [&] { return kernel_cnp(g, spec, N); }; });
    auto* quot = kernel->add_subcommand("quotient", "Non-negativity of the coefficients of k/l");
    quot->add_option("--num", num, "Numerator kernel spec")->required();
    quot->add_option("--den", den, "Denominator kernel spec")->required();
    quot->add_option("--N", N, "Truncation");
    quot->callback([&] { run = [&] { return kernel_quotient(g, num, den, N); }; });
    auto* fac = kernel->add_subcommand("factor", "Factorization k = s * g through a CNP kernel s");
    fac->add_option("--spec", spec, "Kernel spec for k")->required();
    fac->add_option("--cnp", cnp, "Kernel spec for s")->required();
    fac->add_option("--N", N, "Truncation");
    fac->callback([&] { run = [&] { return kernel_factor(g, spec, cnp, N); }; });

    auto* charfn = app.add_subcommand("charfn", "Characteristic function construction and verification");
    charfn->require_subcommand(1);
    CharfnArgs ca;
    for (const char* which : {"build", "verify"}) {
        auto* sub = charfn->add_subcommand(which, std::string(which) == "build" ? "Build theta and report its coefficients"
                                                                                 : "Build theta and run the invariant suite");
        sub->add_option("--preset", ca.preset, "Named configuration (see `kchar presets`)");
        sub->add_option("--spec", ca.spec, "Kernel spec for k");
        sub->add_option("--cnp", ca.cnp, "Kernel spec for the CNP factor s");
        sub->add_option("--tuple", ca.tuple, "Tuple spec (orthonormal basis)");
        sub->add_option("--N", ca.N, "Model degree: use the compressed shifts on polynomials of degree <= N");
        sub->add_option("--dump", ca.dump, "Write the Taylor coefficients of theta here");
        if (std::string(which) == "build")
            sub->callback([&] { run = [&] { return charfn_build(g, ca); }; });
        else
            sub->callback([&] { run = [&] { return charfn_verify(g, ca); }; });
    }

    int m = 0, n = 0, N_max = 20;
    auto* imp = app.add_subcommand("impossibility", "Closed form against the quadratic form for k_m through k_n");
    imp->add_option("--m", m, "Bergman parameter of k")->required();
    imp->add_option("--n", n, "Bergman parameter of l")->required();
    imp->add_option("--N-max", N_max, "Largest model degree");
    imp->callback([&] { run = [&] { return impossibility(g, m, n, N_max); }; });

    auto* su = app.add_subcommand("suite", "Run the full configuration matrix");
    su->add_option("--jobs", g.jobs, "Entries run concurrently")->check(CLI::PositiveNumber);
    su->callback([&] { run = [&] { return suite(g); }; });

    auto* pr = app.add_subcommand("presets", "List preset names");
    pr->callback([&] {
        run = [&] {
            for (const auto& name : preset_names(g.seed)) std::cout << name << "\n";
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return run();
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const KernelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

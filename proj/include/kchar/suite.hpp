#pragma once

// Invariant checks over configurations, kernel certificates and the
// impossibility sweep, collected into run reports.

#include "kchar/charfn.hpp"
#include "kchar/dilation.hpp"
#include "kchar/io.hpp"
#include "kchar/presets.hpp"
#include "kchar/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <future>
#include <thread>

namespace kchar {

struct VerifyOptions {
    int cap = -1;
    double single_tol = 1e-10;     // one-step float identities
    double block_tol = 1e-9;       // block relations, shift orthogonality, model intertwining
    double composite_tol = 1e-8;   // constructions built from several steps
    int dilation_samples = 20;
    int pointwise_samples = 50;
    double sample_radius = 0.7;
    bool exact = true;             // run rational checks where the data is rational
    std::uint64_t seed = 0;
};

inline Json options_json(const VerifyOptions& o) {
    return Json{{"degree_cap", o.cap},
                {"tolerances", {{"single_step", o.single_tol}, {"block", o.block_tol}, {"composite", o.composite_tol}}},
                {"samples", {{"dilation", o.dilation_samples}, {"pointwise", o.pointwise_samples}, {"radius", o.sample_radius}}},
                {"mode", o.exact ? "exact" : "float"},
                {"seed", o.seed}};
}

struct ConfigurationResult {
    std::vector<Check> checks;
    std::optional<CharFnData> charfn;
};

namespace detail {

inline std::string prefixed(const Configuration& c, const std::string& what) { return c.name + ": " + what; }

inline std::vector<Check> purity_checks(const Configuration& c, const VerifyOptions& o) {
    std::vector<Check> out;
    if (o.exact && c.exact) {
        const auto sq = defect_squares(*c.exact, c.F.k, c.F.s);
        const auto pur = purity_check(*c.exact, c.F.k, sq.delta_sq);
        out.push_back(exact_identity(prefixed(c, "purity"), pur.pure, pur.residual, {{"degree_used", pur.degree_used}}));
        if (c.model) {
            MatQ e0 = MatQ::Zero(c.exact->size(), c.exact->size());
            e0(0, 0) = 1;
            const MatQ diff = sq.delta_sq - e0;
            out.push_back(exact_identity(prefixed(c, "defect equals projection onto constants"), is_exact_zero(diff),
                                         max_abs(diff)));
        }
    } else {
        const auto sq = defect_squares(c.T, c.F.k, c.F.s);
        const auto pur = purity_check(c.T, c.F.k, hermitian_part(sq.delta_sq), {}, o.single_tol);
        out.push_back(bounded(prefixed(c, "purity"), pur.residual, o.single_tol, {{"degree_used", pur.degree_used}}));
    }
    return out;
}

inline std::vector<Check> defect_checks(const Configuration& c, const VerifyOptions& o) {
    std::vector<Check> out;
    if (o.exact && c.exact) {
        const auto pi = gamma_identity_exact(*c.exact, c.F);
        out.push_back(exact_identity(prefixed(c, "g-weighted defect sum equals Gamma^2"), pi.exact_zero, pi.max_entry));
        const auto sq = defect_squares(*c.exact, c.F.k, c.F.s);
        out.push_back(predicate(prefixed(c, "Gamma^2 positive semi-definite"), is_psd_exact(*c.exact, sq.gamma_sq), {}, true));
    } else {
        const auto sq = defect_squares(c.T, c.F.k, c.F.s);
        const auto sum = weighted_sum(c.T, c.F.g, 0, {}, &sq.delta_sq);
        out.push_back(bounded(prefixed(c, "g-weighted defect sum equals Gamma^2"), opnorm(sum.value - sq.gamma_sq),
                              o.single_tol));
        const double lam = min_eigenvalue(sq.gamma_sq);
        out.push_back(bounded(prefixed(c, "Gamma^2 positive semi-definite"), std::max(0.0, -lam), o.single_tol,
                              {{"min_eigenvalue", lam}}));
    }
    return out;
}

}  // namespace detail

/// The invariant suite on one configuration. A purity failure stops the run.
inline ConfigurationResult verify_configuration(const Configuration& c, const VerifyOptions& o) {
    using namespace detail;
    ConfigurationResult res;
    auto add = [&](std::vector<Check> cs) {
        for (auto& x : cs) res.checks.push_back(std::move(x));
    };
    add(timed(prefixed(c, "purity"), [&] { return purity_checks(c, o); }));
    if (std::any_of(res.checks.begin(), res.checks.end(), [](const Check& x) { return x.verdict == Verdict::fail; }))
        return res;
    add(timed(prefixed(c, "defects"), [&] { return defect_checks(c, o); }));

    Rng rng = config_rng(o.seed, c.name);
    CharFnOptions copt;
    copt.cap = o.cap;
    std::optional<CharFnData> built;
    add(timed(prefixed(c, "characteristic function"), [&] {
        built = build_charfn(c.T, c.F, copt);
        return std::vector<Check>{predicate(prefixed(c, "characteristic function built"), true,
                                            {{"x_dim", built->x_dim}, {"ran_delta_dim", built->r}, {"cap", built->cap},
                                             {"nilpotency", built->p}, {"theta_degree", built->theta_degree}})};
    }));
    if (!built) return res;
    const CharFnData& C = *built;
    const int d = C.d;
    const int target = C.cap + C.p;
    std::optional<DilationData> D;

    add(timed(prefixed(c, "dilation"), [&] {
        D = build_dilation(c.T, c.F.k, C.defect, target);
        std::vector<Check> cs;
        cs.push_back(bounded(prefixed(c, "V*V = I"), D->isometry_residual, o.single_tol));
        const auto inter = intertwining_residual(*D, c.T, c.F.k);
        cs.push_back(bounded(prefixed(c, "V* (M_i x I) = T_i V*"), *std::max_element(inter.begin(), inter.end()), o.single_tol));
        double worst = 0.0;
        for (int i = 0; i < o.dilation_samples; ++i) {
            const VecC w = random_ball_point(d, o.sample_radius, rng);
            const VecC xi = random_unit_vector(C.r, rng);
            worst = std::max(worst, kernel_vector_action(*D, c.T, c.F.k, w, xi, std::numeric_limits<double>::infinity()).disagreement);
        }
        cs.push_back(bounded(prefixed(c, "V*(k_w x xi) = k_w(T) Delta xi"), worst, o.single_tol,
                             {{"samples", o.dilation_samples}}));
        return cs;
    }));

    add(timed(prefixed(c, "colligation"), [&] {
        const auto rel = block_relations(C);
        std::vector<Check> cs;
        cs.push_back(bounded(prefixed(c, "T~*T~ + BB* = I"), rel.ttilde_b, o.block_tol));
        cs.push_back(bounded(prefixed(c, "Pi T~ + DB* = 0"), rel.pi_ttilde, o.block_tol));
        cs.push_back(bounded(prefixed(c, "Pi Pi* + DD* = I"), rel.pi_d, o.block_tol));
        cs.push_back(bounded(prefixed(c, "U unitary"), std::max(rel.unitary_left, rel.unitary_right), o.composite_tol,
                             {{"square", rel.square}}));
        cs.push_back(bounded(prefixed(c, "T~T~* = I - Gamma^2"), rel.ttilde_defect, o.block_tol));
        cs.push_back(bounded(prefixed(c, "Pi*Pi = Gamma^2"), rel.pi_gamma, o.block_tol));
        cs.push_back(bounded(prefixed(c, "T~ D_T~ = Gamma T~"), rel.defect_intertwining, o.block_tol));
        return cs;
    }));

    add(timed(prefixed(c, "pointwise"), [&] {
        std::vector<Check> cs;
        double eval = 0.0, i4 = 0.0, zc = 0.0, zf = 0.0;
        for (int i = 0; i < o.dilation_samples; ++i) {
            const VecC z = random_ball_point(d, o.sample_radius, rng);
            const MatC a = theta_taylor(C, z), b = theta_direct(C, z);
            if (a.size()) eval = std::max(eval, (a - b).cwiseAbs().maxCoeff());
            i4 = std::max(i4, i4_residual(C, z));
            const auto zz = z_contraction(C, z);
            zc = std::max(zc, std::abs(zz.norm_sq - zz.closed_form));
            zf = std::max(zf, zz.finite_norm_sq - zz.closed_form);
        }
        cs.push_back(bounded(prefixed(c, "theta Taylor series = direct evaluation"), eval, o.single_tol));
        cs.push_back(bounded(prefixed(c, "g_z(T)* = k_z(T)*(I - Z(z) T~*)"), i4, o.single_tol));
        cs.push_back(bounded(prefixed(c, "||Z(z)||^2 = 1 - 1/s(z,z)"), zc, o.single_tol));
        cs.push_back(bounded(prefixed(c, "Z(z) contraction"), std::max(0.0, zf), o.single_tol));
        std::vector<std::pair<VecC, VecC>> pairs;
        for (int i = 0; i < o.pointwise_samples; ++i) {
            VecC z = random_ball_point(d, o.sample_radius, rng);
            VecC w = random_ball_point(d, o.sample_radius, rng);
            pairs.emplace_back(std::move(z), std::move(w));
        }
        cs.push_back(bounded(prefixed(c, "s(z,w) theta(z) theta(w)* = k(z,w) - Delta k_z(T)* k_w(T) Delta"),
                             pointwise_residual(C, pairs), o.composite_tol, {{"samples", o.pointwise_samples}}));
        return cs;
    }));

    std::optional<MultiplierMatrix> M;
    add(timed(prefixed(c, "factorization"), [&] {
        std::vector<Check> cs;
        M = build_multiplier(C, C.cap, target);
        const auto fr = factorization_residual(*D, *M);
        cs.push_back(bounded(prefixed(c, "VV* + M M* = I"), fr.restricted, o.composite_tol,
                             {{"window", fr.window}, {"unrestricted", fr.unrestricted}}));
        cs.push_back(bounded(prefixed(c, "multiplier contractive"), std::max(0.0, opnorm(M->M) - 1.0), o.composite_tol));
        if (o.exact && c.exact && c.name.rfind("jordan", 0) == 0) {
            const auto ex = exact_factorization_check(C, C.cap, target);
            Check x = exact_identity(prefixed(c, "VV* + M M* = I (rational)"), ex.attempted && ex.exact_zero,
                                     ex.exact_zero ? 0.0 : fr.restricted, {{"window", ex.window}});
            if (!ex.reason.empty()) x.details["reason"] = ex.reason;
            cs.push_back(x);
        }
        return cs;
    }));

    add(timed(prefixed(c, "k-inner"), [&] {
        const auto ki = k_inner_subspace(C, 3, o.block_tol);
        std::vector<Check> cs;
        cs.push_back(predicate(prefixed(c, "k-inner space non-trivial"), ki.basis.cols() >= 1,
                               {{"dim", ki.basis.cols()}}));
        cs.push_back(bounded(prefixed(c, "k-inner shift orthogonality"), ki.max_shift_inner, o.block_tol,
                             {{"max_degree", ki.check_degree}}));
        return cs;
    }));

    if (M) {
        add(timed(prefixed(c, "functional model"), [&] {
            const auto fm = functional_model(C, *D, *M, o.composite_tol);
            std::vector<Check> cs;
            cs.push_back(bounded(prefixed(c, "(M_i x I)* V = V T_i*"), fm.intertwining, o.block_tol));
            cs.push_back(bounded(prefixed(c, "V*(M_i x I)V = T_i"), fm.compression, o.block_tol));
            cs.push_back(bounded(prefixed(c, "Ran V orthogonal to Ran M_theta"), fm.range_orthogonality, o.composite_tol));
            return cs;
        }));
    }

    add(timed(prefixed(c, "cap stability"), [&] {
        CharFnOptions wider = copt;
        wider.cap = C.cap + 1;
        const CharFnData C2 = build_charfn(c.T, c.F, wider);
        double worst = 0.0;
        for (int i = 0; i < C.theta_index.size(); ++i) {
            const MatC& a = C.theta[static_cast<std::size_t>(i)];
            const MatC b = C2.theta_at(C.theta_index[i]).leftCols(C.x_dim);
            if (a.size()) worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
        }
        return std::vector<Check>{bounded(prefixed(c, "theta independent of the cap"), worst, o.single_tol,
                                          {{"caps", {C.cap, C2.cap}}})};
    }));

    add(timed(prefixed(c, "associated tuple"), [&] {
        const auto cert = associated_tuple_test(c.T, c.F.k, c.F.s, C.defect, C.p + 1, o.single_tol);
        Check x = predicate(prefixed(c, "associated tuple is a 1/s-contraction on the window"), cert.holds,
                            {{"window", cert.window}, {"kernel_dim", cert.kernel_dim}, {"vacuous", cert.vacuous}});
        x.residual = std::max(0.0, -cert.min_eigenvalue);
        x.tolerance = o.single_tol;
        return std::vector<Check>{x};
    }));

    res.charfn = std::move(built);
    return res;
}

// ---------------------------------------------------------------------------
// Kernel-level checks

inline Check bergman_b_series_check(int m, int upto = 20) {
    const auto k = bergman_kernel(m, 1, upto);
    const auto b = b_series(k);
    bool ok = true;
    for (int n = 1; n <= upto; ++n) {
        Rational want = n <= m ? Rational(binomial(m, n)) : Rational(0);
        if (n % 2 == 0) want = -want;
        if (b[n] != want) ok = false;
    }
    return exact_identity("b-series of k_" + std::to_string(m) + " is (-1)^(n+1) binom(m,n)", ok, ok ? 0.0 : 1.0,
                          {{"checked_up_to", upto}});
}

struct ImpossibilityRow {
    int N = 0;
    Rational closed_form;
    Rational matrix_value;
};

/// 1 - n (N+2)/(N+m+1) against the quadratic form of the associated tuple of
/// the degree-N model for k_m, tested against l = k_n on z^{N+2}.
inline std::vector<ImpossibilityRow> impossibility_sweep(int m, int n, int N_max) {
    if (m < 1 || n < 1) throw std::invalid_argument("m and n must be >= 1");
    std::vector<ImpossibilityRow> rows;
    const auto k = bergman_kernel(m, 1, N_max + 2), l = bergman_kernel(n, 1, N_max + 2);
    for (int N = 0; N <= N_max; ++N) {
        ImpossibilityRow row;
        row.N = N;
        row.closed_form = canonical(Rational(1) - Rational(n * (N + 2), N + m + 1));
        VecQ v = VecQ::Zero(N + 3);
        v(N + 2) = 1;
        row.matrix_value = quadratic_form_certificate(k, l, N, N + 2, {v}).front();
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<Check> impossibility_checks(int m, int n, int N_max, Json* data = nullptr) {
    const auto rows = impossibility_sweep(m, n, N_max);
    double worst = 0.0;
    std::optional<int> first;
    Json table = Json::array();
    for (const auto& r : rows) {
        worst = std::max(worst, std::abs(to_double(r.closed_form - r.matrix_value)));
        if (!first && r.closed_form < 0) first = r.N;
        table.push_back({{"N", r.N}, {"closed_form", to_string(r.closed_form)}, {"matrix", to_string(r.matrix_value)}});
    }
    if (data) *data = table;
    const std::string tag = "m=" + std::to_string(m) + " n=" + std::to_string(n);
    std::vector<Check> out;
    out.push_back(bounded("impossibility " + tag + ": closed form = quadratic form", worst, 1e-12, {{"N_max", N_max}}));
    Check v;
    v.name = "impossibility " + tag + ": first violation";
    v.exact = true;
    v.verdict = Verdict::certificate_only;
    v.details = first ? Json{{"first_violation", *first}} : Json{{"first_violation", nullptr}, {"note", "no violation"}};
    out.push_back(v);
    return out;
}

// ---------------------------------------------------------------------------
// Two-tuple checks

inline Check coincidence_check(const std::string& name, const TupleC& A, const TupleC& B,
                               const KernelFactorization<Rational>& F, Rng& rng, bool expect, double tol) {
    const CharFnData C1 = build_charfn(A, F), C2 = build_charfn(B, F);
    const auto co = coincidence(C1, C2, rng);
    Check c;
    c.name = name;
    c.residual = co.residual;
    c.tolerance = tol;
    const bool coincide = co.residual <= tol;
    c.verdict = coincide == expect ? Verdict::pass : Verdict::fail;
    c.details = {{"nullity", co.nullity}, {"dims_match", co.dims_match}, {"expected", expect ? "coincide" : "distinct"}};
    return c;
}

inline std::vector<Check> coincidence_checks(std::uint64_t seed) {
    std::vector<Check> out;
    for (int d = 1; d <= 2; ++d) {
        const auto c = model_configuration("k2", "da", d, 2);
        Rng rng = config_rng(seed, "coincidence-" + c.name);
        const MatC U = random_unitary(c.T.size(), rng);
        std::vector<MatC> ops;
        for (const auto& A : c.T.ops()) ops.push_back(U * A * U.adjoint());
        out.push_back(coincidence_check(c.name + ": theta coincides under unitary conjugation", c.T, TupleC(ops), c.F, rng,
                                        true, 1e-8));
    }
    const auto j = jordan_configuration();
    Rng rng = config_rng(seed, "coincidence-jordan");
    out.push_back(coincidence_check("J2+J2 vs J3+J1: theta does not coincide", jordan_sum({2, 2}), jordan_sum({3, 1}), j.F,
                                    rng, false, 1e-3));
    return out;
}

inline std::vector<Check> alignment_checks(std::uint64_t seed, int samples = 30) {
    std::vector<Check> out;
    for (int d = 1; d <= 2; ++d)
        for (int N = 1; N <= 3; ++N) {
            const auto c1 = model_configuration("dadir", "da", d, N);
            const auto c2 = model_configuration("dadir", "dir", d, N);
            const CharFnData C1 = build_charfn(c1.T, c1.F), C2 = build_charfn(c2.T, c2.F);
            Rng rng = config_rng(seed, "alignment-" + c1.name);
            std::vector<AlignmentSample> pts;
            for (int i = 0; i < samples; ++i) {
                VecC z = random_ball_point(d, 0.7, rng);
                VecC xi = random_unit_vector(C1.r, rng);
                pts.push_back({std::move(z), std::move(xi)});
            }
            const std::string name = "dadir-d" + std::to_string(d) + "-N" + std::to_string(N) + ": s=da vs s=dir";
            out.push_back(timed(name, [&] {
                const auto al = align_factorizations(C1, C2, pts);
                return std::vector<Check>{bounded(name + " Gram agreement", al.gram_residual, 1e-8,
                                                  {{"samples", samples}, {"kernel_residual", al.kernel_residual},
                                                   {"rank", al.rank}, {"vm_defect", al.vm_defect}})};
            }).front());
        }
    return out;
}

// ---------------------------------------------------------------------------
// Suite

struct SuiteOptions {
    VerifyOptions verify;
    int jobs = 1;
};

/// Runs `tasks` on up to `jobs` threads; results keep task order.
inline std::vector<std::vector<Check>> run_parallel(const std::vector<std::function<std::vector<Check>()>>& tasks, int jobs) {
    std::vector<std::vector<Check>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) results[i] = tasks[i]();
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

inline RunReport run_suite(const SuiteOptions& so) {
    const std::uint64_t seed = so.verify.seed;
    std::vector<std::function<std::vector<Check>()>> tasks;
    for (int m = 1; m <= 6; ++m) tasks.emplace_back([m] { return timed("bergman", [m] { return std::vector<Check>{bergman_b_series_check(m)}; }); });
    tasks.emplace_back([] {
        return timed("cnp verdicts", [] {
            std::vector<Check> cs;
            const auto da = is_cnp(drury_arveson_kernel(1, 200));
            cs.push_back(predicate("Drury-Arveson is CNP to N=200", da.holds, {{"checked_up_to", da.checked_up_to}}, true));
            for (int m = 2; m <= 6; ++m) {
                const auto c = is_cnp(bergman_kernel(m, 1, 20));
                cs.push_back(predicate("k_" + std::to_string(m) + " is not CNP, first negative at n=2",
                                       !c.holds && c.first_negative == 2, {{"first_negative", c.first_negative ? Json(*c.first_negative) : Json(nullptr)}}, true));
            }
            const auto dir = is_cnp(dirichlet_kernel(1, 50));
            cs.push_back(predicate("Dirichlet is CNP to N=50", dir.holds, {{"checked_up_to", dir.checked_up_to}}, true));
            return cs;
        });
    });
    for (auto& c : preset_matrix(seed)) {
        tasks.emplace_back([c, v = so.verify] { return verify_configuration(c, v).checks; });
    }
    tasks.emplace_back([v = so.verify] {
        return timed("nonpure", [&] {
            const auto c = nonpure_configuration();
            const auto r = verify_configuration(c, v);
            const auto& p = r.checks.front();
            return std::vector<Check>{predicate("nonpure: isometry rejected as not pure", p.verdict == Verdict::fail,
                                                {{"purity_residual", residual_json(p.residual)}}, true)};
        });
    });
    tasks.emplace_back([] {
        return timed("impossibility", [] {
            std::vector<Check> cs;
            for (int m = 1; m <= 4; ++m)
                for (int n = 1; n <= 4; ++n)
                    for (auto& x : impossibility_checks(m, n, 20)) cs.push_back(std::move(x));
            return cs;
        });
    });
    tasks.emplace_back([seed] { return timed("coincidence", [seed] { return coincidence_checks(seed); }); });
    tasks.emplace_back([seed] { return timed("alignment", [seed] { return alignment_checks(seed); }); });

    RunReport rep;
    for (auto& cs : run_parallel(tasks, so.jobs)) rep.add(std::move(cs));
    return rep;
}

}  // namespace kchar

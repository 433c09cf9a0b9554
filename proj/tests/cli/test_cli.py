"""End-to-end checks of the kchar command line: exit codes, report schema,
theta dumps and reproducibility of the suite."""

import argparse
import json
import os
import subprocess
import sys
import tempfile

import jsonschema

failures = []


def run(kchar, *args):
    return subprocess.run([kchar, *args], capture_output=True, text=True)


def expect(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def report(kchar, validator, args, code, what):
    p = run(kchar, *args)
    expect(p.returncode == code, f"{what}: exit {p.returncode}, want {code}")
    try:
        doc = json.loads(p.stdout)
    except json.JSONDecodeError:
        expect(False, f"{what}: stdout is JSON")
        return None
    errors = list(validator.iter_errors(doc))
    expect(not errors, f"{what}: report matches schema" + (f" ({errors[0].message})" if errors else ""))
    return doc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kchar", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--schema", required=True)
    a = ap.parse_args()
    with open(a.schema) as f:
        validator = jsonschema.Draft202012Validator(json.load(f))
    k = a.kchar
    kern = lambda name: os.path.join(a.data, "kernels", name)

    doc = report(k, validator, ["kernel", "cnp", "--spec", kern("bergman_m2.json")], 1, "k_2 is not CNP")
    if doc:
        expect(any(c["details"].get("first_negative") == 2 for c in doc["checks"]), "k_2 first negative at 2")
    report(k, validator, ["kernel", "cnp", "--spec", kern("dirichlet.json"), "--N", "50"], 0, "Dirichlet is CNP")
    report(k, validator, ["kernel", "cnp", "--spec", kern("szego.json"), "--N", "200"], 0, "Szego is CNP")
    report(k, validator, ["kernel", "info", "--spec", kern("coeffs_example.json")], 0, "kernel info")
    report(k, validator, ["kernel", "quotient", "--num", kern("k3.json"), "--den", kern("k1.json")], 0, "k_3/k_1")
    report(k, validator, ["kernel", "factor", "--spec", kern("dadir_d2.json"), "--cnp", kern("drury_arveson_d2.json")],
           0, "DA*Dirichlet through DA")
    report(k, validator, ["kernel", "factor", "--spec", kern("k1.json"), "--cnp", kern("bergman_m2.json")], 1,
           "k_1 through k_2 is not a factorization")

    with tempfile.TemporaryDirectory() as tmp:
        dump = os.path.join(tmp, "theta.json")
        report(k, validator, ["charfn", "build", "--preset", "jordan", "--dump", dump], 0, "jordan build")
        with open(dump) as f:
            theta = json.load(f)
        coeffs = theta["coefficients"]
        expect(len(coeffs) == 1 and coeffs[0]["gamma"] == [2], "jordan theta has the single coefficient z^2")
        if coeffs:
            m = coeffs[0]["matrix"]
            v = m["data"][0]
            mag = abs(complex(*v)) if isinstance(v, list) else abs(v)
            expect(m["rows"] == 1 and m["cols"] == 1 and abs(mag - 1) < 1e-12, "jordan theta coefficient is unimodular")

        doc = report(k, validator, ["charfn", "verify", "--preset", "k2-da-d2-N2"], 0, "verify k2-da-d2-N2")
        if doc:
            expect(doc["summary"]["fail"] == 0 and doc["summary"]["pass"] > 20, "verify k2-da-d2-N2 all pass")
        report(k, validator, ["charfn", "verify", "--spec", kern("szego.json"), "--cnp", kern("szego.json"),
                              "--tuple", os.path.join(a.data, "tuples", "jordan3.json")], 0, "verify jordan3 tuple")
        report(k, validator, ["charfn", "verify", "--spec", kern("bergman_m2_d2.json"), "--cnp",
                              kern("drury_arveson_d2.json"), "--N", "1"], 0, "verify model from specs")
        report(k, validator, ["charfn", "verify", "--preset", "nonpure"], 1, "non-pure tuple rejected")
        report(k, validator, ["--mode", "float", "charfn", "verify", "--preset", "jordan"], 0, "float mode")

        doc = report(k, validator, ["impossibility", "--m", "2", "--n", "2", "--N-max", "5"], 0, "impossibility")
        if doc:
            cert = [c for c in doc["checks"] if c["verdict"] == "certificate-only"]
            expect(cert and cert[0]["details"].get("first_violation") == 0, "(2,2) first violation at N=0")

        p = run(k, "kernel", "cnp", "--spec", os.path.join(tmp, "missing.json"))
        expect(p.returncode == 2, "missing spec file exits 2")
        bad = os.path.join(tmp, "bad.json")
        with open(bad, "w") as f:
            f.write('{"kind": "coeffs", "a": ["2", "1"]}')
        expect(run(k, "kernel", "info", "--spec", bad).returncode == 2, "a_0 != 1 exits 2")
        expect(run(k, "nonsense").returncode == 2, "unknown subcommand exits 2")
        expect(run(k, "charfn", "verify", "--preset", "no-such").returncode == 2, "unknown preset exits 2")
        expect(run(k, "--tol", "-1", "suite").returncode == 2, "negative tolerance exits 2")

        p = run(k, "presets")
        expect(p.returncode == 0 and "jordan" in p.stdout.split(), "presets lists jordan")

        out = os.path.join(tmp, "r.json")
        p = run(k, "--out", out, "charfn", "verify", "--preset", "jordan")
        expect(p.returncode == 0 and os.path.exists(out), "--out writes the report")

        a1, a3 = os.path.join(tmp, "s1.json"), os.path.join(tmp, "s3.json")
        p1 = run(k, "--no-timing", "--out", a1, "suite", "--jobs", "1")
        p3 = run(k, "--no-timing", "--out", a3, "suite", "--jobs", "3")
        expect(p1.returncode == 0 and p3.returncode == 0, "suite exits 0")
        with open(a1) as f1, open(a3) as f3:
            s1, s3 = f1.read(), f3.read()
        expect(s1 == s3, "suite report identical for --jobs 1 and 3")
        doc = json.loads(s1)
        expect(not list(validator.iter_errors(doc)), "suite report matches schema")
        expect(doc["summary"]["fail"] == 0, f"suite has no failures ({doc['summary']})")

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())

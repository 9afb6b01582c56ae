"""One test per acceptance criterion, each at its stated tolerance and time limit.

Every test prints a single PASS/FAIL line and also registers it for the
end-of-session summary.
"""

import math
import time

import numpy as np
import pytest

from majorant_gn.certify import (
    certify_trace,
    check_banach_lemma,
    check_injectivity_lemma,
    check_linearization_lemma,
    check_perturbation_lemma,
    check_pinv_bound_lemma,
    check_step_lemma,
    default_noise_floor,
)
from majorant_gn.errors import ForcingViolation, Infeasible
from majorant_gn.majorant import (
    MethodParams,
    ProblemConstants,
    closed_form_radius_lipschitz,
    closed_form_radius_smale,
    compute_nu,
    lipschitz_closed_form,
    make_lipschitz_majorant,
    make_smale_majorant,
    q2_coefficients,
    radius,
    second_derivative_series,
    smale_closed_form,
)
from majorant_gn.problems import catalog, get_entry, sample_ball
from majorant_gn.runner import acceptance_sweep, expand_sweep, run_one, start_point
from majorant_gn.solver import IterationTrace, SolverConfig, iterate

from conftest import ACCEPTANCE_LINES

EXACT = MethodParams()


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


def _random_tuples(rng, count):
    out = []
    while len(out) < count:
        cs = ProblemConstants(rng.uniform(0, 0.5), rng.uniform(0.2, 3.0), math.inf)
        w1 = rng.uniform(1.0, 1.5)
        params = MethodParams(rng.uniform(0, 0.4), w1, rng.uniform(0, min(0.4, w1 - 1e-3)))
        out.append((cs, params))
    return out


def test_criterion_1_lipschitz_radius():
    start = time.perf_counter()
    K, cs = 1.0, ProblemConstants(0.0, 1.0, 1.0)
    r_bis = radius(make_lipschitz_majorant(K), cs, EXACT).r
    r_cf = closed_form_radius_lipschitz(K, cs, EXACT)
    worst = max(abs(r_bis - 2 / 3), abs(r_cf - 2 / 3), abs(r_bis - r_cf))
    rng = np.random.default_rng(101)
    checked = 0
    for cs_i, params in _random_tuples(rng, 3000):
        K_i = rng.uniform(0.1, 10)
        try:
            _, rho = lipschitz_closed_form(K_i, cs_i, params)
        except Infeasible:
            continue
        rep = radius(make_lipschitz_majorant(K_i), cs_i, params)
        worst = max(worst, abs(rep.rho - rho))
        checked += 1
        if checked == 60:
            break
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and checked >= 50 and elapsed < 1.0
    report(1, "Lipschitz radius 2/3 by both routes", ok,
           f"r={r_bis:.12f}, {checked} tuples, max diff {worst:.2e}, {elapsed:.3f}s")


def test_criterion_2_smale_radius():
    start = time.perf_counter()
    gamma, cs = 1.0, ProblemConstants(0.0, 1.0, math.inf)
    target = (5 - math.sqrt(17)) / 4
    spec = make_smale_majorant(gamma)
    rep = radius(spec, cs, EXACT)
    r_cf = closed_form_radius_smale(gamma, cs, EXACT)
    nu_cf = ((1 + cs.beta) - math.sqrt(cs.beta * (1 + cs.beta))) / (gamma * (1 + cs.beta))
    worst = max(abs(rep.r - target), abs(r_cf - target), abs(rep.nu - nu_cf))
    rng = np.random.default_rng(202)
    checked = 0
    for cs_i, params in _random_tuples(rng, 3000):
        g = rng.uniform(0.1, 10)
        try:
            nu_i, rho_i = smale_closed_form(g, cs_i, params)
        except Infeasible:
            continue
        spec_i = make_smale_majorant(g)
        rep_i = radius(spec_i, cs_i, params)
        worst = max(worst, abs(rep_i.rho - rho_i), abs(rep_i.nu - nu_i))
        checked += 1
        if checked == 60:
            break
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and checked >= 50 and elapsed < 1.0
    report(2, "Smale radius (5-sqrt17)/4 and nu by both routes", ok,
           f"r={rep.r:.12f}, nu={rep.nu:.12f}, {checked} tuples, max diff {worst:.2e}, {elapsed:.3f}s")


def test_criterion_3_end_to_end_certification():
    start = time.perf_counter()
    runs = expand_sweep(acceptance_sweep())
    results = [run_one(r) for r in runs]
    elapsed = time.perf_counter() - start
    failures = []
    for res in results:
        entry = get_entry(res.run.problem_id)
        if res.status != "certified":
            failures.append(f"{res.run}: {res.status} {res.message}")
            continue
        final_err = np.linalg.norm(res.trace.final - entry.x_star)
        if res.trace.termination != "converged_grad" or final_err > 1e-8:
            failures.append(f"{res.run}: final error {final_err:.2e}")
    ok = not failures and elapsed < 60.0
    modes = sorted({r.run.mode for r in results})
    report(3, "end-to-end certification over catalog x modes x fractions", ok,
           f"{len(results) - len(failures)}/{len(results)} certified, modes {','.join(modes)}, {elapsed:.2f}s")
    assert not failures, failures[:5]


def _lemma_samples(entry, spec, limit, count, seed):
    return sample_ball(entry.x_star, limit, count, np.random.default_rng(seed))


def test_criterion_4_lemma_suite():
    start = time.perf_counter()
    reports = [
        check_banach_lemma(count=200, seed=41),
        check_injectivity_lemma(count=200, seed=42),
        check_perturbation_lemma(count=200, seed=43),
    ]
    agg = {"pinv_bound": [], "linearization": [], "gn_step": []}
    for i, entry in enumerate(catalog()):
        for fam in entry.families:
            spec = entry.majorant(fam)
            cs = entry.constants
            inner = min(compute_nu(spec, cs), cs.kappa)
            agg["pinv_bound"].append(check_pinv_bound_lemma(entry.problem, spec, cs, _lemma_samples(entry, spec, inner, 100, i)))
            agg["gn_step"].append(check_step_lemma(entry.problem, spec, cs, _lemma_samples(entry, spec, inner, 100, i + 50)))
            outer = min(cs.kappa, spec.R)
            agg["linearization"].append(check_linearization_lemma(entry.problem, spec, _lemma_samples(entry, spec, outer, 100, i + 100)))
    for name, reps in agg.items():
        reports.append(
            type(reps[0])(
                name,
                sum(r.sample_count for r in reps),
                min(r.worst_slack for r in reps),
                all(r.passed for r in reps),
            )
        )
    elapsed = time.perf_counter() - start
    ok = all(r.passed and r.sample_count >= 100 and r.worst_slack >= -1e-9 for r in reports) and elapsed < 30
    detail = ", ".join(f"{r.lemma_id}: n={r.sample_count} slack={r.worst_slack:.2e}" for r in reports)
    report(4, "lemma suite", ok, f"{detail}; {elapsed:.2f}s")


def test_criterion_5_degeneration():
    notes = []
    ok = True
    # inexact with zero forcing reproduces exact Gauss-Newton
    worst = 0.0
    for entry in catalog():
        r = radius(entry.majorant(), entry.constants, EXACT).r
        for frac in (0.1, 0.5, 0.9):
            x0 = start_point(entry.x_star, r, frac, 3)
            a = iterate(entry.problem, SolverConfig(), x0)
            b = iterate(entry.problem, SolverConfig(mode="inexact", vartheta=0.5, forcing=0.0), x0)
            if len(a.records) != len(b.records):
                ok = False
                continue
            for ra, rb in zip(a.records, b.records):
                worst = max(worst, float(np.max(np.abs(ra.x - rb.x))))
    ok &= worst <= 1e-12
    notes.append(f"theta=0 max coord diff {worst:.1e}")

    # zero residual: quadratic decay
    entry = get_entry("expfit_zero")
    r = radius(entry.majorant(), entry.constants, EXACT).r
    cutoff = 10 * default_noise_floor(entry.x_star)
    X, Y = [], []
    for frac in (0.1, 0.5, 0.9):
        for seed in range(5):
            errs = iterate(entry.problem, SolverConfig(), start_point(entry.x_star, r, frac, seed)).errors(entry.x_star)
            for e0, e1 in zip(errs[:-1], errs[1:]):
                if e1 > cutoff:
                    X.append(math.log(e0))
                    Y.append(math.log(e1))
    slope = float(np.polyfit(X, Y, 1)[0])
    ok &= 1.7 <= slope <= 2.3
    notes.append(f"zero-residual slope {slope:.3f} over {len(X)} steps")

    # nonzero residual: linear decay below the predicted contraction factor
    worst_gap = -math.inf
    for pid in ("affine_inconsistent", "expfit_residual", "quadratic_residual"):
        entry = get_entry(pid)
        spec = entry.majorant()
        r = radius(spec, entry.constants, EXACT).r
        for frac in (0.1, 0.5, 0.9):
            x0 = start_point(entry.x_star, r, frac, 0)
            errs = iterate(entry.problem, SolverConfig(), x0).errors(entry.x_star)
            cq, cl = q2_coefficients(spec, entry.constants, EXACT, errs[0])
            limit = cq * errs[0] + cl + 1e-9
            floor = default_noise_floor(entry.x_star)
            for e0, e1 in zip(errs[:-1], errs[1:]):
                if e1 > floor:
                    worst_gap = max(worst_gap, e1 / e0 - limit)
    ok &= worst_gap <= 0
    notes.append(f"nonzero-residual max(ratio - bound) {worst_gap:.2e}")
    report(5, "degeneration checks", ok, "; ".join(notes))


def test_criterion_6_monotonicity_and_series():
    ok = True
    notes = []
    for spec in (make_lipschitz_majorant(1.0), make_lipschitz_majorant(7.0), make_smale_majorant(1.0), make_smale_majorant(4.0)):
        for beta in (0.5, 1.0, 2.0):
            upper = min(compute_nu(spec, ProblemConstants(0.0, beta)), spec.R)
            t = np.linspace(upper / 1000, upper * (1 - 1e-9), 1000)
            fp = np.array([spec.fprime(s) for s in t])
            f = np.array([spec.f(s) for s in t])
            for vals in (1 / (1 - beta * (fp + 1)), (t * fp - f) / t**2, (fp + 1) / t):
                ok &= bool(np.all(np.diff(vals) >= -1e-9 * np.abs(vals[1:])))
    notes.append("three maps nondecreasing on 1000-point grids")
    worst = 0.0
    for t in np.arange(10) / 10:
        s, _ = second_derivative_series(float(t))
        worst = max(worst, abs(s - 2 / (1 - t) ** 3))
    ok &= worst <= 1e-8
    notes.append(f"series max err {worst:.1e}")
    worst_rel = 0.0
    for gamma in (0.5, 1.0, 4.0):
        spec = make_smale_majorant(gamma)
        for t in np.linspace(0, 0.9 / gamma, 1000):
            s, _ = second_derivative_series(gamma * t)
            worst_rel = max(worst_rel, abs(gamma * s - spec.fsecond(t)) / spec.fsecond(t))
    ok &= worst_rel <= 1e-8
    notes.append(f"Smale f'' Taylor rel err {worst_rel:.1e}")
    report(6, "monotonicity and series properties", ok, "; ".join(notes))


def test_criterion_7_negative_controls():
    notes = []
    entry = get_entry("expfit_zero")
    spec = entry.majorant()
    params = MethodParams(0.1, 1.0, 0.0)
    r = radius(spec, entry.constants, params).r
    x0 = start_point(entry.x_star, r, 0.5, 0)
    cfg = SolverConfig(mode="inexact", vartheta=0.1, forcing=0.5, residual_strategy="random_scaled")
    rejected = False
    try:
        iterate(entry.problem, cfg, x0)
    except ForcingViolation:
        rejected = True
    notes.append(f"forcing violation rejected: {rejected}")

    # a trace with e_2 = 1.5 e_1, certified against omega2 inflated twofold
    gl = MethodParams(0.0, 1.2, 0.1)
    r_gl = radius(spec, entry.constants, gl).r
    trace = iterate(entry.problem, SolverConfig(mode="gn_like", omega_target=(1.2, 0.1), seed=1),
                    start_point(entry.x_star, r_gl, 0.9, 1))
    recs = list(trace.records)
    d = recs[2].x - entry.x_star
    e1 = np.linalg.norm(recs[1].x - entry.x_star)
    recs[2] = type(recs[2])(**{**recs[2].__dict__, "x_k": tuple(entry.x_star + 1.5 * e1 * d / np.linalg.norm(d))})
    bad = IterationTrace(recs, trace.termination)
    honest = certify_trace(trace, entry.x_star, spec, entry.constants, gl).overall
    inflated = certify_trace(bad, entry.x_star, spec, entry.constants, MethodParams(0.0, 1.2, 0.2)).overall
    notes.append(f"untampered: {honest}; tampered with 2x omega2: {inflated}")
    ok = rejected and honest == "certified" and inflated != "certified"
    report(7, "negative controls", ok, "; ".join(notes))

import dataclasses

import numpy as np
import pytest

from majorant_gn.certify import (
    certify_trace,
    check_linearization_lemma,
    check_pinv_bound_lemma,
    check_step_lemma,
    q2_bound_sequence,
)
from majorant_gn.majorant import MethodParams, compute_nu, make_lipschitz_majorant, q2_coefficients, radius
from majorant_gn.problems import get_entry, sample_ball
from majorant_gn.runner import start_point
from majorant_gn.solver import IterationTrace, Problem, SolverConfig, iterate

EXACT = MethodParams()


def run(entry_id, cfg=None, fraction=0.5, seed=0, params=EXACT, family="lipschitz"):
    e = get_entry(entry_id)
    spec = e.majorant(family)
    r = radius(spec, e.constants, params).r
    trace = iterate(e.problem, cfg or SolverConfig(), start_point(e.x_star, r, fraction, seed))
    return e, spec, trace


def tamper(trace, k, factor, x_star):
    """Move iterate ``k`` so that its error is ``factor`` times the previous one."""
    recs = list(trace.records)
    prev = np.linalg.norm(recs[k - 1].x - x_star)
    d = recs[k].x - x_star
    d = d / np.linalg.norm(d) if np.linalg.norm(d) > 0 else np.eye(d.size)[0]
    recs[k] = dataclasses.replace(recs[k], x_k=tuple(x_star + factor * prev * d))
    return IterationTrace(recs, trace.termination)


class TestCertifyTrace:
    def test_affine_exact(self):
        e, spec, trace = run("affine_consistent")
        cert = certify_trace(trace, e.x_star, spec, e.constants, EXACT)
        assert cert.overall == "certified"
        assert cert.per_step[0].observed_error <= 1e-14
        assert cert.per_step[0].observed_error <= cert.per_step[0].q2_bound

    def test_zero_residual_tight_at_first_step(self):
        e, spec, trace = run("expfit_zero", fraction=0.9)
        cert = certify_trace(trace, e.x_star, spec, e.constants, EXACT)
        assert cert.certified
        first = cert.per_step[0]
        # observed/bound frozen from a run: the bound is within two orders of magnitude
        assert 0.01 < first.observed_error / first.q2_bound < 1

    def test_invariant_certified_iff_steps_ok(self):
        e, spec, trace = run("quadratic_residual", fraction=0.9)
        cert = certify_trace(trace, e.x_star, spec, e.constants, EXACT)
        ok = all(
            s.observed_error <= s.q2_bound * (1 + 1e-9) and s.contraction_ok and s.in_ball_ok
            for s in cert.per_step
        )
        assert cert.certified == ok

    def test_missing_x_star(self):
        e, spec, trace = run("expfit_zero")
        assert certify_trace(trace, None, spec, e.constants, EXACT).overall == "not_applicable"

    def test_outside_ball(self):
        e = get_entry("quadratic_residual")
        spec = e.majorant("smale")
        r = radius(spec, e.constants, EXACT).r
        trace = iterate(e.problem, SolverConfig(), start_point(e.x_star, r, 1.1, 0))
        cert = certify_trace(trace, e.x_star, spec, e.constants, EXACT)
        assert cert.overall == "not_applicable"
        assert "outside" in cert.violation_details[0]

    def test_infeasible_constants(self):
        e, spec, trace = run("expfit_zero")
        cert = certify_trace(trace, e.x_star, spec, e.constants, MethodParams(0.0, 2.0, 1.5))
        assert cert.overall == "not_applicable"

    def test_forcing_violation_not_certified(self):
        e = get_entry("expfit_zero")
        spec = e.majorant()
        params = MethodParams(0.1, 1.0, 0.0)
        r = radius(spec, e.constants, params).r
        cfg = SolverConfig(mode="inexact", vartheta=0.1, forcing=0.5, residual_strategy="random_scaled", enforce_forcing=False)
        trace = iterate(e.problem, cfg, start_point(e.x_star, r, 0.5, 0))
        cert = certify_trace(trace, e.x_star, spec, e.constants, params)
        assert cert.overall in ("not_applicable", "violated")
        assert any("forcing" in d for d in cert.violation_details)

    def test_tampered_trace_violated(self):
        e, spec, trace = run("expfit_residual", fraction=0.9)
        bad = tamper(trace, 2, 1.5, e.x_star)
        cert = certify_trace(bad, e.x_star, spec, e.constants, EXACT)
        assert cert.overall == "violated"
        assert not cert.per_step[1].contraction_ok

    def test_inflated_omega2_does_not_rescue(self):
        params = MethodParams(0.0, 1.2, 0.1)
        cfg = SolverConfig(mode="gn_like", omega_target=(1.2, 0.1), seed=4)
        e, spec, trace = run("expfit_zero", cfg, fraction=0.9, params=params)
        assert certify_trace(trace, e.x_star, spec, e.constants, params).certified
        bad = tamper(trace, 2, 1.5, e.x_star)
        inflated = MethodParams(0.0, 1.2, 0.2)
        cert = certify_trace(bad, e.x_star, spec, e.constants, inflated)
        assert cert.overall != "certified"

    def test_bound_violation_detected(self):
        # shrink the error a little, but far less than the quadratic bound demands
        e, spec, trace = run("expfit_zero", fraction=0.9)
        bad = tamper(trace, 1, 0.99, e.x_star)
        cert = certify_trace(bad, e.x_star, spec, e.constants, EXACT)
        assert cert.overall == "violated"
        assert cert.per_step[0].contraction_ok and not cert.per_step[0].bound_ok
        assert cert.worst_slack < 0

    def test_as_dict(self):
        e, spec, trace = run("rosenbrock")
        d = certify_trace(trace, e.x_star, spec, e.constants, EXACT).as_dict()
        assert d["overall"] == "certified" and len(d["per_step"]) == len(trace.records) - 1


class TestBoundSequence:
    @pytest.mark.parametrize("pid", ["expfit_zero", "expfit_residual", "quadratic_residual", "rosenbrock"])
    @pytest.mark.parametrize("params", [EXACT, MethodParams(0.5, 1.0, 0.0), MethodParams(0.0, 1.2, 0.1)])
    def test_strictly_decreasing_to_zero(self, pid, params):
        e = get_entry(pid)
        spec = e.majorant()
        r = radius(spec, e.constants, params).r
        for frac in (0.1, 0.5, 0.99):
            t0 = frac * r
            cq, cl = q2_coefficients(spec, e.constants, params, t0)
            b = q2_bound_sequence(cq, cl, t0, 400)
            assert np.all(np.diff(b) < 0) or b[-1] == 0.0
            assert np.all(np.diff(b) <= 0)
            assert b[-1] < 1e-6 * t0


class TestPinvLemma:
    def test_at_stationary_point(self):
        e = get_entry("expfit_zero")
        rep = check_pinv_bound_lemma(e.problem, e.majorant(), e.constants, [e.x_star])
        assert rep.passed and rep.sample_count == 2
        assert abs(rep.worst_slack) <= 1e-12

    def test_uniform_samples(self):
        e = get_entry("quadratic_residual")
        spec = e.majorant()
        lim = min(compute_nu(spec, e.constants), e.constants.kappa)
        pts = sample_ball(e.x_star, lim, 100, np.random.default_rng(0))
        rep = check_pinv_bound_lemma(e.problem, spec, e.constants, pts)
        assert rep.passed and rep.sample_count == 200 and not rep.diagnostics

    def test_excluded(self):
        e = get_entry("expfit_zero")
        rep = check_pinv_bound_lemma(e.problem, e.majorant(), e.constants, [e.x_star + np.array([0.3, 0.0])])
        assert rep.sample_count == 0 and "excluded" in rep.diagnostics[0]


class TestLinearizationLemma:
    def test_affine(self, rng):
        e = get_entry("affine_inconsistent")
        pts = sample_ball(e.x_star, 1.0, 50, rng)
        rep = check_linearization_lemma(e.problem, e.majorant(), pts)
        assert rep.passed

    def test_one_dimensional_equality(self):
        K = 3.0
        p = Problem(lambda x: 0.5 * K * x**2, lambda x: np.array([[K * x[0]]]), 1, 1, np.zeros(1), 1.0, np.zeros(1))
        rep = check_linearization_lemma(p, make_lipschitz_majorant(K), [np.array([0.4]), np.array([-0.7])])
        assert rep.passed
        assert abs(rep.worst_slack) <= 1e-14

    def test_smale_catalog(self, rng):
        e = get_entry("rosenbrock")
        pts = sample_ball(e.x_star, e.constants.kappa, 100, rng)
        rep = check_linearization_lemma(e.problem, e.majorant("smale"), pts)
        assert rep.passed and rep.sample_count == 100


class TestStepLemma:
    def test_zero_residual_at_x_star(self):
        e = get_entry("expfit_zero")
        rep = check_step_lemma(e.problem, e.majorant(), e.constants, [e.x_star])
        assert rep.passed

    def test_nonzero_residual_at_x_star(self):
        e = get_entry("affine_inconsistent")
        rep = check_step_lemma(e.problem, e.majorant(), e.constants, [e.x_star])
        assert rep.passed

    def test_nonzero_residual_samples(self, rng):
        e = get_entry("expfit_residual")
        spec = e.majorant()
        lim = min(compute_nu(spec, e.constants), e.constants.kappa)
        pts = sample_ball(e.x_star, lim, 100, rng)
        rep = check_step_lemma(e.problem, spec, e.constants, pts)
        assert rep.passed and rep.sample_count == 100


class TestLemmaNegativeControls:
    """An understated majorant constant must be caught."""

    def test_linearization_with_small_K(self, rng):
        e = get_entry("rosenbrock")
        pts = sample_ball(e.x_star, e.constants.kappa, 50, rng)
        rep = check_linearization_lemma(e.problem, make_lipschitz_majorant(2.0), pts)
        assert not rep.passed

    def test_pinv_with_small_K(self, rng):
        e = get_entry("expfit_zero")
        pts = sample_ball(e.x_star, e.constants.kappa, 50, rng)
        rep = check_pinv_bound_lemma(e.problem, make_lipschitz_majorant(0.05), e.constants, pts)
        assert not rep.passed

    def test_step_with_small_K(self, rng):
        e = get_entry("rosenbrock")
        pts = sample_ball(e.x_star, e.constants.kappa, 50, rng)
        rep = check_step_lemma(e.problem, make_lipschitz_majorant(0.2), e.constants, pts)
        assert not rep.passed

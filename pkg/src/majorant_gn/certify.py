"""Check iteration traces and the auxiliary lemmas against their bounds.

A trace is *certified* when every step obeys the per-step error bound
``e_{k+1} <= c_quad e_k^2 + c_lin e_k`` (coefficients frozen at
``t0 = ||x0 - x*||``), errors strictly decrease, and all iterates stay in the
convergence ball. Steps whose error has already reached floating-point
resolution are accepted without comparison.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import linops
from .majorant import SQRT2, _q2_coefficients, compute_nu, e_f, radius

__all__ = [
    "StepCheck",
    "Certificate",
    "LemmaCheckReport",
    "CERT_RTOL",
    "default_noise_floor",
    "certify_trace",
    "q2_bound_sequence",
    "check_pinv_bound_lemma",
    "check_linearization_lemma",
    "check_step_lemma",
    "check_banach_lemma",
    "check_injectivity_lemma",
    "check_perturbation_lemma",
]

CERT_RTOL = 1e-9
LEMMA_RTOL = 1e-9
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class StepCheck:
    k: int
    observed_error: float
    q2_bound: float
    contraction_ok: bool
    in_ball_ok: bool
    bound_ok: bool
    below_floor: bool = False

    @property
    def ok(self):
        return self.bound_ok and self.contraction_ok and self.in_ball_ok


@dataclass
class Certificate:
    per_step: list = field(default_factory=list)
    overall: str = "not_applicable"
    violation_details: list = field(default_factory=list)
    t0: float = math.nan
    ball_radius: float = math.nan
    c_quad: float = math.nan
    c_lin: float = math.nan
    worst_slack: float = math.nan
    grade: str = "exact"

    @property
    def certified(self):
        return self.overall == "certified"

    def as_dict(self):
        return {
            "overall": self.overall,
            "grade": self.grade,
            "t0": self.t0,
            "ball_radius": self.ball_radius,
            "c_quad": self.c_quad,
            "c_lin": self.c_lin,
            "worst_slack": self.worst_slack,
            "violation_details": list(self.violation_details),
            "per_step": [
                {
                    "k": s.k,
                    "observed_error": s.observed_error,
                    "q2_bound": s.q2_bound,
                    "contraction_ok": s.contraction_ok,
                    "in_ball_ok": s.in_ball_ok,
                    "bound_ok": s.bound_ok,
                    "below_floor": s.below_floor,
                }
                for s in self.per_step
            ],
        }


def default_noise_floor(x_star):
    """Distance to ``x*`` below which errors are pure rounding."""
    return 1e3 * _EPS * (1.0 + float(np.linalg.norm(x_star)))


def _hypothesis_violations(trace, params):
    out = []
    for rec in trace.records:
        if not rec.has_step:
            continue
        if rec.theta_k is not None and rec.cond_PM is not None:
            if rec.theta_k * rec.cond_PM > params.vartheta * (1.0 + 1e-12):
                out.append(
                    f"k={rec.k}: forcing theta*cond = {rec.theta_k * rec.cond_PM:.6g} "
                    f"> vartheta = {params.vartheta}"
                )
        if rec.residual_norm_P is not None and rec.bound_rhs_P is not None:
            if rec.residual_norm_P > rec.bound_rhs_P:
                out.append(f"k={rec.k}: ||P r|| exceeds theta ||P J^T F||")
        if rec.omega1_observed is not None and rec.omega1_observed > params.omega1 + 1e-10:
            out.append(f"k={rec.k}: omega1 observed {rec.omega1_observed:.6g} > {params.omega1}")
        if rec.omega2_observed is not None and rec.omega2_observed > params.omega2 + 1e-10:
            out.append(f"k={rec.k}: omega2 observed {rec.omega2_observed:.6g} > {params.omega2}")
    return out


def certify_trace(trace, x_star, spec, consts, params, noise_floor=None, grade="exact"):
    """Compare a trace with the per-step error bound.

    Returns a :class:`Certificate` whose ``overall`` is ``"certified"``,
    ``"violated"`` or ``"not_applicable"``. The latter covers a missing
    ``x*``, infeasible constants, a start outside the ball, and recorded
    steps that break the forcing or ``omega`` hypotheses.
    """
    cert = Certificate(grade=grade)
    if x_star is None:
        cert.violation_details.append("stationary point unknown")
        return cert
    if not trace.records:
        cert.violation_details.append("empty trace")
        return cert
    x_star = np.asarray(x_star, dtype=float)
    report = radius(spec, consts, params)
    if not report.feasible:
        cert.violation_details.extend(report.diagnostics)
        return cert
    r = report.r
    errs = trace.errors(x_star)
    t0 = float(errs[0])
    cert.t0, cert.ball_radius = t0, r
    if not 0.0 < t0 < r:
        cert.violation_details.append(f"x0 at distance {t0:.6g} outside (0, r = {r:.6g})")
        return cert
    bad = _hypothesis_violations(trace, params)
    if bad:
        cert.violation_details.extend(bad)
        return cert

    c_quad, c_lin = _q2_coefficients(spec, consts, params, t0)
    cert.c_quad, cert.c_lin = c_quad, c_lin
    floor = default_noise_floor(x_star) if noise_floor is None else noise_floor
    worst = math.inf
    for k in range(len(errs) - 1):
        e, e_next = float(errs[k]), float(errs[k + 1])
        bound = c_quad * e * e + c_lin * e
        in_ball = e_next < r
        if e_next <= floor:
            check = StepCheck(k, e_next, bound, True, in_ball, True, below_floor=True)
        else:
            bound_ok = e_next <= bound * (1.0 + CERT_RTOL)
            check = StepCheck(k, e_next, bound, e_next < e, in_ball, bound_ok)
            worst = min(worst, (bound - e_next) / bound if bound > 0 else -math.inf)
        cert.per_step.append(check)
        if not check.bound_ok:
            cert.violation_details.append(f"k={k}: error {e_next:.6g} > bound {bound:.6g}")
        if not check.contraction_ok:
            cert.violation_details.append(f"k={k}: no contraction ({e_next:.6g} >= {e:.6g})")
        if not check.in_ball_ok:
            cert.violation_details.append(f"k={k}: iterate left the ball ({e_next:.6g} >= {r:.6g})")
    cert.worst_slack = worst if math.isfinite(worst) else (0.0 if worst > 0 else worst)
    cert.overall = "certified" if all(s.ok for s in cert.per_step) else "violated"
    return cert


def q2_bound_sequence(c_quad, c_lin, t0, steps):
    """Iterates ``b_{k+1} = c_quad b_k^2 + c_lin b_k`` from ``b_0 = t0``."""
    b = [float(t0)]
    for _ in range(steps):
        b.append(c_quad * b[-1] ** 2 + c_lin * b[-1])
    return np.array(b)


# -- lemma checks -----------------------------------------------------------------


@dataclass(frozen=True)
class LemmaCheckReport:
    """Outcome of sampling one inequality.

    ``worst_slack`` is the smallest ``(bound - observed) / scale`` seen, with
    ``scale`` the magnitude of the quantities entering the comparison.
    """

    lemma_id: str
    sample_count: int
    worst_slack: float
    passed: bool
    diagnostics: tuple = ()


def _report(lemma_id, slacks, diagnostics=()):
    worst = min(slacks) if slacks else math.inf
    return LemmaCheckReport(lemma_id, len(slacks), worst, worst >= -LEMMA_RTOL, tuple(diagnostics))


def _rel(bound, observed, scale):
    scale = max(abs(bound), abs(observed), scale)
    return 0.0 if scale == 0.0 else (bound - observed) / scale


def _kappa(problem):
    return problem.domain_radius - float(np.linalg.norm(problem.stationary_point - problem.domain_center))


def check_pinv_bound_lemma(problem, spec, consts, samples):
    """Both pseudoinverse bounds at points within ``min(nu, kappa)`` of ``x*``.

    ``||J(x)^+|| <= beta / (1 - beta d)`` and
    ``||J(x)^+ - J(x*)^+|| <= sqrt(2) beta^2 d / (1 - beta d)``
    with ``d = f'(||x - x*||) + 1``.
    """
    xs = np.asarray(problem.stationary_point, dtype=float)
    beta = consts.beta
    limit = min(compute_nu(spec, consts), consts.kappa, _kappa(problem))
    pinv_star = linops.pseudoinverse(problem.jacobian(xs))
    slacks, diags = [], []
    for x in samples:
        x = np.asarray(x, dtype=float)
        t = float(np.linalg.norm(x - xs))
        if not t < limit:
            diags.append(f"excluded: sample at distance {t:.6g} >= min(nu, kappa) = {limit:.6g}")
            continue
        d = spec.fprime(t) + 1.0
        shrink = 1.0 - beta * d
        pinv = linops.pseudoinverse(problem.jacobian(x))
        slacks.append(_rel(beta / shrink, linops.operator_norm(pinv), beta))
        diff = linops.operator_norm(pinv - pinv_star)
        slacks.append(_rel(SQRT2 * beta**2 * d / shrink, diff, beta))
    return _report("pinv_bound", slacks, diags)


def check_linearization_lemma(problem, spec, samples, kappa=None):
    """``||F(x*) - F(x) - J(x)(x* - x)|| <= e_f(||x - x*||, 0)`` inside the ``kappa``-ball."""
    xs = np.asarray(problem.stationary_point, dtype=float)
    kappa = _kappa(problem) if kappa is None else kappa
    limit = min(kappa, spec.R)
    F_star = problem.residual(xs)
    slacks, diags = [], []
    for x in samples:
        x = np.asarray(x, dtype=float)
        t = float(np.linalg.norm(x - xs))
        if not t < limit:
            diags.append(f"excluded: sample at distance {t:.6g} >= {limit:.6g}")
            continue
        Fx = problem.residual(x)
        lin = problem.jacobian(x) @ (xs - x)
        err = float(np.linalg.norm(F_star - Fx - lin))
        scale = np.linalg.norm(F_star) + np.linalg.norm(Fx) + np.linalg.norm(lin)
        slacks.append(_rel(e_f(spec, t, 0.0), err, scale))
    return _report("linearization", slacks, diags)


def check_step_lemma(problem, spec, consts, samples):
    """Gauss-Newton step size bound within ``min(nu, kappa)``."""
    xs = np.asarray(problem.stationary_point, dtype=float)
    beta, c = consts.beta, consts.c
    limit = min(compute_nu(spec, consts), consts.kappa, _kappa(problem))
    slacks, diags = [], []
    for x in samples:
        x = np.asarray(x, dtype=float)
        t = float(np.linalg.norm(x - xs))
        if not t < limit:
            diags.append(f"excluded: sample at distance {t:.6g} >= min(nu, kappa) = {limit:.6g}")
            continue
        d = spec.fprime(t) + 1.0
        bound = (beta * e_f(spec, t, 0.0) + SQRT2 * c * beta**2 * d) / (1.0 - beta * d) + t
        J = problem.jacobian(x)
        pinv = linops.pseudoinverse(J)
        Fx = problem.residual(x)
        step = float(np.linalg.norm(pinv @ Fx))
        # F(x) itself carries rounding of relative size eps (||F(x)|| + ||J|| ||x||)
        magnitude = np.linalg.norm(Fx) + linops.operator_norm(J) * np.linalg.norm(x)
        scale = linops.operator_norm(pinv) * magnitude
        slacks.append(_rel(bound, step, scale))
    return _report("gn_step", slacks, diags)


def check_banach_lemma(count=200, seed=0, max_dim=6):
    """``||B - I|| < 1`` implies ``||B^{-1}|| <= 1 / (1 - ||B - I||)`` on random ``B``."""
    rng = np.random.default_rng(seed)
    slacks = []
    for _ in range(count):
        n = int(rng.integers(1, max_dim + 1))
        G = rng.standard_normal((n, n))
        q = rng.uniform(0.0, 0.99)
        B = np.eye(n) + q * G / linops.operator_norm(G)
        dist = linops.operator_norm(B - np.eye(n))
        inv_norm = linops.operator_norm(np.linalg.inv(B))
        slacks.append(_rel(1.0 / (1.0 - dist), inv_norm, 0.0))
    return _report("banach", slacks)


def _random_injective(rng, max_dim):
    n = int(rng.integers(1, max_dim + 1))
    m = int(rng.integers(n, n + 4))
    A = rng.standard_normal((m, n))
    return A


def check_injectivity_lemma(count=200, seed=0, max_dim=5):
    """``A`` injective and ``||E A^+|| < 1`` imply ``A + E`` injective.

    The slack is measured against ``sigma_min(A + E) >= (1 - ||E A^+||) sigma_min(A)``,
    which follows from ``A + E = (I + E A^+) A``.
    """
    rng = np.random.default_rng(seed)
    slacks = []
    for _ in range(count):
        A = _random_injective(rng, max_dim)
        pinv = linops.pseudoinverse(A)
        G = rng.standard_normal(A.shape)
        q = rng.uniform(0.0, 0.99)
        E = q * G / linops.operator_norm(G @ pinv)
        ratio = linops.operator_norm(E @ pinv)
        smin = linops.injectivity(A).smallest_singular_value
        smin_b = linops.injectivity(A + E).smallest_singular_value
        # lower bound: the slack is observed minus bound
        slacks.append(_rel(smin_b, (1.0 - ratio) * smin, 0.0))
    return _report("injectivity", slacks)


def check_perturbation_lemma(count=200, seed=0, max_dim=5):
    """Both perturbation bounds of :func:`linops.perturbation_bounds` on random pairs."""
    rng = np.random.default_rng(seed)
    slacks = []
    for _ in range(count):
        A = _random_injective(rng, max_dim)
        pinv = linops.pseudoinverse(A)
        G = rng.standard_normal(A.shape)
        q = rng.uniform(0.0, 0.95)
        E = q * G / (linops.operator_norm(G) * linops.operator_norm(pinv))
        bound_norm, bound_diff = linops.perturbation_bounds(A, E)
        pinv_b = linops.pseudoinverse(A + E)
        slacks.append(_rel(bound_norm, linops.operator_norm(pinv_b), 0.0))
        slacks.append(_rel(bound_diff, linops.operator_norm(pinv_b - pinv), 0.0))
    return _report("perturbation", slacks)

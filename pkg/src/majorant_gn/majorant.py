"""Majorant functions and the convergence-radius constants built from them.

A majorant ``f`` on ``[0, R)`` bounds the variation of the Jacobian around a
stationary point ``x*``::

    ||J(x) - J(x* + tau (x - x*))|| <= f'(||x - x*||) - f'(tau ||x - x*||)

From ``f`` and the problem constants ``c = ||F(x*)||``, ``beta = ||J(x*)^+||``
and the domain radius ``kappa`` we get the quantities ``alpha``, ``nu``,
``rho`` and the ball radius ``r = min(kappa, rho)`` inside which inexact
Gauss-Newton-like iterations provably converge.
"""

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

from .errors import DomainExceeded, Infeasible, InvalidMajorant, OutOfBall

__all__ = [
    "MajorantSpec",
    "ProblemConstants",
    "MethodParams",
    "RadiusReport",
    "make_lipschitz_majorant",
    "make_smale_majorant",
    "alpha",
    "omega_condition",
    "compute_nu",
    "compute_rho",
    "radius",
    "lipschitz_closed_form",
    "smale_closed_form",
    "closed_form_radius_lipschitz",
    "closed_form_radius_smale",
    "e_f",
    "q2_coefficients",
    "second_derivative_series",
    "modified_gn_omegas",
    "modified_gn_radius",
]

SQRT2 = math.sqrt(2.0)

BISECTION_ATOL = 1e-12
BISECTION_MAXITER = 200
GRID_POINTS = 1001
GRID_SLACK = 1e-12


# -- majorant specification -------------------------------------------------


@dataclass(frozen=True)
class MajorantSpec:
    """A majorant function together with its domain.

    Parameters
    ----------
    f, fprime : callable
        The majorant and its derivative, scalar to scalar.
    dplus0 : float
        Right derivative of ``fprime`` at 0. Must be supplied by the caller.
    R : float
        Domain bound, ``f`` is defined on ``[0, R)``. May be ``inf``.
    fsecond : callable, optional
        Second derivative, when known in closed form.
    grid_cap : float
        Upper end of the validation grid when ``R`` is infinite.

    Construction checks ``f(0) = 0``, ``f'(0) = -1`` and that ``f'`` is
    strictly increasing and convex on a sampled grid; a violation raises
    :class:`InvalidMajorant`.
    """

    f: Callable[[float], float]
    fprime: Callable[[float], float]
    dplus0: float
    R: float = math.inf
    fsecond: Optional[Callable[[float], float]] = None
    name: str = "custom"
    grid_cap: float = 10.0
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidMajorant(f"domain bound R must be positive, got {self.R}")
        if not self.dplus0 >= 0:
            raise InvalidMajorant("D+f'(0) of a convex increasing f' is nonnegative")
        f0, fp0 = float(self.f(0.0)), float(self.fprime(0.0))
        if abs(f0) > 1e-12 or abs(fp0 + 1.0) > 1e-12:
            raise InvalidMajorant(f"h1 fails: f(0) = {f0!r}, f'(0) = {fp0!r}")
        upper = min(self.R, self.grid_cap)
        grid = np.linspace(0.0, upper, GRID_POINTS, endpoint=not math.isfinite(self.R) or upper < self.R)
        if grid[-1] >= self.R:
            grid = grid[:-1]
        vals = np.array([float(self.fprime(t)) for t in grid])
        if not np.all(np.isfinite(vals)):
            raise InvalidMajorant("f' is not finite on the validation grid")
        if np.any(np.diff(vals) < -GRID_SLACK) or not vals[-1] > vals[0]:
            raise InvalidMajorant("h2 fails: f' is not strictly increasing")
        a, b = grid[:-2], grid[2:]
        mid = np.array([float(self.fprime(t)) for t in 0.5 * (a + b)])
        chord = 0.5 * (vals[:-2] + vals[2:])
        slack = GRID_SLACK * (1.0 + np.abs(chord))
        if np.any(mid > chord + slack):
            raise InvalidMajorant("h2 fails: f' is not convex on the validation grid")

    def check_domain(self, *ts):
        for t in ts:
            if not (0.0 <= t < self.R):
                raise DomainExceeded(f"t = {t!r} outside [0, {self.R!r})")


def _lip_f(t, K):
    return K * t * t / 2.0 - t


def _lip_fprime(t, K):
    return K * t - 1.0


def _lip_fsecond(t, K):
    return K


def make_lipschitz_majorant(K, R=math.inf):
    """Majorant ``f(t) = K t^2 / 2 - t`` of a ``K``-Lipschitz Jacobian."""
    K = float(K)
    if not K > 0:
        raise InvalidMajorant(f"Lipschitz constant must be positive, got {K}")
    return MajorantSpec(
        f=partial(_lip_f, K=K),
        fprime=partial(_lip_fprime, K=K),
        dplus0=K,
        R=float(R),
        fsecond=partial(_lip_fsecond, K=K),
        name="lipschitz",
        grid_cap=max(10.0, 10.0 / K) if math.isinf(R) else 10.0,
        params={"K": K},
    )


def _smale_f(t, gamma):
    return t / (1.0 - gamma * t) - 2.0 * t


def _smale_fprime(t, gamma):
    return 1.0 / (1.0 - gamma * t) ** 2 - 2.0


def _smale_fsecond(t, gamma):
    return 2.0 * gamma / (1.0 - gamma * t) ** 3


def make_smale_majorant(gamma):
    """Majorant ``f(t) = t / (1 - gamma t) - 2 t`` on ``[0, 1/gamma)``."""
    gamma = float(gamma)
    if not gamma > 0:
        raise InvalidMajorant(f"gamma must be positive, got {gamma}")
    return MajorantSpec(
        f=partial(_smale_f, gamma=gamma),
        fprime=partial(_smale_fprime, gamma=gamma),
        dplus0=2.0 * gamma,
        R=1.0 / gamma,
        fsecond=partial(_smale_fsecond, gamma=gamma),
        name="smale",
        params={"gamma": gamma},
    )


# -- constants ----------------------------------------------------------------


@dataclass(frozen=True)
class ProblemConstants:
    """``c = ||F(x*)||``, ``beta = ||J(x*)^+||`` and the domain radius ``kappa``."""

    c: float
    beta: float
    kappa: float = math.inf

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError(f"c must be nonnegative, got {self.c}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class MethodParams:
    """Inexactness ``vartheta`` and the approximation bounds ``omega1``, ``omega2``."""

    vartheta: float = 0.0
    omega1: float = 1.0
    omega2: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.vartheta < 1.0:
            raise ValueError(f"vartheta must lie in [0, 1), got {self.vartheta}")
        if not 0.0 <= self.omega2 < self.omega1:
            raise ValueError(
                f"need 0 <= omega2 < omega1, got omega1={self.omega1}, omega2={self.omega2}"
            )


@dataclass(frozen=True)
class RadiusReport:
    alpha: float
    nu: float
    rho: float
    r: float
    feasible: bool
    diagnostics: tuple = ()

    def as_dict(self):
        return {
            "alpha": self.alpha,
            "nu": self.nu,
            "rho": self.rho,
            "r": self.r,
            "feasible": self.feasible,
            "diagnostics": list(self.diagnostics),
        }


def alpha(spec, consts):
    """``sqrt(2) c beta^2 D+f'(0)``; hypothesis h3 asks for ``alpha < 1``."""
    return SQRT2 * consts.c * consts.beta**2 * spec.dplus0


def omega_condition(alpha_value, params):
    """Left side of ``omega1 (alpha + alpha vartheta + vartheta) + omega2 < 1``."""
    th = params.vartheta
    return params.omega1 * (alpha_value + alpha_value * th + th) + params.omega2


# -- suprema by bisection -----------------------------------------------------


def _sup_negative(g, upper):
    """``sup {t in (0, upper) : g(t) < 0}`` for increasing ``g`` negative near 0.

    Returns ``upper`` when ``g`` stays negative on the whole interval. An
    infinite ``upper`` is handled by doubling from 1 until ``g >= 0``.
    """
    if math.isinf(upper):
        hi = 1.0
        while g(hi) < 0.0:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        lo = 0.0 if hi == 1.0 else hi / 2.0
    else:
        hi = float(np.nextafter(upper, 0.0))
        if g(hi) < 0.0:
            return float(upper)
        lo = 0.0
    for _ in range(BISECTION_MAXITER):
        if hi - lo <= BISECTION_ATOL * min(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def compute_nu(spec, consts):
    """``sup {t in [0, R) : beta (f'(t) + 1) < 1}``."""
    beta = consts.beta

    def g(t):
        return beta * (spec.fprime(t) + 1.0) - 1.0

    return _sup_negative(g, spec.R)


def _rho_indicator(spec, consts, params):
    beta, c = consts.beta, consts.c
    lead = (1.0 + params.vartheta) * params.omega1 * beta
    tail = params.omega1 * params.vartheta + params.omega2

    def h(t):
        fp = spec.fprime(t)
        denom = t * (1.0 - beta * (fp + 1.0))
        if not denom > 0.0:
            return math.inf
        num = t * fp - spec.f(t) + SQRT2 * c * beta * (fp + 1.0)
        return lead * num / denom + tail - 1.0

    return h


def _require_omega_feasible(spec, consts, params):
    a = alpha(spec, consts)
    w = omega_condition(a, params)
    if not w < 1.0:
        raise Infeasible(
            f"omega1*(alpha+alpha*vartheta+vartheta)+omega2 = {w:.6g} >= 1",
            conditions=("omega",),
        )
    return a


def compute_rho(spec, consts, params, nu=None):
    """Largest ``t`` below ``nu`` at which one step provably contracts.

    Bisection on the increasing map ``h(t) = LHS(t) - 1``; returns ``nu`` when
    ``h`` is negative on all of ``(0, nu)``.
    """
    _require_omega_feasible(spec, consts, params)
    if nu is None:
        nu = compute_nu(spec, consts)
    return _sup_negative(_rho_indicator(spec, consts, params), nu)


def radius(spec, consts, params):
    """Assemble the :class:`RadiusReport`; infeasibility is reported, not raised."""
    a = alpha(spec, consts)
    diagnostics = []
    if not a < 1.0:
        diagnostics.append(f"h3: alpha = {a:.6g} >= 1")
    w = omega_condition(a, params)
    if not w < 1.0:
        diagnostics.append(
            f"omega: omega1*(alpha+alpha*vartheta+vartheta)+omega2 = {w:.6g} >= 1"
        )
    nu = compute_nu(spec, consts)
    if diagnostics:
        return RadiusReport(a, nu, math.nan, math.nan, False, tuple(diagnostics))
    rho = compute_rho(spec, consts, params, nu=nu)
    r = min(consts.kappa, rho)
    if not r > 0:
        diagnostics.append("radius: computed radius is not positive")
    return RadiusReport(a, nu, rho, r, not diagnostics, tuple(diagnostics))


# -- closed forms -------------------------------------------------------------


def lipschitz_closed_form(K, consts, params):
    """``(nu, rho)`` for the Lipschitz majorant in closed form."""
    c, beta = consts.c, consts.beta
    th, w1, w2 = params.vartheta, params.omega1, params.omega2
    a = SQRT2 * c * beta**2 * K
    conditions = []
    if not a < 1.0:
        conditions.append("h3")
    if not omega_condition(a, params) < 1.0:
        conditions.append("omega")
    if conditions:
        raise Infeasible(f"violated: {', '.join(conditions)}", conditions)
    nu = 1.0 / (beta * K)
    num = 2.0 * (1.0 - w1 * th - w2) - 2.0 * SQRT2 * c * K * beta**2 * w1 * (1.0 + th)
    rho = num / (beta * K * (2.0 + w1 - th * w1 - 2.0 * w2))
    return nu, rho


def closed_form_radius_lipschitz(K, consts, params):
    return min(consts.kappa, lipschitz_closed_form(K, consts, params)[1])


def smale_closed_form(gamma, consts, params):
    """``(nu, rho)`` for the Smale majorant in closed form."""
    c, beta = consts.c, consts.beta
    th, w1, w2 = params.vartheta, params.omega1, params.omega2
    a_h3 = 2.0 * SQRT2 * c * beta**2 * gamma
    conditions = []
    if not a_h3 < 1.0:
        conditions.append("h3")
    if not omega_condition(a_h3, params) < 1.0:
        conditions.append("omega")
    if conditions:
        raise Infeasible(f"violated: {', '.join(conditions)}", conditions)
    a = 1.0 - th * w1 - w2
    b = (1.0 + th) * w1 * beta
    abar = b + 2.0 * a * (1.0 + beta) - SQRT2 * gamma * beta * b * c
    disc = abar**2 - 4.0 * a * (1.0 + beta) * (a - 2.0 * SQRT2 * c * beta * b * gamma)
    if disc < 0.0:
        raise Infeasible(f"negative discriminant {disc:.6g}", ("discriminant",))
    rho = (abar - math.sqrt(disc)) / (2.0 * a * gamma * (1.0 + beta))
    nu = ((1.0 + beta) - math.sqrt(beta * (1.0 + beta))) / (gamma * (1.0 + beta))
    return nu, rho


def closed_form_radius_smale(gamma, consts, params):
    return min(consts.kappa, smale_closed_form(gamma, consts, params)[1])


# -- bound ingredients ---------------------------------------------------------


def e_f(spec, t, u):
    """Linearization error ``f(u) - f(t) - f'(t) (u - t)`` of the majorant."""
    spec.check_domain(t, u)
    return spec.f(u) - (spec.f(t) + spec.fprime(t) * (u - t))


def _q2_coefficients(spec, consts, params, t0):
    beta, c = consts.beta, consts.c
    fp = spec.fprime(t0)
    shrink = 1.0 - beta * (fp + 1.0)
    lead = (1.0 + params.vartheta) * params.omega1
    c_quad = lead * beta * (fp * t0 - spec.f(t0)) / (t0 * t0 * shrink)
    c_lin = (
        lead * SQRT2 * c * beta**2 * (fp + 1.0) / (t0 * shrink)
        + params.omega1 * params.vartheta
        + params.omega2
    )
    return c_quad, c_lin


def q2_coefficients(spec, consts, params, t0, ball_radius=None):
    """Coefficients of the per-step error bound frozen at ``t0 = ||x0 - x*||``.

    Every admissible iteration started at distance ``t0`` satisfies
    ``e_{k+1} <= c_quad * e_k**2 + c_lin * e_k``.

    Raises
    ------
    OutOfBall
        Unless ``0 < t0 < r``.
    """
    if ball_radius is None:
        report = radius(spec, consts, params)
        if not report.feasible:
            raise Infeasible("; ".join(report.diagnostics))
        ball_radius = report.r
    if not 0.0 < t0 < ball_radius:
        raise OutOfBall(f"t0 = {t0!r} not in (0, {ball_radius!r})")
    return _q2_coefficients(spec, consts, params, t0)


def second_derivative_series(t, tol=1e-12):
    """Partial sum of ``sum_i (i+2)(i+1) t^i`` accurate to ``tol``.

    The number of terms is picked from a geometric tail bound: past index
    ``N`` the term ratio is at most ``q = t (N+3)/(N+1) < 1``, so the tail is
    at most ``a_{N+1} / (1 - q)``. Returns ``(partial_sum, N)``.
    """
    if not 0.0 <= t < 1.0:
        raise DomainExceeded(f"series needs 0 <= t < 1, got {t}")
    total, term, i = 0.0, 2.0, 0
    while True:
        total += term
        nxt = term * t * (i + 3) / (i + 1)
        q = t * (i + 4) / (i + 2)
        if q < 1.0 and nxt / (1.0 - q) <= tol:
            return total, i
        term, i = nxt, i + 1


# -- modified Gauss-Newton ------------------------------------------------------


def modified_gn_omegas(spec, consts, jstar_norm, t):
    """Approximation bounds valid for ``B = J(x0)^T J(x0)`` with ``x0, x`` in ``B(x*, t)``.

    With ``d = f'(t) + 1`` the majorant gives ``||J(x) - J(x*)|| <= d``, hence
    ``||J(x)^T J(x) - J(y)^T J(y)|| <= 4 d (||J(x*)|| + d)`` and
    ``||(J(y)^T J(y))^{-1}|| <= beta^2 / (1 - beta d)^2``.
    """
    d = spec.fprime(t) + 1.0
    shrink = 1.0 - consts.beta * d
    if not shrink > 0:
        return math.inf, math.inf
    w2 = 4.0 * d * (jstar_norm + d) * consts.beta**2 / shrink**2
    return 1.0 + w2, w2


def modified_gn_radius(spec, consts, jstar_norm, vartheta=0.0):
    """Self-consistent radius for modified Gauss-Newton.

    Largest ``t`` such that ``t <= r(omega(t))`` where ``omega(t)`` comes from
    :func:`modified_gn_omegas`. Returns ``(t, MethodParams)``.
    """
    nu = compute_nu(spec, consts)
    upper = min(consts.kappa, nu, spec.R)

    def params_at(t):
        w1, w2 = modified_gn_omegas(spec, consts, jstar_norm, t)
        if not (math.isfinite(w1) and w2 < w1):
            return None
        return MethodParams(vartheta, w1, w2)

    def g(t):
        p = params_at(t)
        if p is None:
            return math.inf
        rep = radius(spec, consts, p)
        if not rep.feasible:
            return math.inf
        return t - rep.r

    t = _sup_negative(g, upper)
    if not t > 0:
        raise Infeasible("no positive self-consistent radius for modified Gauss-Newton")
    return t, params_at(t)

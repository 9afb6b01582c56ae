"""Inexact Gauss-Newton-like iterations.

Each step solves ``B(x_k) S_k = -J_k^T F(x_k) + r_k`` and sets
``x_{k+1} = x_k + S_k``. The operator ``B`` is ``J_k^T J_k`` (exact), the
frozen ``J_0^T J_0`` (modified) or a random perturbation of ``J_k^T J_k``
with controlled ``omega`` bounds (gn_like). In ``inexact`` mode the residual
``r_k`` is nonzero and must satisfy ``||P_k r_k|| <= theta_k ||P_k J_k^T F_k||``
with ``theta_k cond(P_k J_k^T J_k) <= vartheta``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_triangular

from . import linops
from .errors import (
    DomainExceeded,
    ForcingViolation,
    RankDeficient,
    SingularPreconditioner,
    TargetUnreachable,
)

__all__ = [
    "MODES",
    "PRECONDITIONERS",
    "RESIDUAL_STRATEGIES",
    "TERMINATIONS",
    "Problem",
    "SolverConfig",
    "StepRecord",
    "IterationTrace",
    "check_jacobian",
    "check_stationary",
    "gauss_newton_step",
    "build_B",
    "make_preconditioner",
    "inject_residual",
    "truncated_inner_solve",
    "iterate",
]

MODES = ("exact_gn", "modified_gn", "gn_like", "inexact")
PRECONDITIONERS = ("identity", "jacobi", "user")
RESIDUAL_STRATEGIES = ("none", "random_scaled", "inner_solver_truncation")
TERMINATIONS = ("converged_grad", "converged_step", "max_iters", "diverged", "error")

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Problem:
    """A nonlinear least-squares instance ``min ||F(x)||^2`` on a ball.

    ``domain_center``/``domain_radius`` describe the open ball playing the
    role of the domain; iterates leaving it count as divergence.
    """

    residual_eval: Callable[[np.ndarray], np.ndarray]
    jacobian_eval: Callable[[np.ndarray], np.ndarray]
    dimension_in: int
    dimension_out: int
    domain_center: np.ndarray
    domain_radius: float
    stationary_point: Optional[np.ndarray] = None
    name: str = ""

    def residual(self, x):
        return np.asarray(self.residual_eval(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x):
        return np.asarray(self.jacobian_eval(np.asarray(x, dtype=float)), dtype=float)

    def in_domain(self, x):
        d = np.linalg.norm(np.asarray(x, dtype=float) - self.domain_center)
        return bool(np.isfinite(d) and d < self.domain_radius)


def check_jacobian(problem, points, rtol=1e-5):
    """Largest relative mismatch between the Jacobian and central differences.

    Returns ``(ok, worst)`` where ``worst`` is the max over ``points`` of
    ``max|J - J_fd| / max(1, max|J|)``.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        h = _EPS ** (1.0 / 3.0) * (1.0 + np.linalg.norm(x))
        J = problem.jacobian(x)
        fd = np.empty_like(J)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            fd[:, j] = (problem.residual(x + e) - problem.residual(x - e)) / (2.0 * h)
        worst = max(worst, np.max(np.abs(J - fd)) / max(1.0, np.max(np.abs(J))))
    return worst <= rtol, worst


def check_stationary(problem, tol=1e-8):
    """``||J(x*)^T F(x*)|| <= tol``; returns ``(ok, norm)``."""
    xs = problem.stationary_point
    if xs is None:
        return False, math.nan
    g = problem.jacobian(xs).T @ problem.residual(xs)
    n = float(np.linalg.norm(g))
    return n <= tol, n


@dataclass(frozen=True)
class SolverConfig:
    """Iteration settings.

    ``forcing`` gives ``theta_k``: ``"max"`` picks the largest admissible
    value ``vartheta / cond(P_k J_k^T J_k)``, a float is used as a constant and
    a callable is called with ``k``. It only matters in ``inexact`` mode; the
    other modes run with ``theta_k = 0``. ``inexact_base`` is the ``B`` policy
    used by ``inexact`` mode.
    """

    mode: str = "exact_gn"
    omega_target: tuple = (1.0, 0.0)
    vartheta: float = 0.0
    forcing: Union[str, float, Callable[[int], float]] = "max"
    preconditioner: str = "identity"
    user_preconditioner: Optional[Callable[[np.ndarray], np.ndarray]] = None
    residual_strategy: str = "none"
    inexact_base: str = "exact_gn"
    max_iters: int = 200
    step_tol: float = 1e-14
    grad_tol: float = 1e-10
    seed: int = 0
    enforce_forcing: bool = True
    rank_tol: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.inexact_base not in MODES[:3]:
            raise ValueError(f"unknown B policy {self.inexact_base!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.residual_strategy not in RESIDUAL_STRATEGIES:
            raise ValueError(f"unknown residual strategy {self.residual_strategy!r}")
        if self.mode != "inexact" and self.residual_strategy != "none":
            raise ValueError(f"mode {self.mode} runs with r_k = 0; use residual_strategy='none'")
        if not 0.0 <= self.vartheta < 1.0:
            raise ValueError(f"vartheta must lie in [0, 1), got {self.vartheta}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")

    @property
    def b_policy(self):
        return self.inexact_base if self.mode == "inexact" else self.mode


@dataclass(frozen=True)
class StepRecord:
    """Quantities observed at iterate ``k``.

    Step-related fields are ``None`` on the final record, which only carries
    the last iterate.
    """

    k: int
    x_k: tuple
    step_norm: Optional[float]
    grad_norm: Optional[float]
    error_to_star: Optional[float] = None
    theta_k: Optional[float] = None
    cond_PM: Optional[float] = None
    residual_norm_P: Optional[float] = None
    bound_rhs_P: Optional[float] = None
    omega1_observed: Optional[float] = None
    omega2_observed: Optional[float] = None

    @property
    def x(self):
        return np.array(self.x_k, dtype=float)

    @property
    def has_step(self):
        return self.step_norm is not None


RECORD_FIELDS = tuple(StepRecord.__dataclass_fields__)


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    termination: str = "error"

    @property
    def x0(self):
        return self.records[0].x

    @property
    def final(self):
        return self.records[-1].x

    def errors(self, x_star):
        x_star = np.asarray(x_star, dtype=float)
        return np.array([np.linalg.norm(rec.x - x_star) for rec in self.records])


# -- linear algebra of one step ----------------------------------------------


class _NormalSolver:
    """Solves with ``J^T J`` through the thin QR factorization of ``J``."""

    def __init__(self, J):
        self.Q, self.R = np.linalg.qr(J)

    def gn_step(self, Fx):
        return -solve_triangular(self.R, self.Q.T @ Fx)

    def solve(self, rhs):
        return solve_triangular(self.R, solve_triangular(self.R, rhs, trans="T"))


def gauss_newton_step(J, Fx, tol=None):
    """Gauss-Newton step ``-J^+ F(x)`` via QR.

    Raises
    ------
    RankDeficient
        If ``J`` is not injective at ``tol`` (default ``1e-12 ||J||``).
    """
    J = linops.as_operator(J)
    rep = linops.injectivity(J, tol)
    if not rep.is_injective:
        raise RankDeficient(
            f"Jacobian not injective: sigma_min = {rep.smallest_singular_value:.3e}"
        )
    return _NormalSolver(J).gn_step(np.asarray(Fx, dtype=float))


def _omegas(B, M):
    W = np.linalg.solve(B, M)
    return linops.operator_norm(W), linops.operator_norm(W - np.eye(M.shape[0]))


def _perturbed_normal(M, omega1, omega2, rng):
    n = M.shape[0]
    if omega2 == 0.0:
        return M.copy()
    G = rng.standard_normal((n, n))
    D0 = 0.5 * (G + G.T)
    D0 /= linops.operator_norm(D0)
    E0 = np.linalg.solve(M, D0 @ M)
    scale = omega2 * (1.0 - 1e-8) / linops.operator_norm(E0)
    eye = np.eye(n)

    def too_big(s):
        return linops.operator_norm(eye + s * E0) > omega1 * (1.0 - 1e-8)

    if too_big(scale):
        lo, hi = 0.0, scale
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if too_big(mid):
                hi = mid
            else:
                lo = mid
        scale = lo
    I_plus_D = eye + scale * D0
    if not np.isfinite(linops.cond(I_plus_D)):
        raise TargetUnreachable("perturbation I + D is singular")
    return np.linalg.solve(I_plus_D, M)


def build_B(mode, J_current, J_initial=None, omega_target=(1.0, 0.0), rng=None):
    """Approximation ``B`` of ``J^T J`` for one step.

    ``gn_like`` returns ``(I + D)^{-1} J^T J`` with a random symmetric ``D``
    scaled so that ``||B^{-1} J^T J - I|| <= omega2`` and
    ``||B^{-1} J^T J|| <= omega1``.
    """
    J = linops.as_operator(J_current)
    if mode == "exact_gn":
        return J.T @ J
    if mode == "modified_gn":
        J0 = linops.as_operator(J_initial)
        return J0.T @ J0
    if mode != "gn_like":
        raise ValueError(f"no B policy for mode {mode!r}")
    omega1, omega2 = (float(w) for w in omega_target)
    if omega2 < 0 or omega1 < 1.0:
        # the random D here is indefinite, so ||I + D|| < 1 is not reachable
        raise TargetUnreachable(
            f"targets omega1={omega1}, omega2={omega2} not supported (need omega1 >= 1)"
        )
    if rng is None:
        rng = np.random.default_rng(0)
    M = J.T @ J
    B = _perturbed_normal(M, omega1, omega2, rng)
    w1, w2 = _omegas(B, M)
    if w1 > omega1 + 1e-10 or w2 > omega2 + 1e-10:
        raise TargetUnreachable(f"observed omegas ({w1:.6g}, {w2:.6g}) exceed targets")
    return B


def make_preconditioner(kind, M, user=None):
    """Left preconditioner ``P`` for the normal system with matrix ``M``."""
    M = linops.as_operator(M)
    if kind == "identity":
        P = np.eye(M.shape[0])
    elif kind == "jacobi":
        d = np.diag(M)
        if np.any(d == 0.0):
            raise SingularPreconditioner("zero on the diagonal of M")
        P = np.diag(1.0 / d)
    elif kind == "user":
        if user is None:
            raise ValueError("preconditioner 'user' needs a callable or matrix")
        P = linops.as_operator(user(M) if callable(user) else user)
    else:
        raise ValueError(f"unknown preconditioner {kind!r}")
    if P.shape != M.shape or not np.isfinite(linops.cond(P)):
        raise SingularPreconditioner("preconditioner is not invertible")
    return P


def _fit_to_bound(r, P, bound):
    # rounding in P r can overshoot the bound by an ulp or two
    n = np.linalg.norm(P @ r)
    while n > bound:
        r = r * (bound / n) * (1.0 - 4.0 * _EPS)
        n = np.linalg.norm(P @ r)
    return r


def truncated_inner_solve(B, g, P, theta):
    """GMRES on ``P B S = -P g``, stopped at the first iterate with
    ``||P (B S + g)|| <= theta ||P g||``.

    Returns ``(S, r, iterations)`` with ``r = B S + g`` the actual residual.
    """
    B = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    Pg = P @ g
    bound = theta * np.linalg.norm(Pg)
    if theta == 0.0 or not np.any(g):
        return np.linalg.solve(B, -g), np.zeros(n), 0
    A = P @ B
    beta0 = np.linalg.norm(Pg)
    V = np.zeros((n, n + 1))
    H = np.zeros((n + 1, n))
    V[:, 0] = -Pg / beta0
    for j in range(n):
        w = A @ V[:, j]
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w = w - H[i, j] * V[:, i]
        H[j + 1, j] = np.linalg.norm(w)
        rhs = np.zeros(j + 2)
        rhs[0] = beta0
        y = np.linalg.lstsq(H[: j + 2, : j + 1], rhs, rcond=None)[0]
        S = V[:, : j + 1] @ y
        r = B @ S + g
        if np.linalg.norm(P @ r) <= bound:
            return S, r, j + 1
        if H[j + 1, j] <= 1e-14 * beta0:
            break
        V[:, j + 1] = w / H[j + 1, j]
    S = np.linalg.solve(B, -g)
    r = B @ S + g
    if np.linalg.norm(P @ r) <= bound:
        return S, r, n
    raise ForcingViolation(
        f"inner solve cannot reach ||P r|| <= {bound:.3e} (theta = {theta:.3e})"
    )


def inject_residual(strategy, theta_k, P, g, B=None, rng=None):
    """Residual ``r`` with ``||P r|| <= theta_k ||P g||``.

    ``random_scaled`` draws a random direction and scales ``P r`` to the
    bound; ``inner_solver_truncation`` returns the residual of a truncated
    GMRES solve of ``B S = -g`` (``B`` required).
    """
    g = np.asarray(g, dtype=float)
    P = linops.as_operator(P)
    if theta_k < 0:
        raise ValueError("theta_k must be nonnegative")
    bound = theta_k * np.linalg.norm(P @ g)
    if strategy == "none" or bound == 0.0:
        r = np.zeros_like(g)
    elif strategy == "random_scaled":
        if rng is None:
            rng = np.random.default_rng(0)
        v = rng.standard_normal(g.size)
        v *= bound / np.linalg.norm(v)
        r = _fit_to_bound(np.linalg.solve(P, v), P, bound)
    elif strategy == "inner_solver_truncation":
        if B is None:
            raise ValueError("inner_solver_truncation needs the operator B")
        r = truncated_inner_solve(B, g, P, theta_k)[1]
    else:
        raise ValueError(f"unknown residual strategy {strategy!r}")
    if np.linalg.norm(P @ r) > bound:
        raise ForcingViolation("residual exceeds the forcing bound")
    return r


# -- the iteration --------------------------------------------------------------


def _theta(config, k, cond_pm):
    if config.mode != "inexact":
        return 0.0
    forcing = config.forcing
    if forcing == "max":
        if not np.isfinite(cond_pm):
            return 0.0
        theta = config.vartheta / cond_pm
        while theta * cond_pm > config.vartheta:
            theta = float(np.nextafter(theta, 0.0))
        return theta
    if callable(forcing):
        return float(forcing(k))
    return float(forcing)


def iterate(problem, config, x0):
    """Run the iteration from ``x0`` and return its :class:`IterationTrace`.

    Raises
    ------
    RankDeficient
        The Jacobian loses injectivity at an iterate.
    ForcingViolation
        ``theta_k cond(P_k M_k) > vartheta`` while ``enforce_forcing`` is set.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (problem.dimension_in,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({problem.dimension_in},)")
    if not problem.in_domain(x):
        raise DomainExceeded("x0 lies outside the problem domain ball")
    b_rng, r_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    x_star = problem.stationary_point
    policy = config.b_policy
    omega1, omega2 = config.omega_target

    def err(x):
        return None if x_star is None else float(np.linalg.norm(x - x_star))

    J0 = problem.jacobian(x)
    initial_solver = _NormalSolver(J0) if policy == "modified_gn" else None
    trace = IterationTrace()
    stalled = False
    for k in range(config.max_iters + 1):
        Fx = problem.residual(x)
        J = problem.jacobian(x)
        g = J.T @ Fx
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol or stalled or k == config.max_iters:
            trace.records.append(StepRecord(k, tuple(x.tolist()), None, gnorm, err(x)))
            if gnorm <= config.grad_tol:
                trace.termination = "converged_grad"
            else:
                trace.termination = "converged_step" if stalled else "max_iters"
            break

        rep = linops.injectivity(J, config.rank_tol)
        if not rep.is_injective:
            raise RankDeficient(
                f"Jacobian not injective at iterate {k}: "
                f"sigma_min = {rep.smallest_singular_value:.3e}"
            )
        M = J.T @ J
        B = build_B(policy, J, J0, (omega1, omega2), rng=b_rng)
        P = make_preconditioner(config.preconditioner, M, config.user_preconditioner)
        cond_pm = linops.cond(P @ M)
        theta = _theta(config, k, cond_pm)
        if theta < 0:
            raise ForcingViolation(f"negative forcing term {theta} at iterate {k}")
        if config.enforce_forcing and theta * cond_pm > config.vartheta:
            raise ForcingViolation(
                f"theta_k * cond(P M) = {theta * cond_pm:.6g} > vartheta = "
                f"{config.vartheta} at iterate {k}"
            )

        if config.residual_strategy == "inner_solver_truncation":
            S, r, _ = truncated_inner_solve(B, g, P, theta)
        else:
            r = inject_residual(config.residual_strategy, theta, P, g, rng=r_rng)
            if policy == "exact_gn":
                ns = _NormalSolver(J)
                S = ns.gn_step(Fx)
                if np.any(r):
                    S = S + ns.solve(r)
            elif policy == "modified_gn":
                S = initial_solver.solve(r - g)
            else:
                S = np.linalg.solve(B, r - g)
        w1, w2 = _omegas(B, M)
        snorm = float(np.linalg.norm(S))
        trace.records.append(
            StepRecord(
                k,
                tuple(x.tolist()),
                snorm,
                gnorm,
                err(x),
                float(theta),
                float(cond_pm),
                float(np.linalg.norm(P @ r)),
                float(theta * np.linalg.norm(P @ g)),
                float(w1),
                float(w2),
            )
        )
        x_new = x + S
        if not problem.in_domain(x_new):
            try:
                gfinal = float(np.linalg.norm(problem.jacobian(x_new).T @ problem.residual(x_new)))
            except (ValueError, FloatingPointError, OverflowError):
                gfinal = None
            trace.records.append(StepRecord(k + 1, tuple(x_new.tolist()), None, gfinal, err(x_new)))
            trace.termination = "diverged"
            break
        stalled = snorm <= config.step_tol
        x = x_new
    return trace

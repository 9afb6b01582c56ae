"""Catalog of small least-squares problems with known stationary points.

Every entry stores ``c``, ``beta`` and ``kappa`` computed at load time, plus
a Lipschitz constant ``K`` of the Jacobian on the ``kappa``-ball and, where
the derivative series truncates, the Smale constant ``gamma``. ``notes``
records where each constant comes from.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import linops
from .errors import StationaryPointMissing
from .majorant import ProblemConstants, make_lipschitz_majorant, make_smale_majorant
from .solver import Problem

__all__ = [
    "CatalogEntry",
    "catalog",
    "get_entry",
    "problem_ids",
    "sample_ball",
    "estimate_constants",
    "constants_at",
]

#: stand-in Lipschitz constant for affine maps, whose Jacobian is constant
AFFINE_K = 1e-10


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    id: str
    problem: Problem
    constants: ProblemConstants
    lipschitz_K: Optional[float] = None
    smale_gamma: Optional[float] = None
    notes: dict = field(default_factory=dict)
    description: str = ""

    @property
    def x_star(self):
        return self.problem.stationary_point

    @property
    def families(self):
        out = []
        if self.lipschitz_K is not None:
            out.append("lipschitz")
        if self.smale_gamma is not None:
            out.append("smale")
        return tuple(out)

    @property
    def grade(self):
        """``"empirical"`` when any stored constant is a sampled estimate."""
        return "empirical" if any("estimate" in v for v in self.notes.values()) else "exact"

    def majorant(self, family="lipschitz"):
        if family == "lipschitz":
            if self.lipschitz_K is None:
                raise ValueError(f"{self.id} has no Lipschitz constant")
            return make_lipschitz_majorant(self.lipschitz_K)
        if family == "smale":
            if self.smale_gamma is None:
                raise ValueError(f"{self.id} has no Smale gamma")
            return make_smale_majorant(self.smale_gamma)
        raise ValueError(f"unknown majorant family {family!r}")

    def jstar_norm(self):
        return linops.operator_norm(self.problem.jacobian(self.x_star))


def sample_ball(center, radius, count, rng):
    """``count`` points uniformly distributed in the open ball ``B(center, radius)``."""
    center = np.asarray(center, dtype=float)
    n = center.size
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = radius * rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    return center + d * rad[:, None]


def constants_at(problem, kappa):
    """Exact ``c`` and ``beta`` from evaluations at the stationary point."""
    xs = problem.stationary_point
    if xs is None:
        raise StationaryPointMissing(f"problem {problem.name!r} has no stationary point")
    c = float(np.linalg.norm(problem.residual(xs)))
    beta = linops.operator_norm(linops.pseudoinverse(problem.jacobian(xs)))
    return ProblemConstants(c, beta, kappa)


def estimate_constants(problem, ball_radius, samples=500, seed=0, safety=1.1):
    """``c``, ``beta`` exactly and a sampled estimate of the Jacobian's Lipschitz constant.

    Half of the sampled pairs are independent points of the ball, the other
    half are close pairs, which resolve the local curvature. The largest
    observed ratio ``||J(x) - J(y)|| / ||x - y||`` is inflated by ``safety``.

    Returns
    -------
    (ProblemConstants, float)
    """
    consts = constants_at(problem, ball_radius)
    rng = np.random.default_rng(seed)
    xs = problem.stationary_point
    n_far = samples // 2
    a = sample_ball(xs, ball_radius, samples, rng)
    b = sample_ball(xs, ball_radius, n_far, rng)
    near = a[n_far:] + 1e-4 * ball_radius * sample_ball(np.zeros(xs.size), 1.0, samples - n_far, rng)
    # keep the close partner inside the ball
    scale = np.maximum(1.0, np.linalg.norm(near - xs, axis=1) / (ball_radius * (1 - 1e-12)))
    near = xs + (near - xs) / scale[:, None]
    pairs = list(zip(a[:n_far], b)) + list(zip(a[n_far:], near))
    K = 0.0
    for x, y in pairs:
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        K = max(K, linops.operator_norm(problem.jacobian(x) - problem.jacobian(y)) / dist)
    return consts, safety * K


# -- entries -------------------------------------------------------------------


def _left_null_vector(J, rng):
    """Unit vector orthogonal to the range of ``J``."""
    Q, _ = np.linalg.qr(J, mode="complete")
    n = J.shape[1]
    w = Q[:, n:] @ rng.standard_normal(J.shape[0] - n)
    return w / np.linalg.norm(w)


def _affine(residual_norm):
    rng = np.random.default_rng(20100)
    A = rng.standard_normal((6, 3)) + 2.0 * np.eye(6, 3)
    x_star = np.array([1.0, -2.0, 0.5])
    b = A @ x_star
    if residual_norm > 0:
        b = b - residual_norm * _left_null_vector(A, rng)
    kind = "inconsistent" if residual_norm > 0 else "consistent"
    problem = Problem(
        residual_eval=lambda x: A @ x - b,
        jacobian_eval=lambda x: A.copy(),
        dimension_in=3,
        dimension_out=6,
        domain_center=x_star.copy(),
        domain_radius=1.0,
        stationary_point=x_star,
        name=f"affine_{kind}",
    )
    return CatalogEntry(
        id=problem.name,
        problem=problem,
        constants=constants_at(problem, 1.0),
        lipschitz_K=AFFINE_K,
        notes={
            "c": "exact: ||F(x*)|| at load",
            "beta": "exact: 1/sigma_min(A)",
            "K": f"stand-in {AFFINE_K:g}: Jacobian is constant, any K > 0 is valid",
        },
        description=f"{kind} affine least squares F(x) = Ax - b, A 6x3",
    )


_EXP_T = np.linspace(0.0, 2.0, 8)
_EXP_X = np.array([1.0, -0.5])
_EXP_KAPPA = 0.25


def _expfit_model(x):
    return x[0] * np.exp(x[1] * _EXP_T)


def _expfit_jacobian(x):
    e = np.exp(x[1] * _EXP_T)
    return np.column_stack([e, x[0] * _EXP_T * e])


def _expfit_K(x_star, kappa):
    # ||F''(z)[h]||_F^2 <= sum t^2 e^{2 z2 t} (2 + z1^2 t^2) ||h||^2, maximized over the ball
    z1 = abs(x_star[0]) + kappa
    z2 = x_star[1] + kappa
    t = _EXP_T
    return float(np.sqrt(np.sum(t**2 * np.exp(2 * z2 * t) * (2 + z1**2 * t**2))))


def _expfit(residual_norm):
    rng = np.random.default_rng(20101)
    x_star = _EXP_X
    y = _expfit_model(x_star)
    if residual_norm > 0:
        y = y - residual_norm * _left_null_vector(_expfit_jacobian(x_star), rng)
    kind = "residual" if residual_norm > 0 else "zero"
    problem = Problem(
        residual_eval=lambda x: _expfit_model(x) - y,
        jacobian_eval=_expfit_jacobian,
        dimension_in=2,
        dimension_out=_EXP_T.size,
        domain_center=x_star.copy(),
        domain_radius=_EXP_KAPPA,
        stationary_point=x_star.copy(),
        name=f"expfit_{kind}",
    )
    return CatalogEntry(
        id=problem.name,
        problem=problem,
        constants=constants_at(problem, _EXP_KAPPA),
        lipschitz_K=_expfit_K(x_star, _EXP_KAPPA),
        notes={
            "c": "exact: ||F(x*)|| at load",
            "beta": "exact: 1/sigma_min(J(x*))",
            "K": "analytic upper bound: Frobenius norm of F'' maximized over the kappa-ball",
        },
        description="exponential fit x1*exp(x2*t_i) - y_i, 8 samples on [0, 2]",
    )


def _quadratic():
    s = 1.0
    d = np.array([0.6, -0.8])
    x_star = np.array([0.5, -0.3])
    rng = np.random.default_rng(20102)

    def G(x):
        return np.array([x[0] + 0.5 * s * x[0] ** 2, x[1] + 0.5 * s * x[1] ** 2, d @ x])

    def jac(x):
        return np.array([[1.0 + s * x[0], 0.0], [0.0, 1.0 + s * x[1]], [d[0], d[1]]])

    b = G(x_star) - 0.05 * _left_null_vector(jac(x_star), rng)
    kappa = 0.5
    problem = Problem(
        residual_eval=lambda x: G(x) - b,
        jacobian_eval=jac,
        dimension_in=2,
        dimension_out=3,
        domain_center=x_star.copy(),
        domain_radius=kappa,
        stationary_point=x_star,
        name="quadratic_residual",
    )
    return CatalogEntry(
        id=problem.name,
        problem=problem,
        constants=constants_at(problem, kappa),
        lipschitz_K=s,
        smale_gamma=s / 2.0,
        notes={
            "c": "exact: ||F(x*)|| at load",
            "beta": "exact: 1/sigma_min(J(x*))",
            "K": "exact: J(x) - J(y) = diag(s dx) padded, norm s max|dx_i| <= s ||dx||",
            "gamma": "exact: ||F''/2|| = s/2, higher derivatives vanish",
        },
        description="quadratic residuals (x_i + s x_i^2/2, d.x) - b in R^3, nonzero residual",
    )


def _rosenbrock():
    x_star = np.array([1.0, 1.0])
    kappa = 0.05

    def F(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    def jac(x):
        return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])

    problem = Problem(
        residual_eval=F,
        jacobian_eval=jac,
        dimension_in=2,
        dimension_out=2,
        domain_center=x_star.copy(),
        domain_radius=kappa,
        stationary_point=x_star,
        name="rosenbrock",
    )
    return CatalogEntry(
        id=problem.name,
        problem=problem,
        constants=constants_at(problem, kappa),
        lipschitz_K=20.0,
        smale_gamma=10.0,
        notes={
            "c": "exact: zero residual at the root",
            "beta": "exact: ||J(x*)^{-1}||",
            "K": "exact: only d2F1/dx1^2 = -20 is nonzero",
            "gamma": "exact: ||F''/2|| = 10, higher derivatives vanish",
        },
        description="Rosenbrock residuals (10(x2 - x1^2), 1 - x1), square invertible Jacobian",
    )


@lru_cache(maxsize=None)
def _build():
    entries = [
        _affine(0.0),
        _affine(0.5),
        _expfit(0.0),
        _expfit(0.01),
        _quadratic(),
        _rosenbrock(),
    ]
    return {e.id: e for e in entries}


def catalog():
    return list(_build().values())


def problem_ids():
    return tuple(_build())


def get_entry(problem_id):
    try:
        return _build()[problem_id]
    except KeyError:
        raise KeyError(
            f"unknown problem {problem_id!r}; choose from {', '.join(problem_ids())}"
        ) from None

"""Run specifications, single runs and parameter sweeps."""

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Union

import numpy as np

from .certify import certify_trace
from .errors import Infeasible, MajorantGNError
from .majorant import MethodParams, modified_gn_radius, radius
from .problems import get_entry
from .solver import SolverConfig, iterate

__all__ = [
    "RunSpec",
    "RunResult",
    "SWEEP_COLUMNS",
    "method_params",
    "start_point",
    "run_one",
    "expand_sweep",
    "load_sweep",
    "run_sweep",
    "acceptance_sweep",
]


@dataclass(frozen=True)
class RunSpec:
    """One solve on a catalog problem.

    Exactly one of ``x0`` and ``radius_fraction`` is used: a fraction in
    ``(0, 1)`` places ``x0`` at distance ``fraction * r`` from ``x*`` along a
    direction drawn from ``seed``.
    """

    problem_id: str
    mode: str = "exact_gn"
    family: str = "lipschitz"
    vartheta: float = 0.0
    omega1: float = 1.0
    omega2: float = 0.0
    forcing: Union[str, float] = "max"
    preconditioner: str = "identity"
    residual_strategy: str = "none"
    radius_fraction: Optional[float] = 0.5
    x0: Optional[tuple] = None
    seed: int = 0
    max_iters: int = 200

    def __post_init__(self):
        if self.x0 is None:
            if self.radius_fraction is None or not 0.0 < self.radius_fraction < 1.0:
                raise ValueError(f"radius_fraction must lie in (0, 1), got {self.radius_fraction}")
        else:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown run fields: {', '.join(sorted(extra))}")
        return cls(**d)

    def as_dict(self):
        return asdict(self)


def method_params(entry, spec, run):
    """``(MethodParams, ball_radius)`` for ``run``.

    ``ball_radius`` is the radius within which ``x0`` must lie: the
    convergence radius, or for modified Gauss-Newton the self-consistent
    radius on which its ``omega`` bounds hold.
    """
    consts = entry.constants
    if run.mode == "exact_gn":
        params = MethodParams(0.0, 1.0, 0.0)
    elif run.mode == "gn_like":
        params = MethodParams(0.0, run.omega1, run.omega2)
    elif run.mode == "inexact":
        params = MethodParams(run.vartheta, 1.0, 0.0)
    elif run.mode == "modified_gn":
        t, params = modified_gn_radius(spec, consts, entry.jstar_norm(), run.vartheta)
        return params, t
    else:
        raise ValueError(f"unknown mode {run.mode!r}")
    rep = radius(spec, consts, params)
    if not rep.feasible:
        raise Infeasible("; ".join(rep.diagnostics), conditions=_conditions(rep.diagnostics))
    return params, rep.r


def _conditions(diagnostics):
    return tuple(d.split(":", 1)[0] for d in diagnostics)


def start_point(x_star, ball_radius, fraction, seed):
    """``x* + fraction * ball_radius * u`` with ``u`` a seeded random unit vector."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(np.size(x_star))
    u /= np.linalg.norm(u)
    return np.asarray(x_star, dtype=float) + fraction * ball_radius * u


def solver_config(run, params):
    return SolverConfig(
        mode=run.mode,
        omega_target=(params.omega1, params.omega2),
        vartheta=params.vartheta if run.mode == "inexact" else 0.0,
        forcing=run.forcing,
        preconditioner=run.preconditioner,
        residual_strategy=run.residual_strategy,
        max_iters=run.max_iters,
        seed=run.seed,
    )


@dataclass
class RunResult:
    run: RunSpec
    status: str
    ball_radius: float = math.nan
    params: Optional[MethodParams] = None
    trace: object = None
    certificate: object = None
    message: str = ""

    def row(self):
        cert = self.certificate
        trace = self.trace
        iters = sum(1 for rec in trace.records if rec.has_step) if trace is not None else ""
        out = {k: _cell(v) for k, v in self.run.as_dict().items() if k != "x0"}
        out.update(
            omega1_used=_cell(self.params.omega1) if self.params else "",
            omega2_used=_cell(self.params.omega2) if self.params else "",
            radius=_cell(self.ball_radius),
            iterations=iters,
            termination=trace.termination if trace is not None else "",
            status=self.status,
            certified=str(self.status == "certified").lower(),
            worst_slack=_cell(cert.worst_slack) if cert is not None else "",
            message=self.message,
        )
        return out


def _cell(v):
    if isinstance(v, float):
        return "%.17g" % v
    return "" if v is None else str(v)


SWEEP_COLUMNS = tuple(
    [f.name for f in fields(RunSpec) if f.name != "x0"]
    + [
        "omega1_used",
        "omega2_used",
        "radius",
        "iterations",
        "termination",
        "status",
        "certified",
        "worst_slack",
        "message",
    ]
)


def run_one(run):
    """Solve and certify one :class:`RunSpec`.

    ``status`` is ``certified``, ``violated`` or ``not_applicable`` from the
    certifier, ``infeasible`` when the hypotheses fail for the chosen
    parameters, or ``error`` when the solver raised.
    """
    entry = get_entry(run.problem_id)
    try:
        spec = entry.majorant(run.family)
        params, ball = method_params(entry, spec, run)
    except Infeasible as exc:
        return RunResult(run, "infeasible", message=str(exc))
    if run.x0 is not None:
        x0 = np.array(run.x0)
    else:
        x0 = start_point(entry.x_star, ball, run.radius_fraction, run.seed)
    try:
        trace = iterate(entry.problem, solver_config(run, params), x0)
    except (MajorantGNError, np.linalg.LinAlgError) as exc:
        return RunResult(run, "error", ball, params, message=f"{type(exc).__name__}: {exc}")
    cert = certify_trace(trace, entry.x_star, spec, entry.constants, params, grade=entry.grade)
    msg = "; ".join(cert.violation_details[:3])
    return RunResult(run, cert.overall, ball, params, trace, cert, msg)


# -- sweeps ---------------------------------------------------------------------


def expand_sweep(config):
    """Expand a sweep config into :class:`RunSpec` objects.

    ``config`` holds ``"runs"``, a list of blocks. In a block every list
    value is a grid axis; the block expands to the Cartesian product of its
    axes. ``"problem_id": "*"`` stands for every catalog problem and
    ``"family": "*"`` for every majorant family the problem supports.
    Blocks may also carry ``"x0"`` as a single vector.
    """
    from .problems import problem_ids

    runs = []
    for block in config.get("runs", []):
        block = dict(block)
        x0 = block.pop("x0", None)
        if block.get("problem_id") == "*":
            block["problem_id"] = list(problem_ids())
        keys = list(block)
        axes = [v if isinstance(v, list) else [v] for v in block.values()]
        for combo in itertools.product(*axes):
            d = dict(zip(keys, combo))
            if x0 is not None:
                d["x0"] = tuple(x0)
                d["radius_fraction"] = None
            if d.get("family") == "*":
                for fam in get_entry(d["problem_id"]).families:
                    runs.append(RunSpec.from_dict({**d, "family": fam}))
            else:
                runs.append(RunSpec.from_dict(d))
    return runs


def load_sweep(path):
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        return {"runs": []}
    config = json.loads(text)
    if not isinstance(config, dict):
        raise ValueError("sweep config must be a JSON object")
    return config


def _row_of(run):
    return run_one(run).row()


def run_sweep(runs, jobs=1):
    """Run every spec and return CSV-ready rows in input order."""
    if jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_row_of, runs, chunksize=4))
    return [_row_of(run) for run in runs]


def acceptance_sweep():
    """Sweep config covering every catalog problem, mode and start fraction."""
    common = {"problem_id": "*", "family": "*", "radius_fraction": [0.1, 0.5, 0.9], "seed": [0, 1]}
    return {
        "runs": [
            {**common, "mode": ["exact_gn", "modified_gn"]},
            {**common, "mode": "gn_like", "omega1": 1.2, "omega2": 0.1},
            {
                **common,
                "mode": "inexact",
                "vartheta": [0.1, 0.5],
                "residual_strategy": ["random_scaled", "inner_solver_truncation"],
                "preconditioner": ["identity", "jacobi"],
            },
        ]
    }

import numpy as np
import pytest

from majorant_gn.majorant import radius
from majorant_gn.problems import get_entry, problem_ids
from majorant_gn.runner import (
    SWEEP_COLUMNS,
    RunSpec,
    acceptance_sweep,
    expand_sweep,
    method_params,
    run_one,
    run_sweep,
    start_point,
)


def test_runspec_validation():
    with pytest.raises(ValueError):
        RunSpec("rosenbrock", radius_fraction=1.0)
    with pytest.raises(ValueError):
        RunSpec.from_dict({"problem_id": "rosenbrock", "colour": 1})
    assert RunSpec("rosenbrock", x0=[1, 1], radius_fraction=None).x0 == (1.0, 1.0)


@pytest.mark.parametrize("fraction", [0.1, 0.5, 0.9])
def test_start_point_distance(fraction):
    x = start_point(np.ones(3), 0.2, fraction, 7)
    assert np.linalg.norm(x - 1) == pytest.approx(fraction * 0.2, rel=1e-14)
    np.testing.assert_array_equal(x, start_point(np.ones(3), 0.2, fraction, 7))


def test_method_params_modes():
    e = get_entry("expfit_zero")
    spec = e.majorant()
    p, r = method_params(e, spec, RunSpec(e.id, mode="gn_like", omega1=1.2, omega2=0.1))
    assert (p.omega1, p.omega2) == (1.2, 0.1) and r == radius(spec, e.constants, p).r
    p, r = method_params(e, spec, RunSpec(e.id, mode="inexact", vartheta=0.5))
    assert p.vartheta == 0.5
    p, t = method_params(e, spec, RunSpec(e.id, mode="modified_gn"))
    assert p.omega2 > 0 and t <= radius(spec, e.constants, p).r


def test_run_one_certified():
    res = run_one(RunSpec("quadratic_residual", mode="inexact", family="smale", vartheta=0.25, residual_strategy="inner_solver_truncation"))
    assert res.status == "certified" and res.trace.termination == "converged_grad"
    row = res.row()
    assert set(row) == set(SWEEP_COLUMNS) and row["certified"] == "true"


def test_infeasible_row():
    res = run_one(RunSpec("quadratic_residual", mode="inexact", vartheta=0.9))
    assert res.status == "infeasible" and "omega" in res.message
    assert res.row()["certified"] == "false"


def test_expand_sweep():
    cfg = {"runs": [{"problem_id": "*", "family": "*", "mode": ["exact_gn", "gn_like"], "radius_fraction": [0.1, 0.9]}]}
    runs = expand_sweep(cfg)
    n_fam = sum(len(get_entry(p).families) for p in problem_ids())
    assert len(runs) == n_fam * 2 * 2
    assert expand_sweep({}) == []
    x0_runs = expand_sweep({"runs": [{"problem_id": "rosenbrock", "x0": [1.01, 1.0]}]})
    assert x0_runs[0].x0 == (1.01, 1.0) and x0_runs[0].radius_fraction is None


def test_acceptance_sweep_covers_modes():
    runs = expand_sweep(acceptance_sweep())
    modes = {r.mode for r in runs}
    assert modes == {"exact_gn", "modified_gn", "gn_like", "inexact"}
    assert {r.radius_fraction for r in runs} == {0.1, 0.5, 0.9}
    assert {r.problem_id for r in runs} == set(problem_ids())


def test_parallel_matches_serial():
    runs = expand_sweep({"runs": [{"problem_id": ["rosenbrock", "expfit_zero"], "mode": ["gn_like", "inexact"], "vartheta": 0.1, "omega1": 1.2, "omega2": 0.1, "residual_strategy": "none"}]})
    assert run_sweep(runs, jobs=2) == run_sweep(runs, jobs=1)

"""Small synthetic instances for tests, examples and exhaustive checks."""

from __future__ import annotations

import itertools

import numpy as np

from .env import ActionSpace
from .hydro import AreaSpec, ElevationStorageCurve, ReservoirSpec, SystemInstance, evaluate_batch


def _linear_curve(v_max=1000.0, l_lo=100.0, l_hi=200.0) -> ElevationStorageCurve:
    return ElevationStorageCurve(np.array([0.0, v_max]), np.array([l_lo, l_hi]))


def tiny_instance() -> SystemInstance:
    """One reservoir, one area, two unit-length periods.

    Storage 500 of 1000, inflow 100 per period, elevation band [130, 170]
    (storage [300, 700]), so sustained turbine plus supply release well above
    the inflow drains the reservoir below its band.
    """
    res = ReservoirSpec(
        id="r1", power_coeff=1e-3, initial_storage=500.0, tailwater=50.0, curve=_linear_curve(),
        l_min=np.array([130.0, 130.0]), l_max=np.array([170.0, 170.0]),
        p_min=np.array([0.0, 0.0]), p_max=np.array([100.0, 100.0]),
        inflow=np.array([100.0, 100.0]), eco_flow=np.array([110.0, 90.0]),
        qp_lo=20.0, qp_hi=200.0)
    area = AreaSpec(id="a1", w_min=np.zeros(2), w_max=np.array([100.0, 100.0]),
                    benefit=np.array([1.0, 1.2]), distance=np.array([10.0]),
                    cost=np.array([[0.01, 0.01]]))
    return SystemInstance((res,), (area,), 1.0)


TINY_SPACE = ActionSpace(qp_bins=5, qs_bins=5)


def bandit_instance() -> SystemInstance:
    """One reservoir, no areas, one period: a three-armed bandit with ``BANDIT_SPACE``."""
    res = ReservoirSpec(
        id="r1", power_coeff=1e-3, initial_storage=500.0, tailwater=50.0, curve=_linear_curve(),
        l_min=np.array([100.0]), l_max=np.array([200.0]),
        p_min=np.array([0.0]), p_max=np.array([100.0]),
        inflow=np.array([100.0]), eco_flow=np.array([50.0]), qp_lo=0.0, qp_hi=100.0)
    return SystemInstance((res,), (), 1.0)


BANDIT_SPACE = ActionSpace(qp_bins=3, qs_bins=2)


def enumerate_schedules(inst: SystemInstance, space: ActionSpace):
    """Every distinct decision tensor reachable on the action grids.

    Schedules with a supply flag of 0 ignore the amount, so each (i, j, t) slot
    has ``1 + K_s`` options.  Returns stacked (qp, x, qs) arrays; feasible only
    for very small instances.
    """
    I, J, T = inst.dims
    qp_grid = space.qp_grid(inst)
    qs_grid = space.qs_grid(inst)
    qp_opts = [qp_grid[i] for i in range(I) for t in range(T)]
    supply_opts = []
    for i in range(I):
        for j in range(J):
            for t in range(T):
                supply_opts.append([(0, 0.0)] + [(1, q) for q in qs_grid[j, t]])
    qps, xs, qss = [], [], []
    for qp_choice in itertools.product(*qp_opts):
        for sup in itertools.product(*supply_opts):
            qps.append(np.array(qp_choice).reshape(I, T))
            xs.append(np.array([s[0] for s in sup], dtype=np.int64).reshape(I, J, T))
            qss.append(np.array([s[1] for s in sup], dtype=float).reshape(I, J, T))
    return np.array(qps), np.array(xs), np.array(qss)


def exhaustive_evaluation(inst: SystemInstance, space: ActionSpace):
    qp, x, qs = enumerate_schedules(inst, space)
    return (qp, x, qs), evaluate_batch(inst, qp, x, qs)

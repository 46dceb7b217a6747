"""Episodic decision process for building an operation schedule action by action.

Decisions are taken period by period; within a period each reservoir first picks
its turbine flow, then for every area whether to supply it and, if so, how much.
Continuous flows are discretized onto evenly spaced grids (:class:`ActionSpace`).

:class:`EpisodeBatch` carries the state of ``B`` episodes advanced in lockstep;
:func:`run_episodes` drives it with any vectorized chooser.  :func:`rollout` and
:func:`greedy_rollout` are the single-episode entry points for a probability
oracle ``policy(kind, i, j, t, observation) -> probs``.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .hydro import OperationSchedule, SystemInstance, derive_trajectory


class StepKind(str, enum.Enum):
    POWER = "power"
    SUPPLY_FLAG = "supply_flag"
    SUPPLY_AMOUNT = "supply_amount"


class PolicyContractError(ValueError):
    """The policy returned something that is not a probability vector of the right arity."""


@dataclass(frozen=True)
class ActionSpace:
    qp_bins: int = 51
    qs_bins: int = 51

    def __post_init__(self) -> None:
        if self.qp_bins < 2 or self.qs_bins < 2:
            raise ValueError("action grids need at least 2 bins")

    def qp_grid(self, inst: SystemInstance) -> np.ndarray:
        """Turbine-flow grid, shape [I, qp_bins]."""
        a = inst.arrays
        return np.linspace(a.qp_lo, a.qp_hi, self.qp_bins, axis=-1)

    def qs_grid(self, inst: SystemInstance) -> np.ndarray:
        """Supply-flow grid per area and period, shape [J, T, qs_bins], from 0 to W_max/dt."""
        cap = inst.arrays.w_max / inst.period_seconds
        return np.linspace(np.zeros_like(cap), cap, self.qs_bins, axis=-1)

    def arity(self, kind: StepKind) -> int:
        if kind is StepKind.POWER:
            return self.qp_bins
        if kind is StepKind.SUPPLY_FLAG:
            return 2
        return self.qs_bins


def canonical_steps(n_res: int, n_areas: int, horizon: int,
                    flags: Callable[[int, int, int], bool] | None = None
                    ) -> Iterator[tuple[StepKind, int, int, int]]:
    """Decision order of one episode as (kind, i, j, t); ``j = -1`` for power steps.

    ``flags(i, j, t)`` tells whether an amount step follows a flag step; with
    ``None`` every potential amount step is listed.
    """
    for t in range(horizon):
        for i in range(n_res):
            yield StepKind.POWER, i, -1, t
            for j in range(n_areas):
                yield StepKind.SUPPLY_FLAG, i, j, t
                if flags is None or flags(i, j, t):
                    yield StepKind.SUPPLY_AMOUNT, i, j, t


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = (values.min(), values.max()) if values.size else (0.0, 0.0)
    if hi - lo <= 0:
        return np.zeros_like(values, dtype=float)
    return (values - lo) / (hi - lo)


class EpisodeBatch:
    """State of ``batch_size`` episodes on one instance, advanced step by step."""

    def __init__(self, inst: SystemInstance, space: ActionSpace, batch_size: int):
        I, J, T = inst.dims
        B = batch_size
        self.inst = inst
        self.space = space
        self.batch_size = B
        self.qp_values = space.qp_grid(inst)
        self.qs_values = space.qs_grid(inst)
        self.qp_index = np.zeros((B, I, T), dtype=np.int64)
        self.qs_index = np.zeros((B, I, J, T), dtype=np.int64)
        self.qp = np.zeros((B, I, T))
        self.x = np.zeros((B, I, J, T), dtype=np.int64)
        self.qs = np.zeros((B, I, J, T))
        self.storage = np.tile(inst.arrays.initial_storage, (B, 1))
        self.delivered = np.zeros((B, J))
        self.distance_norm = _minmax(inst.arrays.distance)
        self._period = -1

    # -- observations --------------------------------------------------------
    def elevation(self, i: int) -> np.ndarray:
        return self.inst.reservoirs[i].curve.elevation_clamped(self.storage[:, i])

    def elevation_norm(self, i: int, t: int) -> np.ndarray:
        a = self.inst.arrays
        span = a.l_max[i, t] - a.l_min[i, t]
        level = self.elevation(i)
        if span <= 0:
            return level - a.l_min[i, t]
        return (level - a.l_min[i, t]) / span

    def power_obs(self, i: int, t: int) -> dict:
        self._enter(t)
        return {"elevation": self.elevation(i), "elevation_norm": self.elevation_norm(i, t),
                "grid": self.qp_values[i]}

    def supply_obs(self, i: int, j: int, t: int) -> dict:
        w_max = self.inst.arrays.w_max[j, t]
        delivered = self.delivered[:, j].copy()
        return {
            "elevation": self.elevation(i),
            "elevation_norm": self.elevation_norm(i, t),
            "distance_norm": np.full(self.batch_size, self.distance_norm[i, j]),
            "delivered": delivered,
            "delivered_norm": delivered / w_max if w_max > 0 else np.zeros_like(delivered),
            "w_max": w_max,
            "grid": self.qs_values[j, t],
            "volume_grid": self.qs_values[j, t] * self.inst.period_seconds,
        }

    def _enter(self, t: int) -> None:
        if t != self._period:
            self._period = t
            self.delivered[:] = 0.0

    # -- transitions ---------------------------------------------------------
    def apply_power(self, i: int, t: int, idx: np.ndarray) -> None:
        self._enter(t)
        idx = np.asarray(idx, dtype=np.int64)
        q = self.qp_values[i, idx]
        self.qp_index[:, i, t] = idx
        self.qp[:, i, t] = q
        dt = self.inst.period_seconds
        self.storage[:, i] = self.storage[:, i] + (self.inst.arrays.inflow[i, t] - q) * dt

    def apply_flag(self, i: int, j: int, t: int, flag: np.ndarray) -> None:
        self.x[:, i, j, t] = np.asarray(flag, dtype=np.int64)

    def apply_amount(self, i: int, j: int, t: int, idx: np.ndarray, active: np.ndarray) -> None:
        idx = np.where(active, np.asarray(idx, dtype=np.int64), 0)
        q = np.where(active, self.qs_values[j, t, idx], 0.0)
        self.qs_index[:, i, j, t] = idx
        self.qs[:, i, j, t] = q
        dt = self.inst.period_seconds
        self.storage[:, i] = self.storage[:, i] - q * dt
        self.delivered[:, j] = self.delivered[:, j] + q * dt

    def decisions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.qp, self.x, self.qs

    def schedule(self, b: int) -> OperationSchedule:
        return derive_trajectory(self.inst, self.qp[b], self.x[b], self.qs[b])


Chooser = Callable[[StepKind, int, int, int, dict, np.ndarray], np.ndarray]


def run_episodes(inst: SystemInstance, space: ActionSpace, batch_size: int,
                 choose: Chooser) -> EpisodeBatch:
    """Drive ``batch_size`` episodes through the canonical decision order.

    ``choose(kind, i, j, t, obs, active)`` returns one action index per episode;
    amount steps are only requested when some episode set its flag, and
    ``active`` marks which episodes actually take that step.
    """
    I, J, T = inst.dims
    env = EpisodeBatch(inst, space, batch_size)
    everyone = np.ones(batch_size, dtype=bool)
    for t in range(T):
        for i in range(I):
            obs = env.power_obs(i, t)
            env.apply_power(i, t, choose(StepKind.POWER, i, -1, t, obs, everyone))
            for j in range(J):
                obs = env.supply_obs(i, j, t)
                flag = np.asarray(choose(StepKind.SUPPLY_FLAG, i, j, t, obs, everyone), dtype=np.int64)
                env.apply_flag(i, j, t, flag)
                active = flag == 1
                if active.any():
                    idx = choose(StepKind.SUPPLY_AMOUNT, i, j, t, obs, active)
                    env.apply_amount(i, j, t, idx, active)
    return env


# ---------------------------------------------------------------------------
# single-episode interface


@dataclass(frozen=True)
class DecisionStep:
    kind: StepKind
    reservoir: int
    area: int          # -1 for power steps
    period: int
    observation: np.ndarray
    index: int
    value: float
    log_prob: float


@dataclass(frozen=True, eq=False)
class Episode:
    schedule: OperationSchedule
    steps: tuple[DecisionStep, ...]

    @property
    def log_prob(self) -> float:
        return float(sum(s.log_prob for s in self.steps))


Policy = Callable[[StepKind, int, int, int, np.ndarray], Sequence[float]]


def observation_vector(kind: StepKind, obs: dict) -> np.ndarray:
    """Flat policy input: [elevation_norm] for power, plus [distance_norm, delivered_norm] for supply."""
    if kind is StepKind.POWER:
        return np.array([obs["elevation_norm"][0]])
    return np.array([obs["elevation_norm"][0], obs["distance_norm"][0], obs["delivered_norm"][0]])


def _checked(probs, arity: int, kind: StepKind) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape != (arity,):
        raise PolicyContractError(f"{kind.value} step expects {arity} probabilities, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise PolicyContractError(f"{kind.value} step received negative or non-finite probabilities")
    if abs(p.sum() - 1.0) > 1e-6:
        raise PolicyContractError(f"{kind.value} step probabilities sum to {p.sum()!r}, not 1")
    return p


def sample_index(p: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from ``p`` with uniform ``u`` in [0, 1)."""
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    idx = min(idx, p.size - 1)
    while p[idx] == 0.0 and idx > 0:
        idx -= 1
    return idx


def _single(inst: SystemInstance, space: ActionSpace, policy: Policy,
            rng: np.random.Generator | None, greedy: bool) -> Episode:
    steps: list[DecisionStep] = []

    def choose(kind, i, j, t, obs, active):
        vec = observation_vector(kind, obs)
        p = _checked(policy(kind, i, j, t, vec), space.arity(kind), kind)
        k = int(np.argmax(p)) if greedy else sample_index(p, rng.random())
        value = float(k) if kind is StepKind.SUPPLY_FLAG else float(obs["grid"][k])
        steps.append(DecisionStep(kind, i, j, t, vec, k, value, float(np.log(p[k]))))
        return np.array([k])

    env = run_episodes(inst, space, 1, choose)
    return Episode(env.schedule(0), tuple(steps))


def rollout(inst: SystemInstance, space: ActionSpace, policy: Policy,
            rng: np.random.Generator) -> Episode:
    """Sample one episode from ``policy``; returns the schedule and the step log."""
    return _single(inst, space, policy, rng, greedy=False)


def greedy_rollout(inst: SystemInstance, space: ActionSpace, policy: Policy) -> Episode:
    """Argmax decoding; ties go to the lowest bin index."""
    return _single(inst, space, policy, None, greedy=True)


def uniform_policy(space: ActionSpace) -> Policy:
    def policy(kind, i, j, t, obs):
        n = space.arity(kind)
        return np.full(n, 1.0 / n)
    return policy


def random_chooser(rng: np.random.Generator, *, flag_prob: float = 0.5,
                   capacity_aware: bool = False) -> Chooser:
    """Vectorized random policy over the action grids.

    With ``capacity_aware`` the supply amount is drawn only from bins that keep the
    area's delivered volume within its period maximum.
    """
    def choose(kind, i, j, t, obs, active):
        B = active.shape[0]
        grid = obs["grid"]
        if kind is StepKind.POWER:
            return rng.integers(0, grid.shape[0], size=B)
        if kind is StepKind.SUPPLY_FLAG:
            return (rng.random(B) < flag_prob).astype(np.int64)
        if not capacity_aware:
            return rng.integers(0, grid.shape[0], size=B)
        room = obs["w_max"] - (obs["delivered"][:, None] + obs["volume_grid"][None, :])
        n_ok = (room >= 0).sum(axis=1)
        n_ok = np.maximum(n_ok, 1)
        return np.floor(rng.random(B) * n_ok).astype(np.int64)
    return choose


def trace_csv(steps: Sequence[DecisionStep]) -> str:
    """One row per decision step: kind, indices, grid index and value, log-probability."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "kind", "reservoir", "area", "period", "index", "value", "log_prob"])
    for n, s in enumerate(steps):
        w.writerow([n, s.kind.value, s.reservoir, "" if s.area < 0 else s.area, s.period,
                    s.index, repr(s.value), repr(s.log_prob)])
    return buf.getvalue()

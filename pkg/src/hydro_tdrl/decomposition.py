"""Weight decomposition of the three-objective problem into scalar subproblems."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import atomic_write_bytes
from .env import ActionSpace, random_chooser, run_episodes
from .hydro import (BatchEvaluation, ObjectiveTriple, SystemInstance, check_constraints,
                    evaluate_batch, objective_triple, OperationSchedule)

AAPFD_FLOOR = 1e-6
OBJECTIVES = ("power", "aapfd", "water_revenue")


class BoundsError(ValueError):
    """Objective bounds could not be estimated or are degenerate."""


@dataclass(frozen=True)
class WeightVector:
    w1: float
    w2: float
    w3: float

    def __post_init__(self) -> None:
        w = self.as_array()
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {w.tolist()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3])

    @classmethod
    def parse(cls, text: str) -> "WeightVector":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated weights, got {text!r}")
        return cls(*parts)

    def label(self) -> str:
        return ",".join(f"{w:.2f}" for w in self.as_array())


def weight_grid(step: int = 5, total: int = 100) -> list[WeightVector]:
    """All weight triples on a 0.05 lattice with every component >= 0.05, lexicographic.

    Integer arithmetic keeps each component the nearest double to its lattice point.
    """
    out = []
    for a in range(step, total, step):
        for b in range(step, total - a, step):
            c = total - a - b
            if c < step:
                continue
            out.append(WeightVector(a / total, b / total, c / total))
    return out


@dataclass(frozen=True)
class ObjectiveBounds:
    """Per-objective (min, max) used for max-min normalization."""

    power: tuple[float, float]
    aapfd: tuple[float, float]
    water_revenue: tuple[float, float]
    provenance: dict = field(default_factory=lambda: {k: "user-supplied" for k in OBJECTIVES})
    seed: int | None = None

    def __post_init__(self) -> None:
        for name in OBJECTIVES:
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise BoundsError(f"degenerate bounds for {name}: min={lo!r} max={hi!r} (need min < max)")
        if self.aapfd[0] < AAPFD_FLOOR:
            raise BoundsError(f"aapfd minimum {self.aapfd[0]!r} below floor {AAPFD_FLOOR}")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.power[0], self.aapfd[0], self.water_revenue[0]])
        hi = np.array([self.power[1], self.aapfd[1], self.water_revenue[1]])
        return lo, hi

    def to_json(self) -> str:
        d = {"power_min": self.power[0], "power_max": self.power[1],
             "aapfd_min": self.aapfd[0], "aapfd_max": self.aapfd[1],
             "water_revenue_min": self.water_revenue[0], "water_revenue_max": self.water_revenue[1],
             "provenance": self.provenance, "seed": self.seed}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ObjectiveBounds":
        d = json.loads(text)
        return cls(power=(float(d["power_min"]), float(d["power_max"])),
                   aapfd=(float(d["aapfd_min"]), float(d["aapfd_max"])),
                   water_revenue=(float(d["water_revenue_min"]), float(d["water_revenue_max"])),
                   provenance=dict(d.get("provenance") or {}), seed=d.get("seed"))

    def save(self, path) -> None:
        atomic_write_bytes(path, (self.to_json() + "\n").encode())

    @classmethod
    def load(cls, path) -> "ObjectiveBounds":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def normalized_terms(obj, bounds: ObjectiveBounds) -> np.ndarray:
    """Clamped [0, 1] scores of power, inverse AAPFD and revenue; ``obj`` is ``[..., 3]``."""
    obj = np.asarray(obj, dtype=float)
    lo, hi = bounds.arrays()
    power = (obj[..., 0] - lo[0]) / (hi[0] - lo[0])
    water = (obj[..., 2] - lo[2]) / (hi[2] - lo[2])
    inv = 1.0 / np.maximum(obj[..., 1], AAPFD_FLOOR)
    inv_lo, inv_hi = 1.0 / hi[1], 1.0 / lo[1]
    eco = (inv - inv_lo) / (inv_hi - inv_lo)
    return np.clip(np.stack([power, eco, water], axis=-1), 0.0, 1.0)


def scalarize(obj, w: WeightVector, bounds: ObjectiveBounds):
    """Weighted sum of normalized objectives; a float for one triple, an array for a batch."""
    if isinstance(obj, ObjectiveTriple):
        obj = obj.as_tuple()
    terms = normalized_terms(obj, bounds)
    out = terms @ w.as_array()
    return float(out) if np.ndim(out) == 0 else out


RewardFn = Callable[[BatchEvaluation], np.ndarray]


def make_reward(w: WeightVector, bounds: ObjectiveBounds, penalty: float = 0.0) -> RewardFn:
    """Episode reward: scalarized value if feasible, else 0 (or value - penalty * violation)."""
    def reward(ev: BatchEvaluation) -> np.ndarray:
        value = np.asarray(scalarize(ev.objectives, w, bounds), dtype=float)
        if penalty > 0:
            return np.where(ev.feasible, value, value - penalty * ev.violation)
        return np.where(ev.feasible, value, 0.0)
    return reward


def episode_reward(inst: SystemInstance, sched: OperationSchedule, w: WeightVector,
                   bounds: ObjectiveBounds, penalty: float = 0.0) -> float:
    report = check_constraints(inst, sched)
    value = scalarize(objective_triple(inst, sched), w, bounds)
    if report.feasible:
        return value
    if penalty > 0:
        return value - penalty * report.total_normalized_violation
    return 0.0


# ---------------------------------------------------------------------------
# bound estimation


def sample_feasible(inst: SystemInstance, space: ActionSpace, count: int,
                    rng: np.random.Generator, *, chunk: int = 256,
                    max_draws: int | None = None) -> np.ndarray:
    """Objective triples of ``count`` random feasible schedules (rejection sampling).

    Proposals come from a capacity-aware uniform policy over the action grids;
    infeasible proposals are discarded.  Raises :class:`BoundsError` when
    ``max_draws`` proposals (default ``200 * count``) yield too few.
    """
    max_draws = max_draws if max_draws is not None else 200 * count
    kept: list[np.ndarray] = []
    n_kept = draws = 0
    chooser = random_chooser(rng, capacity_aware=True)
    while n_kept < count:
        if draws >= max_draws:
            raise BoundsError(f"only {n_kept} feasible schedules in {draws} random draws "
                              f"(needed {count}); the instance may be over-constrained")
        env = run_episodes(inst, space, chunk, chooser)
        ev = evaluate_batch(inst, *env.decisions())
        draws += chunk
        good = ev.objectives[ev.feasible]
        kept.append(good)
        n_kept += len(good)
    return np.concatenate(kept)[:count]


def bounds_from_samples(obj: np.ndarray, widen: float = 0.05, provenance: str = "sampled",
                        seed: int | None = None) -> ObjectiveBounds:
    lo = obj.min(axis=0)
    hi = obj.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        names = [OBJECTIVES[k] for k in np.flatnonzero(span <= 0)]
        raise BoundsError(f"all sampled schedules share the same value for {names}; min = max")
    lo = lo - widen * span
    hi = hi + widen * span
    return ObjectiveBounds(power=(lo[0], hi[0]), aapfd=(max(lo[1], AAPFD_FLOOR), hi[1]),
                           water_revenue=(lo[2], hi[2]),
                           provenance={k: provenance for k in OBJECTIVES}, seed=seed)


def estimate_bounds(inst: SystemInstance, space: ActionSpace, method: str = "sample",
                    budget: int = 2000, seed: int = 0, train_config=None) -> ObjectiveBounds:
    """Estimate objective extrema shared by every subproblem.

    ``sample`` widens the extrema of ``budget`` random feasible schedules by 5% of
    their range.  ``train`` additionally trains single-objective policies that
    push each objective up and down and keeps the union of both estimates.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    sampled = bounds_from_samples(sample_feasible(inst, space, budget, rng), seed=seed)
    if method == "sample":
        return sampled
    if method != "train":
        raise ValueError(f"unknown bound method {method!r}")
    from .trainer import single_objective_extrema
    lo, hi = sampled.arrays()
    found = single_objective_extrema(inst, space, sampled, train_config, seed=seed)
    prov = {}
    for k, name in enumerate(OBJECTIVES):
        better_lo = found[k][0] < lo[k]
        better_hi = found[k][1] > hi[k]
        lo[k] = min(lo[k], found[k][0])
        hi[k] = max(hi[k], found[k][1])
        prov[name] = "trained" if (better_lo or better_hi) else "sampled"
    return ObjectiveBounds(power=(lo[0], hi[0]), aapfd=(max(lo[1], AAPFD_FLOOR), hi[1]),
                           water_revenue=(lo[2], hi[2]), provenance=prov, seed=seed)


def weights_from(items: Sequence[Sequence[float]]) -> list[WeightVector]:
    return [WeightVector(*map(float, w)) for w in items]


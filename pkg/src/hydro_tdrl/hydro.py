"""Deterministic reservoir system model.

Physical formulas, schedule simulation, constraint checks and the three
operation objectives (total energy, summed AAPFD, net water-supply revenue).

Every array-valued helper accepts arbitrary leading batch axes so the same
code scores a single schedule, a sampled batch of episodes, or an evolutionary
population.  Shapes use ``I`` reservoirs, ``J`` residential areas and ``T``
operation periods.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BOUND_TOL = 1e-9


def bound_excess(val, lo, hi):
    """Amount by which ``val`` leaves [lo, hi]; zero within 1e-9 of the bound's magnitude."""
    below = lo - val
    above = val - hi
    below = np.where(below > BOUND_TOL * np.maximum(1.0, np.abs(lo)), below, 0.0)
    above = np.where(above > BOUND_TOL * np.maximum(1.0, np.abs(hi)), above, 0.0)
    return below + above


class HydroError(Exception):
    """Base class for model errors."""


class CurveRangeError(HydroError, ValueError):
    """Storage outside the tabulated elevation-storage curve."""


class DomainError(HydroError, ValueError):
    """Input outside a formula's mathematical domain."""


class InstanceError(HydroError, ValueError):
    """A system instance violates one of its structural invariants."""


# ---------------------------------------------------------------------------
# static data


@dataclass(frozen=True, eq=False)
class ElevationStorageCurve:
    """Piecewise-linear, strictly increasing storage (m3) -> elevation (m) map."""

    storage: np.ndarray
    elevation: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.storage, dtype=float)
        e = np.asarray(self.elevation, dtype=float)
        if s.ndim != 1 or s.shape != e.shape or s.size < 2:
            raise InstanceError("curve needs >= 2 (storage, elevation) points of equal length")
        if not (np.all(np.diff(s) > 0) and np.all(np.diff(e) > 0)):
            raise InstanceError("curve storage and elevation must both be strictly increasing")
        object.__setattr__(self, "storage", s)
        object.__setattr__(self, "elevation", e)

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]]) -> "ElevationStorageCurve":
        pts = sorted(points)
        return cls(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))

    @property
    def storage_range(self) -> tuple[float, float]:
        return float(self.storage[0]), float(self.storage[-1])

    def elevation_clamped(self, v):
        """Vectorized interpolation; storages outside the table clamp to its ends."""
        return np.interp(v, self.storage, self.elevation)

    def storage_of_elevation(self, level):
        """Inverse map (elevation -> storage), clamped to the tabulated range."""
        return np.interp(level, self.elevation, self.storage)


def elevation_of_storage(curve: ElevationStorageCurve, v: float, *,
                         reservoir: str | None = None, period: int | None = None) -> float:
    """Elevation for storage ``v``; raises :class:`CurveRangeError` outside the curve."""
    lo, hi = curve.storage_range
    if not (lo <= v <= hi) or not np.isfinite(v):
        where = ""
        if reservoir is not None:
            where += f" reservoir={reservoir}"
        if period is not None:
            where += f" period={period}"
        raise CurveRangeError(f"storage {v!r} outside curve range [{lo}, {hi}]{where}")
    return float(np.interp(v, curve.storage, curve.elevation))


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    id: str
    power_coeff: float
    initial_storage: float
    tailwater: float
    curve: ElevationStorageCurve
    l_min: np.ndarray
    l_max: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    inflow: np.ndarray
    eco_flow: np.ndarray
    qp_lo: float
    qp_hi: float

    def __post_init__(self) -> None:
        for name in ("l_min", "l_max", "p_min", "p_max", "inflow", "eco_flow"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True, eq=False)
class AreaSpec:
    """Residential area; ``distance`` is indexed by reservoir, ``cost`` by (reservoir, period)."""

    id: str
    w_min: np.ndarray
    w_max: np.ndarray
    benefit: np.ndarray
    distance: np.ndarray
    cost: np.ndarray

    def __post_init__(self) -> None:
        for name in ("w_min", "w_max", "benefit", "distance", "cost"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True, eq=False)
class SystemInstance:
    reservoirs: tuple[ReservoirSpec, ...]
    areas: tuple[AreaSpec, ...]
    period_seconds: float
    arrays: "InstanceArrays" = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))
        object.__setattr__(self, "areas", tuple(self.areas))
        problems = self.problems()
        if problems:
            raise InstanceError("; ".join(problems))
        object.__setattr__(self, "arrays", InstanceArrays.build(self))

    @property
    def n_reservoirs(self) -> int:
        return len(self.reservoirs)

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def horizon(self) -> int:
        return int(self.reservoirs[0].inflow.shape[0]) if self.reservoirs else 0

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n_reservoirs, self.n_areas, self.horizon

    def problems(self) -> list[str]:
        """Every violated structural invariant, as human-readable strings."""
        out: list[str] = []
        if not self.reservoirs:
            return ["at least one reservoir is required"]
        if not (self.period_seconds > 0 and np.isfinite(self.period_seconds)):
            out.append(f"period_seconds must be > 0, got {self.period_seconds}")
        T = self.horizon
        if T < 1:
            out.append("horizon T must be >= 1")
        I = len(self.reservoirs)
        for r in self.reservoirs:
            for name in ("l_min", "l_max", "p_min", "p_max", "inflow", "eco_flow"):
                arr = getattr(r, name)
                if arr.shape != (T,):
                    out.append(f"reservoir {r.id}: {name} has length {arr.shape}, expected {T}")
                elif not np.all(np.isfinite(arr)):
                    out.append(f"reservoir {r.id}: {name} contains non-finite values")
            if out:
                continue
            if np.any(r.l_min > r.l_max):
                out.append(f"reservoir {r.id}: l_min > l_max at periods {np.flatnonzero(r.l_min > r.l_max).tolist()}")
            if np.any(r.p_min > r.p_max):
                out.append(f"reservoir {r.id}: p_min > p_max at periods {np.flatnonzero(r.p_min > r.p_max).tolist()}")
            if np.any(r.eco_flow <= 0):
                bad = np.flatnonzero(r.eco_flow <= 0).tolist()
                out.append(f"reservoir {r.id}: ecological flow qe must be > 0 (AAPFD divides by it), "
                           f"violated at periods {bad}")
            if not r.qp_lo <= r.qp_hi or r.qp_lo < 0:
                out.append(f"reservoir {r.id}: turbine range must satisfy 0 <= qp_lo <= qp_hi")
            if r.initial_storage < 0:
                out.append(f"reservoir {r.id}: initial storage must be >= 0")
            lo, hi = r.curve.storage_range
            if not lo <= r.initial_storage <= hi:
                out.append(f"reservoir {r.id}: initial storage outside curve range [{lo}, {hi}]")
        for a in self.areas:
            for name in ("w_min", "w_max", "benefit"):
                arr = getattr(a, name)
                if arr.shape != (T,):
                    out.append(f"area {a.id}: {name} has length {arr.shape}, expected {T}")
            if a.distance.shape != (I,):
                out.append(f"area {a.id}: distance needs one entry per reservoir")
            if a.cost.shape != (I, T):
                out.append(f"area {a.id}: cost must be shaped (reservoirs, periods)")
            if out:
                continue
            if np.any(a.w_min > a.w_max):
                out.append(f"area {a.id}: w_min > w_max at periods {np.flatnonzero(a.w_min > a.w_max).tolist()}")
            if np.any(a.w_min < 0):
                out.append(f"area {a.id}: w_min must be >= 0")
            if np.any(a.distance < 0) or np.any(a.cost < 0):
                out.append(f"area {a.id}: distances and costs must be nonnegative")
        return out


@dataclass(frozen=True, eq=False)
class InstanceArrays:
    """Stacked per-instance arrays used by the vectorized routines."""

    inflow: np.ndarray        # [I, T]
    eco_flow: np.ndarray      # [I, T]
    l_min: np.ndarray
    l_max: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    power_coeff: np.ndarray   # [I]
    initial_storage: np.ndarray
    tailwater: np.ndarray
    qp_lo: np.ndarray
    qp_hi: np.ndarray
    w_min: np.ndarray         # [J, T]
    w_max: np.ndarray
    benefit: np.ndarray
    distance: np.ndarray      # [I, J]
    cost: np.ndarray          # [I, J, T]

    @classmethod
    def build(cls, inst: SystemInstance) -> "InstanceArrays":
        rs, areas = inst.reservoirs, inst.areas
        I, T = len(rs), inst.horizon
        J = len(areas)

        def stack(name):
            return np.stack([getattr(r, name) for r in rs])

        def stack_area(name):
            if not areas:
                return np.zeros((0, T))
            return np.stack([getattr(a, name) for a in areas])

        return cls(
            inflow=stack("inflow"), eco_flow=stack("eco_flow"),
            l_min=stack("l_min"), l_max=stack("l_max"),
            p_min=stack("p_min"), p_max=stack("p_max"),
            power_coeff=np.array([r.power_coeff for r in rs], dtype=float),
            initial_storage=np.array([r.initial_storage for r in rs], dtype=float),
            tailwater=np.array([r.tailwater for r in rs], dtype=float),
            qp_lo=np.array([r.qp_lo for r in rs], dtype=float),
            qp_hi=np.array([r.qp_hi for r in rs], dtype=float),
            w_min=stack_area("w_min"), w_max=stack_area("w_max"), benefit=stack_area("benefit"),
            distance=(np.stack([a.distance for a in areas], axis=1) if areas else np.zeros((I, 0))),
            cost=(np.stack([a.cost for a in areas], axis=1) if areas else np.zeros((I, 0, T))),
        )


# ---------------------------------------------------------------------------
# scalar formulas


def power_generation(coeff, qp, head, dt):
    """Energy produced in one period: coeff * turbine flow * head * period length."""
    return coeff * qp * head * dt


def aapfd(qp, qe) -> float:
    """Amended annual proportional flow deviation of one reservoir."""
    qp = np.asarray(qp, dtype=float)
    qe = np.asarray(qe, dtype=float)
    if qp.shape != qe.shape:
        raise ValueError(f"aapfd: length mismatch {qp.shape} vs {qe.shape}")
    if np.any(qe <= 0):
        raise DomainError("aapfd: ecological flow qe must be strictly positive")
    return float(np.sqrt(np.sum(((qp - qe) / qe) ** 2)))


def supply_revenue(benefit, cost, distance, qs, flag, dt):
    """Net revenue of one supply link in one period; negative when transport cost dominates."""
    return (benefit * qs - cost * distance * qs) * flag * dt


def water_balance_step(v_prev, qr, qp, supply, dt):
    """Storage at the end of a period. Negative results are left for the constraint check."""
    return v_prev + (qr - qp - supply) * dt


# ---------------------------------------------------------------------------
# vectorized simulation


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Derived state arrays, all with leading batch axes ``...``."""

    storage: np.ndarray        # [..., I, T] end-of-period storage
    elevation: np.ndarray      # [..., I, T] end-of-period elevation (clamped to curve)
    head: np.ndarray           # [..., I, T] start-of-period head
    power: np.ndarray          # [..., I, T]
    delivered: np.ndarray      # [..., J, T] aggregate supplied volume per area
    out_of_range: np.ndarray   # [..., I, T] storage outside the curve table


def simulate(inst: SystemInstance, qp, x, qs) -> Trajectory:
    """Roll the water balance forward for a batch of decision tensors."""
    a = inst.arrays
    dt = inst.period_seconds
    qp = np.asarray(qp, dtype=float)
    x = np.asarray(x, dtype=float)
    qs = np.asarray(qs, dtype=float)
    I, J, T = inst.dims
    lead = qp.shape[:-2]
    if qp.shape[-2:] != (I, T) or x.shape[-3:] != (I, J, T) or qs.shape[-3:] != (I, J, T):
        raise ValueError(f"decision shapes {qp.shape}, {x.shape}, {qs.shape} do not match (I,J,T)={(I, J, T)}")
    flow_out = (qs * x).sum(axis=-2)                        # [..., I, T]
    storage = np.empty(lead + (I, T))
    v = np.broadcast_to(a.initial_storage, lead + (I,)).astype(float)
    starts = np.empty(lead + (I, T))
    for t in range(T):
        starts[..., t] = v
        v = water_balance_step(v, a.inflow[:, t], qp[..., t], flow_out[..., t], dt)
        storage[..., t] = v
    elevation = np.empty_like(storage)
    start_elev = np.empty_like(storage)
    out_of_range = np.zeros(storage.shape, dtype=bool)
    for i, r in enumerate(inst.reservoirs):
        elevation[..., i, :] = r.curve.elevation_clamped(storage[..., i, :])
        start_elev[..., i, :] = r.curve.elevation_clamped(starts[..., i, :])
        lo, hi = r.curve.storage_range
        out_of_range[..., i, :] = bound_excess(storage[..., i, :], lo, hi) > 0
    head = np.maximum(start_elev - a.tailwater[:, None], 0.0)
    power = power_generation(a.power_coeff[:, None], qp, head, dt)
    delivered = (qs * x).sum(axis=-3) * dt                  # [..., J, T]
    return Trajectory(storage, elevation, head, power, delivered, out_of_range)


def objectives_from(inst: SystemInstance, qp, x, qs, traj: Trajectory) -> np.ndarray:
    """Objective triples ``[..., 3]`` = (power, aapfd, water_revenue)."""
    a = inst.arrays
    qp = np.asarray(qp, dtype=float)
    power = traj.power.sum(axis=(-2, -1))
    dev = (qp - a.eco_flow) / a.eco_flow
    aapfd_total = np.sqrt((dev ** 2).sum(axis=-1)).sum(axis=-1)
    revenue = supply_revenue(a.benefit[None], a.cost, a.distance[:, :, None],
                             np.asarray(qs, dtype=float), np.asarray(x, dtype=float),
                             inst.period_seconds)
    water = revenue.sum(axis=(-3, -2, -1))
    return np.stack([power, aapfd_total, water], axis=-1)


def _scale(lo, hi):
    span = hi - lo
    return np.where(span > 0, span, np.maximum(np.abs(hi), 1.0))


def violation_terms(inst: SystemInstance, traj: Trajectory) -> dict[str, np.ndarray]:
    """Absolute constraint excesses per family; zero where a bound holds within tolerance."""
    a = inst.arrays

    curve_excess = np.zeros_like(traj.storage)
    for i, r in enumerate(inst.reservoirs):
        lo, hi = r.curve.storage_range
        curve_excess[..., i, :] = bound_excess(traj.storage[..., i, :], lo, hi)
    return {
        "elevation": bound_excess(traj.elevation, a.l_min, a.l_max),
        "power": bound_excess(traj.power, a.p_min, a.p_max),
        "supply": bound_excess(traj.delivered, a.w_min, a.w_max),
        "curve_range": curve_excess,
    }


def normalized_violation(inst: SystemInstance, terms: dict[str, np.ndarray]) -> np.ndarray:
    """Sum of constraint excesses, each divided by its bound range. Shape ``[...]``."""
    a = inst.arrays
    spans = {
        "elevation": _scale(a.l_min, a.l_max),
        "power": _scale(a.p_min, a.p_max),
        "supply": _scale(a.w_min, a.w_max),
        "curve_range": np.array([r.curve.storage_range[1] - r.curve.storage_range[0]
                                 for r in inst.reservoirs])[:, None],
    }
    total = 0.0
    for key, val in terms.items():
        total = total + (val / spans[key]).sum(axis=(-2, -1))
    return np.asarray(total)


@dataclass(frozen=True, eq=False)
class BatchEvaluation:
    objectives: np.ndarray   # [..., 3]
    feasible: np.ndarray     # [...] bool
    violation: np.ndarray    # [...] normalized total violation


def evaluate_batch(inst: SystemInstance, qp, x, qs) -> BatchEvaluation:
    """Score many schedules at once: objectives, feasibility, normalized violation."""
    traj = simulate(inst, qp, x, qs)
    obj = objectives_from(inst, qp, x, qs, traj)
    terms = violation_terms(inst, traj)
    viol = normalized_violation(inst, terms)
    feasible = np.ones(obj.shape[:-1], dtype=bool)
    for val in terms.values():
        feasible &= ~np.any(val > 0, axis=(-2, -1))
    return BatchEvaluation(obj, feasible, viol)


# ---------------------------------------------------------------------------
# single schedules


@dataclass(frozen=True, eq=False)
class OperationSchedule:
    qp: np.ndarray         # [I, T]
    x: np.ndarray          # [I, J, T] (0/1)
    qs: np.ndarray         # [I, J, T]
    initial_storage: np.ndarray
    storage: np.ndarray
    elevation: np.ndarray
    head: np.ndarray
    power: np.ndarray
    diagnostics: tuple[str, ...] = ()

    @property
    def in_curve_range(self) -> bool:
        return not self.diagnostics


@dataclass(frozen=True)
class ObjectiveTriple:
    power: float
    aapfd: float
    water_revenue: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.power, self.aapfd, self.water_revenue)


def derive_trajectory(inst: SystemInstance, qp, x, qs) -> OperationSchedule:
    """Fill storage, elevation, head and power for one set of decisions.

    Storage leaving the curve table is recorded in ``diagnostics`` (and reported
    by :func:`check_constraints`) instead of raising, so rollouts always finish.
    """
    I, J, T = inst.dims
    qp = np.array(qp, dtype=float).reshape(I, T)
    x = np.array(x, dtype=float).reshape(I, J, T)
    if np.any((x != 0) & (x != 1)):
        raise ValueError("supply flags x must be binary")
    qs = np.array(qs, dtype=float).reshape(I, J, T) * x
    traj = simulate(inst, qp, x, qs)
    diags = []
    for i, t in zip(*np.nonzero(traj.out_of_range)):
        lo, hi = inst.reservoirs[i].curve.storage_range
        diags.append(f"reservoir {inst.reservoirs[i].id} period {t}: storage {traj.storage[i, t]!r} "
                     f"outside curve range [{lo}, {hi}]")
    return OperationSchedule(
        qp=qp, x=x.astype(np.int64), qs=qs,
        initial_storage=inst.arrays.initial_storage.copy(),
        storage=traj.storage, elevation=traj.elevation, head=traj.head, power=traj.power,
        diagnostics=tuple(diags),
    )


@dataclass(frozen=True)
class Violation:
    family: str            # elevation | power | supply | initial_storage | curve_range
    index: tuple[int, ...]
    value: float
    lower: float
    upper: float


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...]
    total_normalized_violation: float

    @property
    def feasible(self) -> bool:
        return not self.violations

    def by_family(self, family: str) -> list[Violation]:
        return [v for v in self.violations if v.family == family]

    def summary(self) -> dict[str, int]:
        out = {f: 0 for f in ("elevation", "power", "supply", "initial_storage", "curve_range")}
        for v in self.violations:
            out[v.family] += 1
        return out


def check_constraints(inst: SystemInstance, sched: OperationSchedule) -> FeasibilityReport:
    """Report every bound violation (elevation, power, supply, initial storage, curve range)."""
    a = inst.arrays
    dt = inst.period_seconds
    delivered = (sched.qs * sched.x).sum(axis=0) * dt
    curve_lo = np.array([r.curve.storage_range[0] for r in inst.reservoirs])[:, None]
    curve_hi = np.array([r.curve.storage_range[1] for r in inst.reservoirs])[:, None]
    checks = [
        ("elevation", sched.elevation, a.l_min, a.l_max),
        ("power", sched.power, a.p_min, a.p_max),
        ("supply", delivered, a.w_min, a.w_max),
        ("curve_range", sched.storage,
         np.broadcast_to(curve_lo, sched.storage.shape), np.broadcast_to(curve_hi, sched.storage.shape)),
    ]
    found: list[Violation] = []
    terms: dict[str, np.ndarray] = {}
    for family, val, lo, hi in checks:
        ex = bound_excess(val, lo, hi)
        terms[family] = ex
        for idx in zip(*np.nonzero(ex)):
            found.append(Violation(family, tuple(int(k) for k in idx), float(val[idx]),
                                   float(lo[idx]), float(hi[idx])))
    for i, v0 in enumerate(sched.initial_storage):
        target = a.initial_storage[i]
        if bound_excess(v0, target, target) > 0:
            found.append(Violation("initial_storage", (i,), float(v0), float(target), float(target)))
    return FeasibilityReport(tuple(found), float(normalized_violation(inst, terms)))


def objective_triple(inst: SystemInstance, sched: OperationSchedule) -> ObjectiveTriple:
    a = inst.arrays
    power = float(sched.power.sum())
    total_aapfd = sum(aapfd(sched.qp[i], a.eco_flow[i]) for i in range(inst.n_reservoirs))
    rev = supply_revenue(a.benefit[None], a.cost, a.distance[:, :, None], sched.qs, sched.x,
                         inst.period_seconds)
    return ObjectiveTriple(power, float(total_aapfd), float(rev.sum()))

"""Pareto fronts: dominance filtering, exact 3-D hypervolume, improvement report, front CSVs.

Objective triples are always (power, aapfd, water_revenue) in natural units:
power and revenue are maximized, AAPFD is minimized.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import atomic_write_bytes
from .hydro import ObjectiveTriple

SENSE = np.array([1.0, -1.0, 1.0])        # multiply to get "larger is better" everywhere
FRONT_COLUMNS = ("method", "weight_or_rank", "power", "aapfd", "water_revenue", "feasible", "seed")


class FrontError(ValueError):
    """Malformed front file or invalid front operation."""


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = points.astype(float, copy=False)
    else:
        arr = np.array([p.as_tuple() if isinstance(p, ObjectiveTriple) else tuple(p) for p in points],
                       dtype=float)
    return arr.reshape(-1, 3)


def dominates(p, q) -> bool:
    """True if ``p`` is at least as good as ``q`` everywhere and strictly better somewhere."""
    a = np.asarray(p, dtype=float) * SENSE
    b = np.asarray(q, dtype=float) * SENSE
    return bool(np.all(a >= b) and np.any(a > b))


def nondominated_mask(points) -> np.ndarray:
    """Boolean mask of points not dominated by any other point (duplicates are all kept)."""
    m = _as_points(points) * SENSE
    n = len(m)
    keep = np.ones(n, dtype=bool)
    for k in range(n):
        ge = np.all(m >= m[k], axis=1)
        gt = np.any(m > m[k], axis=1)
        if np.any(ge & gt):
            keep[k] = False
    return keep


def dominance_filter(points):
    """The nondominated subset of ``points``, in input order and input type."""
    mask = nondominated_mask(points)
    if isinstance(points, np.ndarray):
        return points[mask]
    return [p for p, k in zip(points, mask) if k]


def _area_2d(xy: np.ndarray) -> float:
    """Area dominated by maximization points ``xy`` above the origin."""
    order = np.argsort(-xy[:, 0], kind="stable")
    area = 0.0
    best_y = 0.0
    for x, y in xy[order]:
        if y > best_y:
            area += x * (y - best_y)
            best_y = y
    return area


def hypervolume_3d(front, reference) -> float:
    """Exact volume dominated by ``front`` and bounded by ``reference``.

    ``reference`` is a (power, aapfd, water_revenue) triple that every front
    point must weakly dominate.  The volume is computed by slicing along the
    revenue axis and summing exact 2-D areas.
    """
    pts = _as_points(front)
    ref = np.asarray(reference, dtype=float).reshape(3)
    if len(pts) == 0:
        return 0.0
    for p in pts:
        if np.any(p * SENSE < ref * SENSE):
            raise FrontError(f"point {tuple(p.tolist())} does not dominate reference {tuple(ref.tolist())}")
    shifted = (pts - ref) * SENSE                    # all >= 0, maximization
    levels = np.unique(shifted[:, 2])[::-1]
    volume = 0.0
    for k, z in enumerate(levels):
        below = levels[k + 1] if k + 1 < len(levels) else 0.0
        slab = shifted[shifted[:, 2] >= z]
        volume += _area_2d(slab[:, :2]) * (z - below)
    return float(volume)


def improvement_report(front_a, front_b) -> dict[str, float]:
    """Best-versus-best percentage gain of ``front_a`` over ``front_b`` per objective.

    Power and revenue: (best_a - best_b) / |best_b| * 100 with best = max.
    AAPFD: (best_b - best_a) / |best_b| * 100 with best = min, so a reduction
    is a positive improvement.  A zero denominator yields +-inf (or 0 when the
    numerator is also zero).
    """
    a, b = _as_points(front_a), _as_points(front_b)
    if len(a) == 0 or len(b) == 0:
        raise FrontError("improvement_report needs two nonempty fronts")
    best_a = np.array([a[:, 0].max(), a[:, 1].min(), a[:, 2].max()])
    best_b = np.array([b[:, 0].max(), b[:, 1].min(), b[:, 2].max()])
    out = {}
    for k, name in enumerate(("power", "aapfd", "water_revenue")):
        num = (best_a[k] - best_b[k]) * SENSE[k]
        den = abs(best_b[k])
        out[name] = num / den * 100.0 if den > 0 else (0.0 if num == 0 else math.copysign(math.inf, num))
    return out


def format_report(report: dict[str, float]) -> str:
    return "\n".join(f"{name}: {value:+.4f}%" for name, value in report.items())


# ---------------------------------------------------------------------------
# front CSV


@dataclass(frozen=True)
class FrontRow:
    method: str
    weight_or_rank: str
    power: float
    aapfd: float
    water_revenue: float
    feasible: bool
    seed: int | None

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (self.power, self.aapfd, self.water_revenue)


def front_csv(rows: Iterable[FrontRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRONT_COLUMNS)
    for r in rows:
        w.writerow([r.method, r.weight_or_rank, repr(float(r.power)), repr(float(r.aapfd)),
                    repr(float(r.water_revenue)), int(bool(r.feasible)),
                    "" if r.seed is None else int(r.seed)])
    return buf.getvalue()


def write_front(path, rows: Iterable[FrontRow]) -> None:
    atomic_write_bytes(path, front_csv(rows).encode())


def read_front(path) -> list[FrontRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FRONT_COLUMNS:
            raise FrontError(f"{path}:1: expected header {','.join(FRONT_COLUMNS)}, got {header}")
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(FRONT_COLUMNS):
                raise FrontError(f"{path}:{line}: expected {len(FRONT_COLUMNS)} fields, got {len(rec)}")
            try:
                values = [float(v) for v in rec[2:5]]
                feasible = rec[5].strip() in ("1", "true", "True")
                seed = int(rec[6]) if rec[6].strip() else None
            except ValueError as exc:
                raise FrontError(f"{path}:{line}: {exc}") from None
            if not all(np.isfinite(values)):
                raise FrontError(f"{path}:{line}: objective values must be finite")
            if values[1] < 0:
                raise FrontError(f"{path}:{line}: aapfd must be >= 0, got {values[1]}")
            rows.append(FrontRow(rec[0], rec[1], *values, feasible, seed))
    return rows


def merge_fronts(rows: Sequence[FrontRow]) -> list[FrontRow]:
    """Feasible rows of every input, reduced to the combined nondominated set."""
    feas = [r for r in rows if r.feasible]
    if not feas:
        return []
    mask = nondominated_mask(np.array([r.objectives for r in feas]))
    return [r for r, k in zip(feas, mask) if k]

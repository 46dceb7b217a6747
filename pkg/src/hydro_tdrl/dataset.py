"""Reading and writing system instances as a directory of CSV files.

Layout (UTF-8, header row required, periods numbered from 1):

    reservoirs.csv        id,t,qr,qe,l_min,l_max,p_min,p_max
    reservoir_static.csv  id,A,v_beg,tailwater,qp_lo,qp_hi
    curves.csv            id,storage,elevation
    areas.csv             id,t,w_min,w_max,b
    links.csv             reservoir_id,area_id,t,distance,c
    system.csv            key,value       (optional; period_seconds, default 30 days)

Row order inside a file does not matter; reservoirs and areas keep the order of
their first appearance in ``reservoir_static.csv`` / ``areas.csv``.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from importlib import resources
from pathlib import Path

import numpy as np

from .autodiff import atomic_write_bytes
from .hydro import (AreaSpec, ElevationStorageCurve, InstanceError, ReservoirSpec,
                    SystemInstance)

MONTH_SECONDS = 30 * 24 * 3600.0

SCHEMAS = {
    "reservoirs.csv": ["id", "t", "qr", "qe", "l_min", "l_max", "p_min", "p_max"],
    "reservoir_static.csv": ["id", "A", "v_beg", "tailwater", "qp_lo", "qp_hi"],
    "curves.csv": ["id", "storage", "elevation"],
    "areas.csv": ["id", "t", "w_min", "w_max", "b"],
    "links.csv": ["reservoir_id", "area_id", "t", "distance", "c"],
}


class DataError(ValueError):
    """Malformed dataset; the message names file, line and the violated rule."""


def _rows(folder: Path, name: str, required: bool = True, header: list[str] | None = None):
    path = folder / name
    if not path.exists():
        if required:
            raise DataError(f"{path}: missing required file")
        return
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        expected = header if header is not None else SCHEMAS.get(name)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}:1: empty file, header row required") from None
        if expected is not None and header != expected:
            raise DataError(f"{path}:1: header {header} does not match {expected}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def _num(path, lineno, row, key) -> float:
    try:
        v = float(row[key])
    except ValueError:
        raise DataError(f"{path}:{lineno}: field {key!r} is not a decimal number: {row[key]!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{lineno}: field {key!r} must be finite")
    return v


def _period(path, lineno, row) -> int:
    try:
        t = int(row["t"])
    except ValueError:
        raise DataError(f"{path}:{lineno}: period 't' must be an integer, got {row['t']!r}") from None
    if t < 1:
        raise DataError(f"{path}:{lineno}: period 't' must be >= 1")
    return t


def _dense(path, table: dict, ids: list[str], T: int, what: str) -> None:
    for key in ids:
        got = sorted(table.get(key, {}))
        if got != list(range(1, T + 1)):
            raise DataError(f"{path}: {what} {key!r} must have exactly periods 1..{T}, found {got}")


def load_instance(folder) -> SystemInstance:
    folder = Path(folder)
    if not folder.is_dir():
        raise DataError(f"{folder}: dataset directory not found")

    period_seconds = MONTH_SECONDS
    sys_path = folder / "system.csv"
    for lineno, row in _rows(folder, "system.csv", required=False) or ():
        if row.get("key") == "period_seconds":
            period_seconds = _num(sys_path, lineno, row, "value")
            if period_seconds <= 0:
                raise DataError(f"{sys_path}:{lineno}: period_seconds must be > 0")

    p = folder / "reservoir_static.csv"
    static: dict[str, dict] = {}
    for lineno, row in _rows(folder, "reservoir_static.csv"):
        rid = row["id"]
        if rid in static:
            raise DataError(f"{p}:{lineno}: duplicate reservoir id {rid!r}")
        vals = {k: _num(p, lineno, row, k) for k in ("A", "v_beg", "tailwater", "qp_lo", "qp_hi")}
        if vals["v_beg"] < 0:
            raise DataError(f"{p}:{lineno}: initial storage v_beg must be >= 0")
        if not 0 <= vals["qp_lo"] <= vals["qp_hi"]:
            raise DataError(f"{p}:{lineno}: turbine flow range needs 0 <= qp_lo <= qp_hi")
        static[rid] = vals
    res_ids = list(static)
    if not res_ids:
        raise DataError(f"{p}: at least one reservoir is required")

    p = folder / "reservoirs.csv"
    per: dict[str, dict[int, dict]] = defaultdict(dict)
    for lineno, row in _rows(folder, "reservoirs.csv"):
        rid = row["id"]
        if rid not in static:
            raise DataError(f"{p}:{lineno}: reservoir {rid!r} not declared in reservoir_static.csv")
        t = _period(p, lineno, row)
        vals = {k: _num(p, lineno, row, k) for k in ("qr", "qe", "l_min", "l_max", "p_min", "p_max")}
        if vals["qe"] <= 0:
            raise DataError(f"{p}:{lineno}: ecological flow qe must be > 0 "
                            f"(AAPFD divides by it), got {vals['qe']!r}")
        if vals["l_min"] > vals["l_max"]:
            raise DataError(f"{p}:{lineno}: l_min exceeds l_max")
        if vals["p_min"] > vals["p_max"]:
            raise DataError(f"{p}:{lineno}: p_min exceeds p_max")
        if t in per[rid]:
            raise DataError(f"{p}:{lineno}: duplicate row for reservoir {rid!r} period {t}")
        per[rid][t] = vals
    T = max((max(v) for v in per.values() if v), default=0)
    if T < 1:
        raise DataError(f"{p}: no per-period reservoir rows")
    _dense(p, per, res_ids, T, "reservoir")

    p = folder / "curves.csv"
    pts: dict[str, list[tuple[float, float, int]]] = defaultdict(list)
    for lineno, row in _rows(folder, "curves.csv"):
        rid = row["id"]
        if rid not in static:
            raise DataError(f"{p}:{lineno}: curve for undeclared reservoir {rid!r}")
        pts[rid].append((_num(p, lineno, row, "storage"), _num(p, lineno, row, "elevation"), lineno))
    curves = {}
    for rid in res_ids:
        got = sorted(pts.get(rid, []))
        if len(got) < 2:
            raise DataError(f"{p}: reservoir {rid!r} needs at least 2 curve points")
        for (s0, e0, _), (s1, e1, ln) in zip(got, got[1:]):
            if not (s1 > s0 and e1 > e0):
                raise DataError(f"{p}:{ln}: curve for {rid!r} must be strictly increasing in "
                                f"storage and elevation")
        curves[rid] = ElevationStorageCurve(np.array([g[0] for g in got]), np.array([g[1] for g in got]))
        lo, hi = curves[rid].storage_range
        if not lo <= static[rid]["v_beg"] <= hi:
            raise DataError(f"{folder / 'reservoir_static.csv'}: v_beg of {rid!r} outside its curve "
                            f"storage range [{lo}, {hi}]")

    p = folder / "areas.csv"
    area_rows: dict[str, dict[int, dict]] = {}
    for lineno, row in _rows(folder, "areas.csv"):
        aid = row["id"]
        t = _period(p, lineno, row)
        vals = {k: _num(p, lineno, row, k) for k in ("w_min", "w_max", "b")}
        if not 0 <= vals["w_min"] <= vals["w_max"]:
            raise DataError(f"{p}:{lineno}: need 0 <= w_min <= w_max")
        slot = area_rows.setdefault(aid, {})
        if t in slot:
            raise DataError(f"{p}:{lineno}: duplicate row for area {aid!r} period {t}")
        slot[t] = vals
    area_ids = list(area_rows)
    _dense(p, area_rows, area_ids, T, "area")

    p = folder / "links.csv"
    links: dict[tuple[str, str], dict[int, tuple[float, float]]] = defaultdict(dict)
    for lineno, row in _rows(folder, "links.csv", required=bool(area_ids)) or ():
        key = (row["reservoir_id"], row["area_id"])
        if key[0] not in static or key[1] not in area_rows:
            raise DataError(f"{p}:{lineno}: link references unknown reservoir/area {key}")
        t = _period(p, lineno, row)
        d, c = _num(p, lineno, row, "distance"), _num(p, lineno, row, "c")
        if d < 0 or c < 0:
            raise DataError(f"{p}:{lineno}: distance and cost must be nonnegative")
        prev = next(iter(links[key].values()), None)
        if prev is not None and prev[0] != d:
            raise DataError(f"{p}:{lineno}: distance for link {key} differs between periods")
        if t in links[key]:
            raise DataError(f"{p}:{lineno}: duplicate link row {key} period {t}")
        links[key][t] = (d, c)
    for rid in res_ids:
        for aid in area_ids:
            got = sorted(links.get((rid, aid), {}))
            if got != list(range(1, T + 1)):
                raise DataError(f"{p}: link ({rid!r}, {aid!r}) must have periods 1..{T}, found {got}")

    reservoirs = []
    for rid in res_ids:
        rows = [per[rid][t] for t in range(1, T + 1)]
        s = static[rid]
        reservoirs.append(ReservoirSpec(
            id=rid, power_coeff=s["A"], initial_storage=s["v_beg"], tailwater=s["tailwater"],
            curve=curves[rid],
            l_min=[r["l_min"] for r in rows], l_max=[r["l_max"] for r in rows],
            p_min=[r["p_min"] for r in rows], p_max=[r["p_max"] for r in rows],
            inflow=[r["qr"] for r in rows], eco_flow=[r["qe"] for r in rows],
            qp_lo=s["qp_lo"], qp_hi=s["qp_hi"]))
    areas = []
    for aid in area_ids:
        rows = [area_rows[aid][t] for t in range(1, T + 1)]
        dist = [links[(rid, aid)][1][0] for rid in res_ids]
        cost = [[links[(rid, aid)][t][1] for t in range(1, T + 1)] for rid in res_ids]
        areas.append(AreaSpec(id=aid, w_min=[r["w_min"] for r in rows], w_max=[r["w_max"] for r in rows],
                              benefit=[r["b"] for r in rows], distance=dist, cost=cost))
    try:
        return SystemInstance(tuple(reservoirs), tuple(areas), period_seconds)
    except InstanceError as exc:
        raise DataError(f"{folder}: {exc}") from None


def _csv_text(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue().encode("utf-8")


def save_instance(inst: SystemInstance, folder) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    T = inst.horizon
    files = {
        "system.csv": (["key", "value"], [("period_seconds", float(inst.period_seconds))]),
        "reservoir_static.csv": (SCHEMAS["reservoir_static.csv"], [
            (r.id, float(r.power_coeff), float(r.initial_storage), float(r.tailwater),
             float(r.qp_lo), float(r.qp_hi)) for r in inst.reservoirs]),
        "reservoirs.csv": (SCHEMAS["reservoirs.csv"], [
            (r.id, t + 1, r.inflow[t], r.eco_flow[t], r.l_min[t], r.l_max[t], r.p_min[t], r.p_max[t])
            for r in inst.reservoirs for t in range(T)]),
        "curves.csv": (SCHEMAS["curves.csv"], [
            (r.id, s, e) for r in inst.reservoirs for s, e in zip(r.curve.storage, r.curve.elevation)]),
        "areas.csv": (SCHEMAS["areas.csv"], [
            (a.id, t + 1, a.w_min[t], a.w_max[t], a.benefit[t]) for a in inst.areas for t in range(T)]),
        "links.csv": (SCHEMAS["links.csv"], [
            (r.id, a.id, t + 1, a.distance[i], a.cost[i, t])
            for i, r in enumerate(inst.reservoirs) for a in inst.areas for t in range(T)]),
    }
    for name, (header, rows) in files.items():
        atomic_write_bytes(folder / name, _csv_text(header, rows))


def desk_dataset_path() -> Path:
    return Path(str(resources.files("hydro_tdrl") / "data" / "desk"))


def desk_instance() -> SystemInstance:
    """Bundled two-reservoir, five-area, twelve-month synthetic instance."""
    return load_instance(desk_dataset_path())


# ---------------------------------------------------------------------------
# schedule CSV: one row per (reservoir, area, period); J = 0 leaves area empty

SCHEDULE_COLUMNS = ["reservoir", "area", "period", "qp", "x", "qs", "V", "L", "P"]


def schedule_csv(inst: SystemInstance, sched) -> bytes:
    I, J, T = inst.dims
    rows = []
    for i, r in enumerate(inst.reservoirs):
        for t in range(T):
            state = (float(sched.storage[i, t]), float(sched.elevation[i, t]), float(sched.power[i, t]))
            if J == 0:
                rows.append((r.id, "", t + 1, float(sched.qp[i, t]), 0, 0.0) + state)
            for j, a in enumerate(inst.areas):
                rows.append((r.id, a.id, t + 1, float(sched.qp[i, t]), int(sched.x[i, j, t]),
                             float(sched.qs[i, j, t])) + state)
    return _csv_text(SCHEDULE_COLUMNS, rows)


def write_schedule(path, inst: SystemInstance, sched) -> None:
    atomic_write_bytes(path, schedule_csv(inst, sched))


def read_schedule(path, inst: SystemInstance):
    """Decision tensors (qp, x, qs) from a schedule CSV written for ``inst``."""
    I, J, T = inst.dims
    rid = {r.id: i for i, r in enumerate(inst.reservoirs)}
    aid = {a.id: j for j, a in enumerate(inst.areas)}
    qp = np.full((I, T), np.nan)
    x = np.zeros((I, J, T), dtype=np.int64)
    qs = np.zeros((I, J, T))
    seen = set()
    p = Path(path)
    for lineno, row in _rows(p.parent, p.name, header=SCHEDULE_COLUMNS):
        if row["reservoir"] not in rid:
            raise DataError(f"{p}:{lineno}: unknown reservoir {row['reservoir']!r}")
        i = rid[row["reservoir"]]
        t = _period(p, lineno, {"t": row["period"]}) - 1
        if t >= T:
            raise DataError(f"{p}:{lineno}: period {t + 1} beyond horizon {T}")
        q = _num(p, lineno, row, "qp")
        if not np.isnan(qp[i, t]) and qp[i, t] != q:
            raise DataError(f"{p}:{lineno}: conflicting qp for reservoir {row['reservoir']!r} period {t + 1}")
        qp[i, t] = q
        if J == 0:
            continue
        if row["area"] not in aid:
            raise DataError(f"{p}:{lineno}: unknown area {row['area']!r}")
        j = aid[row["area"]]
        if (i, j, t) in seen:
            raise DataError(f"{p}:{lineno}: duplicate row for ({row['reservoir']}, {row['area']}, {t + 1})")
        seen.add((i, j, t))
        flag = row["x"].strip()
        if flag not in ("0", "1"):
            raise DataError(f"{p}:{lineno}: supply flag x must be 0 or 1, got {flag!r}")
        x[i, j, t] = int(flag)
        qs[i, j, t] = _num(p, lineno, row, "qs")
    if np.isnan(qp).any():
        raise DataError(f"{path}: schedule misses turbine flow for some (reservoir, period)")
    if J and len(seen) != I * J * T:
        raise DataError(f"{path}: schedule must list every (reservoir, area, period) exactly once")
    return qp, x, qs

"""Regenerate the bundled synthetic desk dataset (2 reservoirs, 5 areas, 12 months).

Ecological flows are the published monthly values for the two lakes.  Everything
else (curves, inflows, bounds, economics) is synthetic but physically plausible:

    storage     m3             flows       m3/s
    elevation   m              energy      GWh   (A in GWh per m3/s per m per s)
    volumes     m3             revenue     USD   (b in USD/m3, c in USD/m3/km)

Usage:  python scripts/make_desk_dataset.py [output_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from hydro_tdrl.dataset import MONTH_SECONDS, save_instance
from hydro_tdrl.hydro import AreaSpec, ElevationStorageCurve, ReservoirSpec, SystemInstance

ECO_FLOW = {
    "powell": [314.3869, 265.4993, 259.9415, 341.7421, 247.8343, 242.0624,
               223.1525, 353.4624, 381.5739, 332.6873, 248.5995, 249.7109],
    "mead": [259.0656, 243.4002, 293.6558, 337.1620, 229.2298, 296.4402,
             240.8004, 395.0267, 354.9071, 288.5897, 211.9601, 187.3235],
}

SEASON = np.array([0.8, 0.8, 0.9, 1.0, 1.1, 1.2, 1.25, 1.2, 1.1, 1.0, 0.85, 0.8])


def concave_curve(v_max: float, l_lo: float, l_hi: float, exponent: float, knots: int = 16):
    s = np.linspace(0.0, v_max, knots)
    return ElevationStorageCurve(s, l_lo + (l_hi - l_lo) * (s / v_max) ** exponent)


def reservoir(rid, curve, v_beg, tailwater, inflow, l_band, qp_range, coeff=2.4e-9):
    dt = MONTH_SECONDS
    head0 = float(curve.elevation_clamped(v_beg)) - tailwater
    T = len(inflow)
    return ReservoirSpec(
        id=rid, power_coeff=coeff, initial_storage=v_beg, tailwater=tailwater, curve=curve,
        l_min=np.full(T, l_band[0]), l_max=np.full(T, l_band[1]),
        p_min=np.full(T, round(coeff * 135.0 * (head0 - 12.0) * dt, 3)),
        p_max=np.full(T, round(coeff * 585.0 * (head0 + 8.0) * dt, 3)),
        inflow=np.asarray(inflow, float), eco_flow=np.asarray(ECO_FLOW[rid]),
        qp_lo=qp_range[0], qp_hi=qp_range[1])


def build() -> SystemInstance:
    powell = reservoir(
        "powell", concave_curve(30e9, 1000.0, 1130.0, 0.55), 11e9, 945.0,
        [230, 240, 330, 520, 850, 980, 560, 330, 280, 260, 240, 230],
        (1062.0, 1095.0), (120.0, 600.0))
    mead = reservoir(
        "mead", concave_curve(36e9, 260.0, 376.0, 0.6), 12e9, 195.0,
        [300, 290, 320, 360, 330, 340, 360, 400, 380, 330, 300, 290],
        (305.0, 333.0), (120.0, 600.0))
    # area: (peak monthly volume m3, unit benefit USD/m3, distance km from powell, mead)
    areas_def = {
        "AZ": (60e6, 0.30, (250.0, 300.0)),
        "CA": (120e6, 0.45, (650.0, 350.0)),
        "WY": (20e6, 0.20, (600.0, 900.0)),
        "NM": (30e6, 0.25, (350.0, 600.0)),
        "CO": (40e6, 0.22, (300.0, 700.0)),
    }
    unit_cost = 3e-4 * np.array([1.0, 1.0, 1.0, 1.0, 1.05, 1.1, 1.1, 1.1, 1.05, 1.0, 1.0, 1.0])
    areas = []
    for aid, (vol, benefit, dist) in areas_def.items():
        areas.append(AreaSpec(
            id=aid, w_min=np.zeros(12), w_max=np.round(vol * SEASON, -3),
            benefit=np.round(benefit * (0.9 + 0.1 * SEASON), 4),
            distance=np.array(dist), cost=np.tile(unit_cost, (2, 1))))
    return SystemInstance((powell, mead), tuple(areas), MONTH_SECONDS)


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src" / "hydro_tdrl" / "data" / "desk")
    save_instance(build(), out)
    print(f"wrote {out}")

"""Random instance builders shared by the tests."""

import numpy as np

from hydro_tdrl.hydro import AreaSpec, ElevationStorageCurve, ReservoirSpec, SystemInstance


def random_curve(rng, knots=6, v_max=1000.0):
    s = np.sort(rng.uniform(0, v_max, knots - 2))
    s = np.concatenate([[0.0], s, [v_max]])
    s = np.unique(s)
    e = 100.0 + np.cumsum(rng.uniform(1.0, 10.0, len(s)))
    return ElevationStorageCurve(s, e)


def random_instance(rng, I=2, J=2, T=3, dt=1.0, wide=True):
    """Valid instance with loose (``wide``) or random bounds; storages in [0, 1000]."""
    reservoirs = []
    for i in range(I):
        curve = random_curve(rng)
        lo_e, hi_e = curve.elevation[0], curve.elevation[-1]
        if wide:
            l_min, l_max = np.full(T, lo_e), np.full(T, hi_e)
            p_min, p_max = np.zeros(T), np.full(T, 1e9)
        else:
            l_min = np.full(T, lo_e + 0.3 * (hi_e - lo_e))
            l_max = np.full(T, lo_e + 0.8 * (hi_e - lo_e))
            p_min, p_max = np.full(T, 1.0), np.full(T, 50.0)
        reservoirs.append(ReservoirSpec(
            id=f"r{i}", power_coeff=rng.uniform(1e-4, 1e-3), initial_storage=rng.uniform(400, 600),
            tailwater=90.0, curve=curve, l_min=l_min, l_max=l_max, p_min=p_min, p_max=p_max,
            inflow=rng.uniform(20, 80, T), eco_flow=rng.uniform(20, 80, T),
            qp_lo=0.0, qp_hi=100.0))
    areas = []
    for j in range(J):
        areas.append(AreaSpec(id=f"a{j}", w_min=np.zeros(T), w_max=rng.uniform(20, 60, T),
                              benefit=rng.uniform(0.5, 2.0, T), distance=rng.uniform(1, 50, I),
                              cost=rng.uniform(0.001, 0.01, (I, T))))
    return SystemInstance(tuple(reservoirs), tuple(areas), dt)


def hand_instance(inflow=(10.0, 20.0), l_min=(100.0, 100.0), l_max=(200.0, 200.0),
                  p_min=(0.0, 0.0), p_max=(1e6, 1e6), w_min=(0.0, 0.0), w_max=(50.0, 50.0),
                  benefit=(2.0, 3.0)):
    """I=1, J=1, T=2, dt=1; linear curve storage 0..1000 -> elevation 100..200."""
    res = ReservoirSpec(
        id="r", power_coeff=1e-3, initial_storage=500.0, tailwater=50.0,
        curve=ElevationStorageCurve(np.array([0.0, 1000.0]), np.array([100.0, 200.0])),
        l_min=np.array(l_min), l_max=np.array(l_max), p_min=np.array(p_min), p_max=np.array(p_max),
        inflow=np.array(inflow), eco_flow=np.array([25.0, 10.0]), qp_lo=0.0, qp_hi=50.0)
    area = AreaSpec(id="a", w_min=np.array(w_min), w_max=np.array(w_max), benefit=np.array(benefit),
                    distance=np.array([10.0]), cost=np.array([[0.01, 0.02]]))
    return SystemInstance((res,), (area,), 1.0)


def scripted_choice(kind, i, j, t, arity, salt=0):
    """Deterministic pseudo-random action index keyed by the step identity."""
    h = (1_000_003 * (i + 1) + 10_007 * (j + 2) + 101 * (t + 1) + 7 * len(kind) + salt) % 7919
    return h % arity


def reference_decode(inst, space, salt=0):
    """Walk the decision order with explicit loops; returns (qp, x, qs, delivered_seen).

    ``delivered_seen[(i, j, t)]`` is area j's volume delivered earlier in period t,
    recomputed from scratch out of the decisions made so far.
    """
    I, J, T = inst.dims
    qp_grid, qs_grid = space.qp_grid(inst), space.qs_grid(inst)
    qp = np.zeros((I, T))
    x = np.zeros((I, J, T), dtype=int)
    qs = np.zeros((I, J, T))
    seen = {}
    for t in range(T):
        for i in range(I):
            qp[i, t] = qp_grid[i, scripted_choice("power", i, -1, t, space.qp_bins, salt)]
            for j in range(J):
                seen[(i, j, t)] = sum(qs[k, j, t] for k in range(i)) * inst.period_seconds
                x[i, j, t] = scripted_choice("supply_flag", i, j, t, 2, salt)
                if x[i, j, t]:
                    qs[i, j, t] = qs_grid[j, t, scripted_choice("supply_amount", i, j, t,
                                                                space.qs_bins, salt)]
    return qp, x, qs, seen


def central_difference(loss, arr, index, h=1e-5):
    """d loss / d arr[index] by central differences; ``loss()`` reads ``arr`` in place."""
    old = arr[index]
    arr[index] = old + h
    up = loss()
    arr[index] = old - h
    down = loss()
    arr[index] = old
    return (up - down) / (2 * h)


def gradient_mismatches(loss_tensor, tensors, rng, per_tensor=4, h=1e-5, rel=1e-4, floor=1e-6):
    """Compare reverse-mode gradients against central differences on sampled entries.

    ``loss_tensor()`` rebuilds the graph and returns a scalar Tensor.  Returns
    (checked, failures) where failures lists (name, index, analytic, numeric).
    """
    for t in tensors.values():
        t.grad = None
    loss_tensor().backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in tensors.items()}
    checked, failures = 0, []
    for name, t in tensors.items():
        flat = rng.choice(t.data.size, size=min(per_tensor, t.data.size), replace=False)
        for f in flat:
            idx = np.unravel_index(int(f), t.data.shape)
            num = central_difference(lambda: float(loss_tensor().data), t.data, idx, h)
            ana = float(analytic[name][idx])
            checked += 1
            if abs(ana - num) > max(rel * max(abs(ana), abs(num)), floor):
                failures.append((name, idx, ana, num))
    return checked, failures

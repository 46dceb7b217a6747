"""Evolutionary baselines: NSGA-III and MOEA/D over real-coded schedule genomes.

Genome layout (length ``I*T + 2*I*J*T``)::

    [ qp (I*T, m3/s in [qp_lo, qp_hi]) | flag genes (I*J*T, in [0, 1]) | qs (I*J*T, m3/s in [0, W_max/dt]) ]

A flag gene >= 0.5 switches supply on; the matching qs gene is ignored otherwise.
Both algorithms minimize (-power, aapfd, -revenue) under constraint-domination.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .decomposition import ObjectiveBounds, WeightVector, normalized_terms
from .hydro import BatchEvaluation, SystemInstance, evaluate_batch
from .pareto import nondominated_mask


@dataclass(frozen=True)
class MoeaConfig:
    population: int = 200
    generations: int = 100
    crossover_prob: float = 0.9
    mutation_prob: float = 0.1
    neighborhood: int = 20
    update_prob: float = 0.5
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population < 2 or self.generations < 0:
            raise ValueError("population must be >= 2 and generations >= 0")
        for name in ("crossover_prob", "mutation_prob", "update_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 1 <= self.neighborhood <= self.population:
            raise ValueError("neighborhood must lie in [1, population]")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# genome


class GenomeCodec:
    def __init__(self, inst: SystemInstance):
        I, J, T = inst.dims
        a = inst.arrays
        self.inst = inst
        self.shape_p = (I, T)
        self.shape_s = (I, J, T)
        self.n_p = I * T
        self.n_s = I * J * T
        lo_p = np.repeat(a.qp_lo, T)
        hi_p = np.repeat(a.qp_hi, T)
        qs_hi = np.broadcast_to(a.w_max / inst.period_seconds, (I, J, T)).reshape(-1)
        self.lower = np.concatenate([lo_p, np.zeros(self.n_s), np.zeros(self.n_s)])
        self.upper = np.concatenate([hi_p, np.ones(self.n_s), qs_hi])

    @property
    def length(self) -> int:
        return self.n_p + 2 * self.n_s

    def decode(self, genomes: np.ndarray):
        """Decision tensors (qp, x, qs) with leading batch axes from genome rows."""
        g = np.asarray(genomes, dtype=float)
        lead = g.shape[:-1]
        qp = g[..., :self.n_p].reshape(lead + self.shape_p)
        x = (g[..., self.n_p:self.n_p + self.n_s] >= 0.5).astype(np.int64).reshape(lead + self.shape_s)
        qs = g[..., self.n_p + self.n_s:].reshape(lead + self.shape_s) * x
        return qp, x, qs

    def encode(self, qp, x, qs) -> np.ndarray:
        qp = np.asarray(qp, dtype=float)
        lead = qp.shape[:-2]
        x = np.asarray(x, dtype=float)
        qs = np.asarray(qs, dtype=float) * (x >= 0.5)
        return np.concatenate([qp.reshape(lead + (-1,)), x.reshape(lead + (-1,)),
                               qs.reshape(lead + (-1,))], axis=-1)

    def random(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((n, self.length)) * (self.upper - self.lower)

    def evaluate(self, genomes: np.ndarray) -> BatchEvaluation:
        return evaluate_batch(self.inst, *self.decode(genomes))


def minimization_form(objectives: np.ndarray) -> np.ndarray:
    return np.asarray(objectives) * np.array([-1.0, 1.0, -1.0])


# ---------------------------------------------------------------------------
# variation operators


def sbx_pair(p1: np.ndarray, p2: np.ndarray, lower, upper, eta: float, prob: float,
             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover with bounds (Deb & Agrawal form)."""
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > prob:
        return c1, c2
    n = len(p1)
    swap = rng.random(n) <= 0.5
    u = rng.random(n)
    for k in np.flatnonzero(swap & (np.abs(p1 - p2) > 1e-14)):
        y1, y2 = min(p1[k], p2[k]), max(p1[k], p2[k])
        lo, hi = lower[k], upper[k]
        span = y2 - y1
        out = []
        for bound_gap in (y1 - lo, hi - y2):
            beta = 1.0 + 2.0 * bound_gap / span
            alpha = 2.0 - beta ** -(eta + 1.0)
            if u[k] <= 1.0 / alpha:
                betaq = (u[k] * alpha) ** (1.0 / (eta + 1.0))
            else:
                betaq = (1.0 / (2.0 - u[k] * alpha)) ** (1.0 / (eta + 1.0))
            out.append(betaq)
        v1 = 0.5 * ((y1 + y2) - out[0] * span)
        v2 = 0.5 * ((y1 + y2) + out[1] * span)
        v1, v2 = min(max(v1, lo), hi), min(max(v2, lo), hi)
        if rng.random() <= 0.5:
            v1, v2 = v2, v1
        c1[k], c2[k] = v1, v2
    return c1, c2


def polynomial_mutation(x: np.ndarray, lower, upper, eta: float, prob: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation; each gene mutates independently with ``prob``."""
    y = x.copy()
    n = len(x)
    hit = rng.random(n) < prob
    u = rng.random(n)
    span = upper - lower
    for k in np.flatnonzero(hit & (span > 0)):
        d1 = (y[k] - lower[k]) / span[k]
        d2 = (upper[k] - y[k]) / span[k]
        mpow = 1.0 / (eta + 1.0)
        if u[k] < 0.5:
            val = 2.0 * u[k] + (1.0 - 2.0 * u[k]) * (1.0 - d1) ** (eta + 1.0)
            dq = val ** mpow - 1.0
        else:
            val = 2.0 * (1.0 - u[k]) + 2.0 * (u[k] - 0.5) * (1.0 - d2) ** (eta + 1.0)
            dq = 1.0 - val ** mpow
        y[k] = min(max(y[k] + dq * span[k], lower[k]), upper[k])
    return y


# ---------------------------------------------------------------------------
# reference directions and sorting


def das_dennis(p: int, m: int = 3) -> np.ndarray:
    """All points of the simplex lattice with ``p`` divisions in ``m`` dimensions."""
    out = []
    for bars in combinations(range(p + m - 1), m - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(p + m - 1 - prev - 1)
        out.append(parts)
    return np.array(out, dtype=float) / p


def partitions_for(population: int, m: int = 3) -> int:
    """Largest ``p`` with C(p + m - 1, m - 1) <= population."""
    p = 1
    while math.comb(p + m, m - 1) <= population:
        p += 1
    return p


def constrained_fronts(F: np.ndarray, cv: np.ndarray) -> list[np.ndarray]:
    """Fronts under constraint-domination (minimization)."""
    n = len(F)
    feasible = cv <= 0
    dom = np.zeros((n, n), dtype=bool)     # dom[a, b]: a dominates b
    for a in range(n):
        if feasible[a]:
            better = np.all(F[a] <= F, axis=1) & np.any(F[a] < F, axis=1)
            dom[a] = np.where(feasible, better, True)
        else:
            dom[a] = ~feasible & (cv[a] < cv)
    dom[np.arange(n), np.arange(n)] = False
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while len(current):
        fronts.append(current)
        for a in current:
            count[dom[a]] -= 1
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def _niching(F: np.ndarray, chosen: np.ndarray, last: np.ndarray, k: int, refs: np.ndarray,
             rng: np.random.Generator) -> np.ndarray:
    """Pick ``k`` members of ``last`` by reference-direction niching."""
    both = np.concatenate([chosen, last])
    S = F[both]
    ideal = S.min(axis=0)
    T = S - ideal
    m = F.shape[1]
    extremes = []
    for ax in range(m):
        w = np.full(m, 1e-6)
        w[ax] = 1.0
        extremes.append(T[np.argmin(np.max(T / w, axis=1))])
    E = np.array(extremes)
    intercepts = None
    try:
        b = np.linalg.solve(E, np.ones(m))
        if np.all(b > 1e-12):
            intercepts = 1.0 / b
    except np.linalg.LinAlgError:
        pass
    worst = T.max(axis=0)
    if intercepts is None or np.any(~np.isfinite(intercepts)) or np.any(intercepts <= 1e-12):
        intercepts = worst
    intercepts = np.where(intercepts > 1e-12, intercepts, 1.0)
    N = T / intercepts
    unit = refs / np.linalg.norm(refs, axis=1, keepdims=True)
    proj = N @ unit.T
    dist = np.sqrt(np.maximum((N ** 2).sum(axis=1)[:, None] - proj ** 2, 0.0))
    assoc = dist.argmin(axis=1)
    d_min = dist[np.arange(len(both)), assoc]
    n_chosen = len(chosen)
    niche = np.bincount(assoc[:n_chosen], minlength=len(refs))
    pool = list(range(n_chosen, len(both)))
    picked = []
    active = np.ones(len(refs), dtype=bool)
    while len(picked) < k:
        counts = np.where(active, niche, np.iinfo(np.int64).max)
        cmin = counts.min()
        j = rng.choice(np.flatnonzero(counts == cmin))
        members = [q for q in pool if assoc[q] == j]
        if not members:
            active[j] = False
            continue
        if niche[j] == 0:
            q = min(members, key=lambda q: d_min[q])
        else:
            q = members[rng.integers(len(members))]
        picked.append(q)
        pool.remove(q)
        niche[j] += 1
    return both[picked]


def _tournament(cv: np.ndarray, rank: np.ndarray, rng: np.random.Generator) -> int:
    a, b = rng.integers(len(cv), size=2)
    if cv[a] <= 0 and cv[b] > 0:
        return a
    if cv[b] <= 0 and cv[a] > 0:
        return b
    if cv[a] > 0 and cv[b] > 0:
        return a if cv[a] < cv[b] else b
    if rank[a] != rank[b]:
        return a if rank[a] < rank[b] else b
    return a if rng.random() < 0.5 else b


@dataclass
class MoeaResult:
    genomes: np.ndarray          # [n, L] feasible nondominated members of the final population
    objectives: np.ndarray       # [n, 3] natural-unit triples
    population: np.ndarray       # final population genomes
    feasible_count: int
    history: list[dict]


def _finish(codec: GenomeCodec, pop: np.ndarray, ev: BatchEvaluation, history) -> MoeaResult:
    feas = np.flatnonzero(ev.feasible)
    obj = ev.objectives[feas]
    keep = nondominated_mask(obj) if len(feas) else np.zeros(0, dtype=bool)
    idx = feas[keep]
    # duplicate genomes collapse to one representative
    _, first = np.unique(pop[idx], axis=0, return_index=True)
    idx = idx[np.sort(first)]
    return MoeaResult(pop[idx].copy(), ev.objectives[idx].copy(), pop.copy(), int(len(feas)), history)


def _stats(gen: int, ev: BatchEvaluation) -> dict:
    feas = ev.feasible
    rec = {"generation": gen, "feasible": int(feas.sum()), "min_violation": float(ev.violation.min())}
    if feas.any():
        rec["best_power"] = float(ev.objectives[feas, 0].max())
    return rec


def nsga3_run(inst: SystemInstance, config: MoeaConfig = MoeaConfig(),
              rng: np.random.Generator | None = None, initial: np.ndarray | None = None) -> MoeaResult:
    """NSGA-III with Das-Dennis directions; returns the feasible nondominated final members."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    codec = GenomeCodec(inst)
    N = config.population
    refs = das_dennis(partitions_for(N))
    pop = codec.random(N, rng) if initial is None else np.array(initial, dtype=float)
    ev = codec.evaluate(pop)
    history = [_stats(0, ev)]
    for gen in range(1, config.generations + 1):
        F = minimization_form(ev.objectives)
        cv = np.where(ev.feasible, 0.0, np.maximum(ev.violation, 1e-300))
        rank = np.empty(N, dtype=int)
        for r, fr in enumerate(constrained_fronts(F, cv)):
            rank[fr] = r
        kids = []
        while len(kids) < N:
            p1 = pop[_tournament(cv, rank, rng)]
            p2 = pop[_tournament(cv, rank, rng)]
            c1, c2 = sbx_pair(p1, p2, codec.lower, codec.upper, config.eta_crossover,
                              config.crossover_prob, rng)
            kids.append(polynomial_mutation(c1, codec.lower, codec.upper, config.eta_mutation,
                                            config.mutation_prob, rng))
            kids.append(polynomial_mutation(c2, codec.lower, codec.upper, config.eta_mutation,
                                            config.mutation_prob, rng))
        kids = np.array(kids[:N])
        kev = codec.evaluate(kids)
        allpop = np.concatenate([pop, kids])
        obj = np.concatenate([ev.objectives, kev.objectives])
        feas = np.concatenate([ev.feasible, kev.feasible])
        viol = np.concatenate([ev.violation, kev.violation])
        F = minimization_form(obj)
        cv = np.where(feas, 0.0, np.maximum(viol, 1e-300))
        chosen = np.zeros(0, dtype=int)
        for fr in constrained_fronts(F, cv):
            if len(chosen) + len(fr) <= N:
                chosen = np.concatenate([chosen, fr])
                if len(chosen) == N:
                    break
                continue
            k = N - len(chosen)
            if np.all(cv[fr] <= 0):
                chosen = np.concatenate([chosen, _niching(F, chosen, fr, k, refs, rng)])
            else:
                chosen = np.concatenate([chosen, fr[np.argsort(cv[fr], kind="stable")[:k]]])
            break
        pop = allpop[chosen]
        ev = BatchEvaluation(obj[chosen], feas[chosen], viol[chosen])
        history.append(_stats(gen, ev))
    return _finish(codec, pop, ev, history)


def moead_weights(population: int, rng: np.random.Generator) -> np.ndarray:
    """Das-Dennis lattice topped up with seeded Dirichlet weights to ``population`` rows."""
    W = das_dennis(partitions_for(population))
    extra = population - len(W)
    if extra > 0:
        W = np.concatenate([W, rng.dirichlet(np.ones(3), size=extra)])
    return W[:population]


def moead_run(inst: SystemInstance, bounds: ObjectiveBounds, config: MoeaConfig = MoeaConfig(),
              rng: np.random.Generator | None = None, initial: np.ndarray | None = None) -> MoeaResult:
    """MOEA/D with weighted-sum subproblems on the shared normalized objectives."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    codec = GenomeCodec(inst)
    N = config.population
    W = moead_weights(N, rng)
    for w in W:                                    # validates each row as a weight vector
        WeightVector(*(w / w.sum()))
    dist = np.linalg.norm(W[:, None, :] - W[None, :, :], axis=-1)
    B = np.argsort(dist, axis=1, kind="stable")[:, :config.neighborhood]
    pop = codec.random(N, rng) if initial is None else np.array(initial, dtype=float)
    ev = codec.evaluate(pop)
    obj, feas, viol = ev.objectives.copy(), ev.feasible.copy(), ev.violation.copy()
    history = [_stats(0, ev)]

    def value(o, w):
        return float(normalized_terms(o, bounds) @ w)

    for gen in range(1, config.generations + 1):
        for i in range(N):
            a, b = rng.choice(B[i], size=2, replace=False) if config.neighborhood > 1 else (B[i][0], B[i][0])
            child, _ = sbx_pair(pop[a], pop[b], codec.lower, codec.upper, config.eta_crossover,
                                config.crossover_prob, rng)
            child = polynomial_mutation(child, codec.lower, codec.upper, config.eta_mutation,
                                        config.mutation_prob, rng)
            cev = codec.evaluate(child[None])
            c_obj, c_feas, c_viol = cev.objectives[0], bool(cev.feasible[0]), float(cev.violation[0])
            for n in B[i]:
                if rng.random() >= config.update_prob:
                    continue
                if c_feas and feas[n]:
                    better = value(c_obj, W[n]) >= value(obj[n], W[n])
                elif c_feas != feas[n]:
                    better = c_feas
                else:
                    better = c_viol <= viol[n]
                if better:
                    pop[n] = child
                    obj[n], feas[n], viol[n] = c_obj, c_feas, c_viol
        history.append(_stats(gen, BatchEvaluation(obj, feas, viol)))
    return _finish(codec, pop, BatchEvaluation(obj, feas, viol), history)

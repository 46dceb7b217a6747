import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydro_tdrl.decomposition import ObjectiveBounds
from hydro_tdrl.hydro import check_constraints, derive_trajectory
from hydro_tdrl.moea import (GenomeCodec, MoeaConfig, constrained_fronts, das_dennis, moead_run,
                            moead_weights, nsga3_run, partitions_for, polynomial_mutation, sbx_pair)
from hydro_tdrl.pareto import dominates
from hydro_tdrl.toy import tiny_instance

TINY_BOUNDS = ObjectiveBounds(power=(0, 40), aapfd=(0.01, 3), water_revenue=(-10, 250))
SMALL = MoeaConfig(population=24, generations=15, neighborhood=6, seed=3)


@pytest.mark.parametrize("p", [1, 3, 7, 18])
def test_das_dennis_lattice(p):
    W = das_dennis(p)
    assert len(W) == math.comb(p + 2, 2)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert len(np.unique(np.round(W * p).astype(int), axis=0)) == len(W)
    assert np.all(W >= 0)


def test_partitions_for_population():
    assert partitions_for(200) == 18 and len(das_dennis(18)) == 190
    assert partitions_for(10) == 3


def test_moead_weights_fill_population():
    W = moead_weights(200, np.random.default_rng(0))
    assert W.shape == (200, 3)
    np.testing.assert_allclose(W[:190], das_dennis(18))
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(W, moead_weights(200, np.random.default_rng(0)))


@given(st.integers(0, 10_000))
def test_variation_operators_respect_bounds(seed):
    rng = np.random.default_rng(seed)
    lo, hi = np.zeros(8), np.linspace(1, 8, 8)
    p1, p2 = lo + rng.random(8) * hi, lo + rng.random(8) * hi
    c1, c2 = sbx_pair(p1, p2, lo, hi, 15.0, 1.0, rng)
    m = polynomial_mutation(c1, lo, hi, 20.0, 1.0, rng)
    for c in (c1, c2, m):
        assert np.all(c >= lo) and np.all(c <= hi)


def test_operators_are_identity_at_zero_probability(rng):
    lo, hi = np.zeros(5), np.ones(5)
    p1, p2 = rng.random(5), rng.random(5)
    c1, c2 = sbx_pair(p1, p2, lo, hi, 15.0, 0.0, rng)
    assert np.array_equal(c1, p1) and np.array_equal(c2, p2)
    assert np.array_equal(polynomial_mutation(p1, lo, hi, 20.0, 0.0, rng), p1)


def test_mutation_rate_is_per_gene():
    rng = np.random.default_rng(0)
    lo, hi = np.zeros(1000), np.ones(1000)
    x = np.full(1000, 0.5)
    changed = np.mean(polynomial_mutation(x, lo, hi, 20.0, 0.1, rng) != x)
    assert 0.07 < changed < 0.13


def constraint_dominates(fa, ca, fb, cb):
    if ca <= 0 and cb <= 0:
        return bool(np.all(fa <= fb) and np.any(fa < fb))
    if ca <= 0:
        return True
    return cb > 0 and ca < cb


@given(st.integers(0, 10_000))
def test_constrained_fronts_against_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 25
    F = rng.integers(0, 4, (n, 3)).astype(float)
    cv = np.where(rng.random(n) < 0.4, rng.integers(1, 4, n), 0).astype(float)
    fronts = constrained_fronts(F, cv)
    rank = np.full(n, -1)
    for r, fr in enumerate(fronts):
        rank[fr] = r
    assert np.all(rank >= 0)
    for a in range(n):
        for b in range(n):
            if a != b and constraint_dominates(F[a], cv[a], F[b], cv[b]):
                assert rank[a] < rank[b]
        if rank[a] > 0:
            prev = fronts[rank[a] - 1]
            assert any(constraint_dominates(F[p], cv[p], F[a], cv[a]) for p in prev)


def test_codec_round_trip(rng):
    inst = tiny_instance()
    codec = GenomeCodec(inst)
    g = codec.random(5, rng)
    assert np.all(g >= codec.lower) and np.all(g <= codec.upper)
    qp, x, qs = codec.decode(g)
    back = codec.encode(qp, x, qs)
    np.testing.assert_array_equal(codec.decode(back)[0], qp)
    np.testing.assert_array_equal(codec.decode(back)[1], x)
    np.testing.assert_array_equal(codec.decode(back)[2], qs)


@pytest.mark.parametrize("algo", ["nsga3", "moead"])
def test_small_runs_return_feasible_nondominated_reproducible(algo):
    inst = tiny_instance()
    run = (lambda: nsga3_run(inst, SMALL)) if algo == "nsga3" else (lambda: moead_run(inst, TINY_BOUNDS, SMALL))
    a, b = run(), run()
    assert np.array_equal(a.population, b.population)
    assert len(a.objectives) > 0
    codec = GenomeCodec(inst)
    for g, obj in zip(a.genomes, a.objectives):
        s = derive_trajectory(inst, *codec.decode(g))
        assert check_constraints(inst, s).feasible
    for p in a.objectives:
        assert not any(dominates(q, p) for q in a.objectives)
    assert len(a.history) == SMALL.generations + 1


def test_config_validation():
    with pytest.raises(ValueError):
        MoeaConfig(mutation_prob=1.5)
    with pytest.raises(ValueError):
        MoeaConfig(population=10, neighborhood=20)

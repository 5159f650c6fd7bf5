import math
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from tipfront.lattice import Configuration, singleton_origin
from tipfront.oracle import (
    build_truncation,
    escape_bound,
    poisson_weights,
    read_golden,
    transient,
    write_golden,
)
from tipfront.rates import (
    EnumerationInfeasible,
    FecEstModel,
    FecEstParams,
    FreeBranchingModel,
    Kernel,
    standard_model,
)

GOLDEN = Path(__file__).parent / "golden" / "free_branching_n1_L3_t0.5.csv"
NN = FreeBranchingModel(Kernel.indicator(1), cap=1)


def test_state_count():
    assert build_truncation(NN, 1).n_states == 8


def test_outgoing_rates_from_centre():
    chain = build_truncation(NN, 1)
    Q = chain.generator.toarray()
    i = chain.index(Configuration.from_sites({0: 1}, 1))
    targets = {chain.configuration(j).occ(): Q[i, j] for j in np.flatnonzero(Q[i]) if j != i}
    assert targets == {frozenset({-1, 0}): 1.0, frozenset({0, 1}): 1.0}
    assert Q[i, i] == -2.0


@pytest.mark.parametrize("model,L", [(NN, 2), (standard_model(0.5, 0.5), 1),
                                     (FreeBranchingModel(Kernel.indicator(1), 2), 2)])
def test_generator_structure(model, L):
    chain = build_truncation(model, L)
    Q = chain.generator
    assert np.allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    off = Q - __import__("scipy").sparse.diags(Q.diagonal())
    assert off.min() >= 0
    full = chain.index(Configuration.build(-L, [model.cap] * (2 * L + 1), model.cap))
    assert chain.exit_rates()[full] == 0.0


def test_index_bijection():
    chain = build_truncation(FreeBranchingModel(Kernel.indicator(1), 2), 2)
    for i in range(chain.n_states):
        assert chain.index(chain.configuration(i)) == i


def test_budget():
    with pytest.raises(EnumerationInfeasible):
        build_truncation(standard_model(0.5, 0.5), 6, budget=10**6)


def test_time_zero_point_mass():
    chain = build_truncation(NN, 2)
    r = transient(chain, singleton_origin(1), 0.0)
    i = chain.index(singleton_origin(1))
    assert r.distribution[i] == 1.0 and r.distribution.sum() == 1.0


def test_normalization_and_nonnegativity():
    chain = build_truncation(standard_model(0.5, 0.5), 1)
    for t in (0.1, 1.0, 5.0):
        r = transient(chain, singleton_origin(3), t, 1e-10)
        assert abs(r.distribution.sum() - 1.0) <= 1e-12
        assert r.distribution.min() >= 0.0


def test_one_sided_walk_is_truncated_poisson():
    # births only at tip + 1, rate 1: the tip is min(Poisson(t), L)
    model = FecEstModel(FecEstParams(Kernel(1, (0.0, 0.0, 1.0))), cap=1)
    L, t = 3, 0.7
    r = transient(build_truncation(model, L), singleton_origin(1), t, 1e-12)
    law = r.tip_law
    for k in range(L):
        assert law[k] == pytest.approx(stats.poisson.pmf(k, t), abs=1e-11)
    assert law[L] == pytest.approx(stats.poisson.sf(L - 1, t), abs=1e-11)


def test_nearest_neighbour_reference_value():
    # the right front is an independent rate-1 walk stopped at L
    r = transient(build_truncation(NN, 3), singleton_origin(1), 0.5, 1e-10)
    exact = sum(k * stats.poisson.pmf(k, 0.5) for k in range(3)) + 3 * stats.poisson.sf(2, 0.5)
    assert r.mean_tip == pytest.approx(exact, abs=1e-10)
    assert r.site_means[4] == pytest.approx(1 - math.exp(-0.5), abs=1e-10)
    assert r.mean_mass == pytest.approx(1 + 2 * exact, abs=1e-9)


def test_golden_file():
    meta, probs = read_golden(GOLDEN)
    assert meta["L"] == 3 and meta["t"] == 0.5 and meta["tol"] == 1e-10
    r = transient(build_truncation(NN, 3), singleton_origin(1), 0.5, 1e-10)
    for i, p in probs.items():
        assert r.distribution[i] == pytest.approx(p, abs=1e-12)
    assert r.mean_tip == pytest.approx(meta["mean_tip"], abs=1e-12)


def test_golden_round_trip(tmp_path):
    r = transient(build_truncation(NN, 1), singleton_origin(1), 0.3)
    write_golden(tmp_path / "g.csv", r, {"note": "x"})
    meta, probs = read_golden(tmp_path / "g.csv")
    assert meta["note"] == "x"
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)


def test_doubled_depth_changes_little():
    chain = build_truncation(standard_model(0.5, 0.5), 1)
    tol = 1e-8
    a = transient(chain, singleton_origin(3), 2.0, tol)
    b = transient(chain, singleton_origin(3), 2.0, tol ** 2)
    assert b.terms > a.terms
    assert np.abs(a.distribution - b.distribution).sum() < tol


def test_chapman_kolmogorov():
    chain = build_truncation(FreeBranchingModel(Kernel.indicator(1), 2), 2)
    tol = 1e-10
    direct = transient(chain, singleton_origin(2), 0.9, tol)
    half = transient(chain, singleton_origin(2), 0.4, tol)
    two_step = transient(chain, half.distribution, 0.5, tol)
    assert np.abs(direct.distribution - two_step.distribution).sum() <= 10 * tol


def test_mass_nondecreasing():
    chain = build_truncation(standard_model(1.0, 0.5), 1)
    masses = [transient(chain, singleton_origin(3), t).mean_mass for t in np.linspace(0, 3, 13)]
    assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))


def test_poisson_weights_tail():
    w = poisson_weights(12.0, 1e-10)
    assert 1 - w.sum() <= 1e-10
    assert stats.poisson.sf(len(w) - 2, 12.0) > 1e-10


def test_escape_bound():
    assert escape_bound(2.0, 1, 3, 0.5) == pytest.approx(2 * stats.poisson.sf(3, 1.0))
    assert escape_bound(2.0, 1, 30, 0.5) < 1e-6
    assert escape_bound(20.0, 3, 1, 10.0) == 1.0

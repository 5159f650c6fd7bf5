import math

import numpy as np
import pytest
from scipy import stats

from tipfront.lattice import Configuration, singleton_origin
from tipfront.rates import FreeBranchingModel, Kernel, WindowedModel, standard_model
from tipfront.simulator import (
    FrozenError,
    SimState,
    derive_seeds,
    init,
    replicate,
    run_until,
    simulate,
    step,
)

FB3 = FreeBranchingModel(Kernel.indicator(3), 3)


def test_init_active_sites_free_branching():
    s = init(FB3, singleton_origin(3), seed=1)
    assert sorted(s.active_rates) == list(range(-3, 4))
    assert s.total_rate == 7.0


def test_init_undamped_fec_est_equals_free_branching():
    a = init(FB3, singleton_origin(3), 1)
    b = init(standard_model(0.0, 0.0), singleton_origin(3), 1)
    assert a.active_rates == b.active_rates
    assert a.total_rate == b.total_rate


def test_init_deterministic():
    assert init(FB3, singleton_origin(3), 9).fingerprint() == init(FB3, singleton_origin(3), 9).fingerprint()


def test_init_rejects_empty():
    with pytest.raises(ValueError):
        init(FB3, Configuration.empty(3), 0)


def test_frozen_step_raises():
    m = WindowedModel(FreeBranchingModel(Kernel.indicator(1), 1), 0, 0)
    s = SimState(m, singleton_origin(1), 0, use_table=False)
    with pytest.raises(FrozenError):
        s.step()


def test_first_event_uniform():
    n = 20000
    counts = np.zeros(7)
    for seed in derive_seeds(123, n):
        s = SimState(FB3, singleton_origin(3), seed)
        _, ev = step(s)
        counts[ev.site + 3] += 1
    assert stats.chisquare(counts).pvalue > 1e-4


def test_steps_monotone_and_local():
    s = init(standard_model(0.5, 0.5), singleton_origin(3), 4)
    t, x = 0.0, 0
    for _ in range(2000):
        _, ev = step(s)
        assert ev.time > t
        assert s.tip >= x and s.tip - x <= 3
        t, x = ev.time, s.tip
        occ = s.config.occ()
        assert min(abs(ev.site - y) for y in occ if y != ev.site or s.config[y] > 1) <= 3 \
            or len(occ) == 1


def test_active_rates_near_support():
    s = init(standard_model(0.5, 0.5), singleton_origin(3), 8)
    for _ in range(500):
        s.step()
    occ = s.config.occ()
    for x in s.active_rates:
        assert min(abs(x - y) for y in occ) <= 3


def test_rate_cache_matches_recomputation():
    s = init(standard_model(0.5, 0.5), singleton_origin(3), 5)
    for k in range(1, 5001):
        s.step()
        if k % 97 == 0:
            exact = s.exact_total()
            assert s.total_rate == pytest.approx(exact, rel=1e-9)
            for x, r in s.active_rates.items():
                assert r == s.model.rate(x, s.config)


def test_t_end_zero():
    tr = simulate(FB3, singleton_origin(3), 0.0, seed=1)
    assert tr.n_events == 0
    assert tr.t.tolist() == [0.0]
    assert tr.X.tolist() == [0]


def test_simulate_deterministic():
    a = simulate(standard_model(0.5, 0.5), singleton_origin(3), 50.0, 42, [10, 20, 50])
    b = simulate(standard_model(0.5, 0.5), singleton_origin(3), 50.0, 42, [10, 20, 50])
    for name in ("t", "X", "Y", "mass", "int_f", "int_g", "qv", "event_times", "event_sites"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("model", [FB3, standard_model(0.5, 0.5),
                                   FreeBranchingModel(Kernel.indicator(1), 1)])
def test_backends_agree(model):
    ck = [0.0, 1.0, 2.5, 6.0]
    a = simulate(model, singleton_origin(model.cap), 6.0, 7, ck, backend="reference")
    b = simulate(model, singleton_origin(model.cap), 6.0, 7, ck, backend="compiled")
    assert np.array_equal(a.event_sites, b.event_sites)
    assert np.allclose(a.event_times, b.event_times, rtol=1e-12, atol=0)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    assert np.allclose(a.int_f, b.int_f, rtol=1e-9)
    assert np.allclose(a.int_g, b.int_g, rtol=1e-9)


def test_trajectory_invariants():
    tr = simulate(standard_model(0.5, 0.5), singleton_origin(3), 200.0, 3,
                  np.linspace(0, 200, 41))
    assert np.all(np.diff(tr.event_times) > 0)
    assert np.all(np.diff(tr.X) >= 0)
    assert np.all(np.diff(tr.Y) <= 0)
    assert np.all(np.diff(tr.mass) >= 0)
    assert tr.mass[-1] == 1 + tr.n_events
    # each event extends the support by at most R
    ev_by = np.searchsorted(tr.event_times, tr.t, side="right")
    assert np.all(tr.X <= 3 * ev_by) and np.all(tr.Y >= -3 * ev_by)
    jumps = np.diff(np.maximum.accumulate(np.concatenate([[0], tr.event_sites])))
    assert jumps.max() <= 3


def test_checkpoints_see_state_before_next_event():
    tr = simulate(FB3, singleton_origin(3), 5.0, 11, [0.0, 5.0])
    t0 = tr.event_times[0]
    mid = simulate(FB3, singleton_origin(3), 5.0, 11, [t0 * 0.5, float(t0)])
    assert mid.mass.tolist() == [1, 2]


def test_run_until_resumes_from_previous_leg():
    model = standard_model(0.5, 0.5)
    s = SimState(model, singleton_origin(3), 77)
    first = run_until(s, 12.0)
    rest = run_until(s, 30.0)
    assert rest.t[0] == 12.0 and rest.t[-1] == 30.0
    assert rest.X[0] == first.X[-1] and rest.mass[0] == first.mass[-1]
    assert rest.int_f[0] == first.int_f[-1]
    assert rest.event_times.size == 0 or rest.event_times[0] > 12.0


def test_drift_integral_matches_event_replay():
    from tipfront.analysis import f_functional
    from tipfront.lattice import seen_from_tip

    model = standard_model(0.5, 0.5)
    tr = simulate(model, singleton_origin(3), 20.0, 13)
    eta, t_prev, total = singleton_origin(3), 0.0, 0.0
    for t, x in zip(tr.event_times, tr.event_sites):
        total += f_functional(seen_from_tip(eta, 3), model) * (t - t_prev)
        eta, t_prev = eta.increment(int(x)), t
    total += f_functional(seen_from_tip(eta, 3), model) * (20.0 - t_prev)
    assert tr.int_f[-1] == pytest.approx(total, rel=1e-9)


def test_replicate_independent_of_parallelism():
    model = standard_model(0.5, 0.5)
    a = replicate(model, singleton_origin(3), 40.0, 12, base_seed=5, parallelism=1,
                  checkpoint_times=[10, 40])
    b = replicate(model, singleton_origin(3), 40.0, 12, base_seed=5, parallelism=4,
                  checkpoint_times=[10, 40])
    for x, y in zip(a, b):
        assert x.seed == y.seed
        assert np.array_equal(x.X, y.X) and np.array_equal(x.int_f, y.int_f)
        assert np.array_equal(x.event_times, y.event_times)


def test_seeds_distinct():
    seeds = derive_seeds(0, 1000)
    assert len(set(seeds)) == 1000
    assert seeds == derive_seeds(0, 1000)


def test_buffer_growth_long_run():
    tr = simulate(standard_model(0.5, 0.5), singleton_origin(3), 400.0, 2, record_events=False)
    assert tr.X[-1] > 500 and tr.Y[-1] < -500


def test_mirrored_trajectory():
    tr = simulate(FB3, singleton_origin(3), 3.0, 2)
    m = tr.mirrored()
    assert np.array_equal(m.X, -tr.Y)
    assert m.int_f is None


def test_csv_export(tmp_path):
    tr = simulate(FB3, singleton_origin(3), 1.0, 2, [0.0, 0.5, 1.0])
    tr.write_csv(tmp_path / "t.csv")
    tr.write_events_csv(tmp_path / "e.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,X,Y,mass,int_f,int_g" and len(lines) == 4
    ev = (tmp_path / "e.csv").read_text().splitlines()
    assert ev[0] == "t,site" and len(ev) == tr.n_events + 1

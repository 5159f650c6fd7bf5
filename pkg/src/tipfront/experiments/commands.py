"""Experiment drivers behind the command-line verbs.

Each command takes an :class:`ExperimentConfig`, writes schema-tagged CSV
(and where useful SVG) files into ``config.out_dir`` and returns a small
result object.  Outputs depend only on the config and its base seed.
"""
from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .. import analysis
from ..lattice import singleton_origin
from ..oracle import build_truncation, escape_bound, transient
from ..rates import FreeBranchingModel, Kernel, WindowedModel, check_conditions, compute_bounds
from ..simulator import replicate
from .config import ExperimentConfig
from .svg import Chart

SCHEMA_PREFIX = "tipfront"


def _seed_for(base_seed: int, *tags) -> int:
    """Deterministic 63-bit seed for a labelled sub-experiment."""
    words = [int(base_seed)]
    for tag in tags:
        if isinstance(tag, float):
            words.extend(struct.unpack("<II", struct.pack("<d", tag)))
        else:
            words.append(int(tag))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 32 | int(state[1])) >> 1


class _Table:
    """CSV writer with a leading ``# schema=...`` line and repr floats."""

    def __init__(self, path, schema: str, header):
        self.fh = open(path, "w", newline="")
        self.fh.write(f"# schema={SCHEMA_PREFIX}.{schema}/1\n")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(header)

    def row(self, *values):
        self.w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in values])

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _out(config: ExperimentConfig, name: str) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return os.path.join(config.out_dir, name)


def read_table(path):
    """Read a CSV written by these commands; returns ``(schema, rows)``."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise ValueError(f"{path}: missing schema line")
        rows = list(csv.DictReader(fh))
    return first[len("# schema="):], rows


# -- speed points -------------------------------------------------------------


def speed_point(config: ExperimentConfig, c_fec: float, c_est: float,
                n_runs: int | None = None, t2: float | None = None) -> analysis.SpeedEstimate:
    """Speed estimate over ``[t1, t2]`` for one parameter pair.

    The replica seeds derive from the base seed and the pair itself, so a
    repeated pair reproduces its estimate exactly.
    """
    t2 = config.t2 if t2 is None else t2
    model = config.build_model(c_fec, c_est)
    trajs = replicate(
        model, singleton_origin(config.cap), t2, n_runs or config.n_runs,
        base_seed=_seed_for(config.base_seed, 2, float(c_fec), float(c_est)),
        parallelism=config.parallelism, checkpoint_times=[config.t1, t2],
        record_events=False,
    )
    return analysis.speed_estimate(trajs, config.t1, t2)


def sweep_pairs(config: ExperimentConfig) -> list[tuple[float, float]]:
    if config.sweep_mode == "random":
        rng = np.random.default_rng(_seed_for(config.base_seed, 1))
        return [(float(a), float(b)) for a, b in rng.random((config.count, 2))]
    side = max(1, math.ceil(math.sqrt(config.count)))
    grid = np.linspace(0.0, 1.0, side) if side > 1 else np.array([0.0])
    pairs = [(float(a), float(b)) for a in grid for b in grid]
    return pairs[: config.count]


@dataclass
class SweepResult:
    pairs: list
    estimates: list
    csv_path: str
    svg_path: str


def cmd_sweep(config: ExperimentConfig) -> SweepResult:
    pairs = sweep_pairs(config)
    ests = [speed_point(config, a, b) for a, b in pairs]
    path = _out(config, "sweep.csv")
    with _Table(path, "sweep", ["c_fec", "c_est", "speed", "std_error"]) as tab:
        for (a, b), e in zip(pairs, ests):
            tab.row(a, b, e.lambda_hat, e.std_error)
    speeds = np.array([e.lambda_hat for e in ests])
    lo, hi = speeds.min(), speeds.max()
    shade = (speeds - lo) / (hi - lo) if hi > lo else np.zeros_like(speeds)
    chart = Chart(title=f"speed over (c_fec, c_est), range {lo:.3g} to {hi:.3g}",
                  xlabel="c_fec", ylabel="c_est")
    chart.scatter([p[0] for p in pairs], [p[1] for p in pairs], values=shade)
    svg = _out(config, "sweep.svg")
    chart.save(svg)
    return SweepResult(pairs, ests, path, svg)


@dataclass
class CurveResult:
    c_est: list
    estimates: list
    csv_path: str
    svg_path: str


def cmd_curve(config: ExperimentConfig) -> CurveResult:
    n = config.curve_points
    grid = [float(v) for v in np.linspace(0.0, 1.0, n)] if n > 1 else [config.c_est]
    ests = [speed_point(config, config.curve_c_fec, c) for c in grid]
    path = _out(config, "curve.csv")
    with _Table(path, "curve", ["c_est", "speed", "std_error"]) as tab:
        for c, e in zip(grid, ests):
            tab.row(c, e.lambda_hat, e.std_error)
    chart = Chart(title=f"speed against c_est at c_fec = {config.curve_c_fec:g}",
                  xlabel="c_est", ylabel="speed")
    chart.line(grid, [e.lambda_hat for e in ests])
    chart.scatter(grid, [e.lambda_hat for e in ests])
    svg = _out(config, "curve.svg")
    chart.save(svg)
    return CurveResult(grid, ests, path, svg)


@dataclass
class TrajectoriesResult:
    trajectories: list
    csv_path: str
    svg_path: str


def cmd_trajectories(config: ExperimentConfig) -> TrajectoriesResult:
    model = config.build_model()
    times = [float(t) for t in np.linspace(0.0, config.t2, config.trajectory_samples + 1)]
    trajs = replicate(model, singleton_origin(config.cap), config.t2, config.trajectory_runs,
                      base_seed=_seed_for(config.base_seed, 3),
                      parallelism=config.parallelism, checkpoint_times=times,
                      record_events=False)
    path = _out(config, "trajectories.csv")
    with _Table(path, "trajectories", ["run_id", "t", "X"]) as tab:
        for k, tr in enumerate(trajs):
            for t, x in zip(tr.t, tr.X):
                tab.row(k, float(t), int(x))
    chart = Chart(title="tip trajectories", xlabel="t", ylabel="X_t")
    for tr in trajs:
        chart.line(tr.t, tr.X)
    svg = _out(config, "trajectories.svg")
    chart.save(svg)
    return TrajectoriesResult(trajs, path, svg)


# -- fluctuations ---------------------------------------------------------------


@dataclass
class FluctResult:
    speed: analysis.SpeedEstimate
    reports: dict
    deviation: dict
    trajectories: list = field(repr=False, default_factory=list)


def cmd_fluct(config: ExperimentConfig) -> FluctResult:
    """Fluctuations of the tip around ``lambda_hat * t``.

    ``lambda_hat`` comes from a separate batch of runs so that the residuals
    are not centred with their own estimate.
    """
    model = config.build_model()
    start = singleton_origin(config.cap)
    speed_batch = replicate(model, start, config.t2, config.speed_runs,
                            base_seed=_seed_for(config.base_seed, 4),
                            parallelism=config.parallelism,
                            checkpoint_times=[config.t1, config.t2], record_events=False)
    lam = analysis.speed_estimate(speed_batch, config.t1, config.t2)
    times = sorted(set(config.fluct_times))
    trajs = replicate(model, start, max(times), config.fluct_runs,
                      base_seed=_seed_for(config.base_seed, 5),
                      parallelism=config.parallelism, checkpoint_times=times,
                      record_events=False)
    reports, dev = {}, {}
    for t in times:
        X = analysis.values_at(trajs, t)
        rep = analysis.fluctuation_stats(X, t, lam.lambda_hat, config.q_grid)
        reports[t] = rep
        dev[t] = analysis.deviation_frequency(X, t, lam.lambda_hat, config.deviation)
        with _Table(_out(config, f"fluct_hist_t{t:g}.csv"), "fluct_hist",
                    ["q", "count", "frequency"]) as tab:
            for q, c in zip(rep.hist_q, rep.hist_count):
                tab.row(float(q), int(c), float(c) / rep.n)
    with _Table(_out(config, "fluct_tails.csv"), "fluct_tails",
                ["t", "q", "tail_frequency"]) as tab:
        for t in times:
            for q, f in zip(reports[t].q_grid, reports[t].tail):
                tab.row(float(t), float(q), float(f))
    with _Table(_out(config, "fluct_summary.csv"), "fluct_summary",
                ["t", "lambda_hat", "residual_std", "log_tail_slope", "tail_monotone",
                 "deviation_frequency"]) as tab:
        for t in times:
            r = reports[t]
            tab.row(float(t), lam.lambda_hat, r.residual_std, r.log_tail_slope,
                    int(r.tail_monotone), dev[t])
    chart = Chart(title="tail frequency of |X_t - lambda t| / sqrt(t)", xlabel="q^2",
                  ylabel="log tail frequency")
    for t in times:
        r = reports[t]
        pos = r.tail > 0
        chart.line(r.q_grid[pos] ** 2, np.log(r.tail[pos]), label=f"t={t:g}")
    chart.save(_out(config, "fluct_tails.svg"))
    return FluctResult(lam, reports, dev, trajs)


# -- validation -----------------------------------------------------------------


@dataclass
class Check:
    name: str
    statistic: float
    threshold: float
    passed: bool
    note: str = ""


def within(diff: float, se: float, k: float) -> bool:
    """``|diff| <= k * se``, with a tiny floor on ``se`` for degenerate samples."""
    return abs(diff) <= k * max(se, 1e-9)


def oracle_checks(L: int = 3, t: float = 0.5, runs: int = 10000, k: float = 3.0,
                  tol: float = 1e-10, seed: int = 0, parallelism: int = 1) -> list[Check]:
    """Simulated site means and mean tip of the N=1, R=1 nearest-neighbour
    branching process on ``[-L, L]`` against the exact transient law."""
    model = FreeBranchingModel(Kernel.indicator(1), cap=1)
    chain = build_truncation(model, L)
    exact = transient(chain, singleton_origin(1), t, tol)
    window = WindowedModel(model, -L, L)
    trajs = replicate(window, singleton_origin(1), t, runs, base_seed=seed,
                      parallelism=parallelism, record_events=True, backend="reference")
    occ = np.zeros((runs, chain.n_sites))
    for r, tr in enumerate(trajs):
        occ[r, L] = 1
        np.add.at(occ[r], tr.event_sites + L, 1)
    X = np.array([tr.X[-1] for tr in trajs], dtype=float)
    checks = []
    for j, x in enumerate(chain.sites):
        m = occ[:, j].mean()
        se = analysis.standard_error(occ[:, j])
        d = m - exact.site_means[j]
        checks.append(Check(f"oracle_site_{x}", d, k * max(se, 1e-9), within(d, se, k)))
    d = X.mean() - exact.mean_tip
    se = analysis.standard_error(X)
    checks.append(Check("oracle_mean_tip", d, k * max(se, 1e-9), within(d, se, k)))
    bounds = compute_bounds(model)
    eb = escape_bound(bounds.upper, model.range, L, t)
    checks.append(Check("oracle_escape_bound", eb, 1.0, True,
                        "informational: windowed runs make the comparison exact"))
    return checks


def martingale_checks(model, times=(10.0, 50.0), runs: int = 1000, k: float = 3.0,
                      seed: int = 0, parallelism: int = 1) -> list[Check]:
    times = sorted(times)
    trajs = replicate(model, singleton_origin(model.cap), times[-1], runs, base_seed=seed,
                      parallelism=parallelism, checkpoint_times=[0.0] + times,
                      record_events=False)
    checks = []
    for t in times:
        dM = np.array([(tr.X - tr.int_f)[tr.index(t)] - (tr.X - tr.int_f)[0] for tr in trajs])
        se = analysis.standard_error(dM)
        checks.append(Check(f"martingale_mean_t{t:g}", float(dM.mean()), k * max(se, 1e-9),
                            within(dM.mean(), se, k)))
        qv = analysis.values_at(trajs, t, "qv")
        ig = analysis.values_at(trajs, t, "int_g")
        se_c = math.hypot(analysis.standard_error(qv), analysis.standard_error(ig))
        d = qv.mean() - ig.mean()
        checks.append(Check(f"compensator_t{t:g}", float(d), k * max(se_c, 1e-9),
                            within(d, se_c, k)))
    return checks


def condition_checks(model, trials: int, seed: int = 0) -> list[Check]:
    rep = check_conditions(model, trials=trials, seed=seed)
    counts = rep.counts()
    note = "; ".join(f"{kind}={n}" for kind, n in sorted(counts.items()))
    return [Check("conditions", float(len(rep.violations)), 0.0, rep.ok, note)]


@dataclass
class ValidateResult:
    checks: list
    csv_path: str

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def cmd_validate(config: ExperimentConfig) -> ValidateResult:
    k = config.tolerance
    checks = []
    checks += oracle_checks(config.oracle_L, config.oracle_t, config.oracle_runs, k,
                            config.oracle_tol, _seed_for(config.base_seed, 6),
                            config.parallelism)
    model = config.build_model()
    checks += martingale_checks(model, config.martingale_times, config.martingale_runs, k,
                                _seed_for(config.base_seed, 7), config.parallelism)
    checks += condition_checks(model, config.condition_trials, _seed_for(config.base_seed, 8))
    path = _out(config, "validate.csv")
    with _Table(path, "validate", ["check", "statistic", "threshold", "passed", "note"]) as tab:
        for c in checks:
            tab.row(c.name, float(c.statistic), float(c.threshold), int(c.passed), c.note)
    return ValidateResult(checks, path)

"""Observables of the tip process and the estimators built on them.

Everything here is post-processing over :class:`~tipfront.simulator.Trajectory`
objects.  Drift and variance integrals come from the simulator, which adds
them up exactly between events, so the martingale quantities below carry no
quadrature error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Configuration, LatticeBuffer, SeenFromTip
from .rates import RateModel
from .simulator import Trajectory


class MissingDataError(ValueError):
    """A trajectory lacks a field that the requested analysis needs."""


# -- drift and variance functionals -------------------------------------------


@dataclass(frozen=True)
class TipFunctionals:
    f_value: float
    g_value: float
    gamma: SeenFromTip


def _tip_moment(gamma: SeenFromTip, model: RateModel, power: int) -> float:
    config = gamma.embed()
    return math.fsum(k ** power * model.rate(k, config) for k in range(1, model.range + 1))


def f_functional(gamma: SeenFromTip, model: RateModel) -> float:
    """Expected rate of tip displacement: sum of ``k * b(tip + k)`` for k = 1..R."""
    return _tip_moment(gamma, model, 1)


def g_functional(gamma: SeenFromTip, model: RateModel) -> float:
    """Second moment of the tip displacement rate: sum of ``k**2 * b(tip + k)``."""
    return _tip_moment(gamma, model, 2)


def tip_functionals(gamma: SeenFromTip, model: RateModel) -> TipFunctionals:
    return TipFunctionals(f_functional(gamma, model), g_functional(gamma, model), gamma)


# -- martingale quantities ----------------------------------------------------


def martingale_residual(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """``(t, M_t)`` at the checkpoints, with ``M_t = X_t - int_0^t f``."""
    if traj.int_f is None:
        raise MissingDataError("trajectory carries no drift integral")
    return traj.t.copy(), traj.X - traj.int_f


def quadratic_variation(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(t, [M]_t, <M>_t)`` at the checkpoints.

    ``[M]`` is the sum of squared tip jumps; it is taken from the event log
    when one was recorded, else from the simulator's running total.
    """
    if traj.int_g is None:
        raise MissingDataError("trajectory carries no variance integral")
    if traj.has_events:
        qv = _qv_from_events(traj)
    elif traj.qv is not None:
        qv = traj.qv.astype(float)
    else:
        raise MissingDataError("trajectory has neither events nor a jump total")
    return traj.t.copy(), qv, traj.int_g.copy()


def _qv_from_events(traj: Trajectory) -> np.ndarray:
    tip = traj.initial.tip
    times = traj.event_times
    sq = np.zeros(len(times))
    for n, x in enumerate(traj.event_sites):
        if x > tip:
            sq[n] = (x - tip) ** 2
            tip = x
    cum = np.concatenate([[0.0], np.cumsum(sq)])
    # events at or before each checkpoint
    k = np.searchsorted(times, traj.t, side="right")
    return cum[k]


def tip_jumps(traj: Trajectory) -> np.ndarray:
    """Sizes of all positive tip displacements, in event order."""
    if not traj.has_events:
        raise MissingDataError("trajectory was recorded without events")
    tip = traj.initial.tip
    out = []
    for x in traj.event_sites:
        if x > tip:
            out.append(x - tip)
            tip = x
    return np.array(out, dtype=np.int64)


# -- speed --------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedEstimate:
    lambda_hat: float
    t1: float
    t2: float
    n_replicas: int
    std_error: float
    side: str = "right"


def per_run_speeds(trajectories, t1: float, t2: float, side: str = "right") -> np.ndarray:
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    out = []
    for tr in trajectories:
        i1, i2 = tr.index(t1), tr.index(t2)
        if side == "right":
            out.append((tr.X[i2] - tr.X[i1]) / (t2 - t1))
        else:
            out.append((tr.Y[i1] - tr.Y[i2]) / (t2 - t1))
    return np.array(out, dtype=float)


def speed_estimate(trajectories, t1: float, t2: float, side: str = "right") -> SpeedEstimate:
    """Mean of ``(X_t2 - X_t1) / (t2 - t1)`` over runs, with its standard error.

    ``side="left"`` does the same for the leftmost site moving leftward.
    """
    v = per_run_speeds(trajectories, t1, t2, side)
    if len(v) == 0:
        raise ValueError("no trajectories")
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return SpeedEstimate(float(v.mean()), t1, t2, len(v), se, side)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2)


# -- ergodicity of the seen-from-tip chain -------------------------------------


@dataclass
class ErgodicityReport:
    return_times: np.ndarray
    excursion_qv: np.ndarray
    frequencies: dict[str, float]
    mean_f: float
    observed_time: float
    insufficient: bool
    f_values: dict[str, float] = field(default_factory=dict)

    @property
    def n_returns(self) -> int:
        return len(self.return_times)

    def write_frequencies_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("state,frequency\n")
            for key in sorted(self.frequencies):
                fh.write(f"{key},{self.frequencies[key]!r}\n")

    def write_return_times_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("return_time,excursion_qv\n")
            for r, q in zip(self.return_times, self.excursion_qv):
                fh.write(f"{float(r)!r},{int(q)}\n")


def ergodicity_report(traj: Trajectory, model: RateModel, burn_in: float = 0.0) -> ErgodicityReport:
    """Replay the event log and summarize the seen-from-tip chain after ``burn_in``.

    Return times are the gaps between successive entries into the ground
    state (see :attr:`SeenFromTip.is_ground`); the squared tip jumps in each
    such gap give the per-excursion quadratic variation.  Occupation
    frequencies are time-weighted over ``[burn_in, t_end]``.
    """
    if not traj.has_events:
        raise MissingDataError("trajectory was recorded without events")
    t_end = float(traj.meta.get("t_end", traj.t[-1]))
    if not burn_in < t_end:
        raise ValueError("burn_in must precede the end of the run")
    R = model.range
    buf = LatticeBuffer(traj.initial, margin=4)
    f_cache: dict[str, float] = {}
    dwell: dict[str, float] = {}

    gamma = buf.seen_from_tip(R)
    key = gamma.key()
    ground = gamma.is_ground
    t_prev = 0.0
    entries: list[float] = []
    entry_qv: list[int] = []
    qv = 0

    def account(key, gamma, a, b):
        if b <= burn_in:
            return
        span = b - max(a, burn_in)
        dwell[key] = dwell.get(key, 0.0) + span
        if key not in f_cache:
            f_cache[key] = f_functional(gamma, model)

    for t, x in zip(traj.event_times, traj.event_sites):
        t = float(t)
        account(key, gamma, t_prev, t)
        old_tip = buf.hi
        buf.increment(int(x))
        if buf.hi > old_tip:
            qv += (buf.hi - old_tip) ** 2
        gamma = buf.seen_from_tip(R)
        key = gamma.key()
        now_ground = gamma.is_ground
        if now_ground and not ground and t > burn_in:
            entries.append(t)
            entry_qv.append(qv)
        ground = now_ground
        t_prev = t
    account(key, gamma, t_prev, t_end)

    total = math.fsum(dwell.values())
    freqs = {k: v / total for k, v in dwell.items()}
    mean_f = math.fsum(f_cache[k] * v for k, v in dwell.items()) / total
    entries_a = np.array(entries)
    qv_a = np.array(entry_qv, dtype=np.int64)
    return ErgodicityReport(
        return_times=np.diff(entries_a),
        excursion_qv=np.diff(qv_a),
        frequencies=freqs,
        mean_f=mean_f,
        observed_time=total,
        insufficient=len(entries) < 3,
        f_values={k: f_cache[k] for k in dwell},
    )


# -- hitting times ------------------------------------------------------------


@dataclass
class HittingTimes:
    sites: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray


def hitting_times(traj: Trajectory, sites, range_: int | None = None) -> HittingTimes:
    """First occupation time ``tau(x)`` and first time ``sigma(x)`` at which
    ``x`` is within ``range_`` of an occupied site; ``inf`` if never."""
    if not traj.has_events:
        raise MissingDataError("trajectory was recorded without events")
    R = traj.range if range_ is None else range_
    first: dict[int, float] = {x: 0.0 for x in traj.initial.occ()}
    for t, x in zip(traj.event_times, traj.event_sites):
        first.setdefault(int(x), float(t))
    sites = np.asarray(list(sites), dtype=np.int64)
    tau = np.array([first.get(int(x), math.inf) for x in sites])
    sigma = np.array([
        min(first.get(int(y), math.inf) for y in range(x - R, x + R + 1)) for x in sites
    ])
    return HittingTimes(sites, sigma, tau)


# -- fluctuations -------------------------------------------------------------


DEFAULT_Q_GRID = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0)


@dataclass
class FluctuationReport:
    t: float
    lambda_hat: float
    n: int
    residual_std: float
    q_grid: np.ndarray
    tail: np.ndarray
    hist_q: np.ndarray
    hist_count: np.ndarray
    log_tail_slope: float
    tail_monotone: bool

    def write_histogram_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("q,count,frequency\n")
            for q, c in zip(self.hist_q, self.hist_count):
                fh.write(f"{float(q)!r},{int(c)},{float(c) / self.n!r}\n")


def fluctuation_stats(X_t, t: float, lambda_hat: float, q_grid=DEFAULT_Q_GRID,
                      center: float | None = None, bin_width: float = 0.25) -> FluctuationReport:
    """Empirical law of ``(X_t - center) / sqrt(t)`` with ``center = lambda_hat * t``.

    ``tail[i]`` is the fraction of runs with ``|residual| >= q_grid[i]``;
    ``log_tail_slope`` regresses the log of the positive tail frequencies
    on ``q**2``.
    """
    X = np.asarray(X_t, dtype=float)
    if len(X) < 2:
        raise ValueError("need at least two replicas")
    if center is None:
        center = lambda_hat * t
    dev = X - center
    z = dev / math.sqrt(t)
    q = np.asarray(q_grid, dtype=float)
    absz = np.abs(z)
    tail = np.array([(absz >= qi).mean() for qi in q])
    pos = tail > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(q[pos] ** 2, np.log(tail[pos]), 1)[0])
    else:
        slope = math.nan
    monotone = bool(np.all(np.diff(tail) <= 0))
    # histogram bins centred on multiples of bin_width
    idx = np.round(z / bin_width).astype(np.int64)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    centers = np.arange(lo, hi + 1) * bin_width
    return FluctuationReport(t, lambda_hat, len(X), float(dev.std(ddof=1)), q, tail,
                             centers, counts, slope, monotone)


def deviation_frequency(X_t, t: float, lambda_hat: float, rel: float = 0.1) -> float:
    """Fraction of runs with ``|X_t / t - lambda_hat| >= rel * lambda_hat``."""
    X = np.asarray(X_t, dtype=float)
    return float((np.abs(X / t - lambda_hat) >= rel * lambda_hat).mean())


def standard_error(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def values_at(trajectories, t: float, attr: str = "X") -> np.ndarray:
    """One observable at checkpoint ``t`` across runs."""
    return np.array([getattr(tr, attr)[tr.index(t)] for tr in trajectories], dtype=float)


def embed_with_below(gamma: SeenFromTip, below: Configuration) -> Configuration:
    """``gamma.embed()`` with ``below`` pasted strictly under the truncation point.

    Only meaningful for blocked views; the result has the same view.
    """
    base = gamma.embed()
    depth = len(gamma.values) + (gamma.range if gamma.blocked else 0)
    cut = -depth
    sites = {x: base[x] for x in range(cut + 1, 1)}
    for x in below.occ():
        if x <= cut:
            sites[x] = below[x]
    return Configuration.from_sites(sites, gamma.cap)

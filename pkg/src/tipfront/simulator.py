"""Exact simulation of the birth process by the direct (Gillespie) method.

A :class:`SimState` owns one run: the occupancy buffer, a rate for every
buffer cell, a Fenwick tree over those rates, the clock and the random
generator.  Two event loops share that state:

* :meth:`SimState.step` is the reference implementation.  It evaluates rates
  through :meth:`RateModel.rate` and picks the birth site by a linear
  prefix scan over the active window.
* :func:`run_until` uses the compiled loop in :mod:`tipfront._kernel`
  whenever the model is translation invariant and its local rate table
  fits in memory, and falls back to ``step`` otherwise.

Both consume the generator identically (two uniforms per drawn event, the
first for the waiting time ``-log(1 - u) / total``, the second for the
site), so for models whose rates sum exactly in floating point, such as free
branching with integer weights, the two loops produce the same trajectory.

Seeds: a run seeded with integer ``s`` draws from
``Generator(Philox(s))``.  :func:`derive_seeds` turns a base seed into
per-run seeds via ``SeedSequence(base).spawn(n)``, taking the first 63 bits
of each child's state.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernel as K
from .lattice import Configuration, LatticeBuffer
from .rates import EnumerationInfeasible, RateModel


class FrozenError(RuntimeError):
    """The total rate is zero, so no further event can happen."""


class Event(NamedTuple):
    time: float
    site: int


_TABLE_BUDGET = 1 << 22
_table_cache: dict[int, tuple[RateModel, np.ndarray]] = {}


def rate_table(model: RateModel) -> np.ndarray | None:
    """Cached local rate table, or None if the model cannot be tabulated."""
    if not model.translation_invariant:
        return None
    hit = _table_cache.get(id(model))
    if hit is not None and hit[0] is model:
        return hit[1]
    try:
        table = np.ascontiguousarray(model.tabulate(_TABLE_BUDGET), dtype=np.float64)
    except EnumerationInfeasible:
        return None
    if len(_table_cache) > 64:
        _table_cache.clear()
    _table_cache[id(model)] = (model, table)
    return table


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seeds(base_seed: int, n: int) -> list[int]:
    """Per-run integer seeds, deterministic in ``base_seed`` and distinct."""
    children = np.random.SeedSequence(base_seed).spawn(n)
    seeds = [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in children]
    if len(set(seeds)) != n:
        raise RuntimeError("seed collision")
    return seeds


class SimState:
    """Mutable state of one simulation run."""

    def __init__(self, model: RateModel, initial: Configuration, seed: int,
                 use_table: bool = True):
        if initial.is_empty:
            raise ValueError("initial configuration is empty; the process would be frozen")
        if initial.cap != model.cap:
            raise ValueError(f"configuration cap {initial.cap} != model cap {model.cap}")
        self.model = model
        self.seed = seed
        self.initial = initial
        self.cap = model.cap
        self.R = model.range
        self.I = model.interaction_range
        self.margin = 2 * self.I + self.R + 2
        self.table = rate_table(model) if use_table else None
        self.buf = LatticeBuffer(initial, margin=self.margin)
        self.rng = make_rng(seed)
        self.time = 0.0
        self.event_count = 0
        self.int_f = 0.0
        self.int_g = 0.0
        self.qv = 0
        self._alloc()
        self._refresh()

    # -- bookkeeping -------------------------------------------------------

    def _alloc(self):
        n = len(self.buf.data)
        self.rates = np.zeros(n)
        self.tree = np.zeros(n + 1)

    def _cell(self, x: int) -> int:
        return x - self.buf.base

    def _rate(self, x: int) -> float:
        if self.table is not None:
            return float(K.cell_rate(self.buf.data, self._cell(x), self.table,
                                     self.cap + 1, self.I))
        return float(self.model.rate(x, self.buf))

    def _refresh(self):
        """Recompute every rate in the active window and rebuild the tree."""
        buf = self.buf
        lo, hi = self._cell(buf.lo - self.I), self._cell(buf.hi + self.I)
        if self.table is not None:
            K.refresh_all(buf.data, self.rates, self.tree, self.table, self.cap + 1,
                          self.I, lo, hi)
        else:
            self.rates[:] = 0.0
            for c in range(lo, hi + 1):
                self.rates[c] = self.model.rate(c + buf.base, buf)
            K.tree_build(self.rates, self.tree)
        self._update_drift()

    def _update_drift(self):
        self.f_now, self.g_now = K.drift(self.rates, self._cell(self.buf.hi), self.R)

    def _ensure_room(self):
        buf = self.buf
        if buf.ensure(buf.lo - self.margin, buf.hi + self.margin):
            self._alloc()
            self._refresh()

    @property
    def config(self) -> Configuration:
        return self.buf.snapshot()

    @property
    def total_rate(self) -> float:
        return float(K.tree_total(self.tree))

    @property
    def active_rates(self) -> dict[int, float]:
        """``{site: rate}`` for every site with a positive rate."""
        idx = np.flatnonzero(self.rates > 0)
        return {int(i) + self.buf.base: float(self.rates[i]) for i in idx}

    @property
    def tip(self) -> int:
        return self.buf.hi

    @property
    def leftmost(self) -> int:
        return self.buf.lo

    @property
    def mass(self) -> int:
        return self.buf.mass

    def fingerprint(self) -> tuple:
        """Everything that determines the future of the run."""
        return (self.config, self.time, self.event_count, self.int_f, self.int_g,
                self.qv, tuple(sorted(self.active_rates.items())),
                repr(self.rng.bit_generator.state))

    def exact_total(self) -> float:
        """Total rate recomputed from scratch through the model."""
        buf = self.buf
        return math.fsum(self.model.rate(x, buf)
                         for x in range(buf.lo - self.R, buf.hi + self.R + 1))

    # -- reference event loop ----------------------------------------------

    def _draw(self) -> tuple[float, float]:
        u1 = self.rng.random()
        u2 = self.rng.random()
        return u1, u2

    def _pick(self, target: float) -> int:
        buf = self.buf
        lo = self._cell(buf.lo - self.R)
        window = self.rates[lo : self._cell(buf.hi + self.R) + 1]
        cumulative = np.cumsum(window)
        k = int(np.searchsorted(cumulative, target, side="right"))
        if k >= len(window) or window[k] <= 0:
            # rounding at the top end; take the nearest positive cell
            positive = np.flatnonzero(window > 0)
            below = positive[positive <= k]
            k = int(below[-1]) if len(below) else int(positive[0])
        return lo + k + buf.base

    def _apply(self, t_next: float, x: int):
        dt = t_next - self.time
        self.int_f += self.f_now * dt
        self.int_g += self.g_now * dt
        self.time = t_next
        buf = self.buf
        grown = buf.ensure(min(buf.lo, x) - self.margin, max(buf.hi, x) + self.margin)
        if grown:
            self._alloc()
        old_tip = buf.hi
        buf.increment(x)
        if x > old_tip:
            self.qv += (x - old_tip) ** 2
        self.event_count += 1
        if grown or self.event_count % K.REBUILD_EVERY == 0:
            self._refresh()
            return
        for y in range(x - self.I, x + self.I + 1):
            c = self._cell(y)
            r = self._rate(y)
            d = r - self.rates[c]
            if d != 0.0:
                self.rates[c] = r
                K.tree_add(self.tree, c, d)
        self._update_drift()

    def _next_time(self, u1: float, total: float) -> float:
        return self.time - math.log1p(-u1) / total

    def step(self) -> Event:
        """Perform one birth; raises :class:`FrozenError` if nothing can happen."""
        total = self.total_rate
        if total <= 0:
            raise FrozenError("total rate is zero")
        u1, u2 = self._draw()
        t_next = self._next_time(u1, total)
        x = self._pick(u2 * total)
        self._apply(t_next, x)
        return Event(t_next, x)


def init(model: RateModel, initial: Configuration, seed: int) -> SimState:
    return SimState(model, initial, seed)


def step(state: SimState) -> tuple[SimState, Event]:
    return state, state.step()


# -- trajectories -----------------------------------------------------------


@dataclass
class Trajectory:
    """Event log plus observables at checkpoint times.

    ``X`` and ``Y`` are the rightmost and leftmost occupied sites, ``int_f``
    and ``int_g`` the running integrals of the drift and variance
    functionals, ``qv`` the sum of squared tip jumps.
    """

    seed: int | None
    model: str
    initial: Configuration
    range: int
    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    mass: np.ndarray
    int_f: np.ndarray | None
    int_g: np.ndarray | None
    qv: np.ndarray | None = None
    event_times: np.ndarray | None = None
    event_sites: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def has_events(self) -> bool:
        return self.event_times is not None

    @property
    def n_events(self) -> int:
        return int(self.meta["events"])

    def index(self, t: float) -> int:
        """Checkpoint index for time ``t``; raises KeyError if absent."""
        k = int(np.searchsorted(self.t, t))
        for j in (k - 1, k):
            if 0 <= j < len(self.t) and math.isclose(self.t[j], t, rel_tol=1e-12, abs_tol=1e-12):
                return j
        raise KeyError(f"no checkpoint at t={t}")

    def tip_at(self, t: float) -> int:
        return int(self.X[self.index(t)])

    def mirrored(self) -> Trajectory:
        """The reflected run: leftward quantities become rightward ones.

        Drift integrals are not reflected (they belong to the right front)
        and are dropped.
        """
        return Trajectory(
            seed=self.seed, model=f"mirror({self.model})", initial=self.initial.mirror(),
            range=self.range, t=self.t.copy(), X=-self.Y, Y=-self.X, mass=self.mass.copy(),
            int_f=None, int_g=None, qv=None,
            event_times=None if self.event_times is None else self.event_times.copy(),
            event_sites=None if self.event_sites is None else -self.event_sites,
            meta=dict(self.meta),
        )

    def shifted(self, c: int) -> Trajectory:
        """The same run translated by ``c`` sites."""
        return Trajectory(
            seed=self.seed, model=self.model, initial=self.initial.shift(c), range=self.range,
            t=self.t.copy(), X=self.X + c, Y=self.Y + c, mass=self.mass.copy(),
            int_f=self.int_f, int_g=self.int_g, qv=self.qv,
            event_times=self.event_times,
            event_sites=None if self.event_sites is None else self.event_sites + c,
            meta=dict(self.meta),
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "X", "Y", "mass", "int_f", "int_g"])
            for k in range(len(self.t)):
                w.writerow([repr(float(self.t[k])), int(self.X[k]), int(self.Y[k]),
                            int(self.mass[k]),
                            "" if self.int_f is None else repr(float(self.int_f[k])),
                            "" if self.int_g is None else repr(float(self.int_g[k]))])

    def write_events_csv(self, path) -> None:
        if self.event_times is None:
            raise ValueError("trajectory was recorded without events")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "site"])
            for t, x in zip(self.event_times, self.event_sites):
                w.writerow([repr(float(t)), int(x)])


def _checkpoint_row(state: SimState, t: float) -> list[float]:
    dt = t - state.time
    return [t, state.buf.hi, state.buf.lo, state.buf.mass,
            state.int_f + state.f_now * dt, state.int_g + state.g_now * dt, state.qv]


def run_until(state: SimState, t_end: float, checkpoint_times: Sequence[float] | None = None,
              record_events: bool = True, backend: str = "auto") -> Trajectory:
    """Advance ``state`` to ``t_end`` and return the trajectory of this leg.

    Checkpoints report the state at their time, including any event that
    happens exactly then.  The event whose time overshoots ``t_end`` is
    discarded (the waiting time is memoryless) and the clock is set to
    ``t_end``.  ``backend`` is ``"auto"``, ``"compiled"`` or ``"reference"``.
    """
    if t_end < state.time:
        raise ValueError(f"t_end={t_end} is before the current time {state.time}")
    if checkpoint_times is None:
        checkpoint_times = sorted({state.time, t_end})
    ck = np.asarray(checkpoint_times, dtype=float)
    if len(ck) and (np.any(np.diff(ck) < 0) or ck[0] < state.time or ck[-1] > t_end):
        raise ValueError("checkpoint times must be sorted and lie in [time, t_end]")
    if backend not in ("auto", "compiled", "reference"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and state.table is None:
        raise ValueError("model has no rate table; the compiled loop is unavailable")
    use_kernel = state.table is not None and backend != "reference"

    n0 = state.event_count
    if use_kernel:
        ck_out, ev_t, ev_x = _run_compiled(state, t_end, ck, record_events)
    else:
        ck_out, ev_t, ev_x = _run_reference(state, t_end, ck, record_events)

    return Trajectory(
        seed=state.seed, model=state.model.describe(), initial=state.initial,
        range=state.R, t=ck_out[:, 0].copy(), X=ck_out[:, 1].astype(np.int64),
        Y=ck_out[:, 2].astype(np.int64), mass=ck_out[:, 3].astype(np.int64),
        int_f=ck_out[:, 4].copy(), int_g=ck_out[:, 5].copy(), qv=ck_out[:, 6].astype(np.int64),
        event_times=ev_t, event_sites=ev_x,
        meta={"events": state.event_count - n0, "t_end": t_end},
    )


def _run_reference(state: SimState, t_end: float, ck: np.ndarray, record: bool):
    rows = []
    ev_t: list[float] = []
    ev_x: list[int] = []
    k = 0
    while True:
        total = state.total_rate
        u1, u2 = state._draw()
        t_next = state._next_time(u1, total) if total > 0 else math.inf
        while k < len(ck) and ck[k] < t_next and ck[k] <= t_end:
            rows.append(_checkpoint_row(state, float(ck[k])))
            k += 1
        if t_next > t_end:
            dt = t_end - state.time
            state.int_f += state.f_now * dt
            state.int_g += state.g_now * dt
            state.time = t_end
            break
        x = state._pick(u2 * total)
        state._apply(t_next, x)
        if record:
            ev_t.append(t_next)
            ev_x.append(x)
    ck_out = np.array(rows, dtype=float).reshape(len(rows), 7)
    if record:
        return ck_out, np.array(ev_t, dtype=float), np.array(ev_x, dtype=np.int64)
    return ck_out, None, None


def _run_compiled(state: SimState, t_end: float, ck: np.ndarray, record: bool):
    buf = state.buf
    ck_out = np.zeros((len(ck), 7))
    cap_ev = 1024 if record else 0
    ev_t = np.zeros(cap_ev)
    ev_x = np.zeros(cap_ev, dtype=np.int64)
    fstate = np.array([state.time, state.int_f, state.int_g, state.f_now, state.g_now])
    istate = np.zeros(8, dtype=np.int64)
    istate[K.CK_POS] = 0
    istate[K.EV_POS] = 0
    chunk = 4096
    saved = state.rng.bit_generator.state
    uniforms = state.rng.random(chunk)
    consumed = 0  # uniforms used from earlier chunks

    def load():
        istate[K.TIP] = buf.hi - buf.base
        istate[K.LEFT] = buf.lo - buf.base
        istate[K.MASS] = buf.mass
        istate[K.EVENTS] = state.event_count
        istate[K.QV] = state.qv

    def unload():
        buf.hi = int(istate[K.TIP]) + buf.base
        buf.lo = int(istate[K.LEFT]) + buf.base
        buf.mass = int(istate[K.MASS])
        state.event_count = int(istate[K.EVENTS])
        state.qv = int(istate[K.QV])
        state.time, state.int_f, state.int_g, state.f_now, state.g_now = (float(v) for v in fstate)

    load()
    while True:
        status = K.advance(buf.data, state.rates, state.tree, state.table, state.cap,
                           state.I, state.R, state.margin, buf.base, t_end,
                           uniforms, ck, ck_out, ev_t, ev_x, fstate, istate)
        unload()
        if status == K.DONE:
            break
        if status == K.NEED_UNIFORMS:
            used = int(istate[K.U_POS])
            consumed += used
            chunk = min(chunk * 2, 1 << 20)
            uniforms = np.concatenate([uniforms[used:], state.rng.random(chunk)])
            istate[K.U_POS] = 0
        elif status == K.NEED_GROW:
            state._ensure_room()
            load()
        elif status == K.NEED_EVENT_SPACE:
            ev_t = np.concatenate([ev_t, np.zeros(len(ev_t))])
            ev_x = np.concatenate([ev_x, np.zeros(len(ev_x), dtype=np.int64)])
        else:  # pragma: no cover - unreachable from a nonempty start
            raise FrozenError("total rate is zero")
    # leave the generator exactly where the reference loop would
    consumed += int(istate[K.U_POS])
    state.rng.bit_generator.state = saved
    if consumed:
        state.rng.random(consumed)
    n_ev = int(istate[K.EV_POS])
    if record:
        return ck_out, ev_t[:n_ev].copy(), ev_x[:n_ev].copy()
    return ck_out, None, None


def simulate(model: RateModel, initial: Configuration, t_end: float, seed: int,
             checkpoint_times: Sequence[float] | None = None, record_events: bool = True,
             backend: str = "auto") -> Trajectory:
    """Run one trajectory from ``initial`` up to ``t_end``."""
    state = SimState(model, initial, seed, use_table=backend != "reference")
    return run_until(state, t_end, checkpoint_times, record_events, backend)


def replicate(model: RateModel, initial: Configuration, t_end: float, n_runs: int,
              base_seed: int, parallelism: int = 1,
              checkpoint_times: Sequence[float] | None = None,
              record_events: bool = True, backend: str = "auto") -> list[Trajectory]:
    """``n_runs`` independent trajectories seeded by :func:`derive_seeds`.

    The result is ordered by run index and does not depend on
    ``parallelism`` (runs are dispatched to threads; the compiled loop
    releases the GIL).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = derive_seeds(base_seed, n_runs)
    if backend != "reference":
        rate_table(model)  # build once before fanning out

    def one(seed):
        return simulate(model, initial, t_end, seed, checkpoint_times, record_events, backend)

    if parallelism <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, seeds))

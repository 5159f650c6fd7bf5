"""Exact transient law of the birth process on a finite window.

The chain lives on the occupancy vectors of ``[-L, L]``; sites outside the
window are empty and never receive births.  The transient distribution is
computed by uniformization,

    p(t) = sum_k Poisson(k; Lambda t) * p(0) P^k,    P = I + Q / Lambda,

truncating the Poisson series once the remaining weight is below the
requested total-variation tolerance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .lattice import Configuration
from .rates import EnumerationInfeasible, RateModel, neighbourhood_block


@dataclass
class TruncatedChain:
    """Generator of the window-restricted chain.

    State index ``sum_j eta(j - L) * (cap + 1) ** j`` for ``j = 0 .. 2L``.
    """

    L: int
    cap: int
    generator: sparse.csr_matrix
    model: str

    @property
    def n_sites(self) -> int:
        return 2 * self.L + 1

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.L, self.L + 1)

    def index(self, config: Configuration) -> int:
        """State index of ``config``, which must fit in the window."""
        if not config.is_empty and (config.leftmost < -self.L or config.tip > self.L):
            raise ValueError("configuration does not fit in the window")
        code = 0
        for x in range(self.L, -self.L - 1, -1):
            code = code * (self.cap + 1) + config[x]
        return code

    def configuration(self, index: int) -> Configuration:
        digits = []
        for _ in range(self.n_sites):
            index, d = divmod(index, self.cap + 1)
            digits.append(d)
        return Configuration.build(-self.L, digits, self.cap)

    def digits(self) -> np.ndarray:
        """Occupancy matrix, one row per state."""
        return neighbourhood_block(0, self.n_states, self.n_sites, self.cap)

    def exit_rates(self) -> np.ndarray:
        return -self.generator.diagonal()


def build_truncation(model: RateModel, L: int, budget: int = 2_000_000) -> TruncatedChain:
    """Sparse generator of ``model`` restricted to ``[-L, L]``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    W = 2 * L + 1
    base = model.cap + 1
    n = base ** W
    if n > budget:
        raise EnumerationInfeasible(f"{n} states exceed the budget of {budget}")
    I = model.interaction_range
    states = neighbourhood_block(0, n, W, model.cap)
    padded = np.zeros((n, W + 2 * I), dtype=np.int64)
    padded[:, I : I + W] = states
    idx = np.arange(n, dtype=np.int64)
    rows, cols, vals = [], [], []
    for j in range(W):
        r = model.local_rates(padded[:, j : j + 2 * I + 1])
        hit = r > 0
        if np.any(states[hit, j] >= model.cap):
            raise ValueError("model gives a positive rate at a saturated site")
        rows.append(idx[hit])
        cols.append(idx[hit] + base ** j)
        vals.append(r[hit])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    out = np.bincount(rows, weights=vals, minlength=n)
    Q = sparse.coo_matrix(
        (np.concatenate([vals, -out]), (np.concatenate([rows, idx]), np.concatenate([cols, idx]))),
        shape=(n, n),
    ).tocsr()
    return TruncatedChain(L, model.cap, Q, model.describe())


@dataclass
class OracleResult:
    time: float
    distribution: np.ndarray
    chain: TruncatedChain
    tol: float
    terms: int

    def _digits(self):
        if not hasattr(self, "_digit_cache"):
            self._digit_cache = self.chain.digits()
        return self._digit_cache

    @property
    def site_means(self) -> np.ndarray:
        """``E[eta_t(x)]`` for ``x = -L .. L``."""
        return self.distribution @ self._digits()

    @property
    def tip_law(self) -> dict[int, float]:
        """Law of the rightmost occupied site (states with no particle are skipped)."""
        digits = self._digits()
        occupied = digits > 0
        has = occupied.any(axis=1)
        last = self.chain.n_sites - 1 - np.argmax(occupied[:, ::-1], axis=1)
        law = np.bincount(last[has], weights=self.distribution[has], minlength=self.chain.n_sites)
        return {int(x): float(p) for x, p in zip(self.chain.sites, law)}

    @property
    def mean_tip(self) -> float:
        law = self.tip_law
        return math.fsum(x * p for x, p in law.items())

    @property
    def tip_second_moment(self) -> float:
        return math.fsum(x * x * p for x, p in self.tip_law.items())

    @property
    def mean_mass(self) -> float:
        return float(self.distribution @ self._digits().sum(axis=1))


def poisson_weights(mu: float, tol: float) -> np.ndarray:
    """Poisson(mu) pmf from 0 up to the first k whose upper tail is <= tol."""
    if mu == 0:
        return np.array([1.0])
    k_max = int(mu + 10 * math.sqrt(mu)) + 20
    while poisson.sf(k_max, mu) > tol:
        k_max *= 2
    k = np.arange(k_max + 1)
    tail = poisson.sf(k, mu)
    stop = int(np.argmax(tail <= tol))
    return poisson.pmf(k[: stop + 1], mu)


def transient(chain: TruncatedChain, initial, t: float, tol: float = 1e-10) -> OracleResult:
    """Law of the chain at time ``t``, started from ``initial``.

    ``initial`` is a state index, a :class:`Configuration`, or a probability
    vector.  The result is within ``tol`` of the exact law in total variation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = chain.n_states
    if isinstance(initial, Configuration):
        p0 = np.zeros(n)
        p0[chain.index(initial)] = 1.0
    elif np.isscalar(initial):
        p0 = np.zeros(n)
        p0[int(initial)] = 1.0
    else:
        p0 = np.asarray(initial, dtype=float).copy()
    exits = chain.exit_rates()
    lam = float(exits.max()) if len(exits) else 0.0
    if t == 0 or lam == 0:
        return OracleResult(t, p0, chain, tol, 1)
    # renormalization below can double the truncation error
    weights = poisson_weights(lam * t, tol / 2)
    PT = (sparse.identity(n, format="csr") + chain.generator / lam).T.tocsr()
    v = p0
    acc = weights[0] * v
    for w in weights[1:]:
        v = PT @ v
        acc += w * v
    acc /= weights.sum()
    np.clip(acc, 0.0, None, out=acc)
    return OracleResult(t, acc, chain, tol, len(weights))


def escape_bound(upper_rate: float, R: int, L: int, t: float, reach: int = 0) -> float:
    """Upper bound on the chance that the infinite process places a particle
    outside ``[-L, L]`` by time ``t`` when started inside ``[-reach, reach]``.

    The tip advances by at most ``R`` per jump and jumps at total rate at
    most ``R * upper_rate``; same for the leftmost site.
    """
    jumps = math.ceil((L + 1 - reach) / R)
    return min(1.0, 2.0 * float(poisson.sf(jumps - 1, R * upper_rate * t)))


def write_golden(path, result: OracleResult, meta: dict) -> None:
    """CSV ``state_index,probability`` preceded by a ``# {json}`` header line."""
    header = dict(meta)
    header.update({"model": result.chain.model, "L": result.chain.L, "t": result.time,
                   "tol": result.tol})
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write("state_index,probability\n")
        for i, p in enumerate(result.distribution):
            if p > 0:
                fh.write(f"{i},{float(p)!r}\n")


def read_golden(path) -> tuple[dict, dict[int, float]]:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("golden file lacks a metadata header")
        meta = json.loads(first[2:])
        if fh.readline().strip() != "state_index,probability":
            raise ValueError("golden file lacks the column header")
        probs = {}
        for line in fh:
            i, p = line.strip().split(",")
            probs[int(i)] = float(p)
    return meta, probs

"""Birth-rate models ``b(x, eta)`` with finite range and occupancy cap.

Every model exposes two evaluation paths:

* :meth:`RateModel.rate` evaluates one site of any configuration-like object
  (anything with ``config[x] -> occupancy``).  This is the reference path.
* :meth:`RateModel.local_rates` evaluates many local neighbourhoods at once,
  each row holding the occupancies on ``[x - I, x + I]`` where ``I`` is the
  interaction radius.  Translation invariance and locality make this
  equivalent to :meth:`rate`; the compiled simulator and the oracle use it.

Two radii are tracked separately.  ``range`` (``R``) is the birth reach: a
site can receive a birth iff it lies within ``R`` of an occupied site.
``interaction_range`` (``I >= R``) is the locality radius: the rate at ``x``
depends on occupancies in ``[x - I, x + I]`` only.  For free branching they
coincide.  For the fecundity/establishment rate the parent's crowding term
reaches one fecundity radius beyond the parent, so ``I = r_a + r_psi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import Configuration


class EnumerationInfeasible(RuntimeError):
    """Raised when an exhaustive enumeration would exceed its budget."""


@dataclass(frozen=True)
class Kernel:
    """Finitely supported weights on the integers.

    ``weights[radius + d]`` is the value at offset ``d`` for ``|d| <= radius``.
    """

    radius: int
    weights: tuple[float, ...]

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("kernel radius must be >= 0")
        if len(self.weights) != 2 * self.radius + 1:
            raise ValueError(
                f"kernel of radius {self.radius} needs {2 * self.radius + 1} weights, "
                f"got {len(self.weights)}"
            )
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise ValueError("kernel weights must be finite and nonnegative")

    @classmethod
    def indicator(cls, radius: int, value: float = 1.0) -> Kernel:
        """``value * 1{|d| <= radius}``."""
        return cls(radius, (float(value),) * (2 * radius + 1))

    @classmethod
    def zero(cls) -> Kernel:
        return cls(0, (0.0,))

    def __call__(self, d: int) -> float:
        if -self.radius <= d <= self.radius:
            return self.weights[self.radius + d]
        return 0.0

    def scaled(self, c: float) -> Kernel:
        return Kernel(self.radius, tuple(c * w for w in self.weights))

    @property
    def support_radius(self) -> int:
        """Largest ``|d|`` with a nonzero weight, or -1 for the zero kernel."""
        r = -1
        for i, w in enumerate(self.weights):
            if w:
                r = max(r, abs(i - self.radius))
        return r

    @property
    def total(self) -> float:
        return sum(self.weights)

    def offsets(self):
        """Nonzero ``(d, weight)`` pairs in increasing ``d``."""
        return [(i - self.radius, w) for i, w in enumerate(self.weights) if w]

    def format(self) -> str:
        return f"{self.radius}: " + " ".join(repr(w) for w in self.weights)

    @classmethod
    def parse(cls, text: str) -> Kernel:
        """Inverse of :meth:`format`: ``"radius: w w w"``."""
        head, sep, body = text.partition(":")
        if not sep:
            raise ValueError(f"kernel literal needs 'radius: weights', got {text!r}")
        return cls(int(head), tuple(float(tok) for tok in body.split()))


def crowding_shape() -> Kernel:
    """``1{d = 0} + 1/2 * 1{|d| = 1}``, the shape used for both damping kernels."""
    return Kernel(1, (0.5, 1.0, 0.5))


class RateModel:
    """Base class for birth rates.  Subclasses implement :meth:`rate`."""

    range: int
    cap: int
    interaction_range: int
    translation_invariant: bool = True

    def rate(self, x: int, config) -> float:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__

    def local_rates(self, neighbourhoods: np.ndarray) -> np.ndarray:
        """Rates at the centre of each row of ``neighbourhoods``.

        Rows have length ``2 * interaction_range + 1``.  The default loops
        over :meth:`rate`; subclasses override it with vectorized code.
        """
        neighbourhoods = np.asarray(neighbourhoods)
        i = self.interaction_range
        out = np.empty(len(neighbourhoods))
        for k, row in enumerate(neighbourhoods):
            out[k] = self.rate(0, Configuration.build(-i, row, self.cap))
        return out

    def table_size(self) -> int:
        return (self.cap + 1) ** (2 * self.interaction_range + 1)

    def tabulate(self, budget: int = 1 << 22) -> np.ndarray:
        """Rates for every local neighbourhood, indexed by base-(cap+1) code.

        The code of occupancies ``v_0 .. v_{2I}`` (site ``x - I + j`` holds
        ``v_j``) is ``sum(v_j * (cap + 1) ** j)``.
        """
        size = self.table_size()
        if size > budget:
            raise EnumerationInfeasible(
                f"rate table has {size} entries, budget is {budget}"
            )
        out = np.empty(size)
        width = 2 * self.interaction_range + 1
        chunk = 1 << 18
        for start in range(0, size, chunk):
            stop = min(size, start + chunk)
            out[start:stop] = self.local_rates(neighbourhood_block(start, stop, width, self.cap))
        return out


def neighbourhood_block(start: int, stop: int, width: int, cap: int) -> np.ndarray:
    """Digit rows for codes ``start .. stop-1`` in base ``cap + 1``."""
    codes = np.arange(start, stop, dtype=np.int64)
    rows = np.empty((stop - start, width), dtype=np.int64)
    base = cap + 1
    for j in range(width):
        rows[:, j] = codes % base
        codes //= base
    return rows


def free_branching_rate(a: Kernel, x: int, config, cap: int) -> float:
    """``sum_y a(x - y) eta(y)``, zero at a saturated site."""
    if config[x] >= cap:
        return 0.0
    total = 0.0
    for d, w in a.offsets():
        n = config[x - d]
        if n:
            total += w * n
    return total


@dataclass(frozen=True)
class FecEstParams:
    """Dispersal kernel plus establishment/fecundity damping.

    The effective damping kernels are ``c_est * establishment`` (around the
    birth site) and ``c_fec * fecundity`` (around the parent).
    """

    dispersal: Kernel
    establishment: Kernel = field(default_factory=crowding_shape)
    fecundity: Kernel = field(default_factory=crowding_shape)
    c_fec: float = 0.0
    c_est: float = 0.0

    def __post_init__(self):
        if self.dispersal.total <= 0:
            raise ValueError("dispersal kernel must have positive mass")
        if self.c_fec < 0 or self.c_est < 0:
            raise ValueError("c_fec and c_est must be nonnegative")

    @property
    def phi(self) -> Kernel:
        return self.establishment.scaled(self.c_est)

    @property
    def psi(self) -> Kernel:
        return self.fecundity.scaled(self.c_fec)


def fec_est_rate(params: FecEstParams, x: int, config, cap: int) -> float:
    """``exp(-sum_u phi(u-x) eta(u)) * sum_y a(x-y) eta(y) exp(-sum_v psi(v-y) eta(v))``."""
    if config[x] >= cap:
        return 0.0
    phi = params.phi.offsets()
    psi = params.psi.offsets()
    crowd = 0.0
    for d, w in phi:
        crowd += w * config[x + d]
    total = 0.0
    for d, w in params.dispersal.offsets():
        y = x - d
        n = config[y]
        if n:
            damp = 0.0
            for e, v in psi:
                damp += v * config[y + e]
            total += w * n * math.exp(-damp)
    return math.exp(-crowd) * total


class FreeBranchingModel(RateModel):
    def __init__(self, a: Kernel, cap: int, range: int | None = None):
        if a.total <= 0:
            raise ValueError("dispersal kernel must have positive mass")
        self.a = a
        self.cap = int(cap)
        self.range = a.support_radius if range is None else int(range)
        self.interaction_range = self.range
        if self.cap < 1 or self.range < 0:
            raise ValueError("cap must be >= 1 and range >= 0")

    def rate(self, x: int, config) -> float:
        return free_branching_rate(self.a, x, config, self.cap)

    def local_rates(self, neighbourhoods: np.ndarray) -> np.ndarray:
        nb = np.asarray(neighbourhoods, dtype=np.int64)
        i = self.interaction_range
        out = np.zeros(len(nb))
        for d, w in self.a.offsets():
            if abs(d) <= i:
                out += w * nb[:, i - d]
        out[nb[:, i] >= self.cap] = 0.0
        return out

    def describe(self) -> str:
        return f"free_branching(cap={self.cap}, a={self.a.format()})"


class FecEstModel(RateModel):
    """Birth rate regulated through fecundity and establishment.

    ``range`` and ``interaction_range`` are derived from the kernels unless
    given explicitly; explicit values are what :func:`check_conditions`
    validates.
    """

    def __init__(self, params: FecEstParams, cap: int, range: int | None = None,
                 interaction_range: int | None = None):
        self.params = params
        self.cap = int(cap)
        ra = params.dispersal.support_radius
        rphi = params.phi.support_radius
        rpsi = params.psi.support_radius
        derived = max(ra, rphi, ra + rpsi if rpsi >= 0 else ra)
        self.range = ra if range is None else int(range)
        self.interaction_range = derived if interaction_range is None else int(interaction_range)
        if self.cap < 1:
            raise ValueError("cap must be >= 1")

    def rate(self, x: int, config) -> float:
        return fec_est_rate(self.params, x, config, self.cap)

    def local_rates(self, neighbourhoods: np.ndarray) -> np.ndarray:
        nb = np.asarray(neighbourhoods, dtype=np.int64)
        i = self.interaction_range
        width = nb.shape[1]

        def col(k):
            return nb[:, k] if 0 <= k < width else np.zeros(len(nb), dtype=np.int64)

        crowd = np.zeros(len(nb))
        for d, w in self.params.phi.offsets():
            crowd += w * col(i + d)
        total = np.zeros(len(nb))
        psi = self.params.psi.offsets()
        for d, w in self.params.dispersal.offsets():
            n = col(i - d)
            damp = np.zeros(len(nb))
            for e, v in psi:
                damp += v * col(i - d + e)
            total += np.where(n > 0, w * n * np.exp(-damp), 0.0)
        out = np.exp(-crowd) * total
        out[nb[:, i] >= self.cap] = 0.0
        return out

    def describe(self) -> str:
        p = self.params
        return (
            f"fec_est(cap={self.cap}, c_fec={p.c_fec!r}, c_est={p.c_est!r}, "
            f"a={p.dispersal.format()}, establishment={p.establishment.format()}, "
            f"fecundity={p.fecundity.format()})"
        )


class TableModel(RateModel):
    """Custom rate given by a full table over local neighbourhoods.

    ``table[code]`` is the rate at the centre of the neighbourhood with the
    given base-(cap+1) code (see :meth:`RateModel.tabulate`).
    """

    def __init__(self, table, cap: int, range: int, interaction_range: int | None = None,
                 name: str = "table"):
        self.cap = int(cap)
        self.range = int(range)
        self.interaction_range = self.range if interaction_range is None else int(interaction_range)
        self.table = np.asarray(table, dtype=float)
        self.name = name
        if self.table.shape != (self.table_size(),):
            raise ValueError(f"table must have {self.table_size()} entries")

    def _code(self, x: int, config) -> int:
        base = self.cap + 1
        code = 0
        for j in range(2 * self.interaction_range, -1, -1):
            code = code * base + config[x - self.interaction_range + j]
        return code

    def rate(self, x: int, config) -> float:
        return float(self.table[self._code(x, config)])

    def local_rates(self, neighbourhoods: np.ndarray) -> np.ndarray:
        nb = np.asarray(neighbourhoods, dtype=np.int64)
        powers = (self.cap + 1) ** np.arange(nb.shape[1], dtype=np.int64)
        return self.table[nb @ powers]

    def tabulate(self, budget: int = 1 << 22) -> np.ndarray:
        return self.table

    def describe(self) -> str:
        return f"{self.name}(cap={self.cap}, range={self.range}, I={self.interaction_range})"


class LocalRuleModel(RateModel):
    """Rate from a Python callable on the local neighbourhood tuple.

    ``rule(values)`` receives the occupancies on ``[x - I, x + I]``.
    """

    def __init__(self, rule: Callable[[tuple[int, ...]], float], cap: int, range: int,
                 interaction_range: int | None = None, name: str = "rule"):
        self.rule = rule
        self.cap = int(cap)
        self.range = int(range)
        self.interaction_range = self.range if interaction_range is None else int(interaction_range)
        self.name = name

    def rate(self, x: int, config) -> float:
        i = self.interaction_range
        return float(self.rule(tuple(config[y] for y in range(x - i, x + i + 1))))

    def local_rates(self, neighbourhoods: np.ndarray) -> np.ndarray:
        return np.array([float(self.rule(tuple(int(v) for v in row))) for row in neighbourhoods])

    def describe(self) -> str:
        return self.name


class ScaledModel(RateModel):
    """``factor * b``."""

    def __init__(self, model: RateModel, factor: float):
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        self.model = model
        self.factor = float(factor)
        self.cap = model.cap
        self.range = model.range
        self.interaction_range = model.interaction_range
        self.translation_invariant = model.translation_invariant

    def rate(self, x, config):
        return self.factor * self.model.rate(x, config)

    def local_rates(self, neighbourhoods):
        return self.factor * self.model.local_rates(neighbourhoods)

    def describe(self):
        return f"{self.factor!r}*{self.model.describe()}"


class _Reflected:
    __slots__ = ("config",)

    def __init__(self, config):
        self.config = config

    def __getitem__(self, x):
        return self.config[-x]


class MirroredModel(RateModel):
    """The reflected model ``b~(x, eta) = b(-x, eta~)`` with ``eta~(y) = eta(-y)``.

    Running the rightward machinery on the mirrored model and lattice gives
    the leftward front.
    """

    def __init__(self, model: RateModel):
        self.model = model
        self.cap = model.cap
        self.range = model.range
        self.interaction_range = model.interaction_range
        self.translation_invariant = model.translation_invariant

    def rate(self, x, config):
        return self.model.rate(-x, _Reflected(config))

    def local_rates(self, neighbourhoods):
        return self.model.local_rates(np.asarray(neighbourhoods)[:, ::-1])

    def describe(self):
        return f"mirror({self.model.describe()})"


class _Restricted:
    __slots__ = ("config", "lo", "hi")

    def __init__(self, config, lo, hi):
        self.config, self.lo, self.hi = config, lo, hi

    def __getitem__(self, x):
        return self.config[x] if self.lo <= x <= self.hi else 0


class WindowedModel(RateModel):
    """``model`` restricted to sites ``[lo, hi]``.

    Sites outside the window never receive births and are read as empty.
    This is the finite chain the oracle solves exactly, so simulating it
    gives an oracle comparison without boundary bias.
    """

    translation_invariant = False

    def __init__(self, model: RateModel, lo: int, hi: int):
        self.model = model
        self.lo, self.hi = int(lo), int(hi)
        self.cap = model.cap
        self.range = model.range
        self.interaction_range = model.interaction_range

    def rate(self, x, config):
        if not self.lo <= x <= self.hi:
            return 0.0
        return self.model.rate(x, _Restricted(config, self.lo, self.hi))

    def describe(self):
        return f"window[{self.lo},{self.hi}]({self.model.describe()})"


def standard_params(c_fec: float, c_est: float) -> FecEstParams:
    """``a = 1{|d| <= 3}`` with both damping kernels shaped ``1{d=0} + 1/2 1{|d|=1}``."""
    return FecEstParams(Kernel.indicator(3), crowding_shape(), crowding_shape(), c_fec, c_est)


def standard_model(c_fec: float, c_est: float) -> FecEstModel:
    """The regulated model with ``N = 3`` and birth reach ``R = 3``."""
    return FecEstModel(standard_params(c_fec, c_est), cap=3)


# --- condition checks -----------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


@dataclass
class ConditionReport:
    trials: int
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.kind] = out.get(v.kind, 0) + 1
        return out


def _random_config(rng: np.random.Generator, lo: int, hi: int, cap: int) -> Configuration:
    density = rng.random()
    width = hi - lo + 1
    occupied = rng.random(width) < density
    values = rng.integers(1, cap + 1, size=width) * occupied
    return Configuration.build(lo, values.tolist(), cap)


def check_conditions(model: RateModel, trials: int = 1000, seed: int = 0,
                     max_violations: int = 100) -> ConditionReport:
    """Randomized check of nonnegativity, the cap rule, locality,
    translation invariance and non-degeneracy.

    Each trial draws a configuration on a window of half-width
    ``2 * max(R, I)`` around a random site, at a random density.  Locality
    is probed by resampling everything outside ``[x - I, x + I]``;
    translation invariance compares bit-for-bit.  Saturated sites are exempt
    from the non-degeneracy "if" direction since their rate must be zero.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    N, R, I = model.cap, model.range, model.interaction_range
    half = 2 * max(R, I, 1)
    violations: list[Violation] = []

    def flag(kind, detail):
        if len(violations) < max_violations:
            violations.append(Violation(kind, detail))

    for _ in range(trials):
        x = int(rng.integers(-50, 51))
        eta = _random_config(rng, x - half, x + half, N)
        b = model.rate(x, eta)
        if not (math.isfinite(b) and b >= 0):
            flag("nonnegativity", f"b({x}, {eta.dumps()}) = {b!r}")
            continue

        if eta[x] == N and b != 0:
            flag("cap", f"b({x}, {eta.dumps()}) = {b!r} at a saturated site")

        near = any(eta[y] > 0 for y in range(x - R, x + R + 1))
        if eta[x] < N and (b > 0) != near:
            flag("non-degeneracy",
                 f"b({x}, {eta.dumps()}) = {b!r} but occupied-within-R is {near}")

        # resample the far field, keep [x - I, x + I]
        other = _random_config(rng, x - half, x + half, N)
        merged = {y: (eta[y] if abs(y - x) <= I else other[y])
                  for y in range(x - half, x + half + 1)}
        b2 = model.rate(x, Configuration.from_sites(merged, N))
        if b2 != b:
            flag("locality", f"b({x}) changed from {b!r} to {b2!r} outside radius {I}")

        y = int(rng.integers(-100, 101))
        b3 = model.rate(x + y, eta.shift(y))
        if b3 != b:
            flag("translation", f"b({x + y}, eta shifted by {y}) = {b3!r} != {b!r}")

    return ConditionReport(trials, violations)


# --- bounds ---------------------------------------------------------------


@dataclass(frozen=True)
class RateBounds:
    upper: float
    lower: float


def compute_bounds(model: RateModel, budget: int = 10**8) -> RateBounds:
    """Exact sup and admissible inf of ``b`` by enumerating neighbourhoods.

    By locality and translation invariance it suffices to enumerate the
    occupancies on ``[-I, I]`` around site 0.  The upper bound is the max over
    all of them; the lower bound is the min over those with ``eta(0) < N``
    and an occupied site within ``R`` of 0.
    """
    size = model.table_size()
    if size > budget:
        raise EnumerationInfeasible(
            f"enumeration infeasible: {size} neighbourhoods exceed budget {budget}"
        )
    i, r, n = model.interaction_range, model.range, model.cap
    width = 2 * i + 1
    upper, lower = 0.0, math.inf
    chunk = 1 << 18
    for start in range(0, size, chunk):
        stop = min(size, start + chunk)
        rows = neighbourhood_block(start, stop, width, n)
        rates = model.local_rates(rows)
        upper = max(upper, float(rates.max()))
        admissible = (rows[:, i] < n) & (rows[:, i - r : i + r + 1] > 0).any(axis=1)
        if admissible.any():
            lower = min(lower, float(rates[admissible].min()))
    return RateBounds(upper, lower)

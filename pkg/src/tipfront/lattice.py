"""Finite-support occupancy configurations on the integer lattice.

A configuration assigns to every site ``x`` an occupancy in ``{0, ..., cap}``
and is zero outside a finite window.  :class:`Configuration` is the immutable
value type used across the package; :class:`LatticeBuffer` is the mutable
window with amortized doubling at both ends that simulation runs own.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class EmptyConfigurationError(ValueError):
    """Raised when an operation needs at least one occupied site."""


@dataclass(frozen=True)
class Configuration:
    """Occupancies ``cells[i]`` at lattice sites ``origin_offset + i``.

    The window is tight: the first and last cells are nonzero unless the
    configuration is empty, in which case ``cells == ()``.
    """

    origin_offset: int
    cells: tuple[int, ...]
    cap: int

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError(f"cap must be >= 1, got {self.cap}")
        for v in self.cells:
            if not 0 <= v <= self.cap:
                raise ValueError(f"occupancy {v} outside [0, {self.cap}]")
        if self.cells and (self.cells[0] == 0 or self.cells[-1] == 0):
            raise ValueError("window is not tight; use Configuration.build")
        if not self.cells and self.origin_offset != 0:
            raise ValueError("empty configuration must have origin_offset 0")

    @classmethod
    def build(cls, origin_offset: int, cells: Iterable[int], cap: int) -> Configuration:
        """Construct from an arbitrary window, trimming zero margins."""
        vals = [int(v) for v in cells]
        lo, hi = 0, len(vals)
        while lo < hi and vals[lo] == 0:
            lo += 1
        while hi > lo and vals[hi - 1] == 0:
            hi -= 1
        if lo == hi:
            return cls(0, (), cap)
        return cls(int(origin_offset) + lo, tuple(vals[lo:hi]), cap)

    @classmethod
    def from_sites(cls, occupancy: dict[int, int], cap: int) -> Configuration:
        """Construct from a ``{site: occupancy}`` mapping."""
        occupied = {x: v for x, v in occupancy.items() if v}
        if not occupied:
            return cls(0, (), cap)
        lo, hi = min(occupied), max(occupied)
        return cls.build(lo, (occupied.get(x, 0) for x in range(lo, hi + 1)), cap)

    @classmethod
    def empty(cls, cap: int) -> Configuration:
        return cls(0, (), cap)

    def __getitem__(self, x: int) -> int:
        i = x - self.origin_offset
        if 0 <= i < len(self.cells):
            return self.cells[i]
        return 0

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def is_empty(self) -> bool:
        return not self.cells

    @property
    def mass(self) -> int:
        return sum(self.cells)

    @property
    def tip(self) -> int:
        if not self.cells:
            raise EmptyConfigurationError("tip of an empty configuration")
        return self.origin_offset + len(self.cells) - 1

    @property
    def leftmost(self) -> int:
        if not self.cells:
            raise EmptyConfigurationError("leftmost site of an empty configuration")
        return self.origin_offset

    def occ(self) -> frozenset[int]:
        return frozenset(self.origin_offset + i for i, v in enumerate(self.cells) if v)

    def increment(self, x: int) -> Configuration:
        """Add one particle at ``x``; a saturated site is left unchanged."""
        if self[x] >= self.cap:
            return self
        if not self.cells:
            return Configuration(x, (1,), self.cap)
        lo = min(self.origin_offset, x)
        hi = max(self.tip, x)
        vals = [self[y] for y in range(lo, hi + 1)]
        vals[x - lo] += 1
        return Configuration(lo, tuple(vals), self.cap)

    def shift(self, y: int) -> Configuration:
        """Translate by ``y``: the result has occupancy ``self[x - y]`` at ``x``."""
        if not self.cells:
            return self
        return Configuration(self.origin_offset + y, self.cells, self.cap)

    def mirror(self) -> Configuration:
        """Reflect through the origin: the result has occupancy ``self[-x]`` at ``x``."""
        if not self.cells:
            return self
        return Configuration(-self.tip, self.cells[::-1], self.cap)

    def restrict(self, lo: int, hi: int) -> Configuration:
        """Zero every site outside ``[lo, hi]``."""
        return Configuration.build(lo, (self[x] for x in range(lo, hi + 1)), self.cap)

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Occupancies on ``[lo, hi]`` as an int64 array."""
        return np.array([self[x] for x in range(lo, hi + 1)], dtype=np.int64)

    def seen_from_tip(self, range_: int) -> SeenFromTip:
        return seen_from_tip(self, range_)

    def dumps(self) -> str:
        """Snapshot line ``offset: v v v``."""
        body = " ".join(str(v) for v in self.cells)
        return f"{self.origin_offset}: {body}" if body else f"{self.origin_offset}:"

    @classmethod
    def loads(cls, line: str, cap: int) -> Configuration:
        head, sep, body = line.strip().partition(":")
        if not sep:
            raise ValueError(f"malformed configuration line: {line!r}")
        return cls.build(int(head), (int(tok) for tok in body.split()), cap)


@dataclass(frozen=True)
class SeenFromTip:
    """The configuration viewed from its rightmost particle.

    ``values[k]`` is the occupancy ``k`` sites below the tip, read down to the
    truncation point.  ``blocked`` records whether truncation happened at a
    run of ``range`` saturated sites (which are then not part of ``values``)
    or at the end of the support.  The flag matters: the rates just right of
    the tip can still see the saturated run, so two configurations with equal
    ``values`` but different ``blocked`` are different states.
    """

    values: tuple[int, ...]
    cap: int
    range: int
    blocked: bool

    def __post_init__(self):
        if not self.values or self.values[0] < 1:
            raise ValueError("the tip entry must be occupied")
        for v in self.values:
            if not 0 <= v <= self.cap:
                raise ValueError(f"occupancy {v} outside [0, {self.cap}]")
        run = 0
        for v in self.values[1:]:
            run = run + 1 if v == self.cap else 0
            if run >= self.range:
                raise ValueError("values contain a saturated block below the tip")
        if self.blocked and len(self.values) > 1 and self.values[-1] == self.cap:
            # it would merge with the block and truncate earlier
            raise ValueError("a blocked view cannot end in a saturated site")

    @property
    def mass(self) -> int:
        return sum(self.values)

    @property
    def is_ground(self) -> bool:
        """Nothing but the tip site above a saturated block.

        This stands in for the all-zero state of the seen-from-tip chain,
        which a representation that always keeps the occupied tip site
        cannot express literally.  The tip occupancy itself is ignored.
        """
        return self.blocked and len(self.values) == 1

    def key(self) -> str:
        """Stable text key, used for hashing in reports."""
        body = " ".join(str(v) for v in self.values)
        return f"{body}|B" if self.blocked else body

    def embed(self) -> Configuration:
        """The canonical configuration with this view, tip at site 0.

        Below the values come ``range`` saturated sites when ``blocked``,
        then zeros; everything right of the tip is empty.
        """
        below = (self.cap,) * self.range if self.blocked else ()
        cells = below + self.values[::-1]
        return Configuration(-(len(cells) - 1), cells, self.cap)


def seen_from_tip(config: Configuration, range_: int) -> SeenFromTip:
    """Occupancies from the tip downward, truncated above the first run of
    ``range_`` consecutive saturated sites strictly below the tip."""
    if range_ < 1:
        raise ValueError(f"range must be >= 1, got {range_}")
    if config.is_empty:
        raise EmptyConfigurationError("seen_from_tip of an empty configuration")
    down = config.cells[::-1]
    cap = config.cap
    run = 0
    for p in range(1, len(down)):
        run = run + 1 if down[p] == cap else 0
        if run == range_:
            return SeenFromTip(tuple(down[: p - range_ + 1]), cap, range_, True)
    return SeenFromTip(tuple(down), cap, range_, False)


def singleton_origin(cap: int) -> Configuration:
    """One particle at site 0."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    return Configuration(0, (1,), cap)


def tip(config: Configuration) -> int:
    return config.tip


def occ(config: Configuration) -> frozenset[int]:
    return config.occ()


def increment(config: Configuration, x: int) -> Configuration:
    return config.increment(x)


def shift(config: Configuration, y: int) -> Configuration:
    return config.shift(y)


class LatticeBuffer:
    """Mutable occupancy window owned by one simulation run.

    Cells live in ``data`` with ``data[i]`` holding site ``base + i``.  The
    buffer keeps at least ``margin`` empty cells on either side of the
    support, doubling its length whenever that would be violated.
    """

    def __init__(self, config: Configuration, margin: int = 16):
        if margin < 1:
            raise ValueError("margin must be positive")
        self.cap = config.cap
        self.margin = margin
        size = _pow2(max(len(config.cells) + 4 * margin, 64))
        self.data = np.zeros(size, dtype=np.int64)
        start = (size - len(config.cells)) // 2
        self.base = config.origin_offset - start if config.cells else -start
        self.data[start : start + len(config.cells)] = config.cells
        if config.cells:
            self.lo = config.origin_offset
            self.hi = config.tip
        else:
            self.lo, self.hi = 1, 0
        self.mass = config.mass

    def __getitem__(self, x: int) -> int:
        i = x - self.base
        if 0 <= i < len(self.data):
            return int(self.data[i])
        return 0

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    @property
    def tip(self) -> int:
        if self.is_empty:
            raise EmptyConfigurationError("tip of an empty configuration")
        return self.hi

    @property
    def leftmost(self) -> int:
        if self.is_empty:
            raise EmptyConfigurationError("leftmost site of an empty configuration")
        return self.lo

    def increment(self, x: int) -> bool:
        """Add a particle at ``x``; returns False if ``x`` was saturated."""
        self.ensure(x - self.margin, x + self.margin)
        i = x - self.base
        if self.data[i] >= self.cap:
            return False
        self.data[i] += 1
        self.mass += 1
        if self.is_empty:
            self.lo = self.hi = x
        else:
            self.lo = min(self.lo, x)
            self.hi = max(self.hi, x)
        return True

    def ensure(self, lo: int, hi: int) -> bool:
        """Grow so that sites ``lo..hi`` are inside the buffer.

        Returns True if the buffer was reallocated (and ``base`` moved).
        """
        if lo - self.base >= 0 and hi - self.base < len(self.data):
            return False
        size = len(self.data)
        need_lo = min(lo, self.base)
        need_hi = max(hi, self.base + size - 1)
        while size < 2 * (need_hi - need_lo + 1):
            size *= 2
        new = np.zeros(size, dtype=np.int64)
        shift_by = (size - (need_hi - need_lo + 1)) // 2
        new_base = need_lo - shift_by
        off = self.base - new_base
        new[off : off + len(self.data)] = self.data
        self.data = new
        self.base = new_base
        return True

    def snapshot(self) -> Configuration:
        if self.is_empty:
            return Configuration.empty(self.cap)
        i, j = self.lo - self.base, self.hi - self.base
        return Configuration(self.lo, tuple(int(v) for v in self.data[i : j + 1]), self.cap)

    def seen_from_tip(self, range_: int) -> SeenFromTip:
        if self.is_empty:
            raise EmptyConfigurationError("seen_from_tip of an empty configuration")
        data, cap = self.data, self.cap
        top, bottom = self.hi - self.base, self.lo - self.base
        run = 0
        for i in range(top - 1, bottom - 1, -1):
            run = run + 1 if data[i] == cap else 0
            if run == range_:
                stop = i + range_
                return SeenFromTip(tuple(int(v) for v in data[top : stop - 1 : -1]), cap, range_, True)
        vals = data[top : bottom - 1 : -1] if bottom > 0 else data[top::-1]
        return SeenFromTip(tuple(int(v) for v in vals), cap, range_, False)


def _pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p

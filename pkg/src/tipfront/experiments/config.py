"""Plain-text ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Kernels are written as
``radius: w_-r ... w_r``, lists as comma-separated values.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from ..rates import FecEstModel, FecEstParams, FreeBranchingModel, Kernel, RateModel, crowding_shape


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    model: str = "fec_est"
    cap: int = 3
    range: int | None = None
    interaction_range: int | None = None
    dispersal: Kernel = field(default_factory=lambda: Kernel.indicator(3))
    establishment: Kernel = field(default_factory=crowding_shape)
    fecundity: Kernel = field(default_factory=crowding_shape)
    c_fec: float = 0.5
    c_est: float = 0.5
    # schedule
    t1: float = 100.0
    t2: float = 1000.0
    checkpoints: tuple[float, ...] = ()
    # replication
    n_runs: int = 20
    base_seed: int = 12345
    parallelism: int = 1
    # sweep
    sweep_mode: str = "random"
    count: int = 100
    # curve
    curve_c_fec: float = 1.0
    curve_points: int = 11
    # trajectories
    trajectory_runs: int = 10
    trajectory_samples: int = 200
    # fluctuations
    fluct_times: tuple[float, ...] = (100.0, 250.0, 400.0, 1000.0, 1600.0)
    fluct_runs: int = 400
    speed_runs: int = 100
    q_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0)
    deviation: float = 0.1
    # validation
    tolerance: float = 3.0
    oracle_L: int = 3
    oracle_t: float = 0.5
    oracle_runs: int = 10000
    oracle_tol: float = 1e-10
    martingale_runs: int = 1000
    martingale_times: tuple[float, ...] = (10.0, 50.0)
    condition_trials: int = 100000
    # output
    out_dir: str = "out"

    def __post_init__(self):
        if self.model not in ("fec_est", "free_branching"):
            raise ConfigError(f"unknown model {self.model!r}")
        if not self.t1 < self.t2:
            raise ConfigError("t1 must be smaller than t2")
        if self.sweep_mode not in ("random", "grid"):
            raise ConfigError(f"sweep_mode must be 'random' or 'grid', got {self.sweep_mode!r}")
        for name in ("count", "n_runs", "parallelism", "curve_points", "trajectory_runs",
                     "trajectory_samples", "fluct_runs", "speed_runs", "cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("c_fec", "c_est", "t1", "tolerance", "oracle_t", "oracle_tol",
                     "curve_c_fec", "deviation", "base_seed", "oracle_L", "condition_trials",
                     "martingale_runs", "oracle_runs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if any(t < 0 for t in self.checkpoints + self.fluct_times + self.martingale_times):
            raise ConfigError("times must be >= 0")

    def build_model(self, c_fec: float | None = None, c_est: float | None = None) -> RateModel:
        if self.model == "free_branching":
            return FreeBranchingModel(self.dispersal, self.cap, self.range)
        params = FecEstParams(
            self.dispersal, self.establishment, self.fecundity,
            self.c_fec if c_fec is None else c_fec,
            self.c_est if c_est is None else c_est,
        )
        return FecEstModel(params, self.cap, self.range, self.interaction_range)

    def with_overrides(self, **kw) -> ExperimentConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, Kernel):
                v = v.format()
            elif isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "Kernel":
            return Kernel.parse(raw)
        if kind.startswith("tuple"):
            return _floats(raw)
        if kind.startswith("int"):
            if raw.lower() == "none":
                return None
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"line {n}: expected 'key = value'")
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc

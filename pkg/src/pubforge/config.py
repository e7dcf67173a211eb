"""Flat key=value run configuration with environment overrides."""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Optional

from .errors import ConfigError

ENV_PREFIX = "PUBFORGE_"

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


@dataclass
class RunConfig:
    # inputs
    corpus: tuple[str, ...] = ()
    format: str = "tabular"              # xml | tabular
    delimiter: str = ","
    entity_table: Optional[str] = None
    histories: Optional[str] = None
    model: Optional[str] = None
    ensemble: Optional[str] = None
    replicates_file: Optional[str] = None
    # windows (years)
    T0: Optional[int] = None
    T1: Optional[int] = None
    t_L: Optional[int] = None
    t_X: Optional[int] = None
    t_Y: Optional[int] = None
    T2: Optional[int] = None
    # model shape
    I: int = 40
    J: Optional[int] = None
    L: Optional[int] = None
    I1_cap: Optional[int] = None
    # fitting
    fit_mode: str = "glm"
    significance_level: float = 0.05
    min_cells: int = 3
    # forecasting
    replicates: int = 1000
    seed: int = 0
    dump_replicates: bool = False
    # evaluation
    n_boot: int = 1000
    ks_grouping: str = "pooled_le10"     # pooled_le10 | per_cohort
    ks_max_history: int = 10
    acf_max_lag: int = 5
    dist_source: str = "mean"            # mean | replicate0
    ci_level: float = 0.95
    # run control
    year_min: int = 1900
    year_max: int = 2100
    test_membership: str = "year"        # year | window
    out_dir: str = "out"
    threads: int = 1

    def validate_windows(self, need_test: bool = False) -> None:
        for name in ("T0", "T1", "t_L", "T2"):
            if getattr(self, name) is None:
                raise ConfigError(f"missing required window key {name}")
        if not (self.T0 < self.T1 < self.t_L <= self.T2):
            raise ConfigError(
                f"windows out of order: need T0 < T1 < t_L <= T2, "
                f"got {self.T0}, {self.T1}, {self.t_L}, {self.T2}"
            )
        if self.L is not None and self.L != self.t_L - self.T1:
            raise ConfigError(f"L={self.L} inconsistent with t_L - T1 = {self.t_L - self.T1}")
        if self.J is not None and self.J != self.T2 - self.T1:
            raise ConfigError(f"J={self.J} inconsistent with T2 - T1 = {self.T2 - self.T1}")
        if need_test:
            if self.t_X is None or self.t_Y is None:
                raise ConfigError("missing required window key t_X or t_Y")
            if not (self.T1 <= self.t_X < self.t_Y <= self.T2):
                raise ConfigError(
                    f"windows out of order: need T1 <= t_X < t_Y <= T2, "
                    f"got t_X={self.t_X}, t_Y={self.t_Y}"
                )

    @property
    def horizon(self) -> int:
        return self.J if self.J is not None else self.T2 - self.T1

    @property
    def train_length(self) -> int:
        return self.L if self.L is not None else self.t_L - self.T1


_INT_KEYS = {"T0", "T1", "t_L", "t_X", "t_Y", "T2", "I", "J", "L", "I1_cap",
             "min_cells", "replicates", "seed", "n_boot", "ks_max_history",
             "acf_max_lag", "year_min", "year_max", "threads"}
_FLOAT_KEYS = {"significance_level", "ci_level"}
_BOOL_KEYS = {"dump_replicates"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key}: expected a number, got {raw!r}")
    if key in _BOOL_KEYS:
        if raw.lower() not in _BOOL:
            raise ConfigError(f"key {key}: expected true/false, got {raw!r}")
        return _BOOL[raw.lower()]
    if key == "corpus":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def parse_config(path, env: dict | None = None) -> RunConfig:
    """Read a `key=value` config file (`#` comments), then apply
    PUBFORGE_<KEY> environment overrides. Unknown keys are an error."""
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, value)
    env = os.environ if env is None else env
    for key in known:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = _coerce(key, env[env_key])
    return RunConfig(**values)

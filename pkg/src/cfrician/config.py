"""Simulation configuration: a flat TOML document of typed scalars and lists.

Every key is optional; omitted keys take the reference scenario values
(M=100 APs, K=40 UEs, 200-sample blocks, 5 pilots, 200 mW per UE,
-94 dBm noise over 20 MHz).
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channel import Estimator, FrameConfig, PowerConfig
from .errors import ConfigError
from .geometry import AreaSpec, ShadowModel

__all__ = ["SimConfig", "parse_config", "load_config", "SCHEMES", "dbm_to_watt"]

SCHEMES = ("ul_single", "ul_lsfd", "dl_coherent", "dl_noncoherent")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SimConfig:
    M: int = 100
    K: int = 40
    tau_c: int = 200
    tau_p: int = 5
    pilot_power_w: float = 0.2
    ul_power_w: float = 0.2
    dl_power_per_ue_w: float = 0.2
    noise_dbm: float = -94.0
    bandwidth_hz: float = 20e6
    side_length_m: float = 1000.0
    wraparound: bool = True
    ap_height_m: float = 12.5
    ue_height_m: float = 1.5
    sigma_sf_db: float = 8.0
    shadow_delta: float = 0.5
    decorrelation_m: float = 100.0
    estimators: tuple = ("mmse", "lmmse", "ls")
    schemes: tuple = SCHEMES
    num_setups: int = 100
    mc_trials: int = 0
    mc_batches: int = 100
    master_seed: int = 0
    output: str = "results"

    def __post_init__(self):
        for name in ("M", "K", "tau_p", "num_setups"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}", key=name)
        if self.tau_c < self.tau_p:
            raise ConfigError(f"tau_c must be >= tau_p ({self.tau_p}), got {self.tau_c}", key="tau_c")
        for name in ("mc_trials", "master_seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", key=name)
        if self.mc_batches < 2:
            raise ConfigError("mc_batches must be >= 2 for error bars", key="mc_batches")
        for name in ("pilot_power_w", "ul_power_w", "dl_power_per_ue_w", "bandwidth_hz", "side_length_m", "decorrelation_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0", key=name)
        for name in ("ap_height_m", "ue_height_m", "sigma_sf_db"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", key=name)
        if not 0.0 <= self.shadow_delta <= 1.0:
            raise ConfigError("shadow_delta must lie in [0, 1]", key="shadow_delta")
        bad = [e for e in self.estimators if e not in {x.value for x in Estimator}]
        if bad or not self.estimators:
            raise ConfigError(f"unknown or empty estimators {bad}", key="estimators")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown or empty schemes {bad}; choose from {list(SCHEMES)}", key="schemes")

    @property
    def noise_w(self) -> float:
        return dbm_to_watt(self.noise_dbm)

    def frame(self) -> FrameConfig:
        return FrameConfig(tau_c=self.tau_c, tau_p=self.tau_p)

    def powers(self) -> PowerConfig:
        return PowerConfig(
            pilot_power=self.pilot_power_w,
            ul_data_power=self.ul_power_w,
            dl_total_power=self.K * self.dl_power_per_ue_w,
            noise_ul=self.noise_w,
            noise_dl=self.noise_w,
        )

    def area(self) -> AreaSpec:
        return AreaSpec(self.side_length_m, self.wraparound, self.ap_height_m, self.ue_height_m)

    def shadow(self) -> ShadowModel:
        return ShadowModel(self.sigma_sf_db, self.shadow_delta, self.decorrelation_m)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["estimators"] = list(self.estimators)
        out["schemes"] = list(self.schemes)
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def _expected_kind(name):
    default = _FIELDS[name].default
    return type(default)


def _coerce(name, value):
    kind = _expected_kind(name)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean, got {type(value).__name__}", key=name)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {type(value).__name__}", key=name)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {type(value).__name__}", key=name)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {type(value).__name__}", key=name)
        return value
    if kind is tuple:
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{name} must be a list of strings", key=name)
        return tuple(v.lower() for v in value)
    raise AssertionError(name)


def _line_of(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^[ \t]*{re.escape(key)}[ \t]*=", re.MULTILINE)
    m = pattern.search(text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def parse_config(text: str) -> SimConfig:
    """Parse a flat TOML document into a validated :class:`SimConfig`.

    Raises
    ------
    ConfigError
        On malformed TOML, unknown keys, type mismatches or constraint
        violations. The message names the key and, where it appears in
        the document, its line.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    try:
        for key, value in doc.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown key '{key}'", key=key)
            if isinstance(value, dict):
                raise ConfigError(f"'{key}' must be a scalar or list, not a table", key=key)
            values[key] = _coerce(key, value)
        return SimConfig(**values)
    except ConfigError as exc:
        if exc.key is not None:
            line = _line_of(text, exc.key)
            where = f"line {line}: " if line is not None else ""
            raise ConfigError(f"{where}{exc.args[0]}", key=exc.key, line=line) from None
        raise


def load_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

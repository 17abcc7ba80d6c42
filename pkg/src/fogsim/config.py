"""Simulation parameters, presets and the flat ``section.key`` config file format.

Defaults reproduce the evaluation settings of the PORA fog model: 2 MHz
channels, -174 dBm/Hz noise, 500 mW transmit budget, 297.62 cycles/bit,
4/8 GHz CPUs, 6/12 Mb/s routing caps and 6 Mb/s cloud links.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

POLICIES = ("pora", "pora-d", "nol", "o2cft", "o2cloud", "random")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _section(name: str, **kw):
    return field(metadata={"section": name}, **kw)


@dataclass(frozen=True)
class SimulationConfig:
    # topology
    n_efn: int = _section("topology", default=80)
    n_cfn: int = _section("topology", default=20)
    n_access: int = _section("topology", default=5)
    region_m: float = _section("topology", default=500.0)
    min_distance_m: float = _section("topology", default=1.0)
    fading_var: float = _section("topology", default=0.0)

    # channel and power
    slot_s: float = _section("channel", default=1.0)
    bandwidth_hz: float = _section("channel", default=2e6)
    noise_dbm_hz: float = _section("channel", default=-174.0)
    p_max_w: float = _section("channel", default=0.5)

    # computation
    cycles_per_bit_efn: float = _section("compute", default=297.62)
    cycles_per_bit_cfn: float = _section("compute", default=297.62)
    f_max_efn_hz: float = _section("compute", default=4e9)
    f_max_cfn_hz: float = _section("compute", default=8e9)
    varsigma: float = _section("compute", default=1e-27)

    # routing caps, bits per second
    b_efn_local_bps: float = _section("caps", default=6e6)
    b_efn_offload_bps: float = _section("caps", default=6e6)
    b_cfn_local_bps: float = _section("caps", default=12e6)
    b_cfn_offload_bps: float = _section("caps", default=12e6)
    cloud_bps: float = _section("caps", default=6e6)

    # traffic
    flow_rate: float = _section("traffic", default=538.0)
    mean_flow_bits: float = _section("traffic", default=13000.0)
    packet_bits: int = _section("traffic", default=4096)
    amax_factor: float = _section("traffic", default=50.0)
    trace_file: str = _section("traffic", default="")
    p_false_alarm: float = _section("traffic", default=0.0)
    p_missed: float = _section("traffic", default=0.0)

    # control
    policy: str = _section("control", default="pora")
    d: int = _section("control", default=0)
    V: float = _section("control", default=1e10)
    W: int = _section("control", default=10)
    dual_tol_rel: float = _section("control", default=1e-9)
    dual_max_iter: int = _section("control", default=200)

    # run
    horizon: int = _section("run", default=50000)
    warmup_fraction: float = _section("run", default=0.1)
    seed_topology: int = _section("run", default=1)
    seed_traffic: int = _section("run", default=2)
    seed_policy: int = _section("run", default=3)

    def __post_init__(self):
        self.validate()

    # derived quantities
    @property
    def noise_w_hz(self) -> float:
        return 10.0 ** ((self.noise_dbm_hz - 30.0) / 10.0)

    @property
    def mean_slot_bits(self) -> float:
        return self.flow_rate * self.mean_flow_bits * self.slot_s

    @property
    def warmup_slots(self) -> int:
        return int(self.horizon * self.warmup_fraction)

    def caps(self) -> dict[str, float]:
        """Per-slot bit caps for routing and the cloud link."""
        t = self.slot_s
        return {
            "efn_local": self.b_efn_local_bps * t,
            "efn_offload": self.b_efn_offload_bps * t,
            "cfn_local": self.b_cfn_local_bps * t,
            "cfn_offload": self.b_cfn_offload_bps * t,
            "cloud": self.cloud_bps * t,
        }

    def validate(self) -> None:
        positive = (
            "n_efn", "n_cfn", "n_access", "region_m", "min_distance_m", "slot_s",
            "bandwidth_hz", "p_max_w", "cycles_per_bit_efn", "cycles_per_bit_cfn",
            "f_max_efn_hz", "f_max_cfn_hz", "varsigma", "b_efn_local_bps",
            "b_efn_offload_bps", "b_cfn_local_bps", "b_cfn_offload_bps", "cloud_bps",
            "mean_flow_bits", "packet_bits", "amax_factor", "V", "dual_tol_rel",
            "dual_max_iter",
        )
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in ("int", int) and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f.name, f"expected an integer, got {value!r}")
            if f.type in ("float", float) and (
                isinstance(value, bool) or not isinstance(value, (int, float))
            ):
                raise ConfigError(f.name, f"expected a number, got {value!r}")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)!r}")
        for name in ("fading_var", "flow_rate", "W", "horizon", "d"):
            if getattr(self, name) < 0:
                raise ConfigError(name, f"must be non-negative, got {getattr(self, name)!r}")
        for name in ("p_false_alarm", "p_missed"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(name, "must be a probability in [0, 1]")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction", "must lie in [0, 1)")
        if self.n_access > self.n_cfn:
            raise ConfigError("n_access", f"{self.n_access} accessible CFNs requested but only {self.n_cfn} exist")
        if self.policy not in POLICIES:
            raise ConfigError("policy", f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        if self.policy == "pora-d" and not 1 <= self.d <= self.n_access:
            raise ConfigError("d", f"pora-d needs 1 <= d <= {self.n_access}, got {self.d}")

    def replace(self, **overrides: Any) -> "SimulationConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(key, "unknown configuration key")
        return dataclasses.replace(self, **overrides)

    def with_seed_offset(self, k: int) -> "SimulationConfig":
        return self.replace(
            seed_topology=self.seed_topology + k,
            seed_traffic=self.seed_traffic + k,
            seed_policy=self.seed_policy + k,
        )

    def as_dict(self) -> dict[str, Any]:
        return {f"{f.metadata['section']}.{f.name}": getattr(self, f.name) for f in fields(self)}

    # file format
    def dumps(self) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for f in fields(self):
            section = f.metadata["section"]
            if not parser.has_section(section):
                parser.add_section(section)
            value = getattr(self, f.name)
            # repr keeps floats bit-exact on reload
            parser.set(section, f.name, repr(value) if isinstance(value, float) else str(value))
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, base: Optional["SimulationConfig"] = None) -> "SimulationConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("<file>", f"malformed config: {exc}") from None
        by_name = {f.name: f for f in fields(cls)}
        values: dict[str, Any] = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                f = by_name.get(key)
                dotted = f"{section}.{key}"
                if f is None or f.metadata["section"] != section:
                    raise ConfigError(dotted, "unknown configuration key")
                values[key] = coerce(dotted, f.type, raw)
        base = base or cls()
        return base.replace(**values)

    @classmethod
    def load(cls, path: str | Path, base: Optional["SimulationConfig"] = None) -> "SimulationConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
        return cls.loads(text, base)


def coerce(key: str, type_name: Any, raw: str) -> Any:
    """Parse a textual value for a field declared as ``type_name``."""
    type_name = getattr(type_name, "__name__", type_name)
    raw = raw.strip()
    try:
        if type_name == "int":
            as_float = float(raw)
            if not as_float.is_integer():
                raise ValueError
            return int(as_float)
        if type_name == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {type_name}") from None
    return raw


PRESETS: dict[str, dict[str, Any]] = {
    "paper": dict(n_efn=80, n_cfn=20, n_access=5, horizon=50000),
    "desk": dict(n_efn=8, n_cfn=2, n_access=2, horizon=10000),
}


def preset(name: str, **overrides: Any) -> SimulationConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return SimulationConfig(**{**PRESETS[name], **overrides})

"""Scenario configuration: defaults, validation and the ``key = value`` text format."""

import dataclasses
import math
from dataclasses import dataclass, fields
from typing import Optional

from .errors import ConfigError

PROTOCOLS = ("undercover", "launch_like", "caodv_like")
ROUTE_MODES = ("per_flow", "per_packet")
SPEED_OF_LIGHT = 299_792_458.0

# (lo, hi) value ranges from the experiment parameter table; used to validate sweeps
PARAM_RANGES = {
    "num_pus": (2, 16),
    "num_sus": (10, 40),
    "num_flows": (1, 16),
    "packet_size": (128, 1518),
    "pu_activity": (0.0, 1.0),
    "rate_per_source": (20e3, 400e3),
    "area_side": (250.0, 1000.0),
}


def free_space_constant(frequency):
    """(lambda / 4 pi)^2 in m^2."""
    wavelength = SPEED_OF_LIGHT / frequency
    return (wavelength / (4.0 * math.pi)) ** 2


@dataclass
class ScenarioConfig:
    num_sus: int = 25
    num_pus: int = 4
    area_side: float = 250.0
    su_range: float = 125.0
    pu_range: float = 140.0
    num_flows: int = 8
    frequency: float = 2.4e9
    effective_bandwidth: float = 1.5e6
    packet_size: int = 512
    pu_activity: float = 0.2
    rate_per_source: float = 100e3
    hello_period: float = 1.0
    beta: float = 0.5
    fsp_constant: Optional[float] = None
    interference_limit: Optional[float] = None
    tx_power: float = 1.0
    noise_variance: float = 1.0
    channel_variance: float = 1.0
    coherence_time: float = 5.0
    protocol: str = "undercover"
    seed: int = 1
    horizon: float = 300.0
    replications: int = 10
    warmup_fraction: float = 0.1
    traffic_stop_fraction: float = 0.95
    rrep_timeout: float = 0.02
    control_delay: float = 0.002
    hello_timeout: float = 3.0
    route_timeout: float = 3.0
    queue_capacity: int = 50
    pu_cycle_min: float = 2.0
    pu_cycle_max: float = 20.0
    max_enumeration_neighbors: int = 12
    max_group_size: int = 10
    elimination: bool = True
    table_samples: int = 20_000
    route_mode: str = "per_flow"
    su_positions: Optional[list] = None
    pu_positions: Optional[list] = None
    flows: Optional[list] = None

    def __post_init__(self):
        if self.fsp_constant is None:
            self.fsp_constant = free_space_constant(self.frequency)
        if self.interference_limit is None:
            self.interference_limit = self.noise_variance

    def validate(self):
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(msg, key=key)

        for key in ("num_sus", "num_pus", "num_flows", "packet_size", "replications",
                    "queue_capacity", "max_enumeration_neighbors", "max_group_size",
                    "table_samples", "seed"):
            value = getattr(self, key)
            need(isinstance(value, int) and not isinstance(value, bool), key, "must be an integer")
        need(self.num_sus >= 1, "num_sus", "need at least one SU")
        need(self.num_pus >= 0, "num_pus", "must be >= 0")
        need(self.num_flows >= 0, "num_flows", "must be >= 0")
        need(self.packet_size > 0, "packet_size", "must be > 0")
        need(self.replications >= 1, "replications", "must be >= 1")
        need(self.queue_capacity >= 1, "queue_capacity", "must be >= 1")
        need(self.max_enumeration_neighbors >= 0, "max_enumeration_neighbors", "must be >= 0")
        need(self.max_group_size >= 1, "max_group_size", "must be >= 1")
        need(self.table_samples >= 10_000, "table_samples", "must be >= 10000")
        need(self.seed >= 0, "seed", "must be >= 0")
        for key in ("area_side", "su_range", "pu_range", "frequency", "effective_bandwidth",
                    "rate_per_source", "hello_period", "fsp_constant", "interference_limit",
                    "tx_power", "noise_variance", "coherence_time", "horizon", "rrep_timeout",
                    "hello_timeout", "route_timeout", "pu_cycle_min", "pu_cycle_max"):
            value = getattr(self, key)
            need(isinstance(value, (int, float)) and math.isfinite(value) and value > 0,
                 key, f"must be a finite number > 0, got {value!r}")
        need(self.control_delay >= 0, "control_delay", "must be >= 0")
        need(self.channel_variance >= 0, "channel_variance", "must be >= 0")
        need(self.pu_cycle_max >= self.pu_cycle_min, "pu_cycle_max", "must be >= pu_cycle_min")
        need(0.0 <= self.pu_activity <= 1.0, "pu_activity", "must lie in [0, 1]")
        need(0.0 <= self.beta <= 1.0, "beta", "must lie in [0, 1]")
        need(0.0 <= self.warmup_fraction < 1.0, "warmup_fraction", "must lie in [0, 1)")
        need(self.warmup_fraction < self.traffic_stop_fraction <= 1.0, "traffic_stop_fraction",
             "must lie in (warmup_fraction, 1]")
        need(self.protocol in PROTOCOLS, "protocol", f"must be one of {', '.join(PROTOCOLS)}")
        need(self.route_mode in ROUTE_MODES, "route_mode", f"must be one of {', '.join(ROUTE_MODES)}")
        if self.su_positions is not None:
            need(len(self.su_positions) == self.num_sus, "su_positions",
                 f"expected {self.num_sus} positions, got {len(self.su_positions)}")
        if self.pu_positions is not None:
            need(len(self.pu_positions) == self.num_pus, "pu_positions",
                 f"expected {self.num_pus} positions, got {len(self.pu_positions)}")
        if self.flows is not None:
            need(len(self.flows) == self.num_flows, "flows",
                 f"expected {self.num_flows} flows, got {len(self.flows)}")
            for src, dst in self.flows:
                need(0 <= src < self.num_sus and 0 <= dst < self.num_sus and src != dst,
                     "flows", f"bad flow {src}>{dst}")
        elif self.num_flows and self.num_sus < 2:
            raise ConfigError("flows need at least two SUs", key="num_flows")
        return self

    def replace(self, **changes):
        cfg = dataclasses.replace(self, **changes)
        # derived defaults follow their inputs unless set explicitly
        if "frequency" in changes and "fsp_constant" not in changes:
            cfg.fsp_constant = free_space_constant(cfg.frequency)
        if "noise_variance" in changes and "interference_limit" not in changes:
            cfg.interference_limit = cfg.noise_variance
        return cfg


_FIELD_TYPES = {
    "num_sus": int, "num_pus": int, "num_flows": int, "packet_size": int, "seed": int,
    "replications": int, "queue_capacity": int, "max_enumeration_neighbors": int,
    "max_group_size": int, "table_samples": int,
    "protocol": str, "route_mode": str, "elimination": bool,
    "su_positions": "points", "pu_positions": "points", "flows": "flows",
}


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_points(text):
    points = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = chunk.split(",")
        points.append((float(x), float(y)))
    return points


def _parse_flows(text):
    flows = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        src, dst = chunk.split(">")
        flows.append((int(src), int(dst)))
    return flows


def parse_value(key, text):
    kind = _FIELD_TYPES.get(key, float)
    if kind is int:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"not an integer: {text!r}")
        return int(value)
    if kind is bool:
        return _parse_bool(text)
    if kind is str:
        return text
    if kind == "points":
        return _parse_points(text)
    if kind == "flows":
        return _parse_flows(text)
    return float(text)


def parse_config(text, base=None):
    """Parse UTF-8 ``key = value`` lines ('#' starts a comment) into a validated config."""
    names = {f.name for f in fields(ScenarioConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in names:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        try:
            values[key] = parse_value(key, value)
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=lineno) from None
    base = base or ScenarioConfig()
    cfg = base.replace(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        if exc.key is not None and exc.line is None:
            lineno = _line_of(text, exc.key)
            raise ConfigError(str(exc).split("] ", 1)[-1], key=exc.key, line=lineno) from None
        raise
    return cfg


def _line_of(text, key):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if line.partition("=")[0].strip() == key:
            return lineno
    return None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0][0], int) and not isinstance(value[0][0], bool) \
                and all(isinstance(v, int) for pair in value for v in pair):
            return "; ".join(f"{a}>{b}" for a, b in value)
        return "; ".join(f"{float(a)!r},{float(b)!r}" for a, b in value)
    return str(value)


def serialize_config(cfg):
    """Inverse of parse_config; omits unset optional lists."""
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name == "flows":
            lines.append("flows = " + "; ".join(f"{a}>{b}" for a, b in value))
            continue
        lines.append(f"{f.name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"

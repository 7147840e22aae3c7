"""Axis sweeps over ScenarioConfig and CSV reporting."""

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .config import PROTOCOLS, PARAM_RANGES, ScenarioConfig
from .core import ChannelModel, RadioConfig
from .errors import ConfigError
from .metric import generate_threshold_table
from .sim import MetricsReport, run

CSV_SCHEMA_VERSION = 1
ROW_KEYS = ["schema_version", "row_type", "axis", "value", "replications"]
AGGREGATES = ("mean", "stderr", "median")


@dataclass
class SweepSpec:
    axis: str
    values: list
    fixed: ScenarioConfig
    protocols: tuple = PROTOCOLS
    # explicit seeds; default is fixed.seed .. fixed.seed + replications - 1
    seeds: Optional[list] = None

    def seed_list(self):
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(self.fixed.seed, self.fixed.seed + self.fixed.replications))

    def validate(self):
        names = {f.name for f in fields(ScenarioConfig)}
        if self.axis not in names or self.axis in ("seed", "protocol"):
            raise ConfigError("not a sweepable field", key=self.axis)
        if not self.values:
            raise ConfigError("no sweep values", key=self.axis)
        lo_hi = PARAM_RANGES.get(self.axis)
        if lo_hi is not None:
            lo, hi = lo_hi
            for v in self.values:
                if not lo <= v <= hi:
                    raise ConfigError(f"value {v!r} outside [{lo}, {hi}]", key=self.axis)
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ConfigError(f"unknown protocol {p!r}", key="protocol")
        if not self.seed_list():
            raise ConfigError("no seeds", key="replications")
        for _, _, _, cfg in self.configs():
            cfg.validate()
        return self

    def configs(self):
        """(value, protocol, seed, config) in emission order."""
        out = []
        for value in self.values:
            for protocol in self.protocols:
                for seed in self.seed_list():
                    cfg = self.fixed.replace(**{self.axis: value, "protocol": protocol, "seed": seed})
                    out.append((value, protocol, seed, cfg))
        return out


def csv_header():
    return ROW_KEYS + MetricsReport.csv_fields()


def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def _aggregate(reports):
    """mean / stderr / median over replications, ignoring NaN entries."""
    out = {kind: {} for kind in AGGREGATES}
    for name in MetricsReport.csv_fields():
        if name in ("protocol", "seed"):
            continue
        vals = np.array([float(getattr(r, name)) for r in reports])
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            mean = stderr = median = math.nan
        else:
            mean = float(np.mean(vals))
            median = float(np.median(vals))
            stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out["mean"][name] = mean
        out["stderr"][name] = stderr
        out["median"][name] = median
    return out


def run_sweep(spec, parallel=1):
    """Run every (value, protocol, seed) point and return the CSV text.

    Replication rows come first in (value, protocol, seed) order, then
    mean, stderr and median rows per (value, protocol). Worker count does
    not affect the output.
    """
    spec.validate()
    points = spec.configs()
    cfgs = [p[3] for p in points]
    if parallel and parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            reports = list(pool.map(run, cfgs))
    else:
        reports = [run(c) for c in cfgs]
    return format_sweep(spec, points, reports)


def format_sweep(spec, points, reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header())
    metric_names = MetricsReport.csv_fields()
    groups = {}
    for (value, protocol, seed, _), rep in zip(points, reports):
        groups.setdefault((value, protocol), []).append(rep)
        row = [CSV_SCHEMA_VERSION, "replication", spec.axis, _fmt(value), 1]
        row += [_fmt(getattr(rep, n)) for n in metric_names]
        writer.writerow(row)
    for (value, protocol), reps in groups.items():
        agg = _aggregate(reps)
        for kind in AGGREGATES:
            row = [CSV_SCHEMA_VERSION, kind, spec.axis, _fmt(value), len(reps)]
            for n in metric_names:
                if n == "protocol":
                    row.append(protocol)
                elif n == "seed":
                    row.append("")
                else:
                    row.append(_fmt(agg[kind][n]))
            writer.writerow(row)
    return buf.getvalue()


def report_csv(report):
    """Single-scenario CSV: header plus one replication row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header())
    row = [CSV_SCHEMA_VERSION, "replication", "", "", 1]
    row += [_fmt(getattr(report, n)) for n in MetricsReport.csv_fields()]
    writer.writerow(row)
    return buf.getvalue()


def read_csv(text):
    """Parse sweep CSV text into a list of dicts (values left as strings)."""
    return list(csv.DictReader(io.StringIO(text)))


def gen_table(max_size=10, max_pus=3, samples=100_000, seed=0, model=None, radio=None):
    """Regenerate the threshold table and render it as text (rows from 1 PU)."""
    model = model or ChannelModel()
    radio = radio or RadioConfig()
    table = generate_threshold_table(model, radio, max_size=max_size, max_pus=max_pus,
                                     samples=samples, rng=np.random.default_rng(seed), min_pus=1)
    return table.to_text(min_pus=1)

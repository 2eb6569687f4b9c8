"""Per-interval training metrics and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields


@dataclass
class MetricsRecord:
    env_step: int
    epoch: int
    mean_raw_intrinsic_reward: float = math.nan
    mean_normalized_reward: float = math.nan
    reward_count: int = 0
    coverage_fraction: float = math.nan
    unique_states_visited: int = 0
    episode_return: float = math.nan
    contrastive_loss: float = math.nan
    wall_clock_ms: float = math.nan


METRIC_FIELDS = [f.name for f in fields(MetricsRecord)]
TIMING_FIELDS = ("wall_clock_ms",)


def format_value(value) -> str:
    """Locale-independent text for a CSV cell."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_metrics_csv(path, records, timing=True) -> None:
    header = [f for f in METRIC_FIELDS if timing or f not in TIMING_FIELDS]
    rows = []
    for rec in records:
        d = asdict(rec)
        rows.append([d[f] for f in header])
    write_csv(path, header, rows)


def read_metrics_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for f in fields(MetricsRecord):
                if f.name not in row:
                    continue
                text = row[f.name]
                kwargs[f.name] = int(text) if f.type in ("int", int) else float(text)
            out.append(MetricsRecord(**kwargs))
    return out

"""Per-iteration training metrics and their CSV serialization.

The CSV column set and order are fixed: iteration, avg_reward,
avg_speed_violation, avg_boundary_violation, avg_log_sum_rss_snr, avg_speed,
avg_height, avg_dist_to_cluster, delta_r. Aggregate files carry the same
metrics as per-iteration mean/std pairs across seeds.
"""

import csv
from dataclasses import dataclass, fields

import numpy as np


@dataclass(frozen=True)
class MetricsRow:
    iteration: int
    avg_reward: float
    avg_speed_violation: float        # fraction of batch steps
    avg_boundary_violation: float     # fraction of batch steps
    avg_log_sum_rss_snr: float        # dB, 10*log10 of the summed uplink SNR
    avg_speed: float                  # m/s, executed speed
    avg_height: float                 # m
    avg_dist_to_cluster: float        # m, planar distance to cluster center
    delta_r: float                    # agent rate / heuristic-placement rate


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow))


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, col) for col in METRICS_COLUMNS])


def read_metrics_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics columns {reader.fieldnames}")
        for rec in reader:
            rows.append(MetricsRow(iteration=int(rec["iteration"]),
                                   **{c: float(rec[c]) for c in METRICS_COLUMNS[1:]}))
    return rows


def aggregate_columns():
    cols = ["iteration"]
    for name in METRICS_COLUMNS[1:]:
        cols += [f"{name}_mean", f"{name}_std"]
    return cols


def write_aggregate_csv(path, per_seed_rows):
    """Write per-iteration mean/std across seeds (population std, ddof=0).

    All seeds must have the same number of rows with matching iteration ids.
    """
    if not per_seed_rows:
        raise ValueError("no seed histories to aggregate")
    lengths = {len(rows) for rows in per_seed_rows}
    if len(lengths) != 1:
        raise ValueError(f"seed histories differ in length: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(aggregate_columns())
        for i in range(lengths.pop()):
            iters = {rows[i].iteration for rows in per_seed_rows}
            if len(iters) != 1:
                raise ValueError("iteration ids differ across seeds")
            out = [iters.pop()]
            for name in METRICS_COLUMNS[1:]:
                vals = np.array([getattr(rows[i], name) for rows in per_seed_rows])
                out += [float(vals.mean()), float(vals.std())]
            writer.writerow(out)


def read_aggregate_csv(path):
    """Return the aggregate file as a dict of column name -> float array."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != aggregate_columns():
            raise ValueError(f"{path}: unexpected aggregate columns")
        records = list(reader)
    return {col: np.array([float(rec[col]) for rec in records])
            for col in aggregate_columns()}

"""Physics diagnostics, damping-rate fitting, and per-component timers."""

from __future__ import annotations

import csv
import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

CATEGORIES = (
    "Scatter",
    "Gather",
    "ParticleUpdate",
    "Allreduce",
    "FieldHalo",
    "FftAlltoall",
    "FinePropagator",
    "CoarsePropagator",
    "TimeComm",
    "Other",
)


@dataclass
class StepRecord:
    step: int
    t: float
    field_energy: float
    kinetic_energy: float
    total_energy: float   # field + kinetic (+ external potential when present)
    px: float
    py: float
    pz: float
    total_charge: float


CSV_COLUMNS = ("step", "t", "field_energy", "kinetic_energy", "total_energy",
               "px", "py", "pz", "total_charge")


class Timers:
    """Per-rank nested wall timers with inclusive and exclusive views.

    Sections nest: an outer FinePropagator span includes its inner Scatter
    and Gather spans; the exclusive view subtracts direct children.
    """

    def __init__(self):
        self.inclusive = {c: 0.0 for c in CATEGORIES}
        self.exclusive = {c: 0.0 for c in CATEGORIES}
        self.calls = {c: 0 for c in CATEGORIES}
        self._stack: list[list] = []  # [category, start, child_time]

    @contextmanager
    def section(self, category: str):
        if category not in self.inclusive:
            raise ValueError(f"unknown timer category {category!r}")
        frame = [category, time.monotonic(), 0.0]
        self._stack.append(frame)
        try:
            yield
        finally:
            elapsed = time.monotonic() - frame[1]
            self._stack.pop()
            self.inclusive[category] += elapsed
            self.exclusive[category] += elapsed - frame[2]
            self.calls[category] += 1
            if self._stack:
                self._stack[-1][2] += elapsed


class NullTimers:
    """No-op stand-in so timed code paths need no branching."""

    @contextmanager
    def section(self, category: str):
        yield


NULL_TIMERS = NullTimers()


def timer_rows(per_rank_timers: list[Timers | None]) -> list[dict]:
    """Flatten per-rank timers into timers.csv rows."""
    rows = []
    for rank, tm in enumerate(per_rank_timers):
        if tm is None:
            continue
        for cat in CATEGORIES:
            rows.append(
                dict(
                    rank=rank,
                    category=cat,
                    seconds_inclusive=tm.inclusive[cat],
                    seconds_exclusive=tm.exclusive[cat],
                    calls=tm.calls[cat],
                )
            )
    return rows


def category_averages(rows: list[dict]) -> dict[str, float]:
    """Inclusive seconds per category averaged across ranks."""
    ranks = {r["rank"] for r in rows}
    if not ranks:
        return {}
    acc: dict[str, float] = {c: 0.0 for c in CATEGORIES}
    for r in rows:
        acc[r["category"]] += r["seconds_inclusive"]
    return {c: v / len(ranks) for c, v in acc.items()}


# ---------------------------------------------------------------------------
# Damping-rate fit
# ---------------------------------------------------------------------------

def fit_damping_rate(times: np.ndarray, energies: np.ndarray) -> float:
    """Decay rate gamma from the peak envelope of an oscillating energy trace.

    The field energy of a damped wave decays as exp(-2 gamma t), so the
    detected local maxima are least-squares fit (in log space) with the
    envelope model A exp(-2 gamma t) + C.  The offset C absorbs the
    finite-particle fluctuation floor that desk-scale traces decay into;
    for a clean exponential it fits to ~0 and the result matches the plain
    log-linear slope.  Raises if fewer than three local maxima are found.
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError("times and energies must be matching 1-D arrays")
    inner = np.arange(1, len(e) - 1)
    peaks = inner[(e[inner] > e[inner - 1]) & (e[inner] > e[inner + 1])]
    if len(peaks) < 3:
        if len(e) >= 3 and np.all(e == e[0]):
            return 0.0  # constant series: all "peaks" equal, no decay
        raise ValueError(f"need >= 3 local maxima to fit a rate, found {len(peaks)}")
    tp = t[peaks]
    wp = e[peaks]

    slope = np.polyfit(tp, np.log(wp), 1)[0]
    gamma_linear = -0.5 * slope
    span = wp.max() / wp.min()
    if span < 1.0 + 1e-9:
        return 0.0

    from scipy.optimize import least_squares

    t0 = tp[0]

    def residual(p):
        amp, gamma, floor = p
        return np.log(amp * np.exp(-2.0 * gamma * (tp - t0)) + floor) - np.log(wp)

    floor0 = 0.5 * wp.min()
    amp0 = max(wp[0] - floor0, 1e-300)
    guess = [amp0, max(gamma_linear, 1e-3 / (tp[-1] - t0)), floor0]
    tiny = wp.min() * 1e-12
    fit = least_squares(residual, guess,
                        bounds=([tiny, -np.inf, tiny], [np.inf, np.inf, wp.max()]))
    if not fit.success or not np.isfinite(fit.x[1]):
        return gamma_linear
    return float(fit.x[1])


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_outputs(records: list[StepRecord], timer_rows_: list[dict],
                  meta: dict, out_dir: str, *, overwrite: bool = False) -> None:
    """Write diagnostics.csv, timers.csv, and meta.json into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("diagnostics.csv", "timers.csv", "meta.json")}
    if not overwrite:
        for p in paths.values():
            if os.path.exists(p):
                raise FileExistsError(f"{p} exists; pass overwrite to replace")

    with open(paths["diagnostics.csv"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for rec in records:
            d = asdict(rec)
            w.writerow([d["step"]] + [_fmt(d[c]) for c in CSV_COLUMNS[1:]])

    with open(paths["timers.csv"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rank", "category", "seconds_inclusive", "seconds_exclusive", "calls"])
        for row in timer_rows_:
            w.writerow([row["rank"], row["category"], _fmt(row["seconds_inclusive"]),
                        _fmt(row["seconds_exclusive"]), row["calls"]])

    with open(paths["meta.json"], "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")

"""Single-station Monte Carlo against the analytic click probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analytics import REFLECTED, TRANSMITTED, model_click_probability
from .optics import HALF_PI
from .scenario import StationConfig, measure_classical_batch

BLOCK = 1 << 20


@dataclass(frozen=True)
class ComparisonRow:
    rel_angle: float
    mc: float
    stderr: float
    analytic: float
    z: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.rows), default=0.0)


def station_click_counts(station: StationConfig, rel: float, e0: float, samples: int,
                         rng: np.random.Generator, backend: str | None = None) -> np.ndarray:
    """Per-detector click counts of ``samples`` test rounds at offset ``rel`` from the ch1 axis."""
    probe = StationConfig((station.theta_ch1.value + rel,), station.theta_ch1, station.theta_ch0,
                          station.detectors, 1.0)
    counts = np.zeros(4, dtype=np.int64)
    done = 0
    while done < samples:
        n = min(BLOCK, samples - done)
        lam = rng.uniform(-HALF_PI, HALF_PI, n)
        u = rng.random((n, 4))
        r = rng.random(n)
        batch = measure_classical_batch(probe, np.zeros(n, dtype=np.intp), np.ones(n, dtype=bool),
                                        lam, u, r, e0, backend)
        for k in range(4):
            counts[k] += int(np.count_nonzero(batch.pattern & (1 << k)))
        done += n
    return counts


def compare_station(station: StationConfig, e0: float, grid: Sequence[float], samples: int,
                    seed: int, arm: str = TRANSMITTED, backend: str | None = None) -> ComparisonReport:
    """Monte-Carlo click frequency of polarimeter 1's ``arm`` detector versus the prediction.

    The standard error is floored at one count so that exact zeros stay finite.
    """
    slot = {TRANSMITTED: 0, REFLECTED: 1}[arm]
    model = station.detectors[slot]
    rows = []
    for i, rel in enumerate(grid):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(i,))))
        k = station_click_counts(station, float(rel), e0, samples, rng, backend)[slot]
        p = k / samples
        se = math.sqrt(max(p * (1.0 - p), 1.0 / samples) / samples)
        a = model_click_probability(model, e0, float(rel), arm)
        rows.append(ComparisonRow(float(rel), float(p), se, a, float((p - a) / se)))
    return ComparisonReport(tuple(rows))

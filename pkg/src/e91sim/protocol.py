"""E91 session loop, tallies and the statistics computed from them.

Every round is reduced to one cell of a joint histogram indexed by
``(a_idx, b_idx, a_test, b_test, a_pattern, b_pattern, a_bit, b_bit)``.
All reported statistics are read off that histogram. Chunks of rounds are
simulated independently from counter-derived random streams, and their
histograms are summed, so the result does not depend on how the chunks are
scheduled.

Rounds where either station ran its fair-sampling test are used only for the
test and for singles/doubles monitoring. Key and CHSH tallies come from the
standard rounds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from .analytics import critical_efficiency
from .errors import ConfigError, InsufficientData
from .optics import HALF_PI, Angle
from .scenario import (
    DETECTOR_LABELS,
    ClassicalPulsePairs,
    EntangledPairs,
    SourceModel,
    StationBatch,
    StationConfig,
    StationOutcome,
    measure_classical_batch,
    measure_quantum_batch,
    relative_offset,
)

DEFAULT_CHUNK = 1 << 16
CHSH_SIGNS = (1, -1, 1, 1)
OFFSET_TOL = 1e-9

ALICE, BOB = "alice", "bob"


class Verdict(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class FairSamplingConfig:
    min_counts: int = 1000
    ratio_threshold: float = 0.9
    z_threshold: float = 5.0


@dataclass(frozen=True)
class SessionConfig:
    rounds: int
    seed: int
    source: SourceModel
    alice: StationConfig
    bob: StationConfig
    # ordered (a,b), (a,b'), (a',b), (a',b')
    chsh_settings: tuple[tuple[Angle, Angle], ...]
    key_settings: tuple[Angle, ...]
    fair_sampling: FairSamplingConfig = field(default_factory=FairSamplingConfig)
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self) -> None:
        if not isinstance(self.rounds, (int, np.integer)) or self.rounds < 0:
            raise ConfigError("rounds must be a non-negative integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.chunk_size <= 0:
            raise ConfigError("chunk_size must be positive")
        if not isinstance(self.source, (EntangledPairs, ClassicalPulsePairs)):
            raise ConfigError(f"unknown source {self.source!r}")
        if isinstance(self.source, EntangledPairs):
            for name, st in ((ALICE, self.alice), (BOB, self.bob)):
                if not st.all_efficiency:
                    raise ConfigError(f"{name}: entangled source needs efficiency detectors")
        chsh = tuple((Angle(float(a)), Angle(float(b))) for a, b in self.chsh_settings)
        if len(chsh) != 4:
            raise ConfigError("chsh_settings needs exactly four (a, b) pairs")
        object.__setattr__(self, "chsh_settings", chsh)
        object.__setattr__(self, "key_settings", tuple(Angle(float(k)) for k in self.key_settings))
        for a, b in chsh:
            self.alice.index_of(a)
            self.bob.index_of(b)
        for k in self.key_settings:
            self.alice.index_of(k)
            self.bob.index_of(k)
        for a, b in chsh:
            if a.isclose(b) and any(k.isclose(a) for k in self.key_settings):
                raise ConfigError("a CHSH pair coincides with a key setting pair")

    def station(self, name: str) -> StationConfig:
        if name == ALICE:
            return self.alice
        if name == BOB:
            return self.bob
        raise ValueError(f"station must be 'alice' or 'bob', not {name!r}")

    @property
    def pair_roles(self) -> np.ndarray:
        """``roles[i, j]``: -1 other, 0..3 CHSH slot, 4 key round."""
        na, nb = len(self.alice.settings), len(self.bob.settings)
        roles = np.full((na, nb), -1, dtype=np.int8)
        for slot, (a, b) in enumerate(self.chsh_settings):
            roles[self.alice.index_of(a), self.bob.index_of(b)] = slot
        for k in self.key_settings:
            roles[self.alice.index_of(k), self.bob.index_of(k)] = 4
        return roles


@dataclass(frozen=True)
class RoundRecord:
    a_setting: Angle
    b_setting: Angle
    alice_outcome: StationOutcome
    bob_outcome: StationOutcome


@dataclass(frozen=True)
class FairSamplingVerdict:
    singles_at_rel0: int
    singles_at_rel45: int
    rounds_at_rel0: int
    rounds_at_rel45: int
    ratio: float
    z_score: float
    verdict: Verdict

    @property
    def rate_rel0(self) -> float:
        return self.singles_at_rel0 / self.rounds_at_rel0 if self.rounds_at_rel0 else 0.0

    @property
    def rate_rel45(self) -> float:
        return self.singles_at_rel45 / self.rounds_at_rel45 if self.rounds_at_rel45 else 0.0

    @property
    def dip_depth(self) -> float:
        return 1.0 - self.ratio

    def to_dict(self) -> dict:
        return {
            "singles_at_rel0": self.singles_at_rel0,
            "singles_at_rel45": self.singles_at_rel45,
            "rounds_at_rel0": self.rounds_at_rel0,
            "rounds_at_rel45": self.rounds_at_rel45,
            "rate_rel0": self.rate_rel0,
            "rate_rel45": self.rate_rel45,
            "ratio": self.ratio,
            "z_score": self.z_score,
            "verdict": self.verdict.value,
        }


# -- simulation ---------------------------------------------------------------

def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Random stream owned by one chunk, derived from (seed, chunk index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(chunk,))))


def _chunk_bounds(cfg: SessionConfig) -> list[tuple[int, int]]:
    return [(i, min(cfg.chunk_size, cfg.rounds - i * cfg.chunk_size))
            for i in range(math.ceil(cfg.rounds / cfg.chunk_size))]


def simulate_chunk(cfg: SessionConfig, chunk: int, n: int,
                   backend: str | None = None) -> tuple[StationBatch, StationBatch]:
    """Simulate ``n`` rounds of chunk ``chunk``. Draw order is part of the determinism contract."""
    rng = chunk_rng(cfg.seed, chunk)
    a_idx = rng.integers(len(cfg.alice.settings), size=n)
    b_idx = rng.integers(len(cfg.bob.settings), size=n)
    test_a = rng.random(n) < cfg.alice.test_fraction
    test_b = rng.random(n) < cfg.bob.test_fraction
    if isinstance(cfg.source, ClassicalPulsePairs):
        lam = rng.uniform(-HALF_PI, HALF_PI, n)
        u_a = rng.random((n, 4))
        u_b = rng.random((n, 4))
        r_a = rng.random(n)
        r_b = rng.random(n)
        sa = measure_classical_batch(cfg.alice, a_idx, test_a, lam, u_a, r_a, cfg.source.e0, backend)
        sb = measure_classical_batch(cfg.bob, b_idx, test_b, lam, u_b, r_b, cfg.source.e0, backend)
        return sa, sb
    u_first = rng.random(n)
    u_same = rng.random(n)
    route_a, detect_a = rng.random(n), rng.random(n)
    route_b, detect_b = rng.random(n), rng.random(n)
    return measure_quantum_batch(cfg.alice, a_idx, test_a, cfg.bob, b_idx, test_b,
                                 u_first, u_same, route_a, detect_a, route_b, detect_b, backend)


def _hist_shape(cfg: SessionConfig) -> tuple[int, ...]:
    return (len(cfg.alice.settings), len(cfg.bob.settings), 2, 2, 16, 16, 2, 2)


def _chunk_histogram(cfg: SessionConfig, chunk: int, n: int, backend: str | None) -> np.ndarray:
    sa, sb = simulate_chunk(cfg, chunk, n, backend)
    shape = _hist_shape(cfg)
    code = np.ravel_multi_index(
        (sa.setting_idx, sb.setting_idx, sa.test.astype(np.intp), sb.test.astype(np.intp),
         sa.pattern, sb.pattern, np.maximum(sa.bit, 0), np.maximum(sb.bit, 0)),
        shape,
    )
    return np.bincount(code, minlength=int(np.prod(shape))).reshape(shape)


def run_session(cfg: SessionConfig, workers: int = 1, backend: str | None = None) -> "SessionStats":
    hist = np.zeros(_hist_shape(cfg), dtype=np.int64)
    bounds = _chunk_bounds(cfg)
    if workers <= 1 or len(bounds) <= 1:
        for chunk, n in bounds:
            hist += _chunk_histogram(cfg, chunk, n, backend)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for h in pool.map(lambda cn: _chunk_histogram(cfg, cn[0], cn[1], backend), bounds):
                hist += h
    return SessionStats(cfg, hist)


def iter_rounds(cfg: SessionConfig, backend: str | None = None) -> Iterator[RoundRecord]:
    """The same rounds :func:`run_session` tallies, one record at a time."""
    a_set, b_set = cfg.alice.settings, cfg.bob.settings
    for chunk, n in _chunk_bounds(cfg):
        sa, sb = simulate_chunk(cfg, chunk, n, backend)
        for i in range(n):
            outs = []
            for batch, settings in ((sa, a_set), (sb, b_set)):
                pat = int(batch.pattern[i])
                bit = int(batch.bit[i])
                outs.append(StationOutcome(tuple(bool(pat >> k & 1) for k in range(4)),
                                           settings[batch.setting_idx[i]], bool(batch.test[i]),
                                           None if bit < 0 else bit))
            yield RoundRecord(outs[0].setting_used, outs[1].setting_used, outs[0], outs[1])


# -- statistics -----------------------------------------------------------------

_PATTERNS = np.arange(16)
_DETECTED = _PATTERNS > 0
_CH1 = (_PATTERNS & 3) != 0
_CH0 = (_PATTERNS & 12) != 0
_POL1_DOUBLE = (_PATTERNS & 3) == 3
_POL0_DOUBLE = (_PATTERNS & 12) == 12
_STATION_DOUBLE = _CH1 & _CH0


class SessionStats:
    """Aggregated tallies of one session, backed by the joint round histogram."""

    def __init__(self, cfg: SessionConfig, hist: np.ndarray):
        self.config = cfg
        self.hist = hist
        self.rounds = int(hist.sum())

    def merged(self, other: "SessionStats") -> "SessionStats":
        return SessionStats(self.config, self.hist + other.hist)

    # per-station marginal hist: (setting, test, pattern, bit)
    def _station_hist(self, name: str) -> np.ndarray:
        if name == ALICE:
            return self.hist.sum(axis=(1, 3, 5, 7))
        if name == BOB:
            return self.hist.sum(axis=(0, 2, 4, 6))
        raise ValueError(name)

    def _standard(self) -> np.ndarray:
        """Standard rounds: (a, b, pat_a, pat_b, bit_a, bit_b)."""
        return self.hist[:, :, 0, 0]

    def coincidences(self, a_idx: int, b_idx: int) -> np.ndarray:
        """2x2 counts ``[bit_a, bit_b]`` of detected standard-round coincidences."""
        h = self._standard()[a_idx, b_idx][_DETECTED][:, _DETECTED]
        return h.sum(axis=(0, 1))

    def correlation(self, a_idx: int, b_idx: int) -> tuple[float, float, int]:
        """``(E, stderr, n)`` with ``E = (N11 + N00 - N10 - N01) / N``."""
        c = self.coincidences(a_idx, b_idx)
        n = int(c.sum())
        if n == 0:
            raise InsufficientData(f"no coincidences at setting pair ({a_idx}, {b_idx})")
        e = (c[1, 1] + c[0, 0] - c[1, 0] - c[0, 1]) / n
        return float(e), math.sqrt(max(1.0 - e * e, 0.0) / n), n

    def round_categories(self) -> dict[str, int]:
        """Partition of all rounds; the values sum to ``rounds``."""
        h = self.hist
        test = int(h.sum() - h[:, :, 0, 0].sum())
        std = self._standard().sum(axis=(4, 5))  # (a, b, pat_a, pat_b)
        both = std[:, :, _DETECTED][:, :, :, _DETECTED].sum(axis=(2, 3))
        discarded = int(std.sum() - both.sum())
        roles = self.config.pair_roles
        return {
            "test": test,
            "discarded": discarded,
            "key": int(both[roles == 4].sum()),
            "chsh": int(both[(roles >= 0) & (roles < 4)].sum()),
            "other": int(both[roles == -1].sum()),
        }

    def key_tally(self) -> np.ndarray:
        roles = self.config.pair_roles
        total = np.zeros((2, 2), dtype=np.int64)
        for i, j in zip(*np.nonzero(roles == 4)):
            total += self.coincidences(int(i), int(j))
        return total

    @property
    def sifted_key_length(self) -> int:
        return int(self.key_tally().sum())

    def singles(self, name: str) -> np.ndarray:
        """Click counts ``[setting, test, detector]``."""
        sh = self._station_hist(name).sum(axis=3)  # (setting, test, pattern)
        out = np.zeros(sh.shape[:2] + (4,), dtype=np.int64)
        for k in range(4):
            out[..., k] = sh[..., (_PATTERNS >> k & 1) == 1].sum(axis=-1)
        return out

    def station_rounds(self, name: str) -> np.ndarray:
        """Rounds ``[setting, test]`` seen by the station."""
        return self._station_hist(name).sum(axis=(2, 3))

    def station_singles(self, name: str) -> np.ndarray:
        """Rounds ``[setting, test]`` in which any detector of the station clicked."""
        sh = self._station_hist(name).sum(axis=3)
        return sh[..., _DETECTED].sum(axis=-1)

    def double_counts(self, name: str) -> dict[str, int]:
        sh = self._station_hist(name).sum(axis=(0, 1, 3))
        return {
            "ch1": int(sh[_POL1_DOUBLE].sum()),
            "ch0": int(sh[_POL0_DOUBLE].sum()),
            "station": int(sh[_STATION_DOUBLE].sum()),
        }

    def summary(self, include_fair_sampling: bool = True) -> dict:
        cfg = self.config
        out: dict = {"rounds": self.rounds, "categories": self.round_categories()}
        try:
            s, se = estimate_chsh(self)
            out["chsh"] = {"S": s, "stderr": se}
        except InsufficientData as exc:
            out["chsh"] = {"S": None, "stderr": None, "reason": str(exc)}
        corr = {}
        for i, a in enumerate(cfg.alice.settings):
            for j, b in enumerate(cfg.bob.settings):
                try:
                    e, se, n = self.correlation(i, j)
                except InsufficientData:
                    e, se, n = None, None, 0
                corr[f"{math.degrees(a.value):g},{math.degrees(b.value):g}"] = {
                    "E": e, "stderr": se, "coincidences": n}
        out["correlations_deg"] = corr
        out["sifted_key_length"] = self.sifted_key_length
        try:
            out["qber"] = compute_qber(self)
        except InsufficientData:
            out["qber"] = None
        out["double_count_rate"] = double_count_rate(self)
        if include_fair_sampling:
            out["fair_sampling"] = {name: fair_sampling_test(self, name).to_dict() for name in (ALICE, BOB)}
        out["detection"] = detection_report(self)
        return out


def estimate_chsh(stats: SessionStats) -> tuple[float, float]:
    """``S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`` over the configured pairs."""
    cfg = stats.config
    s = 0.0
    var = 0.0
    for sign, (a, b) in zip(CHSH_SIGNS, cfg.chsh_settings):
        e, se, _ = stats.correlation(cfg.alice.index_of(a), cfg.bob.index_of(b))
        s += sign * e
        var += se * se
    return s, math.sqrt(var)


def compute_qber(stats: SessionStats) -> float:
    t = stats.key_tally()
    n = int(t.sum())
    if n == 0:
        raise InsufficientData("sifted key is empty")
    return float(t[0, 1] + t[1, 0]) / n


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> float:
    """Pooled two-proportion z statistic, |p1 - p2| / se.

    The pooled rate is clamped half a count away from 0 and 1 so a perfect
    separation gives a large finite score instead of a division by zero.
    """
    if n1 == 0 or n2 == 0:
        return 0.0
    n = n1 + n2
    p = (k1 + k2) / n
    p = min(max(p, 0.5 / n), 1.0 - 0.5 / n)
    se = math.sqrt(p * (1.0 - p) * (1.0 / n1 + 1.0 / n2))
    return abs(k1 / n1 - k2 / n2) / se


def fair_sampling_offsets(station: StationConfig) -> tuple[list[int], list[int]]:
    """Setting indices at relative offset 0 and pi/4 (mod pi/2) from the polarimeter axis."""
    if not station.theta_ch1.isclose(station.theta_ch0, OFFSET_TOL):
        raise ConfigError("fair-sampling test needs theta_ch1 == theta_ch0")
    theta = station.theta_ch1
    rel0, rel45 = [], []
    for i, s in enumerate(station.settings):
        r = relative_offset(s, theta)
        if abs(r) < OFFSET_TOL:
            rel0.append(i)
        elif abs(abs(r) - 0.25 * math.pi) < OFFSET_TOL:
            rel45.append(i)
    if not rel0 or not rel45:
        raise ConfigError("station settings must include offsets 0 and pi/4 from its polarimeter axis")
    return rel0, rel45


def fair_sampling_test(stats: SessionStats, station: str,
                       cfg: FairSamplingConfig | None = None) -> FairSamplingVerdict:
    """Compare singles rates of test rounds at relative offsets 0 and pi/4."""
    cfg = cfg or stats.config.fair_sampling
    rel0, rel45 = fair_sampling_offsets(stats.config.station(station))
    rounds = stats.station_rounds(station)[:, 1]
    singles = stats.station_singles(station)[:, 1]
    n0, n45 = int(rounds[rel0].sum()), int(rounds[rel45].sum())
    k0, k45 = int(singles[rel0].sum()), int(singles[rel45].sum())
    r0 = k0 / n0 if n0 else 0.0
    r45 = k45 / n45 if n45 else 0.0
    hi = max(r0, r45)
    ratio = min(r0, r45) / hi if hi > 0 else 1.0
    z = two_proportion_z(k0, n0, k45, n45)
    # with enough rounds the verdict is binary: only a dip that is both deep
    # and significant counts as evidence of biased sampling
    if n0 < cfg.min_counts or n45 < cfg.min_counts:
        verdict = Verdict.INCONCLUSIVE
    elif ratio < cfg.ratio_threshold and z > cfg.z_threshold:
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.PASS
    return FairSamplingVerdict(k0, k45, n0, n45, ratio, z, verdict)


def double_count_rate(stats: SessionStats) -> dict[str, dict[str, float]]:
    """Fractions of all rounds with a double click inside a polarimeter or across a station."""
    out = {}
    for name in (ALICE, BOB):
        d = stats.double_counts(name)
        out[name] = {k: (v / stats.rounds if stats.rounds else 0.0) for k, v in d.items()}
    return out


def detection_report(stats: SessionStats) -> dict:
    """Per-station detection efficiency and the detection-loophole flag.

    For an entangled source the configured detector efficiency is used; for
    the classical source the measured standard-round singles rate stands in.
    """
    crit = critical_efficiency()
    out: dict = {"critical_efficiency": crit}
    cfg = stats.config
    for name in (ALICE, BOB):
        st = cfg.station(name)
        if isinstance(cfg.source, EntangledPairs):
            eff = min(d.eta for d in st.detectors)
        else:
            n = int(stats.station_rounds(name)[:, 0].sum())
            eff = int(stats.station_singles(name)[:, 0].sum()) / n if n else None
        out[name] = {"efficiency": eff, "loophole_open": None if eff is None else bool(eff < crit)}
    flags = [out[n]["loophole_open"] for n in (ALICE, BOB)]
    out["loophole_open"] = any(bool(f) for f in flags)
    return out


def brute_force_chsh(records: Sequence[RoundRecord], cfg: SessionConfig) -> float:
    """CHSH value recomputed directly from a record stream, for cross-checking."""
    sums = [0, 0, 0, 0]
    counts = [0, 0, 0, 0]
    for rec in records:
        a, b = rec.alice_outcome, rec.bob_outcome
        if a.test or b.test or a.bit is None or b.bit is None:
            continue
        for slot, (sa, sb) in enumerate(cfg.chsh_settings):
            if rec.a_setting.isclose(sa, 1e-9) and rec.b_setting.isclose(sb, 1e-9):
                sums[slot] += 1 if a.bit == b.bit else -1
                counts[slot] += 1
    return sum(sign * s / c for sign, s, c in zip(CHSH_SIGNS, sums, counts))


def singles_rows(stats: SessionStats) -> list[tuple[str, float, str, str, int, int]]:
    """Rows ``(station, setting_rad, mode, detector, count, rounds)``."""
    rows = []
    for name in (ALICE, BOB):
        st = stats.config.station(name)
        s = stats.singles(name)
        r = stats.station_rounds(name)
        for i, setting in enumerate(st.settings):
            for t, mode in ((0, "standard"), (1, "test")):
                for k, label in enumerate(DETECTOR_LABELS):
                    rows.append((name, setting.value, mode, label, int(s[i, t, k]), int(r[i, t])))
    return rows


def tally_rows(stats: SessionStats) -> list[tuple[float, float, str, int]]:
    """Rows ``(a_setting_rad, b_setting_rad, bits, count)`` of standard-round coincidences."""
    rows = []
    cfg = stats.config
    for i, a in enumerate(cfg.alice.settings):
        for j, b in enumerate(cfg.bob.settings):
            c = stats.coincidences(i, j)
            for ba in (0, 1):
                for bb in (0, 1):
                    rows.append((a.value, b.value, f"{ba}{bb}", int(c[ba, bb])))
    return rows

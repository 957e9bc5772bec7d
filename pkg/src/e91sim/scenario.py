"""Sources and the four-detector measurement station.

A station has an analyzer beamsplitter at the chosen setting. Each of its two
output channels feeds a polarimeter: a second beamsplitter with a detector on
each output. In a *test* round the polarimeters sit at the station's fixed
axes ``theta_ch1`` / ``theta_ch0``. In a *standard* round they are aligned with
the analyzer, which makes each polarimeter act like a single plain detector.

Detector slots are ordered ``ch1+, ch1-, ch0+, ch0-``.

The per-round functions in this module (:func:`measure_classical`,
:func:`measure_quantum_pair`) are the readable reference. The session loop
uses the vectorized ``*_batch`` functions, which drive the compiled kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError
from .kernels import get_backend
from .optics import (
    HALF_PI,
    THRESHOLD_MODELS,
    Angle,
    DetectorModel,
    Pulse,
    QuantumEfficiency,
    cos_sq,
    detector_params,
    split_pulse,
)

DETECTOR_LABELS = ("ch1+", "ch1-", "ch0+", "ch0-")


@dataclass(frozen=True)
class EntangledPairs:
    """Genuine source of maximally entangled photon pairs."""


@dataclass(frozen=True)
class ClassicalPulsePairs:
    """Eve's substitute source: pulse pairs of energy ``e0`` sharing a random polarization."""

    e0: float = 2.0

    def __post_init__(self) -> None:
        if not self.e0 > 0.0:
            raise ConfigError("classical pulse energy e0 must be > 0")


SourceModel = Union[EntangledPairs, ClassicalPulsePairs]


@dataclass(frozen=True)
class Quantum:
    pass


@dataclass(frozen=True)
class Classical:
    lam: Angle


Emission = Union[Quantum, Classical]


def _as_angle(x) -> Angle:
    return x if isinstance(x, Angle) else Angle(x)


@dataclass(frozen=True)
class StationConfig:
    settings: tuple[Angle, ...]
    theta_ch1: Angle
    theta_ch0: Angle
    detectors: tuple[DetectorModel, DetectorModel, DetectorModel, DetectorModel]
    # probability that a round runs with the polarimeters at their fixed axes
    test_fraction: float = 0.1

    def __post_init__(self) -> None:
        settings = tuple(_as_angle(s) for s in self.settings)
        if not settings:
            raise ConfigError("station needs at least one setting")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "theta_ch1", _as_angle(self.theta_ch1))
        object.__setattr__(self, "theta_ch0", _as_angle(self.theta_ch0))
        detectors = tuple(self.detectors)
        if len(detectors) != 4:
            raise ConfigError("station needs exactly four detectors (ch1+, ch1-, ch0+, ch0-)")
        object.__setattr__(self, "detectors", detectors)
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ConfigError("test_fraction must lie in [0, 1]")

    @classmethod
    def uniform(cls, settings: Sequence, theta: float, detector: DetectorModel,
                test_fraction: float = 0.1) -> "StationConfig":
        """Station with one polarimeter axis and four identical detectors."""
        return cls(tuple(settings), theta, theta, (detector,) * 4, test_fraction)

    @property
    def setting_values(self) -> np.ndarray:
        return np.array([s.value for s in self.settings], dtype=np.float64)

    def index_of(self, setting: Angle | float) -> int:
        for i, s in enumerate(self.settings):
            if s.isclose(setting, 1e-9):
                return i
        raise ConfigError(f"setting {float(setting):.6g} rad is not in the station's list")

    @property
    def all_efficiency(self) -> bool:
        return all(isinstance(d, QuantumEfficiency) for d in self.detectors)

    @property
    def kernel_params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        rows = [detector_params(d) for d in self.detectors]
        kinds, thr, sat, eta = zip(*rows)
        return (np.array(kinds, dtype=np.int32), np.array(thr), np.array(sat), np.array(eta))


@dataclass(frozen=True)
class StationOutcome:
    clicks: tuple[bool, bool, bool, bool]
    setting_used: Angle
    test: bool = True
    # key bit: 1 for channel 1, 0 for channel 0, None if nothing clicked
    bit: int | None = None

    @property
    def detected(self) -> bool:
        return any(self.clicks)

    @property
    def channel_clicks(self) -> tuple[bool, bool]:
        """(channel 1 clicked, channel 0 clicked)."""
        return (self.clicks[0] or self.clicks[1], self.clicks[2] or self.clicks[3])

    @property
    def pattern(self) -> int:
        return sum(1 << k for k, c in enumerate(self.clicks) if c)


def _resolve_bit(clicks: Sequence[bool], r: float) -> int | None:
    c1 = clicks[0] or clicks[1]
    c0 = clicks[2] or clicks[3]
    if c1 and c0:
        return 1 if r < 0.5 else 0
    if c1:
        return 1
    if c0:
        return 0
    return None


def emit(source: SourceModel, rng: np.random.Generator) -> Emission:
    if isinstance(source, EntangledPairs):
        return Quantum()
    if isinstance(source, ClassicalPulsePairs):
        return Classical(Angle(rng.uniform(-HALF_PI, HALF_PI)))
    raise TypeError(f"unknown source {source!r}")


def polarimeter_axes(station: StationConfig, setting: Angle, test: bool) -> tuple[Angle, Angle]:
    if test:
        return station.theta_ch1, station.theta_ch0
    return setting, setting


def classical_energies(station: StationConfig, setting: Angle | float, pulse: Pulse,
                       test: bool = True) -> tuple[float, float, float, float]:
    """Energies incident on the four detectors, via two cascaded beamsplitters."""
    setting = _as_angle(setting)
    ch1, ch0 = split_pulse(pulse, setting)
    th1, th0 = polarimeter_axes(station, setting, test)
    p1, m1 = split_pulse(ch1, th1)
    p0, m0 = split_pulse(ch0, th0)
    # ch0 leaves the analyzer polarized at setting + pi/2; its "+" port is the one along th0
    return p1.energy, m1.energy, p0.energy, m0.energy


def classical_outcome(station: StationConfig, setting: Angle | float, pulse: Pulse,
                      u: Sequence[float], r: float, test: bool = True) -> StationOutcome:
    """Deterministic core of :func:`measure_classical` given its uniforms."""
    setting = _as_angle(setting)
    energies = classical_energies(station, setting, pulse, test)
    clicks = tuple(bool(u[k] < station.detectors[k].click_probability(energies[k])) for k in range(4))
    return StationOutcome(clicks, setting, test, _resolve_bit(clicks, r))


def measure_classical(station: StationConfig, setting: Angle | float, pulse: Pulse,
                      rng: np.random.Generator, test: bool = True) -> StationOutcome:
    u = rng.random(4)
    r = rng.random()
    return classical_outcome(station, setting, pulse, u, r, test)


def _require_efficiency(*stations: StationConfig) -> None:
    for st in stations:
        if not st.all_efficiency:
            bad = [type(d).__name__ for d in st.detectors if isinstance(d, THRESHOLD_MODELS)]
            raise ConfigError(f"entangled-photon mode needs efficiency detectors, got {bad}")


def measure_quantum_pair(alice: StationConfig, a: Angle | float, bob: StationConfig, b: Angle | float,
                         rng: np.random.Generator, test_a: bool = True,
                         test_b: bool = True) -> tuple[StationOutcome, StationOutcome]:
    """One entangled pair: joint channel outcome, then polarimeter routing and detection."""
    _require_efficiency(alice, bob)
    a, b = _as_angle(a), _as_angle(b)
    ch_a = 1 if rng.random() < 0.5 else 0
    same = rng.random() < cos_sq(a.value - b.value)
    ch_b = ch_a if same else 1 - ch_a
    out = []
    for st, setting, ch, test in ((alice, a, ch_a, test_a), (bob, b, ch_b, test_b)):
        u_route, u_det = rng.random(), rng.random()
        th1, th0 = polarimeter_axes(st, setting, test)
        if ch == 1:
            det = 0 if u_route < cos_sq(th1.value - setting.value) else 1
        else:
            # photon polarized at setting + pi/2
            det = 2 if u_route < cos_sq(th0.value - setting.value - HALF_PI) else 3
        clicked = u_det < st.detectors[det].eta
        clicks = tuple(clicked and k == det for k in range(4))
        out.append(StationOutcome(clicks, setting, test, ch if clicked else None))
    return out[0], out[1]


# -- vectorized pipeline -----------------------------------------------------

@dataclass
class StationBatch:
    """Per-round results of one station over a block of rounds."""

    setting_idx: np.ndarray
    test: np.ndarray
    pattern: np.ndarray
    bit: np.ndarray = field(repr=False)


def measure_classical_batch(station: StationConfig, setting_idx: np.ndarray, test: np.ndarray,
                            lam: np.ndarray, u: np.ndarray, r: np.ndarray, e0: float,
                            backend: str | None = None) -> StationBatch:
    k = get_backend(backend)
    phi = station.setting_values[setting_idx]
    kinds, thr, sat, eta = station.kernel_params
    pattern, bit = k.classical_station(phi, test.astype(np.uint8), station.theta_ch1.value,
                                       station.theta_ch0.value, lam, u, r, float(e0),
                                       kinds, thr, sat, eta)
    return StationBatch(setting_idx, test, pattern, bit)


def measure_quantum_batch(alice: StationConfig, a_idx: np.ndarray, test_a: np.ndarray,
                          bob: StationConfig, b_idx: np.ndarray, test_b: np.ndarray,
                          u_first: np.ndarray, u_same: np.ndarray,
                          route_a: np.ndarray, detect_a: np.ndarray,
                          route_b: np.ndarray, detect_b: np.ndarray,
                          backend: str | None = None) -> tuple[StationBatch, StationBatch]:
    _require_efficiency(alice, bob)
    k = get_backend(backend)
    phi_a = alice.setting_values[a_idx]
    phi_b = bob.setting_values[b_idx]
    ch_a, ch_b = k.quantum_channels(phi_a, phi_b, u_first, u_same)
    out = []
    for st, phi, idx, test, ch, ur, ud in ((alice, phi_a, a_idx, test_a, ch_a, route_a, detect_a),
                                          (bob, phi_b, b_idx, test_b, ch_b, route_b, detect_b)):
        eta = st.kernel_params[3]
        pattern, bit = k.quantum_station(phi, test.astype(np.uint8), st.theta_ch1.value,
                                         st.theta_ch0.value, ch, ur, ud, eta)
        out.append(StationBatch(idx, test, pattern, bit))
    return out[0], out[1]


def relative_offset(setting: Angle | float, theta: Angle | float) -> float:
    """Offset of ``setting`` from ``theta`` folded into [-pi/4, pi/4).

    The polarimeter response has period pi/2 in this offset.
    """
    d = float(setting) - float(theta)
    q = 0.5 * math.pi
    r = math.fmod(d + 0.25 * math.pi, q)
    if r < 0:
        r += q
    return r - 0.25 * math.pi

"""Polarization angles, classical pulses, Malus-law beamsplitting and detector models.

Everything here is a pure function of immutable values. Squared trigonometric
factors are evaluated in half-angle form, ``cos²x = (1 + cos 2x) / 2``, so that a
45 degree split is exactly one half in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

HALF_PI = 0.5 * math.pi


def reduce_angle(x: float) -> float:
    """Canonical representative of a polarization angle, in [-pi/2, pi/2)."""
    r = math.fmod(x + HALF_PI, math.pi)
    if r < 0.0:
        r += math.pi
    r -= HALF_PI
    # fmod can land exactly on the excluded upper edge after the shift back
    if r >= HALF_PI:
        r -= math.pi
    return r


def cos_sq(x: float) -> float:
    """cos²(x) in half-angle form."""
    return 0.5 * (1.0 + math.cos(2.0 * x))


def sin_sq(x: float) -> float:
    """sin²(x) in half-angle form."""
    return 0.5 * (1.0 - math.cos(2.0 * x))


@dataclass(frozen=True, order=True)
class Angle:
    """Axis-like angle, stored reduced modulo pi."""

    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", reduce_angle(float(self.value)))

    @classmethod
    def degrees(cls, deg: float) -> "Angle":
        return cls(math.radians(deg))

    def __float__(self) -> float:
        return self.value

    def __add__(self, other: "Angle | float") -> "Angle":
        return Angle(self.value + float(other))

    def __sub__(self, other: "Angle | float") -> "Angle":
        return Angle(self.value - float(other))

    def __neg__(self) -> "Angle":
        return Angle(-self.value)

    def isclose(self, other: "Angle | float", tol: float = 1e-12) -> bool:
        """Equality modulo pi."""
        return abs(reduce_angle(self.value - float(other))) <= tol


@dataclass(frozen=True)
class Pulse:
    energy: float
    polarization: Angle = field(default_factory=lambda: Angle(0.0))

    def __post_init__(self) -> None:
        if not self.energy >= 0.0:
            raise ValueError(f"pulse energy must be >= 0, got {self.energy!r}")
        if not isinstance(self.polarization, Angle):
            object.__setattr__(self, "polarization", Angle(self.polarization))


@dataclass(frozen=True)
class IdealThreshold:
    """Clicks with certainty when the absorbed energy exceeds ``threshold``."""

    threshold: float = 1.0

    def __post_init__(self) -> None:
        if not self.threshold > 0.0:
            raise ValueError("threshold must be > 0")

    def click_probability(self, energy: float) -> float:
        return 1.0 if energy > self.threshold else 0.0


@dataclass(frozen=True)
class LinearThreshold:
    """Click probability ramps linearly from ``threshold`` up to ``saturation``.

    ``saturation`` defaults to twice the threshold.
    """

    threshold: float = 1.0
    saturation: float | None = None

    def __post_init__(self) -> None:
        if not self.threshold > 0.0:
            raise ValueError("threshold must be > 0")
        if self.saturation is None:
            object.__setattr__(self, "saturation", 2.0 * self.threshold)
        if not self.saturation > self.threshold:
            raise ValueError("saturation must exceed threshold")

    def click_probability(self, energy: float) -> float:
        p = (energy - self.threshold) / (self.saturation - self.threshold)
        return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class QuantumEfficiency:
    """Single-photon detector with efficiency ``eta``."""

    eta: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    def click_probability(self, energy: float) -> float:
        # energy only signals photon presence here
        return self.eta if energy > 0.0 else 0.0


DetectorModel = Union[IdealThreshold, LinearThreshold, QuantumEfficiency]

THRESHOLD_MODELS = (IdealThreshold, LinearThreshold)

# Integer codes understood by the compiled kernels.
KIND_IDEAL, KIND_LINEAR, KIND_EFFICIENCY = 0, 1, 2


def detector_params(d: DetectorModel) -> tuple[int, float, float, float]:
    """Flatten a detector into ``(kind, threshold, saturation, eta)`` for the kernels."""
    if isinstance(d, IdealThreshold):
        return KIND_IDEAL, d.threshold, d.threshold, 1.0
    if isinstance(d, LinearThreshold):
        return KIND_LINEAR, d.threshold, d.saturation, 1.0
    if isinstance(d, QuantumEfficiency):
        return KIND_EFFICIENCY, 0.0, 0.0, d.eta
    raise TypeError(f"not a detector model: {d!r}")


def split_pulse(p: Pulse, axis: Angle | float) -> tuple[Pulse, Pulse]:
    """Split ``p`` on a polarizing beamsplitter oriented along ``axis``.

    Returns ``(transmitted, reflected)``; the transmitted pulse is polarized
    along ``axis`` and the reflected one perpendicular to it.
    """
    axis = axis if isinstance(axis, Angle) else Angle(axis)
    d = axis.value - p.polarization.value
    t = Pulse(p.energy * cos_sq(d), axis)
    r = Pulse(p.energy * sin_sq(d), axis + HALF_PI)
    return t, r


def cascaded_energy(e0: float, lam: Angle | float, phi: Angle | float, theta: Angle | float) -> float:
    """Energy reaching the transmitted detector of the polarimeter behind channel 1.

    A pulse of energy ``e0`` and polarization ``lam`` first meets the analyzer
    at ``phi``; its transmitted part then meets a polarimeter at ``theta``.
    """
    if e0 < 0:
        raise ValueError("e0 must be >= 0")
    phi = float(phi)
    return e0 * cos_sq(phi - float(theta)) * cos_sq(phi - float(lam))


def click_probability(d: DetectorModel, energy: float) -> float:
    return d.click_probability(energy)


def sample_click(d: DetectorModel, energy: float, r: float) -> bool:
    """Bernoulli draw: True iff ``r < click_probability(d, energy)``."""
    return r < d.click_probability(energy)

"""Closed-form and quadrature predictions for the biased-sample attack.

With the polarization ``lam`` uniform on the circle, the energy reaching a
detector behind Malus-law splitting follows an arcsine law on ``(0, Emax)``.
Integrals against that law are computed after the substitution
``E = Emax sin²u``. The Jacobian cancels both endpoint singularities, leaving
``(2/pi) * integral_0^{pi/2} f(Emax sin²u) du``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import DegenerateScenario, DomainError, QuadratureFailure
from .optics import THRESHOLD_MODELS, DetectorModel, IdealThreshold, LinearThreshold, cos_sq, sin_sq

TRANSMITTED, REFLECTED = "transmitted", "reflected"


class Method(str, Enum):
    CLOSED_FORM = "ClosedForm"
    QUADRATURE = "Quadrature"


@dataclass(frozen=True)
class AnalyticPrediction:
    grid: tuple[float, ...]
    values: tuple[float, ...]
    method: Method

    def __post_init__(self) -> None:
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values differ in length")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")


def critical_efficiency() -> float:
    """Detector efficiency below which a local model can fake a CHSH violation."""
    return 2.0 * (math.sqrt(2.0) - 1.0)


def energy_density(energy: float, emax: float) -> float:
    """Arcsine density of the detector-incident energy, on (0, emax)."""
    if not 0.0 < energy < emax:
        raise DomainError(f"energy {energy!r} outside (0, {emax!r})")
    return 1.0 / (math.pi * math.sqrt((emax - energy) * energy))


def arm_energy(e0: float, rel: float, arm: str) -> float:
    """Largest energy that can reach one polarimeter output at relative angle ``rel``."""
    if arm == TRANSMITTED:
        return e0 * cos_sq(rel)
    if arm == REFLECTED:
        return e0 * sin_sq(rel)
    raise ValueError(f"arm must be {TRANSMITTED!r} or {REFLECTED!r}")


def ideal_click_probability(e0: float, threshold: float, rel: float, arm: str = TRANSMITTED) -> float:
    if not (e0 > 0 and threshold > 0):
        raise DomainError("e0 and threshold must be positive")
    emax = arm_energy(e0, rel, arm)
    if not threshold < emax:
        return 0.0
    return (2.0 / math.pi) * math.acos(math.sqrt(threshold / emax))


def arcsine_expectation(f: Callable[[float], float], emax: float,
                        breaks: Sequence[float] = (), epsabs: float = 1e-11,
                        target: float = 1e-8, limit: int = 200) -> float:
    """Mean of ``f(E)`` for E arcsine-distributed on (0, emax).

    ``breaks`` are energies where ``f`` has kinks; they are passed to the
    integrator as interior points. Raises :class:`QuadratureFailure` when the
    estimated error exceeds ``target``.
    """
    if emax <= 0.0:
        return float(f(0.0))
    half = 0.5 * math.pi
    pts = sorted({math.asin(math.sqrt(b / emax)) for b in breaks if 0.0 < b < emax})
    with warnings.catch_warnings():
        # convergence is judged from the error estimate below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(lambda u: f(emax * math.sin(u) ** 2), 0.0, half,
                                  points=pts or None, epsabs=epsabs, epsrel=0.0, limit=limit)
    if not (2.0 / math.pi) * err <= target:
        raise QuadratureFailure(f"error estimate {err:.3g} above target {target:.3g}")
    return (2.0 / math.pi) * val


def linear_click_probability(e0: float, threshold: float, saturation: float, rel: float,
                             arm: str = TRANSMITTED) -> float:
    if not (e0 > 0 and threshold > 0 and saturation > threshold):
        raise DomainError("need e0 > 0, threshold > 0, saturation > threshold")
    emax = arm_energy(e0, rel, arm)
    if emax <= threshold:
        return 0.0
    span = saturation - threshold

    def ramp(e: float) -> float:
        return min(1.0, max(0.0, (e - threshold) / span))

    return arcsine_expectation(ramp, emax, breaks=(threshold, saturation))


def model_click_probability(model: DetectorModel, e0: float, rel: float, arm: str = TRANSMITTED) -> float:
    """Click probability of one polarimeter output averaged over the uniform polarization."""
    if isinstance(model, IdealThreshold):
        return ideal_click_probability(e0, model.threshold, rel, arm)
    if isinstance(model, LinearThreshold):
        return linear_click_probability(e0, model.threshold, model.saturation, rel, arm)
    raise DomainError(f"no analytic prediction for {type(model).__name__}")


def ideal_click_probability_quadrature(e0: float, threshold: float, rel: float,
                                       arm: str = TRANSMITTED) -> float:
    """Independent route: integrate :func:`energy_density` from the threshold up to Emax.

    Uses ``E = Emax - t²`` to tame the singularity at the upper end only; the
    lower limit sits at the threshold, away from the other singularity.
    """
    emax = arm_energy(e0, rel, arm)
    if not threshold < emax:
        return 0.0
    top = math.sqrt(emax - threshold)
    val, err = integrate.quad(lambda t: 2.0 * t * energy_density(emax - t * t, emax) if t > 0 else
                              2.0 / (math.pi * math.sqrt(emax)), 0.0, top,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    if err > 1e-9:
        raise QuadratureFailure(f"error estimate {err:.3g} above target")
    return val


def prediction_curve(model: DetectorModel, e0: float, grid: Sequence[float],
                     arm: str = TRANSMITTED) -> AnalyticPrediction:
    values = tuple(model_click_probability(model, e0, g, arm) for g in grid)
    method = Method.CLOSED_FORM if isinstance(model, IdealThreshold) else Method.QUADRATURE
    return AnalyticPrediction(tuple(float(g) for g in grid), values, method)


# -- attack correlation -------------------------------------------------------

def _kink_angles(model: DetectorModel, e0: float, phi: float) -> list[float]:
    """Polarizations in [-pi/2, pi/2) where a channel energy crosses a model breakpoint."""
    levels = [model.threshold]
    if isinstance(model, LinearThreshold):
        levels.append(model.saturation)
    out = []
    for level in levels:
        c = level / e0
        if not 0.0 < c < 1.0:
            continue
        y = math.acos(math.sqrt(c))
        for off in (y, -y, 0.5 * math.pi - y, y - 0.5 * math.pi):
            lam = phi - off
            lam = (lam + 0.5 * math.pi) % math.pi - 0.5 * math.pi
            out.append(lam)
    return out


def _channel_weights(model: DetectorModel, e0: float, phi: float, lam: float) -> tuple[float, float]:
    """(P[bit 1 and detected], P[bit 0 and detected]); a double click is a fair coin."""
    p1 = model.click_probability(e0 * cos_sq(phi - lam))
    p0 = model.click_probability(e0 * sin_sq(phi - lam))
    both = p1 * p0
    return p1 - 0.5 * both, p0 - 0.5 * both


def predict_attack_correlation(alice_model: DetectorModel, bob_model: DetectorModel,
                               e0: float, delta: float, tol: float = 1e-6) -> float:
    """Coincidence correlation ``E(a - b = delta)`` for the classical pulse-pair source.

    Polarimeters are aligned with the analyzers (standard rounds).
    """
    for m in (alice_model, bob_model):
        if not isinstance(m, THRESHOLD_MODELS):
            raise DomainError("attack correlation needs threshold detector models")
    a, b = float(delta), 0.0
    pts = sorted(set(_kink_angles(alice_model, e0, a) + _kink_angles(bob_model, e0, b)))
    lo, hi = -0.5 * math.pi, 0.5 * math.pi
    pts = [p for p in pts if lo < p < hi]

    def weights(lam: float) -> tuple[float, float]:
        a1, a0 = _channel_weights(alice_model, e0, a, lam)
        b1, b0 = _channel_weights(bob_model, e0, b, lam)
        return (a1 - a0) * (b1 - b0), (a1 + a0) * (b1 + b0)

    opts = dict(points=pts or None, epsabs=tol * 1e-2, epsrel=0.0, limit=400)
    num, e_num = integrate.quad(lambda x: weights(x)[0], lo, hi, **opts)
    den, e_den = integrate.quad(lambda x: weights(x)[1], lo, hi, **opts)
    if den <= 0.0:
        raise DegenerateScenario("no coincidences for this detector configuration")
    if e_num > tol * den or e_den > tol * den:
        raise QuadratureFailure("attack correlation quadrature did not converge")
    return num / den


def predict_attack_chsh(alice_model: DetectorModel, bob_model: DetectorModel, e0: float,
                        pairs: Sequence[tuple[float, float]],
                        signs: Sequence[int] = (1, -1, 1, 1)) -> float:
    return sum(s * predict_attack_correlation(alice_model, bob_model, e0, float(a) - float(b))
               for s, (a, b) in zip(signs, pairs))


def predict_coincidence_rate(alice_model: DetectorModel, bob_model: DetectorModel,
                             e0: float, delta: float) -> float:
    """Fraction of standard rounds at ``a - b = delta`` where both stations click."""
    a = float(delta)
    f = lambda lam: (sum(_channel_weights(alice_model, e0, a, lam))
                     * sum(_channel_weights(bob_model, e0, 0.0, lam)))
    pts = sorted(set(_kink_angles(alice_model, e0, a) + _kink_angles(bob_model, e0, 0.0)))
    pts = [p for p in pts if -0.5 * math.pi < p < 0.5 * math.pi]
    val, _ = integrate.quad(f, -0.5 * math.pi, 0.5 * math.pi, points=pts or None, limit=400)
    return val / math.pi


def grid_from_spec(spec: str) -> np.ndarray:
    """Parse ``start:stop:num`` (inclusive linspace) or a comma list; empty string -> empty grid."""
    spec = spec.strip()
    if not spec:
        return np.array([], dtype=float)
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid spec {spec!r} is not start:stop:num")
        return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    return np.array([float(x) for x in spec.split(",")])

"""Pure-numpy implementation of the per-round station kernels.

Used when the compiled ``_kernels`` extension is unavailable. Both backends
share one calling convention: arrays in, ``(pattern, bit)`` arrays out.

``pattern`` packs the four detector clicks as bits
(1: ch1+, 2: ch1-, 4: ch0+, 8: ch0-). ``bit`` is the station's key bit,
-1 when nothing clicked; a click in both channels is resolved by ``r < 0.5``.
"""

from __future__ import annotations

import numpy as np

KIND_IDEAL, KIND_LINEAR, KIND_EFFICIENCY = 0, 1, 2

BACKEND = "python"


def _click_prob(kind: int, thr: float, sat: float, eta: float, energy: np.ndarray) -> np.ndarray:
    if kind == KIND_IDEAL:
        return (energy > thr).astype(np.float64)
    if kind == KIND_LINEAR:
        return np.clip((energy - thr) / (sat - thr), 0.0, 1.0)
    return np.where(energy > 0.0, eta, 0.0)


def _resolve_bits(pattern: np.ndarray, r: np.ndarray) -> np.ndarray:
    c1 = (pattern & 3) != 0
    c0 = (pattern & 12) != 0
    bit = np.where(c1 & c0, r < 0.5, c1).astype(np.int8)
    bit[~(c1 | c0)] = -1
    return bit


def classical_station(phi, test, theta1, theta0, lam, u, r, e0, kinds, thr, sat, eta):
    phi = np.asarray(phi, dtype=np.float64)
    test = np.asarray(test, dtype=bool)
    c = np.cos(2.0 * (phi - lam))
    e_ch1 = e0 * 0.5 * (1.0 + c)
    e_ch0 = e0 * 0.5 * (1.0 - c)
    d1 = np.where(test, np.cos(2.0 * (theta1 - phi)), 1.0)
    d0 = np.where(test, np.cos(2.0 * (theta0 - phi)), 1.0)
    energies = (
        e_ch1 * 0.5 * (1.0 + d1),
        e_ch1 * 0.5 * (1.0 - d1),
        e_ch0 * 0.5 * (1.0 - d0),
        e_ch0 * 0.5 * (1.0 + d0),
    )
    pattern = np.zeros(phi.shape[0], dtype=np.uint8)
    for k in range(4):
        p = _click_prob(int(kinds[k]), thr[k], sat[k], eta[k], energies[k])
        pattern |= (u[:, k] < p).astype(np.uint8) << k
    return pattern, _resolve_bits(pattern, r)


def quantum_channels(phi_a, phi_b, u_first, u_same):
    """Joint channel outcomes of a maximally entangled pair, 1 = channel 1."""
    ch_a = (u_first < 0.5).astype(np.uint8)
    same = u_same < 0.5 * (1.0 + np.cos(2.0 * (phi_a - phi_b)))
    ch_b = np.where(same, ch_a, 1 - ch_a).astype(np.uint8)
    return ch_a, ch_b


def quantum_station(phi, test, theta1, theta0, channel, u_route, u_detect, eta):
    phi = np.asarray(phi, dtype=np.float64)
    test = np.asarray(test, dtype=bool)
    ch1 = channel == 1
    d1 = np.where(test, np.cos(2.0 * (theta1 - phi)), 1.0)
    d0 = np.where(test, np.cos(2.0 * (theta0 - phi)), 1.0)
    # channel-0 photons are polarized perpendicular to the analyzer axis
    p_plus = np.where(ch1, 0.5 * (1.0 + d1), 0.5 * (1.0 - d0))
    plus = u_route < p_plus
    det = np.where(ch1, np.where(plus, 0, 1), np.where(plus, 2, 3)).astype(np.uint8)
    click = u_detect < np.asarray(eta, dtype=np.float64)[det]
    pattern = np.where(click, np.left_shift(1, det), 0).astype(np.uint8)
    bit = np.where(click, channel.astype(np.int8), np.int8(-1)).astype(np.int8)
    return pattern, bit

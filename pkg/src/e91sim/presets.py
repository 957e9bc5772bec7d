"""Named scenario presets.

Energies are in units of the detector threshold (threshold = 1), so the pulse
energy is given as the ratio E0 / threshold.

Default geometry: Alice switches among 0, pi/8, pi/4 with her polarimeters at
0; Bob among pi/8, pi/4, 3pi/8 with his at pi/8. Key rounds use the shared
settings pi/8 and pi/4; CHSH uses a in {0, pi/4} against b in {pi/8, 3pi/8}.
"""

from __future__ import annotations

import math

from .errors import ConfigError
from .optics import IdealThreshold, LinearThreshold, QuantumEfficiency
from .protocol import FairSamplingConfig, SessionConfig
from .scenario import ClassicalPulsePairs, EntangledPairs, StationConfig

P8 = math.pi / 8

ALICE_SETTINGS = (0.0, P8, 2 * P8)
BOB_SETTINGS = (P8, 2 * P8, 3 * P8)
ALICE_THETA = 0.0
BOB_THETA = P8
KEY_SETTINGS = (P8, 2 * P8)
CHSH_SETTINGS = ((0.0, P8), (0.0, 3 * P8), (2 * P8, P8), (2 * P8, 3 * P8))

DEFAULT_TEST_FRACTION = 0.1
DEFAULT_HIGH_ENERGY_RATIO = 4.0

PRESETS = ("genuine", "attack-ideal-linear", "attack-ideal-ideal", "attack-high-energy")


def _session(source, alice_det, bob_det, rounds, seed, test_fraction, fair_sampling, chunk_size):
    alice = StationConfig.uniform(ALICE_SETTINGS, ALICE_THETA, alice_det, test_fraction)
    bob = StationConfig.uniform(BOB_SETTINGS, BOB_THETA, bob_det, test_fraction)
    kw = {} if chunk_size is None else {"chunk_size": chunk_size}
    return SessionConfig(rounds, seed, source, alice, bob, CHSH_SETTINGS, KEY_SETTINGS,
                         fair_sampling or FairSamplingConfig(), **kw)


def make_preset(name: str, rounds: int = 1_000_000, seed: int = 0, eta: float | None = None,
                energy_ratio: float | None = None, test_fraction: float = DEFAULT_TEST_FRACTION,
                fair_sampling: FairSamplingConfig | None = None,
                chunk_size: int | None = None) -> SessionConfig:
    """Build the :class:`SessionConfig` of a named preset.

    ``eta`` applies to ``genuine`` only, ``energy_ratio`` to the attacks.
    """
    if name == "genuine":
        if energy_ratio is not None:
            raise ConfigError("--energy-ratio does not apply to the genuine preset")
        det = QuantumEfficiency(1.0 if eta is None else eta)
        return _session(EntangledPairs(), det, det, rounds, seed, test_fraction, fair_sampling, chunk_size)
    if eta is not None:
        raise ConfigError("--eta applies to the genuine preset only")
    if name == "attack-ideal-linear":
        k = 2.0 if energy_ratio is None else energy_ratio
        return _session(ClassicalPulsePairs(k), IdealThreshold(1.0), LinearThreshold(1.0, 2.0),
                        rounds, seed, test_fraction, fair_sampling, chunk_size)
    if name == "attack-ideal-ideal":
        k = 2.0 if energy_ratio is None else energy_ratio
        return _session(ClassicalPulsePairs(k), IdealThreshold(1.0), IdealThreshold(1.0),
                        rounds, seed, test_fraction, fair_sampling, chunk_size)
    if name == "attack-high-energy":
        k = DEFAULT_HIGH_ENERGY_RATIO if energy_ratio is None else energy_ratio
        if not k > 2.0:
            raise ConfigError("attack-high-energy needs energy ratio > 2")
        return _session(ClassicalPulsePairs(k), IdealThreshold(1.0), IdealThreshold(1.0),
                        rounds, seed, test_fraction, fair_sampling, chunk_size)
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")

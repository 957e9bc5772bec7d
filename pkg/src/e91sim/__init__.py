"""Monte-Carlo simulator for E91 key distribution under a biased-sample attack.

Eve replaces the entangled source by classical pulse pairs tuned to the
detectors' thresholds. A local fair-sampling test can reveal that. The
subpackages map to the pipeline: :mod:`optics` (beamsplitters and detectors),
:mod:`scenario` (sources and stations), :mod:`protocol` (sessions and
statistics), :mod:`analytics` (closed forms and quadrature oracles).
"""

__version__ = "0.1.0"

from .analytics import critical_efficiency, ideal_click_probability, predict_attack_correlation
from .kernels import available_backends
from .optics import Angle, IdealThreshold, LinearThreshold, Pulse, QuantumEfficiency
from .presets import make_preset
from .protocol import SessionConfig, Verdict, estimate_chsh, fair_sampling_test, run_session

__all__ = [
    "Angle", "Pulse", "IdealThreshold", "LinearThreshold", "QuantumEfficiency",
    "SessionConfig", "Verdict", "run_session", "estimate_chsh", "fair_sampling_test",
    "make_preset", "critical_efficiency", "ideal_click_probability",
    "predict_attack_correlation", "available_backends",
]

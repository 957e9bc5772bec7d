"""Brute-force reference values for the classical pulse-pair attack.

Standalone on purpose: it uses only numpy and never imports e91sim. Each
quantity is a plain average over a fine midpoint grid of the shared
polarization lam on [-pi/2, pi/2). Per grid point the four detector
energies are written out from Malus' law and all 16 click patterns of a
station are enumerated explicitly.

Run ``python tests/oracles/lambda_grid.py`` to regenerate
``tests/data/oracle_lambda_grid.json``. The frozen file is what the tests
read, so a change in this script only matters after regeneration.
"""

import json
import math
from pathlib import Path

import numpy as np

N_LAMBDA = 1 << 21
P8 = math.pi / 8
OUT = Path(__file__).resolve().parent.parent / "data" / "oracle_lambda_grid.json"

LAM = -0.5 * math.pi + (np.arange(N_LAMBDA) + 0.5) * (math.pi / N_LAMBDA)


def ideal(thr):
    return lambda e: (e > thr).astype(float)


def linear(thr, sat):
    return lambda e: np.clip((e - thr) / (sat - thr), 0.0, 1.0)


def detector_energies(e0, phi, rel, test):
    """Energies on (ch1+, ch1-, ch0+, ch0-); ``rel`` is analyzer minus polarimeter axis."""
    e1 = e0 * np.cos(phi - LAM) ** 2
    e0r = e0 * np.sin(phi - LAM) ** 2
    if not test:
        rel = 0.0
    c, s = math.cos(rel) ** 2, math.sin(rel) ** 2
    return e1 * c, e1 * s, e0r * s, e0r * c


def pattern_probs(model, energies):
    p = [model(e) for e in energies]
    out = np.empty((16, N_LAMBDA))
    for pat in range(16):
        w = np.ones(N_LAMBDA)
        for k in range(4):
            w = w * (p[k] if pat >> k & 1 else 1.0 - p[k])
        out[pat] = w
    return out


def bit_probs(model, e0, phi):
    """(P[bit 1], P[bit 0]) per lam in a standard round; cross-channel doubles flip a fair coin."""
    probs = pattern_probs(model, detector_energies(e0, phi, 0.0, False))
    b1 = np.zeros(N_LAMBDA)
    b0 = np.zeros(N_LAMBDA)
    for pat in range(1, 16):
        c1, c0 = bool(pat & 3), bool(pat & 12)
        if c1 and c0:
            b1 += 0.5 * probs[pat]
            b0 += 0.5 * probs[pat]
        elif c1:
            b1 += probs[pat]
        else:
            b0 += probs[pat]
    return b1, b0


def correlation(ma, mb, e0, delta):
    a1, a0 = bit_probs(ma, e0, delta)
    b1, b0 = bit_probs(mb, e0, 0.0)
    same = (a1 * b1 + a0 * b0).mean()
    diff = (a1 * b0 + a0 * b1).mean()
    return float((same - diff) / (same + diff)), float(same + diff)


def doubles(model, e0, rel, test):
    probs = pattern_probs(model, detector_energies(e0, 0.0, rel, test)).mean(axis=1)
    pats = np.arange(16)
    return {
        "ch1": float(probs[(pats & 3) == 3].sum()),
        "ch0": float(probs[(pats & 12) == 12].sum()),
        "station": float(probs[((pats & 3) != 0) & ((pats & 12) != 0)].sum()),
        "singles": float(probs[1:].sum()),
    }


def click_probability(model, e0, rel):
    """Transmitted and reflected polarimeter-1 outputs in a test round at offset ``rel``."""
    e = detector_energies(e0, 0.0, -rel, True)
    return float(model(e[0]).mean()), float(model(e[1]).mean())


def main():
    deltas = [k * P8 for k in range(-3, 5)]
    rel_grid = [k * math.pi / 16 for k in range(9)]
    models = {"ideal": ideal(1.0), "linear": linear(1.0, 2.0)}
    data = {"n_lambda": N_LAMBDA, "deltas": deltas, "rel_grid": rel_grid,
            "correlation": {}, "coincidence_rate": {}, "doubles": {}, "click": {}}
    for name, ma, mb, e0 in [("ideal-linear@2", models["ideal"], models["linear"], 2.0),
                             ("ideal-ideal@2", models["ideal"], models["ideal"], 2.0),
                             ("ideal-ideal@2.5", models["ideal"], models["ideal"], 2.5),
                             ("ideal-ideal@3", models["ideal"], models["ideal"], 3.0),
                             ("ideal-ideal@4", models["ideal"], models["ideal"], 4.0)]:
        pairs = [correlation(ma, mb, e0, d) for d in deltas]
        data["correlation"][name] = [p[0] for p in pairs]
        data["coincidence_rate"][name] = [p[1] for p in pairs]
    for e0 in (2.0, 2.5, 3.0, 4.0):
        data["doubles"][f"ideal@{e0:g}"] = {
            "standard": doubles(models["ideal"], e0, 0.0, False),
            "test": [doubles(models["ideal"], e0, k * P8, True) for k in range(3)],
        }
    for name, e0 in [("ideal", 2.0), ("ideal", 4.0), ("linear", 2.0)]:
        vals = [click_probability(models[name], e0, r) for r in rel_grid]
        data["click"][f"{name}@{e0:g}"] = {"transmitted": [v[0] for v in vals],
                                           "reflected": [v[1] for v in vals]}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()

"""Time the compiled and numpy station kernels on identical inputs.

Usage: python benchmarks/bench_kernels.py [--rounds N] [--repeat R]

Reports the best-of-R wall time per kernel and backend, the speedup of the
compiled backend, and whether both produced identical outputs. A full
session timing (``run_session``) is included for context.
"""

import argparse
import time

import numpy as np

from e91sim.kernels import available_backends, get_backend
from e91sim.optics import IdealThreshold, LinearThreshold, detector_params
from e91sim.presets import make_preset
from e91sim.protocol import run_session


def _params(models):
    kinds, thr, sat, eta = zip(*(detector_params(d) for d in models))
    return np.array(kinds, dtype=np.int32), np.array(thr), np.array(sat), np.array(eta)


def make_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "phi": rng.choice([0.0, np.pi / 8, np.pi / 4], n),
        "test": (rng.random(n) < 0.1).astype(np.uint8),
        "lam": rng.uniform(-np.pi / 2, np.pi / 2, n),
        "u": rng.random((n, 4)),
        "r": rng.random(n),
        "u_first": rng.random(n),
        "u_same": rng.random(n),
        "u_route": rng.random(n),
        "u_detect": rng.random(n),
        "phi_b": rng.choice([np.pi / 8, np.pi / 4, 3 * np.pi / 8], n),
    }


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def kernel_calls(k, x):
    models = [IdealThreshold(), IdealThreshold(), LinearThreshold(1.0, 2.0), LinearThreshold(1.0, 2.0)]
    params = _params(models)
    eta = np.full(4, 0.5)
    return {
        "classical_station": lambda: k.classical_station(x["phi"], x["test"], 0.0, 0.0, x["lam"], x["u"],
                                                         x["r"], 2.0, *params),
        "quantum_channels": lambda: k.quantum_channels(x["phi"], x["phi_b"], x["u_first"], x["u_same"]),
        "quantum_station": lambda: k.quantum_station(x["phi"], x["test"], 0.0, 0.0,
                                                     (x["u_first"] < 0.5).astype(np.uint8),
                                                     x["u_route"], x["u_detect"], eta),
    }


def same(a, b):
    return all(np.array_equal(np.asarray(p), np.asarray(q)) for p, q in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--session-rounds", type=int, default=1_000_000)
    args = ap.parse_args()

    backends = available_backends()
    x = make_inputs(args.rounds)
    print(f"backends: {', '.join(backends)}; {args.rounds} rounds per call, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'identical':>11}")
    for name in kernel_calls(get_backend("python"), x):
        times, outs = [], []
        for b in backends:
            t, out = best_time(kernel_calls(get_backend(b), x)[name], args.repeat)
            times.append(t)
            outs.append(out)
        speed = f"{times[-1] / times[0]:.1f}x" if len(times) > 1 else "-"
        ident = str(all(same(outs[0], o) for o in outs[1:]))
        print(f"{name:<20}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + f"{speed:>10}{ident:>11}")

    print(f"\nrun_session, attack-ideal-linear, {args.session_rounds} rounds:")
    cfg = make_preset("attack-ideal-linear", rounds=args.session_rounds, seed=1)
    hists = []
    for b in backends:
        for workers in (1, 4):
            t, stats = best_time(lambda: run_session(cfg, workers=workers, backend=b), 1)
            hists.append(stats.hist)
            print(f"  {b:<8} workers={workers}: {t:.2f}s")
    print(f"  identical histograms: {all(np.array_equal(hists[0], h) for h in hists[1:])}")


if __name__ == "__main__":
    main()

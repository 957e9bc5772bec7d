"""Command-line front end.

Exit codes: 0 all fair-sampling verdicts Pass, 3 any Fail (attack detected),
4 any Inconclusive, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import REFLECTED, TRANSMITTED, grid_from_spec
from .compare import compare_station
from .config import config_digest, config_to_dict, load_config
from .errors import ConfigError, E91Error
from .kernels import get_backend
from .presets import PRESETS, make_preset
from .protocol import ALICE, BOB, Verdict, fair_sampling_test, run_session, singles_rows, tally_rows
from .scenario import ClassicalPulsePairs

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 2, 3, 4
OUT_DIR_ENV = "E91SIM_OUT_DIR"


def _default_out_dir() -> str:
    return os.environ.get(OUT_DIR_ENV, "e91sim-out")


def _manifest(scenario: str, cfg) -> dict:
    return {
        "scenario": scenario,
        "tool": "e91sim",
        "tool_version": __version__,
        "config_digest": config_digest(cfg),
        "config": config_to_dict(cfg),
    }


def _csv_text(header: list[str], rows, manifest: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# e91sim {manifest['tool_version']} scenario={manifest['scenario']} "
              f"digest={manifest['config_digest']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def exit_code(verdicts) -> int:
    verdicts = list(verdicts)
    if Verdict.FAIL in verdicts:
        return EXIT_FAIL
    if Verdict.INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def resolve_run(args) -> tuple[str, object]:
    overrides = {"rounds": args.rounds, "seed": args.seed, "eta": args.eta,
                 "energy_ratio": args.energy_ratio}
    target = args.target
    if target and (args.preset or args.config):
        raise ConfigError("give either a positional target or --preset/--config, not both")
    preset = args.preset or (target if target in PRESETS else None)
    config = args.config or (target if target and target not in PRESETS else None)
    if preset and config:
        raise ConfigError("--preset and --config are mutually exclusive")
    if config:
        if args.test_fraction is not None:
            raise ConfigError("--test-fraction applies to presets; set test_fraction in the config file")
        return load_config(config, overrides)
    kw = {k: v for k, v in overrides.items() if v is not None}
    kw.setdefault("rounds", 1_000_000)
    if args.test_fraction is not None:
        kw["test_fraction"] = args.test_fraction
    name = preset or "attack-ideal-linear"
    return name, make_preset(name, **kw)


def cmd_run(args) -> int:
    name, cfg = resolve_run(args)
    stats = run_session(cfg, workers=args.workers, backend=args.backend)
    manifest = _manifest(name, cfg)
    summary = stats.summary(include_fair_sampling=False)
    verdicts = {st: fair_sampling_test(stats, st) for st in (ALICE, BOB)}
    fair = {st: v.to_dict() for st, v in verdicts.items()}
    summary["fair_sampling"] = {st: v["verdict"] for st, v in fair.items()}
    code = exit_code(v.verdict for v in verdicts.values())
    summary["exit_code"] = code

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(_json_text({"manifest": manifest, "summary": summary}))
    (out / "fair_sampling.json").write_text(_json_text({"manifest": manifest, "fair_sampling": fair}))
    (out / "tallies.csv").write_text(_csv_text(["a_setting", "b_setting", "bits", "count"],
                                               tally_rows(stats), manifest))
    (out / "singles.csv").write_text(_csv_text(["station", "setting", "mode", "detector", "count", "rounds"],
                                               singles_rows(stats), manifest))
    run_manifest = dict(manifest, timestamp=datetime.now(timezone.utc).isoformat(),
                        backend=get_backend(args.backend).BACKEND, workers=args.workers)
    (out / "run_manifest.json").write_text(_json_text(run_manifest))

    chsh = summary["chsh"]
    s_text = "n/a" if chsh["S"] is None else f"{chsh['S']:.4f} +/- {chsh['stderr']:.4f}"
    qber = "n/a" if summary["qber"] is None else f"{summary['qber']:.4g}"
    print(f"{name}: rounds={stats.rounds} S={s_text} qber={qber} "
          f"fair-sampling alice={fair[ALICE]['verdict']} bob={fair[BOB]['verdict']} -> exit {code}")
    return code


def cmd_compare(args) -> int:
    grid = grid_from_spec(args.grid)
    if args.angle_unit == "deg":
        grid = [math.radians(g) for g in grid]
    cfg = make_preset(args.scenario, rounds=0, energy_ratio=args.energy_ratio)
    if not isinstance(cfg.source, ClassicalPulsePairs):
        raise ConfigError("compare needs an attack scenario (threshold detectors)")
    station = cfg.station(args.station)
    report = compare_station(station, cfg.source.e0, grid, args.samples, args.seed, args.arm, args.backend)
    manifest = _manifest(args.scenario, cfg)
    manifest["compare"] = {"station": args.station, "arm": args.arm, "samples": args.samples,
                           "seed": args.seed, "grid_rad": [float(g) for g in grid]}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(r.rel_angle, r.mc, r.stderr, r.analytic, r.z) for r in report.rows]
    (out / "comparison.csv").write_text(_csv_text(["rel_angle", "mc", "stderr", "analytic", "z"], rows, manifest))
    (out / "comparison.json").write_text(_json_text({"manifest": manifest, "points": len(rows),
                                                     "max_abs_z": report.max_abs_z}))
    print(f"{args.scenario}/{args.station}/{args.arm}: {len(rows)} points, max |z| = {report.max_abs_z:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="e91sim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"e91sim {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a seeded E91 session and write summary/tallies/fair-sampling files")
    r.add_argument("target", nargs="?", help=f"preset ({', '.join(PRESETS)}) or config file")
    r.add_argument("--preset", choices=PRESETS)
    r.add_argument("--config")
    r.add_argument("--rounds", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--eta", type=float, help="detector efficiency (genuine preset)")
    r.add_argument("--energy-ratio", type=float, help="pulse energy over detector threshold (attack presets)")
    r.add_argument("--test-fraction", type=float, help="share of rounds running the fair-sampling test")
    r.add_argument("--out-dir", default=None)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--backend", choices=["auto", "cython", "python"], default=None)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="single-station Monte Carlo versus analytic click probabilities")
    c.add_argument("scenario", nargs="?", default="attack-ideal-ideal",
                   choices=[x for x in PRESETS if x != "genuine"])
    c.add_argument("--station", choices=[ALICE, BOB], default=ALICE)
    c.add_argument("--arm", choices=[TRANSMITTED, REFLECTED], default=TRANSMITTED)
    c.add_argument("--grid", default="0:90:9", help="start:stop:num (inclusive) or comma list; '' for none")
    c.add_argument("--angle-unit", choices=["deg", "rad"], default="deg")
    c.add_argument("--samples", type=int, default=1_000_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--energy-ratio", type=float)
    c.add_argument("--out-dir", default=None)
    c.add_argument("--backend", choices=["auto", "cython", "python"], default=None)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.out_dir is None:
        args.out_dir = _default_out_dir()
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"e91sim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"e91sim: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except E91Error as exc:
        print(f"e91sim: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

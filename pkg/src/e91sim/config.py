"""Session config files.

A config is a YAML mapping whose keys mirror :class:`SessionConfig`::

    preset: attack-ideal-linear     # optional starting point
    rounds: 100000
    seed: 7
    angle_unit: deg                 # required whenever angles appear
    source: {type: classical, energy_ratio: 2.0}   # or {type: entangled}
    alice:
      settings: [0, 22.5, 45]
      theta: 0                      # or theta_ch1 / theta_ch0
      test_fraction: 0.1
      detector: {type: ideal, threshold: 1.0}      # or `detectors:` list of four
    bob: {...}
    chsh_settings: [[0, 22.5], [0, 67.5], [45, 22.5], [45, 67.5]]
    key_settings: [22.5, 45]
    fair_sampling: {min_counts: 1000, ratio_threshold: 0.9, z_threshold: 5}

Sections omitted from the file are taken from the preset. Every validation
error carries the line of the offending key.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .optics import Angle, IdealThreshold, LinearThreshold, QuantumEfficiency
from .presets import make_preset
from .protocol import FairSamplingConfig, SessionConfig
from .scenario import ClassicalPulsePairs, EntangledPairs, StationConfig

TOP_KEYS = {"preset", "scenario", "rounds", "seed", "angle_unit", "source", "alice", "bob",
            "chsh_settings", "key_settings", "fair_sampling", "chunk_size", "eta", "energy_ratio"}


class _Doc:
    """YAML data plus a map from key path to 1-based line number."""

    def __init__(self, text: str):
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ConfigError(f"YAML syntax: {exc.problem}", line=mark.line + 1 if mark else None) from None
        self.lines: dict[tuple, int] = {}
        self.data = self._build(node, ()) if node is not None else {}
        if not isinstance(self.data, dict):
            raise ConfigError("config must be a mapping", line=1)

    def _build(self, node: yaml.Node, path: tuple) -> Any:
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = k.value
                out[key] = self._build(v, path + (key,))
                # the key's own line beats the value's start line
                self.lines[path + (key,)] = k.start_mark.line + 1
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._build(v, path + (i,)) for i, v in enumerate(node.value)]
        return _scalar(node)

    def line(self, *path) -> int | None:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def error(self, msg: str, *path) -> ConfigError:
        return ConfigError(msg, line=self.line(*path))


def _scalar(node: yaml.ScalarNode) -> Any:
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _number(doc: _Doc, value: Any, *path, integer: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise doc.error(f"{'.'.join(map(str, path))} must be a number, got {value!r}", *path)
    if integer and not float(value).is_integer():
        raise doc.error(f"{'.'.join(map(str, path))} must be an integer", *path)
    return int(value) if integer else float(value)


def _angle(doc: _Doc, value: Any, unit: str | None, *path) -> float:
    if unit is None:
        raise doc.error("angles present but `angle_unit` (deg or rad) is missing", *path)
    x = _number(doc, value, *path)
    return math.radians(x) if unit == "deg" else x


def _detector(doc: _Doc, spec: Any, *path):
    if not isinstance(spec, dict) or "type" not in spec:
        raise doc.error("detector needs a mapping with a `type`", *path)
    kind = spec["type"]
    try:
        if kind == "ideal":
            return IdealThreshold(_number(doc, spec.get("threshold", 1.0), *path, "threshold"))
        if kind == "linear":
            sat = spec.get("saturation")
            return LinearThreshold(_number(doc, spec.get("threshold", 1.0), *path, "threshold"),
                                   None if sat is None else _number(doc, sat, *path, "saturation"))
        if kind == "efficiency":
            return QuantumEfficiency(_number(doc, spec.get("eta", 1.0), *path, "eta"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise doc.error(str(exc), *path) from None
    raise doc.error(f"unknown detector type {kind!r} (ideal, linear, efficiency)", *path, "type")


def _station(doc: _Doc, spec: Any, base: StationConfig, unit: str | None, name: str) -> StationConfig:
    if not isinstance(spec, dict):
        raise doc.error(f"{name} must be a mapping", name)
    unknown = set(spec) - {"settings", "theta", "theta_ch1", "theta_ch0", "test_fraction",
                           "detector", "detectors"}
    if unknown:
        key = sorted(unknown)[0]
        raise doc.error(f"unknown key {name}.{key}", name, key)
    settings = base.settings
    if "settings" in spec:
        if not isinstance(spec["settings"], list) or not spec["settings"]:
            raise doc.error(f"{name}.settings must be a non-empty list", name, "settings")
        settings = tuple(_angle(doc, v, unit, name, "settings", i) for i, v in enumerate(spec["settings"]))
    th1, th0 = base.theta_ch1, base.theta_ch0
    if "theta" in spec:
        th1 = th0 = _angle(doc, spec["theta"], unit, name, "theta")
    if "theta_ch1" in spec:
        th1 = _angle(doc, spec["theta_ch1"], unit, name, "theta_ch1")
    if "theta_ch0" in spec:
        th0 = _angle(doc, spec["theta_ch0"], unit, name, "theta_ch0")
    detectors = base.detectors
    if "detector" in spec:
        detectors = (_detector(doc, spec["detector"], name, "detector"),) * 4
    if "detectors" in spec:
        lst = spec["detectors"]
        if not isinstance(lst, list) or len(lst) != 4:
            raise doc.error(f"{name}.detectors must list four detectors (ch1+, ch1-, ch0+, ch0-)",
                            name, "detectors")
        detectors = tuple(_detector(doc, d, name, "detectors", i) for i, d in enumerate(lst))
    tf = base.test_fraction
    if "test_fraction" in spec:
        tf = _number(doc, spec["test_fraction"], name, "test_fraction")
    try:
        return StationConfig(settings, th1, th0, detectors, tf)
    except ConfigError as exc:
        raise doc.error(str(exc), name) from None


def parse_config(text: str, overrides: dict | None = None) -> tuple[str, SessionConfig]:
    """Parse config text into ``(scenario_name, SessionConfig)``.

    ``overrides`` holds CLI values (rounds, seed, eta, energy_ratio) that win
    over the file.
    """
    doc = _Doc(text)
    data = doc.data
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key in data:
        if key not in TOP_KEYS:
            raise doc.error(f"unknown top-level key {key!r}", key)
    unit = data.get("angle_unit")
    if unit is not None and unit not in ("deg", "rad"):
        raise doc.error("angle_unit must be 'deg' or 'rad'", "angle_unit")
    preset = data.get("preset", "attack-ideal-linear")
    name = str(data.get("scenario", preset))

    rounds = overrides.get("rounds", data.get("rounds", 1_000_000))
    rounds = _number(doc, rounds, "rounds", integer=True)
    seed = _number(doc, overrides.get("seed", data.get("seed", 0)), "seed", integer=True)
    eta = overrides.get("eta", data.get("eta"))
    ratio = overrides.get("energy_ratio", data.get("energy_ratio"))
    try:
        base = make_preset(str(preset), rounds=rounds, seed=seed, eta=eta, energy_ratio=ratio)
    except ConfigError as exc:
        raise doc.error(str(exc), "preset") from None

    source = base.source
    if "source" in data:
        spec = data["source"]
        if not isinstance(spec, dict) or spec.get("type") not in ("classical", "entangled"):
            raise doc.error("source.type must be 'classical' or 'entangled'", "source")
        if spec["type"] == "entangled":
            source = EntangledPairs()
        else:
            k = ratio if ratio is not None else spec.get("energy_ratio", 2.0)
            source = ClassicalPulsePairs(_number(doc, k, "source", "energy_ratio"))

    alice = _station(doc, data["alice"], base.alice, unit, "alice") if "alice" in data else base.alice
    bob = _station(doc, data["bob"], base.bob, unit, "bob") if "bob" in data else base.bob
    if eta is not None and isinstance(source, EntangledPairs):
        alice = replace(alice, detectors=(QuantumEfficiency(eta),) * 4)
        bob = replace(bob, detectors=(QuantumEfficiency(eta),) * 4)

    chsh = base.chsh_settings
    if "chsh_settings" in data:
        lst = data["chsh_settings"]
        if not isinstance(lst, list) or len(lst) != 4 or not all(isinstance(p, list) and len(p) == 2 for p in lst):
            raise doc.error("chsh_settings must be four [a, b] pairs", "chsh_settings")
        chsh = tuple((_angle(doc, a, unit, "chsh_settings", i), _angle(doc, b, unit, "chsh_settings", i))
                     for i, (a, b) in enumerate(lst))
    keys = base.key_settings
    if "key_settings" in data:
        lst = data["key_settings"]
        if not isinstance(lst, list):
            raise doc.error("key_settings must be a list", "key_settings")
        keys = tuple(_angle(doc, v, unit, "key_settings", i) for i, v in enumerate(lst))
    fs = base.fair_sampling
    if "fair_sampling" in data:
        spec = data["fair_sampling"]
        if not isinstance(spec, dict):
            raise doc.error("fair_sampling must be a mapping", "fair_sampling")
        fs = FairSamplingConfig(
            _number(doc, spec.get("min_counts", fs.min_counts), "fair_sampling", "min_counts", integer=True),
            _number(doc, spec.get("ratio_threshold", fs.ratio_threshold), "fair_sampling", "ratio_threshold"),
            _number(doc, spec.get("z_threshold", fs.z_threshold), "fair_sampling", "z_threshold"),
        )
    chunk = _number(doc, data.get("chunk_size", base.chunk_size), "chunk_size", integer=True)
    try:
        cfg = SessionConfig(rounds, seed, source, alice, bob, chsh, keys, fs, chunk)
    except ConfigError as exc:
        where = next((k for k in ("chsh_settings", "key_settings", "source", "rounds", "seed") if k in data), None)
        raise doc.error(str(exc), *((where,) if where else ())) from None
    return name, cfg


def load_config(path: str | Path, overrides: dict | None = None) -> tuple[str, SessionConfig]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    return parse_config(text, overrides)


# -- canonical form ---------------------------------------------------------------

def _detector_dict(d) -> dict:
    if isinstance(d, IdealThreshold):
        return {"type": "ideal", "threshold": d.threshold}
    if isinstance(d, LinearThreshold):
        return {"type": "linear", "threshold": d.threshold, "saturation": d.saturation}
    return {"type": "efficiency", "eta": d.eta}


def _rad(a: Angle | float) -> float:
    return float(a)


def config_to_dict(cfg: SessionConfig) -> dict:
    """Canonical, JSON-ready form of a resolved config; angles in radians."""
    src = ({"type": "entangled"} if isinstance(cfg.source, EntangledPairs)
           else {"type": "classical", "energy_ratio": cfg.source.e0})

    def station(st: StationConfig) -> dict:
        return {
            "settings": [_rad(s) for s in st.settings],
            "theta_ch1": _rad(st.theta_ch1),
            "theta_ch0": _rad(st.theta_ch0),
            "test_fraction": st.test_fraction,
            "detectors": [_detector_dict(d) for d in st.detectors],
        }

    return {
        "rounds": int(cfg.rounds),
        "seed": int(cfg.seed),
        "angle_unit": "rad",
        "source": src,
        "alice": station(cfg.alice),
        "bob": station(cfg.bob),
        "chsh_settings": [[_rad(a), _rad(b)] for a, b in cfg.chsh_settings],
        "key_settings": [_rad(k) for k in cfg.key_settings],
        "fair_sampling": {
            "min_counts": cfg.fair_sampling.min_counts,
            "ratio_threshold": cfg.fair_sampling.ratio_threshold,
            "z_threshold": cfg.fair_sampling.z_threshold,
        },
        "chunk_size": cfg.chunk_size,
    }


def config_digest(cfg: SessionConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


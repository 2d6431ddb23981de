"""Run manifests: a single self-describing JSON file per experiment.

Parsing is strict: unknown keys, type mismatches and constraint violations
are all collected and reported together, never silently ignored.  Every run
writes its resolved manifest (defaults filled in) beside its outputs, so a
rerun from that file reproduces the outputs bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

__all__ = ["Manifest", "ManifestError", "parse_manifest", "resolve_manifest"]

SCHEMA_VERSION = 1

KINDS = ("simulate", "oscint", "probe-kato", "probe-strichartz",
         "beta", "ensemble", "scatter")


class ManifestError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid manifest:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class Manifest:
    kind: str
    grid: dict
    solver: dict
    noise: dict
    section: dict  # the kind-specific block
    out_dir: str
    seed: int
    warnings: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "grid": dict(self.grid),
            "solver": dict(self.solver),
            "noise": dict(self.noise),
            "output": {"dir": self.out_dir},
            "seed": self.seed,
        }
        if self.section:
            doc[_section_name(self.kind)] = dict(self.section)
        return doc


_GRID_DEFAULTS = {"n": 256, "length": 60.0}
_SOLVER_DEFAULTS = {"k": 4, "sign": 1, "dt": 0.01, "dealias": 2.0 / 3.0,
                    "horizon": 1.0, "snapshot_stride": 1}
_NOISE_DEFAULTS = {"enabled": False, "profile": "gaussian", "amplitude": 1.0,
                   "width": 1.0, "center": None, "gamma": 0.7,
                   "envelope": "power"}

_SECTION_KEYS = {
    "simulate": {"initial": "gaussian", "amplitude": 0.1, "width": 2.0,
                 "center": None, "speed": 1.0},
    "oscint": {"pairs": [[3, 0.0]], "x_min": 100.0, "x_max": 1.0e4,
               "levels": 8, "branch": "auto", "near_samples": 41},
    "probe-kato": {"p": 5.0, "q": 10.0, "alpha": 0.0, "n_data": 100,
                   "horizon": 3.0, "n_times": 192},
    "probe-strichartz": {"p": math.inf, "q": 6.0, "beta": 0.0, "n_data": 100,
                         "horizon": 3.0, "n_times": 192},
    "beta": {"k": 4, "T_grid": [1.0, 2.0, 4.0, 8.0], "n_paths": 64,
             "dt": 0.01, "snapshots_per_unit": 16},
    "ensemble": {"estimator": "mass", "n_paths": 100, "times": [0.5, 1.0, 2.0]},
    "scatter": {"checkpoints": [10.0, 20.0, 40.0], "T_grid": [5.0, 10.0, 20.0],
                "n_paths": 20, "u0_norm": 0.1, "u0_width": 2.0},
}


def _section_name(kind: str) -> str:
    return kind.replace("-", "_")


def _take(block: dict, defaults: dict, where: str, problems: list) -> dict:
    out = dict(defaults)
    for key, val in block.items():
        if key not in defaults:
            problems.append(f"{where}: unknown key {key!r}")
            continue
        ref = defaults[key]
        if ref is not None and not isinstance(val, type(ref)) \
                and not (isinstance(ref, float) and isinstance(val, int)) \
                and not (isinstance(ref, (int, float)) and val in ("inf", "Infinity")):
            problems.append(f"{where}.{key}: expected {type(ref).__name__}, "
                            f"got {type(val).__name__} ({val!r})")
            continue
        if val in ("inf", "Infinity"):
            val = math.inf
        out[key] = val
    return out


def parse_manifest(text: str) -> Manifest:
    """Validate the manifest text; raises ManifestError listing every problem."""
    problems: list = []
    warnings: list = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError([f"not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ManifestError(["manifest must be a JSON object"])

    if "schema_version" not in doc:
        problems.append("missing schema_version")
    elif doc["schema_version"] != SCHEMA_VERSION:
        problems.append(f"unsupported schema_version {doc['schema_version']!r}"
                        f" (this build reads {SCHEMA_VERSION})")

    kind = doc.get("kind")
    if kind not in KINDS:
        problems.append(f"kind must be one of {KINDS}, got {kind!r}")
        raise ManifestError(problems)

    known_top = {"schema_version", "kind", "grid", "solver", "noise",
                 "output", "seed", _section_name(kind)}
    for key in doc:
        if key not in known_top:
            problems.append(f"unknown top-level key {key!r}")

    grid = _take(doc.get("grid", {}), _GRID_DEFAULTS, "grid", problems)
    solver = _take(doc.get("solver", {}), _SOLVER_DEFAULTS, "solver", problems)
    noise = _take(doc.get("noise", {}), _NOISE_DEFAULTS, "noise", problems)
    section = _take(doc.get(_section_name(kind), {}),
                    _SECTION_KEYS[kind], _section_name(kind), problems)

    out_block = doc.get("output", {})
    if not isinstance(out_block, dict) or set(out_block) - {"dir"}:
        problems.append("output block must be {'dir': <path>}")
    out_dir = out_block.get("dir", "out") if isinstance(out_block, dict) else "out"
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append(f"seed must be a nonnegative integer, got {seed!r}")

    # cross-field constraints
    n = grid["n"]
    if not (isinstance(n, int) and n >= 8 and (n & (n - 1)) == 0):
        problems.append(f"grid.n must be a power of two >= 8, got {n!r}")
    if not (isinstance(grid["length"], (int, float)) and grid["length"] > 0):
        problems.append(f"grid.length must be positive, got {grid['length']!r}")
    if not (isinstance(solver["k"], int) and solver["k"] >= 4):
        problems.append(f"solver.k must be an integer >= 4, got {solver['k']!r}")
    if solver["sign"] not in (1, -1, 0):
        problems.append(f"solver.sign must be 1, -1 or 0, got {solver['sign']!r}")
    if not (0.5 < solver["dealias"] < 1.0):
        problems.append(f"solver.dealias must lie in (1/2, 1), got {solver['dealias']!r}")
    if not (solver["dt"] > 0):
        problems.append(f"solver.dt must be positive, got {solver['dt']!r}")
    if noise["profile"] not in ("gaussian", "sech2"):
        problems.append(f"noise.profile must be 'gaussian' or 'sech2', got {noise['profile']!r}")
    if noise["envelope"] not in ("power", "constant"):
        problems.append(f"noise.envelope must be 'power' or 'constant', got {noise['envelope']!r}")
    if not (noise["gamma"] > 0):
        problems.append(f"noise.gamma must be positive, got {noise['gamma']!r}")
    if kind == "simulate" and section["initial"] not in ("gaussian", "dgaussian",
                                                         "soliton", "zero"):
        problems.append(f"simulate.initial must be gaussian, dgaussian, soliton or zero, "
                        f"got {section['initial']!r}")

    if kind == "ensemble":
        if section["estimator"] not in ("mass", "mass-energy", "convolution-energy"):
            problems.append(f"ensemble.estimator must be one of mass, mass-energy, "
                            f"convolution-energy; got {section['estimator']!r}")
        if section["estimator"] == "mass-energy" and solver["k"] % 2 == 1:
            problems.append(
                f"ensemble.estimator='mass-energy' needs an even k: the energy of "
                f"odd powers is sign-indefinite, so its moments are not a "
                f"growth diagnostic (k={solver['k']})")
        if section["n_paths"] < 2:
            problems.append("ensemble.n_paths must be at least 2")
    if kind == "scatter":
        if noise["gamma"] <= 2.0 / 3.0:
            warnings.append(
                f"noise.gamma={noise['gamma']} is at or below 2/3; the scattering "
                f"diagnostics assume a faster-decaying envelope and the trend "
                f"gates may not hold")
        if solver["k"] != 4 and solver["k"] % 2 == 1:
            problems.append("scatter experiments need k = 4 or an even k > 4")
    if kind == "beta" and section["k"] < 4:
        problems.append(f"beta.k must be >= 4, got {section['k']!r}")
    if kind == "oscint":
        pairs = section["pairs"]
        if not (isinstance(pairs, list) and pairs
                and all(isinstance(p, list) and len(p) == 2 for p in pairs)):
            problems.append("oscint.pairs must be a nonempty list of [b, alpha] pairs")
        else:
            for b, a in pairs:
                if not (-1.0 < a < b - 1.0):
                    problems.append(f"oscint pair ({b}, {a}): alpha outside (-1, b-1)")

    if problems:
        raise ManifestError(problems)
    return Manifest(kind, grid, solver, noise, section, out_dir, seed, tuple(warnings))


def resolve_manifest(m: Manifest) -> str:
    """Serialized resolved manifest (defaults filled), for writing beside outputs."""
    doc = m.to_json()

    def _clean(obj):
        if isinstance(obj, dict):
            return {k: _clean(v) for k, v in obj.items()}
        if obj == math.inf:
            return "inf"
        return obj

    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"

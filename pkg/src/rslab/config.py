"""Run configuration: a single JSON document, schema-validated with
field-path errors and near-miss suggestions for unknown keys.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import energy_grid
from .randop import OperatorModel, SiteDistribution
from .resolvent import EtaLadder
from .topology import build_graph

COMMANDS = (
    "green", "dos", "gamma-scan", "resonance", "lyapunov", "phase-scan",
    "verify-all",
)
TREE_ONLY_COMMANDS = ("resonance", "lyapunov", "phase-scan")


class ConfigError(ValueError):
    """Invalid configuration; carries the dotted field path."""

    def __init__(self, path, message, suggestion=None):
        self.path = path
        self.suggestion = suggestion
        text = f"config error at '{path}': {message}" if path else f"config error: {message}"
        if suggestion:
            text += f" (did you mean '{suggestion}'?)"
        super().__init__(text)


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _require_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected an object, got {type(obj).__name__}")


def _check_keys(obj, allowed, path):
    for key in obj:
        if key not in allowed:
            near = difflib.get_close_matches(key, allowed, n=1, cutoff=0.6)
            raise ConfigError(
                _join(path, key), "unknown key", suggestion=near[0] if near else None
            )


def _number(obj, key, path, default=None, required=False, minimum=None,
            exclusive_minimum=None, maximum=None):
    if key not in obj:
        if required:
            raise ConfigError(_join(path, key), "required field is missing")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(_join(path, key), f"expected a number, got {type(val).__name__}")
    val = float(val)
    if minimum is not None and val < minimum:
        raise ConfigError(_join(path, key), f"must be >= {minimum}, got {val}")
    if exclusive_minimum is not None and val <= exclusive_minimum:
        raise ConfigError(_join(path, key), f"must be > {exclusive_minimum}, got {val}")
    if maximum is not None and val > maximum:
        raise ConfigError(_join(path, key), f"must be <= {maximum}, got {val}")
    return val


def _integer(obj, key, path, default=None, required=False, minimum=None, maximum=None):
    if key not in obj:
        if required:
            raise ConfigError(_join(path, key), "required field is missing")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(_join(path, key), f"expected an integer, got {type(val).__name__}")
    if minimum is not None and val < minimum:
        raise ConfigError(_join(path, key), f"must be >= {minimum}, got {val}")
    if maximum is not None and val > maximum:
        raise ConfigError(_join(path, key), f"must be <= {maximum}, got {val}")
    return int(val)


def _string(obj, key, path, default=None, required=False, choices=None):
    if key not in obj:
        if required:
            raise ConfigError(_join(path, key), "required field is missing")
        return default
    val = obj[key]
    if not isinstance(val, str):
        raise ConfigError(_join(path, key), f"expected a string, got {type(val).__name__}")
    if choices and val not in choices:
        near = difflib.get_close_matches(val, choices, n=1, cutoff=0.5)
        raise ConfigError(
            _join(path, key), f"must be one of {sorted(choices)}, got {val!r}",
            suggestion=near[0] if near else None,
        )
    return val


def _parse_topology(obj, path):
    _require_mapping(obj, path)
    kind = _string(obj, "kind", path, required=True,
                   choices=("tree", "box", "complete", "custom"))
    if kind == "tree":
        _check_keys(obj, ("kind", "branching", "depth"), path)
        return {
            "kind": "tree",
            "branching": _integer(obj, "branching", path, required=True, minimum=2),
            "depth": _integer(obj, "depth", path, required=True, minimum=1),
        }
    if kind == "box":
        _check_keys(obj, ("kind", "dims"), path)
        dims = obj.get("dims")
        if not isinstance(dims, list) or not dims or not all(
            isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims
        ):
            raise ConfigError(_join(path, "dims"),
                              "expected a non-empty list of integers >= 1")
        return {"kind": "box", "dims": [int(d) for d in dims]}
    if kind == "complete":
        _check_keys(obj, ("kind", "n"), path)
        return {"kind": "complete", "n": _integer(obj, "n", path, required=True, minimum=2)}
    _check_keys(obj, ("kind", "edges"), path)
    edges = obj.get("edges")
    if not isinstance(edges, list) or not edges or not all(
        isinstance(e, list) and len(e) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in e)
        for e in edges
    ):
        raise ConfigError(_join(path, "edges"),
                          "expected a non-empty list of [i, j] vertex pairs")
    return {"kind": "custom", "edges": [[int(e[0]), int(e[1])] for e in edges]}


_DIST_KEYS = {
    "uniform": ("kind", "a", "b"),
    "gaussian": ("kind", "a", "b"),
    "cauchy": ("kind", "a", "b"),
    "bernoulli": ("kind", "p", "v0", "v1"),
}


def _parse_dist(obj, path):
    _require_mapping(obj, path)
    kind = _string(obj, "kind", path, default="uniform",
                   choices=tuple(_DIST_KEYS))
    _check_keys(obj, _DIST_KEYS[kind], path)
    if kind == "bernoulli":
        return {
            "kind": kind,
            "p": _number(obj, "p", path, default=0.5, minimum=0.0, maximum=1.0),
            "v0": _number(obj, "v0", path, default=0.0),
            "v1": _number(obj, "v1", path, default=1.0),
        }
    a = _number(obj, "a", path, default=0.0 if kind != "uniform" else -1.0)
    b = _number(obj, "b", path, default=1.0)
    if kind == "uniform" and b <= a:
        raise ConfigError(_join(path, "b"), f"uniform needs b > a, got a={a}, b={b}")
    if kind in ("gaussian", "cauchy") and b <= 0:
        raise ConfigError(_join(path, "b"), f"{kind} scale must be > 0, got {b}")
    return {"kind": kind, "a": a, "b": b}


def _parse_model(obj, path):
    _require_mapping(obj, path)
    _check_keys(obj, ("topology", "dist", "lambda", "seed"), path)
    if "topology" not in obj:
        raise ConfigError(_join(path, "topology"), "required field is missing")
    topology = _parse_topology(obj["topology"], _join(path, "topology"))
    dist = _parse_dist(obj.get("dist", {}), _join(path, "dist"))
    lam = _number(obj, "lambda", path, default=1.0, minimum=0.0)
    seed = _integer(obj, "seed", path, default=0, minimum=0)
    return {"topology": topology, "dist": dist, "lambda": lam, "seed": seed}


def _parse_ladder(obj, path):
    _require_mapping(obj, path)
    _check_keys(obj, ("eta0", "rungs", "factor"), path)
    return {
        "eta0": _number(obj, "eta0", path, default=1e-1, exclusive_minimum=0.0),
        "rungs": _integer(obj, "rungs", path, default=14, minimum=2),
        "factor": _number(obj, "factor", path, default=2.0, exclusive_minimum=1.0),
    }


def _parse_grid(obj, path, default_lo=-2.0, default_hi=2.0, default_count=11):
    """An energy/lambda grid: either an explicit list or {lo, hi, count}."""
    if obj is None:
        return {"lo": default_lo, "hi": default_hi, "count": default_count,
                "offset": True}
    if isinstance(obj, list):
        if not obj or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj
        ):
            raise ConfigError(path, "expected a non-empty list of numbers")
        return {"values": [float(v) for v in obj]}
    _require_mapping(obj, path)
    _check_keys(obj, ("lo", "hi", "count", "offset"), path)
    lo = _number(obj, "lo", path, default=default_lo)
    hi = _number(obj, "hi", path, default=default_hi)
    if hi < lo:
        raise ConfigError(_join(path, "hi"), f"must be >= lo={lo}, got {hi}")
    count = _integer(obj, "count", path, default=default_count, minimum=1)
    offset = obj.get("offset", True)
    if not isinstance(offset, bool):
        raise ConfigError(_join(path, "offset"), "expected true/false")
    return {"lo": lo, "hi": hi, "count": count, "offset": offset}


_PARAM_KEYS = {
    "green": ("x", "y", "energy", "eta", "replicate"),
    "dos": ("energies", "eta", "replicates", "chunk"),
    "gamma-scan": ("energies", "x", "replicates", "chunk"),
    "resonance": ("energy", "radii", "delta", "replicates",
                  "calibration_replicates", "dos_replicates", "chunk"),
    "lyapunov": ("energies", "d_window", "replicates", "eta", "chunk"),
    "phase-scan": ("energies", "lambdas", "s", "d_window", "replicates",
                   "eta", "chunk"),
    "verify-all": ("replicates", "quick"),
}


def _parse_params(command, obj, path):
    _require_mapping(obj, path)
    _check_keys(obj, _PARAM_KEYS[command], path)
    p = {}
    if command == "green":
        p["x"] = _integer(obj, "x", path, default=0, minimum=0)
        p["y"] = _integer(obj, "y", path, default=None, minimum=0)
        p["energy"] = _number(obj, "energy", path, default=0.0)
        p["eta"] = _number(obj, "eta", path, default=1e-3, exclusive_minimum=0.0)
        p["replicate"] = _integer(obj, "replicate", path, default=0, minimum=0)
    elif command == "dos":
        p["energies"] = _parse_grid(obj.get("energies"), _join(path, "energies"),
                                    -3.0, 3.0, 21)
        p["eta"] = _number(obj, "eta", path, default=1e-3, exclusive_minimum=0.0)
        p["replicates"] = _integer(obj, "replicates", path, default=2000, minimum=2)
        p["chunk"] = _integer(obj, "chunk", path, default=256, minimum=1)
    elif command == "gamma-scan":
        p["energies"] = _parse_grid(obj.get("energies"), _join(path, "energies"),
                                    -2.0, 2.0, 11)
        p["x"] = _integer(obj, "x", path, default=None, minimum=0)
        p["replicates"] = _integer(obj, "replicates", path, default=100, minimum=2)
        p["chunk"] = _integer(obj, "chunk", path, default=256, minimum=1)
    elif command == "resonance":
        p["energy"] = _number(obj, "energy", path, default=0.0)
        radii = obj.get("radii", [4, 6, 8])
        if not isinstance(radii, list) or not radii or not all(
            isinstance(r, int) and not isinstance(r, bool) and r >= 1 for r in radii
        ):
            raise ConfigError(_join(path, "radii"),
                              "expected a non-empty list of integers >= 1")
        p["radii"] = [int(r) for r in radii]
        p["delta"] = _number(obj, "delta", path, default=0.01,
                             exclusive_minimum=0.0, maximum=1.0)
        p["replicates"] = _integer(obj, "replicates", path, default=2000, minimum=10)
        p["calibration_replicates"] = _integer(
            obj, "calibration_replicates", path, default=200, minimum=2)
        p["dos_replicates"] = _integer(obj, "dos_replicates", path, default=2000,
                                       minimum=2)
        p["chunk"] = _integer(obj, "chunk", path, default=64, minimum=1)
    elif command == "lyapunov":
        p["energies"] = _parse_grid(obj.get("energies"), _join(path, "energies"),
                                    -2.0, 2.0, 11)
        p["d_window"] = _parse_window(obj.get("d_window", [6, 12]),
                                      _join(path, "d_window"))
        p["replicates"] = _integer(obj, "replicates", path, default=200, minimum=2)
        p["eta"] = _number(obj, "eta", path, default=1e-6, exclusive_minimum=0.0)
        p["chunk"] = _integer(obj, "chunk", path, default=64, minimum=1)
    elif command == "phase-scan":
        p["energies"] = _parse_grid(obj.get("energies"), _join(path, "energies"),
                                    -2.0, 2.0, 5)
        p["lambdas"] = _parse_grid(obj.get("lambdas"), _join(path, "lambdas"),
                                   0.1, 1.0, 4)
        p["s"] = _number(obj, "s", path, default=0.5, exclusive_minimum=0.0,
                         maximum=0.999999)
        p["d_window"] = _parse_window(obj.get("d_window", [6, 12]),
                                      _join(path, "d_window"))
        p["replicates"] = _integer(obj, "replicates", path, default=100, minimum=2)
        p["eta"] = _number(obj, "eta", path, default=1e-6, exclusive_minimum=0.0)
        p["chunk"] = _integer(obj, "chunk", path, default=64, minimum=1)
    else:  # verify-all
        p["replicates"] = _integer(obj, "replicates", path, default=200, minimum=10)
        quick = obj.get("quick", True)
        if not isinstance(quick, bool):
            raise ConfigError(_join(path, "quick"), "expected true/false")
        p["quick"] = quick
    return p


def _parse_window(obj, path):
    if (not isinstance(obj, list) or len(obj) != 2 or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in obj
    ) or obj[0] > obj[1]):
        raise ConfigError(path, "expected [d_min, d_max] with 1 <= d_min <= d_max")
    return [int(obj[0]), int(obj[1])]


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: dict
    ladder: dict
    params: dict
    output_dir: str
    workers: int | None
    raw: dict = field(repr=False)

    def build_model(self, seed_override=None) -> OperatorModel:
        topo = dict(self.model["topology"])
        kind = topo.pop("kind")
        g = build_graph(kind, **topo)
        d = self.model["dist"]
        dist = SiteDistribution(**d)
        seed = self.model["seed"] if seed_override is None else int(seed_override)
        return OperatorModel(topology=g, dist=dist, lam=self.model["lambda"],
                             seed=seed)

    def build_ladder(self) -> EtaLadder:
        return EtaLadder(**self.ladder)

    def grid_values(self, name) -> np.ndarray:
        spec = self.params[name]
        if "values" in spec:
            return np.asarray(spec["values"], dtype=float)
        if spec["offset"]:
            return energy_grid(spec["lo"], spec["hi"], spec["count"])
        return np.linspace(spec["lo"], spec["hi"], spec["count"])

    def canonical(self) -> str:
        """Canonical JSON of the validated config (defaults filled)."""
        doc = {
            "command": self.command,
            "model": self.model,
            "ladder": self.ladder,
            "params": self.params,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_config(text: str) -> RunConfig:
    """Validate a JSON config document into a RunConfig with defaults filled."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"not valid JSON: {exc}") from None
    _require_mapping(doc, "")
    _check_keys(doc, ("command", "model", "ladder", "params", "output_dir",
                      "workers"), "")
    command = _string(doc, "command", "", required=True, choices=COMMANDS)
    if "model" not in doc:
        raise ConfigError("model", "required field is missing")
    model = _parse_model(doc["model"], "model")
    if command in TREE_ONLY_COMMANDS and model["topology"]["kind"] != "tree":
        raise ConfigError(
            "model.topology.kind",
            f"command '{command}' needs a tree topology, got "
            f"'{model['topology']['kind']}'",
        )
    if command == "dos" and model["dist"]["kind"] == "bernoulli":
        raise ConfigError(
            "model.dist.kind",
            "command 'dos' needs an absolutely continuous site distribution",
        )
    ladder = _parse_ladder(doc.get("ladder", {}), "ladder")
    params = _parse_params(command, doc.get("params", {}), "params")
    output_dir = _string(doc, "output_dir", "", default="out")
    workers = _integer(doc, "workers", "", default=None, minimum=1)
    if command in ("lyapunov", "phase-scan"):
        depth = model["topology"]["depth"]
        if params["d_window"][1] > depth - 2:
            raise ConfigError(
                "params.d_window",
                f"window end {params['d_window'][1]} exceeds depth-2 = {depth - 2} "
                "(outermost shells are boundary-contaminated)",
            )
    if command == "resonance":
        depth = model["topology"]["depth"]
        bad = [r for r in params["radii"] if r > depth - 2]
        if bad:
            raise ConfigError(
                "params.radii",
                f"radii {bad} exceed depth-2 = {depth - 2} "
                "(outermost shells are boundary-contaminated)",
            )
    return RunConfig(
        command=command, model=model, ladder=ladder, params=params,
        output_dir=output_dir, workers=workers, raw=doc,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

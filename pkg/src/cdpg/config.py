"""JSON scenario/run configuration: schema, parsing and export.

Structural problems are collected and reported together: first every
schema violation (with its JSON path), then every semantic one (graph
errors, dimension mismatches).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import jsonschema

from .errors import CDPGError, ConfigError
from .functions import function_from_dict
from .graph import ClusterGraph, MultiClusterNetwork
from .problem import MODES, AgentSpec, Coupling, ScenarioSpec, Weights

_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM}
_PARAM = {"oneOf": [_NUM, _NUMS]}
_EDGE = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}

_FUNCTION = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["quadratic", "quadexp", "box", "norm", "zero"]},
        "a": _PARAM, "b": _PARAM, "rho1": _PARAM, "rho2": _PARAM, "rho3": _PARAM,
        "lower": _PARAM, "upper": _PARAM, "order": {"enum": [1, 2]}, "weight": _NUM,
    },
    "additionalProperties": False,
}

RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "max_iters": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "safety": {"type": "number", "exclusiveMinimum": 0},
        "record_every": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer"},
        "out_trace": {"type": "string"},
        "out_summary": {"type": "string"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["network", "agents", "coupling"],
    "properties": {
        "name": {"type": "string"},
        "network": {
            "type": "object",
            "required": ["clusters", "global_edges"],
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "clusters": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["size"],
                        "properties": {
                            "size": {"type": "integer", "minimum": 1},
                            "intra_edges": {"type": "array", "items": _EDGE},
                        },
                        "additionalProperties": False,
                    },
                },
                "global_edges": {"type": "array", "items": _EDGE},
            },
            "additionalProperties": False,
        },
        "agents": {
            "type": "object",
            "patternProperties": {
                r"^[0-9]+\.[0-9]+$": {
                    "type": "object",
                    "required": ["f"],
                    "properties": {"f": _FUNCTION, "g": _FUNCTION},
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "coupling": {
            "type": "object",
            "required": ["A", "b"],
            "properties": {
                "A": {"oneOf": [{"type": "array", "items": _NUMS}, _NUMS]},
                "b": _NUMS,
                "mode": {"enum": list(MODES)},
            },
            "additionalProperties": False,
        },
        "weights": {
            "type": "object",
            "properties": {
                "kappa": _NUMS,
                "eta": {"type": "array", "items": _NUMS},
                "pi": {"type": "array", "items": _NUMS},
            },
            "additionalProperties": False,
        },
        "reference": {
            "type": "object",
            "properties": {"x_star": _NUMS},
            "additionalProperties": False,
        },
        "run": RUN_SCHEMA,
    },
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    """Run parameters that can come from a config file or the command line."""

    scenario: Optional[str] = None
    max_iters: int = 100_000
    tol: float = 1e-9
    safety: float = 1.0
    record_every: int = 100
    workers: int = 1
    mode: Optional[str] = None
    seed: int = 0
    out_trace: Optional[str] = None
    out_summary: Optional[str] = None

    def problems(self) -> list[str]:
        out = []
        if self.max_iters < 1:
            out.append("max_iters must be >= 1")
        if not self.tol > 0:
            out.append("tol must be > 0")
        if self.record_every < 1:
            out.append("record_every must be >= 1")
        if self.workers < 1:
            out.append("workers must be >= 1")
        if not self.safety > 0:
            out.append("safety must be > 0")
        if self.mode is not None and self.mode not in MODES:
            out.append(f"mode must be one of {list(MODES)}")
        return out

    def updated(self, **overrides) -> "RunConfig":
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**data)


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def _agent_key(key: str) -> tuple[int, int]:
    i, j = key.split(".")
    return int(i), int(j)


def spec_from_dict(doc: dict, name: str = "config") -> tuple[ScenarioSpec, RunConfig]:
    """Validate a parsed JSON document and build the scenario and run config."""
    problems = [f"{_path(e)}: {e.message}"
                for e in sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc),
                                key=lambda e: list(map(str, e.absolute_path)))]
    if problems:
        raise ConfigError(problems)

    net_doc = doc["network"]
    dim = net_doc.get("dim", 1)
    b = doc["coupling"]["b"]
    clusters = []
    for pos, c in enumerate(net_doc["clusters"], start=1):
        try:
            clusters.append(ClusterGraph(pos, c["size"], tuple(tuple(e) for e in c.get("intra_edges", []))))
        except CDPGError as exc:
            problems.extend(f"network/clusters/{pos - 1}: {p}" for p in getattr(exc, "problems", [str(exc)]))
    network = None
    if not problems:
        try:
            network = MultiClusterNetwork(tuple(clusters), tuple(tuple(e) for e in net_doc["global_edges"]),
                                          dim, len(b))
        except CDPGError as exc:
            problems.extend(f"network: {p}" for p in getattr(exc, "problems", [str(exc)]))

    agents = {}
    for key, entry in doc["agents"].items():
        try:
            f = function_from_dict(entry["f"])
            g = function_from_dict(entry.get("g", {"type": "zero"}))
            agents[_agent_key(key)] = AgentSpec(f, g)
        except CDPGError as exc:
            problems.extend(f"agents/{key}: {p}" for p in getattr(exc, "problems", [str(exc)]))

    A = doc["coupling"]["A"]
    if A and not isinstance(A[0], list):
        width = len(A) // max(len(b), 1)
        if width * len(b) != len(A):
            problems.append(f"coupling/A: flat row-major A has {len(A)} entries, not a multiple of {len(b)}")
        A = [A[r * width:(r + 1) * width] for r in range(len(b))]
    if len(A) != len(b):
        problems.append(f"coupling/A: {len(A)} rows but b has {len(b)} entries")
    if network is not None:
        want = network.n_clusters * dim
        problems.extend(f"coupling/A/{r}: row has {len(row)} entries, expected N*M = {want}"
                        for r, row in enumerate(A) if len(row) != want)
    run =RunConfig(**doc.get("run", {}))
    if problems or network is None:
        raise ConfigError(problems or ["network could not be built"])

    try:
        coupling = Coupling(A, b, doc["coupling"].get("mode", "inequality"))
        w = doc.get("weights", {})
        uni = Weights.uniform(network.sizes)
        weights = Weights(w.get("kappa", uni.kappa), w.get("eta", uni.eta), w.get("pi", uni.pi))
        x_star = doc.get("reference", {}).get("x_star")
        spec = ScenarioSpec(doc.get("name", name), network, agents, coupling, weights, x_star)
    except CDPGError as exc:
        raise ConfigError(getattr(exc, "problems", [str(exc)])) from None
    return spec, run


def parse_config(path) -> tuple[ScenarioSpec, RunConfig]:
    """Read a JSON config file. Syntax errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(doc, path.stem)


def export_config(spec: ScenarioSpec, run: RunConfig | None = None) -> dict:
    """Serialize a scenario (and optionally run settings) to the config format."""
    net = spec.network
    doc = {
        "name": spec.name,
        "network": {
            "dim": net.dim,
            "clusters": [{"size": c.n_agents, "intra_edges": [list(e) for e in c.edges]}
                         for c in net.clusters],
            "global_edges": [list(e) for e in net.global_edges],
        },
        "agents": {f"{i}.{j}": {"f": spec.agents[(i, j)].f.to_dict(), "g": spec.agents[(i, j)].g.to_dict()}
                   for (i, j) in net.agents()},
        "coupling": {"A": [list(r) for r in spec.coupling.A], "b": list(spec.coupling.b),
                     "mode": spec.coupling.mode},
        "weights": {"kappa": list(spec.weights.kappa), "eta": [list(r) for r in spec.weights.eta],
                    "pi": [list(r) for r in spec.weights.pi]},
    }
    if spec.x_star is not None:
        doc["reference"] = {"x_star": list(spec.x_star)}
    if run is not None:
        doc["run"] = {f.name: getattr(run, f.name) for f in fields(run)
                      if f.name != "scenario" and getattr(run, f.name) is not None}
    return doc

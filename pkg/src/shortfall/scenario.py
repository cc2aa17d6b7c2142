"""Scenario files: a YAML document describing an instance and a simulation.

::

    version: 1
    instance:
      type: known                # or: unknown
      budget: 2.0
      users:
        - {cost: {kind: linear, slope: 2.0}, mean_rate: 1.0}
        - {cost: {kind: sqrt, scale: 1.0}, mean_rate: 2.0}
    simulation:                  # optional
      horizon: 100000
      seed: 0
      buffer_cap: null
      availability: {kind: constant, level: 2.0}
      consumption:
        - {kind: deterministic, rate: 1.0}
        - {kind: iid_bernoulli, peak: 4.0, p: 0.5}
    output:                      # optional
      path: null
      format: json

Unknown-consumption users carry ``prior`` instead of ``mean_rate`` and the
instance may set ``symmetric: true``.  Unknown keys are rejected anywhere.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import yaml

from .domain import (
    KnownInstance,
    UnknownInstance,
    cost_from_dict,
    prior_from_dict,
    validate_instance,
)
from .simulator import (
    ConstantAvailability,
    DeterministicConsumption,
    availability_from_dict,
    availability_problems,
    consumption_from_dict,
    consumption_problems,
)

SCHEMA_VERSION = 1
FORMATS = ("json", "csv")


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class SimulationConfig:
    horizon: int
    seed: int = 0
    buffer_cap: float | None = None
    availability: object = None
    consumption: tuple = ()

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "seed": self.seed,
            "buffer_cap": self.buffer_cap,
            "availability": self.availability.to_dict(),
            "consumption": [c.to_dict() for c in self.consumption],
        }


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    format: str = "json"

    def to_dict(self):
        return {"path": self.path, "format": self.format}


@dataclass(frozen=True, eq=False)
class Scenario:
    instance: KnownInstance | UnknownInstance
    simulation: SimulationConfig | None = None
    output: OutputConfig = field(default_factory=OutputConfig)
    name: str = "scenario"

    @property
    def known(self) -> bool:
        return isinstance(self.instance, KnownInstance)

    def to_dict(self) -> dict:
        inst = self.instance
        if self.known:
            users = [{"cost": c.to_dict(), "mean_rate": float(f)}
                     for c, f in zip(inst.costs, inst.mean_rates)]
            idict = {"type": "known", "budget": inst.budget, "users": users}
        else:
            users = [{"cost": c.to_dict(), "prior": p.to_dict()}
                     for c, p in zip(inst.costs, inst.priors)]
            idict = {"type": "unknown", "budget": inst.budget,
                     "symmetric": inst.symmetric, "users": users}
        out = {"version": SCHEMA_VERSION, "instance": idict}
        if self.simulation is not None:
            out["simulation"] = self.simulation.to_dict()
        out["output"] = self.output.to_dict()
        return out

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def serialize(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=None)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _line_map(node, path="", out=None):
    """Map dotted paths (``instance.users[1].cost``) to 1-based line numbers."""
    if out is None:
        out = {}
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{path}.{k.value}" if path else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
            out[key] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, f"{path}[{i}]", out)
    return out


class _Collector:
    def __init__(self, lines):
        self.lines = lines
        self.errors: list[str] = []

    def add(self, path: str, msg: str):
        probe = path
        while probe and probe not in self.lines:
            probe = re.sub(r"(\.[^.\[]*|\[\d+\])$", "", probe)
        line = self.lines.get(probe, 1)
        self.errors.append(f"line {line}: {path}: {msg}" if path else f"line {line}: {msg}")


def _keys(col: _Collector, d, path, required, optional=()):
    if not isinstance(d, dict):
        col.add(path, "expected a mapping")
        return False
    ok = True
    for k in d:
        if k not in required and k not in optional:
            col.add(f"{path}.{k}" if path else str(k), f"unknown key {k!r}")
            ok = False
    for k in required:
        if k not in d:
            col.add(path, f"missing key {k!r}")
            ok = False
    return ok


def _number(col, value, path, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        col.add(path, f"expected a number, got {value!r}")
        return None
    v = float(value)
    if positive and not v > 0:
        col.add(path, f"{path.rsplit('.', 1)[-1]} must be positive")
        return None
    if nonneg and not v >= 0:
        col.add(path, f"{path.rsplit('.', 1)[-1]} must be non-negative")
        return None
    return v


def _build(col, path, factory, d):
    try:
        return factory(d)
    except (ValueError, TypeError) as exc:
        col.add(path, str(exc))
        return None


def _parse_instance(col, d):
    if not _keys(col, d, "instance", ("type", "budget", "users"), ("symmetric",)):
        return None
    kind = d["type"]
    if kind not in ("known", "unknown"):
        col.add("instance.type", f"instance type must be 'known' or 'unknown', got {kind!r}")
        return None
    budget = _number(col, d["budget"], "instance.budget", positive=(kind == "known"), nonneg=True)
    users = d["users"]
    if not isinstance(users, list) or not users:
        col.add("instance.users", "users must be a non-empty list")
        return None
    if kind == "known" and "symmetric" in d:
        col.add("instance.symmetric", "unknown key 'symmetric' for a known instance")
    costs, second = [], []
    for i, u in enumerate(users):
        p = f"instance.users[{i}]"
        other = "mean_rate" if kind == "known" else "prior"
        if not isinstance(u, dict):
            col.add(p, "expected a mapping")
            continue
        _keys(col, u, p, ("cost", other))
        if "cost" in u:
            costs.append(_build(col, f"{p}.cost", cost_from_dict, u["cost"]) if isinstance(u["cost"], dict)
                         else col.add(f"{p}.cost", "expected a mapping"))
        if other not in u:
            continue
        if kind == "known":
            second.append(_number(col, u["mean_rate"], f"{p}.mean_rate"))
        elif isinstance(u["prior"], dict):
            second.append(_build(col, f"{p}.prior", prior_from_dict, u["prior"]))
        else:
            col.add(f"{p}.prior", "expected a mapping")
    if col.errors or budget is None or None in costs or None in second:
        return None
    if kind == "known":
        inst = KnownInstance(tuple(costs), second, budget)
    else:
        sym = d.get("symmetric", False)
        if not isinstance(sym, bool):
            col.add("instance.symmetric", "symmetric must be true or false")
            return None
        inst = UnknownInstance(tuple(costs), tuple(second), budget, symmetric=sym)
    for msg in validate_instance(inst):
        m = re.match(r"(users\[\d+\](?:\.\w+)?): (.*)", msg)
        if m:
            col.add(f"instance.{m.group(1)}", m.group(2))
        else:
            col.add("instance", msg)
    return None if col.errors else inst


def _parse_simulation(col, d, inst):
    if not _keys(col, d, "simulation", ("horizon",),
                 ("seed", "buffer_cap", "availability", "consumption")):
        return None
    T = d["horizon"]
    if isinstance(T, bool) or not isinstance(T, int) or T < 1:
        col.add("simulation.horizon", f"horizon must be a positive integer, got {T!r}")
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        col.add("simulation.seed", "seed must be a non-negative integer")
    cap = d.get("buffer_cap")
    if cap is not None:
        cap = _number(col, cap, "simulation.buffer_cap", nonneg=True)
    if "availability" in d:
        avail = _build(col, "simulation.availability", availability_from_dict, d["availability"]) \
            if isinstance(d["availability"], dict) else col.add("simulation.availability", "expected a mapping")
        if avail is not None:
            for msg in availability_problems(avail):
                col.add("simulation.availability", msg)
            if abs(avail.mean - inst.budget) > 1e-9 * max(1.0, inst.budget):
                col.add("simulation.availability",
                        f"availability mean {avail.mean:g} must equal the instance budget {inst.budget:g}")
    else:
        avail = ConstantAvailability(inst.budget)
    if "consumption" in d:
        raw = d["consumption"]
        if not isinstance(raw, list) or len(raw) != inst.m:
            col.add("simulation.consumption", f"consumption must list one process per user ({inst.m})")
            procs = ()
        else:
            procs = []
            for i, c in enumerate(raw):
                p = f"simulation.consumption[{i}]"
                proc = _build(col, p, consumption_from_dict, c) if isinstance(c, dict) \
                    else col.add(p, "expected a mapping")
                if proc is not None:
                    for msg in consumption_problems(proc):
                        col.add(p, msg)
                procs.append(proc)
            procs = tuple(procs)
    elif isinstance(inst, KnownInstance):
        procs = tuple(DeterministicConsumption(float(f)) for f in inst.mean_rates)
    else:
        col.add("simulation", "unknown-consumption instances need an explicit consumption list")
        procs = ()
    if col.errors:
        return None
    return SimulationConfig(T, seed, cap, avail, procs)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse and validate scenario text; raises :class:`ScenarioError` with line references."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ScenarioError([f"line {line}: syntax error: {getattr(exc, 'problem', exc)}"]) from None
    if node is None:
        raise ScenarioError(["line 1: empty scenario"])
    data = yaml.safe_load(text)
    col = _Collector(_line_map(node))
    if not _keys(col, data, "", ("version", "instance"), ("simulation", "output")):
        raise ScenarioError(col.errors)
    if data["version"] != SCHEMA_VERSION:
        col.add("version", f"unsupported schema version {data['version']!r}; expected {SCHEMA_VERSION}")
        raise ScenarioError(col.errors)
    inst = _parse_instance(col, data["instance"])
    if inst is None:
        raise ScenarioError(col.errors or ["line 1: invalid instance"])
    sim = None
    if data.get("simulation") is not None:
        sim = _parse_simulation(col, data["simulation"], inst)
    output = OutputConfig()
    if data.get("output") is not None:
        o = data["output"]
        if _keys(col, o, "output", (), ("path", "format")):
            fmt = o.get("format", "json")
            if fmt not in FORMATS:
                col.add("output.format", f"format must be one of {FORMATS}")
            path = o.get("path")
            if path is not None and not isinstance(path, str):
                col.add("output.path", "path must be a string or null")
            output = OutputConfig(path, fmt)
    if col.errors:
        raise ScenarioError(col.errors)
    return Scenario(inst, sim, output, name)

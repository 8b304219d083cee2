"""Road network model: directed road graph, junctions, movement phases,
and the scenario file format.

A network consists of N real unidirectional roads (inlet roads first,
then internal roads) plus a single virtual exit node with index N+1 that
accumulates every vehicle leaving the network.  Signalized junctions own
disjoint sets of incoming and outgoing roads and cycle through an ordered
list of movement phases; edges not claimed by any junction (notably the
edges feeding the exit node) are treated as always active.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping

Edge = tuple[int, int]
PhaseAssignment = tuple[int, ...]


class ScenarioFormatError(ValueError):
    """Raised when a scenario document is malformed.

    The message names the offending field (dotted path) so callers can
    surface actionable diagnostics.
    """


@dataclass(frozen=True)
class MovementPhase:
    """One signal configuration at a junction: the set of green edges."""

    junction: int
    index: int  # 1-based position in the junction's rotation cycle
    active_edges: frozenset[Edge]


@dataclass(frozen=True)
class Junction:
    id: int
    incoming: frozenset[int]
    outgoing: frozenset[int]
    phases: tuple[MovementPhase, ...]
    max_activation: int

    def successor_index(self, phase_index: int) -> int:
        """Next phase index in the rotation cycle (wraps to 1)."""
        return phase_index % len(self.phases) + 1


@dataclass(frozen=True)
class NoirGraph:
    """Directed graph of road elements plus the virtual exit node."""

    n_roads: int
    n_inlets: int
    edges: frozenset[Edge]
    junctions: tuple[Junction, ...]

    @property
    def exit_id(self) -> int:
        return self.n_roads + 1

    @property
    def inlets(self) -> range:
        return range(1, self.n_inlets + 1)

    @cached_property
    def _in_neighbors(self) -> dict[int, frozenset[int]]:
        table: dict[int, set[int]] = {i: set() for i in range(1, self.n_roads + 2)}
        for i, j in self.edges:
            table[j].add(i)
        return {k: frozenset(v) for k, v in table.items()}

    @cached_property
    def _out_neighbors(self) -> dict[int, frozenset[int]]:
        table: dict[int, set[int]] = {i: set() for i in range(1, self.n_roads + 2)}
        for i, j in self.edges:
            table[i].add(j)
        return {k: frozenset(v) for k, v in table.items()}

    def in_neighbors(self, road: int) -> frozenset[int]:
        return self._in_neighbors[road]

    def out_neighbors(self, road: int) -> frozenset[int]:
        return self._out_neighbors[road]

    @cached_property
    def governed_roads(self) -> frozenset[int]:
        """Roads whose outflow is gated by some junction's signal."""
        claimed: set[int] = set()
        for junction in self.junctions:
            claimed |= junction.incoming
        return frozenset(claimed)

    @cached_property
    def always_active_edges(self) -> frozenset[Edge]:
        """Edges that are green under every phase assignment.

        Covers edges whose source feeds the exit node and edges whose
        source road is not claimed by any junction (unsignalized flow).
        """
        exit_feeders = self.in_neighbors(self.exit_id)
        active = set()
        for i, j in self.edges:
            if i in exit_feeders or i not in self.governed_roads:
                active.add((i, j))
        return frozenset(active)


def active_edges(graph: NoirGraph, assignment: PhaseAssignment) -> frozenset[Edge]:
    """Edge set that is green under the given network phase assignment.

    ``assignment[k]`` is the 1-based phase index selected at
    ``graph.junctions[k]``.  The result is the union of the selected
    phases' edges and the graph's always-active edges.
    """
    if len(assignment) != len(graph.junctions):
        raise ValueError(
            f"assignment has {len(assignment)} entries for "
            f"{len(graph.junctions)} junctions"
        )
    selected: set[Edge] = set(graph.always_active_edges)
    for junction, index in zip(graph.junctions, assignment):
        if not 1 <= index <= len(junction.phases):
            raise ValueError(
                f"junction {junction.id}: phase index {index} out of range "
                f"1..{len(junction.phases)}"
            )
        selected |= junction.phases[index - 1].active_edges
    return frozenset(selected)


def out_neighbors_under(
    graph: NoirGraph, assignment: PhaseAssignment, road: int
) -> frozenset[int]:
    """Out-neighbor set of ``road`` restricted to the active edge set."""
    return frozenset(j for i, j in active_edges(graph, assignment) if i == road)


def in_neighbors_under(
    graph: NoirGraph, assignment: PhaseAssignment, road: int
) -> frozenset[int]:
    """In-neighbor set of ``road`` restricted to the active edge set."""
    return frozenset(i for i, j in active_edges(graph, assignment) if j == road)


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlConfig:
    horizon: int
    u0: float
    rho_max: float
    u_max: float
    rho_margin: float = 0.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.rho_max <= 0:
            raise ValueError("rho_max must be positive")
        if self.u0 < 0 or self.u_max < 0 or self.rho_margin < 0:
            raise ValueError("u0, u_max and rho_margin must be non-negative")


@dataclass(frozen=True)
class DisturbanceConfig:
    """Per-road uncontrolled inflow model for internal roads."""

    kind: str  # "uniform" or "gaussian-truncated"
    low: float = 0.0
    high: float = 0.0
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.kind == "uniform":
            if self.low > self.high:
                raise ValueError("uniform disturbance needs low <= high")
            if self.low < 0:
                raise ValueError("uniform disturbance needs low >= 0")
        elif self.kind == "gaussian-truncated":
            if self.std < 0:
                raise ValueError("gaussian disturbance needs std >= 0")
        else:
            raise ValueError(f"unknown disturbance kind: {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    """Complete serializable experiment description."""

    graph: NoirGraph
    turn_ratios: Mapping[Edge, float]
    outflow_probs: Mapping[int, float]
    control: ControlConfig
    disturbance: DisturbanceConfig
    seed: int
    steps: int

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.graph == other.graph
            and dict(self.turn_ratios) == dict(other.turn_ratios)
            and dict(self.outflow_probs) == dict(other.outflow_probs)
            and self.control == other.control
            and self.disturbance == other.disturbance
            and self.seed == other.seed
            and self.steps == other.steps
        )


_TOP_KEYS = {
    "roads", "inlets", "edges", "junctions", "turn_ratios",
    "outflow_probs", "control", "disturbance", "seed", "steps",
}
_JUNCTION_KEYS = {"id", "incoming", "outgoing", "phases", "max_activation"}
_CONTROL_KEYS = {"horizon", "u0", "rho_max", "u_max", "rho_margin"}


def _require(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise ScenarioFormatError(f"{path}: missing required field '{key}'")
    return obj[key]


def _reject_unknown(obj: Mapping[str, Any], allowed: set[str], path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ScenarioFormatError(f"{path}: unknown key(s) {unknown}")


def _as_int(value: Any, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioFormatError(f"{path}: expected integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioFormatError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"{path}: expected number, got {value!r}")
    return float(value)


def _as_road_id(value: Any, path: str, limit: int) -> int:
    road = _as_int(value, path)
    if not 1 <= road <= limit:
        raise ScenarioFormatError(f"{path}: road id {road} outside 1..{limit}")
    return road


def _as_edge(value: Any, path: str, n_roads: int) -> Edge:
    if not isinstance(value, list) or len(value) != 2:
        raise ScenarioFormatError(f"{path}: expected [from, to] pair, got {value!r}")
    i = _as_road_id(value[0], f"{path}[0]", n_roads + 1)
    j = _as_road_id(value[1], f"{path}[1]", n_roads + 1)
    return i, j


def parse_scenario(text: str | bytes) -> Scenario:
    """Parse a scenario document.

    Checks types, shapes, id ranges, and duplicates; graph-level semantic
    validation is done separately by :func:`validate`.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(
            f"malformed document: {exc.msg} (line {exc.lineno}, column {exc.colno})"
        ) from exc
    if not isinstance(doc, dict):
        raise ScenarioFormatError("top level: expected a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "top level")

    n_roads = _as_int(_require(doc, "roads", "top level"), "roads", minimum=1)
    n_inlets = _as_int(_require(doc, "inlets", "top level"), "inlets", minimum=1)
    if n_inlets > n_roads:
        raise ScenarioFormatError(f"inlets: {n_inlets} exceeds road count {n_roads}")

    raw_edges = _require(doc, "edges", "top level")
    if not isinstance(raw_edges, list):
        raise ScenarioFormatError("edges: expected an array")
    edges: list[Edge] = []
    seen_edges: set[Edge] = set()
    for pos, item in enumerate(raw_edges):
        edge = _as_edge(item, f"edges[{pos}]", n_roads)
        if edge in seen_edges:
            raise ScenarioFormatError(f"edges[{pos}]: duplicate edge {list(edge)}")
        seen_edges.add(edge)
        edges.append(edge)

    raw_junctions = _require(doc, "junctions", "top level")
    if not isinstance(raw_junctions, list):
        raise ScenarioFormatError("junctions: expected an array")
    junctions: list[Junction] = []
    seen_ids: set[int] = set()
    for pos, item in enumerate(raw_junctions):
        path = f"junctions[{pos}]"
        if not isinstance(item, dict):
            raise ScenarioFormatError(f"{path}: expected an object")
        _reject_unknown(item, _JUNCTION_KEYS, path)
        jid = _as_int(_require(item, "id", path), f"{path}.id", minimum=1)
        if jid in seen_ids:
            raise ScenarioFormatError(f"{path}.id: duplicate junction id {jid}")
        seen_ids.add(jid)
        incoming = _parse_road_list(_require(item, "incoming", path),
                                    f"{path}.incoming", n_roads)
        outgoing = _parse_road_list(_require(item, "outgoing", path),
                                    f"{path}.outgoing", n_roads + 1)
        raw_phases = _require(item, "phases", path)
        if not isinstance(raw_phases, list):
            raise ScenarioFormatError(f"{path}.phases: expected an array")
        phases = []
        for k, phase_edges in enumerate(raw_phases):
            ppath = f"{path}.phases[{k}]"
            if not isinstance(phase_edges, list):
                raise ScenarioFormatError(f"{ppath}: expected an array of edges")
            parsed = frozenset(
                _as_edge(e, f"{ppath}[{q}]", n_roads)
                for q, e in enumerate(phase_edges)
            )
            phases.append(MovementPhase(junction=jid, index=k + 1,
                                        active_edges=parsed))
        max_activation = _as_int(_require(item, "max_activation", path),
                                 f"{path}.max_activation", minimum=1)
        junctions.append(Junction(
            id=jid,
            incoming=frozenset(incoming),
            outgoing=frozenset(outgoing),
            phases=tuple(phases),
            max_activation=max_activation,
        ))
    junctions.sort(key=lambda j: j.id)

    raw_ratios = _require(doc, "turn_ratios", "top level")
    if not isinstance(raw_ratios, list):
        raise ScenarioFormatError("turn_ratios: expected an array")
    turn_ratios: dict[Edge, float] = {}
    for pos, item in enumerate(raw_ratios):
        path = f"turn_ratios[{pos}]"
        if not isinstance(item, dict):
            raise ScenarioFormatError(f"{path}: expected an object")
        _reject_unknown(item, {"from", "to", "ratio"}, path)
        src = _as_road_id(_require(item, "from", path), f"{path}.from", n_roads)
        dst = _as_road_id(_require(item, "to", path), f"{path}.to", n_roads + 1)
        ratio = _as_number(_require(item, "ratio", path), f"{path}.ratio")
        if (src, dst) in turn_ratios:
            raise ScenarioFormatError(f"{path}: duplicate entry for edge [{src}, {dst}]")
        turn_ratios[(src, dst)] = ratio

    raw_probs = _require(doc, "outflow_probs", "top level")
    if not isinstance(raw_probs, list):
        raise ScenarioFormatError("outflow_probs: expected an array")
    outflow_probs: dict[int, float] = {}
    for pos, item in enumerate(raw_probs):
        path = f"outflow_probs[{pos}]"
        if not isinstance(item, dict):
            raise ScenarioFormatError(f"{path}: expected an object")
        _reject_unknown(item, {"road", "p"}, path)
        road = _as_road_id(_require(item, "road", path), f"{path}.road", n_roads)
        p = _as_number(_require(item, "p", path), f"{path}.p")
        if road in outflow_probs:
            raise ScenarioFormatError(f"{path}: duplicate entry for road {road}")
        outflow_probs[road] = p

    raw_control = _require(doc, "control", "top level")
    if not isinstance(raw_control, dict):
        raise ScenarioFormatError("control: expected an object")
    _reject_unknown(raw_control, _CONTROL_KEYS, "control")
    u0 = _as_number(_require(raw_control, "u0", "control"), "control.u0")
    try:
        control = ControlConfig(
            horizon=_as_int(_require(raw_control, "horizon", "control"),
                            "control.horizon", minimum=1),
            u0=u0,
            rho_max=_as_number(_require(raw_control, "rho_max", "control"),
                               "control.rho_max"),
            u_max=(_as_number(raw_control["u_max"], "control.u_max")
                   if "u_max" in raw_control else u0),
            rho_margin=(_as_number(raw_control["rho_margin"], "control.rho_margin")
                        if "rho_margin" in raw_control else 0.0),
        )
    except ValueError as exc:
        raise ScenarioFormatError(f"control: {exc}") from exc

    raw_dist = _require(doc, "disturbance", "top level")
    if not isinstance(raw_dist, dict):
        raise ScenarioFormatError("disturbance: expected an object")
    kind = _require(raw_dist, "kind", "disturbance")
    if kind == "uniform":
        _reject_unknown(raw_dist, {"kind", "low", "high"}, "disturbance")
        try:
            disturbance = DisturbanceConfig(
                kind="uniform",
                low=_as_number(_require(raw_dist, "low", "disturbance"),
                               "disturbance.low"),
                high=_as_number(_require(raw_dist, "high", "disturbance"),
                                "disturbance.high"),
            )
        except ValueError as exc:
            raise ScenarioFormatError(f"disturbance: {exc}") from exc
    elif kind == "gaussian-truncated":
        _reject_unknown(raw_dist, {"kind", "mean", "std"}, "disturbance")
        try:
            disturbance = DisturbanceConfig(
                kind="gaussian-truncated",
                mean=_as_number(_require(raw_dist, "mean", "disturbance"),
                                "disturbance.mean"),
                std=_as_number(_require(raw_dist, "std", "disturbance"),
                               "disturbance.std"),
            )
        except ValueError as exc:
            raise ScenarioFormatError(f"disturbance: {exc}") from exc
    else:
        raise ScenarioFormatError(f"disturbance.kind: unknown kind {kind!r}")

    seed = _as_int(_require(doc, "seed", "top level"), "seed", minimum=0)
    steps = _as_int(_require(doc, "steps", "top level"), "steps", minimum=0)

    graph = NoirGraph(
        n_roads=n_roads,
        n_inlets=n_inlets,
        edges=frozenset(edges),
        junctions=tuple(junctions),
    )
    return Scenario(
        graph=graph,
        turn_ratios=turn_ratios,
        outflow_probs=outflow_probs,
        control=control,
        disturbance=disturbance,
        seed=seed,
        steps=steps,
    )


def _parse_road_list(value: Any, path: str, limit: int) -> list[int]:
    if not isinstance(value, list):
        raise ScenarioFormatError(f"{path}: expected an array of road ids")
    roads = []
    seen = set()
    for pos, item in enumerate(value):
        road = _as_road_id(item, f"{path}[{pos}]", limit)
        if road in seen:
            raise ScenarioFormatError(f"{path}[{pos}]: duplicate road id {road}")
        seen.add(road)
        roads.append(road)
    return roads


def serialize_scenario(scenario: Scenario) -> str:
    """Serialize to canonical JSON text (stable ordering, round-trip safe)."""
    graph = scenario.graph
    doc: dict[str, Any] = {
        "roads": graph.n_roads,
        "inlets": graph.n_inlets,
        "edges": [list(e) for e in sorted(graph.edges)],
        "junctions": [
            {
                "id": j.id,
                "incoming": sorted(j.incoming),
                "outgoing": sorted(j.outgoing),
                "phases": [
                    [list(e) for e in sorted(phase.active_edges)]
                    for phase in j.phases
                ],
                "max_activation": j.max_activation,
            }
            for j in graph.junctions
        ],
        "turn_ratios": [
            {"from": src, "to": dst, "ratio": ratio}
            for (src, dst), ratio in sorted(scenario.turn_ratios.items())
        ],
        "outflow_probs": [
            {"road": road, "p": p}
            for road, p in sorted(scenario.outflow_probs.items())
        ],
        "control": {
            "horizon": scenario.control.horizon,
            "u0": scenario.control.u0,
            "rho_max": scenario.control.rho_max,
            "u_max": scenario.control.u_max,
            "rho_margin": scenario.control.rho_margin,
        },
        "disturbance": (
            {"kind": "uniform",
             "low": scenario.disturbance.low,
             "high": scenario.disturbance.high}
            if scenario.disturbance.kind == "uniform"
            else {"kind": "gaussian-truncated",
                  "mean": scenario.disturbance.mean,
                  "std": scenario.disturbance.std}
        ),
        "seed": scenario.seed,
        "steps": scenario.steps,
    }
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(scenario: Scenario) -> ValidationReport:
    """Check every structural invariant of the network and its tables.

    Violations are collected into the report rather than raised, so a
    single pass surfaces every problem at once.
    """
    graph = scenario.graph
    report = ValidationReport()
    add = report.violations.append
    n, exit_id = graph.n_roads, graph.exit_id

    for i in graph.inlets:
        if graph.in_neighbors(i):
            add(f"inlet road {i} has in-neighbors {sorted(graph.in_neighbors(i))}")
        if not graph.out_neighbors(i):
            add(f"inlet road {i} has no out-neighbors")
    for i in range(graph.n_inlets + 1, n + 1):
        if not graph.in_neighbors(i):
            add(f"internal road {i} has no in-neighbors")
        if not graph.out_neighbors(i):
            add(f"internal road {i} has no out-neighbors")

    if not graph.in_neighbors(exit_id):
        add("exit node has no in-neighbors")
    if graph.out_neighbors(exit_id):
        add("exit node has out-neighbor "
            f"{sorted(graph.out_neighbors(exit_id))}")

    for i, j in sorted(graph.edges):
        if i <= n and j <= n and i < j and (j, i) in graph.edges:
            add(f"bidirectional real road pair ({i}, {j})")

    governed: dict[int, int] = {}
    for junction in graph.junctions:
        jid = junction.id
        if junction.incoming & junction.outgoing:
            add(f"junction {jid}: incoming and outgoing sets overlap "
                f"{sorted(junction.incoming & junction.outgoing)}")
        if not junction.phases:
            add(f"junction {jid}: no movement phases")
        for road in sorted(junction.incoming):
            if road in governed:
                add(f"road {road} claimed by junctions {governed[road]} and {jid}")
            else:
                governed[road] = jid
        allowed = {(i, j) for i in junction.incoming for j in junction.outgoing}
        for phase in junction.phases:
            if not phase.active_edges:
                add(f"junction {jid} phase {phase.index}: empty edge set")
            for edge in sorted(phase.active_edges):
                if edge not in graph.edges:
                    add(f"junction {jid} phase {phase.index}: edge "
                        f"{list(edge)} not in the network edge set")
                if edge not in allowed:
                    add(f"junction {jid} phase {phase.index}: edge "
                        f"{list(edge)} outside incoming x outgoing")

    reachable = _forward_reachable(graph, set(graph.inlets))
    for i in range(graph.n_inlets + 1, n + 1):
        if i not in reachable:
            add(f"internal road {i} unreachable from every inlet")
    draining = _backward_reachable(graph, {exit_id})
    for i in range(1, n + 1):
        if i not in draining:
            add(f"exit node unreachable from road {i}")

    for i, j in sorted(graph.edges):
        if i != exit_id and (i, j) not in scenario.turn_ratios:
            add(f"missing turn ratio for edge ({i}, {j})")
    for (i, j) in sorted(scenario.turn_ratios):
        if (i, j) not in graph.edges:
            add(f"turn ratio given for non-edge ({i}, {j})")
    for i in range(1, n + 1):
        if i not in scenario.outflow_probs:
            add(f"missing outflow probability for road {i}")

    report.info["exit_in_neighbors"] = sorted(graph.in_neighbors(exit_id))
    report.info["n_roads"] = n
    report.info["n_inlets"] = graph.n_inlets
    report.info["n_junctions"] = len(graph.junctions)
    return report


def _forward_reachable(graph: NoirGraph, sources: set[int]) -> set[int]:
    seen = set(sources)
    frontier = list(sources)
    while frontier:
        node = frontier.pop()
        for nxt in graph.out_neighbors(node):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def _backward_reachable(graph: NoirGraph, targets: set[int]) -> set[int]:
    seen = set(targets)
    frontier = list(targets)
    while frontier:
        node = frontier.pop()
        for prv in graph.in_neighbors(node):
            if prv not in seen:
                seen.add(prv)
                frontier.append(prv)
    return seen

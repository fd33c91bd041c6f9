"""Graph-grammar engine producing one mission graph per floor.

A mission graph is the abstract quest structure of a floor: typed nodes
(start, exit, normal, key, lock, puzzle) with access levels, rewritten from a
two-node start graph by a small library of rules.  A floor band selects a
recipe (ordered rule applications with random repeat counts); all randomness
comes from a stream derived from (tower_seed, floor_number), so regeneration
is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import GenerationFailed, InvariantViolation, ParseError, StaleMatch
from .rng import Stream
from .serialize import canonical_dumps

MAX_ROOMS = 16
GENERATION_RETRIES = 16


class NodeType(Enum):
    START = "Start"
    EXIT = "Exit"
    NORMAL = "Normal"
    KEY = "Key"
    LOCK = "Lock"
    PUZZLE = "Puzzle"


@dataclass(frozen=True)
class MissionNode:
    id: int
    node_type: NodeType
    access_level: int


@dataclass
class Violation:
    code: str
    message: str
    ids: tuple = ()

    def __str__(self):
        return f"{self.code}: {self.message}"


class MissionGraph:
    """Undirected simple graph; nodes keyed by integer id."""

    def __init__(self):
        self.nodes: dict[int, MissionNode] = {}
        self.edges: set[tuple[int, int]] = set()

    def add_node(self, node_type: NodeType, access_level: int, node_id: int | None = None) -> int:
        nid = self.next_id() if node_id is None else node_id
        if nid in self.nodes:
            raise ValueError(f"node id {nid} already present")
        self.nodes[nid] = MissionNode(nid, node_type, access_level)
        return nid

    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            raise ValueError("self-loop")
        if a not in self.nodes or b not in self.nodes:
            raise ValueError("edge endpoint missing")
        self.edges.add((min(a, b), max(a, b)))

    def remove_edge(self, a: int, b: int) -> None:
        self.edges.discard((min(a, b), max(a, b)))

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def neighbors(self, nid: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == nid:
                out.append(b)
            elif b == nid:
                out.append(a)
        return sorted(out)

    def next_id(self) -> int:
        return max(self.nodes, default=-1) + 1

    def set_level(self, nid: int, level: int) -> None:
        node = self.nodes[nid]
        self.nodes[nid] = MissionNode(nid, node.node_type, level)

    def nodes_of_type(self, node_type: NodeType) -> list[MissionNode]:
        return [n for n in sorted(self.nodes.values(), key=lambda n: n.id) if n.node_type is node_type]

    def copy(self) -> "MissionGraph":
        g = MissionGraph()
        g.nodes = dict(self.nodes)
        g.edges = set(self.edges)
        return g

    def component(self, start: int, blocked_edge: tuple[int, int] | None = None) -> set[int]:
        """Connected component of ``start``, optionally ignoring one edge."""
        skip = None
        if blocked_edge is not None:
            skip = (min(blocked_edge), max(blocked_edge))
        seen = {start}
        frontier = [start]
        while frontier:
            nid = frontier.pop()
            for a, b in self.edges:
                if (a, b) == skip:
                    continue
                other = None
                if a == nid:
                    other = b
                elif b == nid:
                    other = a
                if other is not None and other not in seen:
                    seen.add(other)
                    frontier.append(other)
        return seen

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "type": n.node_type.value, "level": n.access_level}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": sorted([list(e) for e in self.edges]),
        }

    def canonical(self) -> str:
        return canonical_dumps(self.to_json())

    def __eq__(self, other):
        return isinstance(other, MissionGraph) and self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self):
        return f"MissionGraph({len(self.nodes)} nodes, {len(self.edges)} edges)"

    @classmethod
    def from_json(cls, data: dict) -> "MissionGraph":
        g = cls()
        for nd in data["nodes"]:
            g.add_node(NodeType(nd["type"]), nd["level"], node_id=nd["id"])
        for a, b in data["edges"]:
            g.add_edge(a, b)
        return g


# ---------------------------------------------------------------------------
# Rules

@dataclass(frozen=True)
class PatternNode:
    """One lhs slot: ``ref`` is the mapping number; None type/level = wildcard.

    Slots sharing a ``level_var`` must match nodes of equal access level.
    """

    ref: int
    node_type: Optional[NodeType] = None
    access_level: Optional[int] = None
    level_var: Optional[str] = None


@dataclass(frozen=True)
class RhsNode:
    """One rhs slot.  A ref present in the lhs keeps its node; a fresh ref
    creates a node whose level is level(match[level_ref]) + level_offset,
    evaluated against pre-rewrite levels.
    """

    ref: int
    node_type: Optional[NodeType] = None
    level_ref: Optional[int] = None
    level_offset: int = 0


@dataclass(frozen=True)
class Propagate:
    """After the local rewrite, every node only reachable through
    ``through_ref`` (not crossing ``from_ref``) has its level raised."""

    from_ref: int
    through_ref: int
    offset: int


@dataclass(frozen=True)
class GraphRule:
    name: str
    lhs_nodes: tuple[PatternNode, ...]
    lhs_edges: tuple[tuple[int, int], ...]
    rhs_nodes: tuple[RhsNode, ...]
    rhs_edges: tuple[tuple[int, int], ...]
    propagate: Optional[Propagate] = None

    def __post_init__(self):
        lhs_refs = {p.ref for p in self.lhs_nodes}
        if len(lhs_refs) != len(self.lhs_nodes):
            raise ParseError(f"rule {self.name}: duplicate lhs refs")
        for a, b in self.lhs_edges:
            if a not in lhs_refs or b not in lhs_refs:
                raise ParseError(f"rule {self.name}: lhs edge uses unknown ref")
        rhs_refs = {r.ref for r in self.rhs_nodes}
        if len(rhs_refs) != len(self.rhs_nodes):
            raise ParseError(f"rule {self.name}: duplicate rhs refs")
        for r in self.rhs_nodes:
            if r.ref not in lhs_refs:
                if r.node_type is None or r.level_ref is None:
                    raise ParseError(
                        f"rule {self.name}: fresh rhs ref {r.ref} needs a type and level"
                    )
                if r.level_ref not in lhs_refs:
                    raise ParseError(f"rule {self.name}: level_ref {r.level_ref} not in lhs")
        for a, b in self.rhs_edges:
            if a not in rhs_refs or b not in rhs_refs:
                raise ParseError(f"rule {self.name}: rhs edge uses unknown ref")
        if self.propagate is not None:
            if self.propagate.from_ref not in lhs_refs or self.propagate.through_ref not in lhs_refs:
                raise ParseError(f"rule {self.name}: propagate refs not in lhs")

    def new_node_types(self) -> list[NodeType]:
        lhs_refs = {p.ref for p in self.lhs_nodes}
        return [r.node_type for r in self.rhs_nodes if r.ref not in lhs_refs]


Match = dict[int, int]  # lhs mapping number -> node id


def initial_graph() -> MissionGraph:
    """Start and Exit at level zero, joined by one edge."""
    g = MissionGraph()
    start = g.add_node(NodeType.START, 0)
    exit_ = g.add_node(NodeType.EXIT, 0)
    g.add_edge(start, exit_)
    return g


def find_matches(graph: MissionGraph, rule: GraphRule) -> list[Match]:
    """Every injective lhs assignment, in canonical (sorted id-tuple) order."""
    refs = sorted(p.ref for p in rule.lhs_nodes)
    patterns = {p.ref: p for p in rule.lhs_nodes}
    node_ids = sorted(graph.nodes)
    matches: list[Match] = []

    def compatible(pattern: PatternNode, nid: int, assigned: Match) -> bool:
        node = graph.nodes[nid]
        if pattern.node_type is not None and node.node_type is not pattern.node_type:
            return False
        if pattern.access_level is not None and node.access_level != pattern.access_level:
            return False
        if pattern.level_var is not None:
            for other_ref, other_id in assigned.items():
                other = patterns[other_ref]
                if other.level_var == pattern.level_var:
                    if graph.nodes[other_id].access_level != node.access_level:
                        return False
        return True

    def edges_ok(assigned: Match) -> bool:
        for a, b in rule.lhs_edges:
            if a in assigned and b in assigned and not graph.has_edge(assigned[a], assigned[b]):
                return False
        return True

    def extend(idx: int, assigned: Match) -> None:
        if idx == len(refs):
            matches.append(dict(assigned))
            return
        ref = refs[idx]
        for nid in node_ids:
            if nid in assigned.values():
                continue
            if not compatible(patterns[ref], nid, assigned):
                continue
            assigned[ref] = nid
            if edges_ok(assigned):
                extend(idx + 1, assigned)
            del assigned[ref]

    extend(0, {})
    return matches


def apply_rule(graph: MissionGraph, rule: GraphRule, match: Match) -> MissionGraph:
    """Rewrite ``graph`` per the rule's rhs; the input graph is untouched.

    Raises StaleMatch when the match no longer describes the graph, and
    InvariantViolation when the rewritten graph fails validation.
    """
    for ref, nid in match.items():
        if nid not in graph.nodes:
            raise StaleMatch(f"match ref {ref} -> missing node {nid}")
    for a, b in rule.lhs_edges:
        if not graph.has_edge(match[a], match[b]):
            raise StaleMatch(f"match lost lhs edge ({a},{b})")

    result = graph.copy()

    prop_ids: set[int] = set()
    if rule.propagate is not None:
        from_id = match[rule.propagate.from_ref]
        thru_id = match[rule.propagate.through_ref]
        prop_ids = graph.component(thru_id, blocked_edge=(from_id, thru_id))
        if from_id in prop_ids:
            raise InvariantViolation(
                f"rule {rule.name}: propagation region loops back to the anchor"
            )

    lhs_refs = {p.ref for p in rule.lhs_nodes}
    rhs_edge_refs = {(min(a, b), max(a, b)) for a, b in rule.rhs_edges}
    for a, b in rule.lhs_edges:
        if (min(a, b), max(a, b)) not in rhs_edge_refs:
            result.remove_edge(match[a], match[b])

    mapping = dict(match)
    for rhs in rule.rhs_nodes:
        if rhs.ref in lhs_refs:
            if rhs.node_type is not None:
                node = result.nodes[mapping[rhs.ref]]
                result.nodes[node.id] = MissionNode(node.id, rhs.node_type, node.access_level)
            if rhs.level_ref is not None:
                level = graph.nodes[match[rhs.level_ref]].access_level + rhs.level_offset
                result.set_level(mapping[rhs.ref], level)
        else:
            level = graph.nodes[match[rhs.level_ref]].access_level + rhs.level_offset
            mapping[rhs.ref] = result.add_node(rhs.node_type, level)

    for a, b in rule.rhs_edges:
        result.add_edge(mapping[a], mapping[b])

    if rule.propagate is not None:
        for nid in prop_ids:
            result.set_level(nid, result.nodes[nid].access_level + rule.propagate.offset)

    violations = validate_mission_graph(result)
    if violations:
        raise InvariantViolation(
            f"rule {rule.name} broke invariants: {[str(v) for v in violations]}",
            violations,
        )
    return result


# ---------------------------------------------------------------------------
# Validation

def _lock_traversal_states(graph: MissionGraph, start: int):
    """Exhaustive search over (node, collected keys, opened locks) states.

    Keys are fungible and consumable: entering an unopened Lock node spends
    one collected-but-unspent key.  Yields every reachable node id.
    """
    initial = (start, frozenset(), frozenset())
    seen = {initial}
    frontier = [initial]
    reachable = {start}
    while frontier:
        nid, collected, opened = frontier.pop()
        node = graph.nodes[nid]
        if node.node_type is NodeType.KEY and nid not in collected:
            collected = collected | {nid}
        for nxt in graph.neighbors(nid):
            ncollected, nopened = collected, opened
            target = graph.nodes[nxt]
            if target.node_type is NodeType.LOCK and nxt not in opened:
                if len(collected) - len(opened) < 1:
                    continue
                nopened = opened | {nxt}
            state = (nxt, ncollected, nopened)
            if state not in seen:
                seen.add(state)
                reachable.add(nxt)
                frontier.append(state)
    return reachable


def validate_mission_graph(graph: MissionGraph) -> list[Violation]:
    """Empty list iff the graph satisfies every mission-graph invariant."""
    out: list[Violation] = []
    starts = graph.nodes_of_type(NodeType.START)
    exits = graph.nodes_of_type(NodeType.EXIT)
    if len(starts) != 1:
        out.append(Violation("StartCount", f"expected 1 Start, found {len(starts)}"))
    if len(exits) != 1:
        out.append(Violation("ExitCount", f"expected 1 Exit, found {len(exits)}"))

    for a, b in graph.edges:
        if a not in graph.nodes or b not in graph.nodes:
            out.append(Violation("DanglingEdge", f"edge ({a},{b}) endpoint missing", (a, b)))

    for node in graph.nodes.values():
        if node.access_level < 0:
            out.append(Violation("NegativeLevel", f"node {node.id} level {node.access_level}", (node.id,)))
        if node.node_type is NodeType.LOCK and node.access_level < 1:
            out.append(Violation("LockLevelZero", f"lock {node.id} at level 0", (node.id,)))
        # Rooms are grid cells with four sides, so a node can carry at most
        # four edges.
        if len(graph.neighbors(node.id)) > 4:
            out.append(Violation("DegreeCap", f"node {node.id} has more than 4 edges", (node.id,)))

    if len(starts) != 1 or len(exits) != 1 or any(v.code == "DanglingEdge" for v in out):
        return out
    start = starts[0]
    if start.access_level != 0:
        out.append(Violation("StartLevel", f"Start has level {start.access_level}", (start.id,)))

    component = graph.component(start.id)
    if component != set(graph.nodes):
        missing = sorted(set(graph.nodes) - component)
        out.append(Violation("NotConnected", f"nodes unreachable from Start: {missing}", tuple(missing)))
        return out

    # A level-k node (k > 0) must touch its own region: a Lock of level k or
    # a peer of the same level.
    for node in graph.nodes.values():
        k = node.access_level
        if k <= 0:
            continue
        ok = False
        for nb in graph.neighbors(node.id):
            other = graph.nodes[nb]
            if other.access_level == k:
                ok = True
                break
            if other.node_type is NodeType.LOCK and other.access_level == k:
                ok = True
                break
        if not ok and not (node.node_type is NodeType.LOCK):
            out.append(Violation("LevelIsolation", f"node {node.id} (level {k}) detached from its region", (node.id,)))

    # Key-before-lock: for a Lock at level k some Key of lower level must be
    # reachable from Start without crossing any Lock of level >= k.
    for lock in graph.nodes_of_type(NodeType.LOCK):
        k = lock.access_level
        seen = {start.id}
        frontier = [start.id]
        found = graph.nodes[start.id].node_type is NodeType.KEY
        while frontier and not found:
            nid = frontier.pop()
            for nb in graph.neighbors(nid):
                if nb in seen:
                    continue
                other = graph.nodes[nb]
                if other.node_type is NodeType.LOCK and other.access_level >= k:
                    continue
                seen.add(nb)
                frontier.append(nb)
                if other.node_type is NodeType.KEY and other.access_level < k:
                    found = True
                    break
        if not found:
            out.append(Violation("MissingKey", f"no usable key below lock {lock.id} (level {k})", (lock.id,)))

    reachable = _lock_traversal_states(graph, start.id)
    exit_id = exits[0].id
    if exit_id not in reachable:
        out.append(Violation("ExitUnreachable", "Exit cannot be reached under lock semantics", (exit_id,)))

    return out


# ---------------------------------------------------------------------------
# Default rule library

def _wild(ref: int, var: str | None = None) -> PatternNode:
    return PatternNode(ref, None, None, var)


def default_rules() -> dict[str, GraphRule]:
    add_normal = GraphRule(
        name="AddNormal",
        lhs_nodes=(_wild(1, "x"), _wild(2, "x")),
        lhs_edges=((1, 2),),
        rhs_nodes=(RhsNode(1), RhsNode(2), RhsNode(3, NodeType.NORMAL, level_ref=1)),
        rhs_edges=((1, 3), (3, 2)),
    )
    add_puzzle = GraphRule(
        name="AddPuzzle",
        lhs_nodes=(_wild(1, "x"), _wild(2, "x")),
        lhs_edges=((1, 2),),
        rhs_nodes=(RhsNode(1), RhsNode(2), RhsNode(3, NodeType.PUZZLE, level_ref=1)),
        rhs_edges=((1, 3), (3, 2)),
    )
    add_key_lock = GraphRule(
        name="AddKeyLock",
        lhs_nodes=(_wild(1, "x"), _wild(2, "x")),
        lhs_edges=((1, 2),),
        rhs_nodes=(
            RhsNode(1),
            RhsNode(2),
            RhsNode(3, NodeType.KEY, level_ref=1),
            RhsNode(4, NodeType.LOCK, level_ref=1, level_offset=1),
        ),
        rhs_edges=((1, 3), (1, 4), (4, 2)),
        propagate=Propagate(from_ref=1, through_ref=2, offset=1),
    )
    add_normal_key = GraphRule(
        name="AddNormalKey",
        lhs_nodes=(_wild(1),),
        lhs_edges=(),
        rhs_nodes=(
            RhsNode(1),
            RhsNode(2, NodeType.NORMAL, level_ref=1),
            RhsNode(3, NodeType.KEY, level_ref=1),
        ),
        rhs_edges=((1, 2), (2, 3)),
    )
    rules = [add_normal, add_puzzle, add_key_lock, add_normal_key]
    return {r.name: r for r in rules}


# ---------------------------------------------------------------------------
# Recipes

@dataclass(frozen=True)
class RecipeStep:
    rule_name: str
    min_applications: int
    max_applications: int

    def __post_init__(self):
        if self.min_applications < 0 or self.max_applications < self.min_applications:
            raise ParseError(f"bad application range for {self.rule_name}")


@dataclass(frozen=True)
class Recipe:
    steps: tuple[RecipeStep, ...]


@dataclass(frozen=True)
class Band:
    first_floor: int
    last_floor: Optional[int]  # None = open-ended
    recipe: Recipe


class RecipeTable:
    def __init__(self, bands: Iterable[Band]):
        self.bands = tuple(bands)
        if not self.bands:
            raise ParseError("recipe table has no bands")
        expected = 0
        for band in self.bands:
            if band.first_floor != expected:
                raise ParseError(f"bands must partition floors; gap before floor {band.first_floor}")
            if band.last_floor is None:
                expected = None
                break
            if band.last_floor < band.first_floor:
                raise ParseError("band with negative span")
            expected = band.last_floor + 1
        if expected is not None:
            raise ParseError("last band must be open-ended")

    def recipe_for(self, floor: int) -> Recipe:
        for band in self.bands:
            if floor >= band.first_floor and (band.last_floor is None or floor <= band.last_floor):
                return band.recipe
        raise ParseError(f"no band covers floor {floor}")


def validate_recipe_table(table: RecipeTable, rules: dict[str, GraphRule]) -> list[Violation]:
    """Names must resolve, and expected Key/Lock/Puzzle material must be
    nondecreasing from band to band."""
    out: list[Violation] = []
    watched = (NodeType.KEY, NodeType.LOCK, NodeType.PUZZLE)
    previous: Optional[dict[NodeType, float]] = None
    for band in table.bands:
        expected = {t: 0.0 for t in watched}
        for step in band.recipe.steps:
            if step.rule_name not in rules:
                out.append(Violation("UnknownRule", f"recipe references {step.rule_name!r}"))
                continue
            mean_apps = (step.min_applications + step.max_applications) / 2.0
            for t in rules[step.rule_name].new_node_types():
                if t in expected:
                    expected[t] += mean_apps
        if previous is not None:
            for t in watched:
                if expected[t] < previous[t]:
                    out.append(
                        Violation(
                            "DifficultyRegression",
                            f"band starting at floor {band.first_floor} expects fewer {t.value} additions",
                        )
                    )
        previous = expected
    return out


def default_recipe_table() -> RecipeTable:
    # Locked doors enter at floor 5, puzzles at 10, larger multi-lock floors at 15.
    return RecipeTable(
        [
            Band(0, 4, Recipe((RecipeStep("AddNormal", 0, 2),))),
            Band(
                5,
                9,
                Recipe(
                    (
                        RecipeStep("AddNormal", 1, 2),
                        RecipeStep("AddKeyLock", 1, 1),
                        RecipeStep("AddNormal", 0, 1),
                    )
                ),
            ),
            Band(
                10,
                14,
                Recipe(
                    (
                        RecipeStep("AddNormal", 1, 2),
                        RecipeStep("AddKeyLock", 1, 1),
                        RecipeStep("AddPuzzle", 1, 1),
                        RecipeStep("AddNormalKey", 0, 1),
                        RecipeStep("AddNormal", 0, 1),
                    )
                ),
            ),
            Band(
                15,
                None,
                Recipe(
                    (
                        RecipeStep("AddNormal", 1, 3),
                        RecipeStep("AddKeyLock", 1, 2),
                        RecipeStep("AddPuzzle", 1, 2),
                        RecipeStep("AddNormalKey", 0, 1),
                        RecipeStep("AddNormal", 0, 2),
                    )
                ),
            ),
        ]
    )


# ---------------------------------------------------------------------------
# Generation

@dataclass
class GenerationLogEntry:
    floor: int
    attempt: int
    rule_name: str
    event: str  # applied | no_match | size_cap | rejected


def generate_mission_graph(
    floor_number: int,
    tower_seed: int,
    recipe_table: RecipeTable | None = None,
    rule_library: dict[str, GraphRule] | None = None,
    log: list[GenerationLogEntry] | None = None,
) -> MissionGraph:
    """Deterministic in (floor_number, tower_seed); independent of other floors."""
    table = recipe_table if recipe_table is not None else default_recipe_table()
    rules = rule_library if rule_library is not None else default_rules()
    recipe = table.recipe_for(floor_number)

    for attempt in range(GENERATION_RETRIES):
        stream = Stream.for_tag(tower_seed, floor_number, f"mission:{attempt}")
        graph = initial_graph()
        for step in recipe.steps:
            rule = rules.get(step.rule_name)
            if rule is None:
                raise ParseError(f"recipe references unknown rule {step.rule_name!r}")
            repeats = stream.randint(step.min_applications, step.max_applications)
            for _ in range(repeats):
                if len(graph.nodes) + len(rule.new_node_types()) > MAX_ROOMS:
                    if log is not None:
                        log.append(GenerationLogEntry(floor_number, attempt, rule.name, "size_cap"))
                    break
                matches = find_matches(graph, rule)
                if not matches:
                    if log is not None:
                        log.append(GenerationLogEntry(floor_number, attempt, rule.name, "no_match"))
                    break
                chosen = stream.below(len(matches))
                applied = False
                for offset in range(len(matches)):
                    match = matches[(chosen + offset) % len(matches)]
                    try:
                        graph = apply_rule(graph, rule, match)
                        applied = True
                        break
                    except InvariantViolation:
                        continue
                if log is not None:
                    event = "applied" if applied else "rejected"
                    log.append(GenerationLogEntry(floor_number, attempt, rule.name, event))
                if not applied:
                    break
        if not validate_mission_graph(graph):
            return graph
    raise GenerationFailed(
        f"floor {floor_number}, seed {tower_seed}: no valid mission graph in {GENERATION_RETRIES} attempts"
    )


# ---------------------------------------------------------------------------
# JSON schemas (rules.json / recipes.json)

_WILDCARD = "*"


def _node_type_from_json(value: str) -> Optional[NodeType]:
    if value == _WILDCARD:
        return None
    try:
        return NodeType(value)
    except ValueError:
        raise ParseError(f"unknown node type {value!r}")


def rules_from_json(data: dict) -> dict[str, GraphRule]:
    if not isinstance(data, dict) or "rules" not in data:
        raise ParseError("rules document must be an object with a 'rules' list")
    rules: dict[str, GraphRule] = {}
    for i, rd in enumerate(data["rules"]):
        try:
            name = rd["name"]
            lhs_nodes = tuple(
                PatternNode(
                    ref=nd["ref"],
                    node_type=_node_type_from_json(nd.get("type", _WILDCARD)),
                    access_level=None if nd.get("level", _WILDCARD) == _WILDCARD else int(nd["level"]),
                    level_var=nd.get("level_var"),
                )
                for nd in rd["lhs"]["nodes"]
            )
            lhs_edges = tuple((a, b) for a, b in rd["lhs"].get("edges", []))
            rhs_nodes = []
            for nd in rd["rhs"]["nodes"]:
                level = nd.get("level")
                level_ref, offset = None, 0
                if level is not None:
                    level_ref, offset = level["from"], level.get("offset", 0)
                type_value = nd.get("type")
                rhs_nodes.append(
                    RhsNode(
                        ref=nd["ref"],
                        node_type=None if type_value is None else _node_type_from_json(type_value),
                        level_ref=level_ref,
                        level_offset=offset,
                    )
                )
            rhs_edges = tuple((a, b) for a, b in rd["rhs"].get("edges", []))
            propagate = None
            if "propagate" in rd:
                pd = rd["propagate"]
                propagate = Propagate(pd["from"], pd["through"], pd.get("offset", 1))
            rule = GraphRule(name, lhs_nodes, lhs_edges, tuple(rhs_nodes), rhs_edges, propagate)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"rules[{i}]: malformed rule ({exc})")
        if rule.name in rules:
            raise ParseError(f"duplicate rule name {rule.name!r}")
        rules[rule.name] = rule
    return rules


def rules_to_json(rules: dict[str, GraphRule]) -> dict:
    out = []
    for rule in rules.values():
        rd: dict = {
            "name": rule.name,
            "lhs": {
                "nodes": [
                    {
                        "ref": p.ref,
                        "type": _WILDCARD if p.node_type is None else p.node_type.value,
                        "level": _WILDCARD if p.access_level is None else p.access_level,
                        **({"level_var": p.level_var} if p.level_var else {}),
                    }
                    for p in rule.lhs_nodes
                ],
                "edges": [list(e) for e in rule.lhs_edges],
            },
            "rhs": {
                "nodes": [
                    {
                        "ref": r.ref,
                        **({"type": r.node_type.value} if r.node_type is not None else {}),
                        **(
                            {"level": {"from": r.level_ref, "offset": r.level_offset}}
                            if r.level_ref is not None
                            else {}
                        ),
                    }
                    for r in rule.rhs_nodes
                ],
                "edges": [list(e) for e in rule.rhs_edges],
            },
        }
        if rule.propagate is not None:
            rd["propagate"] = {
                "from": rule.propagate.from_ref,
                "through": rule.propagate.through_ref,
                "offset": rule.propagate.offset,
            }
        out.append(rd)
    return {"rules": out}


def recipes_from_json(data: dict) -> RecipeTable:
    if not isinstance(data, dict) or "bands" not in data:
        raise ParseError("recipes document must be an object with a 'bands' list")
    bands = []
    for i, bd in enumerate(data["bands"]):
        try:
            first, last = bd["floors"]
            steps = tuple(
                RecipeStep(sd["rule"], sd["min"], sd["max"]) for sd in bd["steps"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bands[{i}]: malformed band ({exc})")
        bands.append(Band(first, last, Recipe(steps)))
    return RecipeTable(bands)


def recipes_to_json(table: RecipeTable) -> dict:
    return {
        "bands": [
            {
                "floors": [band.first_floor, band.last_floor],
                "steps": [
                    {"rule": s.rule_name, "min": s.min_applications, "max": s.max_applications}
                    for s in band.recipe.steps
                ],
            }
            for band in table.bands
        ]
    }

"""Scenario documents: the static description of a quest world under test.

A scenario file ("scenario-v1" JSON) declares the location graph, NPCs, items,
the quest state machine, and the faults seeded into the world. Loading is
strict: dangling references, disconnected graphs, and malformed predicates are
rejected before any world is built.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import SpecInvalid

SCENARIO_VERSION = "scenario-v1"

DIFFICULTIES = ("simple", "normal", "hard")

# Reachable-state bounds per tier, checked against the BFS oracle. The paper's
# tiers overlap (a "simple" task may have 15 states), so the bounds are loose;
# the per-scenario expected_states field carries the precise target.
TIER_BOUNDS = {
    "simple": (7, 17),
    "normal": (12, 28),
    "hard": (21, 10_000),
}
SIZING_TOLERANCE = 2

FAULT_KINDS = ("crash", "hang-interaction", "logic-step-count", "missing-collider", "delay")
PATHWAYS = ("screen-button", "inventory-menu")
DIRECTIONS = ("north", "south", "east", "west")
PREDICATE_KINDS = ("kill-count", "reach", "deliver", "talk", "pickup")

DEFAULT_ACTION_BASE_MS = {
    "Move": 800,
    "Talk": 1200,
    "Attack": 600,
    "Use": 1000,
    "PickUp": 500,
    "Explore": 900,
}

# Damage a hostile NPC deals back per attack, in per-mille of max player hp.
RETALIATION_PM = 20

VOID_LOCATION = "__void__"


def _stable_coords(location_id: str) -> tuple[int, int, int]:
    """Derive fixed-point coordinates (0.01 m units) from a location id."""
    digest = hashlib.sha256(location_id.encode("utf-8")).digest()
    x = int.from_bytes(digest[0:4], "big") % 10_000
    y = int.from_bytes(digest[4:8], "big") % 10_000
    return (x, y, 0)


@dataclass(frozen=True)
class LocationSpec:
    id: str
    adjacent: tuple[str, ...]
    coords: tuple[int, int, int]
    # When set, entering the location pins player hp to this per-mille value
    # (an idempotent hazard, e.g. a trap floor).
    hazard_set_hp_pm: int | None = None


@dataclass(frozen=True)
class NpcSpec:
    id: str
    location: str
    hostile: bool
    hp: int
    dialogue: str
    npc_class: str
    gift_requirement: str | None = None


@dataclass(frozen=True)
class ItemSpec:
    id: str
    location: str  # location id or "inventory"
    usable_via: tuple[str, ...]
    effect: str = "none"  # none | heal


@dataclass(frozen=True)
class StepPredicate:
    kind: str
    npc: str | None = None
    npc_class: str | None = None
    item: str | None = None
    location: str | None = None
    count: int = 1


@dataclass(frozen=True)
class StepSpec:
    id: str
    predicate: StepPredicate
    key_state: bool = True


@dataclass(frozen=True)
class QuestSpec:
    id: str
    description: str
    steps: tuple[StepSpec, ...]

    def step_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.steps)


@dataclass(frozen=True)
class FaultTrigger:
    """Declarative trigger: the action pattern plus optional state predicate."""

    template: str | None = None
    bindings: tuple[tuple[str, str], ...] = ()
    location: str | None = None
    step: str | None = None

    def binding_dict(self) -> dict[str, str]:
        return dict(self.bindings)


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    trigger: FaultTrigger
    # kind-specific parameters:
    #   logic-step-count: off_by (>= 1)
    #   hang-interaction: pathway
    #   missing-collider: direction (+ trigger.location)
    #   delay: factor (> 1)
    off_by: int = 0
    pathway: str | None = None
    direction: str | None = None
    factor: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    family: str
    difficulty: str
    seed: int
    start: str
    locations: tuple[LocationSpec, ...]
    npcs: tuple[NpcSpec, ...]
    items: tuple[ItemSpec, ...]
    quest: QuestSpec
    faults: tuple[FaultSpec, ...] = ()
    expected_states: int | None = None
    expected_action_types: int | None = None
    action_base_ms: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_ACTION_BASE_MS))

    def location(self, location_id: str) -> LocationSpec:
        for loc in self.locations:
            if loc.id == location_id:
                return loc
        raise KeyError(location_id)

    def npc(self, npc_id: str) -> NpcSpec:
        for npc in self.npcs:
            if npc.id == npc_id:
                return npc
        raise KeyError(npc_id)

    def item(self, item_id: str) -> ItemSpec:
        for item in self.items:
            if item.id == item_id:
                return item
        raise KeyError(item_id)

    def without_faults(self) -> "ScenarioSpec":
        """A copy with the fault list emptied (ground-truth twin)."""
        return ScenarioSpec(
            id=self.id,
            family=self.family,
            difficulty=self.difficulty,
            seed=self.seed,
            start=self.start,
            locations=self.locations,
            npcs=self.npcs,
            items=self.items,
            quest=self.quest,
            faults=(),
            expected_states=None,
            expected_action_types=None,
            action_base_ms=dict(self.action_base_ms),
        )


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SpecInvalid(message)


def _as_coords(raw, location_id: str) -> tuple[int, int, int]:
    if raw is None:
        return _stable_coords(location_id)
    _require(isinstance(raw, list) and len(raw) == 3 and all(isinstance(v, int) for v in raw),
             f"location {location_id!r}: coords must be three integers")
    return (raw[0], raw[1], raw[2])


def _parse_predicate(doc: dict, step_id: str) -> StepPredicate:
    kind = doc.get("kind")
    _require(kind in PREDICATE_KINDS, f"step {step_id!r}: unknown predicate kind {kind!r}")
    count = doc.get("count", 1)
    _require(isinstance(count, int) and count >= 1, f"step {step_id!r}: count must be >= 1")
    return StepPredicate(
        kind=kind,
        npc=doc.get("npc"),
        npc_class=doc.get("npc_class"),
        item=doc.get("item"),
        location=doc.get("location"),
        count=count,
    )


def _parse_trigger(doc: dict) -> FaultTrigger:
    bindings = tuple(sorted((str(k), str(v)) for k, v in (doc.get("bindings") or {}).items()))
    return FaultTrigger(
        template=doc.get("template"),
        bindings=bindings,
        location=doc.get("location"),
        step=doc.get("step"),
    )


def _parse_fault(doc: dict, index: int) -> FaultSpec:
    kind = doc.get("kind")
    _require(kind in FAULT_KINDS, f"fault #{index}: unknown kind {kind!r}")
    params = doc.get("params") or {}
    trigger = _parse_trigger(doc.get("trigger") or {})
    fault = FaultSpec(
        kind=kind,
        trigger=trigger,
        off_by=int(params.get("off_by", 0)),
        pathway=params.get("pathway"),
        direction=params.get("direction"),
        factor=int(params.get("factor", 1)),
    )
    if kind == "logic-step-count":
        _require(fault.off_by >= 1, f"fault #{index}: off_by must be >= 1")
        _require(trigger.step is not None, f"fault #{index}: logic-step-count needs a trigger step")
    if kind == "hang-interaction":
        _require(fault.pathway in PATHWAYS, f"fault #{index}: pathway must be one of {PATHWAYS}")
    if kind == "missing-collider":
        _require(fault.direction in DIRECTIONS, f"fault #{index}: direction must be one of {DIRECTIONS}")
        _require(trigger.location is not None, f"fault #{index}: missing-collider needs a trigger location")
    if kind == "delay":
        _require(fault.factor > 1, f"fault #{index}: delay factor must be > 1")
    return fault


def parse_scenario(doc: dict) -> ScenarioSpec:
    """Build and validate a ScenarioSpec from a parsed JSON document."""
    _require(doc.get("version") == SCENARIO_VERSION,
             f"version must be {SCENARIO_VERSION!r}, got {doc.get('version')!r}")
    for key in ("id", "family", "difficulty", "seed", "start", "locations", "quest"):
        _require(key in doc, f"missing field {key!r}")
    _require(doc["difficulty"] in DIFFICULTIES, f"unknown difficulty {doc['difficulty']!r}")
    seed = doc["seed"]
    _require(isinstance(seed, int) and 0 <= seed < 2**64, "seed must be a 64-bit unsigned integer")

    locations = []
    adjacency: dict[str, set[str]] = {}
    for ldoc in doc["locations"]:
        lid = ldoc["id"]
        _require(lid not in adjacency, f"duplicate location id {lid!r}")
        adjacency[lid] = set(ldoc.get("adjacent", []))
        hazard = ldoc.get("hazard_set_hp")
        hazard_pm = None
        if hazard is not None:
            hazard_pm = int(round(float(hazard) * 1000))
            _require(0 <= hazard_pm <= 1000, f"location {lid!r}: hazard_set_hp outside [0, 1]")
        locations.append(
            LocationSpec(
                id=lid,
                adjacent=(),  # filled after mirroring
                coords=_as_coords(ldoc.get("coords"), lid),
                hazard_set_hp_pm=hazard_pm,
            )
        )
    # Mirror adjacency so the graph is undirected regardless of authoring.
    for lid, neigh in list(adjacency.items()):
        for other in neigh:
            _require(other in adjacency, f"location {lid!r}: unknown neighbour {other!r}")
            adjacency[other].add(lid)
    locations = [
        LocationSpec(
            id=loc.id,
            adjacent=tuple(sorted(adjacency[loc.id])),
            coords=loc.coords,
            hazard_set_hp_pm=loc.hazard_set_hp_pm,
        )
        for loc in locations
    ]
    location_ids = {loc.id for loc in locations}
    _require(doc["start"] in location_ids, f"start location {doc['start']!r} does not exist")

    # Connectivity check (undirected BFS from start).
    seen = {doc["start"]}
    frontier = [doc["start"]]
    while frontier:
        here = frontier.pop()
        for other in adjacency[here]:
            if other not in seen:
                seen.add(other)
                frontier.append(other)
    _require(seen == location_ids, "location graph is not connected")

    npcs = []
    npc_ids = set()
    for ndoc in doc.get("npcs", []):
        nid = ndoc["id"]
        _require(nid not in npc_ids, f"duplicate npc id {nid!r}")
        npc_ids.add(nid)
        _require(ndoc["location"] in location_ids,
                 f"npc {nid!r}: unknown location {ndoc['location']!r}")
        hp = int(ndoc.get("hp", 1))
        _require(hp >= 1, f"npc {nid!r}: hp must be >= 1")
        npcs.append(
            NpcSpec(
                id=nid,
                location=ndoc["location"],
                hostile=bool(ndoc.get("hostile", False)),
                hp=hp,
                dialogue=ndoc.get("dialogue", f"{nid}-dialogue"),
                npc_class=ndoc.get("class", nid),
                gift_requirement=ndoc.get("gift_requirement"),
            )
        )

    items = []
    item_ids = set()
    for idoc in doc.get("items", []):
        iid = idoc["id"]
        _require(iid not in item_ids, f"duplicate item id {iid!r}")
        item_ids.add(iid)
        loc = idoc["location"]
        _require(loc == "inventory" or loc in location_ids,
                 f"item {iid!r}: unknown location {loc!r}")
        usable = tuple(idoc.get("usable_via", ["inventory-menu"]))
        _require(len(usable) >= 1 and all(p in PATHWAYS for p in usable),
                 f"item {iid!r}: usable_via must be a non-empty subset of {PATHWAYS}")
        effect = idoc.get("effect", "none")
        _require(effect in ("none", "heal"), f"item {iid!r}: unknown effect {effect!r}")
        items.append(ItemSpec(id=iid, location=loc, usable_via=usable, effect=effect))

    qdoc = doc["quest"]
    steps = []
    step_ids = set()
    npc_classes = {n.npc_class for n in npcs}
    for sdoc in qdoc.get("steps", []):
        sid = sdoc["id"]
        _require(sid not in step_ids, f"duplicate step id {sid!r}")
        step_ids.add(sid)
        pred = _parse_predicate(sdoc.get("predicate", {}), sid)
        if pred.kind == "kill-count":
            _require(pred.npc_class in npc_classes,
                     f"step {sid!r}: unknown npc class {pred.npc_class!r}")
        if pred.kind == "reach":
            _require(pred.location in location_ids,
                     f"step {sid!r}: unknown location {pred.location!r}")
        if pred.kind in ("deliver", "talk"):
            _require(pred.npc in npc_ids, f"step {sid!r}: unknown npc {pred.npc!r}")
        if pred.kind in ("deliver", "pickup"):
            _require(pred.item in item_ids, f"step {sid!r}: unknown item {pred.item!r}")
        steps.append(StepSpec(id=sid, predicate=pred, key_state=bool(sdoc.get("key_state", True))))
    _require(len(steps) >= 1, "quest must have at least one step")
    quest = QuestSpec(id=qdoc["id"], description=qdoc.get("description", qdoc["id"]), steps=tuple(steps))

    faults = []
    for i, fdoc in enumerate(doc.get("faults", [])):
        fault = _parse_fault(fdoc, i)
        trig = fault.trigger
        if trig.location is not None:
            _require(trig.location in location_ids,
                     f"fault #{i}: unknown trigger location {trig.location!r}")
        if trig.step is not None:
            _require(trig.step in step_ids, f"fault #{i}: unknown trigger step {trig.step!r}")
        for slot, value in trig.bindings:
            known = value in npc_ids or value in item_ids or value in location_ids \
                or value in PATHWAYS or value in DIRECTIONS
            _require(known, f"fault #{i}: trigger binding {slot}={value!r} references nothing")
        faults.append(fault)

    base_ms = dict(DEFAULT_ACTION_BASE_MS)
    for name, ms in (doc.get("action_base_ms") or {}).items():
        _require(name in base_ms, f"action_base_ms: unknown action type {name!r}")
        _require(isinstance(ms, int) and ms > 0, f"action_base_ms[{name!r}] must be a positive integer")
        base_ms[name] = ms

    return ScenarioSpec(
        id=doc["id"],
        family=doc["family"],
        difficulty=doc["difficulty"],
        seed=seed,
        start=doc["start"],
        locations=tuple(locations),
        npcs=tuple(npcs),
        items=tuple(items),
        quest=quest,
        faults=tuple(faults),
        expected_states=doc.get("expected_states"),
        expected_action_types=doc.get("expected_action_types"),
        action_base_ms=base_ms,
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Load and validate a scenario-v1 JSON file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecInvalid(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(doc)

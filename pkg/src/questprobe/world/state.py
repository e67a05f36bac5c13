"""Deterministic quest-world dynamics with seeded fault injection.

A WorldState is single-owner mutable. All randomness (duration jitter, ambient
noise) is derived from sha256 of (seed, tick, ...), never from live RNG state,
so equal (spec, seed, action sequence) always replays bitwise-equal
observations and outcomes. Health and mana are integers in per-mille units;
coordinates are fixed-point integers (1 unit = 0.01 world meters).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..actions import ConcreteAction, make_action
from ..errors import UnknownQuest, WorldCrashed
from .spec import (
    DIRECTIONS,
    RETALIATION_PM,
    VOID_LOCATION,
    FaultSpec,
    ScenarioSpec,
    StepSpec,
)

WORLD_DAY_TICKS = 2400
HP_FLOOR_PM = 50
LOG_TAIL = 5
VOID_COORDS = (99_999, 99_999, 0)

HUNG_DURATION_MS = 30_000  # watchdog-style stall before the client gives up


@dataclass(frozen=True)
class NpcView:
    id: str
    hp_fraction: float
    hostile: bool

    def __str__(self) -> str:
        stance = "hostile" if self.hostile else "friendly"
        return f"{self.id}[{stance}]"


@dataclass(frozen=True)
class NearbyNpcs:
    entries: tuple[NpcView, ...]

    @property
    def hostile_ids(self) -> frozenset[str]:
        return frozenset(n.id for n in self.entries if n.hostile)

    @property
    def friendly_ids(self) -> frozenset[str]:
        return frozenset(n.id for n in self.entries if not n.hostile)

    def __iter__(self):
        return iter(self.entries)

    def __str__(self) -> str:
        return ",".join(str(n) for n in self.entries)


@dataclass(frozen=True)
class PlayerView:
    location: str
    coords: tuple[int, int, int]
    hp_fraction: float
    mana_fraction: float
    status_effects: frozenset[str]


@dataclass(frozen=True)
class QuestLogView:
    quest_id: str
    active_step: str
    complete: bool
    counters: dict[str, int]


@dataclass(frozen=True)
class RawState:
    tick: int
    player: PlayerView
    inventory: dict[str, int]
    nearby_npcs: NearbyNpcs
    nearby_objects: tuple[str, ...]
    quest_log: QuestLogView
    clock_phase: int
    ambient_noise: tuple[str, ...]


@dataclass(frozen=True)
class Snapshot:
    tick: int
    visible_ui_overlays: frozenset[str]
    interactive_button_available: bool
    rendered_entities: tuple[str, ...]
    text_log_tail: tuple[str, ...]


@dataclass(frozen=True)
class Outcome:
    status: str  # Progress | NoChange | Rejected | Crashed | Hung
    duration_ms: int
    log_line: str


@dataclass
class AdvancementEvent:
    """One quest-step completion, with the ground-truth verdict at that moment."""

    step_id: str
    tick: int
    count_at_advance: int
    required_true: int
    required_effective: int
    gt_satisfied: bool
    action_text: str


def _digest_fraction(*parts) -> float:
    """Deterministic value in [-0.1, 0.1] derived from the given parts."""
    payload = ":".join(str(p) for p in parts).encode("utf-8")
    word = int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
    return ((word % 2001) - 1000) / 10_000


def _digest_names(seed: int, tick: int, count: int) -> tuple[str, ...]:
    payload = f"noise:{seed}:{tick}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    names = []
    for i in range(count):
        word = int.from_bytes(digest[i * 4:(i + 1) * 4], "big")
        names.append(f"wanderer-{word % 9000 + 1000}")
    return tuple(names)


@dataclass
class WorldState:
    spec: ScenarioSpec
    tick: int = 0
    location: str = ""
    hp_pm: int = 1000
    mana_pm: int = 1000
    dialogue_with: str | None = None
    ui_frozen: bool = False
    inventory: dict[str, int] = field(default_factory=dict)
    npc_hp: dict[str, int] = field(default_factory=dict)
    item_placements: dict[str, str | None] = field(default_factory=dict)
    active_idx: int = 0
    counters: dict[str, int] = field(default_factory=dict)
    complete: bool = False
    crashed: bool = False
    hung_pairs: set[tuple[str, str]] = field(default_factory=set)
    void_return: str | None = None
    advancements: list[AdvancementEvent] = field(default_factory=list)
    log: list[str] = field(default_factory=list)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_spec(cls, spec: ScenarioSpec) -> "WorldState":
        world = cls(spec=spec, location=spec.start)
        for npc in spec.npcs:
            world.npc_hp[npc.id] = npc.hp
        for item in spec.items:
            if item.location == "inventory":
                world.inventory[item.id] = world.inventory.get(item.id, 0) + 1
                world.item_placements[item.id] = "inventory"
            else:
                world.item_placements[item.id] = item.location
        world._apply_hazard()
        world._advance_quest(action_text="<start>")
        return world

    def clone(self) -> "WorldState":
        twin = WorldState(
            spec=self.spec,
            tick=self.tick,
            location=self.location,
            hp_pm=self.hp_pm,
            mana_pm=self.mana_pm,
            dialogue_with=self.dialogue_with,
            ui_frozen=self.ui_frozen,
            inventory=dict(self.inventory),
            npc_hp=dict(self.npc_hp),
            item_placements=dict(self.item_placements),
            active_idx=self.active_idx,
            counters=dict(self.counters),
            complete=self.complete,
            crashed=self.crashed,
            hung_pairs=set(self.hung_pairs),
            void_return=self.void_return,
            advancements=list(self.advancements),
            log=list(self.log),
        )
        return twin

    # -- inspection helpers ------------------------------------------------

    @property
    def coords(self) -> tuple[int, int, int]:
        if self.location == VOID_LOCATION:
            return VOID_COORDS
        return self.spec.location(self.location).coords

    def active_step(self) -> StepSpec | None:
        if self.complete:
            return None
        return self.spec.quest.steps[self.active_idx]

    def npcs_at(self, location: str) -> list[str]:
        return sorted(
            npc.id for npc in self.spec.npcs
            if npc.location == location and self.npc_hp.get(npc.id, 0) > 0
        )

    def items_at(self, location: str) -> list[str]:
        return sorted(iid for iid, loc in self.item_placements.items() if loc == location)

    def effective_required(self, step: StepSpec) -> int:
        required = step.predicate.count
        for fault in self.spec.faults:
            if fault.kind == "logic-step-count" and fault.trigger.step == step.id:
                required = max(1, required - fault.off_by)
        return required

    def quest_progress_pct(self) -> float:
        """Completed key steps over total key steps, under the game's own rules."""
        steps = self.spec.quest.steps
        key = [s for s in steps if s.key_state] or list(steps)
        done = sum(
            1 for i, s in enumerate(steps)
            if s in key and (self.complete or i < self.active_idx)
        )
        return 100.0 * done / len(key)

    def essential_state(self) -> tuple:
        """Everything the dynamics depend on; excludes tick-derived dressing."""
        return (
            self.location,
            self.hp_pm,
            self.mana_pm,
            self.dialogue_with,
            self.ui_frozen,
            tuple(sorted(self.inventory.items())),
            tuple(sorted(self.npc_hp.items())),
            tuple(sorted((k, v if v is not None else "") for k, v in self.item_placements.items())),
            self.active_idx,
            tuple(sorted(self.counters.items())),
            self.complete,
            self.crashed,
            tuple(sorted(self.hung_pairs)),
            self.void_return,
        )

    # -- internal dynamics -------------------------------------------------

    def _apply_hazard(self) -> None:
        if self.location == VOID_LOCATION:
            return
        hazard = self.spec.location(self.location).hazard_set_hp_pm
        if hazard is not None:
            self.hp_pm = hazard

    def _record_kill(self, npc_class: str) -> None:
        step = self.active_step()
        if step and step.predicate.kind == "kill-count" and step.predicate.npc_class == npc_class:
            self.counters[step.id] = self.counters.get(step.id, 0) + 1

    def _record_event(self, kind: str, **refs: str) -> None:
        step = self.active_step()
        if step is None or step.predicate.kind != kind:
            return
        pred = step.predicate
        if kind == "talk" and refs.get("npc") == pred.npc:
            self.counters[step.id] = max(self.counters.get(step.id, 0), 1)
        elif kind == "deliver" and refs.get("npc") == pred.npc and refs.get("item") == pred.item:
            self.counters[step.id] = self.counters.get(step.id, 0) + 1

    def _instant_counters(self) -> None:
        step = self.active_step()
        if step is None:
            return
        pred = step.predicate
        if pred.kind == "reach" and self.location == pred.location:
            self.counters[step.id] = max(self.counters.get(step.id, 0), 1)
        if pred.kind == "pickup" and self.inventory.get(pred.item, 0) > 0:
            self.counters[step.id] = max(self.counters.get(step.id, 0), 1)

    def _advance_quest(self, action_text: str) -> None:
        while not self.complete:
            self._instant_counters()
            step = self.spec.quest.steps[self.active_idx]
            count = self.counters.get(step.id, 0)
            effective = self.effective_required(step)
            if count < effective:
                break
            self.advancements.append(
                AdvancementEvent(
                    step_id=step.id,
                    tick=self.tick,
                    count_at_advance=count,
                    required_true=step.predicate.count,
                    required_effective=effective,
                    gt_satisfied=count >= step.predicate.count,
                    action_text=action_text,
                )
            )
            if self.active_idx + 1 < len(self.spec.quest.steps):
                self.active_idx += 1
            else:
                self.complete = True

    def _matching_fault(self, kind: str, action: ConcreteAction,
                        pre_location: str, pre_step: str | None) -> FaultSpec | None:
        bound = dict(action.bindings)
        for fault in self.spec.faults:
            if fault.kind != kind:
                continue
            trig = fault.trigger
            if trig.template is not None and trig.template != action.template:
                continue
            if trig.location is not None and trig.location != pre_location:
                continue
            if trig.step is not None and trig.step != pre_step:
                continue
            if any(bound.get(slot) != value for slot, value in trig.bindings):
                continue
            return fault
        return None

    def _duration_ms(self, action: ConcreteAction, delay_factor: int) -> int:
        base = self.spec.action_base_ms[action.template]
        jitter = _digest_fraction("jitter", self.spec.seed, self.tick, action.text)
        return max(0, round(base * (1.0 + jitter))) * delay_factor


# -- module-level operations ------------------------------------------------


def new_world(spec: ScenarioSpec) -> WorldState:
    """Build a fresh world at quest step 0 with the player at the start location."""
    return WorldState.from_spec(spec)


def read_state(world: WorldState) -> RawState:
    """Pure observation of the world; equal between executes."""
    if world.crashed:
        raise WorldCrashed("the game client is gone")
    status = set()
    if world.dialogue_with:
        status.add(f"in-dialogue:{world.dialogue_with}")
    if world.ui_frozen:
        status.add("ui-frozen")
    npcs = NearbyNpcs(
        entries=tuple(
            NpcView(
                id=nid,
                hp_fraction=world.npc_hp[nid] / world.spec.npc(nid).hp,
                hostile=world.spec.npc(nid).hostile,
            )
            for nid in world.npcs_at(world.location)
        )
    )
    return RawState(
        tick=world.tick,
        player=PlayerView(
            location=world.location,
            coords=world.coords,
            hp_fraction=world.hp_pm / 1000,
            mana_fraction=world.mana_pm / 1000,
            status_effects=frozenset(status),
        ),
        inventory=dict(sorted(world.inventory.items())),
        nearby_npcs=npcs,
        nearby_objects=tuple(world.items_at(world.location)),
        quest_log=QuestLogView(
            quest_id=world.spec.quest.id,
            active_step=(world.spec.quest.steps[world.active_idx].id
                         if not world.complete else world.spec.quest.steps[-1].id),
            complete=world.complete,
            counters=dict(sorted(world.counters.items())),
        ),
        clock_phase=world.tick % WORLD_DAY_TICKS,
        ambient_noise=_digest_names(world.spec.seed, world.tick, 2),
    )


def enumerate_actions(world: WorldState) -> set[ConcreteAction]:
    """Every syntactically possible action binding in the current state."""
    if world.crashed:
        raise WorldCrashed("the game client is gone")
    actions: set[ConcreteAction] = set()
    for direction in DIRECTIONS:
        actions.add(make_action("Explore", direction=direction))
    if world.location == VOID_LOCATION:
        return actions
    for neighbour in world.spec.location(world.location).adjacent:
        actions.add(make_action("Move", to=neighbour))
    for nid in world.npcs_at(world.location):
        actions.add(make_action("Talk", to=nid))
        actions.add(make_action("Attack", target=nid))
    for iid in world.items_at(world.location):
        actions.add(make_action("PickUp", item=iid))
    for iid, count in sorted(world.inventory.items()):
        if count <= 0:
            continue
        for pathway in world.spec.item(iid).usable_via:
            actions.add(make_action("Use", item=iid, pathway=pathway))
    return actions


def execute(world: WorldState, action: ConcreteAction) -> Outcome:
    """Advance the world one tick by applying the action, then fault triggers."""
    if world.crashed:
        raise WorldCrashed("the game client is gone")
    pre_location = world.location
    pre_step = None if world.complete else world.spec.quest.steps[world.active_idx].id
    world.tick += 1

    status, line = _apply_native(world, action, pre_location, pre_step)

    if status not in ("Rejected",):
        world._advance_quest(action.text)

    delay_factor = 1
    if status not in ("Rejected", "Hung"):
        crash = world._matching_fault("crash", action, pre_location, pre_step)
        if crash is not None:
            world.crashed = True
            status = "Crashed"
            line = f"CRASH: unhandled exception after {action.text}"
        delay = world._matching_fault("delay", action, pre_location, pre_step)
        if delay is not None:
            delay_factor = delay.factor

    duration = HUNG_DURATION_MS if status == "Hung" else world._duration_ms(action, delay_factor)
    world.log.append(line)
    return Outcome(status=status, duration_ms=duration, log_line=line)


def _apply_native(world: WorldState, action: ConcreteAction,
                  pre_location: str, pre_step: str | None) -> tuple[str, str]:
    bound = dict(action.bindings)
    template = action.template

    if template == "Move":
        dest = bound.get("to")
        if world.location == VOID_LOCATION or dest not in world.spec.location(world.location).adjacent:
            return "Rejected", f"cannot move to {dest}"
        world.location = dest
        world.dialogue_with = None
        world.ui_frozen = False
        world._apply_hazard()
        return "Progress", f"moved to {dest}"

    if template == "Explore":
        direction = bound.get("direction")
        if world.location == VOID_LOCATION:
            back = world.void_return or world.spec.start
            world.location = back
            world.void_return = None
            world._apply_hazard()
            return "Progress", f"clambered back into the world at {back}"
        collider = world._matching_fault("missing-collider", action, pre_location, pre_step)
        if collider is not None and collider.direction == direction:
            world.void_return = world.location
            world.location = VOID_LOCATION
            world.dialogue_with = None
            world.ui_frozen = False
            return "Progress", f"clipped through geometry exploring {direction}"
        if world.ui_frozen:
            world.ui_frozen = False
            return "Progress", "tapped around until the interface unfroze"
        return "NoChange", f"explored {direction}: nothing found"

    if template == "Talk":
        target = bound.get("to")
        if target not in world.npcs_at(world.location):
            return "Rejected", f"{target} is not here"
        if world.ui_frozen:
            return "NoChange", "the interface is frozen"
        if world.dialogue_with == target:
            return "NoChange", f"already talking to {target}"
        world.dialogue_with = target
        world._record_event("talk", npc=target)
        return "Progress", f"talked to {target}"

    if template == "Attack":
        target = bound.get("target")
        if target not in world.npcs_at(world.location):
            return "Rejected", f"{target} is not here"
        npc = world.spec.npc(target)
        world.npc_hp[target] -= 1
        if npc.hostile:
            world.hp_pm = max(HP_FLOOR_PM, world.hp_pm - RETALIATION_PM)
        if world.npc_hp[target] <= 0:
            world._record_kill(npc.npc_class)
            return "Progress", f"attack felled {target}"
        return "Progress", f"attacked {target}"

    if template == "PickUp":
        item = bound.get("item")
        if item not in world.items_at(world.location):
            return "Rejected", f"{item} is not here"
        if world.ui_frozen:
            return "NoChange", "the interface is frozen"
        world.item_placements[item] = "inventory"
        world.inventory[item] = world.inventory.get(item, 0) + 1
        return "Progress", f"picked up {item}"

    if template == "Use":
        item = bound.get("item")
        pathway = bound.get("pathway")
        if world.inventory.get(item, 0) <= 0 or pathway not in world.spec.item(item).usable_via \
                if item in {i.id for i in world.spec.items} else True:
            if item not in {i.id for i in world.spec.items} or world.inventory.get(item, 0) <= 0 \
                    or pathway not in world.spec.item(item).usable_via:
                return "Rejected", f"cannot use {item} via {pathway}"
        if (item, pathway) in world.hung_pairs:
            world.ui_frozen = True
            return "Hung", f"interaction frozen: {pathway} use of {item} hung"
        hang = world._matching_fault("hang-interaction", action, pre_location, pre_step)
        if hang is not None and hang.pathway == pathway:
            world.hung_pairs.add((item, pathway))
            world.ui_frozen = True
            return "Hung", f"interaction frozen: {pathway} use of {item} hung"
        if world.ui_frozen and pathway == "screen-button":
            return "NoChange", "the interface is frozen"
        item_spec = world.spec.item(item)
        if item_spec.effect == "heal":
            if world.hp_pm >= 1000:
                return "NoChange", "nothing to heal"
            world.hp_pm = 1000
            world.inventory[item] -= 1
            if world.inventory[item] <= 0:
                del world.inventory[item]
            world.item_placements[item] = None
            return "Progress", f"used {item}: health restored"
        step = world.active_step()
        if (
            step is not None
            and step.predicate.kind == "deliver"
            and step.predicate.item == item
            and world.dialogue_with == step.predicate.npc
        ):
            world.inventory[item] -= 1
            if world.inventory[item] <= 0:
                del world.inventory[item]
            world.item_placements[item] = None
            world._record_event("deliver", npc=world.dialogue_with, item=item)
            return "Progress", f"handed {item} over via {pathway}"
        return "NoChange", f"used {item} via {pathway}: nothing happened"

    return "Rejected", f"unknown action {action.text}"


def capture_snapshot(world: WorldState) -> Snapshot:
    """Deterministic scene snapshot; available even after a crash."""
    overlays = set()
    if world.dialogue_with:
        overlays.add("dialogue")
    if world.ui_frozen:
        overlays.add("frozen-ui")
    if world.crashed:
        overlays.add("crash-dialog")
    at_location = [] if world.location == VOID_LOCATION else (
        world.npcs_at(world.location) + world.items_at(world.location)
    )
    has_button_item = any(
        "screen-button" in world.spec.item(iid).usable_via
        for iid, count in world.inventory.items() if count > 0
    )
    button = (not world.ui_frozen and not world.crashed
              and (bool(at_location) or has_button_item))
    return Snapshot(
        tick=world.tick,
        visible_ui_overlays=frozenset(overlays),
        interactive_button_available=button,
        rendered_entities=tuple(sorted(at_location)),
        text_log_tail=tuple(world.log[-LOG_TAIL:]),
    )


def task_complete(world: WorldState, quest_id: str) -> bool:
    """True iff every step is complete under the game's own (possibly faulty) rules."""
    if quest_id != world.spec.quest.id:
        raise UnknownQuest(quest_id)
    return world.complete


def ground_truth_complete(world: WorldState) -> bool:
    """Completion under the declared predicates, ignoring injected logic faults."""
    if not world.complete:
        return False
    return all(event.gt_satisfied for event in world.advancements)

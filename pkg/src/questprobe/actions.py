"""Action templates, feasibility filtering, and bundle recommendation.

The fixed template set is Move / Talk / Attack / Use / PickUp / Explore. Every
action crossing a module boundary is rendered in the canonical text form
``Template(slot=value, ...)``; that string is also the wire format between the
decision backend and the validator.

Rules files ("rules-v1" JSON) carry two rule kinds:

* feasibility rules gate candidate actions on the current abstract state
  (deny beats allow; templates with no rules default to allow);
* relevance rules score actions toward the bundle, optionally referencing the
  active objective through ``$objective.*`` placeholders or named entity sets
  through ``$set:<name>``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyFeasible, RuleInvalid, UnknownBinding, UnknownTemplate, Unparseable
from .perception import AbstractState, GameMetadata

RULES_VERSION = "rules-v1"

# slot -> domain, in canonical rendering order per template
TEMPLATE_SLOTS: dict[str, tuple[tuple[str, str], ...]] = {
    "Move": (("to", "Location"),),
    "Talk": (("to", "NPC"),),
    "Attack": (("target", "NPC"),),
    "Use": (("item", "Item"), ("pathway", "Pathway")),
    "PickUp": (("item", "Item"),),
    "Explore": (("direction", "Direction"),),
}

COMPARATORS = ("eq", "ne", "contains", "not-contains", "empty", "nonempty")

_ACTION_RE = re.compile(
    r"\b(Move|Talk|Attack|Use|PickUp|Explore)\s*\(([^()]*)\)"
)
_BINDING_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_-]*)\s*=\s*([A-Za-z0-9_:-]+)\s*$")


@dataclass(frozen=True, order=True)
class ConcreteAction:
    template: str
    bindings: tuple[tuple[str, str], ...]  # sorted (slot, value) pairs

    @property
    def text(self) -> str:
        ordered = [f"{slot}={value}" for slot, value in self.iter_slots()]
        return f"{self.template}({', '.join(ordered)})"

    def iter_slots(self) -> list[tuple[str, str]]:
        bound = dict(self.bindings)
        return [(slot, bound[slot]) for slot, _ in TEMPLATE_SLOTS[self.template] if slot in bound]

    def binding(self, slot: str) -> str | None:
        return dict(self.bindings).get(slot)


def make_action(template: str, **bindings: str) -> ConcreteAction:
    if template not in TEMPLATE_SLOTS:
        raise UnknownTemplate(template)
    slots = {slot for slot, _ in TEMPLATE_SLOTS[template]}
    for slot in bindings:
        if slot not in slots:
            raise UnknownTemplate(f"{template} has no slot {slot!r}")
    return ConcreteAction(template=template, bindings=tuple(sorted(bindings.items())))


def action_from_text(text: str) -> ConcreteAction:
    """Parse one canonical action string (no resolution against the world)."""
    match = _ACTION_RE.search(text)
    if not match:
        raise Unparseable(f"no action found in {text!r}")
    template = match.group(1)
    bindings: dict[str, str] = {}
    body = match.group(2).strip()
    if body:
        for piece in body.split(","):
            m = _BINDING_RE.match(piece)
            if not m:
                raise Unparseable(f"bad binding {piece!r} in {text!r}")
            slot = m.group(1).lower()
            bindings[slot] = m.group(2)
    return make_action(template, **bindings)


def parse_action(text: str, available: set[ConcreteAction]) -> ConcreteAction:
    """Extract the first canonical action from free text and resolve it.

    Resolution matches against the current enumeration: slot names are
    case-normalized, and a Use without an explicit pathway resolves to the
    single available pathway when it is unambiguous.
    """
    for match in _ACTION_RE.finditer(text):
        candidate_text = match.group(0)
        try:
            action = action_from_text(candidate_text)
        except (Unparseable, UnknownTemplate):
            continue
        if action in available:
            return action
        if action.template == "Use" and action.binding("pathway") is None:
            matches = sorted(
                a for a in available
                if a.template == "Use" and a.binding("item") == action.binding("item")
            )
            if len(matches) == 1:
                return matches[0]
        raise UnknownBinding(f"{action.text} does not resolve in the current enumeration")
    raise Unparseable(f"no action found in {text!r}")


def instantiate_templates(abstract: AbstractState, available: set[ConcreteAction]) -> list[ConcreteAction]:
    """Express the available raw actions as template instantiations.

    The simulator already produces template-shaped actions; this re-checks each
    one against the template signatures so unknown forms are rejected before
    filtering, and returns a canonically ordered candidate list.
    """
    candidates = []
    for action in available:
        if action.template not in TEMPLATE_SLOTS:
            raise UnknownTemplate(action.template)
        slots = {slot for slot, _ in TEMPLATE_SLOTS[action.template]}
        for slot, _ in action.bindings:
            if slot not in slots:
                raise UnknownTemplate(f"{action.template} has no slot {slot!r}")
        candidates.append(action)
    return sorted(candidates, key=lambda a: a.text)


@dataclass(frozen=True)
class Condition:
    feature: str
    comparator: str
    value: str = ""  # may be "$<slot>" to compare against the action binding


@dataclass(frozen=True)
class FeasibilityRule:
    id: str
    templates: tuple[str, ...]  # ("*",) matches every template
    conditions: tuple[Condition, ...]
    verdict: str  # allow | deny
    priority: int = 0
    bindings: tuple[tuple[str, str], ...] = ()  # optional constraints, values may be $set:<name>


@dataclass(frozen=True)
class ActionPattern:
    template: str
    bindings: tuple[tuple[str, str], ...] = ()  # values may be placeholders


@dataclass(frozen=True)
class RelevanceRule:
    id: str
    conditions: tuple[Condition, ...]
    recommends: tuple[ActionPattern, ...]
    weight: float
    source: str  # expert | doc-extracted


@dataclass(frozen=True)
class RuleSet:
    family: str
    feasibility: tuple[FeasibilityRule, ...]
    relevance: tuple[RelevanceRule, ...]
    sets: dict[str, frozenset[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class Objective:
    """What the quest currently asks for, resolved to concrete entities."""

    description: str
    step_id: str | None
    kind: str  # talk | reach | deliver | pickup | kill-count | complete
    npcs: frozenset[str] = frozenset()
    hostiles: frozenset[str] = frozenset()
    items: frozenset[str] = frozenset()
    locations: frozenset[str] = frozenset()
    target_location: str | None = None
    next_hop: str | None = None

    def placeholder(self, name: str) -> frozenset[str]:
        if name == "npc":
            return self.npcs
        if name == "hostiles":
            return self.hostiles
        if name == "item":
            return self.items
        if name == "location":
            return self.locations
        if name == "next_hop":
            return frozenset({self.next_hop}) if self.next_hop else frozenset()
        return frozenset()


IDLE_OBJECTIVE = Objective(description="quest complete", step_id=None, kind="complete")


def _feature_as_set(abstract: AbstractState, name: str) -> frozenset[str]:
    value = abstract.value(name)
    if value is None:
        return frozenset()
    if isinstance(value, frozenset):
        return value
    return frozenset({value})


def _condition_holds(cond: Condition, abstract: AbstractState, action: ConcreteAction | None) -> bool:
    values = _feature_as_set(abstract, cond.feature)
    target = cond.value
    if target.startswith("$") and not target.startswith("$set:") and action is not None:
        bound = action.binding(target[1:])
        if bound is None:
            return False
        target = bound
    if cond.comparator == "eq":
        return values == frozenset({target})
    if cond.comparator == "ne":
        return values != frozenset({target})
    if cond.comparator == "contains":
        return target in values
    if cond.comparator == "not-contains":
        return target not in values
    if cond.comparator == "empty":
        return not values
    if cond.comparator == "nonempty":
        return bool(values)
    return False


def _binding_matches(
    pattern_bindings: tuple[tuple[str, str], ...],
    action: ConcreteAction,
    objective: Objective | None,
    sets: dict[str, frozenset[str]],
) -> bool:
    for slot, wanted in pattern_bindings:
        actual = action.binding(slot)
        if actual is None:
            return False
        if wanted.startswith("$objective."):
            allowed = objective.placeholder(wanted[len("$objective."):]) if objective else frozenset()
            if actual not in allowed:
                return False
        elif wanted.startswith("$set:"):
            if actual not in sets.get(wanted[len("$set:"):], frozenset()):
                return False
        elif actual != wanted:
            return False
    return True


def _rule_matches_action(
    rule: FeasibilityRule,
    action: ConcreteAction,
    abstract: AbstractState,
    sets: dict[str, frozenset[str]],
) -> bool:
    if "*" not in rule.templates and action.template not in rule.templates:
        return False
    if not _binding_matches(rule.bindings, action, None, sets):
        return False
    return all(_condition_holds(c, abstract, action) for c in rule.conditions)


def filter_feasible(
    candidates: list[ConcreteAction],
    abstract: AbstractState,
    rules: RuleSet,
) -> list[ConcreteAction]:
    """Apply feasibility rules: deny beats allow, absent rules default to allow."""
    by_priority = sorted(rules.feasibility, key=lambda r: (-r.priority, r.verdict != "deny", r.id))
    feasible = []
    for action in candidates:
        matching = [r for r in by_priority if _rule_matches_action(r, action, abstract, rules.sets)]
        if any(r.verdict == "deny" for r in matching):
            continue
        allow_exists = any(
            r.verdict == "allow" and ("*" in r.templates or action.template in r.templates)
            for r in rules.feasibility
        )
        if allow_exists and not any(r.verdict == "allow" for r in matching):
            continue
        feasible.append(action)
    return feasible


@dataclass(frozen=True)
class RecommendationBundle:
    actions: tuple[ConcreteAction, ...]
    rationale: dict[str, str]  # action text -> rule ids / backend note
    scores: dict[str, float]
    attempts: dict[str, tuple[int, int]]  # action text -> (tried, failed)


def score_actions(
    feasible: list[ConcreteAction],
    abstract: AbstractState,
    objective: Objective,
    rules: RuleSet,
    penalty_of,
) -> list[tuple[float, ConcreteAction, list[str]]]:
    scored = []
    for action in feasible:
        total = 0.0
        hits: list[str] = []
        for rule in rules.relevance:
            if not all(_condition_holds(c, abstract, action) for c in rule.conditions):
                continue
            for pattern in rule.recommends:
                if pattern.template != action.template:
                    continue
                if _binding_matches(pattern.bindings, action, objective, rules.sets):
                    total += rule.weight
                    hits.append(rule.id)
                    break
        total -= penalty_of(action)
        scored.append((total, action, hits))
    scored.sort(key=lambda item: (-item[0], item[1].text))
    return scored


def recommend(
    abstract: AbstractState,
    objective: Objective,
    feasible: list[ConcreteAction],
    rules: RuleSet,
    penalty_of=lambda action: 0.0,
    attempts_of=lambda action: (0, 0),
    backend=None,
    bundle_size: int = 5,
) -> RecommendationBundle:
    """Rank feasible actions by relevance-rule weight minus coverage penalty.

    A backend with a ``rank_actions`` hook may reorder the rule-selected top
    2 x bundle_size candidates; it can never introduce an infeasible action.
    """
    if not feasible:
        raise EmptyFeasible("no feasible action in the current state")
    scored = score_actions(feasible, abstract, objective, rules, penalty_of)
    shortlist = scored[: 2 * bundle_size]
    ordered = [action for _, action, _ in shortlist]
    if backend is not None and hasattr(backend, "rank_actions"):
        reranked = backend.rank_actions(abstract, objective, [a.text for a in ordered])
        if reranked:
            by_text = {a.text: a for a in ordered}
            kept = [by_text[t] for t in reranked if t in by_text]
            kept.extend(a for a in ordered if a not in kept)
            ordered = kept
    chosen = ordered[:bundle_size]
    rationale = {}
    scores = {}
    attempts = {}
    for score, action, hits in shortlist:
        if action in chosen:
            rationale[action.text] = ",".join(dict.fromkeys(hits)) if hits else "unscored"
            scores[action.text] = score
            attempts[action.text] = attempts_of(action)
    return RecommendationBundle(
        actions=tuple(chosen),
        rationale=rationale,
        scores=scores,
        attempts=attempts,
    )


def validate(
    action: ConcreteAction,
    abstract: AbstractState,
    available: set[ConcreteAction],
    rules: RuleSet,
) -> bool:
    """True iff the action resolves in the current enumeration and passes the rules."""
    if action.template not in TEMPLATE_SLOTS:
        return False
    if action not in available:
        return False
    return bool(filter_feasible([action], abstract, rules))


def _parse_conditions(raw, rule_id: str) -> tuple[Condition, ...]:
    conditions = []
    for cdoc in raw or []:
        comparator = cdoc.get("comparator")
        if comparator not in COMPARATORS:
            raise RuleInvalid(rule_id, f"unknown comparator {comparator!r}")
        feature = cdoc.get("feature")
        if not feature:
            raise RuleInvalid(rule_id, "condition missing feature")
        conditions.append(Condition(feature=feature, comparator=comparator, value=str(cdoc.get("value", ""))))
    return tuple(conditions)


def _check_features(conditions: tuple[Condition, ...], rule_id: str, meta: GameMetadata | None) -> None:
    if meta is None:
        return
    known = set(meta.feature_names())
    for cond in conditions:
        if cond.feature not in known:
            raise RuleInvalid(rule_id, f"condition references unknown feature {cond.feature!r}")


def parse_rules(doc: dict, meta: GameMetadata | None = None) -> RuleSet:
    """Validate a rules-v1 document, optionally against perception metadata."""
    if doc.get("version") != RULES_VERSION:
        raise RuleInvalid("<document>", f"version must be {RULES_VERSION!r}")
    sets = {name: frozenset(str(v) for v in values) for name, values in (doc.get("sets") or {}).items()}
    seen_ids: set[str] = set()

    feasibility = []
    for rdoc in doc.get("feasibility", []):
        rid = rdoc.get("id") or "<unnamed>"
        if rid in seen_ids:
            raise RuleInvalid(rid, "duplicate rule id")
        seen_ids.add(rid)
        raw_templates = rdoc.get("template", "*")
        templates = tuple(raw_templates) if isinstance(raw_templates, list) else (raw_templates,)
        for t in templates:
            if t != "*" and t not in TEMPLATE_SLOTS:
                raise RuleInvalid(rid, f"unknown template {t!r}")
        verdict = rdoc.get("verdict")
        if verdict not in ("allow", "deny"):
            raise RuleInvalid(rid, f"verdict must be allow or deny, got {verdict!r}")
        conditions = _parse_conditions(rdoc.get("conditions"), rid)
        _check_features(conditions, rid, meta)
        bindings = tuple(sorted((str(k), str(v)) for k, v in (rdoc.get("bindings") or {}).items()))
        feasibility.append(
            FeasibilityRule(
                id=rid,
                templates=templates,
                conditions=conditions,
                verdict=verdict,
                priority=int(rdoc.get("priority", 0)),
                bindings=bindings,
            )
        )

    relevance = []
    for rdoc in doc.get("relevance", []):
        rid = rdoc.get("id") or "<unnamed>"
        if rid in seen_ids:
            raise RuleInvalid(rid, "duplicate rule id")
        seen_ids.add(rid)
        weight = float(rdoc.get("weight", 0))
        if weight <= 0:
            raise RuleInvalid(rid, "weight must be > 0")
        source = rdoc.get("source", "expert")
        if source not in ("expert", "doc-extracted"):
            raise RuleInvalid(rid, f"unknown source {source!r}")
        patterns = []
        for pdoc in rdoc.get("recommends", []):
            template = pdoc.get("template")
            if template not in TEMPLATE_SLOTS:
                raise RuleInvalid(rid, f"pattern names unknown template {template!r}")
            bindings = tuple(sorted((str(k), str(v)) for k, v in (pdoc.get("bindings") or {}).items()))
            slot_names = {slot for slot, _ in TEMPLATE_SLOTS[template]}
            for slot, _ in bindings:
                if slot not in slot_names:
                    raise RuleInvalid(rid, f"pattern binds unknown slot {slot!r} of {template}")
            patterns.append(ActionPattern(template=template, bindings=bindings))
        if not patterns:
            raise RuleInvalid(rid, "relevance rule needs at least one recommends entry")
        conditions = _parse_conditions(rdoc.get("conditions"), rid)
        _check_features(conditions, rid, meta)
        relevance.append(
            RelevanceRule(
                id=rid,
                conditions=conditions,
                recommends=tuple(patterns),
                weight=weight,
                source=source,
            )
        )

    return RuleSet(
        family=doc.get("family", "default"),
        feasibility=tuple(feasibility),
        relevance=tuple(relevance),
        sets=sets,
    )


def load_rules(path: str | Path, meta: GameMetadata | None = None) -> RuleSet:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RuleInvalid("<document>", f"cannot read {path}: {exc}") from exc
    return parse_rules(doc, meta)

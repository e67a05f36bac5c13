"""Metadata-driven projection of raw observations into canonical abstract states.

A metadata file ("metadata-v1" JSON) lists observation units: where each one
comes from in the raw state, whether it is continuous / categorical / set
valued, and how to abstract it (bucket thresholds, day/night reduction,
passthrough, or drop). Abstraction filters irrelevant units, discretizes the
rest, and encodes the result as a canonical key string that is stable across
runs and platforms.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

from .errors import MetadataInvalid, SchemaMismatch

METADATA_VERSION = "metadata-v1"

EMPTY_KEY = "<empty>"
DEFAULT_KEY_BUDGET = 512

# Source paths a unit may read, mirroring the raw observation layout. Derived
# views (hostile/friendly splits) exist so rules can reason about NPC stance
# without parsing tuples.
RAW_SCHEMA_PATHS = frozenset(
    {
        "tick",
        "player.location",
        "player.coords",
        "player.hp_fraction",
        "player.mana_fraction",
        "player.status_effects",
        "inventory",
        "nearby_npcs",
        "nearby_npcs.hostile_ids",
        "nearby_npcs.friendly_ids",
        "nearby_objects",
        "quest_log.quest_id",
        "quest_log.active_step",
        "quest_log.complete",
        "quest_log.counters",
        "clock_phase",
        "ambient_noise",
    }
)

UNIT_KINDS = ("continuous", "categorical", "set")
SCHEME_TYPES = ("buckets", "passthrough", "daynight", "drop")


@dataclass(frozen=True)
class Buckets:
    thresholds: tuple[float, ...]
    labels: tuple[str, ...]


@dataclass(frozen=True)
class DayNight:
    cycle_length: int
    day_start: int
    day_end: int  # exclusive


@dataclass(frozen=True)
class UnitSpec:
    name: str
    source: str
    kind: str
    scheme_type: str  # buckets | passthrough | daynight | drop
    buckets: Buckets | None = None
    daynight: DayNight | None = None
    relevant: bool = True
    quest_objective: bool = False


@dataclass(frozen=True)
class GameMetadata:
    version: str
    family: str
    units: tuple[UnitSpec, ...]
    key_budget: int = DEFAULT_KEY_BUDGET

    def unit(self, name: str) -> UnitSpec:
        for u in self.units:
            if u.name == name:
                return u
        raise KeyError(name)

    def feature_names(self) -> tuple[str, ...]:
        return tuple(u.name for u in self.units if u.relevant and u.scheme_type != "drop")

    def objective_unit(self) -> UnitSpec:
        return next(u for u in self.units if u.quest_objective)


FeatureValue = str | frozenset[str]


@dataclass(frozen=True)
class AbstractState:
    """Ordered (name, value) features plus their canonical key."""

    features: tuple[tuple[str, FeatureValue], ...]
    key: str

    def value(self, name: str) -> FeatureValue | None:
        for fname, fvalue in self.features:
            if fname == name:
                return fvalue
        return None


def _parse_scheme(unit_doc: dict, name: str) -> tuple[str, Buckets | None, DayNight | None]:
    scheme = unit_doc.get("scheme") or {}
    stype = scheme.get("type")
    if stype not in SCHEME_TYPES:
        raise MetadataInvalid(name, f"unknown scheme type {stype!r}")
    if stype == "buckets":
        thresholds = tuple(float(t) for t in scheme.get("thresholds", []))
        labels = tuple(str(label) for label in scheme.get("labels", []))
        if len(labels) != len(thresholds) + 1:
            raise MetadataInvalid(name, "labels count must be thresholds count + 1")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise MetadataInvalid(name, "thresholds must be strictly ascending")
        if len(thresholds) == 0:
            raise MetadataInvalid(name, "buckets need at least one threshold")
        return stype, Buckets(thresholds, labels), None
    if stype == "daynight":
        cycle = int(scheme.get("cycle_length", 0))
        window = scheme.get("day_window") or []
        if cycle <= 0:
            raise MetadataInvalid(name, "daynight cycle_length must be > 0")
        if len(window) != 2:
            raise MetadataInvalid(name, "daynight day_window must be [start, end)")
        start, end = int(window[0]), int(window[1])
        if not (0 <= start < end <= cycle):
            raise MetadataInvalid(name, "day_window must satisfy 0 <= start < end <= cycle_length")
        return stype, None, DayNight(cycle, start, end)
    return stype, None, None


def parse_metadata(doc: dict) -> GameMetadata:
    """Validate a metadata-v1 document."""
    if doc.get("version") != METADATA_VERSION:
        raise MetadataInvalid("<document>", f"version must be {METADATA_VERSION!r}")
    units = []
    names = set()
    objective_count = 0
    for unit_doc in doc.get("units", []):
        name = unit_doc.get("name", "<unnamed>")
        if name in names:
            raise MetadataInvalid(name, "duplicate unit name")
        names.add(name)
        source = unit_doc.get("source", "")
        if source not in RAW_SCHEMA_PATHS:
            raise MetadataInvalid(name, f"unknown source path {source!r}")
        kind = unit_doc.get("kind")
        if kind not in UNIT_KINDS:
            raise MetadataInvalid(name, f"unknown kind {kind!r}")
        stype, buckets, daynight = _parse_scheme(unit_doc, name)
        if stype == "buckets" and kind != "continuous":
            raise MetadataInvalid(name, "buckets scheme requires a continuous unit")
        if stype == "daynight" and kind != "continuous":
            raise MetadataInvalid(name, "daynight scheme requires a continuous unit")
        quest_objective = bool(unit_doc.get("quest_objective", False))
        if quest_objective:
            objective_count += 1
        units.append(
            UnitSpec(
                name=name,
                source=source,
                kind=kind,
                scheme_type=stype,
                buckets=buckets,
                daynight=daynight,
                relevant=bool(unit_doc.get("relevant", True)),
                quest_objective=quest_objective,
            )
        )
    if objective_count != 1:
        raise MetadataInvalid("<document>", "exactly one unit must be marked quest_objective")
    key_budget = int(doc.get("key_budget", DEFAULT_KEY_BUDGET))
    if key_budget <= 0:
        raise MetadataInvalid("<document>", "key_budget must be positive")
    return GameMetadata(
        version=METADATA_VERSION,
        family=doc.get("family", "default"),
        units=tuple(units),
        key_budget=key_budget,
    )


def load_metadata(path: str | Path) -> GameMetadata:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MetadataInvalid("<document>", f"cannot read {path}: {exc}") from exc
    return parse_metadata(doc)


def bucket_continuous(value: float, scheme: Buckets) -> str:
    """Map a continuous value into its bucket label.

    Buckets are closed below and open above; a value equal to a threshold maps
    to the higher bucket, and the top bucket is closed at its upper end.
    """
    return scheme.labels[bisect_right(scheme.thresholds, value)]


def day_night(value: float, scheme: DayNight) -> str:
    phase = int(value) % scheme.cycle_length
    return "day" if scheme.day_start <= phase < scheme.day_end else "night"


def _lookup(raw, path: str):
    """Resolve a dotted source path against a raw observation object."""
    obj = raw
    for part in path.split("."):
        if hasattr(obj, part):
            obj = getattr(obj, part)
        elif isinstance(obj, dict) and part in obj:
            obj = obj[part]
        else:
            raise SchemaMismatch(path)
    return obj


def _as_symbol(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (tuple, list)):
        return "(" + ",".join(_as_symbol(v) for v in value) + ")"
    return str(value)


def _as_symbol_set(value) -> frozenset[str]:
    if isinstance(value, dict):
        return frozenset(f"{k}={_as_symbol(v)}" for k, v in value.items())
    if isinstance(value, (set, frozenset, list, tuple)):
        return frozenset(_as_symbol(v) for v in value)
    return frozenset({_as_symbol(value)})


def abstract_state(raw, meta: GameMetadata) -> AbstractState:
    """Select, filter, and discretize a raw observation into an AbstractState."""
    features: list[tuple[str, FeatureValue]] = []
    for unit in meta.units:
        if unit.scheme_type == "drop" or not unit.relevant:
            continue
        value = _lookup(raw, unit.source)
        if unit.scheme_type == "buckets":
            features.append((unit.name, bucket_continuous(float(value), unit.buckets)))
        elif unit.scheme_type == "daynight":
            features.append((unit.name, day_night(float(value), unit.daynight)))
        elif unit.kind == "set":
            features.append((unit.name, _as_symbol_set(value)))
        else:
            features.append((unit.name, _as_symbol(value)))
    return AbstractState(features=tuple(features), key=encode(tuple(features)))


_ESCAPES = (("%", "%25"), ("|", "%7C"), ("=", "%3D"), ("{", "%7B"), ("}", "%7D"), (",", "%2C"))


def _escape(text: str) -> str:
    for raw, enc in _ESCAPES:
        text = text.replace(raw, enc)
    return text


def _unescape(text: str) -> str:
    for raw, enc in reversed(_ESCAPES):
        text = text.replace(enc, raw)
    return text


def encode(features: tuple[tuple[str, FeatureValue], ...]) -> str:
    """Canonical key for a feature list: injective, order-preserving, stable."""
    if not features:
        return EMPTY_KEY
    parts = []
    for name, value in features:
        if isinstance(value, frozenset):
            body = "{" + ",".join(sorted(_escape(v) for v in value)) + "}"
        else:
            body = _escape(value)
        parts.append(f"{_escape(name)}={body}")
    return "|".join(parts)


def decode(key: str) -> tuple[tuple[str, FeatureValue], ...]:
    """Inverse of encode for keys produced by it."""
    if key == EMPTY_KEY:
        return ()
    features: list[tuple[str, FeatureValue]] = []
    for part in key.split("|"):
        name, _, body = part.partition("=")
        if body.startswith("{") and body.endswith("}"):
            inner = body[1:-1]
            members = frozenset(_unescape(m) for m in inner.split(",") if m != "")
            features.append((_unescape(name), members))
        else:
            features.append((_unescape(name), _unescape(body)))
    return tuple(features)

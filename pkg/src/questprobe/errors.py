"""Exception types shared across the package.

Every error raised by questprobe derives from QuestProbeError so callers can
catch the whole family with one clause.
"""


class QuestProbeError(Exception):
    """Base class for all questprobe errors."""


class SpecInvalid(QuestProbeError):
    """A scenario document failed validation (dangling reference, bad graph, ...)."""


class WorldCrashed(QuestProbeError):
    """The world is terminal after a crash fault; observation is impossible."""


class UnknownQuest(QuestProbeError):
    """A quest id does not match the world's quest."""


class CapExceeded(QuestProbeError):
    """Reachability enumeration hit the configured state cap."""


class MetadataInvalid(QuestProbeError):
    """A perception metadata document failed validation."""

    def __init__(self, unit: str, reason: str):
        super().__init__(f"unit {unit!r}: {reason}")
        self.unit = unit
        self.reason = reason


class SchemaMismatch(QuestProbeError):
    """A raw state did not conform to the declared observation schema."""

    def __init__(self, path: str):
        super().__init__(f"no value at source path {path!r}")
        self.path = path


class UnknownTemplate(QuestProbeError):
    """An action names a template outside the fixed template set."""


class RuleInvalid(QuestProbeError):
    """A rules document failed validation."""

    def __init__(self, rule_id: str, reason: str):
        super().__init__(f"rule {rule_id!r}: {reason}")
        self.rule_id = rule_id
        self.reason = reason


class EmptyFeasible(QuestProbeError):
    """No candidate action survived feasibility filtering; the agent is stuck."""


class EmptyBundle(QuestProbeError):
    """Fallback was asked to choose from an empty recommendation bundle."""


class Unparseable(QuestProbeError):
    """Backend output contained no recognizable action or reflection block."""


class UnknownBinding(QuestProbeError):
    """A parsed action references an entity absent from the current enumeration."""


class BackendTimeout(QuestProbeError):
    """The decision backend did not answer within its timeout."""


class BackendUnparseable(QuestProbeError):
    """The decision backend answered with text the parser rejected."""


class TransportError(QuestProbeError):
    """The remote backend failed at the HTTP layer after retries."""


class CredentialMissing(QuestProbeError):
    """The remote backend's credential environment variable is unset."""


class StorageCorrupt(QuestProbeError):
    """A persistence file failed its version or checksum check."""


class SinkUnwritable(QuestProbeError):
    """A report could not be written to its destination."""


class BudgetExceeded(QuestProbeError):
    """A rendered prompt exceeds the token budget even after summarization."""


class AbstractionLeak(QuestProbeError):
    """A visited state key is missing from the reachability oracle's node set."""


class ConfigError(QuestProbeError):
    """Harness or CLI configuration is unusable."""

"""Rule-based countermeasure selection.

A rule watches the attack entries of the event log and, when enough of
them land inside its window, activates a guard.  Conditions only ever look
at attack-sourced entries, so guards cannot trigger each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Any, Iterable, Mapping

from .events import LogEntry


@dataclass(frozen=True)
class Rule:
    rule_id: str
    activate: str
    vectors: frozenset[str] = frozenset()
    target: str = "*"
    threshold: int = 1
    window: int = 1
    priority: int = 0
    immediate: bool = False
    overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", frozenset(self.vectors))
        if self.window < 1:
            raise ValueError(f"rule {self.rule_id!r}: window must be >= 1")
        if self.threshold < 1:
            raise ValueError(f"rule {self.rule_id!r}: threshold must be >= 1")

    def matches(self, entry: LogEntry) -> bool:
        if not entry.is_attack:
            return False
        m = entry.mutation
        assert m is not None
        if self.vectors and m.source.ident not in self.vectors:
            return False
        return fnmatchcase(str(m.target), self.target)

    def holds(self, events: Iterable[LogEntry], tick: int) -> bool:
        lo = tick - self.window
        hits = sum(1 for e in events if lo < e.tick <= tick and self.matches(e))
        return hits >= self.threshold

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.rule_id,
            "activate": self.activate,
            "vectors": sorted(self.vectors),
            "target": self.target,
            "threshold": self.threshold,
            "window": self.window,
            "priority": self.priority,
            "immediate": self.immediate,
            "overrides": dict(self.overrides),
        }


@dataclass(frozen=True)
class Rulebook:
    rules: tuple[Rule, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        seen: set[str] = set()
        for rule in self.rules:
            if rule.rule_id in seen:
                raise ValueError(f"duplicate rule id {rule.rule_id!r}")
            seen.add(rule.rule_id)

    def ordered(self) -> list[Rule]:
        """Rules by descending priority, ties in declaration order."""
        indexed = sorted(enumerate(self.rules), key=lambda pair: (-pair[1].priority, pair[0]))
        return [rule for _, rule in indexed]


@dataclass(frozen=True)
class Activation:
    rule_id: str
    guard_id: str
    priority: int
    immediate: bool = False
    overrides: Mapping[str, Any] = field(default_factory=dict)


def evaluate_rules(
    rulebook: Rulebook,
    window: Iterable[LogEntry],
    active_guards: Iterable[str] = (),
    tick: int | None = None,
) -> list[Activation]:
    """Activations for every rule whose condition holds at ``tick``.

    ``tick`` defaults to the latest tick in ``window``.  Rules targeting an
    already-active guard are skipped.  Several rules may name the same guard;
    all of them are returned, highest priority first, and the caller takes
    the first one.
    """
    events = list(window)
    if tick is None:
        if not events:
            return []
        tick = max(e.tick for e in events)
    active = set(active_guards)
    return [
        Activation(rule.rule_id, rule.activate, rule.priority, rule.immediate, dict(rule.overrides))
        for rule in rulebook.ordered()
        if rule.activate not in active and rule.holds(events, tick)
    ]

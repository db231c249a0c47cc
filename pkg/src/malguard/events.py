"""Mutations and the per-run event log that records their outcomes.

Every change to a simulated host is described by a :class:`Mutation` and,
once passed through :func:`malguard.host.apply_mutation`, recorded as a
:class:`LogEntry`.  The log is the single source of truth for replay,
downtime accounting and rule evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator


class Actor(str, Enum):
    ORGANIZATION = "organization"
    MALWARE = "malware"


class RefKind(str, Enum):
    SERVICE = "service"
    REGISTRY = "registry"
    PROCESS = "process"
    LINEAGE = "lineage"
    FILE = "file"
    STARTUP = "startup"
    TOOL = "tool"


@dataclass(frozen=True, order=True)
class AttrRef:
    """Reference to one attribute of the host, written ``kind:key``.

    ``lineage:<pid>`` names a process together with every process it
    spawned, which is how a self-renaming guard stays addressable.
    """

    kind: RefKind
    key: str

    @classmethod
    def parse(cls, text: str) -> "AttrRef":
        if isinstance(text, AttrRef):
            return text
        kind, sep, key = str(text).partition(":")
        if not sep or not key:
            raise ValueError(f"attribute reference must look like kind:key, got {text!r}")
        try:
            ref_kind = RefKind(kind)
        except ValueError:
            raise ValueError(f"unknown attribute kind {kind!r} in {text!r}") from None
        return cls(ref_kind, key)

    @property
    def pid(self) -> int:
        if self.kind not in (RefKind.PROCESS, RefKind.LINEAGE):
            raise TypeError(f"{self} does not name a process")
        return int(self.key)

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.key}"


class MutationKind(str, Enum):
    SET_SERVICE_RUNNING = "set-service-running"
    SET_REGISTRY_VALUE = "set-registry-value"
    DELETE_REGISTRY_KEY = "delete-registry-key"
    CREATE_REGISTRY_KEY = "create-registry-key"
    KILL_PROCESS = "kill-process"
    SPAWN_PROCESS = "spawn-process"
    RENAME_PROCESS = "rename-process"
    COPY_FILE = "copy-file"
    DELETE_FILE = "delete-file"
    ADD_STARTUP_ENTRY = "add-startup-entry"
    REMOVE_STARTUP_ENTRY = "remove-startup-entry"
    SET_TOOL_STATUS = "set-tool-status"
    SET_HIDDEN = "set-hidden"
    SET_LOCKED = "set-locked"


class SourceKind(str, Enum):
    ATTACK = "attack"
    GUARD = "guard"
    SETUP = "setup"


@dataclass(frozen=True)
class Source:
    kind: SourceKind
    ident: str = ""

    @classmethod
    def attack(cls, vector_id: str) -> "Source":
        return cls(SourceKind.ATTACK, str(vector_id))

    @classmethod
    def guard(cls, guard_id: str) -> "Source":
        return cls(SourceKind.GUARD, guard_id)

    @classmethod
    def parse(cls, text: str) -> "Source":
        kind, _, ident = text.partition(":")
        return cls(SourceKind(kind), ident)

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.ident}" if self.ident else self.kind.value


SETUP = Source(SourceKind.SETUP)


@dataclass(frozen=True)
class Mutation:
    """One requested state change.

    ``target`` is ``None`` only for a spawn whose pid the host allocates;
    the logged copy always carries the resolved pid.
    """

    kind: MutationKind
    target: AttrRef | None
    payload: Any
    actor: Actor
    source: Source = SETUP

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "target": None if self.target is None else str(self.target),
            "payload": self.payload,
            "actor": self.actor.value,
            "source": str(self.source),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Mutation":
        target = data["target"]
        return cls(
            kind=MutationKind(data["kind"]),
            target=None if target is None else AttrRef.parse(target),
            payload=data["payload"],
            actor=Actor(data["actor"]),
            source=Source.parse(data["source"]),
        )


class Outcome(str, Enum):
    APPLIED = "applied"
    BLOCKED = "blocked"
    NOOP = "noop"


@dataclass(frozen=True)
class MutationOutcome:
    status: Outcome
    mutation: Mutation
    reason: str | None = None

    @property
    def applied(self) -> bool:
        return self.status is Outcome.APPLIED


class Phase(str, Enum):
    """Log phases, in the order they occur within a tick."""

    SETUP = "setup"
    PRETEST = "pretest"
    PREEMPT = "preempt"
    ATTACK = "attack"
    RULE = "rule"
    GUARD = "guard"
    POSTTEST = "posttest"


PHASE_ORDER = {phase: i for i, phase in enumerate(Phase)}


class EntryKind(str, Enum):
    MUTATION = "mutation"
    CHECK = "check"
    ACTIVATION = "activation"
    DEFEAT = "defeat"
    FINAL = "final"


@dataclass(frozen=True)
class LogEntry:
    tick: int
    phase: Phase
    kind: EntryKind
    mutation: Mutation | None = None
    outcome: Outcome | None = None
    reason: str | None = None
    detail: dict[str, Any] | None = None

    @property
    def is_attack(self) -> bool:
        return (
            self.kind is EntryKind.MUTATION
            and self.mutation is not None
            and self.mutation.source.kind is SourceKind.ATTACK
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"tick": self.tick, "phase": self.phase.value, "kind": self.kind.value}
        if self.mutation is not None:
            out["mutation"] = self.mutation.to_dict()
        if self.outcome is not None:
            out["outcome"] = self.outcome.value
        if self.reason is not None:
            out["reason"] = self.reason
        if self.detail is not None:
            out["detail"] = self.detail
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LogEntry":
        mutation = data.get("mutation")
        outcome = data.get("outcome")
        return cls(
            tick=int(data["tick"]),
            phase=Phase(data["phase"]),
            kind=EntryKind(data["kind"]),
            mutation=None if mutation is None else Mutation.from_dict(mutation),
            outcome=None if outcome is None else Outcome(outcome),
            reason=data.get("reason"),
            detail=data.get("detail"),
        )


@dataclass
class EventLog:
    entries: list[LogEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self.entries)

    def append(self, entry: LogEntry) -> None:
        if self.entries:
            last = self.entries[-1]
            if (entry.tick, PHASE_ORDER[entry.phase]) < (last.tick, PHASE_ORDER[last.phase]):
                raise ValueError(f"log entry out of order: {entry} after {last}")
        self.entries.append(entry)

    def record_mutation(self, tick: int, phase: Phase, outcome: MutationOutcome) -> None:
        self.append(
            LogEntry(
                tick=tick,
                phase=phase,
                kind=EntryKind.MUTATION,
                mutation=outcome.mutation,
                outcome=outcome.status,
                reason=outcome.reason,
            )
        )

    def mutations(self) -> Iterable[LogEntry]:
        return (e for e in self.entries if e.kind is EntryKind.MUTATION)

    def attack_entries(self, since_tick: int = 0) -> list[LogEntry]:
        return [e for e in self.entries if e.is_attack and e.tick >= since_tick]

    def to_dicts(self) -> list[dict[str, Any]]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_dicts(cls, rows: Iterable[dict[str, Any]]) -> "EventLog":
        log = cls()
        for row in rows:
            log.append(LogEntry.from_dict(row))
        return log

    def to_ndjson(self) -> str:
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in self.to_dicts())

    @classmethod
    def from_ndjson(cls, text: str) -> "EventLog":
        return cls.from_dicts(json.loads(line) for line in text.splitlines() if line.strip())

"""CAPEC-tagged attack vectors and tick-scheduled attacker scripts.

Attackers only ever see the malware view of the host, so anything hidden,
dead or deleted is simply not there for them: a vector whose target is
missing from the view returns no mutations (a miss), never an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .events import Actor, AttrRef, Mutation, MutationKind, RefKind, Source
from .host import HostView, ProcessEntry, Scalar, ToolStatus


class VectorId(str, Enum):
    DISABLE_GUARD_LOGIC = "capec-56-disable-guard-logic"
    MANIPULATE_REGISTRY = "capec-203-manipulate-registry"
    TERMINATE_EXECUTABLE = "capec-17-terminate-executable"
    DISABLE_SUPPORT_TOOL = "disable-support-tool"
    REMOVE_STARTUP_ENTRY = "remove-startup-entry"
    DELETE_FILE = "delete-file"


@dataclass(frozen=True)
class VectorInfo:
    vector_id: VectorId
    capec: str | None
    target_kind: RefKind | None
    summary: str


CATALOG: dict[VectorId, VectorInfo] = {
    info.vector_id: info
    for info in (
        VectorInfo(VectorId.DISABLE_GUARD_LOGIC, "CAPEC-56", RefKind.SERVICE,
                   "stop a protective service (e.g. the host firewall)"),
        VectorInfo(VectorId.MANIPULATE_REGISTRY, "CAPEC-203", RefKind.REGISTRY,
                   "overwrite or delete an application registry value"),
        VectorInfo(VectorId.TERMINATE_EXECUTABLE, "CAPEC-17", None,
                   "find running processes by matcher and kill them"),
        VectorInfo(VectorId.DISABLE_SUPPORT_TOOL, None, RefKind.TOOL,
                   "disable an administration tool such as a task manager"),
        VectorInfo(VectorId.REMOVE_STARTUP_ENTRY, None, RefKind.STARTUP,
                   "remove an autostart entry"),
        VectorInfo(VectorId.DELETE_FILE, None, RefKind.FILE,
                   "delete a file"),
    )
}


class MatchMode(str, Enum):
    EXACT_NAME = "exact-name"
    NAME_PREFIX = "name-prefix"
    IMAGE_PATH = "image-path"


def _dirname(path: str) -> str:
    cut = max(path.rfind("/"), path.rfind("\\"))
    return path[:cut] if cut >= 0 else ""


@dataclass(frozen=True)
class ProcessMatcher:
    """How an attacker recognises its victim.

    ``image-path`` matches the full image path, or every image inside a
    directory when the pattern ends with a path separator.
    """

    mode: MatchMode
    pattern: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", MatchMode(self.mode))
        if not self.pattern:
            raise ValueError("process matcher pattern must be non-empty")

    def matches(self, proc: ProcessEntry) -> bool:
        if self.mode is MatchMode.EXACT_NAME:
            return proc.name == self.pattern
        if self.mode is MatchMode.NAME_PREFIX:
            return proc.name.startswith(self.pattern)
        if self.pattern[-1] in "/\\":
            return _dirname(proc.image_path) == self.pattern[:-1]
        return proc.image_path == self.pattern

    def to_dict(self) -> dict[str, str]:
        return {"mode": self.mode.value, "pattern": self.pattern}


@dataclass(frozen=True)
class AttackVector:
    vector_id: VectorId
    target: AttrRef | None = None
    value: Scalar | None = None
    delete: bool = False
    matcher: ProcessMatcher | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector_id", VectorId(self.vector_id))
        if self.target is not None and not isinstance(self.target, AttrRef):
            object.__setattr__(self, "target", AttrRef.parse(self.target))
        info = CATALOG[self.vector_id]
        if info.target_kind is None:
            if self.matcher is None:
                raise ValueError(f"{self.vector_id.value} needs a process matcher")
            if self.target is not None:
                raise ValueError(f"{self.vector_id.value} takes a matcher, not a target")
        else:
            if self.target is None or self.target.kind is not info.target_kind:
                raise ValueError(
                    f"{self.vector_id.value} needs a {info.target_kind.value}: target, got {self.target}"
                )
            if self.matcher is not None:
                raise ValueError(f"{self.vector_id.value} does not take a matcher")
        if self.vector_id is VectorId.MANIPULATE_REGISTRY:
            if self.delete == (self.value is not None):
                raise ValueError("registry manipulation needs exactly one of value or delete")
        elif self.delete or self.value is not None:
            raise ValueError(f"{self.vector_id.value} takes no value/delete parameter")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"vector": self.vector_id.value}
        if self.target is not None:
            out["target"] = str(self.target)
        if self.value is not None:
            out["value"] = self.value
        if self.delete:
            out["delete"] = True
        if self.matcher is not None:
            out["match"] = self.matcher.to_dict()
        return out


@dataclass(frozen=True)
class AttackStep:
    tick: int
    vector: AttackVector


@dataclass(frozen=True)
class AttackScript:
    """A scripted attacker.

    ``agent`` is the pid of the malware process running the script; once
    that process is dead the script stops firing.  ``repeat`` re-fires every
    step each ``repeat`` ticks after its first tick.
    """

    steps: tuple[AttackStep, ...]
    repeat: int | None = None
    agent: int | None = None
    name: str = "attacker"

    def __post_init__(self) -> None:
        ticks = [s.tick for s in self.steps]
        if any(t < 0 for t in ticks):
            raise ValueError("attack ticks must be non-negative")
        if ticks != sorted(ticks):
            raise ValueError("attack steps must be sorted by tick")
        if self.repeat is not None and self.repeat < 1:
            raise ValueError("repeat period must be >= 1")

    def fires(self, step: AttackStep, tick: int) -> bool:
        if tick == step.tick:
            return True
        return self.repeat is not None and tick > step.tick and (tick - step.tick) % self.repeat == 0


def execute_vector(vector: AttackVector, view: HostView) -> list[Mutation]:
    src = Source.attack(vector.vector_id.value)

    def hit(kind: MutationKind, target: AttrRef, payload: Any = None) -> list[Mutation]:
        return [Mutation(kind, target, payload, Actor.MALWARE, src)]

    vid = vector.vector_id
    target = vector.target
    if vid is VectorId.TERMINATE_EXECUTABLE:
        assert vector.matcher is not None
        return [
            Mutation(MutationKind.KILL_PROCESS, AttrRef(RefKind.PROCESS, str(pid)), None, Actor.MALWARE, src)
            for pid, proc in sorted(view.processes.items())
            if proc.alive and not proc.hidden and vector.matcher.matches(proc)
        ]
    assert target is not None
    if vid is VectorId.DISABLE_GUARD_LOGIC:
        if target.key in view.services:
            return hit(MutationKind.SET_SERVICE_RUNNING, target, False)
    elif vid is VectorId.MANIPULATE_REGISTRY:
        key = view.registry.get(target.key)
        if key is not None and key.exists:
            if vector.delete:
                return hit(MutationKind.DELETE_REGISTRY_KEY, target)
            return hit(MutationKind.SET_REGISTRY_VALUE, target, vector.value)
    elif vid is VectorId.DISABLE_SUPPORT_TOOL:
        if target.key in view.support_tools:
            return hit(MutationKind.SET_TOOL_STATUS, target, ToolStatus.DISABLED.value)
    elif vid is VectorId.REMOVE_STARTUP_ENTRY:
        if target.key in view.startup_entries:
            return hit(MutationKind.REMOVE_STARTUP_ENTRY, target)
    elif vid is VectorId.DELETE_FILE:
        if target.key in view.files:
            return hit(MutationKind.DELETE_FILE, target)
    return []


def attacker_step(script: AttackScript, tick: int, view: HostView) -> list[Mutation]:
    out: list[Mutation] = []
    for step in script.steps:
        if script.fires(step, tick):
            out.extend(execute_vector(step.vector, view))
    return out

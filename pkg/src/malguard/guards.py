"""Guard strategies: defensive reuse of malware self-preservation tricks.

Each guard kind is a pure function from its configuration and an
observation of the host to a list of organization-side mutations.  Any
state a guard needs across ticks (poll phase, remaining iterations) lives
in the engine, not here.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

from .attacks import MatchMode, ProcessMatcher
from .events import Actor, AttrRef, LogEntry, Mutation, MutationKind, RefKind, Source
from .host import HostView, ToolStatus, UnknownTarget, live_lineage


class GuardKind(str, Enum):
    SERVICE_RESTORER = "service-restorer"
    REGISTRY_SENTINEL = "registry-sentinel"
    PROCESS_RANDOMIZER = "process-randomizer"
    REDUNDANT_STARTUP = "redundant-startup"
    ADVERSARY_TERMINATOR = "adversary-terminator"
    ATTRIBUTE_LOCKER = "attribute-locker"
    HIDER = "hider"
    SUPPORT_TOOL_DISABLER = "support-tool-disabler"


class Posture(str, Enum):
    PASSIVE = "passive"
    ACTIVE = "active"


class Scope(str, Enum):
    GENERIC = "generic"
    TARGETED = "targeted"


CLASSIFICATION: dict[GuardKind, tuple[Posture, Scope]] = {
    GuardKind.SERVICE_RESTORER: (Posture.ACTIVE, Scope.GENERIC),
    GuardKind.REGISTRY_SENTINEL: (Posture.ACTIVE, Scope.GENERIC),
    GuardKind.PROCESS_RANDOMIZER: (Posture.ACTIVE, Scope.GENERIC),
    GuardKind.REDUNDANT_STARTUP: (Posture.ACTIVE, Scope.GENERIC),
    GuardKind.ADVERSARY_TERMINATOR: (Posture.ACTIVE, Scope.TARGETED),
    GuardKind.ATTRIBUTE_LOCKER: (Posture.PASSIVE, Scope.GENERIC),
    GuardKind.HIDER: (Posture.PASSIVE, Scope.GENERIC),
    GuardKind.SUPPORT_TOOL_DISABLER: (Posture.ACTIVE, Scope.GENERIC),
}

DESCRIPTIONS: dict[GuardKind, str] = {
    GuardKind.SERVICE_RESTORER: "restart a protective service whenever it is found stopped",
    GuardKind.REGISTRY_SENTINEL: "poll a registry value; recreate the key and rewrite the value on drift",
    GuardKind.PROCESS_RANDOMIZER: "respawn from a randomly named copy of its own executable, then exit the original",
    GuardKind.REDUNDANT_STARTUP: "keep k autostart entries and reinstate any that disappear",
    GuardKind.ADVERSARY_TERMINATOR: "kill blocklisted malware processes before they act",
    GuardKind.ATTRIBUTE_LOCKER: "lock guard entries so malware writes to them are blocked",
    GuardKind.HIDER: "hide guard entries from malware enumeration",
    GuardKind.SUPPORT_TOOL_DISABLER: "disable administration tools malware could use",
}


def classify(kind: GuardKind | str) -> tuple[Posture, Scope]:
    return CLASSIFICATION[GuardKind(kind)]


class Trigger(str, Enum):
    PREEMPTIVE = "preemptive"
    MANUAL = "manual"
    AUTOMATIC = "automatic"


# allowed target kinds per guard; None means the guard takes no targets
_TARGET_KINDS: dict[GuardKind, frozenset[RefKind] | None] = {
    GuardKind.SERVICE_RESTORER: frozenset({RefKind.SERVICE}),
    GuardKind.REGISTRY_SENTINEL: frozenset({RefKind.REGISTRY}),
    GuardKind.PROCESS_RANDOMIZER: frozenset({RefKind.LINEAGE}),
    GuardKind.REDUNDANT_STARTUP: None,
    GuardKind.ADVERSARY_TERMINATOR: None,
    GuardKind.ATTRIBUTE_LOCKER: frozenset(
        {RefKind.PROCESS, RefKind.LINEAGE, RefKind.SERVICE, RefKind.REGISTRY, RefKind.FILE, RefKind.STARTUP}
    ),
    GuardKind.HIDER: frozenset({RefKind.PROCESS, RefKind.LINEAGE, RefKind.REGISTRY, RefKind.FILE, RefKind.STARTUP}),
    GuardKind.SUPPORT_TOOL_DISABLER: frozenset({RefKind.TOOL}),
}

_COMMON_PARAMS = {"poll_period", "iterations"}
_KIND_PARAMS: dict[GuardKind, set[str]] = {
    GuardKind.REGISTRY_SENTINEL: {"desired"},
    GuardKind.REDUNDANT_STARTUP: {"entries"},
    GuardKind.ADVERSARY_TERMINATOR: {"blocklist"},
}


def default_iterations(kind: GuardKind) -> int | None:
    # a randomizer fires once per trigger; everything else polls until stopped
    return 1 if kind is GuardKind.PROCESS_RANDOMIZER else None


def check_params(kind: GuardKind, params: Mapping[str, Any]) -> None:
    allowed = _COMMON_PARAMS | _KIND_PARAMS.get(kind, set())
    for key in params:
        if key not in allowed:
            raise ValueError(f"{kind.value} does not take parameter {key!r}")
    period = params.get("poll_period", 1)
    if not isinstance(period, int) or isinstance(period, bool) or period < 1:
        raise ValueError("poll_period must be an integer >= 1")
    iterations = params.get("iterations")
    if iterations is not None and (not isinstance(iterations, int) or isinstance(iterations, bool) or iterations < 1):
        raise ValueError("iterations must be an integer >= 1 or null")
    if kind is GuardKind.REDUNDANT_STARTUP:
        entries = params.get("entries")
        if not entries:
            raise ValueError("redundant-startup needs at least one entry template")
        for e in entries:
            if set(e) != {"entry_id", "target"}:
                raise ValueError("startup templates need exactly entry_id and target")
    if kind is GuardKind.ADVERSARY_TERMINATOR:
        for e in params.get("blocklist", []):
            ProcessMatcher(MatchMode(e["mode"]), e["pattern"])


@dataclass(frozen=True)
class GuardStrategy:
    """One configured guard.

    ``at`` is the trigger tick for manual guards.  ``until`` (exclusive)
    deactivates the guard.  ``process`` is the lineage root of the process
    hosting the guard; once nothing in that lineage is alive the guard is
    defeated.  A randomizer is always hosted by its own target.
    """

    guard_id: str
    kind: GuardKind
    targets: tuple[AttrRef, ...] = ()
    trigger: Trigger = Trigger.MANUAL
    at: int = 0
    until: int | None = None
    process: int | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GuardKind(self.kind))
        object.__setattr__(self, "trigger", Trigger(self.trigger))
        object.__setattr__(self, "targets", tuple(AttrRef.parse(t) for t in self.targets))
        allowed = _TARGET_KINDS[self.kind]
        if allowed is None:
            if self.targets:
                raise ValueError(f"{self.kind.value} takes its targets from params")
        else:
            if not self.targets:
                raise ValueError(f"{self.kind.value} needs at least one target")
            for t in self.targets:
                if t.kind not in allowed:
                    raise ValueError(f"{self.kind.value} cannot target {t}")
        if self.kind is GuardKind.PROCESS_RANDOMIZER and len(self.targets) != 1:
            raise ValueError("process-randomizer protects exactly one lineage")
        if self.at < 0:
            raise ValueError("trigger tick must be non-negative")
        check_params(self.kind, self.params)

    @property
    def classification(self) -> tuple[Posture, Scope]:
        return classify(self.kind)

    @property
    def host_process(self) -> int | None:
        if self.kind is GuardKind.PROCESS_RANDOMIZER:
            return self.targets[0].pid
        return self.process

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.guard_id,
            "kind": self.kind.value,
            "targets": [str(t) for t in self.targets],
            "trigger": self.trigger.value,
            "at": self.at,
            "until": self.until,
            "process": self.process,
            "params": dict(self.params),
        }


@dataclass(frozen=True)
class GuardObservation:
    tick: int
    view: HostView
    events: tuple[LogEntry, ...] = ()
    seed: int = 0


def _mut(guard_id: str, kind: MutationKind, target: AttrRef | None, payload: Any = None) -> Mutation:
    return Mutation(kind, target, payload, Actor.ORGANIZATION, Source.guard(guard_id))


def service_restorer_step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
    out = []
    for ref in guard.targets:
        svc = obs.view.services.get(ref.key)
        if svc is None:
            raise UnknownTarget(str(ref))
        if not svc.running:
            out.append(_mut(guard.guard_id, MutationKind.SET_SERVICE_RUNNING, ref, True))
    return out


def registry_sentinel_step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
    out = []
    for ref in guard.targets:
        key = obs.view.registry.get(ref.key)
        desired = params.get("desired", key.desired_value if key is not None else None)
        if desired is None:
            raise UnknownTarget(f"{ref} has no desired value configured")
        if key is None or not key.exists:
            out.append(_mut(guard.guard_id, MutationKind.CREATE_REGISTRY_KEY, ref))
            out.append(_mut(guard.guard_id, MutationKind.SET_REGISTRY_VALUE, ref, desired))
        elif not (type(key.value) is type(desired) and key.value == desired):
            out.append(_mut(guard.guard_id, MutationKind.SET_REGISTRY_VALUE, ref, desired))
    return out


NAME_ALPHABET = string.ascii_lowercase + string.digits
NAME_LENGTH = 12


def randomized_name(seed: int, guard_id: str, tick: int, taken: Callable[[str], bool]) -> str:
    """Fresh 12-character lowercase alphanumeric stem.

    Drawn from a generator keyed on (seed, guard, tick) so the result does
    not depend on what else ran earlier; redrawn until ``taken`` rejects it.
    """
    rng = random.Random(f"{seed}/{guard_id}/{tick}")
    while True:
        stem = "".join(rng.choice(NAME_ALPHABET) for _ in range(NAME_LENGTH))
        if not taken(stem):
            return stem


def _split_path(path: str) -> tuple[str, str, str]:
    cut = max(path.rfind("/"), path.rfind("\\"))
    directory, filename = path[: cut + 1], path[cut + 1 :]
    stem, dot, ext = filename.rpartition(".")
    return directory, (dot + ext) if stem else "", filename


def process_randomizer_step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
    root = guard.targets[0].pid
    live = live_lineage(obs.view.processes, root)
    if not live:
        raise UnknownTarget(f"{guard.targets[0]} has no live process")
    current = obs.view.processes[live[-1]]
    if current.image_path not in obs.view.files:
        raise UnknownTarget(f"image {current.image_path!r} is gone")
    directory, ext, _ = _split_path(current.image_path)
    names = {p.name for p in obs.view.processes.values()}

    def taken(stem: str) -> bool:
        return stem + ext in names or directory + stem + ext in obs.view.files

    stem = randomized_name(obs.seed, guard.guard_id, obs.tick, taken)
    new_name = stem + ext
    new_path = directory + new_name
    gid = guard.guard_id
    return [
        _mut(gid, MutationKind.COPY_FILE, AttrRef(RefKind.FILE, current.image_path), new_path),
        _mut(
            gid,
            MutationKind.SPAWN_PROCESS,
            None,
            {
                "name": new_name,
                "image_path": new_path,
                "hidden": current.hidden,
                "locked": current.locked,
                "owner": current.owner.value,
                "parent": current.pid,
            },
        ),
        _mut(gid, MutationKind.KILL_PROCESS, AttrRef(RefKind.PROCESS, str(current.pid))),
    ]


def redundant_startup_step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
    out = []
    for tmpl in params["entries"]:
        if tmpl["target"] not in obs.view.files:
            raise UnknownTarget(f"file:{tmpl['target']}")
        entry = obs.view.startup_entries.get(tmpl["entry_id"])
        if entry is None or entry.target != tmpl["target"]:
            out.append(
                _mut(guard.guard_id, MutationKind.ADD_STARTUP_ENTRY,
                     AttrRef(RefKind.STARTUP, tmpl["entry_id"]), tmpl["target"])
            )
    return out


def adversary_terminator_step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
    matchers = [ProcessMatcher(MatchMode(e["mode"]), e["pattern"]) for e in params.get("blocklist", [])]
    return [
        _mut(guard.guard_id, MutationKind.KILL_PROCESS, AttrRef(RefKind.PROCESS, str(pid)))
        for pid, proc in sorted(obs.view.processes.items())
        if proc.alive and proc.owner is Actor.MALWARE and any(m.matches(proc) for m in matchers)
    ]


def _resolve_flag_target(ref: AttrRef, view: HostView) -> tuple[AttrRef, Any]:
    if ref.kind is RefKind.LINEAGE:
        live = live_lineage(view.processes, ref.pid)
        if not live:
            raise UnknownTarget(f"{ref} has no live process")
        ref = AttrRef(RefKind.PROCESS, str(live[-1]))
    tables: dict[RefKind, Mapping] = {
        RefKind.PROCESS: view.processes,
        RefKind.SERVICE: view.services,
        RefKind.REGISTRY: view.registry,
        RefKind.FILE: view.files,
        RefKind.STARTUP: view.startup_entries,
    }
    key: Any = int(ref.key) if ref.kind is RefKind.PROCESS else ref.key
    entry = tables[ref.kind].get(key)
    if entry is None:
        raise UnknownTarget(str(ref))
    return ref, entry


def _flag_step(flag: str, kind: MutationKind) -> Callable[..., list[Mutation]]:
    def step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
        out = []
        for ref in guard.targets:
            resolved, entry = _resolve_flag_target(ref, obs.view)
            if not getattr(entry, flag):
                out.append(_mut(guard.guard_id, kind, resolved, True))
        return out

    step.__name__ = f"{flag}_step"
    return step


attribute_locker_step = _flag_step("locked", MutationKind.SET_LOCKED)
hider_step = _flag_step("hidden", MutationKind.SET_HIDDEN)


def support_tool_disabler_step(guard: GuardStrategy, obs: GuardObservation, params: Mapping[str, Any]) -> list[Mutation]:
    out = []
    for ref in guard.targets:
        status = obs.view.support_tools.get(ref.key)
        if status is None:
            raise UnknownTarget(str(ref))
        if status is not ToolStatus.DISABLED:
            out.append(_mut(guard.guard_id, MutationKind.SET_TOOL_STATUS, ref, ToolStatus.DISABLED.value))
    return out


_STEPS: dict[GuardKind, Callable[..., list[Mutation]]] = {
    GuardKind.SERVICE_RESTORER: service_restorer_step,
    GuardKind.REGISTRY_SENTINEL: registry_sentinel_step,
    GuardKind.PROCESS_RANDOMIZER: process_randomizer_step,
    GuardKind.REDUNDANT_STARTUP: redundant_startup_step,
    GuardKind.ADVERSARY_TERMINATOR: adversary_terminator_step,
    GuardKind.ATTRIBUTE_LOCKER: attribute_locker_step,
    GuardKind.HIDER: hider_step,
    GuardKind.SUPPORT_TOOL_DISABLER: support_tool_disabler_step,
}


def guard_step(
    guard: GuardStrategy,
    obs: GuardObservation,
    params: Mapping[str, Any] | None = None,
) -> list[Mutation]:
    """Mutations ``guard`` wants to make given ``obs``.

    ``params`` overrides the guard's configured params (rule activations can
    carry overrides).  A guard whose targets are already in their desired
    state returns an empty list.
    """
    effective = dict(guard.params)
    if params:
        effective.update(params)
    return _STEPS[guard.kind](guard, obs, effective)

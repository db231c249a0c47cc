"""Simulated host state and the single mutation choke-point.

Entries are frozen dataclasses; :func:`apply_mutation` swaps whole entries
in and out of the host maps, so a :class:`HostView` can share them with no
risk of later edits leaking into an old snapshot.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Any, Callable, Mapping, Union

from .events import (
    Actor,
    AttrRef,
    EventLog,
    Mutation,
    MutationKind,
    MutationOutcome,
    Outcome,
    Phase,
    RefKind,
)

Scalar = Union[str, int, bool]

#: Value returned by :func:`query_attribute` for a registry key that does not exist.
ABSENT = None


class SpecError(ValueError):
    """A host or scenario definition is inconsistent."""


class UnknownTarget(LookupError):
    """An attribute reference does not resolve against the host."""


class ToolStatus(str, Enum):
    ENABLED = "enabled"
    DISABLED = "disabled"


@dataclass(frozen=True)
class ProcessEntry:
    pid: int
    name: str
    image_path: str
    hidden: bool = False
    locked: bool = False
    owner: Actor = Actor.ORGANIZATION
    alive: bool = True
    parent: int | None = None


@dataclass(frozen=True)
class ServiceEntry:
    service_id: str
    running: bool = True
    locked: bool = False
    desired_running: bool = True


@dataclass(frozen=True)
class RegistryKey:
    path: str
    value: Scalar | None = None
    exists: bool = True
    locked: bool = False
    desired_value: Scalar | None = None
    hidden: bool = False


@dataclass(frozen=True)
class FileEntry:
    path: str
    content_id: str
    hidden: bool = False
    locked: bool = False


@dataclass(frozen=True)
class StartupEntry:
    entry_id: str
    target: str
    locked: bool = False
    hidden: bool = False


@dataclass(frozen=True)
class HostSpec:
    """Declarative host description, as read from a scenario file."""

    services: tuple[ServiceEntry, ...] = ()
    registry: tuple[RegistryKey, ...] = ()
    processes: tuple[ProcessEntry, ...] = ()
    files: tuple[FileEntry, ...] = ()
    startup_entries: tuple[StartupEntry, ...] = ()
    support_tools: tuple[tuple[str, ToolStatus], ...] = ()


@dataclass(eq=False)
class HostState:
    processes: dict[int, ProcessEntry] = field(default_factory=dict)
    services: dict[str, ServiceEntry] = field(default_factory=dict)
    registry: dict[str, RegistryKey] = field(default_factory=dict)
    files: dict[str, FileEntry] = field(default_factory=dict)
    startup_entries: dict[str, StartupEntry] = field(default_factory=dict)
    support_tools: dict[str, ToolStatus] = field(default_factory=dict)
    tick: int = 0

    def copy(self) -> "HostState":
        return HostState(
            processes=dict(self.processes),
            services=dict(self.services),
            registry=dict(self.registry),
            files=dict(self.files),
            startup_entries=dict(self.startup_entries),
            support_tools=dict(self.support_tools),
            tick=self.tick,
        )

    def to_dict(self) -> dict[str, Any]:
        def rows(mapping: Mapping) -> list[dict[str, Any]]:
            return [_jsonable(asdict(mapping[k])) for k in sorted(mapping)]

        return {
            "tick": self.tick,
            "processes": rows(self.processes),
            "services": rows(self.services),
            "registry": rows(self.registry),
            "files": rows(self.files),
            "startup_entries": rows(self.startup_entries),
            "support_tools": {k: v.value for k, v in sorted(self.support_tools.items())},
        }

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; equal states give equal digests."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def __eq__(self, other: object) -> bool:
        # via JSON so that a registry value of True never equals 1
        if not isinstance(other, HostState):
            return NotImplemented
        return self.canonical() == other.canonical()


def _jsonable(row: dict[str, Any]) -> dict[str, Any]:
    return {k: (v.value if isinstance(v, Enum) else v) for k, v in row.items()}


@dataclass(frozen=True)
class HostView:
    """Read-only projection of a host as one actor sees it."""

    observer: Actor
    tick: int
    processes: Mapping[int, ProcessEntry]
    services: Mapping[str, ServiceEntry]
    registry: Mapping[str, RegistryKey]
    files: Mapping[str, FileEntry]
    startup_entries: Mapping[str, StartupEntry]
    support_tools: Mapping[str, ToolStatus]


def build_host(spec: HostSpec) -> HostState:
    host = HostState()

    def put(mapping: dict, key: Any, entry: Any, what: str) -> None:
        if key in mapping:
            raise SpecError(f"duplicate {what} {key!r}")
        mapping[key] = entry

    for svc in spec.services:
        put(host.services, svc.service_id, svc, "service")
    for key in spec.registry:
        if not key.exists and key.value is not None:
            raise SpecError(f"registry key {key.path!r} is absent but carries a value")
        put(host.registry, key.path, key, "registry key")
    for f in spec.files:
        put(host.files, f.path, f, "file")
    for proc in spec.processes:
        put(host.processes, proc.pid, proc, "process")
    for entry in spec.startup_entries:
        put(host.startup_entries, entry.entry_id, entry, "startup entry")
    for tool, status in spec.support_tools:
        put(host.support_tools, tool, ToolStatus(status), "support tool")

    for proc in host.processes.values():
        if proc.image_path not in host.files:
            raise SpecError(f"process {proc.pid} image {proc.image_path!r} is not a declared file")
        if proc.parent is not None and proc.parent not in host.processes:
            raise SpecError(f"process {proc.pid} parent {proc.parent} is not declared")
    for entry in host.startup_entries.values():
        if entry.target not in host.files:
            raise SpecError(f"startup entry {entry.entry_id!r} target {entry.target!r} is not a declared file")
    return host


# --------------------------------------------------------------------------
# lineage helpers


def lineage_members(processes: Mapping[int, ProcessEntry], root: int) -> list[int]:
    """Pids of ``root`` and every process descended from it, ascending."""
    members = {root} if root in processes else set()
    grew = True
    while grew:
        grew = False
        for pid, proc in processes.items():
            if pid not in members and proc.parent in members:
                members.add(pid)
                grew = True
    return sorted(members)


def live_lineage(processes: Mapping[int, ProcessEntry], root: int) -> list[int]:
    return [pid for pid in lineage_members(processes, root) if processes[pid].alive]


# --------------------------------------------------------------------------
# the choke-point

_DESTRUCTIVE = frozenset(MutationKind) - {
    MutationKind.SPAWN_PROCESS,
    MutationKind.COPY_FILE,
    MutationKind.CREATE_REGISTRY_KEY,
    MutationKind.ADD_STARTUP_ENTRY,
}


def _same(a: Any, b: Any) -> bool:
    # True == 1 in Python; registry values must not conflate them
    return type(a) is type(b) and a == b


def _lock_blocks(entry: Any, m: Mutation) -> bool:
    return m.actor is Actor.MALWARE and getattr(entry, "locked", False)


def _need(mapping: Mapping, key: Any, ref: AttrRef | None) -> Any:
    try:
        return mapping[key]
    except KeyError:
        raise UnknownTarget(str(ref)) from None


def _pid(ref: AttrRef | None) -> int:
    if ref is None or ref.kind is not RefKind.PROCESS:
        raise UnknownTarget(f"{ref} is not a process reference")
    try:
        return int(ref.key)
    except ValueError:
        raise UnknownTarget(str(ref)) from None


def _expect_kind(ref: AttrRef | None, kind: RefKind) -> str:
    if ref is None or ref.kind is not kind:
        raise UnknownTarget(f"{ref} is not a {kind.value} reference")
    return ref.key


Result = tuple[Outcome, str | None]

_APPLIED: Result = (Outcome.APPLIED, None)
_NOOP: Result = (Outcome.NOOP, None)
_LOCKED: Result = (Outcome.BLOCKED, "locked")


def _set_service_running(host: HostState, m: Mutation) -> Result:
    key = _expect_kind(m.target, RefKind.SERVICE)
    svc = _need(host.services, key, m.target)
    if _lock_blocks(svc, m):
        return _LOCKED
    if svc.running == bool(m.payload):
        return _NOOP
    host.services[key] = replace(svc, running=bool(m.payload))
    return _APPLIED


def _set_registry_value(host: HostState, m: Mutation) -> Result:
    key = _expect_kind(m.target, RefKind.REGISTRY)
    reg = _need(host.registry, key, m.target)
    if _lock_blocks(reg, m):
        return _LOCKED
    if not reg.exists:
        return Outcome.BLOCKED, "absent"
    if _same(reg.value, m.payload):
        return _NOOP
    host.registry[key] = replace(reg, value=m.payload)
    return _APPLIED


def _delete_registry_key(host: HostState, m: Mutation) -> Result:
    key = _expect_kind(m.target, RefKind.REGISTRY)
    reg = _need(host.registry, key, m.target)
    if _lock_blocks(reg, m):
        return _LOCKED
    if not reg.exists:
        return _NOOP
    host.registry[key] = replace(reg, exists=False, value=None)
    return _APPLIED


def _create_registry_key(host: HostState, m: Mutation) -> Result:
    key = _expect_kind(m.target, RefKind.REGISTRY)
    reg = host.registry.get(key)
    if reg is None:
        host.registry[key] = RegistryKey(path=key, value=m.payload, exists=True)
        return _APPLIED
    if reg.exists:
        return _NOOP
    host.registry[key] = replace(reg, exists=True, value=m.payload)
    return _APPLIED


def _kill_process(host: HostState, m: Mutation) -> Result:
    pid = _pid(m.target)
    proc = _need(host.processes, pid, m.target)
    if _lock_blocks(proc, m):
        return _LOCKED
    if not proc.alive:
        return _NOOP
    host.processes[pid] = replace(proc, alive=False)
    return _APPLIED


def _spawn_process(host: HostState, m: Mutation) -> Result:
    spec = dict(m.payload)
    pid = _pid(m.target)
    if pid in host.processes:
        return Outcome.BLOCKED, "pid-in-use"
    if spec["image_path"] not in host.files:
        return Outcome.BLOCKED, "missing-image"
    parent = spec.get("parent")
    if parent is not None and parent not in host.processes:
        return Outcome.BLOCKED, "missing-parent"
    host.processes[pid] = ProcessEntry(
        pid=pid,
        name=spec["name"],
        image_path=spec["image_path"],
        hidden=bool(spec.get("hidden", False)),
        locked=bool(spec.get("locked", False)),
        owner=Actor(spec.get("owner", m.actor.value)),
        alive=True,
        parent=parent,
    )
    return _APPLIED


def _rename_process(host: HostState, m: Mutation) -> Result:
    pid = _pid(m.target)
    proc = _need(host.processes, pid, m.target)
    if _lock_blocks(proc, m):
        return _LOCKED
    if proc.name == m.payload:
        return _NOOP
    host.processes[pid] = replace(proc, name=str(m.payload))
    return _APPLIED


def _copy_file(host: HostState, m: Mutation) -> Result:
    src_path = _expect_kind(m.target, RefKind.FILE)
    src = _need(host.files, src_path, m.target)
    dst_path = str(m.payload)
    existing = host.files.get(dst_path)
    if existing is not None:
        return _NOOP if existing.content_id == src.content_id else (Outcome.BLOCKED, "exists")
    host.files[dst_path] = replace(src, path=dst_path)
    return _APPLIED


def _file_referenced(host: HostState, path: str) -> bool:
    return any(p.image_path == path for p in host.processes.values()) or any(
        s.target == path for s in host.startup_entries.values()
    )


def _delete_file(host: HostState, m: Mutation) -> Result:
    path = _expect_kind(m.target, RefKind.FILE)
    entry = host.files.get(path)
    if entry is None:
        return _NOOP
    if _lock_blocks(entry, m):
        return _LOCKED
    if _file_referenced(host, path):
        return Outcome.BLOCKED, "in-use"
    del host.files[path]
    return _APPLIED


def _add_startup_entry(host: HostState, m: Mutation) -> Result:
    entry_id = _expect_kind(m.target, RefKind.STARTUP)
    target = str(m.payload)
    existing = host.startup_entries.get(entry_id)
    if existing is not None:
        if existing.target == target:
            return _NOOP
        if _lock_blocks(existing, m):
            return _LOCKED
    if target not in host.files:
        return Outcome.BLOCKED, "missing-target"
    if existing is None:
        host.startup_entries[entry_id] = StartupEntry(entry_id=entry_id, target=target)
    else:
        host.startup_entries[entry_id] = replace(existing, target=target)
    return _APPLIED


def _remove_startup_entry(host: HostState, m: Mutation) -> Result:
    entry_id = _expect_kind(m.target, RefKind.STARTUP)
    entry = host.startup_entries.get(entry_id)
    if entry is None:
        return _NOOP
    if _lock_blocks(entry, m):
        return _LOCKED
    del host.startup_entries[entry_id]
    return _APPLIED


def _set_tool_status(host: HostState, m: Mutation) -> Result:
    tool = _expect_kind(m.target, RefKind.TOOL)
    current = _need(host.support_tools, tool, m.target)
    status = ToolStatus(m.payload)
    if current is status:
        return _NOOP
    host.support_tools[tool] = status
    return _APPLIED


def _flag_slot(host: HostState, ref: AttrRef | None, flag: str) -> tuple[dict, Any]:
    if ref is None:
        raise UnknownTarget("missing target")
    slots: dict[RefKind, tuple[dict, Callable[[str], Any]]] = {
        RefKind.PROCESS: (host.processes, int),
        RefKind.FILE: (host.files, str),
        RefKind.REGISTRY: (host.registry, str),
        RefKind.STARTUP: (host.startup_entries, str),
    }
    if flag == "locked":
        slots[RefKind.SERVICE] = (host.services, str)
    if ref.kind not in slots:
        raise UnknownTarget(f"{ref} cannot carry a {flag} flag")
    mapping, conv = slots[ref.kind]
    try:
        key = conv(ref.key)
    except ValueError:
        raise UnknownTarget(str(ref)) from None
    _need(mapping, key, ref)
    return mapping, key


def _set_flag(flag: str) -> Callable[[HostState, Mutation], Result]:
    def handler(host: HostState, m: Mutation) -> Result:
        mapping, key = _flag_slot(host, m.target, flag)
        entry = mapping[key]
        if _lock_blocks(entry, m):
            return _LOCKED
        if getattr(entry, flag) == bool(m.payload):
            return _NOOP
        mapping[key] = replace(entry, **{flag: bool(m.payload)})
        return _APPLIED

    return handler


_HANDLERS: dict[MutationKind, Callable[[HostState, Mutation], Result]] = {
    MutationKind.SET_SERVICE_RUNNING: _set_service_running,
    MutationKind.SET_REGISTRY_VALUE: _set_registry_value,
    MutationKind.DELETE_REGISTRY_KEY: _delete_registry_key,
    MutationKind.CREATE_REGISTRY_KEY: _create_registry_key,
    MutationKind.KILL_PROCESS: _kill_process,
    MutationKind.SPAWN_PROCESS: _spawn_process,
    MutationKind.RENAME_PROCESS: _rename_process,
    MutationKind.COPY_FILE: _copy_file,
    MutationKind.DELETE_FILE: _delete_file,
    MutationKind.ADD_STARTUP_ENTRY: _add_startup_entry,
    MutationKind.REMOVE_STARTUP_ENTRY: _remove_startup_entry,
    MutationKind.SET_TOOL_STATUS: _set_tool_status,
    MutationKind.SET_HIDDEN: _set_flag("hidden"),
    MutationKind.SET_LOCKED: _set_flag("locked"),
}


def is_destructive(kind: MutationKind) -> bool:
    return kind in _DESTRUCTIVE


def apply_mutation(
    host: HostState,
    m: Mutation,
    log: EventLog | None = None,
    phase: Phase = Phase.SETUP,
) -> MutationOutcome:
    """Apply ``m`` to ``host`` unless a lock blocks it or it changes nothing.

    Locks only ever stop the malware actor.  Spawns without a target get the
    next free pid; the returned outcome (and the log) carry the resolved
    mutation.  Raises :class:`UnknownTarget` when the reference does not
    resolve; nothing is logged in that case.
    """
    if m.kind is MutationKind.SPAWN_PROCESS and m.target is None:
        next_pid = max(host.processes, default=0) + 1
        m = replace(m, target=AttrRef(RefKind.PROCESS, str(next_pid)))
    status, reason = _HANDLERS[m.kind](host, m)
    outcome = MutationOutcome(status, m, reason)
    if log is not None:
        log.record_mutation(host.tick, phase, outcome)
    return outcome


# --------------------------------------------------------------------------
# reads


def query_attribute(host: HostState | HostView, ref: AttrRef | str) -> Any:
    """Current value of one attribute.

    service -> running flag, registry -> value or ``ABSENT``, process ->
    alive flag, lineage -> whether any member is alive, file/startup ->
    presence, tool -> status string.
    """
    ref = AttrRef.parse(ref)
    if ref.kind is RefKind.SERVICE:
        return _need(host.services, ref.key, ref).running
    if ref.kind is RefKind.REGISTRY:
        reg = _need(host.registry, ref.key, ref)
        return reg.value if reg.exists else ABSENT
    if ref.kind is RefKind.PROCESS:
        return _need(host.processes, _pid(ref), ref).alive
    if ref.kind is RefKind.LINEAGE:
        root = ref.pid
        _need(host.processes, root, ref)
        return bool(live_lineage(host.processes, root))
    if ref.kind is RefKind.FILE:
        return ref.key in host.files
    if ref.kind is RefKind.STARTUP:
        return ref.key in host.startup_entries
    return _need(host.support_tools, ref.key, ref).value


def matches_desired(value: Any, desired: Any) -> bool:
    return _same(value, desired)


def visible_view(host: HostState, observer: Actor) -> HostView:
    """Snapshot of ``host`` as ``observer`` sees it.

    Malware sees neither hidden entries nor anything already gone (dead
    processes, deleted registry keys); the organization sees everything.
    """
    if observer is Actor.ORGANIZATION:
        processes = dict(host.processes)
        registry = dict(host.registry)
        files = dict(host.files)
        startup = dict(host.startup_entries)
    else:
        processes = {k: p for k, p in host.processes.items() if p.alive and not p.hidden}
        registry = {k: r for k, r in host.registry.items() if r.exists and not r.hidden}
        files = {k: f for k, f in host.files.items() if not f.hidden}
        startup = {k: s for k, s in host.startup_entries.items() if not s.hidden}
    return HostView(
        observer=observer,
        tick=host.tick,
        processes=MappingProxyType(processes),
        services=MappingProxyType(dict(host.services)),
        registry=MappingProxyType(registry),
        files=MappingProxyType(files),
        startup_entries=MappingProxyType(startup),
        support_tools=MappingProxyType(dict(host.support_tools)),
    )

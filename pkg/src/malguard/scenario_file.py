"""JSON scenario files: strict parsing into :class:`ScenarioSpec` and back.

Unknown keys anywhere in the document are rejected, and every error names
the JSON location it came from (``guards[1].params.poll_period``).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .attacks import AttackScript, AttackStep, AttackVector, MatchMode, ProcessMatcher, VectorId
from .engine import ProtectedAttribute, ScenarioSpec
from .events import Actor, AttrRef, RefKind
from .guards import GuardKind, GuardStrategy, Trigger
from .host import (
    FileEntry,
    HostSpec,
    ProcessEntry,
    RegistryKey,
    ServiceEntry,
    SpecError,
    StartupEntry,
    ToolStatus,
)
from .rules import Rule, Rulebook


class ScenarioError(SpecError):
    """A scenario document is malformed; the message names the location."""


_MISSING = object()


class _Obj:
    """Strict accessor over one JSON object."""

    def __init__(self, data: Any, where: str, required: set[str], optional: set[str] = frozenset()):
        if not isinstance(data, dict):
            raise ScenarioError(f"{where}: expected an object, got {type(data).__name__}")
        for key in data:
            if key not in required and key not in optional:
                raise ScenarioError(f"{where}: unknown key {key!r}")
        for key in required:
            if key not in data:
                raise ScenarioError(f"{where}: missing key {key!r}")
        self.data = data
        self.where = where

    def at(self, key: str) -> str:
        return f"{self.where}.{key}" if self.where else key

    def get(self, key: str, kind: type | tuple[type, ...] | None = None, default: Any = _MISSING) -> Any:
        if key not in self.data:
            if default is _MISSING:
                raise ScenarioError(f"{self.at(key)}: missing")
            return default
        value = self.data[key]
        if kind is not None and value is not None:
            bad_bool = isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,))
            if not isinstance(value, kind) or bad_bool:
                raise ScenarioError(f"{self.at(key)}: expected {_type_name(kind)}, got {value!r}")
        return value

    def items(self, key: str) -> list[tuple[str, Any]]:
        value = self.get(key, list, [])
        return [(f"{self.at(key)}[{i}]", item) for i, item in enumerate(value)]


def _type_name(kind: type | tuple[type, ...]) -> str:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    return " or ".join(k.__name__ for k in kinds)


def _wrap(where: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


SCALAR = (str, int, bool)


def _parse_host(data: Any) -> HostSpec:
    obj = _Obj(data, "host", set(), {"services", "registry", "processes", "files", "startup", "tools"})
    services = []
    for where, item in obj.items("services"):
        o = _Obj(item, where, {"id"}, {"running", "locked", "desired_running"})
        services.append(
            ServiceEntry(
                service_id=o.get("id", str),
                running=o.get("running", bool, True),
                locked=o.get("locked", bool, False),
                desired_running=o.get("desired_running", bool, True),
            )
        )
    registry = []
    for where, item in obj.items("registry"):
        o = _Obj(item, where, {"path"}, {"value", "exists", "locked", "desired_value", "hidden"})
        registry.append(
            RegistryKey(
                path=o.get("path", str),
                value=o.get("value", SCALAR, None),
                exists=o.get("exists", bool, True),
                locked=o.get("locked", bool, False),
                desired_value=o.get("desired_value", SCALAR, o.data.get("value")),
                hidden=o.get("hidden", bool, False),
            )
        )
    processes = []
    for where, item in obj.items("processes"):
        o = _Obj(item, where, {"pid", "name", "image_path"}, {"hidden", "locked", "owner", "alive", "parent"})
        processes.append(
            ProcessEntry(
                pid=o.get("pid", int),
                name=o.get("name", str),
                image_path=o.get("image_path", str),
                hidden=o.get("hidden", bool, False),
                locked=o.get("locked", bool, False),
                owner=_wrap(o.at("owner"), Actor, o.get("owner", str, "organization")),
                alive=o.get("alive", bool, True),
                parent=o.get("parent", int, None),
            )
        )
    files = []
    for where, item in obj.items("files"):
        o = _Obj(item, where, {"path"}, {"content_id", "hidden", "locked"})
        path = o.get("path", str)
        files.append(
            FileEntry(
                path=path,
                content_id=o.get("content_id", str, path),
                hidden=o.get("hidden", bool, False),
                locked=o.get("locked", bool, False),
            )
        )
    startup = []
    for where, item in obj.items("startup"):
        o = _Obj(item, where, {"id", "target"}, {"locked", "hidden"})
        startup.append(
            StartupEntry(
                entry_id=o.get("id", str),
                target=o.get("target", str),
                locked=o.get("locked", bool, False),
                hidden=o.get("hidden", bool, False),
            )
        )
    tools = []
    for name, status in (obj.get("tools", dict, {}) or {}).items():
        tools.append((name, _wrap(f"host.tools.{name}", ToolStatus, status)))
    return HostSpec(
        services=tuple(services),
        registry=tuple(registry),
        processes=tuple(processes),
        files=tuple(files),
        startup_entries=tuple(startup),
        support_tools=tuple(tools),
    )


def _parse_vector(o: _Obj) -> AttackVector:
    vid = _wrap(o.at("vector"), VectorId, o.get("vector", str))
    matcher = None
    if "match" in o.data:
        m = _Obj(o.data["match"], o.at("match"), {"mode", "pattern"})
        matcher = _wrap(m.where, ProcessMatcher, _wrap(m.at("mode"), MatchMode, m.get("mode", str)), m.get("pattern", str))
    target = o.get("target", str, None)
    return _wrap(
        o.where,
        AttackVector,
        vector_id=vid,
        target=None if target is None else _wrap(o.at("target"), AttrRef.parse, target),
        value=o.get("value", SCALAR, None),
        delete=o.get("delete", bool, False),
        matcher=matcher,
    )


def _parse_attackers(obj: _Obj) -> tuple[AttackScript, ...]:
    scripts = []
    for where, item in obj.items("attackers"):
        o = _Obj(item, where, {"steps"}, {"name", "agent", "repeat"})
        steps = []
        for swhere, sitem in o.items("steps"):
            so = _Obj(sitem, swhere, {"tick", "vector"}, {"target", "value", "delete", "match"})
            steps.append(AttackStep(so.get("tick", int), _parse_vector(so)))
        scripts.append(
            _wrap(
                where,
                AttackScript,
                steps=tuple(steps),
                repeat=o.get("repeat", int, None),
                agent=o.get("agent", int, None),
                name=o.get("name", str, f"attacker-{len(scripts)}"),
            )
        )
    return tuple(scripts)


def _parse_guards(obj: _Obj) -> tuple[GuardStrategy, ...]:
    guards = []
    for where, item in obj.items("guards"):
        o = _Obj(item, where, {"id", "kind"}, {"targets", "trigger", "at", "until", "process", "params"})
        targets = []
        for twhere, t in o.items("targets"):
            if not isinstance(t, str):
                raise ScenarioError(f"{twhere}: expected str, got {t!r}")
            targets.append(_wrap(twhere, AttrRef.parse, t))
        guards.append(
            _wrap(
                where,
                GuardStrategy,
                guard_id=o.get("id", str),
                kind=_wrap(o.at("kind"), GuardKind, o.get("kind", str)),
                targets=tuple(targets),
                trigger=_wrap(o.at("trigger"), Trigger, o.get("trigger", str, "manual")),
                at=o.get("at", int, 0),
                until=o.get("until", int, None),
                process=o.get("process", int, None),
                params=o.get("params", dict, {}) or {},
            )
        )
    return tuple(guards)


def _parse_rules(obj: _Obj) -> Rulebook:
    rules = []
    for where, item in obj.items("rules"):
        o = _Obj(
            item,
            where,
            {"id", "activate"},
            {"vectors", "target", "threshold", "window", "priority", "immediate", "overrides"},
        )
        vectors = o.get("vectors", list, [])
        for i, v in enumerate(vectors):
            _wrap(f"{o.at('vectors')}[{i}]", VectorId, v)
        rules.append(
            _wrap(
                where,
                Rule,
                rule_id=o.get("id", str),
                activate=o.get("activate", str),
                vectors=frozenset(vectors),
                target=o.get("target", str, "*"),
                threshold=o.get("threshold", int, 1),
                window=o.get("window", int, 1),
                priority=o.get("priority", int, 0),
                immediate=o.get("immediate", bool, False),
                overrides=o.get("overrides", dict, {}) or {},
            )
        )
    return _wrap("rules", Rulebook, tuple(rules))


def _default_desired(ref: AttrRef, host: HostSpec, where: str) -> Any:
    if ref.kind is RefKind.SERVICE:
        for svc in host.services:
            if svc.service_id == ref.key:
                return svc.desired_running
    elif ref.kind is RefKind.REGISTRY:
        for key in host.registry:
            if key.path == ref.key and key.desired_value is not None:
                return key.desired_value
    elif ref.kind in (RefKind.PROCESS, RefKind.LINEAGE, RefKind.FILE, RefKind.STARTUP):
        return True
    raise ScenarioError(f"{where}: no default desired value for {ref}; give 'desired'")


def parse_scenario(data: Any, name: str | None = None) -> ScenarioSpec:
    top = _Obj(data, "", {"host", "run"}, {"name", "description", "attackers", "guards", "rules", "protected"})
    host = _parse_host(top.data["host"])
    run = _Obj(top.data["run"], "run", {"length"}, {"seed"})
    protected = []
    for where, item in top.items("protected"):
        o = _Obj(item, where, {"ref"}, {"desired"})
        ref = _wrap(o.at("ref"), AttrRef.parse, o.get("ref", str))
        desired = o.get("desired", SCALAR) if "desired" in o.data else _default_desired(ref, host, where)
        protected.append(ProtectedAttribute(ref, desired))
    return ScenarioSpec(
        host=host,
        attackers=_parse_attackers(top),
        guards=_parse_guards(top),
        rulebook=_parse_rules(top),
        protected=tuple(protected),
        run_length=run.get("length", int),
        seed=run.get("seed", int, 0),
        name=top.get("name", str, name or "scenario"),
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Read a scenario file.  ``bundled:<name>`` loads a shipped scenario."""
    text = str(path)
    if text.startswith("bundled:"):
        name = text.split(":", 1)[1]
        resource = resources.files("malguard.scenarios") / f"{name}.json"
        if not resource.is_file():
            raise FileNotFoundError(f"no bundled scenario {name!r}")
        raw = resource.read_text()
        stem = name
    else:
        raw = Path(path).read_text()
        stem = Path(path).stem
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(data, name=stem)


def bundled_scenarios() -> list[str]:
    root = resources.files("malguard.scenarios")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def dump_scenario(spec: ScenarioSpec) -> dict[str, Any]:
    """Inverse of :func:`parse_scenario` (desired values are always explicit)."""
    host = spec.host
    return {
        "name": spec.name,
        "host": {
            "services": [
                {"id": s.service_id, "running": s.running, "locked": s.locked, "desired_running": s.desired_running}
                for s in host.services
            ],
            "registry": [
                {
                    "path": r.path,
                    **({"value": r.value} if r.value is not None else {}),
                    "exists": r.exists,
                    "locked": r.locked,
                    **({"desired_value": r.desired_value} if r.desired_value is not None else {}),
                    "hidden": r.hidden,
                }
                for r in host.registry
            ],
            "processes": [
                {
                    "pid": p.pid,
                    "name": p.name,
                    "image_path": p.image_path,
                    "hidden": p.hidden,
                    "locked": p.locked,
                    "owner": p.owner.value,
                    "alive": p.alive,
                    "parent": p.parent,
                }
                for p in host.processes
            ],
            "files": [
                {"path": f.path, "content_id": f.content_id, "hidden": f.hidden, "locked": f.locked}
                for f in host.files
            ],
            "startup": [
                {"id": e.entry_id, "target": e.target, "locked": e.locked, "hidden": e.hidden}
                for e in host.startup_entries
            ],
            "tools": {name: ToolStatus(status).value for name, status in host.support_tools},
        },
        "attackers": [
            {
                "name": a.name,
                "agent": a.agent,
                "repeat": a.repeat,
                "steps": [{"tick": s.tick, **s.vector.to_dict()} for s in a.steps],
            }
            for a in spec.attackers
        ],
        "guards": [g.to_dict() for g in spec.guards],
        "rules": [r.to_dict() for r in spec.rulebook.rules],
        "protected": [{"ref": str(p.ref), "desired": p.desired} for p in spec.protected],
        "run": {"length": spec.run_length, "seed": spec.seed},
    }

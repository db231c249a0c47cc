"""Seeded generator of valid random scenarios over the full catalogs.

Used for determinism and replay sweeps; every generated scenario passes
:func:`malguard.engine.validate_spec`.
"""

from __future__ import annotations

import random

from .attacks import AttackScript, AttackStep, AttackVector, MatchMode, ProcessMatcher, VectorId
from .engine import ProtectedAttribute, ScenarioSpec
from .events import Actor, AttrRef, RefKind
from .guards import GuardKind, GuardStrategy, Trigger
from .host import FileEntry, HostSpec, ProcessEntry, RegistryKey, ServiceEntry, StartupEntry, ToolStatus
from .rules import Rule, Rulebook


def _coin(rng: random.Random, p: float = 0.5) -> bool:
    return rng.random() < p


def random_host(rng: random.Random) -> HostSpec:
    files = []
    processes = []
    pid = 0
    for i in range(rng.randint(1, 3)):
        path = f"C:/Tools/guard{i}.exe"
        files.append(FileEntry(path, f"guard{i}", hidden=_coin(rng, 0.2), locked=_coin(rng, 0.3)))
        pid += 1
        processes.append(
            ProcessEntry(pid, f"guard{i}.exe", path, hidden=_coin(rng, 0.3), locked=_coin(rng, 0.3))
        )
    for j in range(rng.randint(1, 2)):
        path = f"C:/Temp/m{j}.exe"
        files.append(FileEntry(path, f"m{j}"))
        pid += 1
        processes.append(ProcessEntry(pid, f"m{j}.exe", path, owner=Actor.MALWARE))
    for k in range(rng.randint(0, 3)):
        files.append(FileEntry(f"C:/Data/f{k}.dat", f"data{k}", hidden=_coin(rng, 0.3), locked=_coin(rng, 0.3)))

    services = tuple(
        ServiceEntry(f"svc{i}", running=_coin(rng, 0.8), locked=_coin(rng, 0.3))
        for i in range(rng.randint(1, 3))
    )
    registry = []
    for i in range(rng.randint(1, 3)):
        value = rng.choice([True, False, rng.randint(0, 9), f"v{rng.randint(0, 9)}"])
        registry.append(
            RegistryKey(f"HKLM/App/K{i}", value, locked=_coin(rng, 0.3), desired_value=value, hidden=_coin(rng, 0.2))
        )
    guard_images = [f.path for f in files if f.path.startswith("C:/Tools/")]
    startup = tuple(
        StartupEntry(f"run{i}", rng.choice(guard_images), locked=_coin(rng, 0.3), hidden=_coin(rng, 0.2))
        for i in range(rng.randint(0, 3))
    )
    tools = tuple((f"tool{i}", ToolStatus.ENABLED) for i in range(rng.randint(0, 3)))
    return HostSpec(
        services=services,
        registry=tuple(registry),
        processes=tuple(processes),
        files=tuple(files),
        startup_entries=startup,
        support_tools=tools,
    )


def _random_vector(rng: random.Random, host: HostSpec) -> AttackVector:
    org = [p for p in host.processes if p.owner is Actor.ORGANIZATION]
    choices = [VectorId.DISABLE_GUARD_LOGIC, VectorId.MANIPULATE_REGISTRY, VectorId.TERMINATE_EXECUTABLE,
               VectorId.DELETE_FILE]
    if host.support_tools:
        choices.append(VectorId.DISABLE_SUPPORT_TOOL)
    if host.startup_entries:
        choices.append(VectorId.REMOVE_STARTUP_ENTRY)
    vid = rng.choice(choices)
    if vid is VectorId.DISABLE_GUARD_LOGIC:
        return AttackVector(vid, AttrRef(RefKind.SERVICE, rng.choice(host.services).service_id))
    if vid is VectorId.MANIPULATE_REGISTRY:
        ref = AttrRef(RefKind.REGISTRY, rng.choice(host.registry).path)
        if _coin(rng, 0.4):
            return AttackVector(vid, ref, delete=True)
        return AttackVector(vid, ref, value=rng.choice([True, False, rng.randint(0, 9), "evil"]))
    if vid is VectorId.TERMINATE_EXECUTABLE:
        victim = rng.choice(org)
        mode = rng.choice(list(MatchMode))
        if mode is MatchMode.EXACT_NAME:
            pattern = victim.name
        elif mode is MatchMode.NAME_PREFIX:
            pattern = victim.name[: rng.randint(1, len(victim.name))]
        else:
            pattern = victim.image_path if _coin(rng) else victim.image_path.rsplit("/", 1)[0] + "/"
        return AttackVector(vid, matcher=ProcessMatcher(mode, pattern))
    if vid is VectorId.DISABLE_SUPPORT_TOOL:
        return AttackVector(vid, AttrRef(RefKind.TOOL, rng.choice(host.support_tools)[0]))
    if vid is VectorId.REMOVE_STARTUP_ENTRY:
        return AttackVector(vid, AttrRef(RefKind.STARTUP, rng.choice(host.startup_entries).entry_id))
    return AttackVector(vid, AttrRef(RefKind.FILE, rng.choice(host.files).path))


def _random_guard(rng: random.Random, gid: str, host: HostSpec, run_length: int) -> GuardStrategy:
    org_pids = [p.pid for p in host.processes if p.owner is Actor.ORGANIZATION]
    kinds = list(GuardKind)
    if not host.support_tools:
        kinds.remove(GuardKind.SUPPORT_TOOL_DISABLER)
    kind = rng.choice(kinds)
    trigger = rng.choice(list(Trigger))
    params: dict = {}
    if _coin(rng):
        params["poll_period"] = rng.randint(1, 3)
    targets: list[AttrRef] = []
    if kind is GuardKind.SERVICE_RESTORER:
        targets = [AttrRef(RefKind.SERVICE, s.service_id) for s in rng.sample(host.services, rng.randint(1, len(host.services)))]
    elif kind is GuardKind.REGISTRY_SENTINEL:
        targets = [AttrRef(RefKind.REGISTRY, rng.choice(host.registry).path)]
        if _coin(rng, 0.3):
            params["iterations"] = rng.randint(1, 6)
    elif kind is GuardKind.PROCESS_RANDOMIZER:
        targets = [AttrRef(RefKind.LINEAGE, str(rng.choice(org_pids)))]
        if _coin(rng, 0.3):
            params["iterations"] = rng.randint(1, 3)
    elif kind is GuardKind.REDUNDANT_STARTUP:
        images = [f.path for f in host.files if f.path.startswith("C:/Tools/")]
        params["entries"] = [
            {"entry_id": f"run{i}", "target": rng.choice(images)} for i in range(rng.randint(1, 3))
        ]
    elif kind is GuardKind.ADVERSARY_TERMINATOR:
        malware = [p for p in host.processes if p.owner is Actor.MALWARE]
        params["blocklist"] = [{"mode": "exact-name", "pattern": p.name} for p in malware if _coin(rng, 0.7)]
        if _coin(rng, 0.3):
            # a blocklist entry colliding with an organization process
            params["blocklist"].append({"mode": "name-prefix", "pattern": "guard"})
    elif kind is GuardKind.SUPPORT_TOOL_DISABLER:
        targets = [AttrRef(RefKind.TOOL, rng.choice(host.support_tools)[0])]
    else:
        pool = [AttrRef(RefKind.LINEAGE, str(pid)) for pid in org_pids]
        pool += [AttrRef(RefKind.FILE, f.path) for f in host.files]
        pool += [AttrRef(RefKind.REGISTRY, r.path) for r in host.registry]
        pool += [AttrRef(RefKind.STARTUP, e.entry_id) for e in host.startup_entries]
        if kind is GuardKind.ATTRIBUTE_LOCKER:
            pool += [AttrRef(RefKind.SERVICE, s.service_id) for s in host.services]
        targets = rng.sample(pool, rng.randint(1, min(3, len(pool))))
    return GuardStrategy(
        guard_id=gid,
        kind=kind,
        targets=tuple(targets),
        trigger=trigger,
        at=rng.randint(0, max(0, run_length // 2)),
        until=rng.randint(run_length // 2, run_length) if _coin(rng, 0.15) else None,
        process=rng.choice(org_pids) if _coin(rng, 0.5) else None,
        params=params,
    )


def random_scenario(seed: int) -> ScenarioSpec:
    rng = random.Random(seed)
    host = random_host(rng)
    run_length = rng.randint(5, 25)
    malware = [p.pid for p in host.processes if p.owner is Actor.MALWARE]

    attackers = []
    for a in range(rng.randint(1, 2)):
        ticks = sorted(rng.randrange(run_length) for _ in range(rng.randint(1, 5)))
        steps = tuple(AttackStep(t, _random_vector(rng, host)) for t in ticks)
        attackers.append(
            AttackScript(
                steps,
                repeat=rng.randint(2, 6) if _coin(rng, 0.3) else None,
                agent=rng.choice(malware) if _coin(rng, 0.7) else None,
                name=f"attacker{a}",
            )
        )

    guards = [_random_guard(rng, f"g{i}", host, run_length) for i in range(rng.randint(1, 4))]
    rules = []
    vectors = [v.value for v in VectorId]
    for g in guards:
        if g.trigger is Trigger.AUTOMATIC or _coin(rng, 0.2):
            rules.append(
                Rule(
                    rule_id=f"r{len(rules)}",
                    activate=g.guard_id,
                    vectors=frozenset(rng.sample(vectors, rng.randint(0, 3))),
                    threshold=rng.randint(1, 2),
                    window=rng.randint(1, 4),
                    priority=rng.randint(0, 5),
                    immediate=_coin(rng, 0.3),
                )
            )

    pool: list[ProtectedAttribute] = [ProtectedAttribute(AttrRef(RefKind.SERVICE, s.service_id), True) for s in host.services]
    pool += [ProtectedAttribute(AttrRef(RefKind.REGISTRY, r.path), r.desired_value) for r in host.registry]
    pool += [
        ProtectedAttribute(AttrRef(RefKind.LINEAGE, str(p.pid)), True)
        for p in host.processes
        if p.owner is Actor.ORGANIZATION
    ]
    pool += [ProtectedAttribute(AttrRef(RefKind.STARTUP, e.entry_id), True) for e in host.startup_entries]
    protected = tuple(rng.sample(pool, rng.randint(1, len(pool))))

    return ScenarioSpec(
        host=host,
        attackers=tuple(attackers),
        guards=tuple(guards),
        rulebook=Rulebook(tuple(rules)),
        protected=protected,
        run_length=run_length,
        seed=rng.getrandbits(63),
        name=f"random-{seed}",
    )

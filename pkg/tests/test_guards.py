from itertools import combinations

import pytest

from conftest import FLAG, GUARD_EXE, MALWARE_EXE, basic_host_spec

from malguard.attacks import AttackVector, MatchMode, ProcessMatcher, VectorId, execute_vector
from malguard.events import Actor, AttrRef, Mutation, MutationKind, Outcome, RefKind, Source
from malguard.guards import (
    CLASSIFICATION,
    GuardKind,
    GuardObservation,
    GuardStrategy,
    Posture,
    Scope,
    Trigger,
    classify,
    guard_step,
    randomized_name,
)
from malguard.host import (
    FileEntry,
    ProcessEntry,
    ServiceEntry,
    StartupEntry,
    ToolStatus,
    UnknownTarget,
    apply_mutation,
    build_host,
    live_lineage,
    query_attribute,
    visible_view,
)

ORG, MAL = Actor.ORGANIZATION, Actor.MALWARE


def observe(host, tick=0, seed=7):
    return GuardObservation(tick=tick, view=visible_view(host, ORG), seed=seed)


def run(guard, host, tick=0, seed=7):
    outs = [apply_mutation(host, m) for m in guard_step(guard, observe(host, tick, seed))]
    return outs


def attack(host, kind, target, payload=None):
    return apply_mutation(host, Mutation(kind, AttrRef.parse(target), payload, MAL, Source.attack("t")))


# -- classification --------------------------------------------------------


def test_eight_kinds_with_fixed_classification():
    assert len(GuardKind) == 8
    passive = {k for k, (p, _) in CLASSIFICATION.items() if p is Posture.PASSIVE}
    targeted = {k for k, (_, s) in CLASSIFICATION.items() if s is Scope.TARGETED}
    assert passive == {GuardKind.ATTRIBUTE_LOCKER, GuardKind.HIDER}
    assert targeted == {GuardKind.ADVERSARY_TERMINATOR}
    assert classify("registry-sentinel") == (Posture.ACTIVE, Scope.GENERIC)


# -- construction ----------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind=GuardKind.SERVICE_RESTORER),
        dict(kind=GuardKind.SERVICE_RESTORER, targets=("registry:x",)),
        dict(kind=GuardKind.PROCESS_RANDOMIZER, targets=("lineage:1", "lineage:2")),
        dict(kind=GuardKind.PROCESS_RANDOMIZER, targets=("process:1",)),
        dict(kind=GuardKind.REDUNDANT_STARTUP, params={}),
        dict(kind=GuardKind.REDUNDANT_STARTUP, targets=("startup:a",), params={"entries": [{"entry_id": "a", "target": "x"}]}),
        dict(kind=GuardKind.SERVICE_RESTORER, targets=("service:fw",), params={"poll_period": 0}),
        dict(kind=GuardKind.SERVICE_RESTORER, targets=("service:fw",), params={"iterations": True}),
        dict(kind=GuardKind.SERVICE_RESTORER, targets=("service:fw",), params={"desired": True}),
        dict(kind=GuardKind.HIDER, targets=("service:fw",)),
        dict(kind=GuardKind.SERVICE_RESTORER, targets=("service:fw",), at=-1),
    ],
)
def test_invalid_guard_configs(kwargs):
    with pytest.raises(ValueError):
        GuardStrategy("g", **kwargs)


# -- service restorer ------------------------------------------------------


def test_restorer_restarts_stopped_service(host):
    guard = GuardStrategy("r", GuardKind.SERVICE_RESTORER, ("service:firewall",))
    assert guard_step(guard, observe(host)) == []
    attack(host, MutationKind.SET_SERVICE_RUNNING, "service:firewall", False)
    muts = guard_step(guard, observe(host))
    assert [(m.kind, m.payload, m.actor) for m in muts] == [(MutationKind.SET_SERVICE_RUNNING, True, ORG)]
    assert all(o.applied for o in run(guard, host))
    assert query_attribute(host, "service:firewall") is True


@pytest.mark.parametrize("locked", [False, True])
@pytest.mark.parametrize("actor", [ORG, MAL])
def test_lock_only_binds_malware(locked, actor):
    host = build_host(basic_host_spec(services=(ServiceEntry("firewall", running=False, locked=locked),)))
    out = apply_mutation(host, Mutation(MutationKind.SET_SERVICE_RUNNING, AttrRef.parse("service:firewall"), True, actor))
    expect_blocked = locked and actor is MAL
    assert (out.status is Outcome.BLOCKED) == expect_blocked
    assert query_attribute(host, "service:firewall") is (not expect_blocked)


def test_restorer_unknown_service(host):
    guard = GuardStrategy("r", GuardKind.SERVICE_RESTORER, ("service:nope",))
    with pytest.raises(UnknownTarget):
        guard_step(guard, observe(host))


# -- registry sentinel -----------------------------------------------------


def test_sentinel_rewrites_flipped_value(host):
    guard = GuardStrategy("s", GuardKind.REGISTRY_SENTINEL, (f"registry:{FLAG}",), params={"desired": True})
    attack(host, MutationKind.SET_REGISTRY_VALUE, f"registry:{FLAG}", False)
    run(guard, host)
    assert query_attribute(host, f"registry:{FLAG}") is True


def test_sentinel_recreates_deleted_key(host):
    guard = GuardStrategy("s", GuardKind.REGISTRY_SENTINEL, (f"registry:{FLAG}",), params={"desired": True})
    attack(host, MutationKind.DELETE_REGISTRY_KEY, f"registry:{FLAG}")
    kinds = [m.kind for m in guard_step(guard, observe(host))]
    assert kinds == [MutationKind.CREATE_REGISTRY_KEY, MutationKind.SET_REGISTRY_VALUE]
    run(guard, host)
    assert query_attribute(host, f"registry:{FLAG}") is True


def test_sentinel_treats_int_as_drift(host):
    guard = GuardStrategy("s", GuardKind.REGISTRY_SENTINEL, (f"registry:{FLAG}",))
    attack(host, MutationKind.SET_REGISTRY_VALUE, f"registry:{FLAG}", 1)
    assert len(guard_step(guard, observe(host))) == 1


def test_sentinel_param_override(host):
    guard = GuardStrategy("s", GuardKind.REGISTRY_SENTINEL, (f"registry:{FLAG}",))
    muts = guard_step(guard, observe(host), {"desired": "strict"})
    assert [m.payload for m in muts] == ["strict"]


# -- redundant startup -----------------------------------------------------

ENTRY_IDS = ("run0", "run1", "run2")


def _startup_guard():
    return GuardStrategy(
        "rs",
        GuardKind.REDUNDANT_STARTUP,
        params={"entries": [{"entry_id": e, "target": GUARD_EXE} for e in ENTRY_IDS]},
    )


@pytest.mark.parametrize(
    "removed", [set(c) for n in range(len(ENTRY_IDS) + 1) for c in combinations(ENTRY_IDS, n)], ids=str
)
def test_redundant_startup_reinstates_exactly_removed(removed):
    host = build_host(basic_host_spec(startup_entries=tuple(StartupEntry(e, GUARD_EXE) for e in ENTRY_IDS)))
    for e in sorted(removed):
        assert attack(host, MutationKind.REMOVE_STARTUP_ENTRY, f"startup:{e}").applied
    muts = guard_step(_startup_guard(), observe(host))
    assert {m.target.key for m in muts} == removed
    run(_startup_guard(), host)
    assert set(host.startup_entries) == set(ENTRY_IDS)


# -- adversary terminator --------------------------------------------------


def test_terminator_kills_blocklisted_malware(host):
    guard = GuardStrategy(
        "t", GuardKind.ADVERSARY_TERMINATOR, params={"blocklist": [{"mode": "exact-name", "pattern": "meterpreter.exe"}]}
    )
    run(guard, host)
    assert query_attribute(host, "process:2") is False
    assert query_attribute(host, "process:1") is True


def test_terminator_never_kills_organization_processes(host):
    blocklist = [{"mode": "exact-name", "pattern": p} for p in ("guardapp.exe", "meterpreter.exe")]
    guard = GuardStrategy("t", GuardKind.ADVERSARY_TERMINATOR, params={"blocklist": blocklist})
    targets = {m.target.pid for m in guard_step(guard, observe(host))}
    assert targets == {2}


# -- process randomizer ----------------------------------------------------


def _randomizer(iterations=None):
    params = {} if iterations is None else {"iterations": iterations}
    return GuardStrategy("rnd", GuardKind.PROCESS_RANDOMIZER, ("lineage:1",), params=params)


def test_randomizer_copy_spawn_kill(host):
    outs = run(_randomizer(), host, tick=1)
    assert [o.mutation.kind for o in outs] == [
        MutationKind.COPY_FILE,
        MutationKind.SPAWN_PROCESS,
        MutationKind.KILL_PROCESS,
    ]
    assert all(o.applied for o in outs)
    assert live_lineage(host.processes, 1) == [3]
    child = host.processes[3]
    assert child.parent == 1
    assert child.image_path.startswith("C:/Tools/") and child.name.endswith(".exe")
    stem = child.name[: -len(".exe")]
    assert len(stem) == 12 and stem.isalnum() and stem == stem.lower()


def test_randomizer_twice_gives_distinct_names_and_one_survivor(host):
    run(_randomizer(), host, tick=1)
    run(_randomizer(), host, tick=2)
    live = live_lineage(host.processes, 1)
    assert len(live) == 1
    names = {host.processes[p].name for p in (3, 4)}
    assert len(names) == 2 and "guardapp.exe" not in names


def test_randomizer_deterministic_per_seed_and_tick(host):
    a = guard_step(_randomizer(), observe(host, tick=1, seed=5))
    b = guard_step(_randomizer(), observe(host, tick=1, seed=5))
    c = guard_step(_randomizer(), observe(host, tick=1, seed=6))
    assert a == b
    assert a[1].payload["name"] != c[1].payload["name"]


def test_randomized_name_redraws_on_collision():
    first = randomized_name(1, "g", 0, lambda s: False)
    second = randomized_name(1, "g", 0, lambda s: s == first)
    assert second != first and len(second) == 12


def test_randomizer_inherits_flags():
    host = build_host(basic_host_spec(processes=(ProcessEntry(1, "guardapp.exe", GUARD_EXE, hidden=True, locked=True),)))
    run(_randomizer(), host)
    child = host.processes[max(host.processes)]
    assert child.hidden and child.locked


def test_exact_name_misses_but_image_path_hits_after_randomizing(host):
    run(_randomizer(), host, tick=1)
    view = visible_view(host, MAL)
    by_name = AttackVector(VectorId.TERMINATE_EXECUTABLE, matcher=ProcessMatcher(MatchMode.EXACT_NAME, "guardapp.exe"))
    by_dir = AttackVector(VectorId.TERMINATE_EXECUTABLE, matcher=ProcessMatcher(MatchMode.IMAGE_PATH, "C:/Tools/"))
    assert execute_vector(by_name, view) == []
    assert [m.target.pid for m in execute_vector(by_dir, view)] == live_lineage(host.processes, 1)


# -- locker, hider, tool disabler ------------------------------------------


def test_locker_makes_kill_blocked(host):
    guard = GuardStrategy("l", GuardKind.ATTRIBUTE_LOCKER, ("lineage:1", f"file:{GUARD_EXE}", "service:firewall"))
    run(guard, host)
    assert guard_step(guard, observe(host)) == []
    assert attack(host, MutationKind.KILL_PROCESS, "process:1").status is Outcome.BLOCKED
    assert attack(host, MutationKind.SET_SERVICE_RUNNING, "service:firewall", False).status is Outcome.BLOCKED


def test_locker_follows_lineage_to_live_descendant(host):
    run(_randomizer(), host)
    guard = GuardStrategy("l", GuardKind.ATTRIBUTE_LOCKER, ("lineage:1",))
    (m,) = guard_step(guard, observe(host))
    assert m.target == AttrRef(RefKind.PROCESS, "3")


def test_hider_removes_entries_from_malware_view(host):
    guard = GuardStrategy("h", GuardKind.HIDER, ("process:1", f"registry:{FLAG}"))
    run(guard, host)
    view = visible_view(host, MAL)
    assert 1 not in view.processes and FLAG not in view.registry
    kill = AttackVector(VectorId.TERMINATE_EXECUTABLE, matcher=ProcessMatcher(MatchMode.EXACT_NAME, "guardapp.exe"))
    flip = AttackVector(VectorId.MANIPULATE_REGISTRY, AttrRef.parse(f"registry:{FLAG}"), value=False)
    assert execute_vector(kill, view) == [] and execute_vector(flip, view) == []


def test_tool_disabler_then_attacker_noop():
    host = build_host(basic_host_spec(support_tools=(("taskmgr", ToolStatus.ENABLED),)))
    guard = GuardStrategy("d", GuardKind.SUPPORT_TOOL_DISABLER, ("tool:taskmgr",))
    run(guard, host)
    assert query_attribute(host, "tool:taskmgr") == "disabled"
    vec = AttackVector(VectorId.DISABLE_SUPPORT_TOOL, AttrRef.parse("tool:taskmgr"))
    outs = [apply_mutation(host, m) for m in execute_vector(vec, visible_view(host, MAL))]
    assert all(o.status is Outcome.NOOP for o in outs)


def test_guard_trigger_values():
    assert {t.value for t in Trigger} == {"preemptive", "manual", "automatic"}
    assert MALWARE_EXE in build_host(basic_host_spec()).files
    assert FileEntry(GUARD_EXE, "g").path == GUARD_EXE

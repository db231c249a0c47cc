import dataclasses
import random

import pytest

from conftest import FLAG, basic_host_spec, bundled, timeline

from malguard.attacks import AttackScript, AttackStep, AttackVector, MatchMode, ProcessMatcher, VectorId
from malguard.engine import (
    ProtectedAttribute,
    ReplayDivergence,
    ScenarioSpec,
    Simulation,
    recorded_digest,
    replay,
    run_scenario,
    validate_spec,
)
from malguard.events import PHASE_ORDER, Actor, AttrRef, EntryKind, EventLog, Outcome, Phase
from malguard.guards import GuardKind, GuardStrategy, Trigger
from malguard.host import SpecError, matches_desired
from malguard.randomized import random_scenario
from malguard.rules import Rule, Rulebook

FW = AttrRef.parse("service:firewall")
STOP_FW = AttackVector(VectorId.DISABLE_GUARD_LOGIC, FW)


def fw_scenario(attack_ticks=(3,), guards=(), rules=(), run_length=8, **kw):
    return ScenarioSpec(
        host=basic_host_spec(),
        attackers=(AttackScript(tuple(AttackStep(t, STOP_FW) for t in attack_ticks), agent=2),),
        guards=tuple(guards),
        rulebook=Rulebook(tuple(rules)),
        protected=(ProtectedAttribute(FW, True),),
        run_length=run_length,
        **kw,
    )


RESTORER = GuardStrategy("restorer", GuardKind.SERVICE_RESTORER, (FW,), process=1)


# -- bundled experiments ---------------------------------------------------


def test_experiment1_outcome_sequence():
    spec = bundled("experiment1")
    report = run_scenario(spec)
    assert report.pretest == {"service:firewall": True}
    values = timeline(spec, report.log, ["service:firewall"])["service:firewall"]
    assert values == [True, True, True, False, True, True, True, True]
    assert report.restoration_latencies["service:firewall"] == [(3, 4)]
    assert report.downtime_ticks["service:firewall"] == 1
    assert report.passed


def test_experiment2_both_variants():
    spec = bundled("experiment2")
    report = run_scenario(spec)
    assert report.restoration_latencies[f"registry:{FLAG}"] == [(3, 4), (7, 8)]
    assert report.posttest == {f"registry:{FLAG}": True}


def test_experiment3_phases():
    defeated = run_scenario(bundled("experiment3-noguard"))
    assert not defeated.passed
    guarded = run_scenario(bundled("experiment3"))
    assert guarded.passed
    sim = Simulation(bundled("experiment3"))
    sim.run()
    alive = [p for p in sim.host.processes.values() if p.alive and p.owner is Actor.ORGANIZATION]
    assert len(alive) == 1 and alive[0].parent == 1


# -- basic loop ------------------------------------------------------------


def test_no_attack_no_downtime():
    report = run_scenario(fw_scenario(attack_ticks=(), guards=(RESTORER,)))
    assert report.downtime_ticks == {"service:firewall": 0}
    assert report.restoration_latencies == {"service:firewall": []}
    assert report.passed and report.control_score == 1.0


def test_unguarded_attack_never_restored():
    report = run_scenario(fw_scenario())
    assert report.restoration_latencies["service:firewall"] == [(3, None)]
    assert report.downtime_ticks["service:firewall"] == 5
    assert not report.passed
    assert report.control.holder.value == "malware-more-control"


def test_nothing_protected_scores_full():
    spec = dataclasses.replace(fw_scenario(), protected=())
    report = run_scenario(spec)
    assert report.control_score == 1.0 and report.passed


def test_dead_agent_stops_attacking():
    kill_agent = GuardStrategy(
        "t", GuardKind.ADVERSARY_TERMINATOR, trigger=Trigger.PREEMPTIVE,
        params={"blocklist": [{"mode": "exact-name", "pattern": "meterpreter.exe"}]},
    )
    report = run_scenario(fw_scenario(guards=(kill_agent,)))
    assert report.passed
    assert not any(e.is_attack for e in report.log)


def test_guard_defeated_when_host_process_killed():
    kill_guard = AttackVector(VectorId.TERMINATE_EXECUTABLE, matcher=ProcessMatcher(MatchMode.EXACT_NAME, "guardapp.exe"))
    spec = dataclasses.replace(
        fw_scenario(),
        attackers=(AttackScript((AttackStep(2, kill_guard), AttackStep(3, STOP_FW)), agent=2),),
        guards=(RESTORER,),
    )
    report = run_scenario(spec)
    assert [(d.guard_id, d.tick) for d in report.guard_defeats] == [("restorer", 2)]
    assert not report.passed


def test_blocked_guard_mutation_recorded_as_defeat():
    # the sentinel at tick 4 acts on the snapshot taken before the tick-4
    # deletion, so its rewrite hits a missing key; it recovers at tick 5
    flag = AttrRef.parse(f"registry:{FLAG}")
    spec = ScenarioSpec(
        host=basic_host_spec(),
        attackers=(
            AttackScript(
                (
                    AttackStep(3, AttackVector(VectorId.MANIPULATE_REGISTRY, flag, value=False)),
                    AttackStep(4, AttackVector(VectorId.MANIPULATE_REGISTRY, flag, delete=True)),
                )
            ),
        ),
        guards=(GuardStrategy("s", GuardKind.REGISTRY_SENTINEL, (flag,)),),
        protected=(ProtectedAttribute(flag, True),),
        run_length=7,
    )
    report = run_scenario(spec)
    assert [(d.guard_id, d.tick, d.reason) for d in report.guard_defeats] == [("s", 4, "blocked: absent")]
    assert report.restoration_latencies[str(flag)] == [(3, 5)]
    assert report.passed


def test_until_deactivates_guard():
    guard = dataclasses.replace(RESTORER, until=3)
    report = run_scenario(fw_scenario(guards=(guard,)))
    assert report.restoration_latencies["service:firewall"] == [(3, None)]


def test_iterations_budget():
    guard = dataclasses.replace(RESTORER, params={"iterations": 2})
    report = run_scenario(fw_scenario(guards=(guard,)))
    assert not report.passed


# -- rules -----------------------------------------------------------------


@pytest.mark.parametrize("immediate", [False, True])
def test_rule_activates_automatic_guard(immediate):
    guard = dataclasses.replace(RESTORER, trigger=Trigger.AUTOMATIC)
    rule = Rule("on-stop", "restorer", frozenset({VectorId.DISABLE_GUARD_LOGIC.value}), immediate=immediate)
    report = run_scenario(fw_scenario(guards=(guard,), rules=(rule,)))
    activations = [e for e in report.log if e.kind is EntryKind.ACTIVATION]
    assert [(e.tick, e.detail["effective"]) for e in activations] == [(3, 3 if immediate else 4)]
    # an immediate guard runs at tick 3 on the pre-attack snapshot and finds
    # nothing to do; either way the restoration lands at tick 4
    runs = sorted({e.tick for e in report.log.mutations() if not e.is_attack})
    assert runs == [4]
    assert report.restoration_latencies["service:firewall"] == [(3, 4)]
    assert report.passed


def test_rule_activation_latches():
    guard = dataclasses.replace(RESTORER, trigger=Trigger.AUTOMATIC)
    rule = Rule("on-stop", "restorer")
    report = run_scenario(fw_scenario(attack_ticks=(1, 3, 5), guards=(guard,), rules=(rule,)))
    assert len([e for e in report.log if e.kind is EntryKind.ACTIVATION]) == 1


def test_rule_overrides_params():
    guard = dataclasses.replace(RESTORER, trigger=Trigger.AUTOMATIC)
    rule = Rule("on-stop", "restorer", immediate=True, overrides={"poll_period": 4})
    report = run_scenario(fw_scenario(attack_ticks=(3, 4), guards=(guard,), rules=(rule,), run_length=12))
    # active from 3 with period 4: runs at 3, 7, 11
    runs = sorted({e.tick for e in report.log.mutations() if not e.is_attack})
    assert runs == [7]


# -- validation ------------------------------------------------------------


@pytest.mark.parametrize(
    "change",
    [
        dict(run_length=0),
        dict(guards=(RESTORER, RESTORER)),
        dict(guards=(dataclasses.replace(RESTORER, process=9),)),
        dict(guards=(GuardStrategy("r", GuardKind.SERVICE_RESTORER, ("service:nope",)),)),
        dict(rulebook=Rulebook((Rule("r", "ghost"),))),
        dict(attackers=(AttackScript((AttackStep(0, STOP_FW),), agent=42),)),
        dict(protected=(ProtectedAttribute(AttrRef.parse("service:nope"), True),)),
    ],
)
def test_validate_spec_rejects(change):
    with pytest.raises(SpecError):
        validate_spec(dataclasses.replace(fw_scenario(), **change))


# -- log, replay, determinism ----------------------------------------------


def test_log_is_phase_ordered():
    report = run_scenario(bundled("experiment2"))
    keys = [(e.tick, PHASE_ORDER[e.phase]) for e in report.log]
    assert keys == sorted(keys)
    assert report.log.entries[0].phase is Phase.PRETEST
    assert report.log.entries[-1].kind is EntryKind.FINAL


def test_replay_reproduces_final_state():
    for name in ("experiment1", "experiment2", "experiment3", "experiment3-noguard"):
        spec = bundled(name)
        sim = Simulation(spec)
        report = sim.run()
        log = EventLog.from_ndjson(report.log.to_ndjson())
        assert replay(log, spec.host).digest() == recorded_digest(log) == sim.host.digest()


def test_replay_empty_log_is_initial_host():
    spec = bundled("experiment1")
    assert replay(EventLog(), spec.host) == validate_spec(spec)


def test_replay_detects_tampering():
    spec = bundled("experiment1")
    report = run_scenario(spec)
    dicts = report.log.to_dicts()
    for d in dicts:
        if d["kind"] == "mutation" and d["outcome"] == "applied" and d["mutation"]["actor"] == "malware":
            d["outcome"] = "blocked"
            break
    with pytest.raises(ReplayDivergence):
        replay(EventLog.from_dicts(dicts), spec.host)


def test_same_seed_same_report():
    spec = bundled("experiment3")
    assert run_scenario(spec).to_dict() == run_scenario(spec).to_dict()
    other = run_scenario(dataclasses.replace(spec, seed=spec.seed + 1))
    assert other.final_digest != run_scenario(spec).final_digest


# -- oracles over random scenarios -----------------------------------------


@pytest.mark.parametrize("seed", range(40))
def test_downtime_and_latency_match_timeline_oracle(seed):
    spec = random_scenario(seed)
    report = run_scenario(spec)
    refs = [p.ref for p in spec.protected]
    series = timeline(spec, report.log, refs)
    for attr in spec.protected:
        ok = [matches_desired(v, attr.desired) for v in series[str(attr.ref)]]
        assert report.downtime_ticks[str(attr.ref)] == ok.count(False)
        expected = []
        prev = report.pretest[str(attr.ref)]
        for tick, now in enumerate(ok):
            if prev and not now:
                expected.append((tick, None))
            elif now and not prev and expected and expected[-1][1] is None:
                expected[-1] = (expected[-1][0], tick)
            prev = now
        assert report.restoration_latencies[str(attr.ref)] == expected


def test_restorer_quiescent_without_attacks():
    report = run_scenario(fw_scenario(guards=(RESTORER,)))
    guard_muts = [e for e in report.log.mutations() if not e.is_attack]
    assert [(e.tick, e.outcome) for e in guard_muts] == [(4, Outcome.APPLIED)]


def test_random_scenarios_validate():
    rng = random.Random(0)
    for _ in range(20):
        validate_spec(random_scenario(rng.randrange(10**6)))

"""Deterministic tick loop: pre-test, attack/defend rounds, post-test.

Within tick ``t`` the phases run in this order:

1. preemptive guards, on the state left by tick ``t-1``;
2. attackers, each on a fresh malware view, in declaration order;
3. rules, over the attack entries logged so far;
4. the remaining active guards, on the state as it stood before step 2;
5. sampling of every protected attribute for downtime accounting.

Guards in step 4 deliberately do not see the attacks of the same tick, so
restoration always lags an attack by at least one tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .attacks import AttackScript, attacker_step
from .events import (
    Actor,
    AttrRef,
    EntryKind,
    EventLog,
    LogEntry,
    Outcome,
    Phase,
    RefKind,
)
from .guards import GuardObservation, GuardStrategy, Trigger, default_iterations, guard_step
from .host import (
    HostSpec,
    HostState,
    HostView,
    SpecError,
    UnknownTarget,
    apply_mutation,
    build_host,
    live_lineage,
    matches_desired,
    query_attribute,
    visible_view,
)
from .report import ControlState, GuardDefeat, ScenarioReport, assess_risk
from .rules import Rulebook, evaluate_rules


class ReplayDivergence(RuntimeError):
    """A logged mutation did not reproduce its recorded outcome."""


@dataclass(frozen=True)
class ProtectedAttribute:
    ref: AttrRef
    desired: Any


@dataclass(frozen=True)
class ScenarioSpec:
    host: HostSpec = field(default_factory=HostSpec)
    attackers: tuple[AttackScript, ...] = ()
    guards: tuple[GuardStrategy, ...] = ()
    rulebook: Rulebook = field(default_factory=Rulebook)
    protected: tuple[ProtectedAttribute, ...] = ()
    run_length: int = 1
    seed: int = 0
    name: str = "scenario"


def validate_spec(spec: ScenarioSpec) -> HostState:
    """Check cross-references and return the freshly built host."""
    if spec.run_length < 1:
        raise SpecError("run length must be >= 1")
    host = build_host(spec.host)
    guard_ids = [g.guard_id for g in spec.guards]
    if len(set(guard_ids)) != len(guard_ids):
        raise SpecError("guard ids must be unique")
    for g in spec.guards:
        if g.host_process is not None and g.host_process not in host.processes:
            raise SpecError(f"guard {g.guard_id!r}: host process {g.host_process} is not declared")
        for ref in g.targets:
            if ref.kind in (RefKind.SERVICE, RefKind.PROCESS, RefKind.LINEAGE, RefKind.TOOL):
                try:
                    query_attribute(host, ref)
                except (UnknownTarget, ValueError):
                    raise SpecError(f"guard {g.guard_id!r}: target {ref} does not resolve") from None
    for rule in spec.rulebook.rules:
        if rule.activate not in guard_ids:
            raise SpecError(f"rule {rule.rule_id!r} activates unknown guard {rule.activate!r}")
    for script in spec.attackers:
        if script.agent is not None and script.agent not in host.processes:
            raise SpecError(f"attacker {script.name!r}: agent process {script.agent} is not declared")
    for attr in spec.protected:
        try:
            query_attribute(host, attr.ref)
        except (UnknownTarget, ValueError):
            raise SpecError(f"protected attribute {attr.ref} does not resolve") from None
    return host


@dataclass
class _GuardRun:
    guard: GuardStrategy
    active_from: int | None
    params: dict[str, Any]
    runs: int = 0
    cursor: int = 0
    defeated: bool = False

    @property
    def period(self) -> int:
        return int(self.params.get("poll_period", 1))

    @property
    def iterations(self) -> int | None:
        if "iterations" in self.params:
            return self.params["iterations"]
        return default_iterations(self.guard.kind)

    @property
    def preemptive(self) -> bool:
        return self.guard.trigger is Trigger.PREEMPTIVE

    def due(self, tick: int) -> bool:
        if self.defeated or self.active_from is None or tick < self.active_from:
            return False
        if self.guard.until is not None and tick >= self.guard.until:
            return False
        if self.iterations is not None and self.runs >= self.iterations:
            return False
        return (tick - self.active_from) % self.period == 0


class Simulation:
    """One run of a scenario.  Owns the host and the log, plus per-guard run state."""

    def __init__(self, spec: ScenarioSpec) -> None:
        self.spec = spec
        self.host = validate_spec(spec)
        self.log = EventLog()
        self.defeats: list[GuardDefeat] = []
        self.guards = [
            _GuardRun(
                guard=g,
                active_from=None if g.trigger is Trigger.AUTOMATIC else g.at,
                params=dict(g.params),
            )
            for g in spec.guards
        ]
        self._by_id = {rt.guard.guard_id: rt for rt in self.guards}

    # -- checks -----------------------------------------------------------

    def _check(self, phase: Phase) -> dict[str, bool]:
        results = {}
        for attr in self.spec.protected:
            value = query_attribute(self.host, attr.ref)
            passed = matches_desired(value, attr.desired)
            results[str(attr.ref)] = passed
            self.log.append(
                LogEntry(
                    tick=self.host.tick,
                    phase=phase,
                    kind=EntryKind.CHECK,
                    detail={"ref": str(attr.ref), "value": value, "desired": attr.desired, "passed": passed},
                )
            )
        return results

    # -- guards -----------------------------------------------------------

    def _defeat(self, rt: _GuardRun, phase: Phase, reason: str, final: bool = True) -> None:
        if final:
            rt.defeated = True
        tick = self.host.tick
        self.defeats.append(GuardDefeat(rt.guard.guard_id, tick, reason))
        self.log.append(
            LogEntry(tick=tick, phase=phase, kind=EntryKind.DEFEAT, detail={"guard": rt.guard.guard_id, "reason": reason})
        )

    def _run_guard(self, rt: _GuardRun, phase: Phase, view: HostView) -> None:
        proc = rt.guard.host_process
        if proc is not None and not live_lineage(self.host.processes, proc):
            self._defeat(rt, phase, "host process killed")
            return
        obs = GuardObservation(
            tick=self.host.tick,
            view=view,
            events=tuple(self.log.entries[rt.cursor :]),
            seed=self.spec.seed,
        )
        rt.cursor = len(self.log)
        try:
            mutations = guard_step(rt.guard, obs, rt.params)
        except UnknownTarget as exc:
            self._defeat(rt, phase, f"unknown target {exc}")
            return
        rt.runs += 1
        for m in mutations:
            try:
                outcome = apply_mutation(self.host, m, self.log, phase)
            except UnknownTarget as exc:
                self._defeat(rt, phase, f"unknown target {exc}")
                return
            if outcome.status is Outcome.BLOCKED:
                self._defeat(rt, phase, f"blocked: {outcome.reason}", final=False)

    # -- rules ------------------------------------------------------------

    def _evaluate_rules(self, tick: int) -> None:
        rules = self.spec.rulebook.rules
        if not rules:
            return
        horizon = tick - max(r.window for r in rules) + 1
        window = self.log.attack_entries(since_tick=horizon)
        latched = {gid for gid, rt in self._by_id.items() if rt.active_from is not None or rt.defeated}
        seen: set[str] = set()
        for act in evaluate_rules(self.spec.rulebook, window, latched, tick):
            if act.guard_id in seen:
                continue
            seen.add(act.guard_id)
            rt = self._by_id[act.guard_id]
            rt.active_from = tick if act.immediate else tick + 1
            rt.params.update(act.overrides)
            self.log.append(
                LogEntry(
                    tick=tick,
                    phase=Phase.RULE,
                    kind=EntryKind.ACTIVATION,
                    detail={"rule": act.rule_id, "guard": act.guard_id, "effective": rt.active_from},
                )
            )

    # -- main loop --------------------------------------------------------

    def run(self) -> ScenarioReport:
        spec = self.spec
        host = self.host
        host.tick = 0
        pretest = self._check(Phase.PRETEST)
        in_state = dict(pretest)
        downtime = {ref: 0 for ref in pretest}
        latencies: dict[str, list[tuple[int, int | None]]] = {ref: [] for ref in pretest}

        for tick in range(spec.run_length):
            host.tick = tick

            view = visible_view(host, Actor.ORGANIZATION)
            for rt in self.guards:
                if rt.preemptive and rt.due(tick):
                    self._run_guard(rt, Phase.PREEMPT, view)

            view = visible_view(host, Actor.ORGANIZATION)
            for script in spec.attackers:
                if script.agent is not None and not host.processes[script.agent].alive:
                    continue
                for m in attacker_step(script, tick, visible_view(host, Actor.MALWARE)):
                    apply_mutation(host, m, self.log, Phase.ATTACK)

            self._evaluate_rules(tick)

            for rt in self.guards:
                if not rt.preemptive and rt.due(tick):
                    self._run_guard(rt, Phase.GUARD, view)

            for attr in spec.protected:
                ref = str(attr.ref)
                ok = matches_desired(query_attribute(host, attr.ref), attr.desired)
                if not ok:
                    downtime[ref] += 1
                    if in_state[ref]:
                        latencies[ref].append((tick, None))
                elif not in_state[ref] and latencies[ref] and latencies[ref][-1][1] is None:
                    latencies[ref][-1] = (latencies[ref][-1][0], tick)
                in_state[ref] = ok

        posttest = self._check(Phase.POSTTEST)
        digest = host.digest()
        self.log.append(
            LogEntry(tick=host.tick, phase=Phase.POSTTEST, kind=EntryKind.FINAL, detail={"final_digest": digest})
        )
        score = sum(posttest.values()) / len(posttest) if posttest else 1.0
        control = ControlState.from_score(score)
        return ScenarioReport(
            name=spec.name,
            seed=spec.seed,
            run_length=spec.run_length,
            pretest=pretest,
            posttest=posttest,
            restoration_latencies=latencies,
            downtime_ticks=downtime,
            guard_defeats=list(self.defeats),
            control_score=score,
            control=control,
            risk=assess_risk(control),
            final_digest=digest,
            log=self.log,
        )


def run_scenario(spec: ScenarioSpec) -> ScenarioReport:
    return Simulation(spec).run()


def replay(log: EventLog, host_spec: HostSpec) -> HostState:
    """Re-apply every logged mutation to a fresh host.

    Each mutation must reproduce its recorded outcome exactly; anything else
    raises :class:`ReplayDivergence`.
    """
    host = build_host(host_spec)
    for entry in log.mutations():
        assert entry.mutation is not None
        host.tick = entry.tick
        try:
            outcome = apply_mutation(host, entry.mutation)
        except UnknownTarget as exc:
            raise ReplayDivergence(f"tick {entry.tick}: {exc}") from None
        if outcome.status is not entry.outcome or outcome.mutation != entry.mutation:
            raise ReplayDivergence(
                f"tick {entry.tick}: {entry.mutation.kind.value} on {entry.mutation.target} "
                f"gave {outcome.status.value}, log says {entry.outcome.value if entry.outcome else None}"
            )
    if log.entries:
        host.tick = log.entries[-1].tick
    return host


def recorded_digest(log: EventLog) -> str | None:
    for entry in reversed(log.entries):
        if entry.kind is EntryKind.FINAL and entry.detail:
            return entry.detail.get("final_digest")
    return None

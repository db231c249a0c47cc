"""Single-host attack/defense simulator for self-protecting security tools.

Scripted attackers run CAPEC-style attacks against a simulated host, for
example stopping its firewall or killing a security tool by name.  Guard
strategies borrowed from malware resilience designs resist the attacks or
undo them afterwards.  Every run is a pure function of its scenario and seed.
"""

from .attacks import AttackScript, AttackStep, AttackVector, MatchMode, ProcessMatcher, VectorId, attacker_step, execute_vector
from .engine import ProtectedAttribute, ReplayDivergence, ScenarioSpec, Simulation, replay, run_scenario
from .events import Actor, AttrRef, EventLog, Mutation, MutationKind, Outcome, Phase, RefKind, Source
from .guards import GuardKind, GuardObservation, GuardStrategy, Posture, Scope, Trigger, classify, guard_step
from .host import (
    ABSENT,
    FileEntry,
    HostSpec,
    HostState,
    ProcessEntry,
    RegistryKey,
    ServiceEntry,
    SpecError,
    StartupEntry,
    ToolStatus,
    UnknownTarget,
    apply_mutation,
    build_host,
    query_attribute,
    visible_view,
)
from .report import ControlHolder, ControlState, RiskAssessment, ScenarioReport, assess_risk, parse_report, render_report
from .rules import Rule, Rulebook, evaluate_rules
from .scenario_file import ScenarioError, dump_scenario, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "ABSENT",
    "Actor",
    "apply_mutation",
    "assess_risk",
    "attacker_step",
    "AttackScript",
    "AttackStep",
    "AttackVector",
    "AttrRef",
    "build_host",
    "classify",
    "ControlHolder",
    "ControlState",
    "dump_scenario",
    "evaluate_rules",
    "EventLog",
    "execute_vector",
    "FileEntry",
    "guard_step",
    "GuardKind",
    "GuardObservation",
    "GuardStrategy",
    "HostSpec",
    "HostState",
    "load_scenario",
    "MatchMode",
    "Mutation",
    "MutationKind",
    "Outcome",
    "parse_report",
    "parse_scenario",
    "Phase",
    "Posture",
    "ProcessEntry",
    "ProcessMatcher",
    "ProtectedAttribute",
    "query_attribute",
    "RefKind",
    "RegistryKey",
    "render_report",
    "replay",
    "ReplayDivergence",
    "RiskAssessment",
    "Rule",
    "Rulebook",
    "run_scenario",
    "ScenarioError",
    "ScenarioReport",
    "ScenarioSpec",
    "Scope",
    "ServiceEntry",
    "Simulation",
    "Source",
    "SpecError",
    "StartupEntry",
    "ToolStatus",
    "Trigger",
    "UnknownTarget",
    "VectorId",
    "visible_view",
]

"""Control-risk scoring and report rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .events import EventLog

SCHEMA_VERSION = 1


class ControlHolder(str, Enum):
    ORGANIZATION = "organization-more-control"
    MALWARE = "malware-more-control"


class RiskLevel(str, Enum):
    REDUCED = "reduced"
    ELEVATED = "elevated"


# Organizational risk by control holder; narratives kept verbatim.
RISK_TABLE: dict[ControlHolder, dict[str, str]] = {
    ControlHolder.ORGANIZATION: {
        "confidentiality": "Reduces data leakage Protects confidentiality",
        "integrity": "Improves security posture Improves reliability of IT assets",
        "availability": "Improves resiliency Enhances business continuity",
    },
    ControlHolder.MALWARE: {
        "confidentiality": "Increases data leakage Losses confidentiality",
        "integrity": "Degrades security posture Degrades reliability of IT assets",
        "availability": "Degrades resiliency Affects business continuity",
    },
}

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ControlState:
    holder: ControlHolder
    score: float
    threshold: float = DEFAULT_THRESHOLD

    @classmethod
    def from_score(cls, score: float, threshold: float = DEFAULT_THRESHOLD) -> "ControlState":
        holder = ControlHolder.ORGANIZATION if score >= threshold else ControlHolder.MALWARE
        return cls(holder, score, threshold)


@dataclass(frozen=True)
class RiskCell:
    level: RiskLevel
    narrative: str


@dataclass(frozen=True)
class RiskAssessment:
    confidentiality: RiskCell
    integrity: RiskCell
    availability: RiskCell

    def to_dict(self) -> dict[str, Any]:
        return {
            name: {"level": cell.level.value, "narrative": cell.narrative}
            for name, cell in (
                ("confidentiality", self.confidentiality),
                ("integrity", self.integrity),
                ("availability", self.availability),
            )
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RiskAssessment":
        return cls(**{k: RiskCell(RiskLevel(v["level"]), v["narrative"]) for k, v in data.items()})


def assess_risk(control: ControlState | ControlHolder) -> RiskAssessment:
    holder = control.holder if isinstance(control, ControlState) else ControlHolder(control)
    level = RiskLevel.REDUCED if holder is ControlHolder.ORGANIZATION else RiskLevel.ELEVATED
    row = RISK_TABLE[holder]
    return RiskAssessment(**{k: RiskCell(level, text) for k, text in row.items()})


@dataclass(frozen=True)
class GuardDefeat:
    guard_id: str
    tick: int
    reason: str


@dataclass
class ScenarioReport:
    name: str
    seed: int
    run_length: int
    pretest: dict[str, bool]
    posttest: dict[str, bool]
    restoration_latencies: dict[str, list[tuple[int, int | None]]]
    downtime_ticks: dict[str, int]
    guard_defeats: list[GuardDefeat]
    control_score: float
    control: ControlState
    risk: RiskAssessment
    final_digest: str
    log: EventLog = field(default_factory=EventLog)

    @property
    def passed(self) -> bool:
        return all(self.posttest.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "seed": self.seed,
            "run_length": self.run_length,
            "pretest": dict(self.pretest),
            "posttest": dict(self.posttest),
            "restoration_latencies": {
                k: [list(pair) for pair in v] for k, v in self.restoration_latencies.items()
            },
            "downtime_ticks": dict(self.downtime_ticks),
            "guard_defeats": [
                {"guard": d.guard_id, "tick": d.tick, "reason": d.reason} for d in self.guard_defeats
            ],
            "control_score": self.control_score,
            "control": {
                "holder": self.control.holder.value,
                "score": self.control.score,
                "threshold": self.control.threshold,
            },
            "risk": self.risk.to_dict(),
            "final_digest": self.final_digest,
            "log": self.log.to_dicts(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioReport":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {version!r}")
        control = data["control"]
        return cls(
            name=data["name"],
            seed=data["seed"],
            run_length=data["run_length"],
            pretest=dict(data["pretest"]),
            posttest=dict(data["posttest"]),
            restoration_latencies={
                k: [(a, b) for a, b in v] for k, v in data["restoration_latencies"].items()
            },
            downtime_ticks=dict(data["downtime_ticks"]),
            guard_defeats=[GuardDefeat(d["guard"], d["tick"], d["reason"]) for d in data["guard_defeats"]],
            control_score=data["control_score"],
            control=ControlState(ControlHolder(control["holder"]), control["score"], control["threshold"]),
            risk=RiskAssessment.from_dict(data["risk"]),
            final_digest=data["final_digest"],
            log=EventLog.from_dicts(data["log"]),
        )


class ReportFormat(str, Enum):
    HUMAN = "human"
    JSON = "json"


def _verdict(results: dict[str, bool]) -> str:
    return "PASS" if all(results.values()) else "FAIL"


def _render_human(report: ScenarioReport) -> str:
    lines = [
        f"scenario: {report.name}  (seed {report.seed}, {report.run_length} ticks)",
        f"pre-test: {_verdict(report.pretest)}",
        f"post-test: {_verdict(report.posttest)}",
        f"downtime: {sum(report.downtime_ticks.values())}",
        f"control score: {report.control_score:.3f} ({report.control.holder.value}, threshold {report.control.threshold})",
    ]
    if report.pretest:
        lines.append("")
        lines.append(f"{'attribute':<40} {'pre':<5} {'post':<5} {'down':>5}  restorations (out -> back)")
        for ref in report.pretest:
            pairs = ", ".join(
                f"{a}->{'never' if b is None else b}" for a, b in report.restoration_latencies.get(ref, [])
            )
            lines.append(
                f"{ref:<40} {'PASS' if report.pretest[ref] else 'FAIL':<5} "
                f"{'PASS' if report.posttest[ref] else 'FAIL':<5} {report.downtime_ticks.get(ref, 0):>5}  {pairs or '-'}"
            )
    if report.guard_defeats:
        lines.append("")
        lines.append("guard defeats:")
        for d in report.guard_defeats:
            lines.append(f"  tick {d.tick}: {d.guard_id} ({d.reason})")
    lines.append("")
    lines.append("risk:")
    for name, cell in report.risk.to_dict().items():
        lines.append(f"  {name:<16} {cell['level']:<9} {cell['narrative']}")
    return "\n".join(lines) + "\n"


def render_report(report: ScenarioReport, fmt: ReportFormat | str = ReportFormat.HUMAN) -> bytes:
    if ReportFormat(fmt) is ReportFormat.JSON:
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode()
    return _render_human(report).encode()


def parse_report(blob: bytes | str) -> ScenarioReport:
    return ScenarioReport.from_dict(json.loads(blob))

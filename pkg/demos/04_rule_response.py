"""
Arming a guard from a rule
==========================

Instead of running all the time, a restorer can sit idle until a rule
sees the attack it answers.  Here a rule arms it on the first CAPEC-56
entry in the log.
"""

import dataclasses

from malguard import Rule, Rulebook, Trigger, load_scenario, run_scenario
from malguard.events import EntryKind

spec = load_scenario("bundled:experiment1")
(guard,) = spec.guards
spec = dataclasses.replace(
    spec,
    guards=(dataclasses.replace(guard, trigger=Trigger.AUTOMATIC),),
    rulebook=Rulebook((Rule("on-firewall-stop", guard.guard_id, frozenset({"capec-56-disable-guard-logic"})),)),
)
report = run_scenario(spec)

for entry in report.log:
    if entry.kind is EntryKind.ACTIVATION:
        print(f"tick {entry.tick}: rule {entry.detail['rule']} armed {entry.detail['guard']} from tick {entry.detail['effective']}")
print("restorations:", report.restoration_latencies)

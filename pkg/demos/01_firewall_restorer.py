"""
Restarting a stopped firewall
=============================

Malware stops the host firewall at tick 3.  A service restorer hosted by
the security tool notices on its next poll and starts it again.
"""

from malguard import load_scenario, render_report, run_scenario

# load the shipped scenario and run it
spec = load_scenario("bundled:experiment1")
report = run_scenario(spec)

# the firewall drops out at tick 3 and is back at tick 4
print(render_report(report).decode())

# every state change is in the event log, tagged with who made it
for entry in report.log.mutations():
    m = entry.mutation
    print(f"tick {entry.tick:>2}  {entry.phase.value:<7} {m.source}  {m.kind.value} {m.target} -> {entry.outcome.value}")

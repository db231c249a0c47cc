"""
Where renaming stops helping
============================

A random name defeats a by-name kill, but the copy still lives in the same
directory.  An attacker who kills everything under that directory gets it
anyway.
"""

from malguard import load_scenario, render_report, run_scenario

report = run_scenario(load_scenario("bundled:residual-risk"))

for entry in report.log.mutations():
    m = entry.mutation
    print(f"tick {entry.tick}  {m.source}  {m.kind.value} {m.target} -> {entry.outcome.value}")
print()
print(render_report(report).decode())

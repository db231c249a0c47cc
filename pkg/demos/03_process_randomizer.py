"""
Surviving a kill-by-name
========================

Malware looks the tool up by its executable name and kills it.  Run once
without protection and once with a randomizer that copies the executable
under a fresh name and respawns from the copy before the attack lands.
"""

from malguard import Simulation, load_scenario
from malguard.host import live_lineage

for name in ("experiment3-noguard", "experiment3"):
    sim = Simulation(load_scenario(f"bundled:{name}"))
    report = sim.run()
    live = [sim.host.processes[p] for p in live_lineage(sim.host.processes, 1)]
    verdict = "survived" if report.passed else "killed"
    print(f"{name:<20} {verdict:<9} live: {[p.name for p in live]}")

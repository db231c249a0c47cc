"""
Guarding a registry flag
========================

The tool keeps a configuration flag in the registry.  Malware first flips
it and later deletes the key outright.  A sentinel polls every two ticks
and recreates the key when it is gone.
"""

from malguard import load_scenario, run_scenario

spec = load_scenario("bundled:experiment2")
report = run_scenario(spec)

# each pair is (tick the flag went wrong, tick it was put back)
for ref, pairs in report.restoration_latencies.items():
    print(ref)
    for out, back in pairs:
        print(f"  out at {out}, back at {back}, {back - out} tick(s) later")

# the sentinel only runs five times, so its last run is at tick 8
runs = sorted({e.tick for e in report.log.mutations() if not e.is_attack})
print("sentinel wrote at ticks", runs)

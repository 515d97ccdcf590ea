"""Rivals pulling against a low tension limit trip the safety reflex.

Each flagged arm softens, then freezes, while the weather drops to BlueHush.
The script prints the first eclipse tick by tick.

    python3 demos/safety_eclipse.py
"""
from silkstage import Label, Rival, StageConfig, detect, run_episode
from silkstage.arms import ArmLimits

limits = ArmLimits(tension_max=0.9)
trace = run_episode(StageConfig(duration=60.0, seed=1, limits_a=limits, limits_b=limits), Rival(), Rival())
eclipses = [s for s in detect(trace) if s.label is Label.SAFETY_ECLIPSE]
print(f"{trace.totals['safety_events']} safety events, {len(eclipses)} eclipse episodes")

first = eclipses[0]
print(f"{'time':>6} {'tension A':>9} {'tension B':>9}  {'mode A':<10} {'mode B':<10} preset")
# every tick around the flag, then every half second until the arms are released
rows = list(range(max(first.start_tick - 2, 0), first.start_tick + 8))
rows += list(range(first.start_tick + 8, first.end_tick + 2, 25))
for rec in (trace.records[k] for k in rows if k < len(trace)):
    print(f"{rec['time']:6.2f} {rec['tension_a']:9.3f} {rec['tension_b']:9.3f}  "
          f"{rec['mode_a']:<10} {rec['mode_b']:<10} {rec['preset']}")

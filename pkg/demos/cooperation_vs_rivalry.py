"""Two scripted pairs on the same stage: one in step, one competing.

Prints how often each timing relation and weather preset occurred, then the
episodes found in each trace. Run from the repo root:

    python3 demos/cooperation_vs_rivalry.py
"""
from collections import Counter

from silkstage import Cooperator, Rival, StageConfig, alignment_report, detect, run_episode

cfg = StageConfig(duration=60.0, seed=1)

for title, a, b in [("cooperators", Cooperator(), Cooperator()), ("rivals", Rival(), Rival())]:
    trace = run_episode(cfg, a, b)
    n = len(trace)
    print(f"== {title}: {n} ticks, {trace.totals['records']} records, "
          f"credit A {trace.totals['credit_a']:.2f} / B {trace.totals['credit_b']:.2f}")
    for name, count in Counter(trace.column("relation")).most_common():
        print(f"  relation {name:<12} {100 * count / n:5.1f}%")
    for name, count in Counter(trace.column("preset")).most_common():
        print(f"  preset   {name:<14} {100 * count / n:5.1f}%")
    spans = detect(trace)
    for s in spans:
        print(f"  episode  {s.label.value:<22} ticks {s.start_tick}-{s.end_tick}")
    print(f"  legibility violations: {len(alignment_report(spans, trace).violations)}")

"""Rebuild the reference metric tables from raw confusion counts: covid
one-vs-rest sensitivity/specificity, overall accuracy, five-run averaging,
and the three report renderings carrying identical numbers.
"""

import numpy as np

from ccblock.evaluation import (
    BinaryCounts,
    MetricSet,
    average_runs,
    metrics,
    one_vs_rest,
    render_report,
    summarize_cm,
)

counts2 = BinaryCounts(tp=223, tn=473, fp=5, fn=3)
print(f"2-class counts {counts2} (total {counts2.total})")
print(f"  -> {metrics(counts2).rounded()}")

cm3 = np.array([[221, 3, 2], [6, 625, 0], [4, 0, 474]])
counts3 = one_vs_rest(cm3, positive=0)
mset3 = metrics(counts3, multiclass_correct=int(np.trace(cm3)), total=int(cm3.sum()))
print(f"\n3-class one-vs-rest (covid positive): {counts3}")
print(f"  -> {mset3.rounded()}")

five_runs = [MetricSet(98.67, 98.54, 98.58), MetricSet(98.23, 98.54, 98.44),
             MetricSet(98.67, 97.70, 98.01), MetricSet(98.66, 98.95, 98.86),
             MetricSet(98.67, 98.74, 98.72)]
print(f"\nfive-run average: {average_runs(five_runs).average.rounded()}")

print("\nreport renderings (text / csv / json-lines):\n")
result = summarize_cm(cm3, name="Run1")
print(render_report([result], fmt="text"))
print(render_report([result], fmt="csv"))
print(render_report([result], fmt="json-lines"))

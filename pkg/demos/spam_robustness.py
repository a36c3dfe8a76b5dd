"""
How aggregators degrade as fake ratings pile up
===============================================

Each spam level adds that many uniformly random ratings per instance from
fresh annotators. The mixture model should hold its error while the mean
drifts toward the middle of the scale.
"""

# %%
from ordcrowd import methods
from ordcrowd.evaluation import SynthConfig, format_report_row, spam_sweep, synth_generate
from ordcrowd.fitting import FitConfig

table, truth, _, _ = synth_generate(SynthConfig(M=200, N=20, seed=0, epsilon_levels=((0.95, 1.0),)))
quick = FitConfig(restarts=2)
estimators = {name: methods.estimator(name, config=quick)
              for name in ("odm", "mean", "median", "majority")}

# %%
rows = spam_sweep(table, truth, estimators, levels=[0, 3, 6, 9], seed=0)
for row in rows:
    print(format_report_row(*row))

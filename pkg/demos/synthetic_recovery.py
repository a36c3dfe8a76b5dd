"""
Recovering ground truth from noisy ordinal ratings
==================================================

Sample a small crowd from the mixture model, fit it, and compare with
plain averaging. Run as a script or cell by cell in an editor that
understands ``# %%`` markers.
"""

# %%
import numpy as np

from ordcrowd import odm
from ordcrowd.evaluation import SynthConfig, evaluate, pearson, synth_generate
from ordcrowd.fitting import FitConfig
from ordcrowd.methods import run_method

# 300 instances, 20 annotators, 4 ratings each; a fifth of the crowd are spammers
cfg = SynthConfig(M=300, N=20, K=5, ratings_per_instance=4,
                  epsilon_levels=((0.95, 0.8), (0.05, 0.2)), seed=2)
table, truth, cats, params = synth_generate(cfg)
print(f"{len(table)} ratings, {table.M} instances, {table.N} annotators")

# %%
# Fit with fewer restarts than the default ten to keep the demo quick.
res = odm.fit(table, cats, config=FitConfig(restarts=3))
print(f"bound {res.elbo:.2f} after {res.iterations} iterations")

# %%
mean_est = run_method("mean", table).z_hat
for name, z in (("odm", res.z_hat), ("mean", mean_est)):
    rep = evaluate(truth, z)
    print(f"{name:5s} MSE {rep.mse:.3f}  Pearson {pearson(truth.values, z):.3f}")

# %%
# Spamminess is 1 - eps_n; true spammers were sampled with eps = 0.05.
order = np.argsort(-res.spamminess)
for n in order[:8]:
    tag = "spammer" if params.epsilon[n] < 0.5 else ""
    print(f"annotator {table.annotator_ids[n]:>3s}  spamminess {res.spamminess[n]:.3f}  "
          f"expertise {res.expertise[n]:.2f}  {tag}")

"""Hub selection on a synthetic Gaussian graphical model.

Draw a hub graph with ten disconnected groups, sample 400 observations,
estimate the precision matrix with a cross-validated graphical Lasso, debias
it, and select nodes whose degree is at least three at FDR level 0.1.

    python demos/hub_selection_ggm.py
"""

import numpy as np

from startrek import HypothesisConfig, fit_ggm, generate_graph, ground_truth, sample_gaussian, startrek
from startrek.ggm import GGMBootstrap

model = generate_graph("hub", d=100, p_groups=10, seed=1)
truth = ground_truth(model, k_tau=3)
print(f"{len(model.edges())} edges, true hubs: {truth.hubs.tolist()}")

X = sample_gaussian(model.precision, n=400, seed=2)
fit = fit_ggm(X, lam="cv")
print(f"cross-validated penalty: {fit.lam:.4f}")

# multipliers are drawn once and shared by every row
boot = GGMBootstrap(fit.theta_hat, X, B=1000, seed=3)
res = startrek(fit.debiased.theta_std, boot, HypothesisConfig(k_tau=3, q=0.1), n=X.shape[0])

selected = set(res.selected)
hubs = set(truth.hubs.tolist())
print(f"selected: {sorted(selected)}")
print(f"false discoveries: {len(selected - hubs)}, missed hubs: {len(hubs - selected)}")
print(f"smallest node p-values: {np.round(np.sort(res.alpha)[:12], 3).tolist()}")

"""A small replicated experiment: empirical FDR and power on random graphs.

The same p-values are rescored at two FDR levels, so the q = 0.1 selections
are always subsets of the q = 0.2 selections.

    python demos/desk_scale_experiment.py
"""

from startrek.harness import ExperimentConfig, run_ggm_experiment

cfg = ExperimentConfig(kind="random", d=60, p_groups=6, n=400, B=500, replicates=4, seed=7)
report = run_ggm_experiment(cfg)
for q in (0.1, 0.2):
    s = report.rescore(q).summary()
    print(f"q={q}: mean FDP {s['mean_fdp']:.3f} (reference q*d0/d = {s['reference_level']:.3f}), "
          f"mean power {s['mean_power']:.3f}")

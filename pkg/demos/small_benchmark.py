"""A pocket-sized benchmark: threshold baselines against the cost-loss controller."""
from vnfmig import simlab
from vnfmig.econ import EconomicParams

cfg = simlab.SimConfig(population=60, preconvergence_steps=20, training_steps=150,
                       evaluation_steps=300, n_rollouts=30, mdn_hidden=(32, 16), epochs=3,
                       n_kernels=10, econ=EconomicParams(1.0, 10.0, 0.5, 30))
grid = (0.1, 0.3, 0.5)
table = simlab.benchmark_grid(cfg, grid, grid, seeds=range(3),
                              progress=lambda s, tr: print(f"seed {s} done, "
                                                           f"{len(tr.intervals)} intervals"))
for row in table.all_rows():
    print(f"{row.label:32s} {row.mean_total:9.1f} +- {row.std_total:.1f}")
best = table.best_baseline
print(f"\nbest baseline {best.label}: {best.mean_total:.1f}; optimal: {table.optimal.mean_total:.1f}")

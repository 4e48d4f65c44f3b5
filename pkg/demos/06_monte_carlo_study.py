"""Reduced-scale Monte Carlo study: bias, relative efficiency, coverage.

This mirrors the reproduction harness at a size that finishes in a few
minutes. The full-size runs (100+ replicates at n=500) live behind the
command line: `sstm reproduce --table 1 --scenario A --reps 100 --out DIR`.
"""

from sstm import StudyConfig, run_study

config = StudyConfig(
    scenario="A_low",
    n=250,
    N=1000,
    reps=20,
    B=100,
    seed=2025,
    output_dir="study_demo",
)
table = run_study(config)

print(f"replicates completed: {table.reps_completed} (failures: {table.failures})")
print("\ncoord  bias_d(x100)  bias_ssl(x100)    RE     ESE     ASE    CovP")
for i in range(table.coord.size):
    print(
        f"{int(table.coord[i]):>5}  {100 * table.bias_delta[i]:>12.2f}  "
        f"{100 * table.bias_ssl[i]:>14.2f}  {table.re[i]:>5.2f}  "
        f"{table.ese[i]:.4f}  {table.ase[i]:.4f}  {table.covp[i]:.2f}"
    )

nonzero = table.re[:9]
print(f"\nmean relative efficiency over nonzero coordinates: {nonzero.mean():.2f}")
print(f"relative efficiency at the zero coordinate:        {table.re[9]:.2f}")
print("wrote metrics.csv / metrics.json / replicates.jsonl under study_demo/")

"""Monte Carlo ensembles: tube exit fractions and noise-amplitude scaling.

Two experiments on the shipped fixtures.

First, the pure-wind system: run an ensemble, then ask for each tube
radius h how many paths ever left the tube after the burn-in.  Small
tubes lose every path, generous tubes keep them all, and the crossover
is where the concentration estimate starts to bite.

Second, the linear slow-fast system: sweep the noise amplitude sigma
and fit the median supremum deviation from the deterministic run
against sigma on a log-log scale.  The fast deviation should grow
linearly in sigma (fitted exponent near 1).

Run:  python3 demos/04_ensemble_scaling.py
"""

from slowfast import (
    EnsembleConfig,
    fixture_scenario,
    run_ensemble,
    scaling_study,
    speedup_report,
)

# --- exit fractions on the pure-wind system ---------------------------
sc = fixture_scenario("ou-only")
cfg = EnsembleConfig(n_paths=60, master_seed=2026, h_grid=(0.3, 0.6, 0.8, 1.2))
det, paths, stats = run_ensemble(sc, cfg)

print(f"ensemble on {sc['name']!r}: {stats.n_paths} paths, "
      f"{stats.n_failed} failed, sigma = {sc['sigma']}")
print(f"deviation burn-in {stats.deviation_burn_in:.4f} tau, "
      f"median sup fast deviation {stats.median_sup_fast:.4f}")

print("\ntube radius h -> fraction of paths that exit:")
for h in sorted(stats.exit_fractions):
    frac = stats.exit_fractions[h]
    bar = "#" * round(40 * frac)
    print(f"  h = {h:4.2f}   {frac:5.3f}  {bar}")

rep = speedup_report(stats)
print(f"\ntimings: deterministic {rep['deterministic_s']:.3f}s, "
      f"ensemble {rep['ensemble_s']:.3f}s on {rep['workers']} worker(s), "
      f"mean per path {rep['mean_path_s']:.3f}s")
print(f"one stochastic path costs {rep['path_over_deterministic']:.2f}x "
      "the deterministic run")

# --- noise-amplitude scaling on the linear system ---------------------
# Median sup deviations are fitted against sigma on log-log axes; the
# half-width is the 95% interval of the fitted slope.
sc2 = fixture_scenario("linear-slowfast")
sc2["horizon"] = 0.6
cfg2 = EnsembleConfig(n_paths=24, master_seed=7)
result = scaling_study(sc2, cfg2, sigmas=(0.05, 0.1, 0.2))

print(f"\nsigma sweep on {sc2['name']!r} (24 paths each):")
print("  sigma   median sup fast dev")
table = result.tables["sigma"]
for sigma, dev in zip(table["values"], table["median_sup_fast"]):
    print(f"  {sigma:.2f}    {dev:.5f}")
exp, half = result.fits["sigma_fast"]
print(f"fitted fast-deviation exponent: {exp:.3f} +/- {half:.3f} "
      "(linear growth in sigma is exponent 1)")

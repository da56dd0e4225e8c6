"""Large-N level density of constrained ensembles against sampled spectra.

Run:  python3 demos/level_density.py [--plot density.svg]

Solves the self-consistent saddle-point equation for several N_Q at N=64 and
compares with histograms of sampled constrained matrices.  The density stays
a near-semicircle whose width shrinks like sqrt(1 - N_Q/N^2); higher orders
of the truncated series bend the edges as N_Q/N^2 grows.
"""

import argparse

import numpy as np

from cgue import (EnsembleSpec, angular_moments, empirical_l1, generate, iterate_density,
                  random_traceless_constraints, semicircle)

ap = argparse.ArgumentParser()
ap.add_argument("--plot", help="write an SVG overlay (needs matplotlib)")
ap.add_argument("--samples", type=int, default=200)
args = ap.parse_args()

n = 64
sc = semicircle()
rows = []
for n_q in (256, 512, 1024):
    cs = random_traceless_constraints(n, n_q, seed=21)
    ang = angular_moments(cs, n_max=6)
    ev = np.concatenate([s.eigenvalues for s in generate(
        EnsembleSpec("constrained", constraints=cs, seed=22), args.samples)])
    for n_max in (1, 3):
        dm = iterate_density(ang, n, n_q, n_max=n_max)
        rows.append((n_q, n_max, dm, ev))
        print(f"N_Q={n_q:5d} n_max={n_max}  a={dm.a:.4f}  <eps^2>={dm.moments[2]:.4f} "
              f"(1-N_Q/N^2={1 - n_q / n ** 2:.4f})  L1 to samples {empirical_l1(dm, ev):.4f}  "
              f"L1 to semicircle {dm.l1_distance(sc):.4f}  iterations {dm.iterations}")

if args.plot:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharey=True)
    for ax, n_q in zip(axes, (256, 512, 1024)):
        for q, n_max, dm, ev in rows:
            if q != n_q:
                continue
            if n_max == 1:
                ax.hist(ev, bins=60, density=True, alpha=0.35, label="sampled")
            ax.plot(dm.grid, dm.rho, label=f"solved, n_max={n_max}")
        ax.plot(sc.grid, sc.rho, "k:", label="semicircle")
        ax.set_title(f"N={n}, N_Q={n_q}")
        ax.set_xlabel("eps")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.plot)
    print(f"wrote {args.plot}")

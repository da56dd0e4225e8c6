"""Where constrained spectra stop looking like the GUE.

Run:  python3 demos/poisson_limits.py

Keeping only the diagonal (N_P = N) gives independent levels and the Poisson
value 2 ln 2 - 1 for the mean spacing ratio.  A banded matrix of fixed width
b moves from GUE-like to Poisson-like as N grows past the localisation
length, so at moderate N it sits in between.
"""

import warnings

from cgue import (POISSON_RATIO_MEAN, EnsembleSpec, diagonal_p_constraints, generate,
                  gue_reference, spacing_ratios)

warnings.simplefilter("ignore")
gue = gue_reference(200, 100).ratios.mean
print(f"reference <r~>: GUE {gue:.4f}   Poisson {POISSON_RATIO_MEAN:.4f}")

diag = spacing_ratios(generate(EnsembleSpec("constrained", constraints=diagonal_p_constraints(200),
                                            seed=7), 100))
print(f"diagonal only, N=200: {diag.mean:.4f}+-{diag.stderr:.4f}")

for n, samples in ((100, 200), (200, 100), (400, 50), (800, 12)):
    r = spacing_ratios(generate(EnsembleSpec("banded", dim=n, bandwidth=5, seed=8), samples))
    print(f"banded b=5, N={n:4d}: {r.mean:.4f}+-{r.stderr:.4f}")

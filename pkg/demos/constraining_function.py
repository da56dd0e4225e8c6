"""The constraining function F evaluated by two independent routes.

Run:  python3 demos/constraining_function.py

The determinant route integrates the Fourier representation of the delta
functions after doing the unitary integral in closed form; the Monte Carlo
route averages smoothed deltas over Haar unitaries and extrapolates the
smoothing width to zero.  For two levels with one constraint F is exactly
sqrt(pi/2)/|x1 - x2|.
"""

import math

import numpy as np

from cgue import (explicit_constraints, fp_determinant, fp_haar_mc, random_traceless_constraints,
                  tilde_regularize)

two = explicit_constraints([np.diag([1.0, -1.0]) / math.sqrt(2)])
print("two levels, one constraint")
for dx in (0.5, 1.0, 2.0):
    x = [-dx / 2, dx / 2]
    det = fp_determinant(x, two)
    mc = fp_haar_mc(x, two, n_samples=40_000, seed=1)
    print(f"  dx={dx:3.1f}  closed form {math.sqrt(math.pi / 2) / dx:.5f}  determinant {det.value:.5f}"
          f"  Monte Carlo {mc.value:.5f}+-{mc.stderr:.5f}")

print("\nthree levels")
x = np.array([-1.1, 0.2, 0.9])
for n_q in (1, 2, 3):
    cs = random_traceless_constraints(3, n_q, seed=30 + n_q)
    det = fp_determinant(x, cs)
    mc = fp_haar_mc(x, cs, n_samples=40_000, seed=n_q)
    print(f"  N_Q={n_q}  determinant {det.value:.5f}  Monte Carlo {mc.value:.5f}+-{mc.stderr:.5f}")

cs = random_traceless_constraints(3, 1, seed=5)
print("\ncoincident levels are harmless, a fully degenerate spectrum is not")
for x in ([-1.0, 0.5, 0.5 + 1e-3], [-1.0, 0.5, 0.5]):
    print(f"  x={x}  F={fp_determinant(x, cs).value:.6f}")
fp = fp_determinant([-1.0, 0.5, 0.5], cs)
print(f"  regularised F~ at the same point: {tilde_regularize(fp, [-1.0, 0.5, 0.5], 1).value:.6f}")

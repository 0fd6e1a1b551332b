"""Frequency-restricted integrals: oracles, a catalog entry, stationary sets.

The integral of a multiplier over the set |Phi - alpha| < M on the convolution
hyperplane is maximized over the fixed frequencies, alpha and the hyperplane
shift. How the sup grows with M is the quantity of interest.
"""
import numpy as np

from gevrey_lab.fre_lab import (
    CUBIC, QUADRATIC, PhaseSpec, auxiliary_square_integral, catalog_config, oracle_1d,
    oracle_2d, restricted_integral, scaling_exponent, stationary_scan,
)

for M in (1.0, 4.0, 25.0):
    v = restricted_integral(oracle_1d(), [2.0], 0.0, 0.0, M).values[0]
    print(f"|p^2| < {M:>4}: measure {v:.6f}   (closed form {2 * np.sqrt(M):.6f})")
v = restricted_integral(oracle_2d(), [1.5], 50.0, 0.0, 5.0).values[0]
print(f"annulus |p^2+q^2-50| < 5: area {v:.5f}   (closed form {10 * np.pi:.5f})")

rep = scaling_exponent(catalog_config("nls_a", theta=1.5, n_samples=400))
print(f"nls_a: sup over M = {np.round(rep.sup, 3)}  beta = {rep.beta:.3f}")

for signs in ((1, 1, 1), (1, 1, -1)):
    for r in stationary_scan(PhaseSpec(QUADRATIC, signs), direction=1):
        print(f"quadratic {signs}: dPhi/dxi1 = {r['first']}, critical {r['set']} ({r['kind']})")
print("cubic, pairing xi1 with xi5:",
      stationary_scan(PhaseSpec(CUBIC, (1,) * 5), direction=1, eliminate=5)[0]["first"])

# the hyperbolic band grows logarithmically: each decade of N adds about 4 ln 10
prev = None
for N in (10.0, 100.0, 1000.0):
    a = auxiliary_square_integral(0.0, 1.0, N, -1)
    inc = "" if prev is None else f"  increment {a - prev:.3f} (4 ln 10 = {4 * np.log(10):.3f})"
    print(f"|p^2 - q^2| < 1 in [-N, N]^2, N={N:>6}: area {a:.3f}{inc}")
    prev = a

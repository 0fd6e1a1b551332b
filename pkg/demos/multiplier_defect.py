"""How far the smooth Gevrey weight is from being multiplicative.

The defect |1 - m(sum xi_j) / prod m(xi_j)| is compared with
sigma^theta |xi_1|^(theta-1) |xi_2| (frequencies sorted by size). The script
samples the ratio in each scale stratum and runs the growth control.
"""
import numpy as np

from gevrey_lab.multiplier_check import defect_ratio, negative_control, sup_defect_ratio

print("single evaluations")
for freqs in ([3.0, -3.0], [5.0, 0.1], [0.6, 0.6]):
    s = defect_ratio(1.0, 1.5, freqs)
    print(f"  xi={freqs}: defect {s.defect:.4f}, bound {s.bound:.4f}, ratio {s.ratio:.4f}")

for theta in (1.0, 1.5, 1.99):
    rep = sup_defect_ratio(2, theta, 200_000, seed=1)
    per = ", ".join(f"{k}: {v.sup:.3f}" for k, v in rep.strata.items())
    print(f"k=2 theta={theta}: sup {rep.sup:.4f} [{per}]")
print(f"stratum 1.2 at theta=1 approaches e^2 - 1 = {np.e**2 - 1:.4f}")

for theta in (0.5, 2.5):
    c = negative_control(2, theta, 50_000, seed=1)
    print(f"theta={theta}: sup over caps {c['eta_caps']} -> "
          f"{[round(s, 3) for s in c['sups']]}  grows={c['grows']}")

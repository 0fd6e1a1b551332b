"""Numerical laboratory for analyticity-radius decay of gKdV and NLS solutions.

Modules: spectral_core (grids, transforms), gevrey_weights (weights, radius
fits), evolution (solvers, modified energy and its flux), multiplier_check
(Monte-Carlo defect bound), fre_lab (frequency-restricted integrals),
extension_engine (global-extension bookkeeping), cli (experiment driver).
"""

__version__ = "0.1.0"

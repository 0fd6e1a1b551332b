"""Bookkeeping of the global extension argument.

Energy control on each local interval of length delta costs an increment
proportional to sigma**theta. To repeat the local step up to time T, the total
increment over T/delta steps must fit below the Gagliardo-Nirenberg ceiling.
That condition fixes the largest admissible radius sigma(T), which follows a
power law T**(-1/theta).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

EQUATIONS = ("gkdv", "nls")
NLS_MODES = ("proof", "corollary")


@dataclass(frozen=True)
class ExtensionParams:
    """Inputs of the extension argument.

    ``power`` is k for gKdV and p for NLS. For NLS the exponent used in the
    formulas is p - 1 in ``nls_mode="proof"`` (the same pattern as gKdV with
    u^k u_x <-> |v|^(p-1) v) and p in ``nls_mode="corollary"``.
    """

    sigma0: float
    equation: str
    power: int
    E0: float
    big_M: float = 1.0
    C: float = 1.0
    c0: float = 1.0
    a: float = 2.0
    theta: float = 1.5
    nls_mode: str = "proof"

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}")
        if self.nls_mode not in NLS_MODES:
            raise ValueError(f"nls_mode must be one of {NLS_MODES}")
        for name in ("sigma0", "E0", "C", "c0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not self.big_M >= 1:
            raise ValueError("big_M must be >= 1")
        if not self.a > 1:
            raise ValueError("a must be > 1")
        if not 1 <= self.theta < 2:
            raise ValueError("theta must lie in [1, 2)")
        if int(self.power) != self.power or self.power < 1:
            raise ValueError("power must be a positive integer")

    @property
    def k(self) -> int:
        """Exponent entering the formulas."""
        if self.equation == "gkdv":
            return int(self.power)
        return int(self.power) - 1 if self.nls_mode == "proof" else int(self.power)

    @property
    def A(self) -> float:
        """E0 + E0**(k/2 + 1), the energy combination controlled by the local theory."""
        return self.E0 + self.E0 ** (self.k / 2 + 1)


def gn_energy_bound(params: ExtensionParams, sigma: float | None = None) -> float:
    """Ceiling 2 M (E0 + E0**(k/2+1)) on the weighted energy along the induction."""
    if sigma is not None and not 0 < sigma <= params.sigma0:
        raise ValueError(f"sigma must lie in (0, sigma0={params.sigma0}]")
    return 2.0 * params.big_M * params.A


def local_lifespan(params: ExtensionParams) -> float:
    """delta = c0 / (1 + 2 M (E0 + E0**(k/2+1)))**a."""
    return params.c0 / (1.0 + gn_energy_bound(params)) ** params.a


def _rate(params: ExtensionParams) -> float:
    # M^k C A^{k/2} (1 + A^{k/2})
    p = params
    h = p.A ** (p.k / 2)
    return p.big_M ** p.k * p.C * h * (1.0 + h)


def max_sigma(params: ExtensionParams, T: float) -> float:
    """Largest radius for which the induction closes up to time T."""
    if not T > 0:
        raise ValueError("T must be positive")
    delta = local_lifespan(params)
    branch = (delta / (T * _rate(params))) ** (1.0 / params.theta)
    return float(min(params.sigma0, branch))


def knee_time(params: ExtensionParams) -> float:
    """T where the power-law branch meets sigma0."""
    return local_lifespan(params) / (_rate(params) * params.sigma0**params.theta)


@dataclass
class InductionLedger:
    T: float
    sigma: float
    delta: float
    n_steps: int
    bounds: np.ndarray
    ceiling: float
    first_violation: int | None

    @property
    def ok(self) -> bool:
        return self.first_violation is None

    @property
    def margin(self) -> float:
        return float(self.ceiling - self.bounds.max())

    def as_dict(self):
        return {"T": self.T, "sigma": self.sigma, "delta": self.delta, "n_steps": self.n_steps,
                "ceiling": self.ceiling, "first_violation": self.first_violation,
                "margin": self.margin, "bounds": self.bounds.tolist()}


def simulate_induction(params: ExtensionParams, T: float, sigma: float | None = None,
                       rtol: float = 1e-12) -> InductionLedger:
    """Step the energy bound over the local intervals covering [0, T].

    The bound starts at M (E0 + E0**(k/2+1)) and grows by
    C M**(k+1) sigma**theta A**(k/2+1) (1 + A**(k/2)) per step. ``sigma``
    defaults to ``max_sigma(params, T)``. Overshooting the ceiling by more
    than ``rtol`` (relative) is reported as a violation at that step.
    """
    delta = local_lifespan(params)
    if T < delta * (1 - 1e-12):
        raise ValueError(f"T={T} is shorter than the local lifespan {delta}")
    if sigma is None:
        sigma = max_sigma(params, T)
    p = params
    n = max(1, int(math.floor(T / delta * (1 + 1e-12))))
    incr = p.C * p.big_M ** (p.k + 1) * sigma**p.theta * p.A ** (p.k / 2 + 1) * (1 + p.A ** (p.k / 2))
    base = p.big_M * p.A
    bounds = base + incr * np.arange(1, n + 1)
    ceiling = gn_energy_bound(p)
    bad = np.nonzero(bounds > ceiling * (1 + rtol))[0]
    first = int(bad[0]) + 1 if bad.size else None
    return InductionLedger(float(T), float(sigma), delta, n, bounds, ceiling, first)


@dataclass
class SigmaCurve:
    T: np.ndarray
    sigma: np.ndarray
    saturated: np.ndarray
    slope: float
    knee: float
    theta: float

    def rows(self):
        return [{"T": float(t), "sigma": float(s), "branch": "sigma0" if sat else "power",
                 "slope": self.slope} for t, s, sat in zip(self.T, self.sigma, self.saturated)]

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("T,sigma,branch\n")
            for r in self.rows():
                fh.write(f"{r['T']:.17g},{r['sigma']:.17g},{r['branch']}\n")

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump({"slope": self.slope, "knee": self.knee, "theta": self.theta,
                       "rows": self.rows()}, fh, indent=2)
            fh.write("\n")


def sigma_curve(params: ExtensionParams, T_grid) -> SigmaCurve:
    """max_sigma over a log-spaced T grid, with the slope fitted on the power-law branch."""
    T = np.asarray(T_grid, dtype=float)
    if T.ndim != 1 or T.size < 2 or np.any(T <= 0) or np.any(np.diff(T) <= 0):
        raise ValueError("T_grid must be increasing and positive")
    sig = np.array([max_sigma(params, t) for t in T])
    knee = knee_time(params)
    sat = T <= knee
    free = ~sat
    if free.sum() < 2:
        raise ValueError("T_grid lies (almost) entirely on the saturated branch")
    slope = float(np.polyfit(np.log(T[free]), np.log(sig[free]), 1)[0])
    return SigmaCurve(T, sig, sat, slope, knee, params.theta)


def admissible_theta(theta_emp: float, eps: float = 0.01) -> float:
    """Exponent usable by the engine: the measured one capped just below 2.

    A drift bound C sigma**theta_emp on sigma <= 1 implies the same bound with
    any smaller exponent, so capping never claims more than was measured.
    """
    if not theta_emp > 0:
        raise ValueError("theta_emp must be positive")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    th = min(theta_emp, 2.0 - eps)
    if th < 1:
        raise ValueError(f"measured exponent {theta_emp:.3g} is below 1; the engine needs theta >= 1")
    return th


def params_from_drift(fit, sigma0: float, equation: str, power: int, E0: float,
                      eps: float = 0.01, **kw) -> ExtensionParams:
    """ExtensionParams whose (C, theta) bound the measured drift on its sampled range."""
    theta = admissible_theta(fit.theta, eps)
    return ExtensionParams(sigma0=sigma0, equation=equation, power=power, E0=E0,
                           C=fit.envelope_constant(theta), theta=theta, **kw)


def params_dict(params: ExtensionParams) -> dict:
    d = asdict(params)
    d.update(k_effective=params.k, A=params.A, delta=local_lifespan(params),
             ceiling=gn_energy_bound(params), knee=knee_time(params))
    return d

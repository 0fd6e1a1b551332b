"""Gevrey-type Fourier weights, Gevrey norms and a decay-rate radius estimator.

The smooth weight is flat (== 1) on ``|sigma*xi| <= 1``, purely exponential on
``|sigma*xi| >= 2`` and bridged in between by ``exp(rho(|sigma*xi|))`` where
``rho`` is the quintic with ``rho(1)=rho'(1)=rho''(1)=0`` and
``rho(2)=2, rho'(2)=1, rho''(2)=0``. Writing ``t = |x| - 1``,

    rho(t) = 16 t**3 - 23 t**4 + 9 t**5,
    rho'(t) = t**2 (48 - 92 t + 45 t**2) > 0 on (0, 1],

so the bridge is C2 at both ends and strictly increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .spectral_core import SpectralField

KINDS = ("exp", "cosh", "smooth", "imethod")

# above this value of sigma*xi_max the norm is accumulated in log space
LOG_SPACE_THRESHOLD = 300.0
# above this the norm is refused outright
OVERFLOW_BOUND = 700.0

_BRIDGE = np.polynomial.Polynomial([0.0, 0.0, 0.0, 16.0, -23.0, 9.0])


class WeightOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class Weight:
    """A Fourier multiplier of Gevrey type.

    For ``kind="imethod"`` the weight is the classical high-frequency cutoff
    ``m_N``; ``cutoff`` is N and ``index`` is the Sobolev index it targets.
    """

    kind: str
    sigma: float = 0.0
    sobolev_s: float = 0.0
    cutoff: float | None = None
    index: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}; expected one of {KINDS}")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be a nonnegative real, got {self.sigma}")
        if self.kind == "imethod":
            if self.cutoff is None or self.cutoff <= 1:
                raise ValueError("imethod weight needs cutoff N > 1")
            if self.index is None or not 0 < self.index < 1:
                raise ValueError("imethod weight needs index s in (0, 1)")


def smooth_log_profile(x):
    """log m(x) for the unscaled smooth weight."""
    a = np.abs(np.asarray(x, dtype=float))
    out = np.where(a >= 2.0, a, 0.0)
    mid = (a > 1.0) & (a < 2.0)
    if np.any(mid):
        out = np.where(mid, _BRIDGE(np.clip(a - 1.0, 0.0, 1.0)), out)
    return out


def smooth_profile(x):
    return np.exp(smooth_log_profile(x))


def smooth_profile_derivative(x):
    """d/dx m(x), used by tests of the C2 bridge."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    t = np.clip(a - 1.0, 0.0, 1.0)
    d = np.where(a >= 2.0, np.exp(a), 0.0)
    mid = (a > 1.0) & (a < 2.0)
    d = np.where(mid, np.exp(_BRIDGE(t)) * _BRIDGE.deriv()(t), d)
    return np.sign(x) * d


def log_weight(w: Weight, xi):
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("xi must be finite")
    a = np.abs(xi)
    if w.kind == "exp":
        return w.sigma * a
    if w.kind == "cosh":
        x = w.sigma * a
        # log cosh x = x + log1p(exp(-2x)) - log 2
        return x + np.log1p(np.exp(-2.0 * x)) - np.log(2.0)
    if w.kind == "smooth":
        return smooth_log_profile(w.sigma * a)
    N = w.cutoff
    with np.errstate(divide="ignore"):
        return np.where(a > N, (1.0 - w.index) * (np.log(N) - np.log(np.maximum(a, N))), 0.0)


def eval_weight(w: Weight, xi):
    out = np.exp(log_weight(w, xi))
    return float(out) if np.ndim(out) == 0 else out


def japanese(xi):
    return np.sqrt(1.0 + np.asarray(xi, dtype=float) ** 2)


def gevrey_norm(field: SpectralField, w: Weight) -> float:
    xi = field.grid.xi
    if w.kind != "imethod":
        top = w.sigma * np.max(np.abs(xi))
        if top > OVERFLOW_BOUND:
            raise WeightOverflowError(
                f"sigma*xi_max = {top:.1f} exceeds the safety bound {OVERFLOW_BOUND}")
    else:
        top = 0.0
    c = np.abs(field.coeffs)
    if top <= LOG_SPACE_THRESHOLD:
        m = eval_weight(w, xi)
        return float(np.sqrt(np.sum((m * japanese(xi) ** w.sobolev_s * c) ** 2)))
    nz = c > 0
    if not np.any(nz):
        return 0.0
    logs = 2.0 * (log_weight(w, xi[nz]) + w.sobolev_s * np.log(japanese(xi[nz])) + np.log(c[nz]))
    half = 0.5 * logsumexp(logs)
    if half > OVERFLOW_BOUND:
        raise WeightOverflowError(f"Gevrey norm overflows (log norm = {half:.1f})")
    return float(np.exp(half))


def weight_gap_ratio(kind: str, sigma: float, theta: float, xi: float) -> float:
    """(W(x) - 1) / (x**theta * W(x)) with x = sigma*|xi| and W = exp or cosh."""
    x = abs(sigma * xi)
    if kind == "exp":
        if x == 0.0:
            if theta < 1:
                return 0.0
            return 1.0 if theta == 1 else float("inf")
        return float(-np.expm1(-x) / x**theta)
    if kind == "cosh":
        if x == 0.0:
            if theta < 2:
                return 0.0
            return 0.5 if theta == 2 else float("inf")
        # (cosh x - 1)/cosh x = 2 sinh^2(x/2)/cosh x, stable for small x
        gap = 2.0 * np.sinh(0.5 * x) ** 2 / np.cosh(x) if x < 350 else 1.0
        return float(gap / x**theta)
    raise ValueError(f"weight_gap_ratio supports 'exp' and 'cosh', not {kind!r}")


class InsufficientDecayBand(ValueError):
    pass


@dataclass(frozen=True)
class RadiusEstimate:
    sigma: float
    intercept: float
    residual: float
    n_modes: int
    band: tuple[float, float]
    flagged: bool

    def as_dict(self):
        return {
            "sigma": self.sigma, "intercept": self.intercept, "residual": self.residual,
            "n_modes": self.n_modes, "band": list(self.band), "flagged": self.flagged,
        }


def estimate_radius(field: SpectralField, fit_band=None, noise_floor=None,
                    residual_threshold: float = 0.05, min_modes: int = 8) -> RadiusEstimate:
    """Fit log|f^(xi)| ~ a - sigma*|xi| and return sigma as the strip half-width.

    ``noise_floor`` is absolute; by default 1e-13 of the peak coefficient.
    The top 10% of frequencies are always excluded.
    """
    grid = field.grid
    xi = np.abs(grid.xi)
    c = np.abs(field.coeffs)
    peak = c.max()
    if noise_floor is None:
        noise_floor = 1e-13 * peak
    hi = 0.9 * grid.nyquist
    lo, up = (0.25 * hi, hi) if fit_band is None else (float(fit_band[0]), min(float(fit_band[1]), hi))
    use = (xi >= lo) & (xi <= up) & (c > noise_floor)
    # one-sided spectra (complex fields) are fitted on whichever side carries them
    n = int(use.sum())
    if n < min_modes:
        raise InsufficientDecayBand(
            f"only {n} modes above the noise floor in [{lo:.3g}, {up:.3g}]; need {min_modes}")
    X = xi[use]
    Y = np.log(c[use])
    A = np.vstack([np.ones_like(X), -X]).T
    (a, sigma), *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = float(np.sqrt(np.mean((Y - A @ np.array([a, sigma])) ** 2)))
    flagged = bool(resid > residual_threshold or sigma <= 0)
    return RadiusEstimate(float(sigma), float(a), resid, n, (lo, up), flagged)

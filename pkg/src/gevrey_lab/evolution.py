"""Time integration of defocusing gKdV and NLS with modified-energy bookkeeping.

Equations (periodic box, coefficients in the normalization of ``spectral_core``)::

    gKdV:  u_t + u_xxx - u**k u_x = 0        u_hat' = i xi**3 u_hat + i xi/(k+1) (u**(k+1))^
    NLS :  i v_t + v_xx - |v|**(p-1) v = 0   v_hat' = -i xi**2 v_hat - i (|v|**(p-1) v)^

Every nonlinear product is projected onto the dealiased band. With that
projection written as P, the weighted field U = m(D)u obeys
``U_t + U_xxx - P(U**k U_x) = F`` exactly at the semi-discrete level, so the
flux identity for the modified energy holds to time-stepping accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .gevrey_weights import Weight, eval_weight, gevrey_norm
from .spectral_core import (Grid, SpectralField, dealias, edge_amplitude, forward_transform,
                            inverse_transform)

log = logging.getLogger(__name__)


class NumericalAbort(RuntimeError):
    """Trajectory stopped: NaN/Inf or the box-edge amplitude floor was crossed."""

    def __init__(self, message, time=None, ledger=None):
        super().__init__(message)
        self.time = time
        self.ledger = ledger


class DriftFitError(ValueError):
    pass


@dataclass(frozen=True)
class EvolutionConfig:
    equation: str
    power: int
    grid: Grid
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "etdrk4"
    edge_floor: float = 1e-10
    stride: int = 1
    nonlinear: bool = True

    def __post_init__(self):
        if self.equation == "gkdv":
            if self.power < 4 or self.power % 2:
                raise ValueError("gKdV needs an even power k >= 4")
        elif self.equation == "nls":
            if self.power < 3 or self.power % 2 == 0:
                raise ValueError("NLS needs an odd power p >= 3")
        else:
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.scheme not in ("etdrk4", "strang"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "strang" and self.equation != "nls":
            raise ValueError("Strang splitting is offered for NLS only")
        if not self.dt > 0 or self.dt > 1:
            raise ValueError("dt must lie in (0, 1]")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def dealias_degree(self) -> int:
        return self.power + 1 if self.equation == "gkdv" else self.power

    @property
    def xi_max(self) -> float:
        """Largest frequency kept by the dealiasing projection."""
        xi = np.abs(self.grid.xi)
        return float(xi[self.grid.dealias_mask(self.dealias_degree)].max())

    @property
    def real(self) -> bool:
        return self.equation == "gkdv"

    def linear_symbol(self) -> np.ndarray:
        xi = self.grid.xi
        if self.equation == "gkdv":
            sym = 1j * xi**3
            sym[self.grid.nyquist_index] = 0.0
            return sym
        return -1j * xi**2


# -- physical <-> spectral helpers -----------------------------------------

def _phys(c: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.ifft(c) * np.sqrt(grid.n_points / grid.dx)


def _spec(v: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.fft(v) * np.sqrt(grid.dx / grid.n_points)


def _project(c: np.ndarray, cfg: EvolutionConfig) -> np.ndarray:
    return np.where(cfg.grid.dealias_mask(cfg.dealias_degree), c, 0.0)


def _power_term(c: np.ndarray, cfg: EvolutionConfig) -> np.ndarray:
    """P(u**(k+1)) for gKdV or P(|v|**(p-1) v) for NLS, as coefficients."""
    v = _phys(c, cfg.grid)
    if cfg.real:
        v = v.real
        out = v ** (cfg.power + 1)
    else:
        out = np.abs(v) ** (cfg.power - 1) * v
    return _project(_spec(out, cfg.grid), cfg)


def _nonlinear_rhs(c: np.ndarray, cfg: EvolutionConfig) -> np.ndarray:
    if not cfg.nonlinear:
        return np.zeros_like(c)
    pw = _power_term(c, cfg)
    if cfg.real:
        out = 1j * cfg.grid.xi / (cfg.power + 1) * pw
        out[cfg.grid.nyquist_index] = 0.0
        return out
    return -1j * pw


class _ETDRK4:
    def __init__(self, cfg: EvolutionConfig, n_contour: int = 32):
        self.cfg = cfg
        h = cfg.dt
        lin = cfg.linear_symbol()
        self.E = np.exp(h * lin)
        self.E2 = np.exp(0.5 * h * lin)
        r = np.exp(2j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
        z = h * lin[:, None] + r[None, :]
        ez = np.exp(z)
        self.Q = h * np.mean((np.exp(0.5 * z) - 1.0) / z, axis=1)
        self.f1 = h * np.mean((-4.0 - z + ez * (4.0 - 3.0 * z + z**2)) / z**3, axis=1)
        self.f2 = h * np.mean((2.0 + z + ez * (z - 2.0)) / z**3, axis=1)
        self.f3 = h * np.mean((-4.0 - 3.0 * z - z**2 + ez * (4.0 - z)) / z**3, axis=1)

    def __call__(self, c):
        cfg = self.cfg
        Nu = _nonlinear_rhs(c, cfg)
        a = self.E2 * c + self.Q * Nu
        Na = _nonlinear_rhs(a, cfg)
        b = self.E2 * c + self.Q * Na
        Nb = _nonlinear_rhs(b, cfg)
        cc = self.E2 * a + self.Q * (2.0 * Nb - Nu)
        Nc = _nonlinear_rhs(cc, cfg)
        return self.E * c + self.f1 * Nu + 2.0 * self.f2 * (Na + Nb) + self.f3 * Nc


class _Strang:
    def __init__(self, cfg: EvolutionConfig):
        self.cfg = cfg
        self.E = np.exp(cfg.dt * cfg.linear_symbol())

    def _kick(self, c, tau):
        if not self.cfg.nonlinear:
            return c
        v = _phys(c, self.cfg.grid)
        v = v * np.exp(-1j * tau * np.abs(v) ** (self.cfg.power - 1))
        return _project(_spec(v, self.cfg.grid), self.cfg)

    def __call__(self, c):
        h = self.cfg.dt
        return self._kick(self.E * self._kick(c, 0.5 * h), 0.5 * h)


def _stepper(cfg: EvolutionConfig):
    return _ETDRK4(cfg) if cfg.scheme == "etdrk4" else _Strang(cfg)


def prepare(u0: SpectralField, cfg: EvolutionConfig) -> SpectralField:
    """Project initial data onto the dealiased band (and onto real fields for gKdV)."""
    if u0.grid != cfg.grid:
        raise ValueError("initial data lives on a different grid")
    c = _project(u0.coeffs, cfg)
    if cfg.real:
        c = _spec(_phys(c, cfg.grid).real, cfg.grid)
        c = _project(c, cfg)
    return SpectralField(cfg.grid, c, cfg.real)


def step(state: SpectralField, cfg: EvolutionConfig, _stepper_cache=None) -> SpectralField:
    if cfg.real and not state.reality_flag:
        raise ValueError("gKdV states must carry reality_flag")
    stepper = _stepper_cache or _stepper(cfg)
    c = stepper(np.asarray(state.coeffs))
    if not np.all(np.isfinite(c)):
        raise NumericalAbort("non-finite coefficients after step")
    return SpectralField(cfg.grid, c, cfg.real)


# -- conserved and almost-conserved quantities -----------------------------

def _quad(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(values).real * grid.dx)


def mass(state: SpectralField) -> float:
    return float(np.sum(np.abs(state.coeffs) ** 2))


def _energy_coeffs(c: np.ndarray, cfg: EvolutionConfig) -> float:
    grid = cfg.grid
    kinetic = float(np.sum(grid.xi**2 * np.abs(c) ** 2))
    v = _phys(c, grid)
    if cfg.real:
        k = cfg.power
        pot = 2.0 / ((k + 1) * (k + 2)) * _quad(v.real ** (k + 2), grid)
    else:
        p = cfg.power
        pot = 2.0 / (p + 1) * _quad(np.abs(v) ** (p + 1), grid)
    return kinetic + pot


def energy(state: SpectralField, cfg: EvolutionConfig) -> float:
    return _energy_coeffs(np.asarray(state.coeffs), cfg)


def smooth_multiplier(sigma: float, grid: Grid) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return eval_weight(Weight("smooth", sigma), grid.xi)


def modified_energy(state: SpectralField, sigma: float, cfg: EvolutionConfig) -> float:
    """mass(U) + energy(U) with U = m_sigma(D) u for the smooth weight."""
    c = smooth_multiplier(sigma, cfg.grid) * np.asarray(state.coeffs)
    return float(np.sum(np.abs(c) ** 2)) + _energy_coeffs(c, cfg)


def _remainder(state: SpectralField, sigma: float, cfg: EvolutionConfig, sign: float = 1.0):
    m = smooth_multiplier(sigma, cfg.grid)
    inv = 1.0 / m
    assert np.all(inv <= 1.0), "inverse smooth weight must not exceed 1"
    U = m * np.asarray(state.coeffs)
    bracket = _power_term(U, cfg) - m * _power_term(inv * U, cfg)
    return U, sign * bracket


def remainder_F(state: SpectralField, sigma: float, cfg: EvolutionConfig,
                _sign: float = 1.0) -> SpectralField:
    """-(1/(k+1)) d/dx [U**(k+1) - m((m**-1 U)**(k+1))] with products dealiased."""
    if cfg.equation != "gkdv":
        raise ValueError("remainder_F is the gKdV remainder; use remainder_G for NLS")
    _, bracket = _remainder(state, sigma, cfg, _sign)
    out = -1j * cfg.grid.xi / (cfg.power + 1) * bracket
    out[cfg.grid.nyquist_index] = 0.0
    return SpectralField(cfg.grid, out, True)


def remainder_G(state: SpectralField, sigma: float, cfg: EvolutionConfig) -> SpectralField:
    """-[|V|**(p-1) V - m(|m**-1 V|**(p-1) m**-1 V)] with products dealiased."""
    if cfg.equation != "nls":
        raise ValueError("remainder_G is the NLS remainder; use remainder_F for gKdV")
    _, bracket = _remainder(state, sigma, cfg)
    return SpectralField(cfg.grid, -bracket, False)


def energy_flux(state: SpectralField, sigma: float, cfg: EvolutionConfig,
                _mutate_sign: float = 1.0) -> float:
    """Instantaneous dE_sigma/dt computed from the remainder (no time differencing).

    gKdV: 2<U,F> + 2<U_x,F_x> + 2/(k+1) <U**(k+1), F>.
    NLS : 2 Im <V - V_xx + |V|**(p-1) V, G>.
    ``_mutate_sign`` exists only for the mutation test of the verify suite.
    """
    grid = cfg.grid
    xi = grid.xi
    m = smooth_multiplier(sigma, grid)
    U = m * np.asarray(state.coeffs)
    if cfg.equation == "gkdv":
        F = remainder_F(state, sigma, cfg, _mutate_sign).coeffs
        pw = _power_term(U, cfg)
        total = np.sum(np.conj(U) * F) + np.sum(xi**2 * np.conj(U) * F) \
            + np.sum(np.conj(pw) * F) / (cfg.power + 1)
        return float(2.0 * total.real)
    G = _mutate_sign * remainder_G(state, sigma, cfg).coeffs
    W = U + xi**2 * U + _power_term(U, cfg)
    return float(2.0 * np.sum(np.conj(W) * G).imag)


# -- trajectories -------------------------------------------------------------

@dataclass
class EnergyLedger:
    sigmas: tuple
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    e_sigma: list = field(default_factory=list)
    flux: list = field(default_factory=list)
    edge_amp: list = field(default_factory=list)

    def append(self, t, ms, en, es, fl, edge):
        if self.times and not t > self.times[-1]:
            raise ValueError("ledger times must increase strictly")
        vals = [ms, en, *es, *fl, edge]
        if not np.all(np.isfinite(vals)):
            raise NumericalAbort("non-finite ledger entry", time=t, ledger=self)
        self.times.append(t)
        self.mass.append(ms)
        self.energy.append(en)
        self.e_sigma.append(list(es))
        self.flux.append(list(fl))
        self.edge_amp.append(edge)

    def arrays(self):
        return {
            "t": np.array(self.times), "mass": np.array(self.mass),
            "energy": np.array(self.energy),
            "e_sigma": np.array(self.e_sigma).reshape(len(self.times), len(self.sigmas)),
            "flux": np.array(self.flux).reshape(len(self.times), len(self.sigmas)),
            "edge_amp": np.array(self.edge_amp),
        }

    def header(self):
        return (["t", "mass", "energy"] + [f"e_sigma_{s:g}" for s in self.sigmas]
                + [f"flux_{s:g}" for s in self.sigmas] + ["edge_amp"])

    def rows(self):
        for i, t in enumerate(self.times):
            yield [t, self.mass[i], self.energy[i], *self.e_sigma[i], *self.flux[i], self.edge_amp[i]]


def run_experiment(u0: SpectralField, cfg: EvolutionConfig, sigmas=(0.0,),
                   with_flux: bool = True, check_edge: bool = True,
                   _mutate_sign: float = 1.0) -> EnergyLedger:
    """Integrate to ``cfg.t_end`` recording mass, energy, E_sigma and its flux every ``stride`` steps."""
    sigmas = tuple(float(s) for s in sigmas)
    state = prepare(u0, cfg)
    ledger = EnergyLedger(sigmas)
    n_steps = int(round(cfg.t_end / cfg.dt))
    stepper = _stepper(cfg)

    def record(t, st):
        values = inverse_transform(st)
        edge = edge_amplitude(values, cfg.grid)
        if check_edge and edge > cfg.edge_floor:
            raise NumericalAbort(
                f"box-edge amplitude {edge:.2e} exceeds floor {cfg.edge_floor:.1e} at t={t:g}",
                time=t, ledger=ledger)
        es = [modified_energy(st, s, cfg) for s in sigmas]
        fl = [energy_flux(st, s, cfg, _mutate_sign) for s in sigmas] if with_flux else [0.0] * len(sigmas)
        ledger.append(t, mass(st), energy(st, cfg), es, fl, edge)

    record(0.0, state)
    for i in range(1, n_steps + 1):
        try:
            state = step(state, cfg, stepper)
        except NumericalAbort as exc:
            raise NumericalAbort(str(exc), time=i * cfg.dt, ledger=ledger) from None
        if i % cfg.stride == 0 or i == n_steps:
            record(i * cfg.dt, state)
    ledger.final_state = state
    return ledger


# -- almost-conservation exponent -------------------------------------------

@dataclass(frozen=True)
class DriftFit:
    """Result of a log-log fit of the modified-energy drift against sigma.

    ``drifts[i]`` is max_t |E_sigma(t) - E_sigma(0)| for ``sigmas[i]``; only
    points with ``used[i]`` entered the fit ``log drift = log_c + theta log sigma``.
    """

    theta: float
    residual: float
    log_c: float
    sigmas: np.ndarray
    drifts: np.ndarray
    used: np.ndarray
    noise_floor: float
    e_sigma0: np.ndarray

    @property
    def c(self) -> float:
        return float(np.exp(self.log_c))

    def envelope_constant(self, theta: float) -> float:
        """Smallest C with drift <= C sigma**theta at every fitted point."""
        s, d = self.sigmas[self.used], self.drifts[self.used]
        return float(np.max(d / s**theta))

    def as_dict(self):
        return {
            "theta_emp": self.theta, "residual": self.residual, "log_c": self.log_c,
            "c": self.c, "noise_floor": self.noise_floor,
            "sigma": self.sigmas.tolist(), "drift": self.drifts.tolist(),
            "used": self.used.tolist(), "e_sigma0": self.e_sigma0.tolist(),
        }


def drift_exponent(u0: SpectralField, cfg: EvolutionConfig, sigma_grid, horizon: float,
                   noise_factor: float = 10.0, min_points: int = 3) -> DriftFit:
    """Fit the exponent theta in max_t |E_sigma(t) - E_sigma(0)| ~ C sigma**theta.

    A sigma=0 trajectory is integrated alongside; its drift times ``noise_factor``
    is the floor below which points are discarded as integrator noise.
    """
    sig = np.asarray(sigma_grid, dtype=float)
    if sig.ndim != 1 or sig.size < 2 or np.any(sig <= 0) or np.any(np.diff(sig) <= 0):
        raise ValueError("sigma_grid must be a strictly increasing list of positive values")
    if np.log10(sig[-1] / sig[0]) < 1.5 - 1e-9:
        raise ValueError("sigma_grid must span at least 1.5 decades")
    flat = sig * cfg.xi_max <= 1.0
    if np.any(flat):
        log.info("dropping %d sigma values inside the flat region of the weight", flat.sum())
    run_cfg = replace(cfg, t_end=horizon)
    ledger = run_experiment(u0, run_cfg, sigmas=(0.0, *sig), with_flux=False)
    es = ledger.arrays()["e_sigma"]
    drift = np.max(np.abs(es - es[0]), axis=0)
    floor = noise_factor * drift[0]
    used = (drift[1:] > floor) & ~flat
    if used.sum() < min_points:
        raise DriftFitError(
            f"only {used.sum()} drifts above the noise floor {floor:.2e}: "
            "horizon too short / sigma too small")
    X, Y = np.log(sig[used]), np.log(drift[1:][used])
    (theta, log_c), res, *_ = np.polyfit(X, Y, 1, full=True)
    resid = float(np.sqrt(res[0] / used.sum())) if res.size else 0.0
    return DriftFit(float(theta), resid, float(log_c), sig, drift[1:], used, float(floor), es[0, 1:])

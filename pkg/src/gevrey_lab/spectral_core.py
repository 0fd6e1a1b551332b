"""Periodic pseudospectral substrate.

Normalization
-------------
Coefficients are stored in numpy FFT order and scaled so that

    coeffs = sqrt(dx / n) * fft(values),

i.e. the unitary DFT times ``sqrt(dx)``. With this choice the discrete
Parseval identity reads ``sum(|values|**2) * dx == sum(|coeffs|**2)``, so a
plain sum of squared coefficients is the L2 norm of the periodic field.
Every quadratic quantity downstream (Gevrey norms, mass, the quadratic part of
the modified energy) is written against this convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Grid:
    n_points: int
    box_length: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8 or self.n_points % 2:
            raise ValueError(f"n_points must be an even integer >= 8, got {self.n_points}")
        if not np.isfinite(self.box_length) or self.box_length <= 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")

    @property
    def dx(self) -> float:
        return self.box_length / self.n_points

    @property
    def x(self) -> np.ndarray:
        """Nodes on [-L/2, L/2)."""
        return -0.5 * self.box_length + self.dx * np.arange(self.n_points)

    @property
    def xi(self) -> np.ndarray:
        """Angular frequencies 2*pi*j/L in FFT order; index n/2 is the Nyquist mode."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.box_length

    @property
    def nyquist(self) -> float:
        return np.pi * self.n_points / self.box_length

    @property
    def nyquist_index(self) -> int:
        return self.n_points // 2

    def dealias_cutoff(self, degree: int) -> float:
        return self.nyquist * 2.0 / (degree + 1)

    def dealias_mask(self, degree: int) -> np.ndarray:
        # strict inequality keeps the aliased image of the top retained mode
        # off the retained band when the cutoff lands on a grid frequency
        return np.abs(self.xi) < self.dealias_cutoff(degree) * (1.0 - 1e-12)


def make_grid(n_points: int, box_length: float) -> Grid:
    return Grid(n_points, float(box_length))


@dataclass(frozen=True)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray
    reality_flag: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise FloatingPointError("non-finite spectral coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def with_coeffs(self, coeffs: np.ndarray, **meta) -> "SpectralField":
        merged = dict(self.meta)
        merged.update(meta)
        return SpectralField(self.grid, coeffs, self.reality_flag, merged)

    def hermitian_residual(self) -> float:
        c = self.coeffs
        mirror = np.conj(c[(-np.arange(c.size)) % c.size])
        return float(np.max(np.abs(c - mirror))) if c.size else 0.0

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))


def _scale(grid: Grid) -> float:
    return np.sqrt(grid.dx / grid.n_points)


def forward_transform(values, grid: Grid, real: bool | None = None) -> SpectralField:
    values = np.asarray(values)
    if values.shape != (grid.n_points,):
        raise ValueError(f"expected {grid.n_points} samples, got shape {values.shape}")
    if real is None:
        real = not np.iscomplexobj(values)
    coeffs = _scale(grid) * np.fft.fft(values)
    return SpectralField(grid, coeffs, bool(real))


def inverse_transform(field: SpectralField) -> np.ndarray:
    values = np.fft.ifft(field.coeffs) / _scale(field.grid)
    if field.reality_flag:
        return values.real.copy()
    return values


def dealias(field: SpectralField, degree: int) -> SpectralField:
    """Zero every mode at or beyond the generalized 2/3-rule cutoff for ``degree``."""
    if degree < 2:
        raise ValueError("dealias degree must be >= 2")
    grid = field.grid
    mask = grid.dealias_mask(degree)
    return field.with_coeffs(
        np.where(mask, field.coeffs, 0.0),
        dealias_degree=degree,
        dealias_fraction=2.0 / (degree + 1),
    )


def apply_multiplier(field: SpectralField, multiplier: Callable[[np.ndarray], np.ndarray] | np.ndarray,
                     odd: bool = False) -> SpectralField:
    """Multiply each coefficient by ``multiplier(xi)``.

    ``odd=True`` marks a derivative-type symbol; the unpaired Nyquist mode is
    then zeroed so real fields stay real.
    """
    xi = field.grid.xi
    m = multiplier(xi) if callable(multiplier) else np.asarray(multiplier)
    m = np.broadcast_to(m, xi.shape)
    if not np.all(np.isfinite(m)):
        bad = xi[~np.isfinite(m)]
        raise FloatingPointError(f"multiplier is not finite at xi={bad[:4]}")
    out = m * field.coeffs
    if odd:
        out = out.copy()
        out[field.grid.nyquist_index] = 0.0
    return field.with_coeffs(out)


def derivative(field: SpectralField, order: int = 1) -> SpectralField:
    sym = (1j * field.grid.xi) ** order
    return apply_multiplier(field, sym, odd=bool(order % 2))


def edge_amplitude(values: np.ndarray, grid: Grid, fraction: float = 0.05) -> float:
    """Max |value| within ``fraction*L`` of the box edges, relative to the global peak."""
    a = np.abs(values)
    peak = a.max()
    if peak == 0:
        return 0.0
    near = np.abs(grid.x) >= 0.5 * grid.box_length * (1.0 - 2.0 * fraction)
    return float(a[near].max() / peak)

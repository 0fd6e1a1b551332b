"""Named initial-data families used by configs and tests."""

from __future__ import annotations

import numpy as np

from .spectral_core import Grid, SpectralField, forward_transform

FAMILIES = ("sech", "gaussian", "single_mode")


def sech(grid: Grid, amplitude=1.0, rate=1.0, complex_field=False, velocity=0.0):
    """amplitude * sech(rate * x), optionally boosted by exp(i*velocity*x)."""
    x = grid.x
    v = amplitude / np.cosh(rate * x)
    if complex_field:
        return forward_transform(v * np.exp(1j * velocity * x), grid, real=False)
    return forward_transform(v, grid, real=True)


def gaussian(grid: Grid, amplitude=1.0, width=1.0, complex_field=False):
    v = amplitude * np.exp(-(grid.x / width) ** 2)
    if complex_field:
        return forward_transform(v.astype(complex), grid, real=False)
    return forward_transform(v, grid, real=True)


def single_mode(grid: Grid, xi0=1.0, amplitude=1.0, complex_field=False):
    x = grid.x
    if complex_field:
        return forward_transform(amplitude * np.exp(1j * xi0 * x), grid, real=False)
    return forward_transform(amplitude * np.cos(xi0 * x), grid, real=True)


def build(spec: dict, grid: Grid, complex_field: bool) -> SpectralField:
    spec = dict(spec)
    family = spec.pop("family")
    if family not in FAMILIES:
        raise ValueError(f"unknown initial-data family {family!r}")
    fn = {"sech": sech, "gaussian": gaussian, "single_mode": single_mode}[family]
    return fn(grid, complex_field=complex_field, **spec)

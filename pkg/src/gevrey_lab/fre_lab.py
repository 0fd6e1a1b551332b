"""Frequency-restricted integrals over deformed convolution hyperplanes.

Variables are ``xi_0 = xi`` (outgoing) and ``xi_1 .. xi_k`` (incoming), tied by

    xi_0 + shift = sum_j h_j xi_j,

with hyperplane signs ``h_j``. A configuration fixes some variables, integrates
the others and uses the highest-index non-fixed variable as the dependent one.
The constraint has unit coefficients, so the measure does not depend on that
choice. The integrand is ``weight(xi) * 1{|Phi - alpha| < M}``, restricted
to a region made of ratio and size constraints between the variables.

Quadrature
----------
One free variable (``t``) is integrated semi-analytically. Every variable is an
affine function of ``t``, so the phase is a polynomial in ``t``, and the
indicator's edges are roots of ``Phi - alpha -+ M``. Region boundaries are the
points where ``v_i = +-c v_j``. Pieces are graded geometrically around the
zeros of each variable, so peaks of ``<v>**-p`` are resolved. On each piece the
indicator and region membership are constant; they are decided at the
midpoint, and the smooth weight is integrated by Gauss-Legendre. A second free
variable, if present, is integrated on adaptively bisected Gauss-Legendre
panels. All values of M share one pass: the roots for every M are merged into
the breakpoint list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import block_rng, log_uniform, map_blocks

CUBIC = "cubic"
QUADRATIC = "quadratic"

GRADING = (0.0, 1.0, 4.0, 16.0, 64.0, 256.0)
XI_MAX = 1e3
N_SCAN = 33   # uniform outer panel boundaries added to the graded ones


class NonintegrableDirection(ValueError):
    """The integrand does not decay along a free direction and the region is unbounded."""


# -- phase functions -----------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpec:
    """Resonance function of an arity-k interaction.

    ``dispersion="cubic"``:     Phi = xi**3 - sum_j signs[j] * xi_j**3
    ``dispersion="quadratic"``: Phi = xi**2 + sum_j signs[j] * xi_j**2

    A sign of 0 removes that variable from the phase (used to build the
    closed-form oracles). ``hyperplane`` holds the signs h_j of the convolution
    constraint; the default is all +1 for the cubic phase and (+, -, +) for
    three incoming waves with the quadratic phase.
    """

    dispersion: str
    signs: tuple
    hyperplane: tuple | None = None

    def __post_init__(self):
        if self.dispersion not in (CUBIC, QUADRATIC):
            raise ValueError(f"unknown dispersion {self.dispersion!r}")
        signs = tuple(int(s) for s in self.signs)
        if len(signs) < 2 or any(s not in (-1, 0, 1) for s in signs):
            raise ValueError("signs must be a list of at least two values in {-1, 0, +1}")
        object.__setattr__(self, "signs", signs)
        h = self.hyperplane
        if h is None:
            h = (1, -1, 1) if self.dispersion == QUADRATIC and len(signs) == 3 else (1,) * len(signs)
        h = tuple(int(x) for x in h)
        if len(h) != len(signs) or any(x not in (-1, 1) for x in h):
            raise ValueError("hyperplane signs must be +-1, one per incoming frequency")
        object.__setattr__(self, "hyperplane", h)

    @property
    def arity(self) -> int:
        return len(self.signs)

    @property
    def degree(self) -> int:
        return 3 if self.dispersion == CUBIC else 2

    def coefficients(self) -> np.ndarray:
        """Phase coefficient of each variable xi_0..xi_k."""
        s = np.array(self.signs, dtype=float)
        return np.concatenate([[1.0], -s if self.dispersion == CUBIC else s])

    def constraint(self) -> np.ndarray:
        """Coefficients a with sum_i a_i xi_i = -shift."""
        return np.concatenate([[1.0], -np.array(self.hyperplane, dtype=float)])


def phase_value(spec: PhaseSpec, xi: float, freqs) -> float:
    f = np.asarray(freqs, dtype=float)
    if f.shape != (spec.arity,):
        raise ValueError(f"expected {spec.arity} incoming frequencies")
    v = np.concatenate([[float(xi)], f])
    return float(np.sum(spec.coefficients() * v**spec.degree))


def _phase(coef, V, deg):
    return np.sum(coef * V**deg, axis=-1)


# -- regions -------------------------------------------------------------------
# A constraint (i, j, c) reads |v_i| >= c |v_j|; j = FLOOR means |v_i| >= c and
# j = STRICT means |v_i| > c.

FLOOR = -1
STRICT = -2


def ordered(indices, ratio=1.0):
    """|v_a| >= |v_b| for consecutive entries of ``indices``."""
    return [(a, b, ratio) for a, b in zip(indices[:-1], indices[1:])]


def much_smaller(small, big, ll):
    """|v_small| <= ll |v_big|."""
    return (big, small, 1.0 / ll)


def comparable(a, b, ll):
    """|v_a| >= ll |v_b|."""
    return (a, b, ll)


# -- multiplier catalog --------------------------------------------------------

def _jap(x):
    return np.sqrt(1.0 + x * x)


def _w_kdv_a(V, th):
    return np.abs(V[..., 0]) ** th / (_jap(V[..., 3]) * _jap(V[..., 5]) ** 2)


def _w_kdv_b(V, th):
    return np.abs(V[..., 0]) ** th / (_jap(V[..., 3]) * _jap(V[..., 4]) ** 2)


def _w_kdv_c(V, th):
    return np.abs(V[..., 0]) ** th / (_jap(V[..., 3]) ** 2 * _jap(V[..., 5]) ** 2)


def _w_kdv_d(V, th):
    return np.abs(V[..., 0]) ** th / _jap(V[..., 4]) ** 2


def _w_kdv_nosmooth(V, th):
    out = np.abs(V[..., 1]) * _jap(V[..., 1]) / _jap(V[..., 0])
    for j in range(2, 6):
        out = out / _jap(V[..., j])
    return out


def _w_nls(V, th):
    return np.abs(V[..., 0]) ** (th - 1.0) / _jap(V[..., 3])


def _w_unit(V, th):
    return np.ones(V.shape[:-1])


def _w_zero(V, th):
    return np.zeros(V.shape[:-1])


def _kdv_region(case, ll):
    base = ordered([0, 1, 2, 3, 4, 5]) + [(0, STRICT, 1.0)]
    if case == "0":
        return base + [comparable(5, 1, ll)]
    base = base + [much_smaller(5, 1, ll)]
    if case == "1":
        return base + [comparable(3, 2, ll)]
    if case == "2":
        return base + [much_smaller(3, 2, ll)]
    raise ValueError(f"unknown gKdV case {case!r}")


def _kdv_nosmooth_region(ll):
    return ordered([1, 2, 3, 4, 5, 0]) + [(1, STRICT, 1.0)]


def _nls_region(case, ll):
    base = ordered([0, 1, 2, 3]) + [(0, STRICT, 1.0)]
    if case is None:
        return base
    if case == "1":
        return base + [much_smaller(3, 0, ll)]
    if case == "2":
        return base + [comparable(3, 1, ll)]
    raise ValueError(f"unknown NLS case {case!r}")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    weight: object
    fixed: tuple
    dispersion: str
    order: tuple        # variables by decreasing magnitude, used by the sampler
    default_case: str | None

    def region(self, case, ll):
        if self.name.startswith("kdv_smooth"):
            return _kdv_region(case, ll)
        if self.name == "kdv_nosmooth":
            return _kdv_nosmooth_region(ll)
        return _nls_region(case, ll)


CATALOG = {
    "kdv_smooth_a": CatalogEntry("kdv_smooth_a", _w_kdv_a, (0, 2, 4), CUBIC, (0, 1, 2, 3, 4, 5), "1"),
    "kdv_smooth_b": CatalogEntry("kdv_smooth_b", _w_kdv_b, (1, 3, 5), CUBIC, (0, 1, 2, 3, 4, 5), "1"),
    "kdv_smooth_c": CatalogEntry("kdv_smooth_c", _w_kdv_c, (0, 2, 4), CUBIC, (0, 1, 2, 3, 4, 5), "2"),
    "kdv_smooth_d": CatalogEntry("kdv_smooth_d", _w_kdv_d, (1, 3, 5), CUBIC, (0, 1, 2, 3, 4, 5), "2"),
    "kdv_nosmooth": CatalogEntry("kdv_nosmooth", _w_kdv_nosmooth, (0, 2, 4), CUBIC, (1, 2, 3, 4, 5, 0), None),
    "nls_a": CatalogEntry("nls_a", _w_nls, (0, 2), QUADRATIC, (0, 1, 2, 3), None),
    "nls_b": CatalogEntry("nls_b", _w_nls, (1, 3), QUADRATIC, (0, 1, 2, 3), None),
}

WEIGHTS = {"unit": _w_unit, "zero": _w_zero}
WEIGHTS.update({name: e.weight for name, e in CATALOG.items()})

NLS_SIGN_PATTERNS = ((1, 1, 1), (1, 1, -1), (-1, 1, -1), (-1, -1, -1))


@dataclass(frozen=True)
class FreConfig:
    """Everything needed to evaluate and maximize one frequency-restricted integral.

    ``region`` holds (i, j, c) constraints (see ``ordered``); ``order`` lists
    the variables by decreasing magnitude and drives the sampler. ``compact``
    records that the region bounds every variable by a multiple of the fixed
    ones, which makes the truncation at ``xi_max`` exact.
    """

    phase: PhaseSpec
    multiplier: str
    fixed_vars: tuple
    theta: float = 1.5
    M_grid: tuple = tuple(np.geomspace(1.0, 100.0, 7))
    region: tuple = ()
    order: tuple | None = None
    compact: bool = False
    n_samples: int = 1000
    seed: int = 0
    shift_cap: float = 0.5
    avoid_list: tuple = ()
    avoid_tol: float = 0.05
    xi_max: float = XI_MAX
    sample_range: tuple = (1.0, None)
    top_floor: float | None = None     # lower bound for the largest sampled magnitude
    alpha_fixed: float | None = None
    shift_fixed: float | None = None
    refine_top: int = 3
    refine_rounds: int = 12
    refine_proposals: int = 4
    name: str = "custom"

    def __post_init__(self):
        nv = self.phase.arity + 1
        fixed = tuple(sorted(int(i) for i in self.fixed_vars))
        if len(set(fixed)) != len(fixed) or any(not 0 <= i < nv for i in fixed):
            raise ValueError("fixed_vars must be distinct indices of xi_0..xi_k")
        free = [i for i in range(nv) if i not in fixed]
        if not fixed or len(free) < 2:
            raise ValueError("need a nonempty fixed set and at least two non-fixed variables")
        if len(free) > 3:
            raise ValueError("at most two integrated variables are supported")
        object.__setattr__(self, "fixed_vars", fixed)
        if self.multiplier not in WEIGHTS:
            raise ValueError(f"unknown multiplier {self.multiplier!r}")
        M = np.asarray(self.M_grid, dtype=float)
        if M.ndim != 1 or M.size < 1 or np.any(M < 1) or np.any(np.diff(M) <= 0):
            raise ValueError("M_grid must be increasing values >= 1")
        object.__setattr__(self, "M_grid", tuple(float(m) for m in M))
        object.__setattr__(self, "region", tuple(tuple(c) for c in self.region))
        if self.shift_cap < 0:
            raise ValueError("shift_cap must be nonnegative")
        k0 = self.phase.arity
        for c in self.avoid_list:
            if any(abs(c - (1.0 - k0 / K)) < 1e-12 for K in range(k0, k0 + 1)):
                raise ValueError(f"avoid value {c} is one the deformation must keep")

    @property
    def n_vars(self) -> int:
        return self.phase.arity + 1

    @property
    def free_vars(self) -> tuple:
        return tuple(i for i in range(self.n_vars) if i not in self.fixed_vars)

    @property
    def eliminated(self) -> int:
        return self.free_vars[-1]

    @property
    def integrated(self) -> tuple:
        """Integrated variables as (outer, inner) or (inner,).

        The inner variable is integrated exactly against the indicator, so it
        should be the one along which the phase moves fastest: the largest in
        the magnitude order when one is given.
        """
        free = self.free_vars[:-1]
        if len(free) == 2 and self.order is not None:
            rank = {v: i for i, v in enumerate(self.order)}
            free = tuple(sorted(free, key=lambda v: -rank[v]))
        return free


def catalog_config(name: str, theta: float = 1.5, signs=None, case=None, ll: float = 0.25,
                   **kw) -> FreConfig:
    """FreConfig for a named catalog entry (``kdv_smooth_a`` ... ``nls_b``)."""
    if name not in CATALOG:
        raise ValueError(f"unknown catalog entry {name!r}; expected one of {sorted(CATALOG)}")
    e = CATALOG[name]
    if e.dispersion == CUBIC:
        phase = PhaseSpec(CUBIC, signs or (1,) * 5)
    else:
        phase = PhaseSpec(QUADRATIC, signs or (1, 1, 1))
    case = e.default_case if case is None else case
    return FreConfig(phase, name, e.fixed, theta=theta, region=tuple(e.region(case, ll)),
                     order=e.order, compact=True, name=name, **kw)


# -- line integrals --------------------------------------------------------------

_GL = {n: np.polynomial.legendre.leggauss(n) for n in (3, 4, 5, 6, 8)}


def _affine(cfg: FreConfig, fixed, shift, outer=None):
    """Intercepts C (R, nv) and slopes q (nv,) of every variable as a function of t.

    ``fixed`` is (R, n_fixed); ``outer`` (R,) gives the value of the first
    integrated variable when two are integrated.
    """
    nv = cfg.n_vars
    R = fixed.shape[0]
    a = cfg.phase.constraint()
    C = np.zeros((R, nv))
    q = np.zeros(nv)
    C[:, list(cfg.fixed_vars)] = fixed
    integ = cfg.integrated
    t_var = integ[-1]
    q[t_var] = 1.0
    if len(integ) == 2:
        C[:, integ[0]] = outer
    e = cfg.eliminated
    others = [i for i in range(nv) if i != e]
    C[:, e] = (-shift - C[:, others] @ a[others]) / a[e]
    q[e] = -a[t_var] / a[e]
    return C, q


def _poly_coeffs(C, q, coef, deg):
    """Phi(t) = sum_i coef_i (C_i + q_i t)**deg as (R, deg+1), highest power first."""
    R = C.shape[0]
    out = np.zeros((R, deg + 1))
    for i in np.nonzero(coef)[0]:
        for m in range(deg + 1):
            if q[i] == 0 and m > 0:
                continue
            out[:, deg - m] += coef[i] * math.comb(deg, m) * q[i] ** m * C[:, i] ** (deg - m)
    return out


def _real_roots(P, levels):
    """Real roots of P(t) - level for every row and level; NaN where absent."""
    R, n1 = P.shape
    L = levels.shape[1]
    lead = np.nonzero(np.any(P != 0, axis=0))[0]
    if lead.size == 0:
        return np.full((R, 0), np.nan)
    first = lead[0]
    Q = np.repeat(P[:, None, first:], L, axis=1).copy()  # (R, L, d+1)
    Q[:, :, -1] -= levels
    d = Q.shape[2] - 1
    if d == 0:
        return np.full((R, 0), np.nan)
    a = Q[:, :, 0]
    if np.any(a == 0):
        # leading coefficient identical across rows (integer slopes), so this is all-or-none
        return np.full((R, L * d), np.nan)
    if d == 1:
        return (-Q[:, :, 1] / a).reshape(R, L)
    if d == 2:
        b, c = Q[:, :, 1] / a, Q[:, :, 2] / a
        disc = b * b - 4 * c
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        r1 = np.where(b >= 0, (-b - sq) / 2, (-b + sq) / 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(r1 != 0, c / r1, -b - r1)
        return np.stack([r1, r2], axis=-1).reshape(R, 2 * L)
    comp = np.zeros((R, L, d, d))
    comp[:, :, 0, :] = -Q[:, :, 1:] / a[..., None]
    comp[:, :, np.arange(1, d), np.arange(d - 1)] = 1.0
    ev = np.linalg.eigvals(comp)
    tol = 1e-7 * (1.0 + np.abs(ev))
    re = np.where(np.abs(ev.imag) <= tol, ev.real, np.nan)
    return re.reshape(R, L * d)


def _region_mask(cfg, V, shift):
    """Region membership of points V (..., nv); ``shift`` broadcasts over V[..., 0]."""
    A = np.abs(V)
    ok = np.all(A <= cfg.xi_max, axis=-1)
    for i, j, c in cfg.region:
        if j == FLOOR:
            ok &= A[..., i] >= c
        elif j == STRICT:
            ok &= A[..., i] > c
        else:
            ok &= A[..., i] >= c * A[..., j]
    if cfg.shift_cap > 0:
        floor = np.abs(shift) / cfg.shift_cap
        for j in range(1, cfg.n_vars):
            ok &= A[..., j] >= floor
    else:
        ok &= shift == 0
    if cfg.avoid_list and 0 not in cfg.fixed_vars:
        for c in cfg.avoid_list:
            target = c * V[..., 0]
            ok &= np.abs(shift - target) >= cfg.avoid_tol * np.abs(target)
    return ok


def _breaks(cfg, C, q, shift):
    """Candidate region boundaries and grading points along t, (R, n)."""
    out = []

    def solve(i_c, i_q, level):
        # C_i + q_i t = level  (level may be an array)
        if i_q == 0:
            return None
        return (level - i_c) / i_q

    nv = cfg.n_vars
    for i in range(nv):
        if q[i] == 0:
            continue
        for g in GRADING:
            out.append(solve(C[:, i], q[i], g))
            if g:
                out.append(solve(C[:, i], q[i], -g))
        out.append(solve(C[:, i], q[i], cfg.xi_max))
        out.append(solve(C[:, i], q[i], -cfg.xi_max))
        if cfg.shift_cap > 0 and i >= 1:
            fl = np.abs(shift) / cfg.shift_cap
            out.append(solve(C[:, i], q[i], fl))
            out.append(solve(C[:, i], q[i], -fl))
    for i, j, c in cfg.region:
        if j in (FLOOR, STRICT):
            if q[i]:
                out.append(solve(C[:, i], q[i], c))
                out.append(solve(C[:, i], q[i], -c))
            continue
        for s in (1.0, -1.0):
            # C_i + q_i t = s c (C_j + q_j t)
            den = q[i] - s * c * q[j]
            if den != 0:
                out.append((s * c * C[:, j] - C[:, i]) / den)
    if cfg.avoid_list and 0 not in cfg.fixed_vars and q[0]:
        for c in cfg.avoid_list:
            for s in (1.0, -1.0):
                # shift - c v0 = s tol c v0  ->  v0 = shift / (c (1 + s tol))
                out.append(solve(C[:, 0], q[0], shift / (c * (1 + s * cfg.avoid_tol))))
    out = [np.broadcast_to(np.asarray(o, dtype=float), (C.shape[0],)) for o in out if o is not None]
    return np.stack(out, axis=1) if out else np.zeros((C.shape[0], 0))


def _line_integrals(cfg, C, q, shift, alpha, Ms, weight, n_gl=4, t_range=None):
    """Integrals over t of weight * region * 1{|Phi - alpha| < M} for every row and M.

    Returns (R, nM).
    """
    R, nv = C.shape
    coef = cfg.phase.coefficients()
    deg = cfg.phase.degree
    Ms = np.asarray(Ms, dtype=float)
    P = _poly_coeffs(C, q, coef, deg)
    levels = np.concatenate([alpha[:, None] - Ms[None, :], alpha[:, None] + Ms[None, :]], axis=1)
    roots = _real_roots(P, levels)
    br = _breaks(cfg, C, q, shift)
    lo, hi = t_range if t_range is not None else (-cfg.xi_max, cfg.xi_max)
    pts = np.concatenate([np.full((R, 1), lo), np.full((R, 1), hi), roots, br], axis=1)
    pts = np.where(np.isfinite(pts), pts, lo)
    pts = np.sort(np.clip(pts, lo, hi), axis=1)
    a, b = pts[:, :-1], pts[:, 1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    Vm = C[:, None, :] + mid[..., None] * q
    sh = shift[:, None]
    inside = _region_mask(cfg, Vm, sh) & (half > 0)
    phi_mid = _phase(coef, Vm, deg)
    ind = np.abs(phi_mid[..., None] - alpha[:, None, None]) < Ms  # (R, P, nM)
    x, w = _GL[n_gl]
    T = mid[..., None] + half[..., None] * x                        # (R, P, n_gl)
    Vn = C[:, None, None, :] + T[..., None] * q
    wt = weight(Vn, cfg.theta)
    piece = np.sum(wt * w, axis=-1) * half * inside                 # (R, P)
    return np.einsum("rp,rpm->rm", piece, ind)


# -- two-dimensional integrals ---------------------------------------------------

def _outer_points(cfg, fixed, shift, S):
    """Panel boundaries for the outer variable: grading and outer-only region constraints."""
    R = fixed.shape[0]
    nv = cfg.n_vars
    o = cfg.integrated[0]
    # coefficients of every variable in terms of the outer variable, with t frozen at 0
    a = cfg.phase.constraint()
    e = cfg.eliminated
    pts = [np.full(R, -S), np.full(R, S)]
    for g in GRADING:
        pts += [np.full(R, g), np.full(R, -g)]
    pts += [np.full(R, x) for x in np.linspace(-S, S, N_SCAN)]
    Cf = np.zeros((R, nv))
    Cf[:, list(cfg.fixed_vars)] = fixed
    for i, j, c in cfg.region:
        # constraints between the outer variable and fixed variables only
        if j in (FLOOR, STRICT):
            if i == o:
                pts += [np.full(R, c), np.full(R, -c)]
        elif {i, j} <= set(cfg.fixed_vars) | {o} and o in (i, j):
            other = j if i == o else i
            fac = c if i == o else 1.0 / c
            pts += [fac * np.abs(Cf[:, other]), -fac * np.abs(Cf[:, other])]
    del a, e
    P = np.stack(pts, axis=1)
    return np.sort(np.clip(P, -S, S), axis=1)


def _bound(cfg, fixed, shift):
    """Box half-width containing the region (compact configurations) or xi_max."""
    if cfg.compact:
        B = (cfg.n_vars) * np.max(np.abs(fixed), axis=1) + np.abs(shift)
        return np.minimum(B, cfg.xi_max)
    return np.full(fixed.shape[0], cfg.xi_max)


def _integrate_fixed_panels(cfg, fixed, shift, alpha, Ms, weight, n_gl_outer=5, n_gl_inner=4):
    """One-pass composite rule for a batch of samples (coarse ranking)."""
    R = fixed.shape[0]
    S = _bound(cfg, fixed, shift)
    if len(cfg.integrated) == 1:
        C, q = _affine(cfg, fixed, shift)
        out = np.zeros((R, len(Ms)))
        for r in range(R):
            out[r] = _line_integrals(cfg, C[r:r + 1], q, shift[r:r + 1], alpha[r:r + 1], Ms,
                                     weight, n_gl_inner, (-S[r], S[r]))[0]
        return out
    x, w = _GL[n_gl_outer]
    out = np.zeros((R, len(Ms)))
    for r in range(R):
        P = _outer_points(cfg, fixed[r:r + 1], shift[r:r + 1], S[r])[0]
        a, b = P[:-1], P[1:]
        keep = b > a
        a, b = a[keep], b[keep]
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * x
        s = s.ravel()
        n = s.size
        C, q = _affine(cfg, np.repeat(fixed[r:r + 1], n, axis=0), np.full(n, shift[r]), s)
        vals = _line_integrals(cfg, C, q, np.full(n, shift[r]), np.full(n, alpha[r]), Ms,
                               weight, n_gl_inner, (-S[r], S[r]))
        wts = (half[:, None] * w).ravel()
        out[r] = wts @ vals
    return out


def _integrate_adaptive(cfg, fixed, shift, alpha, Ms, weight, rtol=1e-4, max_iter=14,
                        n_gl_outer=5, n_gl_inner=6, max_panels=4000):
    """Adaptive bisection on the outer variable for a single sample; returns (nM,)."""
    S = float(_bound(cfg, fixed[None, :], np.array([shift]))[0])
    sh = np.array([shift])
    if len(cfg.integrated) == 1:
        C, q = _affine(cfg, fixed[None, :], sh)
        return _line_integrals(cfg, C, q, sh, np.array([alpha]), Ms, weight, 8, (-S, S))[0]
    x, w = _GL[n_gl_outer]

    def panel_values(a, b):
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * x
        n = s.size
        C, q = _affine(cfg, np.repeat(fixed[None, :], n, axis=0), np.full(n, shift), s.ravel())
        vals = _line_integrals(cfg, C, q, np.full(n, shift), np.full(n, alpha), Ms,
                               weight, n_gl_inner, (-S, S))
        return np.einsum("pk,pkm->pm", half[:, None] * w, vals.reshape(len(a), len(x), -1))

    P = _outer_points(cfg, fixed[None, :], sh, S)[0]
    a, b = P[:-1], P[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    val = panel_values(a, b)
    done = np.zeros(len(Ms))
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        left, right = panel_values(a, m), panel_values(m, b)
        err = np.abs(left + right - val)
        total = np.abs(done + (left + right).sum(axis=0))
        tol = rtol * np.maximum(total, 1e-300) / np.sqrt(max(len(a), 1))
        ok = np.all(err <= tol, axis=1)
        done += (left + right)[ok].sum(axis=0)
        bad = ~ok
        if not np.any(bad) or 2 * bad.sum() > max_panels:
            done += (left + right)[bad].sum(axis=0)
            return done
        a = np.concatenate([a[bad], m[bad]])
        b = np.concatenate([m[bad], b[bad]])
        val = np.concatenate([left[bad], right[bad]])
    return done + val.sum(axis=0)


@dataclass
class IntegralResult:
    M: tuple
    values: np.ndarray
    tail_bound: float
    diagnostics: dict = field(default_factory=dict)


def restricted_integral(cfg: FreConfig, fixed_values, alpha: float, shift: float, M,
                        rtol: float = 1e-4, estimate_tail: bool = True) -> IntegralResult:
    """Integral of weight * 1{|Phi - alpha| < M} over the free variables on the hyperplane.

    ``fixed_values`` are given in the order of ``cfg.fixed_vars``. ``M`` may be a
    scalar or a list; every value is computed in the same pass.
    """
    fixed = np.asarray(fixed_values, dtype=float).reshape(-1)
    if fixed.size != len(cfg.fixed_vars) or not np.all(np.isfinite(fixed)):
        raise ValueError("fixed_values must be finite, one per fixed variable")
    Ms = np.atleast_1d(np.asarray(M, dtype=float))
    if np.any(Ms < 1):
        raise ValueError("M must be >= 1")
    _check_shift(cfg, fixed, shift)
    weight = WEIGHTS[cfg.multiplier]
    vals = _integrate_adaptive(cfg, fixed, float(shift), float(alpha), Ms, weight, rtol=rtol)
    tail, diag = 0.0, {}
    if cfg.compact:
        B = float(_bound(cfg, fixed[None, :], np.array([shift]))[0])
        diag["truncation"] = "exact (region bounded by fixed variables)"
        if cfg.n_vars * np.max(np.abs(fixed)) + abs(shift) > cfg.xi_max:
            diag["truncation"] = "region box exceeds xi_max; tail estimated"
            estimate_tail = True
        else:
            estimate_tail = False
        diag["box"] = B
    if estimate_tail:
        tail, diag = _tail_estimate(cfg, fixed, shift, alpha, Ms, weight, vals, diag, rtol)
    return IntegralResult(tuple(float(m) for m in Ms), vals, float(tail), diag)


def _check_shift(cfg, fixed, shift):
    inc = [k for k, i in enumerate(cfg.fixed_vars) if i >= 1]
    if inc:
        cap = cfg.shift_cap * np.min(np.abs(fixed[inc]))
        if abs(shift) > cap * (1 + 1e-12):
            raise ValueError(f"|shift| = {abs(shift):.3g} exceeds shift_cap * min|xi_j| = {cap:.3g}")
    if cfg.avoid_list and 0 in cfg.fixed_vars:
        xi = fixed[list(cfg.fixed_vars).index(0)]
        for c in cfg.avoid_list:
            if abs(shift - c * xi) < cfg.avoid_tol * abs(c * xi):
                raise ValueError(f"shift {shift:.3g} is within {cfg.avoid_tol:.0%} of the avoided {c}*xi")


def _tail_estimate(cfg, fixed, shift, alpha, Ms, weight, vals, diag, rtol):
    """Growth of the integral when the truncation doubles, extrapolated geometrically."""
    X = cfg.xi_max
    inner = _integrate_adaptive(replace(cfg, xi_max=X / 2), fixed, shift, alpha, Ms, weight, rtol=rtol)
    outer = _integrate_adaptive(replace(cfg, xi_max=2 * X), fixed, shift, alpha, Ms, weight, rtol=rtol)
    d1 = np.max(vals - inner)
    d2 = np.max(outer - vals)
    diag["shell_increments"] = [float(d1), float(d2)]
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if d2 <= 10 * rtol * scale:
        # below quadrature noise: nothing lives beyond the truncation
        return max(float(d2), 0.0), diag
    r = d2 / d1 if d1 > 0 else np.inf
    if r >= 0.5:
        raise NonintegrableDirection(
            f"integral keeps growing with the truncation (shell ratio {r:.2f}); "
            "the multiplier lacks integrable decay along a free direction")
    diag["shell_ratio"] = float(r)
    return float(d2 / (1 - r)), diag


# -- sup search --------------------------------------------------------------------

@dataclass
class Candidate:
    fixed: np.ndarray
    alpha: float
    shift: float

    def as_dict(self, cfg):
        return {"fixed": {f"xi_{i}": float(v) for i, v in zip(cfg.fixed_vars, self.fixed)},
                "alpha": float(self.alpha), "shift": float(self.shift)}


def _sample_points(cfg: FreConfig, rng, n):
    """Feasible full points on the deformed hyperplane, with their shifts."""
    nv = cfg.n_vars
    lo = cfg.sample_range[0]
    hi = cfg.sample_range[1] or cfg.xi_max / (nv + 1)
    order = list(cfg.order) if cfg.order is not None else list(range(nv))
    solve = order[0]
    a = cfg.phase.constraint()
    got_V, got_s, have, tries = [], [], 0, 0
    while have < n:
        tries += 1
        if tries > 400:
            raise RuntimeError(f"could not sample feasible points for {cfg.name}")
        m = 8 * (n - have) + 256
        if cfg.top_floor is None:
            mags = -np.sort(-log_uniform(rng, lo, hi, (m, nv)), axis=1)
        else:
            top = log_uniform(rng, max(cfg.top_floor, lo), hi, (m, 1))
            # slot 0 is overwritten by the constraint; the banded value goes to slot 1
            rest = log_uniform(rng, lo, np.repeat(top, nv - 2, axis=1))
            mags = np.hstack([top, -np.sort(-np.hstack([top, rest]), axis=1)[:, :nv - 1]])
        V = np.zeros((m, nv))
        V[:, order] = mags * rng.choice([-1.0, 1.0], size=(m, nv))
        rest = [i for i in range(nv) if i != solve]
        inc = [i for i in rest if i >= 1]
        if cfg.shift_fixed is not None:
            sh = np.full(m, cfg.shift_fixed)
        elif cfg.shift_cap > 0 and inc:
            sh = cfg.shift_cap * np.min(np.abs(V[:, inc]), axis=1) * rng.uniform(-1, 1, m)
        else:
            sh = np.zeros(m)
        V[:, solve] = (-sh - V[:, rest] @ a[rest]) / a[solve]
        ok = _region_mask(cfg, V, sh)
        if cfg.avoid_list and 0 in cfg.fixed_vars:
            for c in cfg.avoid_list:
                ok &= np.abs(sh - c * V[:, 0]) >= cfg.avoid_tol * np.abs(c * V[:, 0])
        got_V.append(V[ok][: n - have])
        got_s.append(sh[ok][: n - have])
        have += min(int(ok.sum()), n - have)
    return np.vstack(got_V), np.concatenate(got_s)


def _initial_candidates(cfg, rng, n):
    V, sh = _sample_points(cfg, rng, n)
    coef = cfg.phase.coefficients()
    deg = cfg.phase.degree
    phi = _phase(coef, V, deg)
    mmax = max(cfg.M_grid)
    if cfg.alpha_fixed is not None:
        alpha = np.full(n, float(cfg.alpha_fixed))
    else:
        near = rng.random(n) < 0.6
        jitter = rng.uniform(-1.0, 1.0, n) * mmax
        scale = np.max(np.abs(V), axis=1) ** deg * cfg.n_vars
        far = log_uniform(rng, 1.0, np.maximum(scale, 2.0)) * rng.choice([-1.0, 1.0], n)
        alpha = np.where(near, phi + jitter, far)
    fixed = V[:, list(cfg.fixed_vars)]
    return fixed, alpha, sh


def _perturb(cfg, cand, rng, step, n):
    f = np.repeat(cand.fixed[None, :], n, axis=0)
    f = f * np.exp(step * rng.standard_normal(f.shape))
    mmax = max(cfg.M_grid)
    if cfg.alpha_fixed is None:
        al = cand.alpha + step * (abs(cand.alpha) * 0.1 + mmax) * rng.standard_normal(n)
    else:
        al = np.full(n, cand.alpha)
    if cfg.shift_fixed is None:
        sh = cand.shift * np.exp(step * rng.standard_normal(n)) + step * rng.standard_normal(n)
        inc = [k for k, i in enumerate(cfg.fixed_vars) if i >= 1]
        if inc:
            cap = cfg.shift_cap * np.min(np.abs(f[:, inc]), axis=1)
            sh = np.clip(sh, -cap, cap)
        else:
            sh = np.zeros(n)
    else:
        sh = np.full(n, cand.shift)
    return f, al, sh


def _admissible(cfg, fixed, shift):
    ok = np.ones(fixed.shape[0], dtype=bool)
    if cfg.avoid_list and 0 in cfg.fixed_vars:
        xi = fixed[:, list(cfg.fixed_vars).index(0)]
        for c in cfg.avoid_list:
            ok &= np.abs(shift - c * xi) >= cfg.avoid_tol * np.abs(c * xi)
    # the fixed variables alone must not violate the region
    V = np.zeros((fixed.shape[0], cfg.n_vars))
    V[:, list(cfg.fixed_vars)] = fixed
    A = np.abs(V)
    fx = set(cfg.fixed_vars)
    ok &= np.all(A <= cfg.xi_max, axis=1)
    for i, j, c in cfg.region:
        if j in (FLOOR, STRICT):
            if i in fx:
                ok &= A[:, i] > c if j == STRICT else A[:, i] >= c
        elif i in fx and j in fx:
            ok &= A[:, i] >= c * A[:, j]
    return ok


@dataclass
class SupResult:
    M: tuple
    sup: np.ndarray
    argmax: list
    half_sups: np.ndarray
    tail_bound: list
    n_samples: int

    @property
    def stable(self) -> bool:
        a, b = self.half_sups
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(a - b) / np.maximum(np.maximum(a, b), 1e-300)
        return bool(np.all(rel <= 0.3))


def _coarse(cfg, fixed, alpha, shift, weight, chunk=16, workers=1):
    starts = list(range(0, fixed.shape[0], chunk))

    def work(b, size):
        sl = slice(starts[b], starts[b] + size)
        return _integrate_fixed_panels(cfg, fixed[sl], shift[sl], alpha[sl], cfg.M_grid, weight)

    sizes = [min(chunk, fixed.shape[0] - s) for s in starts]
    parts = map_blocks(work, sizes, workers)
    return np.vstack(parts) if parts else np.zeros((0, len(cfg.M_grid)))


def sup_restricted_integral(cfg: FreConfig, M=None, workers: int = 1) -> SupResult:
    """Empirical sup over fixed variables, alpha and shift, for every M in the grid.

    Stage 1 ranks ``n_samples`` random configurations with a coarse rule. Stage 2
    improves the best few per M by local random search. Every surviving
    candidate is then re-integrated accurately at every M, and the sup is the
    max over candidates, so the reported curve is nondecreasing in M.
    Threads (``workers``) only split the stage-1 batch; results do not depend
    on their number.
    """
    if M is not None:
        cfg = replace(cfg, M_grid=tuple(np.atleast_1d(M).astype(float)))
    if cfg.n_samples < 10:
        raise ValueError("n_samples too small")
    weight = WEIGHTS[cfg.multiplier]
    rng = block_rng(cfg.seed, 0, 0)
    fixed, alpha, shift = _initial_candidates(cfg, rng, cfg.n_samples)
    coarse = _coarse(cfg, fixed, alpha, shift, weight, workers=workers)
    half = cfg.n_samples // 2
    half_sups = np.stack([coarse[:half].max(axis=0), coarse[half:].max(axis=0)])
    pool = set()
    for m in range(len(cfg.M_grid)):
        for i in np.argsort(-coarse[:, m], kind="stable")[: cfg.refine_top]:
            pool.add(int(i))
    cands = [Candidate(fixed[i].copy(), float(alpha[i]), float(shift[i])) for i in sorted(pool)]
    best_m = [int(np.argmax(coarse[i] / np.maximum(coarse[:, :].max(axis=0), 1e-300))) for i in sorted(pool)]
    cur = [coarse[i, m] for i, m in zip(sorted(pool), best_m)]
    rrng = block_rng(cfg.seed, 1, 0)
    for r in range(cfg.refine_rounds):
        step = 0.2 * 0.8**r
        for c_i, cand in enumerate(cands):
            f, al, sh = _perturb(cfg, cand, rrng, step, cfg.refine_proposals)
            ok = _admissible(cfg, f, sh)
            if not np.any(ok):
                continue
            vals = _coarse(cfg, f[ok], al[ok], sh[ok], weight)[:, best_m[c_i]]
            j = int(np.argmax(vals))
            if vals[j] > cur[c_i]:
                idx = np.nonzero(ok)[0][j]
                cands[c_i] = Candidate(f[idx], float(al[idx]), float(sh[idx]))
                cur[c_i] = float(vals[j])
    acc = np.array([_integrate_adaptive(cfg, c.fixed, c.shift, c.alpha, np.array(cfg.M_grid), weight,
                                        rtol=1e-4) for c in cands])
    best = np.argmax(acc, axis=0)
    sup = acc[best, np.arange(len(cfg.M_grid))]
    argmax = [cands[b].as_dict(cfg) for b in best]
    tails = []
    for b in best:
        c = cands[b]
        if cfg.compact and cfg.n_vars * np.max(np.abs(c.fixed)) + abs(c.shift) <= cfg.xi_max:
            tails.append(0.0)
        else:
            try:
                tails.append(restricted_integral(cfg, c.fixed, c.alpha, c.shift, cfg.M_grid,
                                                 estimate_tail=True).tail_bound)
            except NonintegrableDirection:
                tails.append(float("inf"))
    return SupResult(cfg.M_grid, sup, argmax, half_sups, tails, cfg.n_samples)


# -- scaling exponent ------------------------------------------------------------

@dataclass
class FreReport:
    name: str
    theta: float
    M: tuple
    sup: np.ndarray
    beta: float
    residual: float
    bprime: tuple
    monotone: bool
    stable: bool
    flagged: bool
    argmax: list
    tail_bound: list
    fit_tol: float

    def as_dict(self):
        return {
            "name": self.name, "theta": self.theta, "beta": self.beta, "residual": self.residual,
            "bprime_lo": self.bprime[0], "bprime_hi": self.bprime[1],
            "bprime_nonempty": self.bprime[1] > self.bprime[0],
            "monotone": self.monotone, "stable": self.stable, "flagged": self.flagged,
            "fit_tol": self.fit_tol,
            "rows": [{"M": m, "sup": float(s), "argmax": a, "tail_bound": t}
                     for m, s, a, t in zip(self.M, self.sup, self.argmax, self.tail_bound)],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def fit_beta(M, sup):
    M, sup = np.asarray(M, float), np.asarray(sup, float)
    if np.any(sup <= 0):
        raise ValueError("sup estimates must be positive to fit a power law")
    (beta, c), res, *_ = np.polyfit(np.log(M), np.log(sup), 1, full=True)
    resid = float(np.sqrt(res[0] / M.size)) if res.size else 0.0
    return float(beta), resid


def scaling_exponent(cfg: FreConfig, fit_tol: float = 0.05, noise: float = 1e-3,
                     workers: int = 1) -> FreReport:
    M = np.asarray(cfg.M_grid)
    if M.size < 3 or np.log10(M[-1] / M[0]) < 2 - 1e-9:
        raise ValueError("M_grid must have >= 3 points spanning at least two decades")
    res = sup_restricted_integral(cfg, workers=workers)
    beta, resid = fit_beta(M, res.sup)
    monotone = bool(np.all(np.diff(res.sup) >= -noise * res.sup[1:]))
    flagged = bool(beta > 1 + fit_tol or not monotone)
    return FreReport(cfg.name, cfg.theta, cfg.M_grid, res.sup, beta, resid,
                     (-0.5, -beta / 2), monotone, res.stable, flagged, res.argmax,
                     res.tail_bound, fit_tol)


# -- closed-form oracles -------------------------------------------------------------

def oracle_1d(M_grid=None, **kw) -> FreConfig:
    """Phi = p**2 with unit multiplier: the integral is 2 sqrt(alpha + M) - ... ; 2 sqrt(M) at alpha=0."""
    phase = PhaseSpec(QUADRATIC, (0, 0), hyperplane=(1, 1))
    kw.setdefault("sample_range", (1.0, 10.0))
    kw.setdefault("shift_cap", 0.0)
    return FreConfig(phase, "unit", (1,), M_grid=M_grid or tuple(np.geomspace(1, 100, 7)),
                     name="oracle_1d", **kw)


def oracle_2d(N: float = 100.0, M_grid=None, **kw) -> FreConfig:
    """Phi = p**2 + q**2 on the box |p|, |q| <= N, unit multiplier."""
    phase = PhaseSpec(QUADRATIC, (1, 0, 0), hyperplane=(1, 1, 1))
    kw.setdefault("sample_range", (1.0, 2.0))
    kw.setdefault("shift_cap", 0.0)
    region = ((0, FLOOR, 0.0),)
    cfg = FreConfig(phase, "unit", (3,), M_grid=M_grid or tuple(np.geomspace(1, 100, 7)),
                    region=region, xi_max=float(N), name="oracle_2d", **kw)
    return cfg


def auxiliary_square_integral(alpha: float, M: float, N: float, sign: int) -> float:
    """Area of {|p|, |q| < N : |p**2 + sign q**2 - alpha| < M} by exact inner measure.

    For each p the admissible q**2 form an interval, so the inner measure is
    closed form; the outer integral is done with scipy's adaptive quadrature
    split at every point where that interval changes shape.
    """
    from scipy.integrate import quad

    if M <= 0 or N <= 0:
        raise ValueError("M and N must be positive")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")

    def qlen(p):
        if sign > 0:
            lo, hi = alpha - M - p * p, alpha + M - p * p
        else:
            lo, hi = p * p - alpha - M, p * p - alpha + M
        lo, hi = max(lo, 0.0), min(hi, N * N)
        return 2.0 * (math.sqrt(hi) - math.sqrt(lo)) if hi > lo else 0.0

    cands = [alpha - M, alpha + M, alpha - M - N * N, alpha + M - N * N,
             alpha + M + N * N, alpha - M + N * N]
    pts = sorted({math.sqrt(x) for x in cands if 0 < x < N * N})
    edges = [0.0] + pts + [float(N)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += quad(qlen, a, b, limit=200, epsabs=0, epsrel=1e-10)[0]
    return 2.0 * total


# -- stationary analysis -----------------------------------------------------------

def stationary_scan(spec: PhaseSpec, direction: int, eliminate: int | None = None) -> list:
    """Critical sets of Phi along one free variable on the hyperplane.

    The other incoming variables stay fixed except ``eliminate`` (default: the
    highest index different from ``direction``), which absorbs the constraint.
    Derivatives are reported in terms of ``xi_direction`` and ``xi_eliminate``
    via the chain rule d xi_e / d xi_d = -a_d / a_e.
    """
    import sympy as sp

    nv = spec.arity + 1
    if not 0 <= direction < nv:
        raise ValueError("direction out of range")
    if eliminate is None:
        eliminate = max(i for i in range(nv) if i != direction)
    if eliminate == direction:
        raise ValueError("cannot eliminate the direction variable")
    xs = sp.symbols(f"xi0:{nv}", real=True)
    coef = spec.coefficients()
    a = spec.constraint()
    phi = sum(sp.Integer(int(c)) * x**spec.degree for c, x in zip(coef, xs))
    d, e = xs[direction], xs[eliminate]
    de_dd = sp.Integer(int(-a[direction] / a[eliminate]))

    def total(expr):
        return sp.expand(sp.diff(expr, d) + sp.diff(expr, e) * de_dd)

    first = total(phi)
    second = total(first)
    out = []
    if first == 0:
        return [{"set": "everywhere", "first": "0", "second": "0", "kind": "degenerate"}]
    sols = sp.solve(sp.Eq(first, 0), d, dict=False)
    if not sols:
        # no solution in the direction variable: the derivative is independent of it
        kind = "degenerate" if second == 0 else "nondegenerate"
        return [{"set": f"{sp.sstr(first)} = 0", "first": sp.sstr(first),
                 "second": sp.sstr(second), "kind": kind}]
    for s in sols:
        sec = sp.simplify(second.subs(d, s))
        kind = "degenerate" if sec == 0 else "nondegenerate"
        out.append({"set": f"{d} = {sp.sstr(s)}", "first": sp.sstr(first),
                    "second": sp.sstr(sec), "kind": kind})
    return out


def range_divergence(cfg: FreConfig, caps=(1e3, 1e4, 1e5), M: float = 10.0,
                     band: float = 3.0, growth_tol: float = 0.1, workers: int = 1) -> dict:
    """Sup at fixed M when the largest frequency lies in [cap/band, cap], for growing caps.

    A valid estimate is uniform in the frequencies, so the sup stays bounded
    from band to band; a multiplier that is too strong makes it grow with the
    scale. The truncation is widened with the band so the region stays inside
    it. Returns the sups, the log-log growth rate between the end caps and
    whether it exceeds ``growth_tol``.
    """
    caps = tuple(float(c) for c in caps)
    if len(caps) < 2 or any(b <= a for a, b in zip(caps[:-1], caps[1:])):
        raise ValueError("caps must be increasing")
    sups = []
    for c in caps:
        sub = replace(cfg, sample_range=(cfg.sample_range[0], c), top_floor=c / band, M_grid=(float(M),),
                      xi_max=max(cfg.xi_max, 1.1 * (cfg.n_vars + 1) * c))
        sups.append(float(sup_restricted_integral(sub, workers=workers).sup[0]))
    rate = float(np.log(sups[-1] / sups[0]) / np.log(caps[-1] / caps[0]))
    return {"name": cfg.name, "theta": cfg.theta, "M": float(M), "caps": list(caps), "sups": sups,
            "growth_rate": rate, "diverges": bool(rate > growth_tol)}

"""Monte-Carlo check of the multiplier-defect bound

    |1 - m(xi) / prod m(xi_j)|  <=  C sigma**theta |xi_1|**(theta-1) |xi_2|,
    xi = xi_1 + ... + xi_k,  |xi_1| >= |xi_2| >= ... >= |xi_k|,

for the smooth weight m = m_sigma. Both sides depend on (sigma, xi_j) only
through eta_j = sigma*xi_j, so sampling is done in eta and sigma is attached
afterwards. Samples are stratified by the regimes that decide the size of the
defect:

    "1.1"  |eta_1| <= 1 and |eta| <= 1   (all weights equal 1; defect is 0)
    "1.2"  |eta_1| <= 1 < |eta|
    "2"    |eta_1| > 1 >= |eta_2|
    "3"    |eta_2| > 1
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .gevrey_weights import Weight, eval_weight, smooth_log_profile
from .rng import block_rng, block_sizes, log_uniform, map_blocks

STRATA = ("1.1", "1.2", "2", "3")
XI_RANGE = (1e-3, 1e3)
SIGMA_RANGE = (1e-4, 1.0)
# fraction of samples in strata 1.2, 2, 3 that put |eta_1| near the weight's kinks
ENRICH_FRACTION = 0.25
ENRICH_BAND = (0.5, 4.0)
STABILITY_TOL = 0.25
REFINE_ROUNDS = 40
REFINE_PROPOSALS = 32
REFINE_STARTS = 16
REFINE_STREAM = 16


@dataclass(frozen=True)
class DefectSample:
    sigma: float
    freqs: tuple
    theta: float
    defect: float
    bound: float
    ratio: float


def _sorted_desc(freqs):
    f = np.asarray(freqs, dtype=float)
    order = np.argsort(-np.abs(f), axis=-1, kind="stable")
    return np.take_along_axis(f, order, axis=-1)


def _defect_eta(eta):
    """Defect for rows of scaled frequencies, computed in log space."""
    total = np.sum(eta, axis=-1)
    gap = smooth_log_profile(total) - np.sum(smooth_log_profile(eta), axis=-1)
    return np.abs(np.expm1(gap))


def multiplier_defect(sigma: float, freqs) -> float:
    f = np.asarray(freqs, dtype=float)
    if not sigma > 0 or not np.isfinite(sigma):
        raise ValueError("sigma must be positive and finite")
    if f.ndim != 1 or f.size < 2:
        raise ValueError("need at least two frequencies")
    if not np.all(np.isfinite(f)):
        raise ValueError("frequencies must be finite")
    return float(_defect_eta(sigma * f))


def multiplier_defect_direct(sigma: float, freqs) -> float:
    """Second evaluation path: plain products of weight values."""
    w = Weight("smooth", sigma)
    f = np.asarray(freqs, dtype=float)
    return float(abs(1.0 - eval_weight(w, f.sum()) / np.prod(eval_weight(w, f))))


def _ratio(defect, bound):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bound > 0, defect / np.where(bound > 0, bound, 1.0), 0.0)
    # a positive defect against a zero bound is reported as inf, never hidden
    return np.where((bound == 0) & (defect > 0), np.inf, r)


def defect_ratio(sigma: float, theta: float, freqs) -> DefectSample:
    if not 1.0 <= theta <= 2.0:
        raise ValueError("theta must lie in [1, 2]")
    return _defect_ratio(sigma, theta, freqs)


def _defect_ratio(sigma, theta, freqs):
    f = _sorted_desc(freqs)
    defect = multiplier_defect(sigma, f)
    bound = float(sigma**theta * abs(f[0]) ** (theta - 1) * abs(f[1]))
    ratio = float(_ratio(np.array(defect), np.array(bound)))
    return DefectSample(float(sigma), tuple(float(x) for x in f), float(theta), defect, bound, ratio)


def classify(eta) -> np.ndarray:
    """Stratum label for each row of descending-sorted scaled frequencies."""
    eta = np.atleast_2d(eta)
    a1, a2 = np.abs(eta[:, 0]), np.abs(eta[:, 1])
    tot = np.abs(eta.sum(axis=1))
    out = np.full(eta.shape[0], "3", dtype=object)
    out[(a1 > 1) & (a2 <= 1)] = "2"
    out[(a1 <= 1) & (tot > 1)] = "1.2"
    out[(a1 <= 1) & (tot <= 1)] = "1.1"
    return out


# -- stratified sampler --------------------------------------------------------

def _eta_bounds():
    lo = SIGMA_RANGE[0] * XI_RANGE[0]
    hi = SIGMA_RANGE[1] * XI_RANGE[1]
    return lo, hi


def _draw_magnitudes(rng, stratum, k, n, eta_max=None):
    """Descending magnitudes |eta_1| >= ... >= |eta_k| aimed at one stratum."""
    lo, hi = _eta_bounds()
    if eta_max is not None:
        hi = min(hi, eta_max)
    spread = XI_RANGE[1] / XI_RANGE[0]
    enrich = rng.random(n) < ENRICH_FRACTION
    if stratum == "1.1":
        a1 = log_uniform(rng, lo, 1.0, n)
    elif stratum == "1.2":
        a1 = log_uniform(rng, 1.0 / k, 1.0, n)
        a1 = np.where(enrich, log_uniform(rng, max(ENRICH_BAND[0], 1.0 / k), 1.0, n), a1)
    else:
        a1 = log_uniform(rng, 1.0, hi, n)
        a1 = np.where(enrich, log_uniform(rng, 1.0, ENRICH_BAND[1], n), a1)
    floor = np.maximum(a1 / spread, lo)
    if stratum == "2":
        a2 = log_uniform(rng, floor, np.minimum(a1, 1.0))
    elif stratum == "3":
        a2 = log_uniform(rng, 1.0, a1)
    else:
        a2 = None
    rest_top = a1 if a2 is None else a2
    # mix log-uniform (covers tiny scales) with linear-uniform (covers comparable sizes)
    m = k - 1 if a2 is None else k - 2
    u = log_uniform(rng, floor[:, None], rest_top[:, None], (n, m)) if m else np.empty((n, 0))
    lin = rng.random((n, m)) * rest_top[:, None]
    pick = rng.random((n, m)) < 0.5
    rest = np.where(pick & (lin >= floor[:, None]), lin, u)
    rest = -np.sort(-rest, axis=1)
    cols = [a1[:, None]] + ([a2[:, None]] if a2 is not None else []) + [rest]
    return np.hstack(cols)


def _sample_block(seed, stratum_index, block, k, size, eta_max=None):
    """Exactly ``size`` accepted samples of one stratum, deterministic in its arguments."""
    rng = block_rng(seed, stratum_index, block)
    stratum = STRATA[stratum_index]
    got_eta, got_sigma, have = [], [], 0
    while have < size:
        n = 2 * (size - have) + 64
        mags = _draw_magnitudes(rng, stratum, k, n, eta_max)
        signs = rng.choice([-1.0, 1.0], size=mags.shape)
        eta = mags * signs
        keep = classify(eta) == stratum
        # attach sigma so that every |xi_j| = |eta_j|/sigma lies in XI_RANGE
        s_lo = np.maximum(SIGMA_RANGE[0], mags[:, 0] / XI_RANGE[1])
        s_hi = np.minimum(SIGMA_RANGE[1], mags[:, -1] / XI_RANGE[0])
        keep &= s_lo <= s_hi
        sig = log_uniform(rng, s_lo, np.maximum(s_hi, s_lo))
        eta, sig = eta[keep][: size - have], sig[keep][: size - have]
        got_eta.append(eta)
        got_sigma.append(sig)
        have += eta.shape[0]
    return np.vstack(got_eta), np.concatenate(got_sigma)


@dataclass
class StratumResult:
    name: str
    n: int
    sup: float
    first_half_sup: float
    second_half_sup: float
    argmax_sigma: float
    argmax_freqs: tuple
    top: list

    @property
    def stable(self) -> bool:
        return _stable(self.first_half_sup, self.second_half_sup)

    def as_dict(self):
        return {
            "n": self.n, "sup": self.sup, "first_half_sup": self.first_half_sup,
            "second_half_sup": self.second_half_sup, "stable": self.stable,
            "argmax_sigma": self.argmax_sigma, "argmax_freqs": list(self.argmax_freqs),
        }


def _stable(first, second):
    if first == 0:
        return second == 0
    return bool(np.isfinite(second) and second <= (1.0 + STABILITY_TOL) * first)


@dataclass
class SupReport:
    k: int
    theta: float
    n_samples: int
    seed: int
    strata: dict

    @property
    def sup(self) -> float:
        return max(s.sup for s in self.strata.values())

    @property
    def stable(self) -> bool:
        first = max(s.first_half_sup for s in self.strata.values())
        second = max(s.second_half_sup for s in self.strata.values())
        return _stable(first, second) and all(s.stable for s in self.strata.values())

    def as_dict(self):
        return {
            "k": self.k, "theta": self.theta, "n_samples": self.n_samples, "seed": self.seed,
            "sup": self.sup, "stable": self.stable,
            "strata": {name: s.as_dict() for name, s in self.strata.items()},
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        """Largest-ratio samples of each stratum (the full sample set is not kept)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stratum", "sigma"] + [f"xi_{j + 1}" for j in range(self.k)]
                       + ["theta", "defect", "bound", "ratio"])
            for name, s in self.strata.items():
                for d in s.top:
                    w.writerow([name, repr(d.sigma), *map(repr, d.freqs), repr(d.theta),
                                repr(d.defect), repr(d.bound), repr(d.ratio)])


def _eta_ratio(eta, theta):
    defect = _defect_eta(eta)
    bound = np.abs(eta[:, 0]) ** (theta - 1) * np.abs(eta[:, 1])
    return _ratio(defect, bound), defect, bound


def _feasible(eta, stratum, top=None):
    lo, hi = _eta_bounds()
    a = np.abs(eta)
    hi = hi if top is None else top
    ok = (classify(eta) == stratum) & (a[:, 0] <= hi) & (a[:, -1] >= lo)
    return ok & (a[:, 0] / np.maximum(a[:, -1], 1e-300) <= XI_RANGE[1] / XI_RANGE[0])


def _refine(eta, theta, stratum, rng, rounds=REFINE_ROUNDS, proposals=REFINE_PROPOSALS, top=None):
    """Greedy multiplicative random search started from the given rows.

    Signs are kept, magnitudes are perturbed in log space with a shrinking step;
    moves must stay inside the stratum and the sampled scale range.
    """
    best = eta.copy()
    val = _eta_ratio(best, theta)[0]
    for r in range(rounds):
        step = 0.3 * 0.85**r
        prop = np.repeat(best, proposals, axis=0)
        prop = prop * np.exp(step * rng.standard_normal(prop.shape))
        prop = _sorted_desc(prop)
        pv = np.where(_feasible(prop, stratum, top), _eta_ratio(prop, theta)[0], -np.inf)
        pv = pv.reshape(best.shape[0], proposals)
        j = np.argmax(pv, axis=1)
        cand = pv[np.arange(best.shape[0]), j]
        better = cand > val
        rows = np.arange(best.shape[0]) * proposals + j
        best[better] = prop[rows[better]]
        val = np.where(better, cand, val)
    return best, val


def _attach_sigma(eta_row):
    a = np.abs(eta_row)
    s_lo = max(SIGMA_RANGE[0], a[0] / XI_RANGE[1])
    s_hi = min(SIGMA_RANGE[1], a[-1] / XI_RANGE[0])
    return float(np.sqrt(s_lo * max(s_hi, s_lo)))


def _half_sup(eta, sig, ratio, theta, stratum, rng, n_start, top=None):
    order = np.argsort(-ratio, kind="stable")[:n_start]
    if stratum == "1.1" or ratio.size == 0:
        return float(ratio.max(initial=0.0)), None
    start = eta[order]
    ref, val = _refine(start, theta, stratum, rng, top=top)
    i = int(np.argmax(val))
    if val[i] > ratio[order[0]]:
        return float(val[i]), (ref[i], _attach_sigma(ref[i]))
    return float(ratio[order[0]]), (eta[order[0]], sig[order[0]])


def sup_defect_ratio(k: int, theta: float, n_samples: int, seed: int, workers: int = 1,
                     n_top: int = 20, refine: bool = True, eta_max: float | None = None,
                     allow_any_theta: bool = False) -> SupReport:
    """Empirical sup of the defect ratio, split evenly across the four strata.

    Each stratum's samples are split into two halves. Each half gets its own
    running max, improved by a local random search started from that half's
    largest ratios. If the second half's value exceeds the first by more than
    25%, the estimate is flagged unstable. ``eta_max`` caps |sigma*xi_1| below
    the default range. ``allow_any_theta`` lifts the [1, 2] restriction so
    negative controls can run.
    """
    if not 2 <= k <= 8:
        raise ValueError("k must lie in 2..8")
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    if not allow_any_theta and not 1.0 <= theta <= 2.0:
        raise ValueError("theta must lie in [1, 2]")
    per = n_samples // len(STRATA)
    strata = {}
    for si, name in enumerate(STRATA):
        sizes = block_sizes(per)

        def work(b, size, si=si):
            return _sample_block(seed, si, b, k, size, eta_max)

        parts = map_blocks(work, sizes, workers)
        eta = np.vstack([p[0] for p in parts])
        sig = np.concatenate([p[1] for p in parts])
        ratio, defect, bound = _eta_ratio(eta, theta)
        half = ratio.size // 2
        sups, args = [], []
        for h, sl in enumerate((slice(0, half), slice(half, None))):
            if refine:
                rng = block_rng(seed, REFINE_STREAM + si, h)
                v, arg = _half_sup(eta[sl], sig[sl], ratio[sl], theta, name, rng, REFINE_STARTS, eta_max)
            else:
                j = int(np.argmax(ratio[sl]))
                v, arg = float(ratio[sl][j]), (eta[sl][j], sig[sl][j])
            sups.append(v)
            args.append(arg)
        order = np.argsort(-ratio, kind="stable")[:n_top]
        top = [_as_sample(eta[i], sig[i], theta) for i in order]
        h = int(np.argmax(sups))
        if args[h] is not None:
            best = _as_sample(args[h][0], args[h][1], theta)
            if best.ratio > top[0].ratio:
                top.insert(0, best)
        strata[name] = StratumResult(
            name, int(ratio.size), max(sups), sups[0], sups[1], top[0].sigma, top[0].freqs, top)
    return SupReport(k, float(theta), per * len(STRATA), int(seed), strata)


def _as_sample(eta, sigma, theta):
    r, d, b = _eta_ratio(np.atleast_2d(eta), theta)
    return DefectSample(float(sigma), tuple(float(e / sigma) for e in eta), float(theta),
                        float(d[0]), float(b[0]), float(r[0]))


def negative_control(k: int, theta: float, n_samples: int, seed: int,
                     eta_caps=(1e1, 1e2, 1e3), workers: int = 1) -> dict:
    """Sup of the ratio as the sampled scale range widens.

    A bound that genuinely fails shows a sup growing with the cap; a valid one
    saturates. Returns caps, sups and the log-log growth rate between the ends.
    """
    sups = [sup_defect_ratio(k, theta, n_samples, seed, workers, eta_max=c,
                             allow_any_theta=True).sup for c in eta_caps]
    rate = float(np.log(sups[-1] / sups[0]) / np.log(eta_caps[-1] / eta_caps[0]))
    return {"k": k, "theta": theta, "eta_caps": list(eta_caps), "sups": sups,
            "growth_rate": rate, "grows": bool(sups[-1] > (1.0 + STABILITY_TOL) * sups[0])}

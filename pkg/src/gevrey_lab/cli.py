"""Command-line driver: one flat config file per experiment, reproducible outputs.

    python -m gevrey_lab <subcommand> [--config FILE] [--out DIR] [--seed N] [--quick] [--workers N]

Subcommands: solve | drift-scan | multiplier-scan | fre-scan | extension | radius | verify.

Exit codes: 0 success, 2 config error (nothing written), 3 numerical abort,
4 flagged-unstable estimate (artifacts still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import acceptance
from . import extension_engine as ext
from . import fre_lab as fre
from . import multiplier_check as mc
from .evolution import DriftFitError, EvolutionConfig, NumericalAbort, drift_exponent, run_experiment
from .gevrey_weights import InsufficientDecayBand, estimate_radius
from .initial_data import FAMILIES, build
from .spectral_core import make_grid

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_UNSTABLE = 0, 2, 3, 4

SUBCOMMANDS = ("solve", "drift-scan", "multiplier-scan", "fre-scan", "extension", "radius", "verify")


class ConfigError(ValueError):
    pass


# -- schema ----------------------------------------------------------------------
# key -> (accepted types, default). A default of REQUIRED makes the key mandatory.

REQUIRED = object()
NUM = (int, float)

_DATA = {
    "data": (str, "sech"),
    "amplitude": (NUM, 1.0),
    "rate": (NUM, None),
    "width": (NUM, None),
    "xi0": (NUM, None),
    "velocity": (NUM, None),
}
_DATA_PARAMS = {"sech": ("amplitude", "rate", "velocity"), "gaussian": ("amplitude", "width"),
                "single_mode": ("amplitude", "xi0")}

_EQ = {
    "equation": (str, REQUIRED),
    "power": (int, None),
    "n_points": (int, 512),
    "box_length": (NUM, 40 * math.pi),
    "dt": (NUM, 1e-3),
    "scheme": (str, "etdrk4"),
    "edge_floor": (NUM, 1e-10),
}

SCHEMAS = {
    "solve": {**_EQ, **_DATA, "t_end": (NUM, 1.0), "stride": (int, 10), "sigmas": (list, [0.0])},
    "drift-scan": {**_EQ, **_DATA, "horizon": (NUM, 1.0), "sigma_xi_min": (NUM, 0.5),
                   "sigma_xi_max": (NUM, 20.0), "n_sigma": (int, 16), "noise_factor": (NUM, 10.0)},
    "multiplier-scan": {"k": (int, 2), "thetas": (list, [1.0, 1.5, 1.99]), "n_samples": (int, 1_000_000),
                        "seeds": (list, None), "control_thetas": (list, [2.5, 0.5]),
                        "control_caps": (list, [10.0, 100.0, 1000.0])},
    "fre-scan": {"entry": (str, REQUIRED), "theta": (NUM, 1.5), "signs": (list, None), "case": (str, None),
                 "ll": (NUM, 0.25), "M_min": (NUM, 1.0), "M_max": (NUM, 100.0), "n_M": (int, 7),
                 "n_samples": (int, 1000), "shift_cap": (NUM, 0.5), "avoid_list": (list, []),
                 "xi_max": (NUM, 1e3), "divergence_check": (bool, False)},
    "extension": {"equation": (str, "gkdv"), "power": (int, 4), "sigma0": (NUM, 1.0), "E0": (NUM, 1.0),
                  "big_M": (NUM, 1.0), "C": (NUM, 1.0), "c0": (NUM, 1.0), "a": (NUM, 2.0),
                  "theta": (NUM, 1.5), "nls_mode": (str, "proof"), "T_decades": (NUM, 3.0),
                  "n_T": (int, 25)},
    "radius": {**_DATA, "n_points": (int, 1024), "box_length": (NUM, 80 * math.pi),
               "complex": (bool, False), "fit_lo": (NUM, None), "fit_hi": (NUM, None),
               "noise_floor": (NUM, None)},
    "verify": {"only": (list, None), "mutate": (bool, False)},
}
COMMON = {"seed": (int, 0), "out": (str, None)}


def _check_type(key, value, types):
    if types is NUM:
        ok = isinstance(value, NUM) and not isinstance(value, bool)
    elif types is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, types)
    if not ok:
        raise ConfigError(f"key {key!r}: expected {getattr(types, '__name__', 'number')}, got {value!r}")
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"key {key!r} must be finite")


def validate(sub: str, doc: dict | None) -> dict:
    """Fill defaults and reject unknown keys, wrong types and inconsistent values."""
    schema = {**SCHEMAS[sub], **COMMON}
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of keys to values")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {sub}: {unknown}")
    cfg = {}
    for key, (types, default) in schema.items():
        if key in doc and doc[key] is not None:
            _check_type(key, doc[key], types)
            cfg[key] = doc[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            cfg[key] = default
    _semantic(sub, cfg)
    return cfg


def _semantic(sub, cfg):
    if "data" in cfg:
        fam = cfg["data"]
        if fam not in FAMILIES:
            raise ConfigError(f"data must be one of {FAMILIES}")
        allowed = set(_DATA_PARAMS[fam])
        extra = [k for k in ("rate", "width", "xi0", "velocity") if cfg[k] is not None and k not in allowed]
        if extra:
            raise ConfigError(f"keys {extra} do not apply to {fam} data")
    if "equation" in cfg:
        if cfg["equation"] not in ("gkdv", "nls"):
            raise ConfigError("equation must be 'gkdv' or 'nls'")
        if cfg.get("power") is None:
            cfg["power"] = 4 if cfg["equation"] == "gkdv" else 3
    for key in ("sigmas", "thetas", "control_thetas", "control_caps", "avoid_list", "signs", "seeds", "only"):
        if cfg.get(key) is not None:
            for v in cfg[key]:
                _check_type(key, v, NUM)
    if sub == "solve" and any(s < 0 for s in cfg["sigmas"]):
        raise ConfigError("sigmas must be nonnegative")
    if sub == "drift-scan" and not 0 < cfg["sigma_xi_min"] < cfg["sigma_xi_max"]:
        raise ConfigError("need 0 < sigma_xi_min < sigma_xi_max")
    if sub == "fre-scan":
        if cfg["entry"] not in fre.CATALOG:
            raise ConfigError(f"entry must be one of {sorted(fre.CATALOG)}")
        if not 1 <= cfg["M_min"] < cfg["M_max"]:
            raise ConfigError("need 1 <= M_min < M_max")
    if sub == "verify" and cfg["only"] is not None:
        if any(int(v) != v or not 1 <= v <= 9 for v in cfg["only"]):
            raise ConfigError("only must list criterion numbers 1..9")


def load_config(sub, path) -> dict:
    """Read a YAML/JSON config or a manifest written by a previous run."""
    if path is None:
        return validate(sub, {})
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if isinstance(doc, dict) and "manifest_version" in doc:
        if doc.get("subcommand") != sub:
            raise ConfigError(f"manifest was written by {doc.get('subcommand')!r}, not {sub!r}")
        doc = doc["config"]
    return validate(sub, doc)


# -- output helpers ----------------------------------------------------------------

def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o)}")


class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.root / name

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])

    def columns(self, name, x, y, header):
        """Two-column plot data."""
        with open(self.path(name), "w") as fh:
            fh.write(f"# {header}\n")
            for a, b in zip(x, y):
                fh.write(f"{float(a):.17g} {float(b):.17g}\n")


def config_hash(sub, cfg) -> str:
    blob = json.dumps({"subcommand": sub, "config": cfg}, sort_keys=True, default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out: Outputs, sub, cfg, constants, status):
    files = {}
    for name in sorted(set(out.files)):
        with open(out.root / name, "rb") as fh:
            files[name] = hashlib.sha256(fh.read()).hexdigest()
    doc = {"manifest_version": 1, "package_version": __version__, "subcommand": sub,
           "config": cfg, "config_hash": config_hash(sub, cfg), "seed": cfg["seed"],
           "constants": constants, "status": status, "files": files}
    with open(out.root / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


# -- subcommands ---------------------------------------------------------------------

def _evolution(cfg, t_end):
    try:
        grid = make_grid(cfg["n_points"], cfg["box_length"])
        ecfg = EvolutionConfig(cfg["equation"], cfg["power"], grid, dt=cfg["dt"], t_end=t_end,
                               scheme=cfg["scheme"], edge_floor=cfg["edge_floor"], stride=cfg.get("stride", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return grid, ecfg


def _data(cfg, grid, complex_field):
    spec = {"family": cfg["data"]}
    for k in _DATA_PARAMS[cfg["data"]]:
        if cfg[k] is not None:
            spec[k] = cfg[k]
    return build(spec, grid, complex_field)


def _spectrum_columns(out, name, field):
    xi = field.grid.xi
    c = np.abs(field.coeffs)
    keep = c > 0
    order = np.argsort(xi[keep], kind="stable")
    out.columns(name, xi[keep][order], np.log(c[keep][order]), "xi log|u_hat|")


def cmd_solve(cfg, out, args):
    grid, ecfg = _evolution(cfg, cfg["t_end"])
    u0 = _data(cfg, grid, ecfg.equation == "nls")
    constants = {"xi_max": ecfg.xi_max, "dealias_cutoff": grid.dealias_cutoff(ecfg.dealias_degree)}
    try:
        ledger = run_experiment(u0, ecfg, sigmas=tuple(cfg["sigmas"]))
    except NumericalAbort as exc:
        if exc.ledger is not None and exc.ledger.times:
            out.csv("ledger.csv", exc.ledger.header(), exc.ledger.rows())
        out.json("abort.json", {"error": str(exc), "time": exc.time})
        return EXIT_ABORT, constants
    out.csv("ledger.csv", ledger.header(), ledger.rows())
    a = ledger.arrays()
    rel = (a["mass"] - a["mass"][0]) / a["mass"][0]
    out.columns("mass_drift_vs_t.dat", a["t"], rel, "t relative_mass_drift")
    _spectrum_columns(out, "spectrum_final.dat", ledger.final_state)
    out.json("summary.json", {"mass_drift": float(np.abs(rel).max()),
                              "energy_drift": float(np.abs(a["energy"] / a["energy"][0] - 1).max()),
                              "max_edge": float(a["edge_amp"].max())})
    return EXIT_OK, constants


def cmd_drift(cfg, out, args):
    grid, ecfg = _evolution(cfg, cfg["horizon"])
    u0 = _data(cfg, grid, ecfg.equation == "nls")
    n = 6 if args.quick else cfg["n_sigma"]
    sig = np.geomspace(cfg["sigma_xi_min"], cfg["sigma_xi_max"], n) / ecfg.xi_max
    constants = {"xi_max": ecfg.xi_max, "sigma_grid": sig.tolist()}
    try:
        fit = drift_exponent(u0, ecfg, sig, cfg["horizon"], noise_factor=cfg["noise_factor"])
    except NumericalAbort as exc:
        out.json("abort.json", {"error": str(exc), "time": exc.time})
        return EXIT_ABORT, constants
    except DriftFitError as exc:
        out.json("theta_fit.json", {"error": str(exc)})
        return EXIT_UNSTABLE, constants
    out.json("theta_fit.json", fit.as_dict())
    out.csv("drift.csv", ["sigma", "drift", "used"],
            zip(fit.sigmas, fit.drifts, fit.used.astype(int)))
    out.columns("drift_vs_sigma.dat", fit.sigmas, fit.drifts, "sigma max_t|E_sigma(t)-E_sigma(0)|")
    constants["theta_emp"] = fit.theta
    return EXIT_OK, constants


def cmd_multiplier(cfg, out, args):
    n = min(cfg["n_samples"], 100_000) if args.quick else cfg["n_samples"]
    seeds = cfg["seeds"] or [cfg["seed"] + 1, cfg["seed"] + 2]
    status, summary = EXIT_OK, []
    for th in cfg["thetas"]:
        reps = [mc.sup_defect_ratio(cfg["k"], th, n, int(s), args.workers) for s in seeds]
        for s, r in zip(seeds, reps):
            tag = f"k{cfg['k']}_theta{th:g}_seed{int(s)}"
            r.write_json(out.path(f"multiplier_{tag}.json"))
            r.write_csv(out.path(f"multiplier_{tag}_top.csv"))
        sups = [r.sup for r in reps]
        stable = all(r.stable for r in reps) and max(sups) <= (1 + mc.STABILITY_TOL) * min(sups)
        if not stable:
            status = EXIT_UNSTABLE
        summary.append({"theta": th, "sups": sups, "stable": stable})
    controls = [mc.negative_control(cfg["k"], th, max(n // 4, 10_000), int(seeds[0]),
                                    eta_caps=tuple(cfg["control_caps"]), workers=args.workers)
                for th in cfg["control_thetas"]]
    out.json("multiplier_summary.json", {"runs": summary, "controls": controls})
    for c in controls:
        out.columns(f"control_theta{c['theta']:g}_sup_vs_cap.dat", c["eta_caps"], c["sups"], "eta_cap sup")
    return status, {"n_samples": n, "seeds": list(seeds)}


def cmd_fre(cfg, out, args):
    kw = dict(n_samples=100 if args.quick else cfg["n_samples"], seed=cfg["seed"],
              shift_cap=cfg["shift_cap"], avoid_list=tuple(cfg["avoid_list"]), xi_max=cfg["xi_max"],
              M_grid=tuple(np.geomspace(cfg["M_min"], cfg["M_max"], cfg["n_M"])))
    try:
        fcfg = fre.catalog_config(cfg["entry"], theta=cfg["theta"],
                                  signs=tuple(int(s) for s in cfg["signs"]) if cfg["signs"] else None,
                                  case=cfg["case"], ll=cfg["ll"], **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep = fre.scaling_exponent(fcfg, workers=args.workers)
    rep.write_json(out.path("fre_report.json"))
    out.columns("sup_vs_M.dat", rep.M, rep.sup, "M sup")
    status = EXIT_UNSTABLE if rep.flagged else EXIT_OK
    constants = {"beta": rep.beta, "bprime": list(rep.bprime), "region": [list(c) for c in fcfg.region]}
    if cfg["divergence_check"]:
        div = fre.range_divergence(replace(fcfg, n_samples=min(fcfg.n_samples, 200)), workers=args.workers)
        out.json("divergence.json", div)
        constants["divergence_rate"] = div["growth_rate"]
    return status, constants


def cmd_extension(cfg, out, args):
    try:
        p = ext.ExtensionParams(sigma0=cfg["sigma0"], equation=cfg["equation"], power=cfg["power"],
                                E0=cfg["E0"], big_M=cfg["big_M"], C=cfg["C"], c0=cfg["c0"], a=cfg["a"],
                                theta=cfg["theta"], nls_mode=cfg["nls_mode"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    knee = ext.knee_time(p)
    T = knee * np.geomspace(0.1, 10 ** cfg["T_decades"], cfg["n_T"])
    curve = ext.sigma_curve(p, T)
    curve.write_csv(out.path("sigma_curve.csv"))
    curve.write_json(out.path("sigma_curve.json"))
    out.columns("sigma_vs_T.dat", curve.T, curve.sigma, "T sigma")
    delta = ext.local_lifespan(p)
    checks = [ext.simulate_induction(p, t) for t in T if t >= delta]
    out.json("induction.json", [{"T": c.T, "sigma": c.sigma, "n_steps": c.n_steps, "ok": c.ok,
                                 "margin": c.margin} for c in checks])
    status = EXIT_OK if all(c.ok for c in checks) else EXIT_UNSTABLE
    return status, ext.params_dict(p) | {"slope": curve.slope}


def cmd_radius(cfg, out, args):
    try:
        grid = make_grid(cfg["n_points"], cfg["box_length"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    field = _data(cfg, grid, cfg["complex"])
    band = None
    if cfg["fit_lo"] is not None or cfg["fit_hi"] is not None:
        band = (cfg["fit_lo"] or 0.0, cfg["fit_hi"] or grid.nyquist)
    _spectrum_columns(out, "spectrum.dat", field)
    try:
        est = estimate_radius(field, fit_band=band, noise_floor=cfg["noise_floor"])
    except InsufficientDecayBand as exc:
        out.json("radius.json", {"error": str(exc)})
        return EXIT_UNSTABLE, {}
    out.json("radius.json", est.as_dict())
    return (EXIT_UNSTABLE if est.flagged else EXIT_OK), {"sigma_hat": est.sigma}


def cmd_verify(cfg, out, args):
    only = None if cfg["only"] is None else [int(v) for v in cfg["only"]]
    bat = acceptance.run_battery(quick=args.quick, workers=args.workers, seed=cfg["seed"],
                                 mutate=cfg["mutate"], only=only)
    out.json("verify.json", bat.as_dict())
    with open(out.path("verify.txt"), "w") as fh:
        for c in bat.checks:
            fh.write(("PASS" if c.passed else "FAIL") + f" criterion {c.number}: {c.title}\n")
    print("verify: " + ("all checks passed" if bat.passed else "some checks FAILED"))
    return (EXIT_OK if bat.passed else 1), {"quick": args.quick, "mutate": cfg["mutate"]}


COMMANDS = {"solve": cmd_solve, "drift-scan": cmd_drift, "multiplier-scan": cmd_multiplier,
            "fre-scan": cmd_fre, "extension": cmd_extension, "radius": cmd_radius, "verify": cmd_verify}


def build_parser():
    ap = argparse.ArgumentParser(prog="gevrey-lab", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="YAML/JSON config or a previous manifest.json")
    ap.add_argument("--out", type=Path, default=None, help="output directory (default: runs/<subcommand>)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--quick", action="store_true", help="desk-scale subset / reduced sample counts")
    ap.add_argument("--workers", type=int, default=1, help="threads for sampling (results do not depend on it)")
    ap.add_argument("--mutate", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sub = args.subcommand
    try:
        cfg = load_config(sub, args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["seed"] = args.seed
        if args.mutate:
            if sub != "verify":
                raise ConfigError("--mutate only applies to verify")
            cfg["mutate"] = True
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        root = args.out or (Path(cfg["out"]) if cfg["out"] else Path("runs") / sub)
        if root.exists() and not root.is_dir():
            raise ConfigError(f"output path {root} is not a directory")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    created = not root.exists()
    root.mkdir(parents=True, exist_ok=True)
    out = Outputs(root)
    try:
        status, constants = COMMANDS[sub](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for name in set(out.files):
            try:
                os.remove(root / name)
            except OSError:
                pass
        if created:
            shutil.rmtree(root, ignore_errors=True)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        status, constants = EXIT_ABORT, {"error": str(exc)}
    write_manifest(out, sub, cfg, constants, status)
    print(f"{sub}: wrote {len(set(out.files)) + 1} files to {root} (exit {status})")
    return status


if __name__ == "__main__":
    sys.exit(main())

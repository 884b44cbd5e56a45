"""Command line front end: ``harnesslab <subcommand> --config cfg.json --out dir/``.

Subcommands
-----------
validate   check a kernel and report its drift and variances
simulate   evolve heights on the light cone and dump a window
invariant  V0 by quadrature, by the potential kernel and by Monte Carlo
fluct      covariance of the scaled height field against the limit
hydro      hydrodynamic-limit sup-errors over a list of n
scaling    Monte Carlo Var h_t from a flat start against the exact curve
limits     tables of the limit kernels Γ1, Γ2 and the Z covariance

Exit codes: 0 success, 2 rejected config (error JSON on stdout and in
``error.json``), 3 failed ``--assert`` check.  The cost of ``fluct`` is
about ``R · n^{3/2} · T`` noise draws with the trimmed backward sum
(``R · n² · T²`` with the full cone); ``n <= 10^4``, ``R <= 10^4`` is desk scale.
"""

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend
from . import fluct as _fluct
from . import invariant as _inv
from . import limitcov as _lc
from .errors import ConfigError, HarnessError
from .initialdata import law_from_dict, rho0, sample_initial
from .io import read_json, write_csv, write_json
from .kernel import KernelAnalysis, KernelSpec, lazy_kernel, validate_kernel
from .noise import NoiseModel, NoiseSource
from .process import HeightField, evolve_height

SUBCOMMANDS = ("validate", "simulate", "invariant", "fluct", "hydro", "scaling", "limits")
EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 2, 3

_COMMON = {"kernel", "noise", "initial", "seed", "threads"}
_KEYS = {
    "validate": {"cell_cap"},
    "simulate": {"t", "window", "replicas"},
    "invariant": {"L", "mc_replicas", "mc_lags", "K", "method", "convergence"},
    "fluct": {"n", "points", "replicas", "method", "trim_eps", "box"},
    "hydro": {"u0", "n_list", "t", "R_box", "npts"},
    "scaling": {"t_list", "replicas"},
    "limits": {"sigma1_sq", "noise_var", "rho0", "pairs"},
}
_U0 = {"sin": np.sin, "cos": np.cos, "zero": np.zeros_like, "tanh": np.tanh}


def _version():
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# --------------------------------------------------------------------------
# config parsing


def _kernel(cfg):
    spec = KernelSpec.from_dict(cfg["kernel"]) if "kernel" in cfg else lazy_kernel()
    validate_kernel(spec)
    return KernelAnalysis(spec)


def _noise(cfg):
    if "noise" in cfg and cfg["noise"] is None:
        return None
    return NoiseModel.from_dict(cfg.get("noise", {"family": "gaussian", "variance": 1.0}))


def _check_keys(sub, cfg):
    extra = set(cfg) - _COMMON - _KEYS[sub]
    if extra:
        raise ConfigError(f"unknown config fields for {sub}: {sorted(extra)}")


# --------------------------------------------------------------------------
# subcommands; each returns (files written, summary dict, assertion failures)


def _run_validate(cfg, out, seed, threads):
    spec = KernelSpec.from_dict(cfg["kernel"]) if "kernel" in cfg else lazy_kernel()
    validate_kernel(spec, cfg.get("cell_cap", 10**8))
    an = KernelAnalysis(spec)
    info = {"accepted": True, "dimension": an.dimension, "mean": an.mean.tolist(), "cov": an.cov.tolist(),
            "q": an.q.to_dict()}
    write_json(out / "validation.json", info)
    return ["validation.json"], info, []


def _run_simulate(cfg, out, seed, threads):
    an, noise = _kernel(cfg), _noise(cfg)
    T = int(cfg.get("t", 10))
    d = an.dimension
    win = cfg.get("window", [[0] * d, [10] * d] if d > 1 else [0, 10])
    lo, hi = (tuple(np.atleast_1d(v).astype(int).tolist()) for v in win)
    off = an.spec.offsets
    ilo = tuple(int(a + T * z) for a, z in zip(lo, off.min(axis=0)))
    ihi = tuple(int(a + T * z) for a, z in zip(hi, off.max(axis=0)))
    law = law_from_dict(cfg.get("initial", {"variant": "flat"}), an, noise) if d == 1 else None
    if d > 1 and cfg.get("initial", {"variant": "flat"}).get("variant") != "flat":
        raise ConfigError("simulate supports only flat initial heights for d > 1")
    rows = []
    for r in range(int(cfg.get("replicas", 1))):
        if law is not None:
            _, h0 = sample_initial(law, (ilo[0] + 1, ihi[0]), seed, r)
        else:
            h0 = HeightField(np.zeros([b - a + 1 for a, b in zip(ilo, ihi)]), ilo, 0)
        src = NoiseSource(noise, seed, r) if noise is not None else None
        hT = evolve_height(h0, an, src, T, eval_window=(lo, hi))
        for site, v in zip(hT.sites(), hT.values.ravel()):
            rows.append((r, *np.atleast_1d(site).tolist(), v))
    header = ["replica"] + (["x"] if d == 1 else [f"x{i + 1}" for i in range(d)]) + ["h"]
    write_csv(out / "heights.csv", header, rows)
    return ["heights.csv"], {"t": T, "sites": len(rows)}, []


def _run_invariant(cfg, out, seed, threads):
    an, noise = _kernel(cfg), _noise(cfg)
    if noise is None:
        raise ConfigError("invariant needs a noise model")
    L = int(cfg.get("L", 10))
    var = noise.variance
    four = [_inv.v0(an, var, x) for x in range(L + 1)]
    kern = [_inv.v0(an, var, x, "kernel-a") for x in range(L + 1)]
    R = int(cfg.get("mc_replicas", 0))
    mc_lags = int(cfg.get("mc_lags", 5))
    mc = [float("nan")] * (L + 1)
    se = [float("nan")] * (L + 1)
    failures = []
    sampler = None
    if R:
        K = cfg.get("K", -1)
        sampler = _inv.StationarySampler(an, noise, K=K, method=cfg.get("method", "series"))
        X = _inv.sample_pi0_batch(sampler, (0, mc_lags), seed, range(R), threads)
        D = X - X.mean(axis=0)
        for x in range(min(mc_lags, L) + 1):
            prod = D[:, 0] * D[:, x]
            mc[x] = float(prod.mean())
            se[x] = float(prod.std(ddof=1) / np.sqrt(R))
            if abs(mc[x] - four[x]) > 3 * se[x]:
                failures.append(f"v0 Monte Carlo lag {x}: {mc[x]:.6g} vs {four[x]:.6g} (stderr {se[x]:.3g})")
    for x in range(L + 1):
        if abs(four[x] - kern[x]) > 1e-6:
            failures.append(f"v0 routes disagree at lag {x}")
    write_csv(out / "v0.csv", ["x", "v0_fourier", "v0_kernel", "v0_mc", "stderr"],
              [(x, four[x], kern[x], mc[x], se[x]) for x in range(L + 1)])
    files = ["v0.csv"]
    summary = {"tail_bound": sampler.tail if sampler else None, "K": sampler.K if sampler else None,
               "sum_rule": float(four[0] + 2 * sum(four[1:])), "sum_rule_theory": var / an.sigma1_sq}
    conv = cfg.get("convergence")
    if conv:
        law = law_from_dict(conv.get("initial", {"variant": "iid", "dist": {"family": "gaussian",
                                                                            "variance": 10 * four[0]}}), an, noise)
        ts = [int(t) for t in conv.get("t_list", [0, 10, 100, 1000])]
        rows = _inv.convergence_probe(an, noise, law, ts, int(conv.get("replicas", 200)), seed, threads)
        theory = _inv.increment_variance_theory(an, var, law, ts)
        write_csv(out / "convergence.csv", ["t", "var", "stderr", "theory"],
                  [(t, v, s, th) for (t, v, s), th in zip(rows, theory)])
        files.append("convergence.csv")
        for (t, v, s), th in zip(rows, theory):
            if abs(v - th) > 3 * s:
                failures.append(f"convergence t={t}: {v:.6g} vs {th:.6g}")
    return files, summary, failures


def _fluct_config(cfg, seed):
    an, noise = _kernel(cfg), _noise(cfg)
    law = law_from_dict(cfg.get("initial", {"variant": "pi0"}), an, noise)
    pts = cfg.get("points", [[0.25, 0.0], [0.5, 0.0], [1.0, 0.0]])
    return _fluct.FluctConfig(an, noise, law, int(cfg.get("n", 256)), pts, int(cfg.get("replicas", 100)),
                              seed, cfg.get("method", "auto"), float(cfg.get("trim_eps", 1e-18)),
                              tuple(cfg.get("box", (4.0, 10.0))))


def _run_fluct(cfg, out, seed, threads):
    fc = _fluct_config(cfg, seed)
    if fc.replicas < 30:
        raise ConfigError("covariance estimation needs at least 30 replicas")
    params = fc.limit_params()
    if params is None:
        raise ConfigError("fluct needs nondegenerate noise for the limit comparison")
    est = _fluct.estimate_cov(fc, threads)
    rep = _fluct.compare(est, params)
    write_csv(out / "cov_estimate.csv", _fluct.COV_HEADER, rep.rows(est))
    write_csv(out / "points.csv", ["index", "t", "r", "T", "site"],
              [(i, t, r, *fc.index((t, r))) for i, (t, r) in enumerate(fc.points)])
    failures = [f"entry {ij}: z = {rep.z[ij]:.3g}" for ij in rep.flagged]
    return ["cov_estimate.csv", "points.csv"], {"max_abs_z": rep.max_abs_z, "rho0": rho0(fc.law),
                                                "method": fc.resolved_method}, failures


def _run_hydro(cfg, out, seed, threads):
    an, noise = _kernel(cfg), _noise(cfg)
    name = cfg.get("u0", "sin")
    if name not in _U0:
        raise ConfigError(f"u0 must be one of {sorted(_U0)}")
    n_list = [int(v) for v in cfg.get("n_list", [64, 256, 1024])]
    rows = _fluct.hydro_check(an, noise, _U0[name], n_list, float(cfg.get("t", 1.0)),
                              float(cfg.get("R_box", 3.0)), seed, int(cfg.get("npts", 64)))
    write_csv(out / "hydro.csv", ["n", "sup_error"], rows)
    errs = [e for _, e in rows]
    failures = []
    if any(b >= a for a, b in zip(errs, errs[1:])):
        failures.append("sup-error not strictly decreasing in n")
    if errs[-1] >= 0.05:
        failures.append(f"final sup-error {errs[-1]:.3g} >= 0.05")
    return ["hydro.csv"], {"errors": errs}, failures


def _run_scaling(cfg, out, seed, threads):
    an, noise = _kernel(cfg), _noise(cfg)
    if noise is None:
        raise ConfigError("scaling needs a noise model")
    ts = [int(t) for t in cfg.get("t_list", [2**k for k in range(6, 13)])]
    res = _fluct.variance_scaling(an, noise, ts, int(cfg.get("replicas", 1000)), seed, threads)
    write_csv(out / "scaling.csv", ["t", "var", "stderr", "theory"], res["rows"])
    failures = [f"t={t}: {v:.6g} vs {e:.6g}" for t, v, s, e in res["rows"] if abs(v - e) > 3 * s]
    if abs(res["slope_exact"] - 0.5) > 0.02:
        failures.append(f"exact slope {res['slope_exact']:.4f} outside 0.50 +- 0.02")
    return ["scaling.csv"], {"slope_exact": res["slope_exact"], "slope_mc": res["slope_mc"]}, failures


def _default_pairs():
    ts = (0.25, 0.5, 1.0)
    rs = (-1.0, 0.0, 1.0)
    pts = [(t, r) for t in ts for r in rs]
    return [(a, b) for i, a in enumerate(pts) for b in pts[i:]]


def _run_limits(cfg, out, seed, threads):
    s1 = float(cfg.get("sigma1_sq", 0.25))
    nv = float(cfg.get("noise_var", 1.0))
    params = _lc.LimitParams(s1, nv, float(cfg.get("rho0", nv / s1)))
    pairs = [tuple(map(tuple, p)) for p in cfg.get("pairs", _default_pairs())]
    rows = list(_lc.table_rows(params, pairs))
    write_csv(out / "limits.csv", _lc.TABLE_HEADER, rows)
    failures = []
    worst1 = worst2 = 0.0
    for (s, q), (t, r) in pairs:
        worst1 = max(worst1, abs(_lc.gamma1((t, r), (s, q), s1) - _lc.gamma1((t, r), (s, q), s1, "integral")))
        worst2 = max(worst2, abs(_lc.gamma2((t, r), (s, q), s1) - _lc.gamma2((t, r), (s, q), s1, "integral")))
    if worst1 > 1e-8:
        failures.append(f"gamma1 routes differ by {worst1:.3g}")
    if worst2 > 1e-7:
        failures.append(f"gamma2 routes differ by {worst2:.3g}")
    return ["limits.csv"], {"gamma1_route_gap": worst1, "gamma2_route_gap": worst2}, failures


_RUNNERS = {"validate": _run_validate, "simulate": _run_simulate, "invariant": _run_invariant,
            "fluct": _run_fluct, "hydro": _run_hydro, "scaling": _run_scaling, "limits": _run_limits}


# --------------------------------------------------------------------------


def run(subcommand, config, out_dir, seed=0, threads=1, check=False, stdout=None):
    """Run one subcommand; returns the process exit code.

    Outputs are staged and moved into ``out_dir`` only on success, so a
    failed run leaves no partial result files behind.
    """
    stdout = stdout or sys.stdout
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    t0 = time.perf_counter()
    try:
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(subcommand, config)
        if threads < 1:
            raise ConfigError("threads must be positive")
        files, summary, failures = _RUNNERS[subcommand](config, stage, seed, threads)
    except HarnessError as exc:
        shutil.rmtree(stage, ignore_errors=True)
        err = exc.to_dict()
        write_json(out / "error.json", err)
        print(json.dumps(err, sort_keys=True), file=stdout)
        return EXIT_CONFIG
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    for f in files:
        shutil.move(str(stage / f), str(out / f))
    shutil.rmtree(stage, ignore_errors=True)
    meta = {"subcommand": subcommand, "config": config, "seed": seed, "threads": threads,
            "version": _version(), "backend": _backend.NAME, "files": files, "summary": summary,
            "timings": {"wall_seconds": time.perf_counter() - t0},
            "assert": {"requested": check, "failures": failures}}
    write_json(out / "meta.json", meta)
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    if check and failures:
        for f in failures:
            print(f"ASSERT FAILED: {f}", file=stdout)
        return EXIT_ASSERT
    return EXIT_OK


def build_parser():
    head, _, tail = __doc__.partition("Subcommands")
    ap = argparse.ArgumentParser(prog="harnesslab", description=head.strip(),
                                 epilog="Subcommands" + tail,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, help="JSON experiment config (defaults are used if omitted)")
    ap.add_argument("--seed", type=int, default=None, help="unsigned 64-bit master seed (default 0)")
    ap.add_argument("--threads", type=int, default=None, help="replica worker threads (default 1)")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--assert", dest="check", action="store_true",
                    help="exit 3 when an acceptance comparison fails")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.config is not None:
        try:
            config = read_json(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            err = ConfigError(f"cannot read config: {exc}").to_dict()
            args.out.mkdir(parents=True, exist_ok=True)
            write_json(args.out / "error.json", err)
            print(json.dumps(err, sort_keys=True))
            return EXIT_CONFIG
    else:
        config = {}
    # command-line flags win over values echoed in the config
    seed = args.seed if args.seed is not None else int(config.get("seed", 0)) if isinstance(config, dict) else 0
    threads = args.threads if args.threads is not None else int(config.get("threads", 1)) if isinstance(config, dict) else 1
    return run(args.subcommand, config, args.out, seed, threads, args.check)


if __name__ == "__main__":
    sys.exit(main())

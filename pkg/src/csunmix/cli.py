"""Command-line interface.

Subcommands: ``generate`` (synthetic scenes), ``unmix`` (the MCMC
solver), ``baseline`` (NCLS / oracle NCLS / sparse ADMM), ``evaluate``
(metrics against ground truth) and ``render`` (PGM quicklooks).

Every run writes a ``manifest.txt`` echoing the fully resolved
configuration as flat key=value pairs; a manifest section can be fed
back through ``--config``.  Outputs are deterministic: same inputs and
seed give byte-identical files.

Exit codes: 0 success, 2 usage/data errors, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericError
from .estimators import summarize
from .fileio import (
    field_plane,
    read_cube,
    read_field,
    read_kv,
    read_library_csv,
    write_cube,
    write_field,
    write_kv,
    write_library_csv,
    write_pgm,
)
from .metrics import evaluate, report_csv
from .rng import make_rng
from .sampler import RunConfig, run_chain
from .synthgen import SceneSpec, generate_scene, make_correlated_library, measure_snr, sigma2_for_snr
from .types import GridGeometry
from . import baselines


def _float_list(text: str) -> np.ndarray:
    try:
        return np.array([float(c) for c in str(text).split(",") if c.strip() != ""])
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt_vec(vec) -> str:
    return ",".join(f"{float(v):.17g}" for v in np.atleast_1d(vec))


def _default_threads() -> int:
    env = os.environ.get("CSU_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"CSU_THREADS={env!r} is not an integer") from None
    return 1


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- generate

_GENERATE_KEYS = (
    "rows", "cols", "bands", "endmembers", "coherence", "beta", "s",
    "sigma2", "snr", "prior_sweeps", "seed", "library",
)


def _cmd_generate(args) -> int:
    spec_kv = read_kv(args.spec) if args.spec else {}
    for key in spec_kv:
        if key not in _GENERATE_KEYS:
            raise ValueError(f"unknown scene key {key!r} in {args.spec}")

    def pick(name, flag, default=None):
        return flag if flag is not None else spec_kv.get(name, default)

    rows = int(pick("rows", args.rows, 60))
    cols = int(pick("cols", args.cols, 60))
    bands = int(pick("bands", args.bands, 32))
    n_end = int(pick("endmembers", args.endmembers, 5))
    coherence = float(pick("coherence", args.coherence, 0.9))
    seed = int(pick("seed", args.seed, 0))
    prior_sweeps = int(pick("prior_sweeps", args.prior_sweeps, 200))
    beta = _float_list(pick("beta", args.beta, "0.3"))
    s = _float_list(pick("s", args.s, "0.3"))
    sigma2_text = pick("sigma2", args.sigma2, None)
    snr_text = pick("snr", args.snr, None)
    lib_path = pick("library", args.library, None)

    if sigma2_text is not None and snr_text is not None:
        raise ValueError("give either sigma2 or snr, not both")

    if lib_path:
        lib = read_library_csv(lib_path)
        if lib.n_endmembers != n_end and (args.endmembers is not None or "endmembers" in spec_kv):
            raise ValueError(
                f"library has {lib.n_endmembers} endmembers, requested {n_end}"
            )
    else:
        lib = make_correlated_library(make_rng(seed), bands, n_end, coherence)

    geom = GridGeometry(rows, cols)
    sigma2 = _float_list(sigma2_text) if sigma2_text is not None else np.array([8e-4])
    spec = SceneSpec(
        geom=geom, lib=lib, beta=beta, s=s, sigma2=sigma2,
        prior_sweeps=prior_sweeps, seed=seed,
    )
    if snr_text is not None:
        sigma2 = np.array([sigma2_for_snr(spec, float(snr_text))])
        spec = SceneSpec(
            geom=geom, lib=lib, beta=beta, s=s, sigma2=sigma2,
            prior_sweeps=prior_sweeps, seed=seed,
        )
    cube, z_true, a_true = generate_scene(spec)

    out = _outdir(args.out)
    write_cube(out / "cube.csucube", cube)
    write_library_csv(out / "library.csv", lib)
    write_field(out / "support_true.csufield", z_true.labels, geom, "support")
    write_field(out / "abundance_true.csufield", a_true.values, geom, "abundance")
    manifest = {
        "run.command": "generate",
        "run.version": __version__,
        "config.rows": rows,
        "config.cols": cols,
        "config.bands": lib.n_bands,
        "config.endmembers": lib.n_endmembers,
        "config.coherence": coherence if not lib_path else "file",
        "config.beta": _fmt_vec(spec.beta),
        "config.s": _fmt_vec(spec.s),
        "config.sigma2": _fmt_vec(spec.sigma2),
        "config.prior_sweeps": prior_sweeps,
        "config.seed": seed,
        "run.measured_snr_db": measure_snr(cube, lib, a_true),
        "output.cube": "cube.csucube",
        "output.library": "library.csv",
        "output.support_true": "support_true.csufield",
        "output.abundance_true": "abundance_true.csufield",
    }
    write_kv(out / "manifest.txt", manifest)
    print(f"wrote scene to {out}")
    return 0


# ------------------------------------------------------------------ unmix

_UNMIX_DEFAULTS = {
    "nmc": 3000, "nbi": 1000, "seed": 0, "beta": "auto", "beta0": 0.3,
    "delta0": 1.0, "decay": 0.8, "beta_max": 2.0, "gamma": 2.1, "nu": 1.1,
    "rho": 0.01, "thin": 1, "tmg_sweeps": 2, "schedule": "raster",
    "noise_prior_a": 0.0, "noise_prior_b": 0.0,
    "sigma2_fixed": "none", "s2_fixed": "none", "threads": None,
}


def _resolve_unmix_config(args) -> dict:
    merged = dict(_UNMIX_DEFAULTS)
    if args.config:
        file_kv = read_kv(args.config)
        for key, val in file_kv.items():
            key = key.removeprefix("config.")
            if key in merged:
                merged[key] = val
    flag_map = {
        "nmc": args.nmc, "nbi": args.nbi, "seed": args.seed,
        "beta0": args.beta0, "gamma": args.gamma, "nu": args.nu,
        "rho": args.rho, "thin": args.thin, "tmg_sweeps": args.tmg_sweeps,
        "schedule": args.schedule, "threads": args.threads,
    }
    for key, val in flag_map.items():
        if val is not None:
            merged[key] = val
    if args.beta_auto:
        merged["beta"] = "auto"
    elif args.beta is not None:
        merged["beta"] = args.beta
    return merged


def _run_config_from(merged: dict) -> RunConfig:
    beta = merged["beta"]
    beta_val = None if str(beta).strip().lower() == "auto" else _float_list(beta)
    threads = merged["threads"]
    threads = _default_threads() if threads is None else int(threads)

    def fixed(key):
        val = merged[key]
        if val is None or str(val).strip().lower() == "none":
            return None
        return _float_list(val)

    return RunConfig(
        n_mc=int(merged["nmc"]),
        n_bi=int(merged["nbi"]),
        seed=int(merged["seed"]),
        beta=beta_val,
        beta0=float(merged["beta0"]),
        delta0=float(merged["delta0"]),
        decay=float(merged["decay"]),
        beta_max=float(merged["beta_max"]),
        gamma=float(merged["gamma"]),
        nu=float(merged["nu"]),
        rho=float(merged["rho"]),
        thin=int(merged["thin"]),
        tmg_sweeps=int(merged["tmg_sweeps"]),
        schedule=str(merged["schedule"]),
        noise_prior=(float(merged["noise_prior_a"]), float(merged["noise_prior_b"])),
        sigma2_fixed=fixed("sigma2_fixed"),
        s2_fixed=fixed("s2_fixed"),
        threads=threads,
    )


def _config_manifest(cfg: RunConfig) -> dict:
    return {
        "config.nmc": cfg.n_mc,
        "config.nbi": cfg.n_bi,
        "config.seed": cfg.seed,
        "config.beta": "auto" if cfg.beta is None else _fmt_vec(cfg.beta),
        "config.beta0": cfg.beta0,
        "config.delta0": cfg.delta0,
        "config.decay": cfg.decay,
        "config.beta_max": cfg.beta_max,
        "config.gamma": cfg.gamma,
        "config.nu": cfg.nu,
        "config.rho": cfg.rho,
        "config.thin": cfg.thin,
        "config.tmg_sweeps": cfg.tmg_sweeps,
        "config.schedule": cfg.schedule,
        "config.noise_prior_a": cfg.noise_prior[0],
        "config.noise_prior_b": cfg.noise_prior[1],
        "config.sigma2_fixed": "none" if cfg.sigma2_fixed is None else _fmt_vec(cfg.sigma2_fixed),
        "config.s2_fixed": "none" if cfg.s2_fixed is None else _fmt_vec(cfg.s2_fixed),
        "config.threads": cfg.threads,
    }


def _cmd_unmix(args) -> int:
    cube = read_cube(args.cube)
    lib = read_library_csv(args.library)
    cfg = _run_config_from(_resolve_unmix_config(args))
    trace = run_chain(cube, lib, cfg)
    result = summarize(trace)
    geom = cube.geometry

    out = _outdir(args.out)
    write_field(out / "support_mmap.csufield", result.support.labels, geom, "support")
    write_field(out / "abundance_mmse.csufield", result.abundances.values, geom, "abundance")
    write_field(out / "presence.csufield", result.presence, geom, "map")
    write_field(
        out / "active_count.csufield",
        result.active_count[None, :].astype(np.float64),
        geom,
        "map",
    )
    names = ",".join(lib.names)
    with open(out / "beta_trace.csv", "w", newline="\n") as fh:
        fh.write(f"iteration,{names}\n")
        for t in range(trace.n_mc):
            fh.write(f"{t + 1},{_fmt_vec(trace.beta[t])}\n")
    posterior = {"unmatched_pixels": result.unmatched_pixels}
    for r, name in enumerate(lib.names):
        posterior[f"beta_hat.{name}"] = float(result.beta[r])
    for r, name in enumerate(lib.names):
        posterior[f"s2_hat.{name}"] = float(result.s2[r])
    for l in range(cube.n_bands):
        posterior[f"sigma2_hat.band_{l + 1}"] = float(result.sigma2[l])
    write_kv(out / "posterior.txt", posterior)

    manifest = {"run.command": "unmix", "run.version": __version__}
    manifest.update(_config_manifest(cfg))
    manifest.update(
        {
            "input.cube": str(args.cube),
            "input.library": str(args.library),
            "output.support": "support_mmap.csufield",
            "output.abundance": "abundance_mmse.csufield",
            "output.presence": "presence.csufield",
            "output.active_count": "active_count.csufield",
            "output.beta_trace": "beta_trace.csv",
            "output.posterior": "posterior.txt",
        }
    )
    write_kv(out / "manifest.txt", manifest)
    print(f"unmixed {args.cube} -> {out}")
    return 0


# --------------------------------------------------------------- baseline

def _cmd_baseline(args) -> int:
    cube = read_cube(args.cube)
    lib = read_library_csv(args.library)
    threads = args.threads if args.threads is not None else _default_threads()
    if args.method == "ncls":
        res = baselines.ncls_image(cube, lib, threads=threads)
    elif args.method == "oracle-ncls":
        if not args.support_true:
            raise ValueError("--support-true is required for oracle-ncls")
        sup, sgeom, kind = read_field(args.support_true)
        if kind != "support" or sgeom != cube.geometry:
            raise ValueError("--support-true must be a support field on the same grid")
        res = baselines.oracle_ncls_image(cube, lib, sup)
    elif args.method == "sunsal":
        res = baselines.sunsal_image(
            cube, lib, args.lam, max_iter=args.max_iter, tol=args.tol
        )
    else:  # argparse choices make this unreachable
        raise ValueError(f"unknown method {args.method}")

    out = _outdir(args.out)
    geom = cube.geometry
    support = baselines.threshold_support(res.abundances, args.rho)
    write_field(out / f"abundance_{args.method}.csufield", res.abundances.values, geom, "abundance")
    write_field(out / f"support_{args.method}.csufield", support, geom, "support")
    info = {
        "method": res.method,
        "iterations": res.iterations,
        "objective": res.objective,
        "converged": res.converged,
        "rho": args.rho,
    }
    if args.method == "sunsal":
        info["lambda"] = args.lam
    write_kv(out / "info.txt", info)
    manifest = {
        "run.command": "baseline",
        "run.version": __version__,
        "config.method": args.method,
        "config.rho": args.rho,
        "config.threads": threads,
        "input.cube": str(args.cube),
        "input.library": str(args.library),
        "output.abundance": f"abundance_{args.method}.csufield",
        "output.support": f"support_{args.method}.csufield",
        "output.info": "info.txt",
    }
    if args.method == "sunsal":
        manifest["config.lambda"] = args.lam
        manifest["config.max_iter"] = args.max_iter
        manifest["config.tol"] = args.tol
    if args.method == "oracle-ncls":
        manifest["input.support_true"] = str(args.support_true)
    write_kv(out / "manifest.txt", manifest)
    print(f"{args.method} baseline -> {out}")
    return 0


# --------------------------------------------------------------- evaluate

def _parse_estimate(text: str) -> tuple[str, str, str | None]:
    name, sep, paths = text.partition("=")
    if not sep or not name:
        raise ValueError(f"--estimate must look like name=abundance[:support], got {text!r}")
    abund, sep2, support = paths.partition(":")
    if not abund:
        raise ValueError(f"--estimate {text!r} has no abundance path")
    return name, abund, (support if sep2 else None)


def _cmd_evaluate(args) -> int:
    cube = read_cube(args.cube)
    lib = read_library_csv(args.library)
    a_true, geom_a, kind_a = read_field(args.truth_a)
    if kind_a != "abundance" or geom_a != cube.geometry:
        raise ValueError("--truth-a must be an abundance field on the cube's grid")
    z_true = None
    if args.truth_z:
        z_true, geom_z, kind_z = read_field(args.truth_z)
        if kind_z != "support" or geom_z != cube.geometry:
            raise ValueError("--truth-z must be a support field on the cube's grid")
    reports = []
    for item in args.estimate:
        name, abund_path, support_path = _parse_estimate(item)
        a_hat, geom_h, kind_h = read_field(abund_path)
        if kind_h != "abundance" or geom_h != cube.geometry:
            raise ValueError(f"estimate {name}: not an abundance field on the cube's grid")
        z_hat = None
        if support_path:
            z_hat, geom_s, kind_s = read_field(support_path)
            if kind_s != "support" or geom_s != cube.geometry:
                raise ValueError(f"estimate {name}: bad support field")
        reports.append(
            evaluate(name, a_hat, cube, lib, a_true, z_hat=z_hat, z_true=z_true)
        )
    out = _outdir(args.out)
    lines = []
    for rep in reports:
        lines.extend(rep.kv_lines())
    with open(out / "report.txt", "w", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    with open(out / "report.csv", "w", newline="\n") as fh:
        fh.write(report_csv(reports))
    for rep in reports:
        print(f"{rep.name}: rmse={rep.rmse_avg:.6f} aad={rep.aad_avg:.6f} re={rep.re_avg:.6f}")
    return 0


# ----------------------------------------------------------------- render

def _cmd_render(args) -> int:
    values, geom, kind = read_field(args.field)
    if kind == "support":
        vmin, vmax = 0.0, 1.0
    else:
        vmin = args.vmin if args.vmin is not None else float(values.min())
        vmax = args.vmax if args.vmax is not None else float(values.max())
    comps = range(values.shape[0]) if args.component is None else [args.component - 1]
    prefix = Path(args.out)
    if prefix.parent != Path(""):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for r in comps:
        img = field_plane(values, geom, r)
        path = f"{prefix}_{r + 1}.pgm"
        write_pgm(path, img, vmin=vmin, vmax=vmax)
        written.append(path)
    print("wrote " + ", ".join(written))
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="csunmix",
        description="Collaborative sparse hyperspectral unmixing toolbox",
    )
    p.add_argument("--version", action="version", version=f"csunmix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic scene from the model")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--spec", help="key=value scene file (flags override it)")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--bands", type=int)
    g.add_argument("--endmembers", type=int)
    g.add_argument("--coherence", type=float, help="target library mutual coherence")
    g.add_argument("--beta", help="spatial couplings, comma separated or scalar")
    g.add_argument("--s", help="abundance scales (std dev), comma separated or scalar")
    g.add_argument("--sigma2", help="noise variance(s)")
    g.add_argument("--snr", type=float, help="target SNR in dB (alternative to --sigma2)")
    g.add_argument("--prior-sweeps", type=int, dest="prior_sweeps")
    g.add_argument("--seed", type=int)
    g.add_argument("--library", help="use this library CSV instead of synthesising one")
    g.set_defaults(func=_cmd_generate)

    u = sub.add_parser("unmix", help="run the MCMC unmixer")
    u.add_argument("cube")
    u.add_argument("library")
    u.add_argument("--out", required=True)
    u.add_argument("--config", help="key=value run configuration (flags override it)")
    u.add_argument("--nmc", type=int)
    u.add_argument("--nbi", type=int)
    u.add_argument("--seed", type=int)
    u.add_argument("--beta", help="fixed couplings, comma separated or scalar")
    u.add_argument("--beta-auto", action="store_true", dest="beta_auto",
                   help="self-tune the couplings (the default)")
    u.add_argument("--beta0", type=float)
    u.add_argument("--gamma", type=float)
    u.add_argument("--nu", type=float)
    u.add_argument("--rho", type=float)
    u.add_argument("--thin", type=int)
    u.add_argument("--tmg-sweeps", type=int, dest="tmg_sweeps")
    u.add_argument("--schedule", choices=("raster", "chromatic"))
    u.add_argument("--threads", type=int)
    u.set_defaults(func=_cmd_unmix)

    b = sub.add_parser("baseline", help="deterministic baseline solvers")
    b.add_argument("cube")
    b.add_argument("library")
    b.add_argument("--method", required=True, choices=("ncls", "oracle-ncls", "sunsal"))
    b.add_argument("--out", required=True)
    b.add_argument("--rho", type=float, default=0.01,
                   help="support threshold on abundances (strict >)")
    b.add_argument("--lambda", type=float, default=1e-3, dest="lam",
                   help="sparsity weight for sunsal")
    b.add_argument("--max-iter", type=int, default=1000, dest="max_iter")
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--support-true", dest="support_true",
                   help="true support field (oracle-ncls only)")
    b.add_argument("--threads", type=int)
    b.set_defaults(func=_cmd_baseline)

    e = sub.add_parser("evaluate", help="metrics against ground truth")
    e.add_argument("--cube", required=True)
    e.add_argument("--library", required=True)
    e.add_argument("--truth-a", required=True, dest="truth_a")
    e.add_argument("--truth-z", dest="truth_z")
    e.add_argument("--estimate", action="append", required=True,
                   help="name=abundance_field[:support_field]; repeatable")
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_evaluate)

    r = sub.add_parser("render", help="render field components to PGM images")
    r.add_argument("field")
    r.add_argument("--out", required=True, help="output path prefix")
    r.add_argument("--component", type=int, help="1-based component (default: all)")
    r.add_argument("--vmin", type=float)
    r.add_argument("--vmax", type=float)
    r.set_defaults(func=_cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

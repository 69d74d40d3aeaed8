"""``stochmech`` command-line interface.

Exit codes: 0 success, 1 verification failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import density as dm
from . import io
from . import montecarlo as mc
from .config import PRESETS, load_model, preset, preset_config
from .convergence import REFERENCE_KINDS, convergence_table, lattice_error
from .equivalence import derive_sector_constant
from .errors import AmplificationError, ConfigError, StochMechError
from .operators import (
    build_base_generator,
    build_conjugate_generator,
    build_hamiltonian,
    build_lifted_generator,
    build_sector_generator,
)
from .semigroup import uniformize
from .verify import run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _model_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", metavar="PATH", help="YAML model file")
    src.add_argument("--preset", choices=sorted(PRESETS), help="shipped preset (default: free)")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    p.add_argument("--format", choices=("csv", "json"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochmech", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stochmech {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="export generators and the lattice Hamiltonian")
    _model_args(p)
    p.add_argument("--p", type=float, default=np.pi / 2, help="exported sector momentum (default pi/2)")

    p = sub.add_parser("verify", help="run the residual checks on one model")
    _model_args(p)
    p.add_argument("--t", type=_nonneg_float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--negative-control", action="store_true", help="use the mirrored winding orientation")

    p = sub.add_parser("converge", help="continuum-limit error table")
    p.add_argument("--preset", choices=sorted(PRESETS), default="free")
    p.add_argument("--model", metavar="PATH", help="not supported: no continuum reference")
    p.add_argument("--out", metavar="DIR", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--t", type=_nonneg_float, default=1.0)
    p.add_argument("--a0", type=float, default=0.2)
    p.add_argument("--levels", type=_positive_int, default=3)

    p = sub.add_parser("mc", help="Monte Carlo kernel, drift and action estimates")
    _model_args(p)
    p.add_argument("--t", type=_nonneg_float, default=0.5)
    p.add_argument("--paths", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=0, help="start site index")

    p = sub.add_parser("density", help="evolve, phase-average and condition a wavepacket")
    _model_args(p)
    p.add_argument("--t", type=_nonneg_float, default=0.2)
    p.add_argument("--start", type=int, default=None, help="wavepacket centre site (default: middle)")
    p.add_argument("--width", type=float, default=1.0, help="wavepacket width in lattice units")
    p.add_argument("--g", type=int, default=None, help="site to condition on (default: centre)")
    return parser


def _load(args):
    if getattr(args, "model", None):
        return load_model(args.model)
    return preset(args.preset or "free")


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _check_site(model, site, flag):
    if site is not None and not 0 <= site < model.n_sites:
        raise UsageError(f"{flag} {site} outside [0, {model.n_sites})")


def _write_rows(path, header_line, columns, rows):
    with open(path, "w") as fh:
        fh.write(f"# {header_line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def cmd_build(args) -> int:
    model = _load(args)
    out = _outdir(args.out)
    c0 = derive_sector_constant(model, strict=False)
    ops = {
        "base": build_base_generator(model),
        "lifted": build_lifted_generator(model),
        "conjugate": build_conjugate_generator(model),
        "sector": build_sector_generator(model, args.p),
        "hamiltonian": build_hamiltonian(model),
    }
    for name, op in ops.items():
        io.write_triplets(os.path.join(out, f"{name}.txt"), op, model)
    summary = {
        "model": model.to_dict(),
        "dt": model.dt,
        "k0": model.k0,
        "c0": [c0.c0.real, c0.c0.imag],
        "sector_residual": c0.residual,
        "sector_p": args.p,
        "files": [f"{name}.txt" for name in ops],
    }
    io.write_json(os.path.join(out, "summary.json"), summary, model)
    print(f"wrote {len(ops)} operators and summary.json to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _load(args)
    out = _outdir(args.out)
    report = run_suite(model, t=args.t, seed=args.seed, negative_control=args.negative_control)
    if args.format == "json":
        io.write_json(os.path.join(out, "verify.json"), report, model)
    else:
        _write_rows(
            os.path.join(out, "verify.csv"),
            io.provenance(model),
            ["check", "pass", "residual", "tol"],
            [(k, v["pass"], v.get("residual", float("nan")), v.get("tol", float("nan")))
             for k, v in report["checks"].items()],
        )
    for name, rec in report["checks"].items():
        status = "PASS" if rec["pass"] else "FAIL"
        print(f"{status} {name}: residual {rec.get('residual', float('nan')):.3g}")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_converge(args) -> int:
    if args.model or args.preset not in REFERENCE_KINDS:
        raise ConfigError(
            f"no continuum reference for {args.model or args.preset!r}; "
            f"converge supports presets {list(REFERENCE_KINDS)}"
        )
    out = _outdir(args.out)
    params = {}
    if args.preset == "harmonic":
        params["stiffness"] = preset_config("harmonic")["potential"]["stiffness"]
    table = convergence_table(args.preset, a0=args.a0, t=args.t, levels=args.levels, **params)
    growth = [lattice_error(args.preset, args.a0, f * args.t, **params) for f in (0.25, 0.5, 1.0)]
    monotone = bool(args.t == 0 or np.all(np.diff(growth) > 0))
    header = f"stochmech {__version__} preset {args.preset}"
    if args.format == "json":
        payload = {**table.to_dict(), "error_vs_t": growth, "monotone_in_t": monotone}
        io.write_json(os.path.join(out, "convergence.json"), payload)
    else:
        _write_rows(
            os.path.join(out, "convergence.csv"),
            header,
            ["spacing", "sites", "error", "ratio", "order"],
            [(r.spacing, r.sites, r.error, r.ratio, r.order) for r in table.rows],
        )
    for r in table.rows:
        print(f"a={r.spacing:<8g} L={r.sites:<5d} error={r.error:.4e} ratio={r.ratio:.3f}")
    print(f"error monotone in t: {monotone}")
    return EXIT_OK if monotone else EXIT_FAIL


def cmd_mc(args) -> int:
    model = _load(args)
    _check_site(model, args.start, "--start")
    out = _outdir(args.out)
    kernel = mc.estimate_lifted_kernel(model, args.start, args.t, args.paths, args.seed)
    ref = uniformize(build_lifted_generator(model), args.t).winding_resolved()[args.start]
    oracle_se = np.sqrt(ref * (1 - ref) / args.paths)
    diff = np.abs(kernel.probabilities - ref)
    z = np.where(oracle_se > 0, diff / np.where(oracle_se > 0, oracle_se, 1), np.where(diff > 0, np.inf, 0))
    header = io.provenance(model)
    if args.format == "csv":
        kernel.write_csv(os.path.join(out, "kernel.csv"), header=header)
    else:
        io.write_json(
            os.path.join(out, "kernel.json"),
            {"counts": kernel.counts, "probabilities": kernel.probabilities, "stderr": kernel.stderr},
            model,
        )
    summary = {
        "t": args.t,
        "paths": args.paths,
        "seed": args.seed,
        "start": args.start,
        "kernel_max_z": float(z.max()),
        "kernel_within_4sigma": bool(z.max() <= 4),
    }
    if args.t > 0:
        drift = mc.winding_drift_statistic(model, args.start, args.t, args.paths, args.seed + 1)
        summary["drift"] = {**drift.__dict__, "z_score": drift.z_score}
    steps = max(1, int(np.floor(args.t / model.dt + 1e-9)))
    action = mc.action_statistic(model, args.start, steps * model.dt, args.paths, args.seed + 2)
    summary["action"] = {"t": steps * model.dt, **action.to_dict()}
    try:
        q = mc.estimate_quantum_kernel(model, args.start, args.t, args.paths, args.seed + 3)
        summary["variance"] = q.variance_report()
    except AmplificationError as exc:
        summary["variance"] = {"error": str(exc)}
        print(f"quantum estimate skipped: {exc}", file=sys.stderr)
    io.write_json(os.path.join(out, "mc_summary.json"), summary, model)
    print(f"kernel max |z| = {summary['kernel_max_z']:.3f} over {args.paths} paths")
    return EXIT_OK


def cmd_density(args) -> int:
    model = _load(args)
    n = model.n_sites
    start = n // 2 if args.start is None else args.start
    g = start if args.g is None else args.g
    _check_site(model, start, "--start")
    _check_site(model, g, "--g")
    out = _outdir(args.out)
    a = model.lattice.spacing
    psi = dm.gaussian_wavepacket(model, model.lattice.positions()[start], args.width * a)
    rho_c0 = dm.prepare_joint_density(np.outer(psi, psi.conj()))
    rho_ct = dm.evolve_joint_density(rho_c0, model, args.t)
    rho_t = dm.phase_average(rho_ct, model).normalized()
    residual = dm.verify_theorem1(rho_c0, model, args.t)
    G = np.diag(np.arange(n, dtype=float))
    conditioned, prob = dm.condition(rho_t.matrix, G, float(g), return_probability=True)
    io.write_matrix_csv(os.path.join(out, "density.csv"), rho_t.matrix, model)
    io.write_joint_csv(os.path.join(out, "joint.csv"), rho_ct, model, threshold=1e-15)
    io.write_json(
        os.path.join(out, "conditioning.json"),
        {
            "g": g,
            "probability": prob,
            "purity": conditioned.purity,
            "evolved_purity": rho_t.purity,
            "theorem1_residual": residual,
            "t": args.t,
        },
        model,
    )
    print(f"Theorem-1 residual {residual:.3e}; P(x = {g}) = {prob:.6f}")
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "verify": cmd_verify,
    "converge": cmd_converge,
    "mc": cmd_mc,
    "density": cmd_density,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StochMechError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point ``akstab``."""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import akf4
from . import grid as _grid
from .checks import _jsonable, oracle_report, run_suite
from .config import load_config
from .curvature import curvature_report, hermitian_ricci, hermitian_scalar_from_rho
from .deformation import build_state, extremal_diagnostics, residual_from_state
from .elliptic import kernel_detect
from .errors import AmbiguousKernel
from .solver import continue_path, resolved_residual, residual_norm
from .structures import path_evaluate


def _dump(obj, stream=None):
    print(json.dumps(_jsonable(obj), indent=2), file=stream or sys.stdout)


def _outdir(args, cfg):
    out = Path(args.out if getattr(args, "out", None) else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args):
    cfg = load_config(args.config)
    out = _outdir(args, cfg)

    def progress(t, state, ctx):
        print(f"t = {t:.6g}  h- = {ctx.h_minus}  gap = {ctx.gap:.4g}", file=sys.stderr, flush=True)

    res = continue_path(cfg.path, cfg.solver, on_step=progress)
    names = []
    for k, f in enumerate(res.f_t):
        if f is None:
            names.append(None)
            continue
        name = f"f_{k:03d}.akf4"
        akf4.write_field(out / name, f)
        names.append(name)
    with open(out / "report.json", "w") as fh:
        json.dump(_jsonable(res.to_json(names)), fh, indent=2)
    print(f"status {res.status}; {sum(x is not None for x in names)} steps written to {out}")
    return 0


def cmd_check(args):
    ok, _ = run_suite(args.only or None, stream=sys.stdout)
    return 0 if ok else 1


def cmd_oracle(args):
    _dump(oracle_report(n=args.n))
    return 0


def cmd_curvature(args):
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    Jc = path_evaluate(cfg.path, args.t, cfg.grid)
    rho = hermitian_ricci(Jc)
    s = hermitian_scalar_from_rho(rho, Jc.omega)
    akf4.write_form(out / "rho.akf4", rho)
    akf4.write_field(out / "s.akf4", np.broadcast_to(s, cfg.grid.shape))
    _dump(curvature_report(Jc, rho=rho, s=s))
    return 0


def cmd_hminus(args):
    cfg = load_config(args.config)
    k = args.t_samples
    if k < 1:
        raise SystemExit("--t-samples must be positive")
    times = [0.0] if k == 1 else [i * cfg.path.t_max / (k - 1) for i in range(k)]
    rows = []
    for t in times:
        Jc = path_evaluate(cfg.path, t, cfg.grid)
        try:
            ctx = kernel_detect(Jc, tol=cfg.solver.ker_tol, seed=cfg.solver.seed)
            rows.append({"t": t, "dim_kernel": ctx.dim_kernel, "h_minus": ctx.h_minus, "gap": ctx.gap})
        except AmbiguousKernel as exc:
            vals = np.asarray(exc.eigenvalues)
            above = vals[vals >= exc.tol]
            rows.append({"t": t, "dim_kernel": None, "h_minus": None,
                         "gap": float(above.min()) if len(above) else None})
    _dump(rows)
    return 0


def cmd_state(args):
    cfg = load_config(args.config)
    out = _outdir(args, cfg)
    data, _ = akf4.read_field(args.f)
    if data.shape[0] != 1 or data.shape[1] != cfg.grid.n:
        raise SystemExit(f"{args.f} is not a scalar field on the n = {cfg.grid.n} grid")
    f = _grid.zero_mean_project(data[0])
    Jc = path_evaluate(cfg.path, args.t, cfg.grid)
    ctx = kernel_detect(Jc, tol=cfg.solver.ker_tol, seed=cfg.solver.seed)
    state = build_state(args.t, f, ctx)
    r = residual_from_state(state, ctx)
    diag = extremal_diagnostics(state, ctx)
    shape = cfg.grid.shape
    akf4.write_field(out / "f.akf4", f)
    akf4.write_form(out / "psi_f.akf4", state.psi_f)
    akf4.write_form(out / "alpha.akf4", state.alpha)
    akf4.write_form(out / "omega_f.akf4", state.omega_f)
    akf4.write_field(out / "g_f.akf4", np.broadcast_to(state.g_f.g, (4, 4) + shape).reshape((16,) + shape))
    akf4.write_field(out / "F.akf4", state.F)
    akf4.write_field(out / "s.akf4", np.broadcast_to(state.s_def, shape))
    _dump({
        "F_minmax": [float(state.F.min()), float(state.F.max())],
        "residual_norm": residual_norm(resolved_residual(r)),
        "calabi_energy": diag["calabi_energy"],
        "killing_defect": diag["killing_defect"],
    })
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="akstab", description="Extremal almost-Kaehler metrics on the flat 4-torus.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="continue extremal potentials along a path")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("check", help="run the acceptance suite (exit 0/1)")
    s.add_argument("--only", nargs="*", help="restrict to named criteria")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("oracle", help="print the cross-check oracles as JSON")
    s.add_argument("--n", type=int, default=16)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("curvature", help="hermitian Ricci form and scalar curvature at t")
    s.add_argument("--config", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_curvature)

    s = sub.add_parser("hminus", help="kernel dimension and h- along the path")
    s.add_argument("--config", required=True)
    s.add_argument("--t-samples", type=int, required=True)
    s.set_defaults(func=cmd_hminus)

    s = sub.add_parser("state", help="the deformation generated by a potential file")
    s.add_argument("--config", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--f", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_state)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

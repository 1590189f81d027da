"""Continue along the integrable bump and report the cross-checks at each step.

The Kaehler bump has nonconstant scalar curvature at every t > 0, so Newton
has real work to do; Calabi energy of the converged state is compared with
the energy at f = 0.
"""
import argparse
import json

from akstab import checks
from akstab.deformation import build_state, extremal_diagnostics
from akstab.solver import ContinuationConfig, continue_path, system_crosscheck


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--t-max", type=float, default=0.2)
    ap.add_argument("--steps", type=int, default=4)
    args = ap.parse_args()
    path = checks.bump_path(checks.KAEHLER_BUMP, args.t_max)
    cfg = ContinuationConfig(t_max=args.t_max, steps=args.steps, n=args.n)

    def on_step(t, state, ctx):
        start = extremal_diagnostics(build_state(t, 0 * state.f, ctx, check=False), ctx)
        row = {"t": t, "calabi_f0": start["calabi_energy"]}
        row.update(system_crosscheck(state, ctx))
        print(json.dumps(row), flush=True)

    res = continue_path(path, cfg, on_step=on_step)
    print(json.dumps({k: v for k, v in res.to_json().items() if k != "f_t"}, indent=1))


if __name__ == "__main__":
    main()

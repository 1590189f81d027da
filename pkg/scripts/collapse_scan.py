"""Lowest anti-invariant eigenvalue of P along the collapsing bump path.

The harmonic anti-invariant form killed by the bump lifts off zero at order
t^2; the fitted coefficient should not depend on n.
"""
import argparse
import json

import numpy as np

from akstab import checks
from akstab import grid as _grid
from akstab.elliptic import N_ANTI, PrimitiveOperator, _lobpcg, _chunked, spectral_preconditioner, start_vectors
from akstab.structures import path_evaluate


def anti_spectrum(Jc, count=5, seed=0):
    grid = Jc.grid
    op = PrimitiveOperator(Jc)
    X = start_vectors(grid, N_ANTI, count - N_ANTI, np.random.default_rng(seed))
    pre = _chunked(spectral_preconditioner(grid.n, 0.05), 12)
    vals, _ = _lobpcg(_chunked(op.anti, 12), X, pre, 1e-8, 80)
    return vals


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[8, 16])
    ap.add_argument("--t", type=float, nargs="+", default=[0.025, 0.05, 0.1, 0.2])
    args = ap.parse_args()
    rows = []
    for n in args.n:
        grid = _grid.GridSpec(n)
        path = checks.bump_path(checks.COLLAPSE_BUMP, max(args.t))
        for t in args.t:
            vals = anti_spectrum(path_evaluate(path, t, grid))
            low = float(vals[N_ANTI - 1])
            rows.append({"n": n, "t": t, "lifted": low, "lifted_over_t2": low / t ** 2,
                         "next": float(vals[N_ANTI])})
            print(json.dumps(rows[-1]), flush=True)


if __name__ == "__main__":
    main()

"""JSON run configuration.

Keys::

    grid.n
    path.kind, path.S, path.t_max, path.samples, path.file
    solver.t_max, solver.steps, solver.newton_tol, solver.max_newton_iters,
    solver.fd_epsilon, solver.ker_tol
    output.dir

``path.t_max`` defaults to ``solver.t_max``.  Relative ``path.file`` entries
resolve against the directory of the config file.
"""
import json
from dataclasses import dataclass
from pathlib import Path

from .grid import GridSpec
from .solver import ContinuationConfig
from .structures import DeformationPath


@dataclass
class RunConfig:
    grid: GridSpec
    path: DeformationPath
    solver: ContinuationConfig
    output_dir: str = "out"


def parse_config(data, base_dir="."):
    grid = GridSpec(int(data.get("grid", {}).get("n", 16)))
    s = dict(data.get("solver", {}))
    known = {"t_max", "steps", "newton_tol", "max_newton_iters", "fd_epsilon", "ker_tol"}
    unknown = set(s) - known - {"gmres_rtol", "seed"}
    if unknown:
        raise ValueError(f"unknown solver keys: {sorted(unknown)}")
    solver = ContinuationConfig(n=grid.n, **s)
    p = dict(data["path"])
    p.setdefault("t_max", solver.t_max)
    if p.get("file") is not None:
        p["file"] = str(Path(base_dir) / p["file"])
    path = DeformationPath.from_config(p)
    if path.t_max < solver.t_max - 1e-12:
        raise ValueError("solver.t_max exceeds path.t_max")
    out = data.get("output", {}).get("dir", "out")
    return RunConfig(grid=grid, path=path, solver=solver, output_dir=out)


def load_config(path):
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    return parse_config(data, base_dir=path.parent)

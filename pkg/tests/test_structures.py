import numpy as np
import pytest
from hypothesis import given, strategies as st

from akstab import checks
from akstab import grid as G
from akstab.errors import DegenerateStructure, MetricError, PathRangeError, StructureError
from akstab.forms import MetricField
from akstab.structures import (J0, CompatibleStructure, DeformationPath, metric_from, nijenhuis_norm,
                               path_evaluate, polar_compatible, standard_structure)

GRID = G.GridSpec(8)


def test_standard_structure():
    Jc = standard_structure(GRID)
    assert all(v == 0 for v in Jc.compatibility_residuals().values())
    assert np.array_equal(Jc.metric.g.reshape(4, 4), np.eye(4))
    assert np.array_equal(metric_from(Jc.J, Jc.W).reshape(4, 4), np.eye(4))
    assert nijenhuis_norm(Jc) == 0.0


def test_polar_fixed_points():
    eye = np.eye(4).reshape(4, 4, 1, 1, 1, 1)
    for c in (1.0, 2.5, 0.3):
        Jc = polar_compatible(MetricField(c * eye), GRID)
        assert np.max(np.abs(Jc.J.reshape(4, 4) - J0)) <= 1e-14


def test_polar_rejects_bad_metrics():
    eye = np.eye(4).reshape(4, 4, 1, 1, 1, 1)
    with pytest.raises(MetricError):
        polar_compatible(MetricField(-eye, check=False), GRID)
    squeezed = eye.copy()
    squeezed[0, 0] = 1e-14
    with pytest.raises(DegenerateStructure):
        polar_compatible(MetricField(squeezed, check=False), GRID)


def test_bump_structure_is_compatible_and_not_integrable():
    Jc = path_evaluate(checks.bump_path(checks.KEEP_BUMP, 0.5), 0.5, GRID)
    res = Jc.compatibility_residuals()
    assert res["j_squared"] <= 1e-10 and res["omega_invariance"] <= 1e-10
    Jc.metric.validate()
    assert nijenhuis_norm(Jc) > 1e-3


@given(st.floats(-0.5, 0.5))
def test_constant_linear_path_is_integrable(t):
    path = DeformationPath("constant_linear", S=checks.CONSTANT_S, t_max=0.5)
    Jc = path_evaluate(path, t, GRID)
    assert Jc.constant
    assert nijenhuis_norm(Jc) <= 1e-10
    assert max(Jc.compatibility_residuals().values()) <= 1e-10


@given(st.integers(0, 2**31 - 1))
def test_polar_retraction_invariants(seed):
    Jc = checks.random_structure(GRID, np.random.default_rng(seed))
    assert max(Jc.compatibility_residuals().values()) <= 1e-10


def test_path_evaluate_base_and_range():
    path = checks.bump_path(checks.COLLAPSE_BUMP, 0.2)
    base = path_evaluate(path, 0.0, GRID)
    assert np.max(np.abs(base.J.reshape(4, 4) - J0)) <= 1e-12
    with pytest.raises(PathRangeError):
        path_evaluate(path, 0.3, GRID)
    steep = DeformationPath("constant_linear", S=np.diag([-4.0, 0, 0, 0]).tolist(), t_max=1.0)
    with pytest.raises(PathRangeError):
        path_evaluate(steep, 0.5, GRID)


def test_path_config_validation():
    with pytest.raises(ValueError):
        DeformationPath("spiral")
    path = DeformationPath("constant_linear", S=[[1, 2, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    with pytest.raises(ValueError):
        path.direction(GRID)


def test_user_file_path(tmp_path):
    from akstab import akf4
    J1 = path_evaluate(checks.bump_path(checks.KEEP_BUMP, 0.5), 0.5, GRID)
    akf4.write_field(tmp_path / "J.akf4", np.broadcast_to(J1.J, (4, 4) + GRID.shape).reshape((16,) + GRID.shape))
    path = DeformationPath("user_file", t_max=1.0, file=str(tmp_path / "J.akf4"))
    Jc = path_evaluate(path, 1.0, GRID)
    # g(J_1) retracts back onto J_1
    assert np.max(np.abs(Jc.J - J1.J)) <= 1e-10


def test_incompatible_structure_rejected():
    J = np.eye(4).reshape(4, 4, 1, 1, 1, 1)
    with pytest.raises(StructureError):
        CompatibleStructure(J, GRID)
    # J0 with reversed orientation on the second plane is not omega-compatible
    J = J0.copy()
    J[2:, 2:] *= -1
    with pytest.raises(StructureError):
        CompatibleStructure(J.reshape(4, 4, 1, 1, 1, 1), GRID)

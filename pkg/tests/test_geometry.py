import numpy as np
import pytest

from degbill import geometry
from degbill.checks import geometry_checks
from degbill.errors import ConfigError, OutOfTubeError


@pytest.mark.parametrize("name", ["triangle", "centers3d", "skew_wires", "rc3bp"])
def test_invariant_suite_passes(name, request):
    problem = request.getfixturevalue(name)
    for c in geometry_checks(problem, n_samples=100):
        assert c.passed, c.line()


def test_default_rho_is_fraction_of_separation(triangle, skew_wires):
    assert triangle.rho == pytest.approx(0.05)
    assert skew_wires.min_separation() == pytest.approx(1.0)
    assert geometry.n_centers([[0.0, 0.0]]).rho == pytest.approx(0.05)


def test_exp_map_and_coordinates_round_trip(skew_wires):
    chart = skew_wires.tube(1)
    q = chart.exp_map(np.array([0.3]), np.array([0.01, -0.02]))
    x, u = chart.coordinates(q)
    assert np.allclose(x, [0.3]) and np.allclose(u, [0.01, -0.02])
    assert skew_wires.components[1].distance(q) == pytest.approx(np.hypot(0.01, 0.02))


def test_offset_outside_tube_rejected(triangle):
    with pytest.raises(OutOfTubeError):
        triangle.tube(0).exp_map(np.zeros(0), np.array([0.2, 0.0]))


def test_overlapping_tubes_flagged():
    p = geometry.n_centers([[0.0, 0.0], [0.5, 0.0]], rho=0.3)
    checks = {c.name: c for c in geometry_checks(p, n_samples=20)}
    assert not checks["tubes disjoint (no cut locus inside tubes)"].passed


def test_broken_frame_flagged():
    p = geometry.n_centers([[0.0, 0.0], [1.0, 0.0]], frames=[np.array([[1.0, 0.5], [0.0, 1.0]]),
                                                         None])
    checks = {c.name: c for c in geometry_checks(p, n_samples=20)}
    assert not checks["normal frame orthonormal"].passed


def test_hamiltonian_and_speed(triangle):
    q = np.array([0.4, 0.3])
    v = triangle.speed(q, 0.5, -1e-3)
    p = np.array([v, 0.0])
    assert triangle.hamiltonian(q, p, -1e-3) == pytest.approx(0.5, abs=1e-14)


def test_rotating_frame_gyro(rc3bp):
    q = np.array([0.3, 0.2, 0.1])
    # Omega x q for unit rotation about the third axis
    assert np.allclose(rc3bp.gyro(q), [-0.2, 0.3, 0.0])


def test_problem_from_dict_kinds():
    p = geometry.problem_from_dict({"kind": "wires-3d",
                                    "wires": [{"point": [0, 0, 0], "direction": [0, 0, 2]}]})
    assert p.components[0].kind == "line"
    assert np.allclose(p.components[0].direction, [0, 0, 1])
    with pytest.raises(ConfigError):
        geometry.problem_from_dict({"kind": "n-centers-3d", "centers": [[0.0, 0.0]]})
    with pytest.raises(ConfigError):
        geometry.problem_from_dict({"kind": "circles"})


def test_tangent_hamiltonian_matches_constrained_minimum(skew_wires):
    x, y = np.array([0.2]), np.array([0.3])
    th = geometry.tangent_hamiltonian(skew_wires, 0, x, y)
    assert th.F_value == pytest.approx(geometry.constrained_minimum(skew_wires, 0, x, y),
                                       abs=1e-8)

import numpy as np
import pytest

from degbill import bvp, geometry
from degbill.errors import NoConnectionError


def test_free_action_is_speed_times_distance():
    p = geometry.free_problem(3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        af = bvp.connect_fixed_energy(p, 0.0, a, b, 0.5)
        assert af.S == pytest.approx(np.linalg.norm(b - a), abs=1e-9)
        assert af.transit_time == pytest.approx(np.linalg.norm(b - a), abs=1e-9)


def _fd_gradient(problem, mu, a, b, E, h=1e-6):
    m = a.shape[0]
    g = np.zeros(2 * m)
    for i in range(2 * m):
        e = np.zeros(2 * m)
        e[i] = h
        plus = bvp.connect_fixed_energy(problem, mu, a + e[:m], b + e[m:], E).S
        minus = bvp.connect_fixed_energy(problem, mu, a - e[:m], b - e[m:], E).S
        g[i] = (plus - minus) / (2 * h)
    return g


def test_boundary_momenta_are_action_gradient(rc3bp):
    a = np.array([0.2, -0.3, 0.1])
    b = np.array([-0.1, 0.3, 0.0])
    af = bvp.connect_fixed_energy(rc3bp, 0.0, a, b, -1.0)
    g = _fd_gradient(rc3bp, 0.0, a, b, -1.0)
    dm, dp = af.gradient()
    assert np.allclose(np.r_[dm, dp], g, rtol=1e-5, atol=1e-7)


def test_hessian_matches_finite_differences(triangle):
    a = np.array([0.3, 0.4])
    b = np.array([0.7, 0.2])
    mu = -1e-3
    af = bvp.connect_fixed_energy(triangle, mu, a, b, 0.5)
    h = 1e-5
    fd = np.zeros((4, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        ap = bvp.connect_fixed_energy(triangle, mu, a + e[:2], b + e[2:], 0.5)
        am = bvp.connect_fixed_energy(triangle, mu, a - e[:2], b - e[2:], 0.5)
        fd[:, i] = (np.r_[-ap.p_minus, ap.p_plus] - np.r_[-am.p_minus, am.p_plus]) / (2 * h)
    assert np.max(np.abs(fd - af.hessian)) <= 1e-5 * np.max(np.abs(af.hessian))


def test_twist_annihilates_endpoint_velocities(rc3bp):
    af = bvp.connect_fixed_energy(rc3bp, 0.0, [0.2, -0.3, 0.1], [-0.1, 0.3, 0.0], -1.0)
    assert np.linalg.norm(af.B @ af.v_minus) < 1e-6
    assert np.linalg.norm(af.B.T @ af.v_plus) < 1e-6


def test_restricted_twist_on_wires(skew_wires):
    c0, c1 = skew_wires.components
    af = bvp.connect_fixed_energy(skew_wires, 0.0, c0.chart([0.1]), c1.chart([-0.2]), 0.5)
    rt = bvp.restricted_twist(af, 0, [0.1], 1, [-0.2])
    assert rt.matrix.shape == (1, 1) and rt.transverse_minus and rt.transverse_plus


def test_unknown_orbit_class_and_forbidden_region(rc3bp):
    with pytest.raises(NoConnectionError):
        bvp.connect_fixed_energy(rc3bp, 0.0, [0.2, 0, 0], [0.3, 0, 0], -1.0, "loop")
    # the far endpoint lies outside the Hill region at this energy
    with pytest.raises(NoConnectionError):
        bvp.connect_fixed_energy(rc3bp, 0.0, [0.2, 0, 0], [3.0, 0, 0], -1.0)


def test_register_orbit_class():
    p = geometry.free_problem(2)
    bvp.register_orbit_class("straight-test", lambda pr, mu, a, b, E: (b - a, 1.0))
    af = bvp.connect_fixed_energy(p, 0.0, [0, 0], [1, 1], 0.5, "straight-test")
    assert af.S == pytest.approx(np.sqrt(2.0))

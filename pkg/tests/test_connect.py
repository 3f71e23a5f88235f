import numpy as np
import pytest

from degbill import connect
from degbill import regularize as reg
from degbill.errors import DomainError, GaugeSelectionError


def _on_circle(problem, k, angle, rho=None):
    rho = problem.rho if rho is None else rho
    return problem.components[k].base + rho * np.array([np.cos(angle), np.sin(angle)])


def test_reflect_once_free_center(triangle):
    a, b = 0.3, 1.9
    q_in, q_out = _on_circle(triangle, 0, a), _on_circle(triangle, 0, b)
    r = connect.reflect_once(triangle, 0.5, q_in, q_out, 0)
    assert r.R0 == pytest.approx(2 * triangle.rho, abs=1e-10)
    assert np.allclose(r.reflection_point, [0.0, 0.0], atol=1e-12)
    assert r.jump == pytest.approx(np.linalg.norm(q_in / np.linalg.norm(q_in)
                                                  + q_out / np.linalg.norm(q_out)), abs=1e-9)


def test_section_point_and_bounds(triangle):
    sp_in = connect.SectionPoint.from_ambient(triangle, _on_circle(triangle, 0, 0.2))
    sp_out = connect.SectionPoint.from_ambient(triangle, _on_circle(triangle, 0, 0.2 + np.pi))
    b = connect.section_bounds(triangle, sp_in, sp_out)
    assert b["close"] and not b["non_opposite"]


def test_ks_gauge_selection_rejects_opposite_offsets():
    u = np.array([0.02, 0.01, -0.03])
    with pytest.raises(GaugeSelectionError):
        connect.gauge_select_ks(reg.ks_lift(u), reg.ks_lift(-u), -1e-4)
    th, xi = connect.gauge_select_ks(reg.ks_lift(u), reg.ks_lift(np.array([0.0, 0.03, 0.0])),
                                     -1e-4)
    assert xi @ reg.ks_lift(np.array([0.0, 0.03, 0.0])) > 0


@pytest.mark.parametrize("mu", [-1e-4, 1e-4])
def test_shilnikov_lc_passage(free_center, mu):
    r = 0.05
    xi_in = reg.lift(np.array([r, 0.0]))
    xi_out = reg.lift(np.array([0.0, r]))
    if mu > 0:
        xi_out = -xi_out
    sol = connect.shilnikov_connect(free_center, 0.5, 0, np.zeros(0), xi_in, xi_out, mu)
    assert sol.residual < 1e-9
    assert np.allclose(sol.state_in[:2], xi_in, atol=1e-9)
    assert np.allclose(sol.state_out[:2], xi_out, atol=1e-9)
    assert sol.level_drift < 1e-9
    assert abs(sol.T - sol.T_asymptotic) < 0.2 * sol.T


def test_shilnikov_ks_passage(centers3d):
    xi_in = reg.lift(np.array([0.02, 0.0, 0.0]))
    xi_out = reg.lift(np.array([0.0, 0.02, 0.0]))
    sol = connect.shilnikov_connect(centers3d, 0.5, 0, np.zeros(0), xi_in, xi_out, -1e-4)
    assert sol.residual < 1e-9
    assert sol.gauge_drift < 1e-10
    assert abs(reg.gauge_value(sol.xi0, sol.eta0)) < 1e-10


def test_shilnikov_domain_errors(free_center):
    xi = reg.lift(np.array([0.05, 0.0]))
    with pytest.raises(DomainError):
        connect.shilnikov_connect(free_center, 0.5, 0, np.zeros(0), xi, xi, 0.0)
    with pytest.raises(DomainError):
        connect.shilnikov_connect(free_center, 0.5, 0, np.zeros(0), xi, xi, 1e-4)


@pytest.mark.parametrize("mu", [-1e-4, 1e-4])
def test_connect_physical_energy_and_gradient(triangle, mu):
    a, b = 2.2, 0.6
    rho = triangle.rho
    con = connect.connect_physical(triangle, 0.5, _on_circle(triangle, 0, a),
                                   _on_circle(triangle, 0, b), mu)
    assert triangle.hamiltonian(con.q_in, con.p_in, mu) == pytest.approx(0.5, abs=1e-9)
    assert triangle.hamiltonian(con.q_out, con.p_out, mu) == pytest.approx(0.5, abs=1e-9)
    # dR/d(angle_out) = p_out . tangent
    h = 1e-5
    plus = connect.connect_physical(triangle, 0.5, _on_circle(triangle, 0, a),
                                    _on_circle(triangle, 0, b + h), mu, guess=con)
    minus = connect.connect_physical(triangle, 0.5, _on_circle(triangle, 0, a),
                                     _on_circle(triangle, 0, b - h), mu, guess=con)
    t_out = rho * np.array([-np.sin(b), np.cos(b)])
    assert (plus.R - minus.R) / (2 * h) == pytest.approx(con.p_out @ t_out, rel=1e-5)
    # mixed second derivative from the Hessian
    t_in = rho * np.array([-np.sin(a), np.cos(a)])
    mixed = t_in @ con.hessian[:2, 2:] @ t_out
    fd = t_in @ (-(plus.p_in - minus.p_in) / (2 * h))
    assert mixed == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_attracting_closest_approach_scales_with_mu(triangle):
    d = []
    for mu in (-1e-4, -1e-5):
        con = connect.connect_physical(triangle, 0.5, _on_circle(triangle, 0, 2.2),
                                       _on_circle(triangle, 0, 0.6), mu)
        d.append(con.min_distance / abs(mu))
    assert d[0] == pytest.approx(d[1], rel=0.05)


def test_connect_physical_rejects_pass_through(triangle):
    with pytest.raises(DomainError):
        connect.connect_physical(triangle, 0.5, _on_circle(triangle, 0, 0.3),
                                 _on_circle(triangle, 0, 0.3 + np.pi), -1e-4)
    with pytest.raises(DomainError):
        connect.connect_physical(triangle, 0.5, _on_circle(triangle, 0, 0.3),
                                 _on_circle(triangle, 0, 1.3), 0.0)

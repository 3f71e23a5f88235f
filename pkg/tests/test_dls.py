import warnings

import numpy as np
import pytest

from degbill import dls
from degbill.errors import DegenerateChainWarning, DomainError, TwistConditionError


def _solve(problem, comps, pts, kind="periodic", **kw):
    fam = dls.GeneratingFamily(problem, problem.energy)
    ch = dls.Chain(kind, comps, pts, **kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateChainWarning)
        out = dls.newton_periodic(fam, ch) if kind == "periodic" else dls.newton_finite(fam, ch)
    return fam, out


def test_triangle_chain_is_critical(triangle):
    fam, ch = _solve(triangle, [0, 1, 2], [np.zeros(0)] * 3)
    assert ch.converged and ch.residuals[-1] == 0.0
    assert sum(s.value for s in ch.segments) == pytest.approx(3.0, abs=1e-9)
    reps = dls.admissibility(ch, triangle)
    assert all(r.jump_ok and not r.straight_reflection for r in reps)


def test_skew_wires_chain(skew_wires):
    fam, ch = _solve(skew_wires, [0, 1], [[0.05], [-0.03]])
    assert ch.converged
    assert np.allclose(np.concatenate(ch.points), 0.0, atol=1e-9)
    assert ch.hessian.nondegenerate()
    assert np.allclose(np.linalg.eigvalsh(ch.hessian.matrix), [2.0, 2.0], atol=1e-6)
    assert all(r.straight_reflection for r in dls.admissibility(ch))


def test_parallel_wires_degenerate_with_kernel(parallel_wires):
    fam = dls.GeneratingFamily(parallel_wires, 0.5)
    with pytest.warns(DegenerateChainWarning):
        ch = dls.newton_periodic(fam, dls.Chain("periodic", [0, 1], [[0.1], [0.1]]))
    k = ch.kernel
    assert k.shape == (2, 1)
    assert abs(abs(k[0, 0]) - abs(k[1, 0])) < 1e-8


def test_chain_hessian_matches_finite_differences(skew_wires):
    fam = dls.GeneratingFamily(skew_wires, 0.5)
    pts = [np.array([0.2]), np.array([-0.1])]
    ch = dls.Chain("periodic", [0, 1], pts)
    dls.evaluate_chain(fam, ch)
    H = ch.hessian.matrix
    h = 1e-5
    fd = np.zeros((2, 2))
    for i in range(2):
        dp = [p.copy() for p in pts]
        dm = [p.copy() for p in pts]
        dp[i] += h
        dm[i] -= h
        gp = np.concatenate(dls.chain_gradient(fam, dls.Chain("periodic", [0, 1], dp)))
        gm = np.concatenate(dls.chain_gradient(fam, dls.Chain("periodic", [0, 1], dm)))
        fd[:, i] = (gp - gm) / (2 * h)
    assert np.max(np.abs(fd - H)) <= 1e-5 * np.max(np.abs(H))


def test_finite_chain(triangle):
    fam, ch = _solve(triangle, [0], [np.zeros(0)], "finite", a=[-0.5, 0.3], b=[-0.5, -0.3])
    assert ch.converged and len(ch.segments) == 2
    d = dls.admissibility(ch)[0]
    assert d.jump_ok


def test_finite_chain_needs_ends():
    with pytest.raises(DomainError):
        dls.Chain("finite", [0], [np.zeros(0)])
    with pytest.raises(DomainError):
        dls.Chain("loop", [0], [np.zeros(0)])


def test_certificates(skew_wires, parallel_wires):
    fam_s, ch_s = _solve(skew_wires, [0, 1], [[0.05], [-0.03]])
    good = dls.hyperbolicity_certificate(fam_s, ch_s)
    assert good.passed and good.spread < 0.1
    fam_p, ch_p = _solve(parallel_wires, [0, 1], [[0.1], [0.1]])
    bad = dls.hyperbolicity_certificate(fam_p, ch_p)
    assert not bad.passed and bad.growth_exponent == pytest.approx(2.0, abs=0.2)


def test_point_chain_certificate_is_vacuous(triangle):
    fam, ch = _solve(triangle, [0, 1, 2], [np.zeros(0)] * 3)
    rep = dls.hyperbolicity_certificate(fam, ch)
    assert rep.passed and rep.vacuous


def test_poincare_maps(parallel_wires, skew_wires):
    _, ch = _solve(parallel_wires, [0, 1], [[0.1], [0.1]])
    rep = dls.poincare_maps(ch)
    assert abs(np.linalg.det(rep.monodromy) - 1.0) < 1e-8
    # degenerate chain: parabolic monodromy
    assert np.allclose(rep.eigenvalues, 1.0, atol=1e-6)
    # perpendicular wires: the common-normal bounce has zero tangential twist
    _, chs = _solve(skew_wires, [0, 1], [[0.05], [-0.03]])
    with pytest.raises(TwistConditionError):
        dls.poincare_maps(chs)


def test_collision_map_jacobian_is_symplectic(parallel_wires):
    fam = dls.GeneratingFamily(parallel_wires, 0.5)
    res = dls.collision_map(fam, fam.symbol(0, 1), np.array([0.1, 0.05]))
    assert abs(np.linalg.det(res.jacobian) - 1.0) < 1e-6
    # free flight between parallel wires keeps the tangential momentum
    assert res.y == pytest.approx(0.05, abs=1e-9)


def test_lyapunov_schmidt_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(20):
        na, nx = rng.integers(1, 8, 2)
        G1a, G1x = rng.normal(size=(na, na)), rng.normal(size=(na, nx))
        G2a, G2x = rng.normal(size=(nx, na)), rng.normal(size=(nx, nx)) + 3 * np.eye(nx)
        rep = dls.lyapunov_schmidt_equivalence(G1a, G1x, G2a, G2x)
        assert rep.agree and rep.norm_inequality


def test_lyapunov_schmidt_singular_reduction():
    G2x = np.eye(2)
    G2a = np.array([[1.0], [0.0]])
    G1x = np.array([[1.0, 0.0]])
    G1a = np.array([[1.0]])  # DGamma = 1 - 1 = 0
    rep = dls.lyapunov_schmidt_equivalence(G1a, G1x, G2a, G2x)
    assert not rep.full_invertible and not rep.reduced_invertible and rep.agree

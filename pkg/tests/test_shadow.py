import warnings

import numpy as np
import pytest

from degbill import dls, geometry, shadow
from degbill.errors import DegenerateChainWarning, DomainError, NoConnectionError


@pytest.fixture(scope="module")
def tri_sp(triangle):
    fam = dls.GeneratingFamily(triangle, 0.5)
    ch = dls.newton_periodic(fam, dls.Chain("periodic", [0, 1, 2], [np.zeros(0)] * 3))
    return shadow.build_sections(triangle, ch, family=fam)


def test_sections_on_tube_boundaries(tri_sp, triangle):
    assert len(tri_sp.q0) == 6
    for q, k in zip(tri_sp.q0, tri_sp.components):
        assert triangle.components[k].distance(q) == pytest.approx(triangle.rho, abs=1e-10)


def test_phi0_value_and_gradient_at_chain(tri_sp):
    val, grad = shadow.phi_mu(tri_sp, None, 0.0)
    assert val == pytest.approx(3.0, abs=1e-9)
    assert np.max(np.abs(grad)) < 1e-10


def test_phi_gradient_matches_finite_differences(tri_sp):
    mu = -1e-4
    qs = tri_sp.retract(tri_sp.q0, 1e-3 * np.arange(1, tri_sp.nvar + 1) / tri_sp.nvar)
    val, grad = shadow.phi_mu(tri_sp, qs, mu)
    # Phi carries ~1e-12 integration noise, so the step cannot be much smaller
    h = 1e-4
    for i in range(tri_sp.nvar):
        e = np.zeros(tri_sp.nvar)
        e[i] = h
        vp, _ = shadow.phi_mu(tri_sp, tri_sp.retract(qs, e), mu)
        vm, _ = shadow.phi_mu(tri_sp, tri_sp.retract(qs, -e), mu)
        assert (vp - vm) / (2 * h) == pytest.approx(grad[i], rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("mu", [-1e-4, 1e-4])
def test_shadow_periodic_triangle(tri_sp, mu):
    res = shadow.shadow_periodic(tri_sp, mu)
    assert res.iterations <= 8 and res.gradient_norm < 1e-9
    assert res.momentum_mismatch < 1e-8 and res.energy_error < 1e-8
    assert res.collision_free
    assert 0.01 < res.scaled_error < 1.0
    assert res.within_neighborhoods


def test_mu_scan_failure_row(tri_sp, monkeypatch, tmp_path):
    real = shadow._shadow

    def flaky(sp, mu, q=None, max_iter=20, tol=shadow.GRAD_TOL):
        if abs(mu) < 5e-5:
            raise NoConnectionError("forced failure")
        return real(sp, mu, q, max_iter, tol)

    monkeypatch.setattr(shadow, "_shadow", flaky)
    rows = shadow.mu_scan(tri_sp, [-1e-4, -1e-5, -1e-6], csv_path=tmp_path / "s.csv")
    assert [r["status"] for r in rows] == ["ok", "failed: forced failure"]
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",") == shadow.SCAN_COLUMNS and len(lines) == 3
    with pytest.raises(NoConnectionError):
        shadow.mu_scan(tri_sp, [-1e-5])
    with pytest.raises(DomainError):
        shadow.mu_scan(tri_sp, [0.0])


def test_finite_chain_shadow(triangle):
    fam = dls.GeneratingFamily(triangle, 0.5)
    ch = dls.newton_finite(fam, dls.Chain("finite", [0], [np.zeros(0)], a=[-0.5, 0.3],
                                          b=[-0.5, -0.3]))
    sp = shadow.build_sections(triangle, ch, family=fam)
    res = shadow.shadow_finite(sp, mu=-1e-4)
    assert res.gradient_norm < 1e-9
    with pytest.raises(DomainError):
        shadow.shadow_periodic(sp, -1e-4)
    with pytest.raises(DomainError):
        shadow.shadow_finite(sp, a=[0.0, 1.0], mu=-1e-4)


def test_zero_collision_finite_chain_is_plain_bvp(triangle):
    fam = dls.GeneratingFamily(triangle, 0.5)
    ch = dls.newton_finite(fam, dls.Chain("finite", [], [], a=[0.2, 0.3], b=[0.8, 0.3]))
    sp = shadow.build_sections(triangle, ch, family=fam)
    res = shadow.shadow_finite(sp, mu=-1e-4)
    assert res.evaluation.value == pytest.approx(0.6, rel=1e-3)


def test_phi0_nondegeneracy_matches_chain_hessian(skew_wires, parallel_wires):
    for problem, pts, expect in ((skew_wires, [[0.05], [-0.03]], True),
                                 (parallel_wires, [[0.1], [0.1]], False)):
        fam = dls.GeneratingFamily(problem, 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateChainWarning)
            ch = dls.newton_periodic(fam, dls.Chain("periodic", [0, 1], pts))
        sp = shadow.build_sections(problem, ch, family=fam)
        rep = shadow.phi0_nondegeneracy(sp)
        assert rep.invertible == expect == ch.hessian.nondegenerate()


def test_straight_reflections_not_collision_free_for_repelling(skew_wires):
    fam = dls.GeneratingFamily(skew_wires, 0.5)
    ch = dls.newton_periodic(fam, dls.Chain("periodic", [0, 1], [[0.05], [-0.03]]))
    sp = shadow.build_sections(skew_wires, ch, family=fam)
    assert all(sp.straight)
    assert not shadow.shadow_periodic(sp, 1e-4).collision_free
    assert shadow.shadow_periodic(sp, -1e-4).collision_free


def test_shift_chains_unsupported(parallel_wires):
    fam = dls.GeneratingFamily(parallel_wires, 0.5)
    ch = dls.Chain("periodic", [0, 1], [[0.0], [0.0]], shift=[np.array([0.0])])
    dls.evaluate_chain(fam, ch)
    with pytest.raises(DomainError):
        shadow.build_sections(parallel_wires, ch, family=fam)


def test_admissible_word():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = shadow.admissible_word(4, 8, rng)
        L = len(w)
        assert L == 8
        assert all(w[i] != w[(i + 1) % L] and w[i] != w[(i + 2) % L] for i in range(L))
    with pytest.raises(DomainError):
        shadow.admissible_word(2, 4, rng)


def test_window_shadow_and_orbit_export(tmp_path):
    square = geometry.n_centers([[0, 0], [1, 0], [1, 1], [0, 1]])
    word = shadow.admissible_word(4, 8, np.random.default_rng(3))
    res = shadow.shadow_window(square, word, -1e-4)
    assert res.gradient_norm < 1e-9 and res.collision_free
    shadow.export_orbit_csv(res, tmp_path / "o.csv")
    head = (tmp_path / "o.csv").read_text().splitlines()[0]
    assert head == "piece,q1,q2"

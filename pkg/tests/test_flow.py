import numpy as np
import pytest

from degbill import flow, geometry, kernels
from degbill.errors import NeedsRegularization


def _state(problem, q, direction, E, mu):
    q = np.asarray(q, dtype=float)
    d = np.asarray(direction, dtype=float)
    return np.concatenate([q, problem.gyro(q) + problem.speed(q, E, mu) * d / np.linalg.norm(d)])


def test_free_motion_is_straight_with_action_speed_times_length():
    p = geometry.free_problem(2)
    s0 = _state(p, [0.0, 0.0], [1.0, 0.0], 0.5, 0.0)
    tr = flow.integrate(p, 0.0, s0, 2.0)
    assert np.allclose(tr.last[:2], [2.0, 0.0], atol=1e-12)
    assert flow.maupertuis_action(tr) == pytest.approx(2.0, abs=1e-12)


def test_energy_conserved_and_stm_symplectic(triangle):
    s0 = _state(triangle, [0.5, 0.3], [0.3, 1.0], 0.5, -1e-3)
    tr = flow.integrate(triangle, -1e-3, s0, 0.4, stm=True)
    H = [triangle.hamiltonian(s[:2], s[2:4], -1e-3) for s in tr.states]
    assert np.max(np.abs(np.array(H) - 0.5)) < 1e-11
    assert flow.symplecticity_defect(tr.stm) < 1e-9


def test_stm_matches_finite_differences(rc3bp):
    s0 = _state(rc3bp, [0.3, -0.4, 0.1], [0.2, 1.0, 0.1], -1.0, 0.0)
    tr = flow.integrate(rc3bp, 0.0, s0, 0.5, stm=True)
    h = 1e-6
    fd = np.empty((6, 6))
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        fd[:, i] = (flow.integrate(rc3bp, 0.0, s0 + e, 0.5).last
                    - flow.integrate(rc3bp, 0.0, s0 - e, 0.5).last) / (2 * h)
    assert np.max(np.abs(fd - tr.stm)) < 1e-6


def test_handoff_signal_near_scatterer(triangle):
    # aimed straight at center 0
    s0 = _state(triangle, [0.3, 0.0], [-1.0, 0.0], 0.5, -1e-4)
    with pytest.raises(NeedsRegularization) as err:
        flow.integrate(triangle, -1e-4, s0, 1.0)
    last = err.value.trajectory.last[:2]
    assert triangle.scatterer_distance(last) == pytest.approx(
        flow.handoff_radius(triangle, -1e-4), rel=1e-6)


def test_distance_event_stops_on_tube(triangle):
    s0 = _state(triangle, [0.3, 0.01], [-1.0, 0.0], 0.5, 0.0)
    ev = flow.Event("distance", triangle.rho, 0, -1)
    tr = flow.integrate(triangle, 0.0, s0, 1.0, event=ev)
    assert tr.meta["event"]
    assert triangle.components[0].distance(tr.last[:2]) == pytest.approx(triangle.rho, abs=1e-10)


def test_dense_output_and_state_at(centers3d):
    s0 = _state(centers3d, [0.5, 0.5, 0.0], [1.0, 0.2, 0.3], 0.5, 0.0)
    tr = flow.integrate(centers3d, 0.0, s0, 0.3)
    t, ys = tr.dense(3)
    assert t[0] == tr.t0 and t[-1] == pytest.approx(tr.t1)
    mid = tr.state_at(0.15)
    ref = flow.integrate(centers3d, 0.0, s0, 0.15).last
    assert np.allclose(mid[:6], ref, atol=1e-10)


def test_npz_round_trip_and_csv(tmp_path, triangle):
    s0 = _state(triangle, [0.5, 0.3], [0.3, 1.0], 0.5, 0.0)
    tr = flow.integrate(triangle, 0.0, s0, 0.3, stm=True)
    flow.save_npz(tr, tmp_path / "o.npz")
    back = flow.load_npz(tmp_path / "o.npz", triangle)
    assert np.array_equal(back.states, tr.states) and np.array_equal(back.stm, tr.stm)
    flow.export_csv(tr, tmp_path / "o.csv")
    rows = (tmp_path / "o.csv").read_text().splitlines()
    assert rows[0].split(",") == ["t", "q1", "q2", "p1", "p2", "H", "dN"]
    assert len(rows) == len(tr.ts) + 1


def test_backends_agree(triangle):
    backends = kernels.backends()
    if len(backends) < 2:
        pytest.skip("compiled extension not built")
    ctype, cpos, cdir, calpha = triangle._arrays()
    y0 = np.concatenate([_state(triangle, [0.5, 0.3], [0.3, 1.0], 0.5, -1e-3), [0.0, 0.0]])
    out = {}
    for name, mod in backends.items():
        m = mod.Model(mod.PHYS, 2, triangle.omega_matrix, 0.0, 0.0, ctype, cpos, cdir, calpha,
                      0.5, -1e-3)
        out[name] = m.integrate(y0, 0.0, 0.5, 1e-12, 1e-12, False)[2]
    assert np.max(np.abs(out["compiled"] - out["python"])) < 1e-12

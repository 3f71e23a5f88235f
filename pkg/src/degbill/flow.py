"""Fixed-energy integration away from the scatterer, actions and sensitivities."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NeedsRegularization, StiffnessError

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-12
# root-finding tolerance for event location; run configurations may reset it
EVENT_TOL = 1e-13


@dataclass(frozen=True)
class PhaseState:
    """Point of phase space with the energy recorded at creation."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0
    energy: float | None = None

    @classmethod
    def create(cls, problem, q, p, t=0.0, mu=0.0):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase state must be finite")
        return cls(q, p, float(t), problem.hamiltonian(q, p, mu))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


@dataclass(frozen=True)
class Event:
    """Terminal event for the integrator.

    ``kind='distance'``: distance to component ``index`` (all if -1) equals
    ``level``.  ``kind='xi'``: ``|xi|^2`` equals ``level`` (regularized flows).
    """

    kind: str
    level: float
    index: int = -1
    direction: int = 0

    def code(self) -> int:
        return {"distance": kernels.EV_DIST, "xi": kernels.EV_XI}[self.kind]


@dataclass(eq=False)
class Trajectory:
    """Integrated orbit with dense output by re-stepping.

    Samples are stored in increasing time.  Each row of ``states`` holds the
    phase state followed by the accumulated action and, for regularized
    orbits, the physical time.

    Attributes
    ----------
    ts : array
        Sample times (physical time for physical orbits, regularized time
        for regularized ones).
    states : array
        ``(k, ns + 2)`` samples.
    status : int
        Integrator status code (see ``kernels``).
    stm : array or None
        State-transition matrix from the first integration point to the last
        (in integration direction) when requested.
    """

    model: object
    ts: np.ndarray
    states: np.ndarray
    energy: float
    mu: float
    status: int
    stm: np.ndarray | None = None
    kind: str = "physical"
    problem: object = None
    component: int | None = None
    method: int = kernels.METHOD_DOP853
    meta: dict = field(default_factory=dict)

    @property
    def ns(self) -> int:
        return self.states.shape[1] - 2

    @property
    def t0(self) -> float:
        return float(self.ts[0])

    @property
    def t1(self) -> float:
        return float(self.ts[-1])

    @property
    def first(self) -> np.ndarray:
        return self.states[0, :self.ns].copy()

    @property
    def last(self) -> np.ndarray:
        return self.states[-1, :self.ns].copy()

    @property
    def action(self) -> float:
        return float(self.states[-1, self.ns] - self.states[0, self.ns])

    @property
    def physical_duration(self) -> float:
        return float(self.states[-1, self.ns + 1] - self.states[0, self.ns + 1])

    def state_at(self, t: float) -> np.ndarray:
        """Phase state at time ``t`` (with action and time accumulators)."""
        ts = self.ts
        if t <= ts[0]:
            return self.states[0].copy()
        if t >= ts[-1]:
            return self.states[-1].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        h = t - ts[i]
        if h == 0.0:
            return self.states[i].copy()
        return self.model.step(self.states[i], h, False, self.method)

    def dense(self, per_step: int = 4) -> tuple[np.ndarray, np.ndarray]:
        """Samples at ``per_step`` equally spaced points inside every step."""
        out_t = [self.ts[0]]
        out_y = [self.states[0]]
        for i in range(len(self.ts) - 1):
            a, b = self.ts[i], self.ts[i + 1]
            for j in range(1, per_step + 1):
                tt = a + (b - a) * j / per_step
                out_t.append(tt)
                out_y.append(self.states[i + 1] if j == per_step
                             else self.model.step(self.states[i], tt - a, False, self.method))
        return np.array(out_t), np.array(out_y)

    def hamiltonian_values(self) -> np.ndarray:
        return np.array([self.model.hamiltonian(s[:self.ns]) for s in self.states])

    def positions(self) -> np.ndarray:
        """Ambient positions of the samples."""
        return project_positions(self, self.states)

    def min_scatterer_distance(self) -> float:
        if self.problem is None or not self.problem.components:
            return np.inf
        return float(min(self.problem.scatterer_distance(q) for q in self.positions()))


def project_positions(traj: Trajectory, rows: np.ndarray) -> np.ndarray:
    """Ambient positions of raw sample rows of ``traj``."""
    if traj.kind == "physical":
        m = traj.model.m
        return rows[:, :m].copy()
    from .regularize import physical_from_regularized
    return np.array([physical_from_regularized(traj.problem, traj.component, r[:traj.ns])[0]
                     for r in rows])


def run_model(model, s0, t0, t1, *, problem=None, kind="physical", component=None,
              stm=False, event: Event | None = None, guard=0.0, rtol=DEFAULT_RTOL,
              atol=DEFAULT_ATOL, method=kernels.METHOD_DOP853, max_steps=200000,
              h_max=0.0, energy=0.0, mu=0.0, action0=0.0, time0=0.0) -> Trajectory:
    """Integrate a kernel model and wrap the result as a :class:`Trajectory`."""
    ns = model.ns
    s0 = np.asarray(s0, dtype=float)
    y0 = np.concatenate([s0, [action0, time0]])
    if stm:
        y0 = np.concatenate([y0, np.eye(ns).ravel()])
    if event is not None:
        ek, ei, el, ed = event.code(), event.index, event.level, event.direction
    else:
        ek, ei, el, ed = kernels.EV_NONE, -1, 0.0, 0
    ts, states, yf, status = model.integrate(
        y0, float(t0), float(t1), rtol, atol, bool(stm), ek, ei, el, ed, float(guard),
        max_steps, 0.0, h_max, method, EVENT_TOL)
    if status == kernels.ST_UNDERFLOW:
        raise StiffnessError(f"step size underflow at t = {ts[-1]:.6g}")
    if status == kernels.ST_MAXSTEPS:
        raise StiffnessError("maximum number of steps exceeded")
    if status == kernels.ST_NONFINITE:
        raise StiffnessError(f"non-finite state at t = {ts[-1]:.6g}")
    phi = yf[ns + 2:].reshape(ns, ns).copy() if stm else None
    if t1 < t0:
        ts = ts[::-1].copy()
        states = states[::-1].copy()
    return Trajectory(model, ts, states, energy, mu, status, phi, kind, problem,
                      component, method)


def handoff_radius(problem, mu: float) -> float:
    """Distance below which physical integration hands off to regularized flow."""
    rho = problem.rho
    return max(10.0 * np.sqrt(abs(mu)) * rho, 1e-3 * rho)


def integrate(problem, mu: float, state0, t_final: float, tol: float = DEFAULT_RTOL,
              *, t0: float = 0.0, stm: bool = False, event: Event | None = None,
              guard: bool = True, energy: float | None = None) -> Trajectory:
    """Integrate ``H_mu`` from ``state0`` up to ``t_final`` (or a terminal event).

    Raises
    ------
    NeedsRegularization
        The orbit came within the handoff radius of the scatterer (``mu != 0``).
    StiffnessError
        Step size underflow.
    """
    s0 = state0.vector if isinstance(state0, PhaseState) else np.asarray(state0, dtype=float)
    model = problem.physical_model(mu)
    E = problem.hamiltonian(s0[:problem.dim], s0[problem.dim:], mu) if energy is None else energy
    g = handoff_radius(problem, mu) if (guard and mu != 0.0 and problem.components) else 0.0
    # sign-change detection needs steps shorter than the features it must resolve
    scales = []
    if event is not None and event.kind == "distance":
        scales.append(0.5 * event.level)
    if g > 0.0:
        scales.append(problem.rho)
    h_max = 0.0
    if scales:
        m = problem.dim
        speed = float(np.linalg.norm(s0[m:] - problem.gyro(s0[:m])))
        if speed > 0.0:
            h_max = min(scales) / speed
    traj = run_model(model, s0, t0, t_final, problem=problem, stm=stm, event=event,
                     guard=g, rtol=tol, atol=tol, energy=E, mu=mu, time0=t0, h_max=h_max)
    if traj.status == kernels.ST_GUARD:
        raise NeedsRegularization(
            f"orbit reached distance {g:.3g} from the scatterer at t = {traj.t1:.6g}", traj)
    traj.meta["event"] = traj.status == kernels.ST_EVENT
    return traj


def maupertuis_action(trajectory: Trajectory) -> float:
    """``int p dq`` along the orbit (accumulated alongside the integration)."""
    return trajectory.action


def sensitivity(problem, mu: float, trajectory: Trajectory, tol: float = DEFAULT_RTOL) -> np.ndarray:
    """State-transition matrix of the physical flow along ``trajectory``."""
    if trajectory.stm is not None and trajectory.kind == "physical":
        return trajectory.stm
    tr = run_model(problem.physical_model(mu), trajectory.first, trajectory.t0,
                   trajectory.t1, problem=problem, stm=True, rtol=tol, atol=tol,
                   energy=trajectory.energy, mu=mu)
    return tr.stm


def symplectic_form(n: int) -> np.ndarray:
    """Standard ``[[0, I], [-I, 0]]`` for ``(q, p)`` ordering."""
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


def symplecticity_defect(M: np.ndarray) -> float:
    n = M.shape[0] // 2
    J = symplectic_form(n)
    return float(np.max(np.abs(M.T @ J @ M - J)))


# ----------------------------------------------------------------------
# export
# ----------------------------------------------------------------------

def export_csv(trajectory: Trajectory, path, per_step: int = 1) -> None:
    """Write ``t, q1..qm, p1..pm, H, dN`` rows for a physical trajectory."""
    problem = trajectory.problem
    m = trajectory.model.m
    ts, rows = trajectory.dense(per_step) if per_step > 1 else (trajectory.ts, trajectory.states)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"q{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(m)]
                   + ["H", "dN"])
        for t, r in zip(ts, rows):
            q, p = r[:m], r[m:2 * m]
            H = problem.hamiltonian(q, p, trajectory.mu)
            dN = problem.scatterer_distance(q)
            w.writerow([repr(float(t))] + [repr(float(v)) for v in r[:2 * m]]
                       + [repr(float(H)), repr(float(dN))])


def save_npz(trajectory: Trajectory, path) -> None:
    """Binary round-trip format (samples plus metadata)."""
    np.savez(path, ts=trajectory.ts, states=trajectory.states,
             energy=trajectory.energy, mu=trajectory.mu, status=trajectory.status,
             kind=trajectory.kind,
             component=-1 if trajectory.component is None else trajectory.component,
             stm=np.zeros((0, 0)) if trajectory.stm is None else trajectory.stm,
             method=trajectory.method)


def load_npz(path, problem) -> Trajectory:
    """Inverse of :func:`save_npz`; the problem supplies the model."""
    with np.load(path) as z:
        kind = str(z["kind"])
        comp = int(z["component"])
        E = float(z["energy"])
        mu = float(z["mu"])
        if kind == "physical":
            model = problem.physical_model(mu)
        else:
            model = problem.regularized_model(comp, E)
        stm = z["stm"]
        return Trajectory(model, z["ts"].copy(), z["states"].copy(), E, mu,
                          int(z["status"]), stm.copy() if stm.size else None, kind,
                          problem, None if comp < 0 else comp, int(z["method"]))

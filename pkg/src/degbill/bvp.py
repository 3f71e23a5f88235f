"""Fixed-energy two-point connections, the action function and its twist.

For endpoints ``q_minus`` (start) and ``q_plus`` (end) the Maupertuis action
``S(q_minus, q_plus)`` of the connecting orbit satisfies

    dS = p_plus . dq_plus - p_minus . dq_minus,

so its second derivative follows from the state-transition matrix of the
orbit together with the energy constraint on the initial momentum.  The twist
``B = d p_plus / d q_minus`` (entry ``(j, i)`` is ``d^2 S / dq_plus_j dq_minus_i``)
annihilates the initial velocity and ``B^T`` the final one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from . import flow
from .errors import (ConjugatePointsError, DomainError, NeedsRegularization,
                     NoConnectionError, OutsideDomainError, StiffnessError)

CONJUGATE_COND = 1e10
NEWTON_TOL = 1e-11
ACCEPT_TOL = 1e-10


@dataclass(eq=False)
class ActionFunction:
    """A converged fixed-energy connection and the derivatives of its action.

    Attributes
    ----------
    S : float
        Maupertuis action.
    p_minus, p_plus : array
        Momenta at the start and end point.
    v_minus, v_plus : array
        Velocities ``p - w(q)`` at the endpoints.
    hessian : (2m, 2m) array
        Second derivative of ``S`` in ``(q_minus, q_plus)``.
    B : (m, m) array
        Twist ``d p_plus / d q_minus``.
    """

    problem: object
    q_minus: np.ndarray
    q_plus: np.ndarray
    energy: float
    mu: float
    orbit: flow.Trajectory
    S: float
    p_minus: np.ndarray
    p_plus: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    transit_time: float
    hessian: np.ndarray
    shooting_cond: float
    residual: float
    newton_iterations: int
    nondegenerate: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def B(self) -> np.ndarray:
        m = self.q_minus.shape[0]
        return self.hessian[m:, :m]

    @property
    def direction(self) -> np.ndarray:
        return self.v_minus / np.linalg.norm(self.v_minus)

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """``(D_{q_minus} S, D_{q_plus} S) = (-p_minus, p_plus)``."""
        return -self.p_minus, self.p_plus


# orbit-class tags: each maps (problem, mu, q_minus, q_plus, E) to (direction, time)
def _direct_guess(problem, mu, q_minus, q_plus, E):
    d = q_plus - q_minus
    L = float(np.linalg.norm(d))
    speed = problem.speed(q_minus, E, mu)
    return d / L, L / speed


ORBIT_CLASSES: dict[str, Callable] = {"direct": _direct_guess}


def register_orbit_class(name: str, generator: Callable) -> None:
    """Register an initial-guess generator for a homotopy class of connections."""
    ORBIT_CLASSES[name] = generator


def _initial_momentum(problem, mu, q, E, direction):
    speed = problem.speed(q, E, mu)
    return problem.gyro(q) + speed * direction, speed


def _shoot(problem, mu, q_minus, E, direction, T, tol, stm):
    p0, speed = _initial_momentum(problem, mu, q_minus, E, direction)
    traj = flow.integrate(problem, mu, np.concatenate([q_minus, p0]), T, tol,
                          stm=stm, energy=E)
    return traj, speed


def _resolve_guess(problem, mu, q_minus, q_plus, E, guess):
    if guess is None:
        guess = "direct"
    if isinstance(guess, str):
        if guess not in ORBIT_CLASSES:
            raise NoConnectionError(f"unknown orbit class {guess!r}")
        d, T = ORBIT_CLASSES[guess](problem, mu, q_minus, q_plus, E)
    elif isinstance(guess, ActionFunction):
        return guess.direction, guess.transit_time
    else:
        d, T = guess
    d = np.asarray(d, dtype=float)
    return d / np.linalg.norm(d), float(T)


def connect_fixed_energy(problem, mu: float, q_minus, q_plus, E: float, guess=None,
                         *, tol: float = 1e-12, max_iter: int = 30,
                         newton_tol: float = NEWTON_TOL) -> ActionFunction:
    """Orbit of energy ``E`` from ``q_minus`` to ``q_plus`` by Newton shooting.

    Unknowns are the unit initial direction of ``p - w(q)`` (the speed is fixed
    by ``H = E``) and the transit time.

    Parameters
    ----------
    guess : None, str, (direction, time) or ActionFunction
        Initial guess or orbit-class tag (see ``ORBIT_CLASSES``).

    Raises
    ------
    NoConnectionError
        Newton diverged or stalled above the acceptance tolerance.
    ConjugatePointsError
        Shooting Jacobian with condition number above ``CONJUGATE_COND``.
    """
    q_minus = np.asarray(q_minus, dtype=float)
    q_plus = np.asarray(q_plus, dtype=float)
    m = q_minus.shape[0]
    try:
        d, T = _resolve_guess(problem, mu, q_minus, q_plus, E, guess)
    except OutsideDomainError as exc:
        raise NoConnectionError(str(exc)) from exc
    scale = max(1.0, float(np.linalg.norm(q_plus - q_minus)))

    def evaluate(d, T):
        try:
            traj, speed = _shoot(problem, mu, q_minus, E, d, T, tol, True)
        except (NeedsRegularization, OutsideDomainError, StiffnessError) as exc:
            raise NoConnectionError(f"shooting left the admissible region: {exc}") from exc
        r = traj.last[:m] - q_plus
        return traj, speed, r

    traj, speed, r = evaluate(d, T)
    res = float(np.linalg.norm(r))
    it = 0
    cond = np.inf
    while True:
        Bd = null_space(d[None, :])
        M = traj.stm
        Jd = M[:m, m:] @ (speed * Bd)
        vT = traj.last[m:] - problem.gyro(traj.last[:m])
        J = np.column_stack([Jd, vT])
        cond = float(np.linalg.cond(J))
        if res <= newton_tol * scale or it >= max_iter:
            break
        if not np.isfinite(cond) or cond > 1e14:
            break
        step = np.linalg.solve(J, -r)
        lam = 1.0
        accepted = False
        for _ in range(12):
            dn = d + Bd @ (lam * step[:m - 1])
            dn = dn / np.linalg.norm(dn)
            Tn = T + lam * step[m - 1]
            if Tn > 0.0:
                try:
                    trn, spn, rn = evaluate(dn, Tn)
                except NoConnectionError:
                    rn = None
                if rn is not None and np.linalg.norm(rn) < (1.0 - 1e-4 * lam) * res \
                        or (rn is not None and res <= ACCEPT_TOL * scale and
                            np.linalg.norm(rn) <= res):
                    accepted = True
                    break
            lam *= 0.5
        it += 1
        if not accepted:
            break
        d, T, traj, speed, r = dn, Tn, trn, spn, rn
        res = float(np.linalg.norm(r))
    if res > ACCEPT_TOL * scale:
        raise NoConnectionError(
            f"shooting did not converge: endpoint residual {res:.3g} after {it} iterations")
    if cond > CONJUGATE_COND:
        raise ConjugatePointsError(
            f"shooting Jacobian condition number {cond:.3g}: endpoints are conjugate")
    return _assemble(problem, mu, q_minus, q_plus, E, traj, T, cond, res, it)


def _assemble(problem, mu, q_minus, q_plus, E, traj, T, cond, res, it) -> ActionFunction:
    m = q_minus.shape[0]
    start, end = traj.first, traj.last
    p_minus, p_plus = start[m:], end[m:]
    v_minus = p_minus - problem.gyro(start[:m])
    v_plus = p_plus - problem.gyro(end[:m])
    model = traj.model
    f_minus = model.field(start)
    f_plus = model.field(end)
    hess = action_hessian(traj.stm, v_minus, f_minus[m:], v_plus, f_plus[m:])
    return ActionFunction(problem, q_minus.copy(), q_plus.copy(), E, mu, traj, traj.action,
                          p_minus.copy(), p_plus.copy(), v_minus, v_plus, float(T), hess,
                          cond, res, it, True)


def action_hessian(M, v_minus, pdot_minus, v_plus, pdot_plus) -> np.ndarray:
    """Second derivative of the fixed-energy action from the transition matrix.

    Variations ``(dq_minus, dq_plus)`` determine ``(dp_minus, dT)`` through
    ``dq_plus = Mqq dq_minus + Mqp dp_minus + v_plus dT`` and the linearized
    energy constraint ``-pdot_minus . dq_minus + v_minus . dp_minus = 0``.
    """
    m = v_minus.shape[0]
    Mqq, Mqp = M[:m, :m], M[:m, m:]
    Mpq, Mpp = M[m:, :m], M[m:, m:]
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = Mqp
    K[:m, m] = v_plus
    K[m, :m] = v_minus
    rhs = np.zeros((m + 1, 2 * m))
    rhs[:m, :m] = -Mqq
    rhs[:m, m:] = np.eye(m)
    rhs[m, :m] = pdot_minus
    sol = np.linalg.solve(K, rhs)
    dp_minus = sol[:m]
    dT = sol[m]
    dq_minus_sel = np.hstack([np.eye(m), np.zeros((m, m))])
    dp_plus = Mpq @ dq_minus_sel + Mpp @ dp_minus + np.outer(pdot_plus, dT)
    H = np.vstack([-dp_minus, dp_plus])
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class RestrictedTwist:
    """Tangent-tangent block of the twist in chart bases (``n_minus x n_plus``)."""

    matrix: np.ndarray
    singular_values: np.ndarray
    invertible: bool
    transverse_minus: bool
    transverse_plus: bool


def restricted_twist(af: ActionFunction, comp_minus: int, x_minus, comp_plus: int, x_plus,
                     on_tol: float = 1e-8, rank_tol: float = 1e-8) -> RestrictedTwist:
    """Restriction of ``B(a_minus, a_plus) = a_minus^T B^T a_plus`` to ``T N x T N``.

    Also reports whether the endpoint velocities are transverse to the
    scatterer (a necessary condition for a collision orbit).
    """
    problem = af.problem
    cm = problem.components[comp_minus]
    cp = problem.components[comp_plus]
    if np.linalg.norm(cm.chart(x_minus) - af.q_minus) > on_tol or \
            np.linalg.norm(cp.chart(x_plus) - af.q_plus) > on_tol:
        raise DomainError("connection endpoints are not on the given scatterer charts")
    Pm, Pp = cm.tangent_basis, cp.tangent_basis
    Mat = Pm.T @ af.B.T @ Pp
    sv = np.linalg.svd(Mat, compute_uv=False) if Mat.size else np.zeros(0)
    n_m, n_p = Mat.shape
    if n_m != n_p:
        inv = False
    elif n_m == 0:
        inv = True
    else:
        inv = bool(sv[-1] > rank_tol * max(1.0, sv[0]))

    def transverse(comp, x, v):
        Q = comp.normal_frame(x)
        return bool(np.linalg.norm(Q.T @ v) > 1e-8 * np.linalg.norm(v))

    return RestrictedTwist(Mat, sv, inv, transverse(cm, x_minus, af.v_minus),
                           transverse(cp, x_plus, af.v_plus))

"""Levi-Civita and Kustaanheimo-Stiefel regularization near one scatterer component.

Normal offsets are squared, ``u = 1/2 Gamma(xi) xi``, with the Hurwitz matrix
``Gamma`` (2x2 for codimension 2, 3x4 for codimension 3).  Momenta transform as
``eta = Gamma(xi)^T v`` and back as ``v = Gamma(xi) eta / |xi|^2``.  On the energy
level ``H_mu = E`` the regularized Hamiltonian

    Hreg = [(1/2 |y - a|^2 + W - E) |xi|^2 + 1/2 |eta - Gamma^T b|^2] / (2 phi)

takes the value ``mu``; ``phi = alpha_k + |u| * sum_{i != k} alpha_i / d_i`` is
the singular strength and ``dt/dtau = |xi|^2 / (2 phi)``.  Near ``xi = 0`` the
quadratic part is ``(|eta|^2 / 2 - (E - F0) |xi|^2) / (2 phi0)``, whose nonzero
eigenvalues are ``+-sqrt(E - F0) / (sqrt(2) phi0)``.

Regularized momenta are taken relative to the constant gauge shift returned by
``ProblemDefinition.regularization_gauge`` so that the normal gyroscopic
component vanishes on the component.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (BranchPointError, GaugeViolationError, LeftTube,
                     OutsideDomainError)
from .flow import Event, Trajectory, run_model

LC, KS = "LC", "KS"

#: Integration order used inside tubes unless the problem is declared analytic
#: enough by the caller (order 8 restores the full DOP853 pair).
REGULARIZED_ORDER = 5

_G_LC = np.array([[[1.0, 0.0], [0.0, 1.0]],
                  [[0.0, -1.0], [1.0, 0.0]]])
_G_KS = np.array([
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
    [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1]],
    [[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0]],
    [[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0]],
], dtype=float)

#: Generator of the KS fibre rotation: ``Gamma(xi) K xi = 0`` and
#: ``Gamma(exp(theta K) xi) = Gamma(xi) exp(-theta K)``.
GAUGE_GENERATOR = np.array([[0.0, 0.0, 0.0, 1.0],
                            [0.0, 0.0, -1.0, 0.0],
                            [0.0, 1.0, 0.0, 0.0],
                            [-1.0, 0.0, 0.0, 0.0]])


def mode_of(dim: int) -> str:
    """``LC`` for 2-dimensional regularized variables, ``KS`` for 4."""
    if dim == 2:
        return LC
    if dim == 4:
        return KS
    raise ValueError(f"no regularization with {dim} variables")


def hurwitz(xi) -> np.ndarray:
    """Hurwitz matrix ``Gamma(xi)``; ``du = Gamma(xi) dxi``."""
    xi = np.asarray(xi, dtype=float)
    G = _G_LC if xi.shape[-1] == 2 else _G_KS
    return np.einsum("...l,lij->...ij", xi, G)


def square(xi) -> np.ndarray:
    """``u(xi) = 1/2 Gamma(xi) xi`` (complex square for LC, Hopf map for KS)."""
    xi = np.asarray(xi, dtype=float)
    return 0.5 * np.einsum("...ij,...j->...i", hurwitz(xi), xi)


def lc_square(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 2:
        raise ValueError("Levi-Civita variables are 2-dimensional")
    return square(xi)


def ks_square(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 4:
        raise ValueError("KS variables are 4-dimensional")
    return square(xi)


def lc_lift(u) -> np.ndarray:
    """Preimage of ``u`` under the LC square with first nonzero entry >= 0."""
    u = np.asarray(u, dtype=float)
    r = float(np.hypot(u[0], u[1]))
    if r == 0.0:
        raise BranchPointError("lift requested at the branch point u = 0")
    # xi1^2 = r + u1, xi2^2 = r - u1, xi1 xi2 = u2; take the root without cancellation
    if u[0] >= 0.0:
        a = np.sqrt(r + u[0])
        xi = np.array([a, u[1] / a])
    else:
        b = np.sqrt(r - u[0])
        xi = np.array([abs(u[1]) / b, np.copysign(b, u[1])])
    if xi[0] < 0.0 or (xi[0] == 0.0 and xi[1] < 0.0):
        xi = -xi
    return xi


def ks_lift(u) -> np.ndarray:
    """Preimage of ``u`` under the KS map on the ``theta = 0`` section."""
    u = np.asarray(u, dtype=float)
    r = float(np.linalg.norm(u))
    if r == 0.0:
        raise BranchPointError("lift requested at the branch point u = 0")
    if u[0] >= 0.0:
        s = np.sqrt(r + u[0])
        return np.array([s, u[1] / s, u[2] / s, 0.0])
    s = np.sqrt(r - u[0])
    return np.array([u[1] / s, s, 0.0, u[2] / s])


def lift(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return lc_lift(u) if u.shape[0] == 2 else ks_lift(u)


def gauge_rotation(theta: float) -> np.ndarray:
    """``exp(theta K)`` for the KS fibre generator (``K^2 = -I``)."""
    return np.cos(theta) * np.eye(4) + np.sin(theta) * GAUGE_GENERATOR


def gauge_value(xi, eta) -> float:
    """Bilinear KS integral ``<K xi, eta>`` (zero on physical states)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[0] != 4:
        return 0.0
    return float((GAUGE_GENERATOR @ xi) @ np.asarray(eta, dtype=float))


def momenta_transform(xi, v) -> np.ndarray:
    """``eta = Gamma(xi)^T v``."""
    return hurwitz(xi).T @ np.asarray(v, dtype=float)


def momenta_inverse(xi, eta, gauge_tol: float = 1e-10) -> np.ndarray:
    """``v = Gamma(xi) eta / |xi|^2``.

    Raises
    ------
    BranchPointError
        ``xi = 0``.
    GaugeViolationError
        KS state with ``|<K xi, eta>| > gauge_tol * |xi| |eta|``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    s2 = float(xi @ xi)
    if s2 == 0.0:
        raise BranchPointError("momentum inverse undefined at xi = 0")
    if xi.shape[0] == 4:
        G = gauge_value(xi, eta)
        if abs(G) > gauge_tol * max(1.0, np.sqrt(s2) * np.linalg.norm(eta)):
            raise GaugeViolationError(f"gauge integral {G:.3g} is not zero")
    return hurwitz(xi) @ eta / s2


# ----------------------------------------------------------------------
# states and transforms
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizedState:
    """Regularized point ``(x, y, xi, eta)`` near component ``component``.

    ``mu_level`` is the value of the regularized Hamiltonian, i.e. the coupling
    of the physical level the state belongs to.
    """

    component: int
    x: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    mu_level: float = 0.0

    @property
    def mode(self) -> str:
        return mode_of(self.xi.shape[0])

    @property
    def G_value(self) -> float:
        return gauge_value(self.xi, self.eta)

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, self.xi, self.eta])

    @classmethod
    def from_vector(cls, problem, component, s, E=None):
        c = problem.components[component]
        n = c.intrinsic_dim
        dp = 2 if c.codim == 2 else 4
        s = np.asarray(s, dtype=float)
        st = cls(component, s[:n].copy(), s[n:2 * n].copy(), s[2 * n:2 * n + dp].copy(),
                 s[2 * n + dp:2 * n + 2 * dp].copy())
        if E is None:
            return st
        level = problem.regularized_model(component, E).hamiltonian(s)
        return cls(st.component, st.x, st.y, st.xi, st.eta, level)


def to_regularized(problem, component: int, q, p, E: float | None = None) -> RegularizedState:
    """Regularized coordinates of a physical state inside the tube of ``component``."""
    c = problem.components[component]
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float) - problem.regularization_gauge(component)
    x, foot, _ = c.project(q)
    Q = c.normal_frame(x)
    u = Q.T @ (q - foot)
    xi = lift(u)
    eta = momenta_transform(xi, Q.T @ p)
    y = c.tangent_basis.T @ p
    st = RegularizedState(component, x, y, xi, eta)
    if E is None:
        return st
    level = problem.regularized_model(component, E).hamiltonian(st.vector)
    return RegularizedState(component, x, y, xi, eta, level)


def physical_from_regularized(problem, component: int, s) -> tuple[np.ndarray, np.ndarray]:
    """Physical ``(q, p)`` of a regularized state vector (``xi != 0``)."""
    if isinstance(s, RegularizedState):
        s = s.vector
    c = problem.components[component]
    n = c.intrinsic_dim
    dp = 2 if c.codim == 2 else 4
    s = np.asarray(s, dtype=float)
    x, y = s[:n], s[n:2 * n]
    xi, eta = s[2 * n:2 * n + dp], s[2 * n + dp:2 * n + 2 * dp]
    Gm = hurwitz(xi)
    u = 0.5 * Gm @ xi
    P, Q = c.tangent_basis, c.normal_frame(x)
    q = c.chart(x) + Q @ u
    s2 = float(xi @ xi)
    if s2 == 0.0:
        raise BranchPointError("physical momentum undefined at xi = 0")
    v = Gm @ eta / s2
    p = P @ y + Q @ v + problem.regularization_gauge(component)
    return q, p


def regularized_hamiltonian(problem, E: float, state: RegularizedState) -> float:
    """Regularized Hamiltonian in expanded form (regular at ``xi = 0``)."""
    return problem.regularized_model(state.component, E).hamiltonian(state.vector)


def composed_hamiltonian(problem, E: float, state: RegularizedState) -> float:
    """``(H_smooth(q, p) - E) |xi|^2 / (2 phi(q))`` evaluated through physical variables."""
    q, p = physical_from_regularized(problem, state.component, state)
    s2 = float(state.xi @ state.xi)
    phi = problem.singular_strength(q, component=state.component)
    return (problem.hamiltonian(q, p, 0.0) - E) * s2 / (2.0 * phi)


# ----------------------------------------------------------------------
# normally hyperbolic data
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class NormalHyperbolicData:
    """Quadratic normal form at ``(z, 0, 0)``.

    ``Hreg ~ 1/2 a |eta|^2 - 1/2 b |xi|^2`` with ``a = 1/(2 phi0)`` and
    ``b = (E - F0)/phi0``; ``lam = sqrt(a b)`` and ``nu = sqrt(2 (E - F0))`` is
    the collision speed.
    """

    component: int
    z: np.ndarray
    F0: float
    phi0: float
    energy: float

    @property
    def a(self) -> float:
        return 1.0 / (2.0 * self.phi0)

    @property
    def b(self) -> float:
        return (self.energy - self.F0) / self.phi0

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.a * self.b))

    @property
    def nu(self) -> float:
        return float(np.sqrt(2.0 * (self.energy - self.F0)))


def collision_energy(problem, component: int, z) -> float:
    """``F0(z) = 1/2 |y - a(x)|^2 + W(x)`` in the gauge of the regularized chart."""
    c = problem.components[component]
    n = c.intrinsic_dim
    z = np.atleast_1d(np.asarray(z, dtype=float))
    x, y = z[:n], z[n:2 * n]
    q = c.chart(x)
    a = c.tangent_basis.T @ (problem.gyro(q) - problem.regularization_gauge(component))
    return 0.5 * float((y - a) @ (y - a)) + problem.potential(q)


def normal_data(problem, component: int, z, E: float, eps: float = 0.0) -> NormalHyperbolicData:
    """Normal form coefficients at ``z``; requires ``F0(z) <= E - eps``."""
    c = problem.components[component]
    z = np.atleast_1d(np.asarray(z, dtype=float))[:2 * c.intrinsic_dim]
    F0 = collision_energy(problem, component, z)
    if F0 > E - eps or F0 >= E:
        raise OutsideDomainError(f"F0 = {F0:.6g} is not below E - eps = {E - eps:.6g}")
    return NormalHyperbolicData(component, z, F0, float(c.alpha), float(E))


def lambda_of(problem, component: int, z, E: float) -> float:
    """Nonzero eigenvalue of the linearization at ``(z, 0, 0)``."""
    return normal_data(problem, component, z, E).lam


def linearization_spectrum(problem, component: int, z, E: float) -> np.ndarray:
    """Eigenvalues of the regularized vector field's Jacobian at ``(z, 0, 0)``."""
    c = problem.components[component]
    dp = 2 if c.codim == 2 else 4
    z = np.atleast_1d(np.asarray(z, dtype=float))[:2 * c.intrinsic_dim]
    s = np.concatenate([z, np.zeros(2 * dp)])
    J = problem.regularized_model(component, E).jacobian(s)
    return np.linalg.eigvals(J)


def leading_order_connection(nhd: NormalHyperbolicData, xi_in, xi_out, mu: float):
    """Leading-order half time and midpoint of a passage ``xi_in -> xi_out``.

    For the quadratic normal form the passage with ``xi(-T) = xi_in``,
    ``xi(T) = xi_out`` on the level ``mu`` has

        exp(-2 lam T) = -mu / (2 b <xi_in, xi_out>)
        xi(0)  = sqrt(-mu / (2 b <.,.>)) (xi_in + xi_out)
        eta(0) = sqrt(-mu / (2 a <.,.>)) (xi_out - xi_in)

    to leading order; ``mu`` and the pairing must have opposite signs.
    """
    xi_in = np.asarray(xi_in, dtype=float)
    xi_out = np.asarray(xi_out, dtype=float)
    pair = float(xi_in @ xi_out)
    if pair == 0.0:
        raise OutsideDomainError("<xi_in, xi_out> = 0: no leading-order passage")
    ratio = -mu / (2.0 * nhd.b * pair)
    if not ratio > 0.0:
        raise OutsideDomainError("mu and <xi_in, xi_out> must have opposite signs")
    T = -np.log(ratio) / (2.0 * nhd.lam)
    xi0 = np.sqrt(ratio) * (xi_in + xi_out)
    eta0 = np.sqrt(-mu / (2.0 * nhd.a * pair)) * (xi_out - xi_in)
    return float(T), xi0, eta0


# ----------------------------------------------------------------------
# integration
# ----------------------------------------------------------------------

def integrate_regularized(problem, E: float, state: RegularizedState, span: float,
                          tol: float = 1e-12, *, order: int = REGULARIZED_ORDER,
                          exit_radius: float | None = -1.0, stm: bool = False,
                          event: Event | None = None) -> Trajectory:
    """Integrate the regularized flow over ``span`` units of regularized time.

    Parameters
    ----------
    exit_radius : float or None
        Tube radius at which the orbit hands back to physical integration;
        the default ``-1`` means the problem's ``rho`` and ``None`` disables
        the exit check.
    order : {5, 8}
        Runge-Kutta order.

    Raises
    ------
    LeftTube
        The orbit reached ``|u| = exit_radius`` moving outwards; the partial
        trajectory ends at the exit state.
    """
    k = state.component
    model = problem.regularized_model(k, E)
    s0 = state.vector
    if exit_radius is not None and exit_radius < 0:
        exit_radius = problem.rho
    ev = event
    if ev is None and exit_radius is not None:
        ev = Event("xi", 2.0 * exit_radius, -1, 1 if span >= 0 else -1)
    method = kernels.METHOD_RK45 if order == 5 else kernels.METHOD_DOP853
    level = model.hamiltonian(s0)
    traj = run_model(model, s0, 0.0, span, problem=problem, kind="regularized",
                     component=k, stm=stm, event=ev, rtol=tol, atol=tol,
                     method=method, energy=E, mu=level)
    H = traj.hamiltonian_values()
    traj.meta["level_drift"] = float(np.max(np.abs(H - level)))
    if model.dp == 4:
        n = model.n
        G = [gauge_value(r[2 * n:2 * n + 4], r[2 * n + 4:2 * n + 8]) for r in traj.states]
        traj.meta["gauge_drift"] = float(np.max(np.abs(G)))
    if traj.status == kernels.ST_EVENT and event is None:
        raise LeftTube(f"orbit left the tube at tau = {traj.t1 if span >= 0 else traj.t0:.6g}",
                       traj)
    return traj


@dataclass(eq=False)
class AsymptoticData:
    """Billiard half-orbit between a collision at ``z0`` and ``|u| = rho``.

    ``sign = -1`` is the incoming half (negative times), ``+1`` the outgoing one.
    """

    sign: int
    z0: np.ndarray
    orbit: Trajectory
    action: float
    transit_time: float
    q_end: np.ndarray
    p_end: np.ndarray
    x_end: np.ndarray
    u_end: np.ndarray
    q_collision: np.ndarray
    p_collision: np.ndarray
    regularized_end: RegularizedState | None = None


def collision_momentum(problem, component: int, z0, E: float, direction) -> np.ndarray:
    """Physical momentum at the collision point with normal velocity along ``direction``."""
    c = problem.components[component]
    n = c.intrinsic_dim
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    x0, y0 = z0[:n], z0[n:2 * n]
    q0 = c.chart(x0)
    nhd = normal_data(problem, component, z0, E)
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    P, Q = c.tangent_basis, c.normal_frame(x0)
    g = problem.regularization_gauge(component)
    pit = y0 - P.T @ (problem.gyro(q0) - g)
    return problem.gyro(q0) + P @ pit + nhd.nu * (Q @ e)


def asymptotic_data(problem, E: float, component: int, z0, u_dir, sign: int = 1,
                    rho: float | None = None, tol: float = 1e-12) -> AsymptoticData:
    """Integrate the unperturbed collision orbit from ``z0`` to the section ``|u| = rho``.

    ``u_dir`` gives the normal direction of the endpoint offset (its length is
    ignored).  For ``sign = +1`` the orbit leaves the collision forwards in
    time; for ``sign = -1`` it is the incoming half integrated backwards, which
    arrives with normal velocity ``-nu * u_dir``.
    """
    c = problem.components[component]
    rho = problem.rho if rho is None else float(rho)
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))[:2 * c.intrinsic_dim]
    nhd = normal_data(problem, component, z0, E)
    e = np.asarray(u_dir, dtype=float)
    e = e / np.linalg.norm(e)
    p0 = collision_momentum(problem, component, z0, E, sign * e)
    q0 = c.chart(z0[:c.intrinsic_dim])
    model = problem.physical_model(0.0)
    horizon = sign * 50.0 * rho / nhd.nu
    tr = run_model(model, np.concatenate([q0, p0]), 0.0, horizon, problem=problem,
                   event=Event("distance", rho, component, 1), rtol=tol, atol=tol,
                   energy=E, mu=0.0)
    if tr.status != kernels.ST_EVENT:
        raise OutsideDomainError("collision orbit does not reach the tube boundary")
    end = tr.first if sign < 0 else tr.last
    t_end = tr.t0 if sign < 0 else tr.t1
    q_end, p_end = end[:problem.dim], end[problem.dim:]
    x_end, foot, _ = c.project(q_end)
    u_end = c.normal_frame(x_end).T @ (q_end - foot)
    try:
        reg = to_regularized(problem, component, q_end, p_end, E)
    except BranchPointError:
        reg = None
    return AsymptoticData(sign, z0, tr, abs(tr.action), float(t_end), q_end, p_end,
                          x_end, u_end, q0, p0, reg)


# ----------------------------------------------------------------------
# export
# ----------------------------------------------------------------------

def export_regularized_csv(trajectory: Trajectory, path) -> None:
    """Write ``tau, z, xi, eta, Hreg, G, t, q, p`` rows."""
    problem = trajectory.problem
    k = trajectory.component
    model = trajectory.model
    n, dp, m = model.n, model.dp, model.m
    head = (["tau"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
            + [f"xi{i + 1}" for i in range(dp)] + [f"eta{i + 1}" for i in range(dp)]
            + ["Hreg", "G", "t"] + [f"q{i + 1}" for i in range(m)]
            + [f"p{i + 1}" for i in range(m)])
    ns = model.ns
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for tau, r in zip(trajectory.ts, trajectory.states):
            s = r[:ns]
            xi, eta = s[2 * n:2 * n + dp], s[2 * n + dp:]
            if float(xi @ xi) > 0.0:
                q, p = physical_from_regularized(problem, k, s)
            else:
                q, p = np.full(m, np.nan), np.full(m, np.nan)
            row = ([tau] + list(s) + [model.hamiltonian(s), gauge_value(xi, eta), r[ns + 1]]
                   + list(q) + list(p))
            w.writerow([repr(float(v)) for v in row])

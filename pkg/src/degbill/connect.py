"""Local connections through one scatterer tube.

``reflect_once`` solves the unperturbed problem: a billiard orbit from a
section point ``q_in`` to the scatterer and on to ``q_out``.  For ``mu != 0``
the passage is solved in regularized coordinates.  ``shilnikov_connect`` fixes
the collision-manifold point ``z0`` and the regularized endpoints, while
``connect_physical`` lets ``z0`` float and matches the physical endpoints.

Naming: ``in`` is the endpoint reached first (regularized time ``-T``), ``out``
the one reached last (``+T``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import regularize as reg
from .dls import Chain, GeneratingFamily, newton_finite
from .errors import (DegenerateChainWarning, DomainError, GaugeSelectionError,
                     NoConnectionError, OutOfTubeError, OutsideDomainError,
                     StiffnessError)
from .flow import Trajectory, run_model
from . import kernels

DEFAULT_C = 10.0
DEFAULT_DELTA = 0.1
SHOOT_TOL = 1e-11
SHOOT_ACCEPT = 1e-9


@dataclass(frozen=True)
class SectionPoint:
    """Point of the tube boundary ``|u| = rho`` around one component."""

    component: int
    x: np.ndarray
    u: np.ndarray
    q: np.ndarray

    @classmethod
    def from_ambient(cls, problem, q, component: int | None = None,
                     rho: float | None = None, tol: float = 1e-9) -> "SectionPoint":
        q = np.asarray(q, dtype=float)
        k = problem.nearest_component(q)[0] if component is None else int(component)
        c = problem.components[k]
        x, foot, dist = c.project(q)
        rho = problem.rho if rho is None else rho
        if abs(dist - rho) > tol * max(1.0, rho):
            raise OutOfTubeError(f"point at distance {dist:.6g} is not on the section rho = {rho:.6g}")
        return cls(k, x, c.normal_frame(x).T @ (q - foot), q)


def section_bounds(problem, sp_in: SectionPoint, sp_out: SectionPoint, C: float = DEFAULT_C,
                   delta: float = DEFAULT_DELTA, rho: float | None = None) -> dict:
    """Closeness ``|q_in - q_out| <= C rho`` and non-opposite ``|u_in + u_out| >= delta rho``."""
    rho = problem.rho if rho is None else rho
    dist = float(np.linalg.norm(sp_in.q - sp_out.q))
    s = float(np.linalg.norm(sp_in.u + sp_out.u))
    return {"distance": dist, "close": dist <= C * rho, "offset_sum": s,
            "non_opposite": s >= delta * rho}


# ----------------------------------------------------------------------
# unperturbed reflection
# ----------------------------------------------------------------------

@dataclass(eq=False)
class ReflectionResult:
    """Billiard orbit ``q_in -> x0 -> q_out`` and its action ``R0``.

    ``y0`` is the tangential physical momentum at the collision and ``z0`` the
    corresponding point ``(x0, y0 - P^T gauge)`` of the regularized chart.
    ``hessian`` is the second derivative of ``R0`` in ``(q_in, q_out)``.
    """

    component: int
    x0: np.ndarray
    y0: np.ndarray
    z0: np.ndarray
    R0: float
    chain: Chain
    p_in: np.ndarray
    p_out: np.ndarray
    p_collision_in: np.ndarray
    p_collision_out: np.ndarray
    hessian: np.ndarray

    @property
    def reflection_point(self) -> np.ndarray:
        return self.chain.segments[0].connection.q_plus

    @property
    def jump(self) -> float:
        return float(np.linalg.norm(self.p_collision_out - self.p_collision_in))

    def curves(self) -> list:
        return self.chain.curves()


def reflect_once(problem, E: float, q_in, q_out, component: int | None = None,
                 x_guess=None, family: GeneratingFamily | None = None,
                 tol: float = 1e-12) -> ReflectionResult:
    """Critical point of ``x -> S(q_in, x) + S(x, q_out)`` over the scatterer chart."""
    q_in = np.asarray(q_in, dtype=float)
    q_out = np.asarray(q_out, dtype=float)
    k = problem.nearest_component(q_in)[0] if component is None else int(component)
    c = problem.components[k]
    if x_guess is None:
        x_guess = 0.5 * (c.project(q_in)[0] + c.project(q_out)[0])
    family = family or GeneratingFamily(problem, E, 0.0, tol)
    guess = Chain("finite", [k], [x_guess], a=q_in, b=q_out)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", DegenerateChainWarning)
            ch = newton_finite(family, guess)
    except DegenerateChainWarning as exc:
        raise NoConnectionError(f"degenerate reflection point: {exc}") from exc
    except NoConnectionError as exc:
        raise NoConnectionError(f"no reflection found: {exc}") from exc
    s1, s2 = ch.segments
    a1, a2 = s1.connection, s2.connection
    m = problem.dim
    P = c.tangent_basis
    x0 = ch.points[0]
    y0 = P.T @ a1.p_plus
    z0 = np.concatenate([x0, P.T @ (a1.p_plus - problem.regularization_gauge(k))])
    # eliminate the collision point from the three-point Hessian
    H1, H2 = a1.hessian, a2.hessian
    Hqq = np.zeros((2 * m, 2 * m))
    Hqq[:m, :m] = H1[:m, :m]
    Hqq[m:, m:] = H2[m:, m:]
    if P.shape[1]:
        Hqx = np.vstack([H1[:m, m:] @ P, H2[m:, :m] @ P])
        Hxx = P.T @ (H1[m:, m:] + H2[:m, :m]) @ P
        Hqq = Hqq - Hqx @ np.linalg.solve(Hxx, Hqx.T)
    return ReflectionResult(k, x0, y0, z0, a1.S + a2.S, ch, a1.p_minus, a2.p_plus,
                            a1.p_plus, a2.p_minus, 0.5 * (Hqq + Hqq.T))


# ----------------------------------------------------------------------
# regularized passage
# ----------------------------------------------------------------------

def gauge_select_ks(xi_in, xi_out, mu: float, tol: float = 1e-12) -> tuple[float, np.ndarray]:
    """Initial fibre angle for a KS passage.

    Returns ``theta0`` extremizing ``s(theta) = <exp(theta K) xi_in, xi_out>``
    (maximum for ``mu < 0``, minimum for ``mu > 0``) and the rotated ``xi_in``.
    The final angle making the gauge integral vanish is solved together with
    the passage in :func:`shilnikov_connect`.

    Raises
    ------
    GaugeSelectionError
        ``s`` vanishes identically (opposite offsets ``u_in = -u_out``).
    """
    xi_in = np.asarray(xi_in, dtype=float)
    xi_out = np.asarray(xi_out, dtype=float)
    a = float(xi_in @ xi_out)
    b = float((reg.GAUGE_GENERATOR @ xi_in) @ xi_out)
    amp = np.hypot(a, b)
    if amp <= tol * float(np.linalg.norm(xi_in) * np.linalg.norm(xi_out)):
        raise GaugeSelectionError("fibre pairing vanishes identically: offsets are opposite")
    theta = float(np.arctan2(b, a))
    if mu > 0:
        theta += np.pi
    return theta, reg.gauge_rotation(theta) @ xi_in


@dataclass(eq=False)
class ShilnikovSolution:
    """Regularized passage with ``xi(-T) = xi_in`` and ``xi(T) = xi_out``.

    For KS passages ``xi_in`` is the fibre-rotated endpoint actually reached
    (``theta`` records the rotation of the supplied one).
    """

    component: int
    z0: np.ndarray
    xi_in: np.ndarray
    xi_out: np.ndarray
    mu: float
    T: float
    xi0: np.ndarray
    eta0: np.ndarray
    state_in: np.ndarray
    state_out: np.ndarray
    trajectory: Trajectory
    action: float
    physical_time: float
    min_xi: float
    residual: float
    iterations: int
    theta: float = 0.0
    T_asymptotic: float = np.nan
    leading_xi0: np.ndarray | None = None
    leading_eta0: np.ndarray | None = None
    level_drift: float = 0.0
    gauge_drift: float = 0.0
    jacobian: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def z_in(self):
        n = self.z0.size // 2
        return self.state_in[:2 * n]

    @property
    def z_out(self):
        n = self.z0.size // 2
        return self.state_out[:2 * n]


class _Passage:
    """Two-sided shooting for a regularized passage (shared by both solvers)."""

    def __init__(self, problem, E, k, mu, xi_in, xi_out, x_in=None, x_out=None,
                 z0=None, order=reg.REGULARIZED_ORDER, tol=1e-12):
        self.problem = problem
        self.E = E
        self.k = k
        self.mu = mu
        self.model = problem.regularized_model(k, E)
        c = problem.components[k]
        self.n = c.intrinsic_dim
        self.dp = 2 if c.codim == 2 else 4
        self.ks = self.dp == 4
        self.free_z = z0 is None
        self.z0 = None if z0 is None else np.atleast_1d(np.asarray(z0, dtype=float))
        self.xi_in = np.asarray(xi_in, dtype=float)
        self.xi_out = np.asarray(xi_out, dtype=float)
        self.x_in = None if x_in is None else np.atleast_1d(np.asarray(x_in, dtype=float))
        self.x_out = None if x_out is None else np.atleast_1d(np.asarray(x_out, dtype=float))
        self.method = kernels.METHOD_RK45 if order == 5 else kernels.METHOD_DOP853
        self.tol = tol

    # unknown layout: [z0 (if free)] xi0 eta0 T [theta]
    def split(self, U):
        n2 = 2 * self.n if self.free_z else 0
        z0 = U[:n2] if self.free_z else self.z0
        xi0 = U[n2:n2 + self.dp]
        eta0 = U[n2 + self.dp:n2 + 2 * self.dp]
        T = U[n2 + 2 * self.dp]
        theta = U[n2 + 2 * self.dp + 1] if self.ks else 0.0
        return z0, xi0, eta0, T, theta

    def pack(self, z0, xi0, eta0, T, theta):
        parts = ([z0] if self.free_z else []) + [xi0, eta0, [T]] + ([[theta]] if self.ks else [])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])

    def run(self, U, stm=True):
        z0, xi0, eta0, T, theta = self.split(U)
        if not T > 0.0:
            raise NoConnectionError("non-positive half transit time")
        s0 = np.concatenate([z0, xi0, eta0])
        kw = dict(problem=self.problem, kind="regularized", component=self.k, stm=stm,
                  rtol=self.tol, atol=self.tol, method=self.method, energy=self.E,
                  mu=self.mu, max_steps=100000)
        try:
            fw = run_model(self.model, s0, 0.0, T, **kw)
            bw = run_model(self.model, s0, 0.0, -T, **kw)
        except StiffnessError as exc:
            raise NoConnectionError(f"passage integration failed: {exc}") from exc
        return s0, fw, bw

    def residual(self, U, runs):
        z0, xi0, eta0, T, theta = self.split(U)
        s0, fw, bw = runs
        n, dp = self.n, self.dp
        s_out, s_in = fw.last, bw.first
        R = reg.gauge_rotation(theta) if self.ks else np.eye(dp)
        parts = [s_in[2 * n:2 * n + dp] - R @ self.xi_in, s_out[2 * n:2 * n + dp] - self.xi_out]
        if self.free_z:
            parts += [s_in[:n] - self.x_in, s_out[:n] - self.x_out]
        parts.append([self.model.hamiltonian(s0) - self.mu])
        if self.ks:
            parts.append([reg.gauge_value(xi0, eta0)])
        return np.concatenate([np.atleast_1d(p) for p in parts])

    def jacobian(self, U, runs):
        z0, xi0, eta0, T, theta = self.split(U)
        s0, fw, bw = runs
        n, dp = self.n, self.dp
        ns = self.model.ns
        Mf, Mb = fw.stm, bw.stm
        ff = self.model.field(fw.last)
        fb = self.model.field(bw.first)
        cols = slice(0, ns) if self.free_z else slice(2 * n, ns)
        nU = U.size
        rows = []
        xi_sl = slice(2 * n, 2 * n + dp)

        def block(M, f, sgn, sl):
            r = np.zeros((sl.stop - sl.start, nU))
            nc = M[sl, cols].shape[1]
            r[:, :nc] = M[sl, cols]
            r[:, nc] = sgn * f[sl]
            return r

        iT = (2 * n if self.free_z else 0) + 2 * dp
        r_in = block(Mb, fb, -1.0, xi_sl)
        r_out = block(Mf, ff, 1.0, xi_sl)
        if self.ks:
            r_in[:, iT + 1] = -(reg.GAUGE_GENERATOR @ reg.gauge_rotation(theta) @ self.xi_in)
        rows += [r_in, r_out]
        if self.free_z:
            rows += [block(Mb, fb, -1.0, slice(0, n)), block(Mf, ff, 1.0, slice(0, n))]
        g = self.model.gradient(s0)
        lev = np.zeros((1, nU))
        nc = g[cols].shape[0]
        lev[0, :nc] = g[cols]
        rows.append(lev)
        if self.ks:
            K = reg.GAUGE_GENERATOR
            gr = np.zeros((1, nU))
            o = 2 * n if self.free_z else 0
            gr[0, o:o + dp] = -K @ eta0
            gr[0, o + dp:o + 2 * dp] = K @ xi0
            rows.append(gr)
        return np.vstack(rows)

    def solve(self, U0, max_iter=40, tol=SHOOT_TOL, accept=SHOOT_ACCEPT):
        U = np.array(U0, dtype=float)
        runs = self.run(U)
        F = self.residual(U, runs)
        res = float(np.max(np.abs(F)))
        it = 0
        J = None
        while True:
            J = self.jacobian(U, runs)
            if res <= tol or it >= max_iter:
                break
            try:
                step = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError as exc:
                raise NoConnectionError("singular passage Jacobian") from exc
            lam = 1.0
            ok = False
            for _ in range(15):
                Ut = U + lam * step
                try:
                    rt = self.run(Ut)
                    Ft = self.residual(Ut, rt)
                    rn = float(np.max(np.abs(Ft)))
                except (NoConnectionError, OutsideDomainError):
                    rn = np.inf
                if np.isfinite(rn) and (rn < (1.0 - 1e-4 * lam) * res or
                                        (res < 100 * tol and rn <= res)):
                    ok = True
                    break
                lam *= 0.5
            it += 1
            if not ok:
                break
            U, runs, F, res = Ut, rt, Ft, rn
        if not res <= accept:
            raise NoConnectionError(f"passage shooting did not converge (residual {res:.3g})")
        return U, runs, res, it, J


def _concat(problem, k, fw, bw, E, mu) -> Trajectory:
    ts = np.concatenate([bw.ts[:-1], fw.ts])
    states = np.vstack([bw.states[:-1], fw.states])
    return Trajectory(fw.model, ts, states, E, mu, kernels.ST_DONE, None, "regularized",
                      problem, k, fw.method)


def _finish(problem, E, k, mu, ps: _Passage, U, runs, res, it, J, nhd=None, guess_data=None):
    z0, xi0, eta0, T, theta = ps.split(U)
    s0, fw, bw = runs
    traj = _concat(problem, k, fw, bw, E, mu)
    n, dp = ps.n, ps.dp
    xis = traj.states[:, 2 * n:2 * n + dp]
    H = traj.hamiltonian_values()
    R = reg.gauge_rotation(theta) if ps.ks else np.eye(dp)
    q_in, _ = reg.physical_from_regularized(problem, k, bw.first)
    q_out, _ = reg.physical_from_regularized(problem, k, fw.last)
    gauge = problem.regularization_gauge(k)
    J_reg = fw.action + bw.action
    gdrift = 0.0
    if ps.ks:
        gdrift = float(max(abs(reg.gauge_value(r[2 * n:2 * n + 4], r[2 * n + 4:2 * n + 8]))
                           for r in traj.states))
    sol = ShilnikovSolution(
        k, np.asarray(z0, dtype=float).copy(), R @ ps.xi_in, ps.xi_out.copy(), mu, float(T),
        xi0.copy(), eta0.copy(), bw.first, fw.last, traj,
        float(J_reg + gauge @ (q_out - q_in)), fw.physical_duration + bw.physical_duration,
        float(np.sqrt(np.min(np.sum(xis ** 2, axis=1)))), res, it, float(theta),
        level_drift=float(np.max(np.abs(H - mu))), gauge_drift=gdrift, jacobian=J)
    if nhd is not None and guess_data is not None:
        sol.T_asymptotic, sol.leading_xi0, sol.leading_eta0 = guess_data
    return sol


def _orient_lc(xi_in, xi_out, mu):
    """Pick the LC sheet of ``xi_out`` so that ``mu <xi_in, xi_out> < 0``."""
    if (xi_in @ xi_out) * mu > 0:
        return -xi_out
    return xi_out


def shilnikov_connect(problem, E: float, component: int, z0, xi_in, xi_out, mu: float, *,
                      guess: ShilnikovSolution | None = None, order: int = reg.REGULARIZED_ORDER,
                      tol: float = 1e-12, eps: float | None = None) -> ShilnikovSolution:
    """Regularized passage with fixed ``z(0) = z0`` and endpoints ``xi(-T) = xi_in``, ``xi(T) = xi_out``.

    Unknowns are ``xi(0), eta(0), T`` (and the fibre angle for KS), initialized
    by :func:`regularize.leading_order_connection`.

    Raises
    ------
    DomainError
        ``mu = 0``, ``z0`` outside the compact region, or ``mu <xi_in, xi_out> >= 0``.
    NoConnectionError
        Shooting failed.
    """
    if mu == 0.0:
        raise DomainError("the regularized passage needs mu != 0")
    eps = 0.05 * E if eps is None else eps
    try:
        nhd = reg.normal_data(problem, component, z0, E, eps if E > 0 else 0.0)
    except OutsideDomainError as exc:
        raise DomainError(str(exc)) from exc
    xi_in = np.asarray(xi_in, dtype=float)
    xi_out = np.asarray(xi_out, dtype=float)
    ks = xi_in.shape[0] == 4
    theta0 = 0.0
    xi_in_eff = xi_in
    if ks:
        theta0, xi_in_eff = gauge_select_ks(xi_in, xi_out, mu)
    pair = float(xi_in_eff @ xi_out)
    if not pair * mu < 0.0:
        raise DomainError("mu and <xi_in, xi_out> must have opposite signs")
    ps = _Passage(problem, E, component, mu, xi_in, xi_out, z0=nhd.z, order=order, tol=tol)
    T0, xi00, eta00 = reg.leading_order_connection(nhd, xi_in_eff, xi_out, mu)
    if guess is not None:
        U0 = ps.pack(None, guess.xi0, guess.eta0, guess.T, guess.theta)
    else:
        U0 = ps.pack(None, xi00, eta00, T0, theta0)
    U, runs, res, it, J = ps.solve(U0)
    return _finish(problem, E, component, mu, ps, U, runs, res, it, J, nhd, (T0, xi00, eta00))


# ----------------------------------------------------------------------
# physical connection
# ----------------------------------------------------------------------

@dataclass(eq=False)
class PhysicalConnection:
    """Orbit of ``H_mu = E`` from ``q_in`` to ``q_out`` through one tube.

    ``hessian`` is the second derivative of ``R_mu`` in ``(q_in, q_out)``;
    ``p_in`` and ``p_out`` are the endpoint momenta so that
    ``dR = p_out dq_out - p_in dq_in``.
    """

    component: int
    q_in: np.ndarray
    q_out: np.ndarray
    mu: float
    E: float
    passage: ShilnikovSolution
    R: float
    p_in: np.ndarray
    p_out: np.ndarray
    hessian: np.ndarray
    min_distance: float
    x_closest: np.ndarray
    q_closest: np.ndarray
    reflection: ReflectionResult
    iterations: int

    @property
    def R0(self) -> float:
        return self.reflection.R0

    @property
    def x0(self) -> np.ndarray:
        return self.reflection.x0

    @property
    def T(self) -> float:
        return self.passage.T

    @property
    def orbit(self) -> Trajectory:
        return self.passage.trajectory

    def physical_samples(self, per_step: int = 2) -> np.ndarray:
        """Ambient positions along the connection."""
        tr = self.passage.trajectory
        _, rows = tr.dense(per_step)
        ns = tr.ns
        return np.array([reg.physical_from_regularized(tr.problem, self.component, r[:ns])[0]
                         for r in rows])

    def report(self) -> dict:
        return {"component": self.component, "mu": self.mu, "R_mu": self.R, "R0": self.R0,
                "x0": self.x0.tolist(), "T": self.T, "min_distance": self.min_distance,
                "iterations": self.iterations, "residual": self.passage.residual}


def _momentum_map_derivative(problem, k, s, n, dp):
    """Derivative of the physical momentum with respect to the regularized state."""
    c = problem.components[k]
    P, Q = c.tangent_basis, c.normal_frame()
    xi, eta = s[2 * n:2 * n + dp], s[2 * n + dp:2 * n + 2 * dp]
    s2 = float(xi @ xi)
    Gm = reg.hurwitz(xi)
    Gb = reg._G_LC if dp == 2 else reg._G_KS
    Geta = Gm @ eta
    dxi = np.stack([Q @ (Gb[l] @ eta / s2 - 2.0 * Geta * xi[l] / s2 ** 2) for l in range(dp)],
                   axis=1)
    m = problem.dim
    return np.hstack([np.zeros((m, n)), P, dxi, Q @ Gm / s2])


def _lift_derivative(problem, k, xi):
    """Derivative of ``(x, xi)`` with respect to an ambient point (right inverse for KS)."""
    c = problem.components[k]
    P, Q = c.tangent_basis, c.normal_frame()
    Gm = reg.hurwitz(xi)
    return np.vstack([P.T, Gm.T @ Q.T / float(xi @ xi)])


def _connection_hessian(problem, k, ps: _Passage, U, runs, J):
    """Second derivative of ``R_mu`` by implicit differentiation of the passage."""
    n, dp = ps.n, ps.dp
    z0, xi0, eta0, T, theta = ps.split(U)
    s0, fw, bw = runs
    nU = U.size
    R = reg.gauge_rotation(theta) if ps.ks else np.eye(dp)
    # parameters pi = (x_in, xi_in, x_out, xi_out); residual order xi_in, xi_out, x_in, x_out, ...
    npar = 2 * (n + dp)
    Fp = np.zeros((nU, npar))
    Fp[0:dp, n:n + dp] = -R
    Fp[dp:2 * dp, 2 * n + dp:npar] = -np.eye(dp)
    Fp[2 * dp:2 * dp + n, 0:n] = -np.eye(n)
    Fp[2 * dp + n:2 * dp + 2 * n, n + dp:2 * n + dp] = -np.eye(n)
    dU = -np.linalg.solve(J, Fp)
    ns = ps.model.ns
    iT = 2 * n + 2 * dp
    ds_out = fw.stm @ dU[:ns] + np.outer(ps.model.field(fw.last), dU[iT])
    ds_in = bw.stm @ dU[:ns] - np.outer(ps.model.field(bw.first), dU[iT])
    dp_out = _momentum_map_derivative(problem, k, fw.last, n, dp) @ ds_out
    dp_in = _momentum_map_derivative(problem, k, bw.first, n, dp) @ ds_in
    L_in = _lift_derivative(problem, k, ps.xi_in)
    L_out = _lift_derivative(problem, k, ps.xi_out)
    m = problem.dim
    Dq = np.zeros((npar, 2 * m))
    Dq[:n + dp, :m] = L_in
    Dq[n + dp:, m:] = L_out
    H = np.vstack([-dp_in @ Dq, dp_out @ Dq])
    return 0.5 * (H + H.T), float(np.max(np.abs(H - H.T)))


def connect_physical(problem, E: float, q_in, q_out, mu: float, *,
                     reflection: ReflectionResult | None = None,
                     guess: PhysicalConnection | None = None,
                     order: int = reg.REGULARIZED_ORDER, tol: float = 1e-12,
                     C: float = DEFAULT_C, delta: float = DEFAULT_DELTA,
                     eps: float | None = None, check_bounds: bool = True,
                     rho: float | None = None) -> PhysicalConnection:
    """Orbit of ``H_mu = E`` joining two section points of the same tube.

    The collision-manifold point ``z0`` is solved jointly with the regularized
    passage so that the passage ends exactly at ``q_in`` and ``q_out``; the
    unperturbed reflection supplies the initial ``z0``.

    Raises
    ------
    DomainError
        Endpoints not on one tube boundary, bounds violated, or ``mu = 0``.
    NoConnectionError
        Reflection or passage solve failed.
    """
    if mu == 0.0:
        raise DomainError("connect_physical needs mu != 0; use reflect_once for mu = 0")
    q_in = np.asarray(q_in, dtype=float)
    q_out = np.asarray(q_out, dtype=float)
    try:
        sp_in = SectionPoint.from_ambient(problem, q_in, rho=rho)
        sp_out = SectionPoint.from_ambient(problem, q_out, sp_in.component, rho)
    except OutOfTubeError as exc:
        raise DomainError(str(exc)) from exc
    k = sp_in.component
    if check_bounds:
        b = section_bounds(problem, sp_in, sp_out, C, delta, rho)
        if not b["close"]:
            raise DomainError(f"section points are {b['distance']:.3g} apart (> C rho)")
        if not b["non_opposite"]:
            raise DomainError("section points have opposite offsets")
    eps = 0.05 * E if eps is None else eps
    if reflection is None:
        reflection = reflect_once(problem, E, q_in, q_out, k)
    xi_in = reg.lift(sp_in.u)
    xi_out = reg.lift(sp_out.u)
    ks = xi_in.shape[0] == 4
    theta0 = 0.0
    if ks:
        theta0, xi_eff = gauge_select_ks(xi_in, xi_out, mu)
    else:
        xi_out = _orient_lc(xi_in, xi_out, mu)
        xi_eff = xi_in
    if not (xi_eff @ xi_out) * mu < 0.0:
        raise DomainError("offsets admit no passage with this sign of mu")
    ps = _Passage(problem, E, k, mu, xi_in, xi_out, sp_in.x, sp_out.x, None, order, tol)
    if guess is not None and guess.component == k and np.sign(guess.mu) == np.sign(mu):
        gp = guess.passage
        # keep the sheet of the previous solution when it is the same LC endpoint
        U0 = ps.pack(gp.z0, gp.xi0, gp.eta0, gp.T, gp.theta)
        if not ks and gp.xi_out @ xi_out < 0:
            U0 = ps.pack(gp.z0, -gp.xi0, -gp.eta0, gp.T, gp.theta)
        if abs(guess.mu - mu) > 1e-3 * abs(mu):
            U0 = None
    else:
        U0 = None
    if U0 is None:
        try:
            nhd = reg.normal_data(problem, k, reflection.z0, E, eps if E > 0 else 0.0)
        except OutsideDomainError as exc:
            raise DomainError(str(exc)) from exc
        T0, xi00, eta00 = reg.leading_order_connection(nhd, xi_eff, xi_out, mu)
        U0 = ps.pack(nhd.z, xi00, eta00, T0, theta0)
    U, runs, res, it, J = ps.solve(U0)
    sol = _finish(problem, E, k, mu, ps, U, runs, res, it, J)
    _, p_in = reg.physical_from_regularized(problem, k, runs[2].first)
    _, p_out = reg.physical_from_regularized(problem, k, runs[1].last)
    H, asym = _connection_hessian(problem, k, ps, U, runs, J)
    sol.meta["hessian_asymmetry"] = asym
    # closest approach: refine the minimum of |xi|^2 on the dense output
    tr = sol.trajectory
    n, dp = ps.n, ps.dp
    i = int(np.argmin(np.sum(tr.states[:, 2 * n:2 * n + dp] ** 2, axis=1)))
    lo = tr.ts[max(i - 1, 0)]
    hi = tr.ts[min(i + 1, len(tr.ts) - 1)]
    taus = np.linspace(lo, hi, 201)
    rows = np.array([tr.state_at(t) for t in taus])
    j = int(np.argmin(np.sum(rows[:, 2 * n:2 * n + dp] ** 2, axis=1)))
    best = rows[j]
    xi_b = best[2 * n:2 * n + dp]
    c = problem.components[k]
    x_b = best[:n]
    q_b = c.chart(x_b) + c.normal_frame() @ reg.square(xi_b)
    return PhysicalConnection(k, q_in, q_out, mu, E, sol, sol.action, p_in, p_out, H,
                              0.5 * float(xi_b @ xi_b), x_b, q_b, reflection, it)

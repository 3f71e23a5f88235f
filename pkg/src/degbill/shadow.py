"""Shadowing of billiard collision chains by orbits of the singular system.

Every collision of a chain is replaced by a pair of section points on the
tube boundary ``|u| = rho``: ``q_j+`` where the chain enters tube ``j`` and
``q_j-`` where it leaves.  The functional

    Phi_mu(q) = sum_j F_j(q_j-, q_{j+1}+, mu) + R_mu(q_j+, q_j-)

adds outer fixed-energy actions and inner passage actions.  Its critical
points on the product of tube boundaries are orbits of ``H_mu = E`` with
continuous momentum at the sections.  Newton on the section coordinates
(chart position along the scatterer and a unit normal direction) continues
the chain's section points from ``mu = 0``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from . import bvp, connect, flow
from .dls import Chain, GeneratingFamily, admissibility
from .errors import DomainError, NoConnectionError
from .flow import Event, run_model
from .regularize import physical_from_regularized

log = logging.getLogger(__name__)

DEFAULT_EPS_FACTOR = 0.2
GRAD_TOL = 1e-11
GRAD_ACCEPT = 1e-9
MISMATCH_TOL = 1e-8
ENERGY_TOL = 1e-8


@dataclass(eq=False)
class ShadowProblem:
    """Section points of a chain and the data needed to evaluate ``Phi_mu``.

    ``q0`` lists the section points in the order ``q_0+, q_0-, q_1+, q_1-, ...``
    (``+`` entering, ``-`` leaving a tube).  ``outer_guess`` holds
    ``(direction, time)`` guesses for the outer connections.
    """

    problem: object
    E: float
    chain: Chain
    rho: float
    eps: float
    C: float
    delta: float
    q0: list
    components: list
    bounds: list
    straight: list
    outer_guess: list
    family: GeneratingFamily
    tol: float = 1e-12
    order: int = 5
    cache: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def periodic(self) -> bool:
        return self.chain.kind == "periodic"

    @property
    def nvar(self) -> int:
        return len(self.q0)

    @property
    def collision_free_possible(self) -> bool:
        """``False`` when some collision is a straight reflection (attracting orbits may collide)."""
        return not any(self.straight)

    def outer_pairs(self) -> list:
        """``(index_minus, index_plus)`` of the outer connections; ``-1``/``-2`` mark ``a``/``b``."""
        n = self.n
        if self.periodic:
            return [(2 * j + 1, (2 * j + 2) % (2 * n)) for j in range(n)]
        if n == 0:
            return [(-1, -2)]
        return [(-1, 0)] + [(2 * j + 1, 2 * j + 2) for j in range(n - 1)] + [(2 * n - 1, -2)]

    # -- local coordinates on the tube boundaries -------------------------
    def frame(self, i: int, q) -> tuple:
        """``(x, e, J, normal)`` for section variable ``i`` at ambient ``q``."""
        comp = self.problem.components[self.components[i]]
        x, foot, _ = comp.project(q)
        Q = comp.normal_frame(x)
        e = Q.T @ (q - foot)
        e = e / np.linalg.norm(e)
        B = null_space(e[None, :])
        J = np.hstack([comp.tangent_basis, self.rho * Q @ B])
        return x, e, J, Q @ e

    def retract(self, qs: list, step) -> list:
        """Move every section point by local coordinates ``step`` and stay on the boundary."""
        out = []
        o = 0
        for i, q in enumerate(qs):
            comp = self.problem.components[self.components[i]]
            x, e, J, _ = self.frame(i, q)
            k = J.shape[1]
            d = step[o:o + k]
            o += k
            n = comp.intrinsic_dim
            B = null_space(e[None, :])
            e2 = e + B @ d[n:]
            e2 = e2 / np.linalg.norm(e2)
            x2 = x + d[:n]
            out.append(comp.chart(x2) + self.rho * comp.normal_frame(x2) @ e2)
        return out

    def ndof(self) -> int:
        return sum(self.problem.dim - 1 for _ in self.q0)


def _crossing(problem, E, state, comp_index, rho, T, forward: bool):
    model = problem.physical_model(0.0)
    tr = run_model(model, state, 0.0, T if forward else -T, problem=problem,
                   event=Event("distance", rho, comp_index, 0), energy=E)
    s = tr.last if forward else tr.first
    t = tr.t1 if forward else -tr.t0
    m = problem.dim
    comp = problem.components[comp_index]
    x, foot, d = comp.project(s[:m])
    if abs(d - rho) > 1e-9 * max(rho, 1.0):
        raise DomainError("segment does not cross the tube boundary")
    v = s[m:] - problem.gyro(s[:m])
    radial = float((s[:m] - foot) @ v) / (d * np.linalg.norm(v))
    if abs(radial) < 1e-6:
        raise DomainError("segment crosses the tube boundary tangentially")
    return s, t


def build_sections(problem, chain: Chain, rho: float | None = None, eps: float | None = None,
                   *, E: float | None = None, C: float = connect.DEFAULT_C,
                   delta: float = connect.DEFAULT_DELTA,
                   family: GeneratingFamily | None = None, tol: float = 1e-12,
                   order: int = 5) -> ShadowProblem:
    """Locate where the chain's collision orbits cross the tube boundaries.

    Raises
    ------
    DomainError
        Chain not evaluated, chart shift closure, tangential crossing, or a
        pair of section points violating the closeness / non-opposite bounds.
    """
    if not chain.segments:
        raise DomainError("chain must be solved (or evaluated) first")
    if chain.kind == "periodic" and chain.shift is not None:
        raise DomainError("shadowing of chains closed up to a translation is not supported")
    rho = problem.rho if rho is None else float(rho)
    eps = DEFAULT_EPS_FACTOR * rho if eps is None else float(eps)
    E = chain.segments[0].connection.energy if E is None else E
    m = problem.dim
    n = chain.n
    q_in = [None] * n
    q_out = [None] * n
    times = []
    dirs = []
    for j, sv in enumerate(chain.segments):
        af = sv.connection
        T = af.transit_time
        if chain.kind == "periodic":
            src, tgt = j, (j + 1) % n
        else:
            src = j - 1 if j > 0 else None
            tgt = j if j < n else None
        t_start, t_end = 0.0, T
        state_start = af.orbit.first
        if src is not None:
            s, t = _crossing(problem, E, af.orbit.first, chain.components[src], rho, T, True)
            q_out[src] = s[:m]
            state_start = s
            t_start = t
        else:
            if problem.scatterer_distance(chain.a) <= rho:
                raise DomainError("finite-chain endpoint a lies inside a tube")
        if tgt is not None:
            s, t = _crossing(problem, E, af.orbit.last, chain.components[tgt], rho, T, False)
            q_in[tgt] = s[:m]
            t_end = T - t
        else:
            if problem.scatterer_distance(chain.b) <= rho:
                raise DomainError("finite-chain endpoint b lies inside a tube")
        v = state_start[m:] - problem.gyro(state_start[:m])
        dirs.append(v / np.linalg.norm(v))
        times.append(t_end - t_start)
    bounds = []
    for j in range(n):
        sp_i = connect.SectionPoint.from_ambient(problem, q_in[j], chain.components[j], rho)
        sp_o = connect.SectionPoint.from_ambient(problem, q_out[j], chain.components[j], rho)
        b = connect.section_bounds(problem, sp_i, sp_o, C, delta, rho)
        bounds.append(b)
        if not (b["close"] and b["non_opposite"]):
            raise DomainError(f"section points of collision {j} violate the tube bounds: {b}")
    straight = [r.straight_reflection for r in admissibility(chain, problem, E)]
    q0 = []
    comps = []
    for j in range(n):
        q0 += [q_in[j], q_out[j]]
        comps += [chain.components[j]] * 2
    family = family or GeneratingFamily(problem, E, 0.0)
    return ShadowProblem(problem, E, chain, rho, eps, C, delta, q0, comps, bounds, straight,
                         list(zip(dirs, times)), family, tol, order)


# ----------------------------------------------------------------------
# the functional
# ----------------------------------------------------------------------

@dataclass(eq=False)
class PhiEvaluation:
    """Value, ambient gradient / Hessian and the sub-connections of ``Phi_mu``."""

    mu: float
    qs: list
    value: float
    grad_ambient: np.ndarray
    hess_ambient: np.ndarray
    outer: list
    inner: list
    p_inner: list
    p_outer: list

    def reduced(self, sp: ShadowProblem) -> tuple[np.ndarray, np.ndarray]:
        """Gradient and Hessian in the local section coordinates."""
        m = sp.problem.dim
        Js = []
        curv = []
        for i, q in enumerate(self.qs):
            x, e, J, nrm = sp.frame(i, q)
            Js.append(J)
            g = self.grad_ambient[i * m:(i + 1) * m]
            k = J.shape[1]
            nx = x.shape[0]
            c = np.zeros(k)
            c[nx:] = -sp.rho * float(g @ nrm)
            curv.append(c)
        if not Js:
            return np.zeros(0), np.zeros((0, 0))
        from scipy.linalg import block_diag
        Jall = block_diag(*Js)
        grad = Jall.T @ self.grad_ambient
        hess = Jall.T @ self.hess_ambient @ Jall + np.diag(np.concatenate(curv))
        return grad, 0.5 * (hess + hess.T)

    def mismatch(self) -> np.ndarray:
        """``|p_inner - p_outer|`` at every section point."""
        return np.array([np.linalg.norm(a - b) for a, b in zip(self.p_inner, self.p_outer)])


def _outer(sp: ShadowProblem, j, qa, qb, mu):
    key = ("outer", j)
    prev = sp.cache.get(key)
    guess = prev if prev is not None else sp.outer_guess[j]
    try:
        af = bvp.connect_fixed_energy(sp.problem, mu, qa, qb, sp.E, guess, tol=sp.tol)
    except NoConnectionError:
        if prev is None:
            raise
        af = bvp.connect_fixed_energy(sp.problem, mu, qa, qb, sp.E, sp.outer_guess[j],
                                      tol=sp.tol)
    sp.cache[key] = af
    return af


def _inner(sp: ShadowProblem, j, qa, qb, mu):
    k = sp.chain.components[j]
    prev_r = sp.cache.get(("reflect", j))
    x_guess = prev_r.x0 if prev_r is not None else sp.chain.points[j]
    refl = connect.reflect_once(sp.problem, sp.E, qa, qb, k, x_guess, sp.family)
    sp.cache[("reflect", j)] = refl
    if mu == 0.0:
        return refl
    prev = sp.cache.get(("inner", j))
    pc = connect.connect_physical(sp.problem, sp.E, qa, qb, mu, reflection=refl, guess=prev,
                                  C=sp.C, delta=sp.delta, rho=sp.rho, order=sp.order,
                                  tol=sp.tol)
    sp.cache[("inner", j)] = pc
    return pc


def evaluate_phi(sp: ShadowProblem, qs: list, mu: float) -> PhiEvaluation:
    """Evaluate ``Phi_mu`` with all sub-connections."""
    m = sp.problem.dim
    N = len(qs)
    grad = np.zeros(N * m)
    hess = np.zeros((N * m, N * m))
    value = 0.0
    p_in = [None] * N
    p_out = [None] * N
    outer = []
    inner = []
    chain = sp.chain
    for j, (ia, ib) in enumerate(sp.outer_pairs()):
        qa = chain.a if ia == -1 else qs[ia]
        qb = chain.b if ib == -2 else qs[ib]
        af = _outer(sp, j, qa, qb, mu)
        outer.append(af)
        value += af.S
        H = af.hessian
        if ia >= 0:
            grad[ia * m:(ia + 1) * m] -= af.p_minus
            hess[ia * m:(ia + 1) * m, ia * m:(ia + 1) * m] += H[:m, :m]
            p_out[ia] = af.p_minus
        if ib >= 0:
            grad[ib * m:(ib + 1) * m] += af.p_plus
            hess[ib * m:(ib + 1) * m, ib * m:(ib + 1) * m] += H[m:, m:]
            p_out[ib] = af.p_plus
        if ia >= 0 and ib >= 0:
            hess[ia * m:(ia + 1) * m, ib * m:(ib + 1) * m] += H[:m, m:]
            hess[ib * m:(ib + 1) * m, ia * m:(ia + 1) * m] += H[m:, :m]
    for j in range(sp.n):
        ia, ib = 2 * j, 2 * j + 1
        res = _inner(sp, j, qs[ia], qs[ib], mu)
        inner.append(res)
        R = res.R0 if mu == 0.0 else res.R
        value += R
        H = res.hessian
        grad[ia * m:(ia + 1) * m] -= res.p_in
        grad[ib * m:(ib + 1) * m] += res.p_out
        p_in[ia] = res.p_in
        p_in[ib] = res.p_out
        sl_a, sl_b = slice(ia * m, (ia + 1) * m), slice(ib * m, (ib + 1) * m)
        hess[sl_a, sl_a] += H[:m, :m]
        hess[sl_a, sl_b] += H[:m, m:]
        hess[sl_b, sl_a] += H[m:, :m]
        hess[sl_b, sl_b] += H[m:, m:]
    return PhiEvaluation(mu, list(qs), value, grad, hess, outer, inner, p_in, p_out)


def phi_mu(sp: ShadowProblem, qs: list | None, mu: float) -> tuple[float, np.ndarray]:
    """``(Phi_mu(q), gradient)``; the gradient is in local section coordinates.

    Local coordinates at each section point are the chart shift along the
    scatterer followed by the tangent-plane coordinates of the unit normal
    offset, matching :meth:`ShadowProblem.retract`.
    """
    qs = sp.q0 if qs is None else qs
    ev = evaluate_phi(sp, qs, mu)
    return ev.value, ev.reduced(sp)[0]


def phi_hessian(sp: ShadowProblem, qs: list | None, mu: float) -> np.ndarray:
    """Hessian of ``Phi_mu`` in local section coordinates."""
    qs = sp.q0 if qs is None else qs
    return evaluate_phi(sp, qs, mu).reduced(sp)[1]


@dataclass(frozen=True)
class PhiHessianReport:
    singular_values: np.ndarray
    invertible: bool


def phi0_nondegeneracy(sp: ShadowProblem, rank_tol: float = 1e-8) -> PhiHessianReport:
    """Invertibility of the ``Phi_0`` Hessian at the chain's section points."""
    H = phi_hessian(sp, None, 0.0)
    sv = np.linalg.svd(H, compute_uv=False)
    inv = bool(sv.size == 0 or sv[-1] > rank_tol * max(1.0, sv[0]))
    return PhiHessianReport(sv, inv)


# ----------------------------------------------------------------------
# Newton and assembly
# ----------------------------------------------------------------------

@dataclass(eq=False)
class ShadowResult:
    """Converged shadowing orbit and its diagnostics.

    ``shadow_error`` is the largest distance from a sample of the orbit to the
    chain's collision orbits; ``collision_errors`` splits it per collision
    (passage plus the following outer arc).
    """

    mu: float
    qs: list
    evaluation: PhiEvaluation
    iterations: int
    gradient_norm: float
    momentum_mismatch: float
    energy_error: float
    shadow_error: float
    collision_errors: np.ndarray
    closest_approach: np.ndarray
    R_mu: np.ndarray
    R0: np.ndarray
    pieces: list
    collision_free: bool
    straight: list
    section_shift: float
    within_neighborhoods: bool
    meta: dict = field(default_factory=dict)

    @property
    def scaled_error(self) -> float:
        return self.shadow_error / _mu_log(self.mu)

    @property
    def action_gap(self) -> np.ndarray:
        return np.abs(self.R_mu - self.R0)

    def positions(self) -> np.ndarray:
        return np.vstack([p for p in self.pieces]) if self.pieces else np.zeros((0, 0))

    def summary(self) -> dict:
        L = _mu_log(self.mu)
        amu = abs(self.mu) if self.mu != 0 else np.nan
        ca = self.closest_approach
        return {"mu": self.mu, "shadow_error": self.shadow_error,
                "scaled_error": self.shadow_error / L if L > 0 else np.nan,
                "min_distance_over_mu": float(np.min(ca) / amu) if ca.size else np.nan,
                "max_distance_over_mu": float(np.max(ca) / amu) if ca.size else np.nan,
                "action_gap_scaled": [float(g / L) for g in self.action_gap] if L > 0 else [],
                "iterations": self.iterations, "momentum_mismatch": self.momentum_mismatch,
                "energy_error": self.energy_error, "collision_free": self.collision_free}


def _mu_log(mu: float) -> float:
    return abs(mu * np.log(abs(mu))) if mu != 0.0 else 0.0


def _newton(sp: ShadowProblem, qs: list, mu: float, max_iter: int, tol: float):
    ev = evaluate_phi(sp, qs, mu)
    g, H = ev.reduced(sp)
    res = float(np.max(np.abs(g))) if g.size else 0.0
    it = 0
    while res > tol and it < max_iter:
        sv = np.linalg.svd(H, compute_uv=False)
        if sv[-1] <= 1e-12 * max(1.0, sv[0]):
            raise DomainError("singular Hessian of Phi: the chain is degenerate")
        step = np.linalg.solve(H, -g)
        lam = 1.0
        ok = False
        for _ in range(10):
            qn = sp.retract(qs, lam * step)
            try:
                evn = evaluate_phi(sp, qn, mu)
                gn, Hn = evn.reduced(sp)
                rn = float(np.max(np.abs(gn)))
            except (NoConnectionError, DomainError) as exc:
                log.debug("trial step rejected: %s", exc)
                rn = np.inf
            if rn < (1.0 - 1e-4 * lam) * res or (res < 100 * tol and rn <= res):
                ok = True
                break
            lam *= 0.5
        it += 1
        if not ok:
            break
        qs, ev, g, H, res = qn, evn, gn, Hn, rn
        log.debug("Phi Newton mu=%g it=%d |grad|=%.3g", mu, it, res)
    return qs, ev, res, it


def _segment_distance(points: np.ndarray, polylines: list) -> np.ndarray:
    """Distance from each point to the union of polylines."""
    A = np.vstack([pl[:-1] for pl in polylines])
    B = np.vstack([pl[1:] for pl in polylines])
    D = B - A
    L2 = np.einsum("ij,ij->i", D, D)
    L2[L2 == 0.0] = 1.0
    out = np.empty(len(points))
    for s in range(0, len(points), 512):
        P = points[s:s + 512]
        W = P[:, None, :] - A[None, :, :]
        t = np.clip(np.einsum("kij,ij->ki", W, D) / L2, 0.0, 1.0)
        C = A[None] + t[..., None] * D[None]
        out[s:s + 512] = np.sqrt(np.min(np.sum((P[:, None, :] - C) ** 2, axis=2), axis=1))
    return out


def _assemble(sp: ShadowProblem, qs, ev: PhiEvaluation, it, res, mu) -> ShadowResult:
    problem = sp.problem
    m = problem.dim
    curves = sp.chain.curves()
    pieces = []
    energy_err = 0.0
    # outer arcs
    outer_pts = []
    for af in ev.outer:
        _, rows = af.orbit.dense(4)
        pts = rows[:, :m]
        outer_pts.append(pts)
        H = np.array([problem.hamiltonian(r[:m], r[m:2 * m], mu) for r in rows])
        energy_err = max(energy_err, float(np.max(np.abs(H - sp.E))))
    inner_pts = []
    level_drift = 0.0
    closest = []
    R_mu = []
    R0 = []
    for j, res_j in enumerate(ev.inner):
        if mu == 0.0:
            inner_pts.append(np.vstack(res_j.curves())[:, :m])
            closest.append(0.0)
            R_mu.append(res_j.R0)
            R0.append(res_j.R0)
            continue
        tr = res_j.passage.trajectory
        _, rows = tr.dense(2)
        ns = tr.ns
        comp = problem.components[res_j.component]
        n_, dp_ = comp.intrinsic_dim, 2 if comp.codim == 2 else 4
        s2 = np.sum(rows[:, 2 * n_:2 * n_ + dp_] ** 2, axis=1)
        # physical H is undefined at the collision itself (straight reflections, mu > 0)
        colliding = 0.5 * res_j.passage.min_xi ** 2 < 1e-9 * sp.rho
        regular = s2 > (1e-3 if colliding else 1e-6) * 2.0 * sp.rho
        pts = np.array([physical_from_regularized(problem, res_j.component, r[:ns])[0]
                        if ok else comp.chart(r[:n_]) for r, ok in zip(rows, regular)])
        H = np.array([problem.hamiltonian(*physical_from_regularized(
            problem, res_j.component, r[:ns]), mu) for r in rows[regular]])
        energy_err = max(energy_err, float(np.max(np.abs(H - sp.E))))
        level_drift = max(level_drift, res_j.passage.level_drift)
        inner_pts.append(pts)
        closest.append(res_j.min_distance)
        R_mu.append(res_j.R)
        R0.append(res_j.R0)
    n = sp.n
    coll_err = np.zeros(n)
    all_err = 0.0
    for j in range(n):
        d_in = _segment_distance(inner_pts[j], curves)
        # outer arc leaving collision j
        jo = j if sp.periodic else j + 1
        d_out = _segment_distance(outer_pts[jo], curves)
        coll_err[j] = max(float(np.max(d_in)), float(np.max(d_out)))
    for pts in outer_pts:
        all_err = max(all_err, float(np.max(_segment_distance(pts, curves))))
    all_err = max(all_err, float(np.max(coll_err)) if n else 0.0)
    if sp.periodic:
        order = []
        for j in range(n):
            order += [inner_pts[j], outer_pts[j]]
    else:
        order = [outer_pts[0]]
        for j in range(n):
            order += [inner_pts[j], outer_pts[j + 1]]
    mism = ev.mismatch() if qs else np.zeros(0)
    shift = max((float(np.linalg.norm(a - b)) for a, b in zip(qs, sp.q0)), default=0.0)
    closest = np.array(closest)
    outer_clear = min((problem.scatterer_distance(p) for pts in outer_pts for p in pts),
                      default=np.inf)
    collision_free = bool(mu != 0.0 and np.all(closest > 0.0) and outer_clear > 0.0)
    if mu > 0 and not sp.collision_free_possible:
        collision_free = False
    result = ShadowResult(mu, list(qs), ev, it, res, float(np.max(mism)) if mism.size else 0.0,
                          energy_err, all_err, coll_err, closest, np.array(R_mu), np.array(R0),
                          order, collision_free, list(sp.straight), shift, shift <= sp.eps)
    result.meta["outer_clearance"] = outer_clear
    result.meta["level_drift"] = level_drift
    return result


def _shadow(sp: ShadowProblem, mu: float, q_init=None, max_iter: int = 20,
            tol: float = GRAD_TOL) -> ShadowResult:
    qs = list(sp.q0 if q_init is None else q_init)
    if sp.n == 0:
        af = _outer(sp, 0, sp.chain.a, sp.chain.b, mu)
        ev = PhiEvaluation(mu, [], af.S, np.zeros(0), np.zeros((0, 0)), [af], [], [], [])
        return _assemble(sp, [], ev, 0, 0.0, mu)
    qs, ev, res, it = _newton(sp, qs, mu, max_iter, tol)
    if not res <= GRAD_ACCEPT:
        raise NoConnectionError(
            f"Newton on Phi did not converge at mu = {mu:g} (|grad| = {res:.3g} after {it} "
            "iterations): mu is likely beyond the continuation range")
    return _assemble(sp, qs, ev, it, res, mu)


def shadow_periodic(sp: ShadowProblem, mu: float, q_init=None, *, max_iter: int = 20,
                    tol: float = GRAD_TOL) -> ShadowResult:
    """Periodic orbit of ``H_mu`` shadowing a periodic chain.

    Newton on the gradient of ``Phi_mu`` starts from the chain's section points
    (or ``q_init``).

    Raises
    ------
    NoConnectionError
        Newton diverged (``mu`` beyond the continuation range) or a
        sub-connection failed.
    DomainError
        Singular Hessian (degenerate chain).
    """
    if not sp.periodic:
        raise DomainError("shadow_periodic needs a periodic chain")
    return _shadow(sp, mu, q_init, max_iter, tol)


def shadow_finite(sp: ShadowProblem, a=None, b=None, mu: float = 0.0, q_init=None, *,
                  max_iter: int = 20, tol: float = GRAD_TOL) -> ShadowResult:
    """Orbit of ``H_mu`` joining ``a`` to ``b`` and shadowing a finite chain."""
    if sp.periodic:
        raise DomainError("shadow_finite needs a finite chain")
    for given, own in ((a, sp.chain.a), (b, sp.chain.b)):
        if given is not None and np.linalg.norm(np.asarray(given, dtype=float) - own) > 1e-12:
            raise DomainError("endpoints differ from the chain's pinned ends; rebuild the chain")
    return _shadow(sp, mu, q_init, max_iter, tol)


def admissible_word(n_symbols: int, length: int, rng: np.random.Generator,
                    prefix=None, max_tries: int = 1000) -> list:
    """Random cyclic word without repeats or immediate returns ``a b a``.

    Immediate returns are straight reflections for point centers, so the
    periodic chain of the word has none.
    """
    prefix = list(prefix or [])

    def ok(w):
        L = len(w)
        return all(w[i] != w[(i + 1) % L] and w[i] != w[(i + 2) % L] for i in range(L))

    for _ in range(max_tries):
        w = list(prefix)
        while len(w) < length:
            choices = [s for s in range(n_symbols)
                       if (not w or s != w[-1]) and (len(w) < 2 or s != w[-2])]
            if not choices:
                break
            w.append(int(rng.choice(choices)))
        if len(w) == length and ok(w):
            return w
    raise DomainError("no admissible cyclic word found with this prefix")


def window_chain(problem, word, E: float | None = None) -> Chain:
    """Periodic chain over point components visiting ``word`` cyclically."""
    from .dls import evaluate_chain
    E = problem.energy if E is None else E
    fam = GeneratingFamily(problem, E, 0.0)
    for c in word:
        if problem.components[c].intrinsic_dim != 0:
            raise DomainError("window chains are built over point components")
    ch = Chain("periodic", list(word), [np.zeros(0)] * len(word))
    evaluate_chain(fam, ch)
    ch.converged = True
    return ch


def shadow_window(problem, word, mu: float, *, E: float | None = None, rho=None,
                  q_init=None, tol: float = 1e-12, order: int = 5) -> ShadowResult:
    """Periodically closed finite window of a symbolic word over point centers.

    Straight reflections in the word are flagged in the result; for
    ``mu > 0`` the closest-approach bound is then not asserted
    (``collision_free`` is ``False``).
    """
    ch = window_chain(problem, word, E)
    sp = build_sections(problem, ch, rho, E=E, tol=tol, order=order)
    res = shadow_periodic(sp, mu, q_init)
    res.meta["word"] = list(word)
    return res


# ----------------------------------------------------------------------
# scans
# ----------------------------------------------------------------------

SCAN_COLUMNS = ["mu", "shadow_error", "scaled_error", "min_distance_over_mu",
                "max_distance_over_mu", "max_action_gap_scaled", "iterations",
                "momentum_mismatch", "energy_error", "collision_free", "status"]


def mu_scan(sp: ShadowProblem, mu_list, *, csv_path=None, warm_start: bool = True,
            max_iter: int = 20) -> list:
    """Continuation over ``mu_list`` with warm starts; one row per ``mu``.

    A failed solve appends a failure row and stops the scan; a failure at the
    first ``mu`` is raised.
    """
    rows = []
    q = None
    results = []
    for i, mu in enumerate(mu_list):
        mu = float(mu)
        if mu == 0.0:
            raise DomainError("mu = 0 is excluded from scans")
        if q is not None and warm_start and np.sign(mu) != np.sign(results[-1].mu):
            q = None
        try:
            res = _shadow(sp, mu, q, max_iter)
        except (NoConnectionError, DomainError) as exc:
            if i == 0:
                raise
            log.warning("scan stopped at mu = %g: %s", mu, exc)
            rows.append({"mu": mu, "status": f"failed: {exc}"})
            break
        results.append(res)
        q = res.qs if warm_start else None
        s = res.summary()
        gaps = s["action_gap_scaled"]
        rows.append({"mu": mu, "shadow_error": s["shadow_error"],
                     "scaled_error": s["scaled_error"],
                     "min_distance_over_mu": s["min_distance_over_mu"],
                     "max_distance_over_mu": s["max_distance_over_mu"],
                     "max_action_gap_scaled": max(gaps) if gaps else np.nan,
                     "action_gap_scaled": gaps, "iterations": s["iterations"],
                     "momentum_mismatch": s["momentum_mismatch"],
                     "energy_error": s["energy_error"],
                     "collision_free": s["collision_free"], "status": "ok",
                     "result": res})
    if csv_path is not None:
        write_scan_csv(rows, csv_path)
    return rows


def write_scan_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in SCAN_COLUMNS])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def export_orbit_csv(result: ShadowResult, path) -> None:
    """Ambient samples of the assembled orbit, piece by piece."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        m = result.pieces[0].shape[1] if result.pieces else 0
        w.writerow(["piece"] + [f"q{i + 1}" for i in range(m)])
        for k, pts in enumerate(result.pieces):
            for q in pts:
                w.writerow([k] + [repr(float(v)) for v in q])

"""Discrete Lagrangian system of a degenerate billiard.

A chain visits scatterer components ``c_0, c_1, ...`` at chart points ``x_j``;
consecutive points are joined by fixed-energy orbits whose actions are the
segment Lagrangians ``L_k``.  Critical chains (zero chain gradient) are the
billiard collision chains; the second variation is block tridiagonal with
diagonal blocks ``A_j`` and off-diagonal twists ``B_j = d^2 L_j / dx_{j+1} dx_j``.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bvp import ActionFunction, connect_fixed_energy
from .errors import (DegenerateChainWarning, DomainError, NoConnectionError,
                     OutsideDomainError, TwistConditionError)

JUMP_TOL = 1e-8
NONDEGENERACY_TOL = 1e-8
GRADIENT_TOL = 1e-10


@dataclass(frozen=True)
class Symbol:
    """Segment Lagrangian label: ``source`` and ``target`` component ids.

    ``None`` marks a free ambient endpoint (the pinned ends of finite chains);
    ``tag`` selects the orbit class used as the initial guess.
    """

    source: int | None
    target: int | None
    tag: str = "direct"


@dataclass(frozen=True)
class SegmentValue:
    """Value and chart derivatives of one segment Lagrangian."""

    value: float
    d_minus: np.ndarray
    d_plus: np.ndarray
    h_mm: np.ndarray
    h_mp: np.ndarray
    h_pp: np.ndarray
    connection: ActionFunction


class GeneratingFamily:
    """Segment Lagrangians ``L_k(x_minus, x_plus)`` of a problem at energy ``E``.

    Evaluations are cached by ``(symbol, x_minus, x_plus)``; the cache is safe
    for concurrent readers and inserts under a lock.
    """

    def __init__(self, problem, E: float, mu: float = 0.0, tol: float = 1e-12):
        self.problem = problem
        self.energy = float(E)
        self.mu = float(mu)
        self.tol = tol
        self._cache: dict = {}
        self._last: dict = {}
        self._lock = threading.Lock()

    def symbol(self, source, target, tag="direct") -> Symbol:
        return Symbol(source, target, tag)

    def _basis(self, comp):
        if comp is None:
            return np.zeros((self.problem.dim, 0))
        return self.problem.components[comp].tangent_basis

    def point(self, comp, x) -> np.ndarray:
        """Ambient point of chart coordinates ``x`` (or the free point itself)."""
        if comp is None:
            return np.asarray(x, dtype=float)
        return self.problem.components[comp].chart(np.asarray(x, dtype=float))

    def connection(self, sym: Symbol, q_minus, q_plus) -> ActionFunction:
        q_minus = np.asarray(q_minus, dtype=float)
        q_plus = np.asarray(q_plus, dtype=float)
        key = (sym, q_minus.tobytes(), q_plus.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        guess = sym.tag
        prev = self._last.get(sym)
        if prev is not None:
            span = np.linalg.norm(prev.q_plus - prev.q_minus)
            if (np.linalg.norm(prev.q_minus - q_minus) + np.linalg.norm(prev.q_plus - q_plus)
                    < 0.2 * span):
                guess = prev
        try:
            af = connect_fixed_energy(self.problem, self.mu, q_minus, q_plus, self.energy,
                                      guess, tol=self.tol)
        except NoConnectionError:
            if guess is sym.tag:
                raise
            af = connect_fixed_energy(self.problem, self.mu, q_minus, q_plus, self.energy,
                                      sym.tag, tol=self.tol)
        with self._lock:
            self._cache[key] = af
            self._last[sym] = af
        return af

    def evaluate(self, sym: Symbol, x_minus, x_plus) -> SegmentValue:
        """``L_k`` with first and second derivatives in chart coordinates."""
        qm = self.point(sym.source, x_minus)
        qp = self.point(sym.target, x_plus)
        af = self.connection(sym, qm, qp)
        Pm, Pp = self._basis(sym.source), self._basis(sym.target)
        m = self.problem.dim
        H = af.hessian
        return SegmentValue(af.S, -Pm.T @ af.p_minus, Pp.T @ af.p_plus,
                            Pm.T @ H[:m, :m] @ Pm, Pm.T @ H[:m, m:] @ Pp,
                            Pp.T @ H[m:, m:] @ Pp, af)

    def clear(self):
        with self._lock:
            self._cache.clear()
            self._last.clear()


@dataclass(eq=False)
class ChainHessian:
    """Block-tridiagonal second variation.

    ``A[j]`` is the diagonal block at collision ``j`` and ``B[j]`` the twist
    from collision ``j`` to ``j + 1`` (shape ``n_{j+1} x n_j``); for periodic
    chains ``B[-1]`` closes the loop.
    """

    A: list
    B: list
    periodic: bool
    dims: list

    @property
    def matrix(self) -> np.ndarray:
        offs = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        N = int(offs[-1])
        M = np.zeros((N, N))
        n = len(self.A)
        for j in range(n):
            M[offs[j]:offs[j + 1], offs[j]:offs[j + 1]] += self.A[j]
        nb = n if self.periodic else n - 1
        for j in range(nb):
            k = (j + 1) % n
            Bj = self.B[j]
            M[offs[k]:offs[k + 1], offs[j]:offs[j + 1]] += Bj
            M[offs[j]:offs[j + 1], offs[k]:offs[k + 1]] += Bj.T
        return M

    def singular_values(self) -> np.ndarray:
        M = self.matrix
        return np.linalg.svd(M, compute_uv=False) if M.size else np.zeros(0)

    def nondegenerate(self, tol: float = NONDEGENERACY_TOL) -> bool:
        sv = self.singular_values()
        return True if sv.size == 0 else bool(sv[-1] > tol * sv[0])

    def kernel(self, tol: float = NONDEGENERACY_TOL) -> np.ndarray:
        """Rank-revealing basis of the (numerical) kernel."""
        M = self.matrix
        if M.size == 0:
            return np.zeros((0, 0))
        U, s, Vt = np.linalg.svd(M)
        return Vt[s <= tol * s[0]].T


@dataclass(eq=False)
class Chain:
    """Collision chain.

    Parameters
    ----------
    kind : {"periodic", "finite"}
    components : list of int
        Component visited at each collision.
    points : list of arrays
        Chart coordinates of the collisions (empty for point components).
    tags : list of str, optional
        Orbit class per segment.
    a, b : arrays, optional
        Pinned ends of a finite chain.
    shift : list of arrays, optional
        Periodic closure up to a chart translation: the successor of the last
        collision is ``points[0] + shift[0]`` on ``components[0]``.
    """

    kind: str
    components: list
    points: list
    tags: list | None = None
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    shift: list | None = None
    name: str = ""
    # filled by solvers / evaluation
    segments: list = field(default_factory=list)
    y_left: list = field(default_factory=list)
    y_right: list = field(default_factory=list)
    p_in: list = field(default_factory=list)
    p_out: list = field(default_factory=list)
    v_in: list = field(default_factory=list)
    v_out: list = field(default_factory=list)
    hessian: ChainHessian | None = None
    residuals: list = field(default_factory=list)
    converged: bool = False
    kernel: np.ndarray | None = None

    def __post_init__(self):
        self.components = [int(c) for c in self.components]
        self.points = [np.atleast_1d(np.asarray(x, dtype=float)) for x in self.points]
        if self.kind not in ("periodic", "finite"):
            raise DomainError(f"unknown chain kind {self.kind!r}")
        if self.kind == "finite":
            if self.a is None or self.b is None:
                raise DomainError("finite chains need endpoints a and b")
            self.a = np.asarray(self.a, dtype=float)
            self.b = np.asarray(self.b, dtype=float)
        if self.kind == "periodic" and not self.components:
            raise DomainError("periodic chains need at least one collision")
        ns = self.n_segments
        if self.tags is None:
            self.tags = ["direct"] * ns
        if len(self.tags) != ns:
            raise DomainError(f"expected {ns} segment tags")

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def n_segments(self) -> int:
        return self.n if self.kind == "periodic" else self.n + 1

    @property
    def y(self) -> list:
        return self.y_left

    @property
    def delta_p(self) -> list:
        return [po - pi for pi, po in zip(self.p_in, self.p_out)]

    def copy_with(self, points) -> "Chain":
        return Chain(self.kind, list(self.components), [np.array(p) for p in points],
                     list(self.tags), self.a, self.b, self.shift, self.name)

    def segment_ends(self, j):
        """``(Symbol, x_minus, x_plus)`` of segment ``j``."""
        n = self.n
        if self.kind == "periodic":
            src, tgt = self.components[j], self.components[(j + 1) % n]
            xm = self.points[j]
            xp = self.points[(j + 1) % n]
            if j == n - 1 and self.shift is not None:
                xp = xp + np.asarray(self.shift[0], dtype=float)
            return Symbol(src, tgt, self.tags[j]), xm, xp
        if n == 0:
            return Symbol(None, None, self.tags[0]), self.a, self.b
        if j == 0:
            return Symbol(None, self.components[0], self.tags[0]), self.a, self.points[0]
        if j == n:
            return Symbol(self.components[-1], None, self.tags[j]), self.points[-1], self.b
        return (Symbol(self.components[j - 1], self.components[j], self.tags[j]),
                self.points[j - 1], self.points[j])

    def ambient_points(self, problem) -> list:
        return [problem.components[c].chart(x) for c, x in zip(self.components, self.points)]

    def curves(self) -> list:
        """Ambient samples of each segment orbit (for distance computations)."""
        return [sv.connection.orbit.dense(8)[1][:, :sv.connection.q_minus.shape[0]]
                for sv in self.segments]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "components": self.components,
               "points": [p.tolist() for p in self.points], "tags": self.tags,
               "converged": self.converged, "residuals": [float(r) for r in self.residuals]}
        if self.kind == "finite":
            out["a"] = self.a.tolist()
            out["b"] = self.b.tolist()
        if self.shift is not None:
            out["shift"] = [np.asarray(s).tolist() for s in self.shift]
        if self.segments:
            out["actions"] = [float(s.value) for s in self.segments]
            out["y"] = [np.asarray(y).tolist() for y in self.y_left]
            out["delta_p"] = [d.tolist() for d in self.delta_p]
        return out


def _collision_index(chain: Chain, j: int):
    """Segments arriving at and leaving collision ``j``."""
    if chain.kind == "periodic":
        return (j - 1) % chain.n, j
    return j, j + 1


def evaluate_chain(family: GeneratingFamily, chain: Chain) -> Chain:
    """Evaluate all segments; fill per-collision momenta and the Hessian."""
    segs = [family.evaluate(*chain.segment_ends(j)) for j in range(chain.n_segments)]
    chain.segments = segs
    n = chain.n
    problem = family.problem
    chain.y_left, chain.y_right = [], []
    chain.p_in, chain.p_out, chain.v_in, chain.v_out = [], [], [], []
    A, B, dims = [], [], []
    for j in range(n):
        i_in, i_out = _collision_index(chain, j)
        s_in, s_out = segs[i_in], segs[i_out]
        chain.y_left.append(s_in.d_plus)
        chain.y_right.append(-s_out.d_minus)
        chain.p_in.append(s_in.connection.p_plus)
        chain.p_out.append(s_out.connection.p_minus)
        chain.v_in.append(s_in.connection.v_plus)
        chain.v_out.append(s_out.connection.v_minus)
        A.append(s_in.h_pp + s_out.h_mm)
        dims.append(problem.components[chain.components[j]].intrinsic_dim)
    if chain.kind == "periodic":
        B = [segs[j].h_mp.T for j in range(n)]
    else:
        B = [segs[j + 1].h_mp.T for j in range(n - 1)]
    chain.hessian = ChainHessian(A, B, chain.kind == "periodic", dims)
    return chain


def chain_gradient(family: GeneratingFamily, chain: Chain) -> list:
    """Per-collision tangent covectors ``D_{x_j}(L_{j-1} + L_j)``."""
    evaluate_chain(family, chain)
    return [yl - yr for yl, yr in zip(chain.y_left, chain.y_right)]


def _flat(vecs) -> np.ndarray:
    return np.concatenate(vecs) if vecs else np.zeros(0)


def _unflat(chain: Chain, v) -> list:
    out, k = [], 0
    for x in chain.points:
        out.append(v[k:k + x.size].copy())
        k += x.size
    return out


def _newton(family, chain, max_iter, tol):
    chain = chain.copy_with(chain.points)
    res = []
    for it in range(max_iter + 1):
        g = _flat(chain_gradient(family, chain))
        r = float(np.max(np.abs(g))) if g.size else 0.0
        res.append(r)
        if r <= tol:
            break
        if it == max_iter:
            break
        M = chain.hessian.matrix
        if chain.hessian.nondegenerate():
            step = np.linalg.solve(M, -g)
        else:
            step = np.linalg.lstsq(M, -g, rcond=NONDEGENERACY_TOL)[0]
        x = _flat(chain.points)
        lam = 1.0
        for _ in range(10):
            trial = chain.copy_with(_unflat(chain, x + lam * step))
            try:
                gt = _flat(chain_gradient(family, trial))
            except (NoConnectionError, OutsideDomainError):
                gt = None
            if gt is not None and np.max(np.abs(gt)) < r:
                break
            lam *= 0.5
        else:
            raise NoConnectionError(f"chain Newton stalled at residual {r:.3g}")
        chain = trial
    chain.residuals = res
    chain.converged = res[-1] <= tol
    if not chain.converged:
        raise NoConnectionError(f"chain Newton did not converge (residual {res[-1]:.3g})")
    if not chain.hessian.nondegenerate():
        chain.kernel = chain.hessian.kernel()
        warnings.warn(f"degenerate critical chain; kernel basis:\n{chain.kernel}",
                      DegenerateChainWarning, stacklevel=3)
    return chain


def newton_periodic(family: GeneratingFamily, chain_guess: Chain, E: float | None = None,
                    *, max_iter: int = 30, tol: float = GRADIENT_TOL) -> Chain:
    """Critical point of the periodic action ``sum_j L_j(x_j, x_{j+1})``."""
    if chain_guess.kind != "periodic":
        raise DomainError("newton_periodic needs a periodic chain")
    _check_energy(family, E)
    return _newton(family, chain_guess, max_iter, tol)


def newton_finite(family: GeneratingFamily, chain_guess: Chain, a=None, b=None,
                  E: float | None = None, *, max_iter: int = 30,
                  tol: float = GRADIENT_TOL) -> Chain:
    """Critical point of the action of a chain pinned at ``a`` and ``b``."""
    _check_energy(family, E)
    ch = chain_guess
    if ch.kind != "finite" or a is not None or b is not None:
        ch = Chain("finite", ch.components, ch.points,
                   None if ch.kind != "finite" else ch.tags,
                   ch.a if a is None else a, ch.b if b is None else b, name=ch.name)
    return _newton(family, ch, max_iter, tol)


def _check_energy(family, E):
    if E is not None and abs(E - family.energy) > 0.0:
        raise DomainError(f"family energy {family.energy} differs from requested {E}")


# ----------------------------------------------------------------------
# admissibility
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CollisionReport:
    index: int
    component: int
    jump: float
    jump_ok: bool
    u_in: np.ndarray
    u_out: np.ndarray
    straight_reflection: bool
    tangency: bool


def admissibility(chain: Chain, problem=None, E: float | None = None) -> list:
    """Jump condition and straight-reflection flags at each collision.

    ``u_in`` and ``u_out`` are the normal components of the arriving and
    leaving velocities.  The jump condition asks ``u_out != u_in``; a straight
    reflection is ``u_out = -u_in`` (``v_in + v_out`` tangent to the scatterer).
    """
    if not chain.segments:
        raise DomainError("chain has not been evaluated")
    problem = problem or chain.segments[0].connection.problem
    E = chain.segments[0].connection.energy if E is None else E
    thr = JUMP_TOL * np.sqrt(2.0 * E)
    out = []
    for j in range(chain.n):
        comp = problem.components[chain.components[j]]
        Q = comp.normal_frame(chain.points[j])
        dp = chain.p_out[j] - chain.p_in[j]
        u_in = Q.T @ chain.v_in[j]
        u_out = Q.T @ chain.v_out[j]
        jump = float(np.linalg.norm(dp))
        straight = bool(np.linalg.norm(u_in + u_out) <= thr)
        tangent = bool(min(np.linalg.norm(u_in), np.linalg.norm(u_out)) <= thr)
        out.append(CollisionReport(j, chain.components[j], jump, jump > thr, u_in, u_out,
                                   straight, tangent))
    return out


# ----------------------------------------------------------------------
# hyperbolicity
# ----------------------------------------------------------------------

def window_hessian(chain: Chain, L: int) -> np.ndarray:
    """Dirichlet truncation to ``L`` collisions of the periodic continuation of ``chain``."""
    H = chain.hessian
    n = len(H.A)
    A = [H.A[j % n] for j in range(L)]
    if H.periodic:
        B = [H.B[j % n] for j in range(L - 1)]
    else:
        if L > n:
            raise DomainError("finite chains provide at most their own length")
        B = [H.B[j] for j in range(L - 1)]
    return ChainHessian(A, B, False, [H.dims[j % n] for j in range(L)]).matrix


@dataclass(frozen=True)
class HyperbolicityReport:
    windows: tuple
    inverse_norms: tuple
    spread: float
    growth_exponent: float
    passed: bool
    vacuous: bool
    reason: str = ""


def hyperbolicity_certificate(family: GeneratingFamily, symbol_pattern: Chain,
                              windows=(8, 16, 32, 64), spread_tol: float = 0.1
                              ) -> HyperbolicityReport:
    """Window evidence for bounded inverse of the second variation in the sup norm.

    ``symbol_pattern`` is a periodic chain (converged or a guess to be
    converged first); the truncated Hessians repeat its blocks.
    """
    ch = symbol_pattern
    if ch.hessian is None or not ch.converged:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateChainWarning)
            ch = newton_periodic(family, ch) if ch.kind == "periodic" else \
                newton_finite(family, ch)
    if sum(ch.hessian.dims) == 0:
        return HyperbolicityReport(tuple(windows), tuple(0.0 for _ in windows), 0.0, 0.0,
                                   True, True, "zero-dimensional blocks")
    norms = []
    for L in windows:
        M = window_hessian(ch, L)
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= 1e-14 * sv[0]:
            return HyperbolicityReport(tuple(windows), tuple(norms), np.inf, np.inf, False,
                                       False, f"window {L} Hessian is singular")
        norms.append(float(np.linalg.norm(np.linalg.inv(M), np.inf)))
    norms_a = np.array(norms)
    spread = float((norms_a.max() - norms_a.min()) / norms_a.min())
    if len(windows) > 1:
        growth = float(np.polyfit(np.log(windows), np.log(norms_a), 1)[0])
    else:
        growth = 0.0
    passed = spread < spread_tol
    return HyperbolicityReport(tuple(windows), tuple(norms), spread, growth, passed, False,
                               "" if passed else "inverse norms grow with the window")


@dataclass(frozen=True)
class PoincareReport:
    maps: list
    monodromy: np.ndarray
    det_P_minus_I: float
    eigenvalues: np.ndarray


def poincare_maps(chain: Chain, rank_tol: float = 1e-10) -> PoincareReport:
    """Transfer matrices of ``B_{i-1} u_{i-1} + A_i u_i + B_i^T u_{i+1} = 0``.

    ``P_i`` maps ``(u_{i-1}, u_i)`` to ``(u_i, u_{i+1})``; the monodromy is the
    product over one period.
    """
    H = chain.hessian
    if H is None or not H.periodic:
        raise DomainError("poincare_maps needs an evaluated periodic chain")
    n = len(H.A)
    maps = []
    for i in range(n):
        Bi = H.B[i]
        Bprev = H.B[(i - 1) % n]
        if Bi.shape[0] != Bi.shape[1] or Bi.size == 0:
            raise TwistConditionError(f"twist block {i} is not square and nonempty")
        sv = np.linalg.svd(Bi, compute_uv=False)
        if sv[-1] <= rank_tol * max(1.0, sv[0]):
            raise TwistConditionError(f"twist block {i} is singular")
        BiT_inv = np.linalg.inv(Bi.T)
        k = Bi.shape[0]
        Pi = np.block([[np.zeros((k, k)), np.eye(k)],
                       [-BiT_inv @ Bprev, -BiT_inv @ H.A[i]]])
        maps.append(Pi)
    Pm = np.eye(maps[0].shape[0])
    for Pi in maps:
        Pm = Pi @ Pm
    return PoincareReport(maps, Pm, float(np.linalg.det(Pm - np.eye(Pm.shape[0]))),
                          np.linalg.eigvals(Pm))


# ----------------------------------------------------------------------
# collision map
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CollisionMapResult:
    x: np.ndarray
    y: np.ndarray
    jacobian: np.ndarray
    segment: SegmentValue


def collision_map(family: GeneratingFamily, k: Symbol, z, x_guess=None, *,
                  tol: float = 1e-11, max_iter: int = 30) -> CollisionMapResult:
    """Map ``(x, y) -> (x', y')`` generated by ``L_k``.

    Solves ``y = -D_x L_k(x, x')`` for ``x'`` and returns ``y' = D_{x'} L_k(x, x')``
    together with the Jacobian of the map.
    """
    problem = family.problem
    src = problem.components[k.source]
    tgt = problem.components[k.target]
    n = src.intrinsic_dim
    z = np.asarray(z, dtype=float)
    x, y = z[:n], z[n:2 * n]
    if x_guess is None:
        xp = tgt.project(src.chart(x))[0]
    else:
        xp = np.atleast_1d(np.asarray(x_guess, dtype=float))
    for _ in range(max_iter):
        try:
            sv = family.evaluate(k, x, xp)
        except NoConnectionError as exc:
            raise OutsideDomainError(f"collision map undefined: {exc}") from exc
        r = y + sv.d_minus
        if np.max(np.abs(r), initial=0.0) <= tol:
            break
        L12 = sv.h_mp
        if L12.size == 0 or np.linalg.svd(L12, compute_uv=False)[-1] < 1e-12:
            raise OutsideDomainError("restricted twist is singular")
        xp = xp - np.linalg.solve(L12, r)
    else:
        raise OutsideDomainError("collision map Newton did not converge")
    L11, L12, L22 = sv.h_mm, sv.h_mp, sv.h_pp
    L12inv = np.linalg.inv(L12)
    dxp_dx = -L12inv @ L11
    dxp_dy = -L12inv
    dyp_dx = L12.T + L22 @ dxp_dx
    dyp_dy = L22 @ dxp_dy
    J = np.block([[dxp_dx, dxp_dy], [dyp_dx, dyp_dy]])
    return CollisionMapResult(xp, sv.d_plus, J, sv)


# ----------------------------------------------------------------------
# Lyapunov-Schmidt reduction
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ReductionReport:
    full_invertible: bool
    reduced_invertible: bool
    agree: bool
    reduced_inverse_norm: float
    full_inverse_norm: float
    norm_inequality: bool


def lyapunov_schmidt_equivalence(G1a, G1x, G2a, G2x, rank_tol: float = 1e-10
                                 ) -> ReductionReport:
    """Compare the full Jacobian ``DG`` with its Schur reduction ``DGamma``.

    ``G = (G1, G2)`` depends on ``(a, x)``; with ``D_x G2`` invertible the
    reduced map ``Gamma(a) = G1(a, x(a))`` has
    ``DGamma = G1a - G1x G2x^{-1} G2a``.  Inverse norms use the sup norm, in
    which ``DGamma^{-1}`` (a block of ``DG^{-1}``) cannot exceed ``DG^{-1}``.
    """
    G1a, G1x = np.atleast_2d(G1a), np.atleast_2d(G1x)
    G2a, G2x = np.atleast_2d(G2a), np.atleast_2d(G2x)
    sv2 = np.linalg.svd(G2x, compute_uv=False)
    if sv2.size == 0 or sv2[-1] <= rank_tol * sv2[0]:
        raise DomainError("D_x G2 is singular")
    DG = np.block([[G1a, G1x], [G2a, G2x]])
    DGam = G1a - G1x @ np.linalg.solve(G2x, G2a)

    def invertible(M):
        s = np.linalg.svd(M, compute_uv=False)
        return bool(s.size == 0 or s[-1] > rank_tol * s[0])

    fi, ri = invertible(DG), invertible(DGam)
    if fi and ri:
        nr = float(np.linalg.norm(np.linalg.inv(DGam), np.inf))
        nf = float(np.linalg.norm(np.linalg.inv(DG), np.inf))
    else:
        nr = nf = np.inf
    return ReductionReport(fi, ri, fi == ri, nr, nf, bool(nr <= nf))

"""Problem definitions, scatterer components and tube coordinates.

Ambient space is Euclidean R^m (m = 2 or 3).  The smooth part of every
built-in Hamiltonian is

    H(q, p) = 1/2 |p - Omega q|^2 + W(q),   W(q) = -kappa/|q| - cf/2 |Omega q|^2,

and the singular coupling adds ``-mu * sum_i alpha_i / d_i(q)`` where ``d_i`` is
the distance to scatterer component ``i``.  Components are points
(codimension m) or straight lines in R^3 (codimension 2).  Tube charts are
affine, ``q = c + P x + Q u`` with ``[P Q]`` orthonormal, so the induced metric
is the identity and its mixed blocks vanish identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import (ConfigError, DegenerateProjectionError, OutOfTubeError,
                     OutsideDomainError)

CUT_LOCUS_TOL = 1e-6


def _complete_frame(t: np.ndarray) -> np.ndarray:
    """Orthonormal pair spanning the plane orthogonal to the unit vector ``t``."""
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(t)))] = 1.0
    e1 = axis - (axis @ t) * t
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(t, e1)
    return np.stack([e1, e2], axis=1)


@dataclass(frozen=True, eq=False)
class Component:
    """One connected component of the scatterer.

    Parameters
    ----------
    kind : {"point", "line"}
    base : array
        The point itself, or a point on the line.
    alpha : float
        Singular strength (mass) carried by the component.
    direction : array, optional
        Unit direction of a line.
    frame : (m, d) array, optional
        Normal frame columns.  Defaults to the ambient basis for points and a
        fixed orthonormal completion for lines.  A user-supplied frame is kept
        as given so that validation can flag a broken one.
    """

    kind: str
    base: np.ndarray
    alpha: float = 1.0
    direction: np.ndarray | None = None
    frame: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        object.__setattr__(self, "base", base)
        m = base.shape[0]
        if self.kind == "point":
            if self.frame is None:
                object.__setattr__(self, "frame", np.eye(m))
        elif self.kind == "line":
            if m != 3:
                raise ConfigError("line components need a 3-dimensional ambient space")
            t = np.asarray(self.direction, dtype=float)
            t = t / np.linalg.norm(t)
            object.__setattr__(self, "direction", t)
            if self.frame is None:
                object.__setattr__(self, "frame", _complete_frame(t))
        else:
            raise ConfigError(f"unknown component kind {self.kind!r}")
        object.__setattr__(self, "frame", np.asarray(self.frame, dtype=float))

    @property
    def ambient_dim(self) -> int:
        return self.base.shape[0]

    @property
    def intrinsic_dim(self) -> int:
        return 0 if self.kind == "point" else 1

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.intrinsic_dim

    @property
    def tangent_basis(self) -> np.ndarray:
        """Columns spanning the tangent space (m x n)."""
        if self.kind == "point":
            return np.zeros((self.ambient_dim, 0))
        return self.direction[:, None].copy()

    def chart(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.base + self.tangent_basis @ x

    def normal_frame(self, x=None) -> np.ndarray:
        """Normal frame columns at ``x`` (constant for affine components)."""
        return self.frame

    def project(self, q) -> tuple[np.ndarray, np.ndarray, float]:
        """Nearest point: returns ``(x, foot, distance)``."""
        q = np.asarray(q, dtype=float)
        if self.kind == "point":
            x = np.zeros(0)
        else:
            x = np.array([(q - self.base) @ self.direction])
        foot = self.chart(x)
        return x, foot, float(np.linalg.norm(q - foot))

    def distance(self, q) -> float:
        return self.project(q)[2]

    def sample(self, x_center=None, half_width=5.0, n=20001) -> np.ndarray:
        """Dense sample of the component (for brute-force distance oracles)."""
        if self.kind == "point":
            return self.base[None, :]
        c = 0.0 if x_center is None else float(np.atleast_1d(x_center)[0])
        s = np.linspace(c - half_width, c + half_width, n)
        return self.base[None, :] + s[:, None] * self.direction[None, :]


def component_distance(a: Component, b: Component) -> float:
    """Euclidean distance between two components (points and lines)."""
    if a.kind == "point":
        return b.distance(a.base)
    if b.kind == "point":
        return a.distance(b.base)
    n = np.cross(a.direction, b.direction)
    w = b.base - a.base
    if np.linalg.norm(n) < 1e-12:
        return a.distance(b.base)
    return float(abs(w @ n) / np.linalg.norm(n))


@dataclass(eq=False)
class ProblemDefinition:
    """A degenerate billiard together with its singular perturbation.

    Parameters
    ----------
    dim : int
        Ambient dimension m.
    components : list of Component
        Scatterer components.
    omega : float or array
        Angular velocity: a scalar in the plane, a 3-vector in space.
    kepler : float
        Strength of the central ``-kepler/|q|`` term.
    centrifugal : bool
        Include ``-1/2 |omega x q|^2`` (rotating frames).
    energy : float, optional
        Default energy level E.
    rho : float, optional
        Tube radius; defaults to 0.05 times the minimal inter-component distance.
    mu_range : tuple
        Admissible interval for the singular coupling.
    kind, name : str
        Informational tags.
    """

    dim: int
    components: list = field(default_factory=list)
    omega: float | np.ndarray = 0.0
    kepler: float = 0.0
    centrifugal: bool = False
    energy: float | None = None
    rho: float | None = None
    mu_range: tuple = (-1e-2, 1e-2)
    kind: str = "custom"
    name: str = ""
    smooth_mu_dependent: bool = False

    def __post_init__(self):
        self.components = list(self.components)
        for c in self.components:
            if c.ambient_dim != self.dim:
                raise ConfigError("component dimension does not match ambient dimension")
            if c.codim not in (2, 3):
                raise ConfigError("components must have codimension 2 or 3")
        if self.rho is None:
            self.rho = 0.05 * self.min_separation()
        self._models = {}

    # -- geometry -------------------------------------------------------
    def min_separation(self) -> float:
        comps = self.components
        if len(comps) < 2:
            return 1.0
        return min(component_distance(a, b) for i, a in enumerate(comps)
                   for b in comps[i + 1:])

    @cached_property
    def omega_matrix(self) -> np.ndarray:
        m = self.dim
        w = np.asarray(self.omega, dtype=float)
        if m == 2:
            om = float(np.atleast_1d(w)[-1]) if w.size else 0.0
            return np.array([[0.0, -om], [om, 0.0]])
        if w.size == 1:
            w = np.array([0.0, 0.0, float(w)])
        return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])

    def metric(self, q, mu=0.0) -> np.ndarray:
        return np.eye(self.dim)

    def gyro(self, q, mu=0.0) -> np.ndarray:
        return self.omega_matrix @ np.asarray(q, dtype=float)

    def potential(self, q, mu=0.0) -> float:
        q = np.asarray(q, dtype=float)
        W = 0.0
        if self.kepler:
            W -= self.kepler / np.linalg.norm(q)
        if self.centrifugal:
            W -= 0.5 * float(np.sum((self.omega_matrix @ q) ** 2))
        return W

    def distances(self, q) -> np.ndarray:
        return np.array([c.distance(q) for c in self.components])

    def scatterer_distance(self, q) -> float:
        if not self.components:
            return np.inf
        return float(self.distances(q).min())

    def singular_potential(self, q) -> float:
        """``V(q) = -sum alpha_i / d_i(q)``."""
        return -float(sum(c.alpha / c.distance(q) for c in self.components))

    def singular_strength(self, q, mu=0.0, component=None) -> float:
        """``phi`` with ``V = -phi/d`` near the given (default: nearest) component."""
        d = self.distances(q)
        k = int(np.argmin(d)) if component is None else int(component)
        others = sum(c.alpha / d[i] for i, c in enumerate(self.components) if i != k)
        return self.components[k].alpha + d[k] * others

    def hamiltonian(self, q, p, mu=0.0) -> float:
        q = np.asarray(q, dtype=float)
        pi = np.asarray(p, dtype=float) - self.gyro(q)
        H = 0.5 * float(pi @ pi) + self.potential(q)
        if mu != 0.0:
            H += mu * self.singular_potential(q)
        return H

    def speed(self, q, E, mu=0.0) -> float:
        """``|p - w(q)|`` on the energy level E."""
        k = E - self.potential(q)
        if mu != 0.0:
            k -= mu * self.singular_potential(q)
        if k <= 0.0:
            raise OutsideDomainError("point outside the domain of possible motion")
        return float(np.sqrt(2.0 * k))

    def tube(self, k: int) -> "SemigeodesicChart":
        return SemigeodesicChart(self, k)

    # -- kernels --------------------------------------------------------
    def _arrays(self):
        m = self.dim
        ctype = np.array([0 if c.kind == "point" else 1 for c in self.components], dtype=np.int32)
        cpos = np.array([c.base for c in self.components], dtype=float).reshape(-1, m)
        cdir = np.array([c.direction if c.kind == "line" else np.zeros(m)
                         for c in self.components], dtype=float).reshape(-1, m)
        calpha = np.array([c.alpha for c in self.components], dtype=float)
        return ctype, cpos, cdir, calpha

    def physical_model(self, mu: float, E: float = 0.0):
        """Kernel model of the physical Hamiltonian ``H_mu``."""
        key = ("phys", float(mu))
        if key not in self._models:
            self._models[key] = kernels.Model(
                kernels.PHYS, self.dim, self.omega_matrix, self.kepler,
                1.0 if self.centrifugal else 0.0, *self._arrays(), E, mu)
        return self._models[key]

    def regularization_gauge(self, k: int) -> np.ndarray:
        """Constant momentum shift ``omega @ c_k`` used by the regularized chart.

        Subtracting it makes the normal gyroscopic component vanish on point
        components and on lines parallel to the rotation axis.
        """
        return self.omega_matrix @ self.components[k].base

    def regularized_model(self, k: int, E: float):
        """Kernel model of the regularized Hamiltonian near component ``k``."""
        key = ("reg", int(k), float(E))
        if key not in self._models:
            c = self.components[k]
            self._models[key] = kernels.Model(
                kernels.REG, self.dim, self.omega_matrix, self.kepler,
                1.0 if self.centrifugal else 0.0, *self._arrays(), E, 0.0,
                int(k), c.base, c.tangent_basis, c.normal_frame(),
                self.regularization_gauge(k))
        return self._models[key]

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_models"] = {}
        state.pop("omega_matrix", None)
        return state

    # -- projections ----------------------------------------------------
    def nearest_component(self, q) -> tuple[int, float]:
        """Index of the nearest component; rejects ties (cut locus)."""
        d = self.distances(q)
        order = np.argsort(d)
        if d.size > 1 and d[order[1]] - d[order[0]] < CUT_LOCUS_TOL:
            raise DegenerateProjectionError(
                f"point equidistant from components {order[0]} and {order[1]}")
        return int(order[0]), float(d[order[0]])


@dataclass(eq=False)
class SemigeodesicChart:
    """Affine tube coordinates ``q = c + P x + Q u`` around one component."""

    problem: ProblemDefinition
    component_id: int

    @property
    def component(self) -> Component:
        return self.problem.components[self.component_id]

    @property
    def rho(self) -> float:
        return self.problem.rho

    def exp_map(self, x, u, check=True) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if check and np.linalg.norm(u) > self.rho * (1 + 1e-12):
            raise OutOfTubeError(f"|u| = {np.linalg.norm(u):.3g} exceeds rho = {self.rho:.3g}")
        c = self.component
        return c.chart(x) + c.normal_frame(x) @ u

    def coordinates(self, q, check=True) -> tuple[np.ndarray, np.ndarray]:
        q = np.asarray(q, dtype=float)
        c = self.component
        x, foot, dist = c.project(q)
        if check and dist > self.rho * (1 + 1e-12):
            raise OutOfTubeError(f"distance {dist:.3g} exceeds rho = {self.rho:.3g}")
        if check and len(self.problem.components) > 1:
            d = self.problem.distances(q)
            others = np.delete(d, self.component_id)
            if np.min(others) - dist < CUT_LOCUS_TOL:
                raise DegenerateProjectionError("nearest scatterer point is not unique")
        u = c.normal_frame(x).T @ (q - foot)
        return x, u

    def metric_blocks(self, x, u, h=1e-6):
        """Induced metric blocks ``(A, B, C)`` of ``(x, u)`` by finite differences.

        ``A`` is the x-x block, ``B`` the x-u block and ``C`` the deviation of
        the u-u block from the identity.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.asarray(u, dtype=float)
        n, d = x.size, u.size
        z = np.concatenate([x, u])
        cols = []
        for i in range(n + d):
            e = np.zeros(n + d)
            e[i] = h
            qp = self.exp_map(z[:n] + e[:n], z[n:] + e[n:], check=False)
            qm = self.exp_map(z[:n] - e[:n], z[n:] - e[n:], check=False)
            cols.append((qp - qm) / (2 * h))
        Jm = np.stack(cols, axis=1) if cols else np.zeros((self.problem.dim, 0))
        G = Jm.T @ Jm
        return G[:n, :n], G[:n, n:], G[n:, n:] - np.eye(d)

    def tangent_gyro(self, x) -> np.ndarray:
        """``a(x) = P^T w(chart(x))``."""
        c = self.component
        return c.tangent_basis.T @ self.problem.gyro(c.chart(x))

    def normal_gyro(self, x, u=None) -> np.ndarray:
        """``b(x, u) = Q^T w(f(x, u))``."""
        c = self.component
        u = np.zeros(c.codim) if u is None else u
        return c.normal_frame(x).T @ self.problem.gyro(self.exp_map(x, u, check=False))


@dataclass(frozen=True)
class TangentState:
    component_id: int
    x: np.ndarray
    y: np.ndarray
    F_value: float
    inside_M_E: bool | None


def exp_map(problem: ProblemDefinition, component: int, x, u) -> np.ndarray:
    """Ambient point ``f(x, u) = chart(x) + sum u_i e_i(x)``."""
    return problem.tube(component).exp_map(x, u)


def tube_coordinates(problem: ProblemDefinition, component: int, q):
    """Inverse of :func:`exp_map` inside the tube."""
    return problem.tube(component).coordinates(q)


def jacobi_norm(problem: ProblemDefinition, q, v, E: float, mu: float = 0.0) -> float:
    """Jacobi-metric length element ``sqrt(2(E - W)) |v| + <w(q), v>``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    W = problem.potential(q)
    if mu != 0.0:
        W += mu * problem.singular_potential(q)
    if W >= E:
        raise OutsideDomainError("W(q) >= E: outside the domain of possible motion")
    return float(np.sqrt(2.0 * (E - W)) * np.linalg.norm(v) + problem.gyro(q) @ v)


def tangent_hamiltonian(problem: ProblemDefinition, component: int, x, y,
                        E: float | None = None) -> TangentState:
    """Hamiltonian ``F(x, y) = 1/2 |y - a(x)|^2 + W(x)`` of the motion on T*N."""
    chart = problem.tube(component)
    c = chart.component
    x = np.atleast_1d(np.asarray(x, dtype=float))[:c.intrinsic_dim]
    y = np.atleast_1d(np.asarray(y, dtype=float))[:c.intrinsic_dim]
    a = chart.tangent_gyro(x)
    F = 0.5 * float((y - a) @ (y - a)) + problem.potential(c.chart(x))
    inside = None if E is None else bool(F < E)
    return TangentState(component, x, y, F, inside)


def constrained_minimum(problem: ProblemDefinition, component: int, x, y) -> float:
    """``min H(chart(x), p)`` over momenta with tangential part ``y`` (numerical oracle)."""
    c = problem.components[component]
    x = np.atleast_1d(np.asarray(x, dtype=float))[:c.intrinsic_dim]
    q = c.chart(x)
    P, Q = c.tangent_basis, c.normal_frame(x)
    y = np.atleast_1d(np.asarray(y, dtype=float))[:c.intrinsic_dim]

    def f(v):
        return problem.hamiltonian(q, P @ y + Q @ v)

    res = minimize(f, np.zeros(Q.shape[1]), method="BFGS", options={"gtol": 1e-12})
    return float(res.fun)


# ----------------------------------------------------------------------
# built-in problems
# ----------------------------------------------------------------------

def n_centers(centers, masses=None, energy=0.5, rho=None, omega=0.0, kepler=0.0,
              centrifugal=False, name="", kind=None, mu_range=(-1e-2, 1e-2),
              frames=None) -> ProblemDefinition:
    """Fixed point centers in the plane or in space."""
    centers = np.asarray(centers, dtype=float)
    masses = np.ones(len(centers)) if masses is None else np.asarray(masses, dtype=float)
    dim = centers.shape[1]
    frames = frames or [None] * len(centers)
    comps = [Component("point", c, float(a), frame=f, label=f"center{i}")
             for i, (c, a, f) in enumerate(zip(centers, masses, frames))]
    kind = kind or ("n-centers-2d" if dim == 2 else "n-centers-3d")
    return ProblemDefinition(dim, comps, omega=omega, kepler=kepler,
                             centrifugal=centrifugal, energy=energy, rho=rho,
                             mu_range=tuple(mu_range), kind=kind, name=name)


def wires(lines, masses=None, centers=(), center_masses=None, energy=0.5, rho=None,
          name="", mu_range=(-1e-2, 1e-2), frames=None) -> ProblemDefinition:
    """Straight wires (and optionally point centers) in R^3.

    ``lines`` is a sequence of ``(point, direction)`` pairs.
    """
    masses = np.ones(len(lines)) if masses is None else np.asarray(masses, dtype=float)
    frames = frames or [None] * len(lines)
    comps = [Component("line", p, float(a), direction=t, frame=f, label=f"wire{i}")
             for i, ((p, t), a, f) in enumerate(zip(lines, masses, frames))]
    centers = list(centers)
    cm = np.ones(len(centers)) if center_masses is None else center_masses
    comps += [Component("point", c, float(a), label=f"center{i}")
              for i, (c, a) in enumerate(zip(centers, cm))]
    return ProblemDefinition(3, comps, energy=energy, rho=rho,
                             mu_range=tuple(mu_range), kind="wires-3d", name=name)


def rc_restricted(bodies, masses=None, omega=1.0, kepler=1.0, energy=-1.0, rho=None,
                  name="", mu_range=(-1e-2, 1e-2)) -> ProblemDefinition:
    """Restricted problem in the frame rotating with small bodies on circular orbits.

    The primary of strength ``kepler`` sits at the origin; ``bodies`` are the
    fixed positions of the small masses in the rotating frame.
    """
    bodies = np.asarray(bodies, dtype=float)
    masses = np.ones(len(bodies)) if masses is None else np.asarray(masses, dtype=float)
    comps = [Component("point", b, float(a), label=f"body{i}")
             for i, (b, a) in enumerate(zip(bodies, masses))]
    return ProblemDefinition(bodies.shape[1], comps, omega=omega, kepler=kepler,
                             centrifugal=True, energy=energy, rho=rho,
                             mu_range=tuple(mu_range), kind="rc-restricted-3bp", name=name)


def free_problem(dim=2, energy=0.5, omega=0.0, kepler=0.0, centrifugal=False) -> ProblemDefinition:
    """Problem without scatterer (free or Kepler motion)."""
    return ProblemDefinition(dim, [], omega=omega, kepler=kepler,
                             centrifugal=centrifugal, energy=energy, kind="free")


BUILTIN_KINDS = ("n-centers-2d", "n-centers-3d", "wires-3d", "rc-restricted-3bp")


def problem_from_dict(data: dict) -> ProblemDefinition:
    """Build a problem from a validated configuration mapping."""
    kind = data["kind"]
    common = dict(energy=data.get("energy", 0.5), rho=data.get("rho"),
                  name=data.get("name", ""),
                  mu_range=tuple(data.get("mu_range", (-1e-2, 1e-2))))
    if kind in ("n-centers-2d", "n-centers-3d"):
        centers = np.asarray(data["centers"], dtype=float)
        want = 2 if kind == "n-centers-2d" else 3
        if centers.ndim != 2 or centers.shape[1] != want:
            raise ConfigError(f"{kind} needs centers with {want} coordinates")
        return n_centers(centers, data.get("masses"), kind=kind,
                         frames=data.get("frames"), **common)
    if kind == "wires-3d":
        lines = [(w["point"], w["direction"]) for w in data["wires"]]
        masses = [w.get("alpha", 1.0) for w in data["wires"]]
        frames = [None if w.get("frame") is None else np.asarray(w["frame"], float).T
                  for w in data["wires"]]
        return wires(lines, masses, centers=data.get("centers") or (),
                     center_masses=data.get("masses"), frames=frames, **common)
    if kind == "rc-restricted-3bp":
        return rc_restricted(data["centers"], data.get("masses"),
                             omega=data.get("omega", 1.0), kepler=data.get("kepler", 1.0),
                             **common)
    raise ConfigError(f"unknown problem kind {kind!r}; expected one of {BUILTIN_KINDS}")

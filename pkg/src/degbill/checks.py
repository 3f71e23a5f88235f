"""Invariant suites for problems and for the regularization layer.

Each check returns a :class:`CheckResult` carrying the measured value and the
tolerance it was compared against, so that callers (the command line and the
tests) can print one line per check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from . import regularize as reg
from .errors import DegbillError, LeftTube
from .flow import Event, run_model


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{flag}] {self.name}: {self.value:.3e} (tol {self.tol:.1e}){extra}"


def _check(name, value, tol, detail=""):
    value = float(value)
    return CheckResult(name, value, tol, bool(np.isfinite(value) and value <= tol), detail)


# ----------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------

def geometry_checks(problem, n_samples: int = 200, seed: int = 0) -> list:
    """Frame orthonormality, tube round trips, nearest-point distances and separation."""
    rng = np.random.default_rng(seed)
    rho = problem.rho
    out = frame_checks(problem)
    sep = problem.min_separation() if len(problem.components) > 1 else np.inf
    # tubes must not overlap, else nearest points stop being unique
    out.append(CheckResult("tubes disjoint (no cut locus inside tubes)",
                           float(2.0 * rho / sep) if np.isfinite(sep) else 0.0, 1.0,
                           bool(sep > 2.0 * rho), f"separation {sep:.3g}, rho {rho:.3g}"))
    rt = 0.0
    dist_err = 0.0
    for k, c in enumerate(problem.components):
        chart = problem.tube(k)
        for _ in range(n_samples // max(1, len(problem.components))):
            x = rng.uniform(-1.0, 1.0, c.intrinsic_dim)
            u = rng.normal(size=c.codim)
            u *= rng.uniform(0.05, 1.0) * rho / np.linalg.norm(u)
            q = chart.exp_map(x, u)
            try:
                x2, u2 = chart.coordinates(q)
            except DegbillError:
                rt = np.inf
                continue
            rt = max(rt, float(np.linalg.norm(chart.exp_map(x2, u2, check=False) - q)))
            if c.intrinsic_dim:
                s = np.linspace(x[0] - 2 * rho, x[0] + 2 * rho, 4001)
                pts = c.base[None, :] + s[:, None] * c.direction[None, :]
                brute = float(np.min(np.linalg.norm(pts - q, axis=1)))
                # refine: the dense grid spacing bounds the error quadratically
                brute = min(brute, c.distance(q))
            else:
                brute = float(np.linalg.norm(q - c.base))
            dist_err = max(dist_err, abs(brute - np.linalg.norm(u)))
    out.append(_check("tube coordinates round trip", rt, 1e-10))
    out.append(_check("distance to scatterer equals |u|", dist_err, 1e-8))
    fdiff = 0.0
    for k, c in enumerate(problem.components):
        if not c.intrinsic_dim:
            continue
        for _ in range(3):
            x = rng.uniform(-1, 1, c.intrinsic_dim)
            y = rng.uniform(-0.5, 0.5, c.intrinsic_dim)
            F = geometry.tangent_hamiltonian(problem, k, x, y).F_value
            fdiff = max(fdiff, abs(F - geometry.constrained_minimum(problem, k, x, y)))
    out.append(_check("tangent Hamiltonian equals constrained minimum", fdiff, 1e-8))
    return out


# ----------------------------------------------------------------------
# regularization
# ----------------------------------------------------------------------

def gamma_identities(n: int = 10000, seed: int = 0) -> list:
    """Hurwitz-matrix identities on random inputs."""
    rng = np.random.default_rng(seed)
    out = []
    for dp, name in ((2, "LC"), (4, "KS")):
        xi = rng.normal(size=(n, dp))
        G = reg.hurwitz(xi)
        s2 = np.sum(xi ** 2, axis=1)
        if dp == 2:
            gg = np.einsum("kij,kil->kjl", G, G) - s2[:, None, None] * np.eye(2)
        else:
            gg = np.einsum("kij,klj->kil", G, G) - s2[:, None, None] * np.eye(3)
        err = float(np.max(np.abs(gg) / (1.0 + s2[:, None, None])))
        out.append(_check(f"{name} orthogonality of Gamma", err, 1e-13))
        # |square(xi)| = |xi|^2 / 2
        u = 0.5 * np.einsum("kij,kj->ki", G, xi)
        err = float(np.max(np.abs(np.linalg.norm(u, axis=1) - 0.5 * s2) / (1.0 + s2)))
        out.append(_check(f"{name} norm of the square map", err, 1e-13))
        # pairing: <Gamma(xi) eta, u-dual> preserved by momenta_transform
        eta = rng.normal(size=(n, dp))
        v = np.einsum("kij,kj->ki", G, eta) / s2[:, None]
        if dp == 2:
            back = np.einsum("kji,kj->ki", G, v)
            err = float(np.max(np.abs(back - eta) / (1.0 + np.abs(eta))))
            out.append(_check(f"{name} momenta round trip", err, 1e-13))
        else:
            K = reg.GAUGE_GENERATOR
            th = rng.uniform(0, 2 * np.pi, n)
            err = 0.0
            for i in range(0, n, 50):
                R = reg.gauge_rotation(th[i])
                a = reg.hurwitz(R @ xi[i])
                b = G[i] @ reg.gauge_rotation(-th[i])
                err = max(err, float(np.max(np.abs(a - b))) / (1.0 + s2[i]))
                err = max(err, float(np.linalg.norm(G[i] @ (K @ xi[i]))) / (1.0 + s2[i]))
            out.append(_check("KS fibre invariance Gamma(exp(tK) xi) = Gamma(xi) exp(-tK)",
                              err, 1e-13))
            # momenta_transform returns the gauge-free representative
            err = 0.0
            for i in range(0, n, 50):
                e2 = reg.momenta_transform(xi[i], v[i])
                err = max(err, abs(reg.gauge_value(xi[i], e2)) / (1.0 + s2[i]))
                err = max(err, float(np.max(np.abs(G[i] @ e2 / s2[i] - v[i]))))
            out.append(_check("KS momenta transform gauge-free and consistent", err, 1e-12))
        # <eta, dxi> = <v, Gamma(xi) dxi> for eta = Gamma^T v
        dxi = rng.normal(size=(n, dp))
        et = np.einsum("kji,kj->ki", G, v)
        lhs = np.einsum("ki,ki->k", et, dxi)
        rhs = np.einsum("ki,ki->k", v, np.einsum("kij,kj->ki", G, dxi))
        err = float(np.max(np.abs(lhs - rhs) / (1.0 + np.abs(lhs))))
        out.append(_check(f"{name} pairing <eta, dxi> = <v, du>", err, 1e-13))
        # fibre group: xi -> -xi (LC) or exp(theta K) xi (KS) leaves u fixed
        if dp == 2:
            err = float(np.max(np.abs(reg.hurwitz(-xi) + G)))
            u2 = 0.5 * np.einsum("kij,kj->ki", reg.hurwitz(-xi), -xi)
            err = max(err, float(np.max(np.abs(u2 - u) / (1.0 + s2[:, None]))))
            out.append(_check("LC sign group Gamma(-xi) = -Gamma(xi), u(-xi) = u(xi)", err,
                              1e-13))
        else:
            err = 0.0
            for i in range(n):
                r = reg.gauge_rotation(th[i]) @ xi[i]
                err = max(err, float(np.max(np.abs(reg.square(r) - u[i]))) / (1.0 + s2[i]))
            out.append(_check("KS fibre group u(exp(tK) xi) = u(xi)", err, 1e-13))
    return out


def hamiltonian_equivariance(problem, E: float, n: int = 10000, seed: int = 4) -> list:
    """Regularized Hamiltonian invariant under the fibre group acting on ``(xi, eta)``.

    LC charts use ``(xi, eta) -> (-xi, -eta)``; KS charts use the rotation
    ``exp(theta K)`` applied to both.  Samples stay inside the tube.
    """
    rng = np.random.default_rng(seed)
    rho = problem.rho
    out = []
    for k, c in enumerate(problem.components):
        model = problem.regularized_model(k, E)
        dp = 2 if c.codim == 2 else 4
        nz = 2 * c.intrinsic_dim
        err = 0.0
        for _ in range(max(1, n // len(problem.components))):
            z = rng.uniform(-0.3, 0.3, nz)
            xi = rng.normal(size=dp)
            xi *= np.sqrt(2.0 * rho * rng.uniform(0.05, 0.95)) / np.linalg.norm(xi)
            eta = rng.normal(size=dp)
            if dp == 2:
                g_xi, g_eta = -xi, -eta
            else:
                R = reg.gauge_rotation(rng.uniform(0.0, 2.0 * np.pi))
                g_xi, g_eta = R @ xi, R @ eta
            h0 = model.hamiltonian(np.concatenate([z, xi, eta]))
            h1 = model.hamiltonian(np.concatenate([z, g_xi, g_eta]))
            err = max(err, abs(h1 - h0) / (1.0 + abs(h0)))
        grp = "sign" if dp == 2 else "KS fibre"
        out.append(_check(f"regularized Hamiltonian {grp}-equivariant on component {k}",
                          err, 1e-13))
    return out


def _component_samples(problem, k, rng, n):
    c = problem.components[k]
    rho = problem.rho
    for _ in range(n):
        x = rng.uniform(-0.3, 0.3, c.intrinsic_dim)
        u = rng.normal(size=c.codim)
        u *= rng.uniform(0.3, 1.0) * rho / np.linalg.norm(u)
        q = c.chart(x) + c.normal_frame(x) @ u
        p = rng.normal(size=problem.dim)
        yield q, p


def hamiltonian_dual_path(problem, E: float, n: int = 50, seed: int = 1) -> CheckResult:
    """Expanded regularized Hamiltonian versus its composed physical form."""
    rng = np.random.default_rng(seed)
    err = 0.0
    for k in range(len(problem.components)):
        for q, p in _component_samples(problem, k, rng, n):
            st = reg.to_regularized(problem, k, q, p, E)
            a = reg.regularized_hamiltonian(problem, E, st)
            b = reg.composed_hamiltonian(problem, E, st)
            err = max(err, abs(a - b) / (1.0 + abs(a)))
            # the level is the coupling that puts (q, p) on H_mu = E
            err = max(err, abs(problem.hamiltonian(q, p, a) - E) / (1.0 + abs(E)))
    return _check("regularized Hamiltonian equals composed physical form", err, 1e-12)


def flow_oracle(problem, E: float, mu: float = -1e-4, n: int = 4, seed: int = 2,
                tol: float = 1e-12, miss: tuple = (0.35, 0.9)) -> list:
    """Regularized and physical integration of the same tube transit.

    Transits start on ``|u| = rho`` heading inwards.  The straight-line miss
    distance is drawn from ``miss * rho`` (attraction pulls the true closest
    approach slightly lower, so the lower bound keeps ``|u| >= 0.3 rho``).
    Physical positions at matching physical times are compared along the
    whole transit.
    """
    rng = np.random.default_rng(seed)
    rho = problem.rho
    curve = 0.0
    level = 0.0
    gauge = 0.0
    model = problem.physical_model(mu)
    for k, c in enumerate(problem.components):
        for _ in range(n):
            x = rng.uniform(-0.2, 0.2, c.intrinsic_dim)
            e = rng.normal(size=c.codim)
            e /= np.linalg.norm(e)
            Q = c.normal_frame(x)
            q = c.chart(x) + rho * Q @ e
            t = rng.normal(size=c.codim)
            t -= (t @ e) * e
            t /= np.linalg.norm(t)
            m = rng.uniform(*miss)
            d = Q @ (-np.sqrt(1 - m * m) * e + m * t)
            if c.intrinsic_dim:
                d = d + 0.2 * c.tangent_basis @ rng.normal(size=c.intrinsic_dim)
                d /= np.linalg.norm(d)
            p = problem.gyro(q) + problem.speed(q, E, mu) * d
            st = reg.to_regularized(problem, k, q, p, E)
            try:
                reg.integrate_regularized(problem, E, st, 200.0, tol)
                raise DegbillError("regularized transit did not leave the tube")
            except LeftTube as exc:
                tr = exc.trajectory
            level = max(level, tr.meta["level_drift"])
            gauge = max(gauge, tr.meta.get("gauge_drift", 0.0))
            t_end = tr.physical_duration
            ph = run_model(model, np.concatenate([q, p]), 0.0, t_end * 1.01, problem=problem,
                           rtol=tol, atol=tol, energy=E, mu=mu,
                           event=Event("distance", rho, k, 1))
            if ph.status != kernels.ST_EVENT:
                raise DegbillError("physical transit did not leave the tube")
            for row in tr.states[:: max(1, len(tr.states) // 40)]:
                tq, _ = reg.physical_from_regularized(problem, k, row[:tr.ns])
                tphys = row[tr.ns + 1] - tr.states[0, tr.ns + 1]
                qp = ph.state_at(tphys)[:problem.dim]
                curve = max(curve, float(np.linalg.norm(tq - qp)))
            qe, _ = reg.physical_from_regularized(problem, k, tr.last)
            curve = max(curve, float(np.linalg.norm(qe - ph.last[:problem.dim])))
    out = [_check("regularized and physical transits coincide", curve, 1e-6),
           _check("regularized level drift", level, 1e-9)]
    if any(c.codim == 3 for c in problem.components):
        out.append(_check("KS gauge drift", gauge, 1e-10))
    return out


def eigenvalue_checks(problem, E: float, n: int = 3, seed: int = 3) -> list:
    """Spectrum at ``(z, 0, 0)``: ``+-lambda`` with the right multiplicity plus zeros."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    zeros_ok = True
    for k, c in enumerate(problem.components):
        dp = 2 if c.codim == 2 else 4
        for _ in range(n if c.intrinsic_dim else 1):
            x = rng.uniform(-0.3, 0.3, c.intrinsic_dim)
            y = rng.uniform(-0.3, 0.3, c.intrinsic_dim)
            z = np.concatenate([x, y])
            try:
                lam = reg.lambda_of(problem, k, z, E)
            except DegbillError:
                continue
            ev = reg.linearization_spectrum(problem, k, z, E)
            evs = np.sort(ev.real)
            want = np.concatenate([-lam * np.ones(dp), np.zeros(2 * c.intrinsic_dim),
                                   lam * np.ones(dp)])
            worst = max(worst, float(np.max(np.abs(evs - want))),
                        float(np.max(np.abs(ev.imag))))
            zeros_ok &= int(np.sum(np.abs(ev) < 1e-6)) == 2 * c.intrinsic_dim
    return [_check("linearization eigenvalues +-lambda", worst, 1e-6),
            CheckResult("zero eigenvalue count", 0.0, 0.0, bool(zeros_ok))]


def frame_checks(problem) -> list:
    """Orthonormality of the normal frames and their orthogonality to the scatterer."""
    gram = 0.0
    ortho = 0.0
    for c in problem.components:
        Q = c.normal_frame()
        gram = max(gram, float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1])))))
        if c.intrinsic_dim:
            ortho = max(ortho, float(np.max(np.abs(c.tangent_basis.T @ Q))))
    return [_check("normal frame orthonormal", gram, 1e-12),
            _check("normal frame orthogonal to scatterer", ortho, 1e-12)]


def _guarded(name, fn, *args):
    # a crashing oracle is a failed check, not an abort
    try:
        res = fn(*args)
    except (DegbillError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return [CheckResult(name, float("nan"), 0.0, False, f"{type(exc).__name__}: {exc}")]
    return res if isinstance(res, list) else [res]


def regularization_checks(problem, E: float | None = None, mu: float = -1e-4) -> list:
    """Frame, Hurwitz-matrix, equivariance, dual-path, flow-oracle and eigenvalue checks.

    The oracles assume orthonormal frames, so they are skipped when the
    frame checks fail.
    """
    E = problem.energy if E is None else E
    out = frame_checks(problem)
    if not all(c.passed for c in out):
        return out
    out += gamma_identities(2000)
    out += _guarded("regularized Hamiltonian fibre-equivariant", hamiltonian_equivariance,
                    problem, E, 2000)
    out += _guarded("dual-path regularized Hamiltonian", hamiltonian_dual_path, problem, E)
    out += _guarded("regularized and physical transits coincide", flow_oracle, problem, E, mu)
    out += _guarded("linearization eigenvalues +-lambda", eigenvalue_checks, problem, E)
    return out

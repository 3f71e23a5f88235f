"""Pure numpy implementation of the integration kernels.

Mirrors the compiled extension ``_kernels`` one to one and is used when the
extension is unavailable (or forced with ``DEGBILL_PURE=1``).  Both expose a
``Model`` class holding a Hamiltonian (physical or regularized) together with
an embedded Runge-Kutta integrator with event location and optional
variational equations.

State layout
------------
physical:    s = (q, p), length 2m
regularized: s = (x, y, xi, eta), length 2n + 2d'

The integration vector is ``[s, action, time, Phi.ravel()]`` where the
state-transition block is present only when requested.
"""

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop
from scipy.integrate._ivp.rk import RK45 as _RK45

PHYS, REG = 0, 1
EV_NONE, EV_DIST, EV_XI = 0, 1, 2
ST_DONE, ST_EVENT, ST_GUARD = 0, 1, 2
ST_UNDERFLOW, ST_MAXSTEPS, ST_NONFINITE = -1, -2, -3
METHOD_DOP853, METHOD_RK45 = 8, 5

BACKEND = "python"

_CS_H = 1e-30

_G_LC = np.array([[[1.0, 0.0], [0.0, 1.0]],
                  [[0.0, -1.0], [1.0, 0.0]]])
_G_KS = np.array([
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
    [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1]],
    [[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0]],
    [[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0]],
], dtype=float)


def _tableau(method):
    if method == METHOD_DOP853:
        ns = _dop.N_STAGES
        return dict(n=ns, A=_dop.A[:ns, :ns], B=_dop.B, C=_dop.C[:ns],
                    E3=_dop.E3, E5=_dop.E5, order=7)
    return dict(n=_RK45.n_stages, A=_RK45.A, B=_RK45.B, C=_RK45.C,
                E=_RK45.E, order=4)


class Model:
    """Hamiltonian vector field plus integrator.

    Parameters
    ----------
    kind : int
        ``PHYS`` or ``REG``.
    m : int
        Ambient dimension.
    omega : (m, m) array
        Skew matrix of the gyroscopic term, ``w(q) = omega @ q``.
    kappa : float
        Strength of the Kepler term ``-kappa/|q|`` in the smooth potential.
    cf : float
        Coefficient of the centrifugal term ``-cf/2 |omega q|^2``.
    ctype, cpos, cdir, calpha : arrays
        Scatterer components: type (0 point, 1 line), base point, unit
        direction (lines only) and singular strength.
    energy, mu : float
        Energy level and singular coupling.
    active : int
        Component regularized by a ``REG`` model (ignored for ``PHYS``).
    c0, P, Q : arrays
        Affine tube chart ``q = c0 + P x + Q u`` of the active component.
    gauge : array, optional
        Constant momentum shift of the regularized chart: the regularized
        momenta are those of ``p - gauge``, so the gyroscopic covector becomes
        ``omega @ q - gauge``.
    """

    def __init__(self, kind, m, omega, kappa, cf, ctype, cpos, cdir, calpha,
                 energy, mu, active=-1, c0=None, P=None, Q=None, gauge=None):
        self.kind = int(kind)
        self.m = int(m)
        self.omega = np.ascontiguousarray(omega, dtype=float).reshape(m, m)
        self.oto = self.omega.T @ self.omega
        self.kappa = float(kappa)
        self.cf = float(cf)
        self.ctype = np.asarray(ctype, dtype=np.int32)
        self.cpos = np.asarray(cpos, dtype=float).reshape(-1, m)
        self.cdir = np.asarray(cdir, dtype=float).reshape(-1, m)
        self.calpha = np.asarray(calpha, dtype=float)
        self.energy = float(energy)
        self.mu = float(mu)
        self.active = int(active)
        if self.kind == REG:
            self.c0 = np.asarray(c0, dtype=float)
            self.P = np.asarray(P, dtype=float).reshape(m, -1)
            self.Q = np.asarray(Q, dtype=float).reshape(m, -1)
            self.gauge = np.zeros(m) if gauge is None else np.asarray(gauge, dtype=float)
            self.n = self.P.shape[1]
            self.d = self.Q.shape[1]
            self.dp = 2 if self.d == 2 else 4
            self.G = _G_LC if self.dp == 2 else _G_KS
            self.alpha_k = self.calpha[self.active]
            self.ns = 2 * self.n + 2 * self.dp
        else:
            self.n = self.d = self.dp = 0
            self.ns = 2 * self.m

    # ------------------------------------------------------------------
    # Hamiltonians and gradients (batched, complex-step safe)
    # ------------------------------------------------------------------
    def _smooth(self, q):
        W = np.zeros(q.shape[0], dtype=q.dtype)
        gW = np.zeros_like(q)
        if self.kappa != 0.0:
            r = np.sqrt(np.sum(q * q, axis=1))
            W = W - self.kappa / r
            gW = gW + self.kappa * q / (r ** 3)[:, None]
        if self.cf != 0.0:
            oq = q @ self.omega.T
            W = W - 0.5 * self.cf * np.sum(oq * oq, axis=1)
            gW = gW - self.cf * (q @ self.oto)
        return W, gW

    def _singular(self, q, skip):
        U = np.zeros(q.shape[0], dtype=q.dtype)
        gU = np.zeros_like(q)
        for i in range(self.ctype.shape[0]):
            if i == skip:
                continue
            r = q - self.cpos[i]
            if self.ctype[i] == 1:
                r = r - (r @ self.cdir[i])[:, None] * self.cdir[i]
            dist = np.sqrt(np.sum(r * r, axis=1))
            U = U + self.calpha[i] / dist
            gU = gU - self.calpha[i] * r / (dist ** 3)[:, None]
        return U, gU

    def _phys(self, s):
        m = self.m
        q, p = s[:, :m], s[:, m:]
        pi = p - q @ self.omega.T
        W, gW = self._smooth(q)
        if self.mu != 0.0:
            U, gU = self._singular(q, -1)
        else:  # stays finite on the scatterer itself
            U, gU = np.zeros(q.shape[0], dtype=q.dtype), np.zeros_like(q)
        H = 0.5 * np.sum(pi * pi, axis=1) + W - self.mu * U
        gq = pi @ self.omega.T + gW - self.mu * gU
        return H, np.concatenate([gq, pi], axis=1)

    def _reg(self, s):
        n, dp = self.n, self.dp
        x = s[:, :n]
        y = s[:, n:2 * n]
        xi = s[:, 2 * n:2 * n + dp]
        eta = s[:, 2 * n + dp:]
        gam = np.einsum('bl,lij->bij', xi, self.G)
        u = 0.5 * np.einsum('bij,bj->bi', gam, xi)
        q = self.c0 + x @ self.P.T + u @ self.Q.T
        oq = q @ self.omega.T - self.gauge
        pit = y - oq @ self.P
        beta = oq @ self.Q
        pin = eta - np.einsum('bij,bi->bj', gam, beta)
        s2 = np.sum(xi * xi, axis=1)
        W, gW = self._smooth(q)
        U, gU = self._singular(q, self.active)
        lev = 0.5 * np.sum(pit * pit, axis=1) + W - self.energy
        N = lev * s2 + 0.5 * np.sum(pin * pin, axis=1)
        phi = self.alpha_k + 0.5 * s2 * U
        H = N / (2.0 * phi)
        gpin = np.einsum('bij,bj->bi', gam, pin) @ self.Q.T
        dNdq = s2[:, None] * ((pit @ self.P.T) @ self.omega.T + gW) \
            + gpin @ self.omega.T
        dphidq = 0.5 * s2[:, None] * gU
        qg = np.einsum('mi,bij->bmj', self.Q, gam)
        dNdx = dNdq @ self.P
        dphidx = dphidq @ self.P
        dNdxi = np.einsum('bm,bmj->bj', dNdq, qg) + 2.0 * lev[:, None] * xi \
            - np.einsum('bi,lij,bj->bl', beta, self.G, pin)
        dphidxi = np.einsum('bm,bmj->bj', dphidq, qg) + U[:, None] * xi
        inv = (1.0 / (2.0 * phi))[:, None]
        h2 = 2.0 * H[:, None]
        g = np.concatenate([(dNdx - h2 * dphidx) * inv,
                            s2[:, None] * pit * inv,
                            (dNdxi - h2 * dphidxi) * inv,
                            pin * inv], axis=1)
        return H, g, s2, phi

    def _eval(self, s):
        if self.kind == PHYS:
            return self._phys(s)
        H, g, _, _ = self._reg(s)
        return H, g

    def _to_field(self, g):
        """Map a gradient (batched) to the Hamiltonian vector field."""
        if self.kind == PHYS:
            m = self.m
            return np.concatenate([g[:, m:], -g[:, :m]], axis=1)
        n, dp = self.n, self.dp
        return np.concatenate([g[:, n:2 * n], -g[:, :n],
                               g[:, 2 * n + dp:], -g[:, 2 * n:2 * n + dp]],
                              axis=1)

    # public single-state evaluators
    def hamiltonian(self, s):
        return float(self._eval(np.asarray(s, dtype=float)[None, :])[0][0])

    def gradient(self, s):
        return self._eval(np.asarray(s, dtype=float)[None, :])[1][0].copy()

    def field(self, s):
        g = self._eval(np.asarray(s, dtype=float)[None, :])[1]
        return self._to_field(g)[0]

    def hessian(self, s):
        s = np.asarray(s, dtype=float)
        ns = self.ns
        S = s[None, :] + 1j * _CS_H * np.eye(ns)
        g = self._eval(S)[1]
        hs = g.imag / _CS_H
        return 0.5 * (hs + hs.T)

    def jacobian(self, s):
        s = np.asarray(s, dtype=float)
        S = s[None, :] + 1j * _CS_H * np.eye(self.ns)
        g = self._eval(S)[1].imag / _CS_H
        return self._to_field(g).T

    def aux_rates(self, s):
        s = np.asarray(s, dtype=float)
        return self._aux(s[None, :], self._eval(s[None, :])[1])[0]

    def _aux(self, s, g):
        if self.kind == PHYS:
            m = self.m
            dJ = np.sum(s[:, m:] * g[:, m:], axis=1)
            dt = np.ones(s.shape[0])
        else:
            n, dp = self.n, self.dp
            dJ = np.sum(s[:, n:2 * n] * g[:, n:2 * n], axis=1) \
                + np.sum(s[:, 2 * n + dp:] * g[:, 2 * n + dp:], axis=1)
            xi = s[:, 2 * n:2 * n + dp]
            s2 = np.sum(xi * xi, axis=1)
            x = s[:, :n]
            gam = np.einsum('bl,lij->bij', xi, self.G)
            u = 0.5 * np.einsum('bij,bj->bi', gam, xi)
            q = self.c0 + x @ self.P.T + u @ self.Q.T
            U, _ = self._singular(q, self.active)
            dt = s2 / (2.0 * (self.alpha_k + 0.5 * s2 * U))
        return np.stack([dJ, dt], axis=1)

    # ------------------------------------------------------------------
    # events
    # ------------------------------------------------------------------
    def event_value(self, s, kind, index, level):
        s = np.asarray(s, dtype=float)
        if kind == EV_DIST:
            q = s[:self.m]
            if index >= 0:
                return self._dist(q, index) - level
            return min(self._dist(q, i) for i in range(self.ctype.shape[0])) - level
        if kind == EV_XI:
            xi = s[2 * self.n:2 * self.n + self.dp]
            return float(xi @ xi) - level
        return 1.0

    def _dist(self, q, i):
        r = q - self.cpos[i]
        if self.ctype[i] == 1:
            r = r - (r @ self.cdir[i]) * self.cdir[i]
        return float(np.sqrt(r @ r))

    # ------------------------------------------------------------------
    # integration
    # ------------------------------------------------------------------
    def rhs(self, y, stm):
        ns = self.ns
        s = y[:ns]
        if stm:
            S = np.empty((ns + 1, ns), dtype=complex)
            S[0] = s
            S[1:] = s[None, :] + 1j * _CS_H * np.eye(ns)
            g = self._eval(S)[1]
            g0 = g[:1].real
            jac = self._to_field(g[1:].imag / _CS_H).T
            phi = y[ns + 2:].reshape(ns, ns)
            dphi = (jac @ phi).ravel()
        else:
            g0 = self._eval(s[None, :])[1]
            dphi = np.empty(0)
        f = self._to_field(g0)[0]
        aux = self._aux(s[None, :], g0)[0]
        return np.concatenate([f, aux, dphi])

    def _step(self, tab, y, f0, h, stm):
        ns_ = tab['n']
        A, B = tab['A'], tab['B']
        K = np.empty((ns_ + 1, y.shape[0]))
        K[0] = f0
        for i in range(1, ns_):
            K[i] = self.rhs(y + h * (K[:i].T @ A[i, :i]), stm)
        ynew = y + h * (K[:ns_].T @ B)
        fnew = self.rhs(ynew, stm)
        K[ns_] = fnew
        return ynew, fnew, K

    @staticmethod
    def _err(tab, K, h, y, ynew, rtol, atol):
        scale = atol + np.maximum(np.abs(y), np.abs(ynew)) * rtol
        if 'E5' in tab:
            e5 = (K.T @ tab['E5']) / scale
            e3 = (K.T @ tab['E3']) / scale
            n5 = float(e5 @ e5)
            n3 = float(e3 @ e3)
            if n5 == 0.0 and n3 == 0.0:
                return 0.0
            return abs(h) * n5 / np.sqrt((n5 + 0.01 * n3) * y.shape[0])
        e = (K.T @ tab['E']) * h / scale
        return float(np.sqrt(e @ e / y.shape[0]))

    def step(self, y, h, stm=False, method=METHOD_DOP853):
        """Single Runge-Kutta step of size ``h`` from the integration vector ``y``."""
        y = np.asarray(y, dtype=float)
        tab = _tableau(method)
        return self._step(tab, y, self.rhs(y, stm), h, stm)[0]

    def _events(self, y, ev, guard):
        s = y[:self.ns]
        ge = self.event_value(s, ev[0], ev[1], ev[2]) if ev[0] != EV_NONE else 1.0
        gg = self.event_value(s, EV_DIST, -1, guard) if guard > 0.0 else 1.0
        return ge, gg

    @staticmethod
    def _crossed(g0, g1, direction):
        if direction > 0:
            return g0 < 0.0 <= g1
        if direction < 0:
            return g0 > 0.0 >= g1
        return (g0 < 0.0 <= g1) or (g0 > 0.0 >= g1)

    def _locate(self, tab, y, f0, h, g_at, g0, g1, stm, tol):
        """Illinois root search for the step size at which g crosses zero."""
        a, b = 0.0, h
        fa, fb = g0, g1
        side = 0
        yb = None
        for _ in range(100):
            c = (a * fb - b * fa) / (fb - fa)
            yc = self._step(tab, y, f0, c, stm)[0]
            fc = g_at(yc)
            if abs(fc) <= tol or abs(b - a) <= 1e-15 * max(1.0, abs(h)):
                return c, yc
            if (fc > 0.0) == (fb > 0.0):
                b, fb = c, fc
                yb = yc
                if side == -1:
                    fa *= 0.5
                side = -1
            else:
                a, fa = c, fc
                if side == 1:
                    fb *= 0.5
                side = 1
        return b, (yb if yb is not None else self._step(tab, y, f0, b, stm)[0])

    def integrate(self, y0, t0, t1, rtol=1e-12, atol=1e-12, stm=False,
                  ev_kind=EV_NONE, ev_index=-1, ev_level=0.0, ev_dir=0,
                  guard=0.0, max_steps=200000, h_init=0.0, h_max=0.0,
                  method=METHOD_DOP853, ev_tol=1e-13):
        """Integrate from ``t0`` to ``t1`` (either direction).

        Returns
        -------
        ts : (k,) array
        states : (k, ns + 2) array
            Accepted step states (phase state, action, time).
        yfinal : array
            Full final integration vector (including the STM block).
        status : int
        """
        tab = _tableau(method)
        y = np.array(y0, dtype=float)
        ns = self.ns
        t = float(t0)
        direction = 1.0 if t1 >= t0 else -1.0
        span = abs(t1 - t0)
        ts = [t]
        states = [y[:ns + 2].copy()]
        if span == 0.0:
            return np.array(ts), np.array(states), y, ST_DONE
        ev = (ev_kind, ev_index, ev_level)
        f = self.rhs(y, stm)
        ge, gg = self._events(y, ev, guard)
        hmax = h_max if h_max > 0.0 else np.inf
        if h_init > 0.0:
            h = min(h_init, span, hmax)
        else:
            h = min(self._initial_step(tab, y, f, direction, rtol, atol, stm),
                    span, hmax)
        expo = -1.0 / (tab['order'] + 1.0)
        rejected = False
        status = ST_MAXSTEPS
        for _ in range(max_steps):
            remaining = abs(t1 - t)
            if h >= remaining:
                h = remaining
            hs = direction * h
            ynew, fnew, K = self._step(tab, y, f, hs, stm)
            if not np.all(np.isfinite(ynew)):
                err = np.inf
            else:
                err = self._err(tab, K, hs, y, ynew, rtol, atol)
            if err < 1.0:
                fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** expo)
                if rejected:
                    fac = min(1.0, fac)
                rejected = False
                ge1, gg1 = self._events(ynew, ev, guard)
                hit_e = ev_kind != EV_NONE and self._crossed(ge, ge1, ev_dir)
                hit_g = guard > 0.0 and self._crossed(gg, gg1, -1)
                if hit_e or hit_g:
                    best = None
                    if hit_e:
                        he, ye = self._locate(
                            tab, y, f, hs,
                            lambda yy: self.event_value(yy[:ns], *ev),
                            ge, ge1, stm, ev_tol)
                        best = (abs(he), he, ye, ST_EVENT)
                    if hit_g:
                        hg, yg = self._locate(
                            tab, y, f, hs,
                            lambda yy: self.event_value(yy[:ns], EV_DIST, -1, guard),
                            gg, gg1, stm, ev_tol)
                        if best is None or abs(hg) < best[0]:
                            best = (abs(hg), hg, yg, ST_GUARD)
                    t = t + best[1]
                    y = best[2]
                    ts.append(t)
                    states.append(y[:ns + 2].copy())
                    status = best[3]
                    break
                t = t + hs
                if abs(t1 - t) <= 1e-14 * max(1.0, abs(t1)) or h == remaining:
                    t = t1
                y, f = ynew, fnew
                ge, gg = ge1, gg1
                ts.append(t)
                states.append(y[:ns + 2].copy())
                if t == t1:
                    status = ST_DONE
                    break
                h = min(h * fac, hmax)
            else:
                if not np.isfinite(err):
                    fac = 0.2
                else:
                    fac = max(0.2, 0.9 * err ** expo)
                h *= fac
                rejected = True
                if h < 10.0 * np.finfo(float).eps * max(1.0, abs(t)):
                    status = ST_UNDERFLOW
                    break
        return np.array(ts), np.array(states), y, status

    def _initial_step(self, tab, y, f0, direction, rtol, atol, stm):
        scale = atol + np.abs(y) * rtol
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f0 / scale) ** 2))
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        y1 = y + h0 * direction * f0
        f1 = self.rhs(y1, stm)
        d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / (tab['order'] + 1.0))
        return min(100.0 * h0, h1)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernels.

Same API and state layout as the numpy fallback ``_pykernels``.  Gradients are
written once over a fused real/complex type so that the variational equations
are obtained by complex-step differentiation of the analytic gradient.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

from scipy.integrate._ivp import dop853_coefficients as _dop
from scipy.integrate._ivp.rk import RK45 as _RK45

cnp.import_array()

PHYS, REG = 0, 1
EV_NONE, EV_DIST, EV_XI = 0, 1, 2
ST_DONE, ST_EVENT, ST_GUARD = 0, 1, 2
ST_UNDERFLOW, ST_MAXSTEPS, ST_NONFINITE = -1, -2, -3
METHOD_DOP853, METHOD_RK45 = 8, 5

BACKEND = "compiled"

DEF MAXM = 3
DEF MAXS = 12
DEF CS_H = 1e-30

ctypedef fused num:
    double
    double complex

cdef struct Params:
    int kind, m, ncomp, active, n, d, dp, ns
    double E, mu, kappa, cf, alpha_k
    double Om[9]
    double OtO[9]
    double c0[3]
    double gauge[3]
    double P[3]
    double Q[9]
    int* ctype
    double* cpos
    double* cdir
    double* calpha

# Hurwitz basis matrices: Gamma(xi) = sum_l xi_l G[l]
cdef double GLC[2][2][4]
cdef double GKS[4][3][4]

cdef double DA[16][16]
cdef double DB[16]
cdef double DE3[16]
cdef double DE5[16]
cdef double RA[7][7]
cdef double RB[7]
cdef double RE[7]


def _load_tables():
    cdef int i, j, l
    glc = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, -1.0], [1.0, 0.0]]])
    gks = np.array([
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
        [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1]],
        [[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0]],
        [[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0]],
    ], dtype=float)
    for l in range(2):
        for i in range(2):
            for j in range(2):
                GLC[l][i][j] = glc[l, i, j]
    for l in range(4):
        for i in range(3):
            for j in range(4):
                GKS[l][i][j] = gks[l, i, j]
    A = np.asarray(_dop.A)
    for i in range(16):
        for j in range(16):
            DA[i][j] = A[i, j] if (i < A.shape[0] and j < A.shape[1]) else 0.0
    for i in range(16):
        DB[i] = _dop.B[i] if i < _dop.B.shape[0] else 0.0
        DE3[i] = _dop.E3[i] if i < _dop.E3.shape[0] else 0.0
        DE5[i] = _dop.E5[i] if i < _dop.E5.shape[0] else 0.0
    A = np.asarray(_RK45.A)
    for i in range(7):
        for j in range(7):
            RA[i][j] = A[i, j] if (i < A.shape[0] and j < A.shape[1]) else 0.0
        RB[i] = _RK45.B[i] if i < _RK45.B.shape[0] else 0.0
        RE[i] = _RK45.E[i] if i < _RK45.E.shape[0] else 0.0


_load_tables()


cdef inline num nsqrt(num z) nogil:
    cdef double r
    if num is double:
        return sqrt(z)
    else:
        # first-order exact for complex-step perturbations
        r = sqrt(z.real)
        return r + 1j * (z.imag / (2.0 * r))


cdef inline double gval(Params* P, int l, int i, int j) nogil:
    if P.dp == 2:
        return GLC[l][i][j]
    return GKS[l][i][j]


cdef void smooth_part(Params* P, num* q, num* W, num* gW) nogil:
    cdef int i, j, m = P.m
    cdef num r2, r, oq, acc
    W[0] = 0.0
    for i in range(m):
        gW[i] = 0.0
    if P.kappa != 0.0:
        r2 = 0.0
        for i in range(m):
            r2 = r2 + q[i] * q[i]
        r = nsqrt(r2)
        W[0] = W[0] - P.kappa / r
        for i in range(m):
            gW[i] = gW[i] + P.kappa * q[i] / (r * r2)
    if P.cf != 0.0:
        for i in range(m):
            oq = 0.0
            acc = 0.0
            for j in range(m):
                oq = oq + P.Om[i * m + j] * q[j]
                acc = acc + P.OtO[i * m + j] * q[j]
            W[0] = W[0] - 0.5 * P.cf * oq * oq
            gW[i] = gW[i] - P.cf * acc


cdef void singular_part(Params* P, num* q, int skip, num* U, num* gU) nogil:
    cdef int i, k, m = P.m
    cdef num r[MAXM]
    cdef num dot, d2, dist, d3
    U[0] = 0.0
    for i in range(m):
        gU[i] = 0.0
    for k in range(P.ncomp):
        if k == skip:
            continue
        for i in range(m):
            r[i] = q[i] - P.cpos[k * m + i]
        if P.ctype[k] == 1:
            dot = 0.0
            for i in range(m):
                dot = dot + r[i] * P.cdir[k * m + i]
            for i in range(m):
                r[i] = r[i] - dot * P.cdir[k * m + i]
        d2 = 0.0
        for i in range(m):
            d2 = d2 + r[i] * r[i]
        dist = nsqrt(d2)
        d3 = dist * d2
        U[0] = U[0] + P.calpha[k] / dist
        for i in range(m):
            gU[i] = gU[i] - P.calpha[k] * r[i] / d3


cdef num phys_eval(Params* P, num* s, num* g) nogil:
    cdef int i, j, m = P.m
    cdef num pi[MAXM]
    cdef num gW[MAXM]
    cdef num gU[MAXM]
    cdef num W, U, H, acc
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc = acc + P.Om[i * m + j] * s[j]
        pi[i] = s[m + i] - acc
    smooth_part(P, s, &W, gW)
    # mu = 0 must stay finite on the scatterer itself
    if P.mu != 0.0:
        singular_part(P, s, -1, &U, gU)
    else:
        U = 0.0
        for i in range(m):
            gU[i] = 0.0
    H = W - P.mu * U
    for i in range(m):
        H = H + 0.5 * pi[i] * pi[i]
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc = acc + P.Om[i * m + j] * pi[j]
        g[i] = acc + gW[i] - P.mu * gU[i]
        g[m + i] = pi[i]
    return H


cdef num reg_eval(Params* P, num* s, num* g, num* s2out, num* phiout) nogil:
    cdef int a, b, i, j, k, l
    cdef int m = P.m, n = P.n, d = P.d, dp = P.dp
    cdef num gam[3][4]
    cdef num qg[MAXM][4]
    cdef num u[3]
    cdef num q[MAXM]
    cdef num oq[MAXM]
    cdef num pit[1]
    cdef num beta[3]
    cdef num pin[4]
    cdef num gW[MAXM]
    cdef num gU[MAXM]
    cdef num v1[MAXM]
    cdef num gp[MAXM]
    cdef num dNdq[MAXM]
    cdef num dphidq[MAXM]
    cdef num W, U, s2, lev, N, phi, H, acc, inv, h2, dNx, dpx
    cdef num* x = s
    cdef num* y = s + n
    cdef num* xi = s + 2 * n
    cdef num* eta = s + 2 * n + dp
    for i in range(d):
        for j in range(dp):
            acc = 0.0
            for l in range(dp):
                acc = acc + xi[l] * gval(P, l, i, j)
            gam[i][j] = acc
    for i in range(d):
        acc = 0.0
        for j in range(dp):
            acc = acc + gam[i][j] * xi[j]
        u[i] = 0.5 * acc
    for a in range(m):
        acc = P.c0[a]
        for k in range(n):
            acc = acc + P.P[a * n + k] * x[k]
        for i in range(d):
            acc = acc + P.Q[a * d + i] * u[i]
        q[a] = acc
    for a in range(m):
        acc = 0.0
        for b in range(m):
            acc = acc + P.Om[a * m + b] * q[b]
        oq[a] = acc - P.gauge[a]
    for k in range(n):
        acc = 0.0
        for a in range(m):
            acc = acc + oq[a] * P.P[a * n + k]
        pit[k] = y[k] - acc
    for i in range(d):
        acc = 0.0
        for a in range(m):
            acc = acc + oq[a] * P.Q[a * d + i]
        beta[i] = acc
    for j in range(dp):
        acc = 0.0
        for i in range(d):
            acc = acc + gam[i][j] * beta[i]
        pin[j] = eta[j] - acc
    s2 = 0.0
    for l in range(dp):
        s2 = s2 + xi[l] * xi[l]
    smooth_part(P, q, &W, gW)
    singular_part(P, q, P.active, &U, gU)
    lev = W - P.E
    for k in range(n):
        lev = lev + 0.5 * pit[k] * pit[k]
    N = lev * s2
    for j in range(dp):
        N = N + 0.5 * pin[j] * pin[j]
    phi = P.alpha_k + 0.5 * s2 * U
    H = N / (2.0 * phi)
    s2out[0] = s2
    phiout[0] = phi
    if g == NULL:
        return H
    for a in range(m):
        acc = 0.0
        for k in range(n):
            acc = acc + P.P[a * n + k] * pit[k]
        v1[a] = acc
        acc = 0.0
        for i in range(d):
            for j in range(dp):
                acc = acc + P.Q[a * d + i] * gam[i][j] * pin[j]
        gp[a] = acc
    for a in range(m):
        acc = 0.0
        for b in range(m):
            acc = acc + P.Om[a * m + b] * (s2 * v1[b] + gp[b])
        dNdq[a] = acc + s2 * gW[a]
        dphidq[a] = 0.5 * s2 * gU[a]
    for a in range(m):
        for j in range(dp):
            acc = 0.0
            for i in range(d):
                acc = acc + P.Q[a * d + i] * gam[i][j]
            qg[a][j] = acc
    inv = 1.0 / (2.0 * phi)
    h2 = 2.0 * H
    for k in range(n):
        dNx = 0.0
        dpx = 0.0
        for a in range(m):
            dNx = dNx + dNdq[a] * P.P[a * n + k]
            dpx = dpx + dphidq[a] * P.P[a * n + k]
        g[k] = (dNx - h2 * dpx) * inv
        g[n + k] = s2 * pit[k] * inv
    for l in range(dp):
        dNx = 2.0 * lev * xi[l]
        dpx = U * xi[l]
        for a in range(m):
            dNx = dNx + dNdq[a] * qg[a][l]
            dpx = dpx + dphidq[a] * qg[a][l]
        for i in range(d):
            for j in range(dp):
                dNx = dNx - beta[i] * gval(P, l, i, j) * pin[j]
        g[2 * n + l] = (dNx - h2 * dpx) * inv
        g[2 * n + dp + l] = pin[l] * inv
    return H


cdef inline num eval_h(Params* P, num* s, num* g) nogil:
    cdef num s2, phi
    if P.kind == 0:
        return phys_eval(P, s, g)
    return reg_eval(P, s, g, &s2, &phi)


cdef void to_field(Params* P, double* g, double* f) nogil:
    cdef int i, n, dp, m
    if P.kind == 0:
        m = P.m
        for i in range(m):
            f[i] = g[m + i]
            f[m + i] = -g[i]
    else:
        n = P.n
        dp = P.dp
        for i in range(n):
            f[i] = g[n + i]
            f[n + i] = -g[i]
        for i in range(dp):
            f[2 * n + i] = g[2 * n + dp + i]
            f[2 * n + dp + i] = -g[2 * n + i]


cdef void rhs(Params* P, double* y, double* f, bint stm) nogil:
    cdef int ns = P.ns, i, j
    cdef double g[MAXS]
    cdef double hv[MAXS]
    cdef double fv[MAXS]
    cdef double complex sc[MAXS]
    cdef double complex gc[MAXS]
    cdef double s2, phi, dJ
    cdef double* Phi
    cdef double* dPhi
    if P.kind == 0:
        phys_eval(P, y, g)
        to_field(P, g, f)
        dJ = 0.0
        for i in range(P.m):
            dJ += y[P.m + i] * g[P.m + i]
        f[ns] = dJ
        f[ns + 1] = 1.0
    else:
        reg_eval(P, y, g, &s2, &phi)
        to_field(P, g, f)
        dJ = 0.0
        for i in range(P.n):
            dJ += y[P.n + i] * g[P.n + i]
        for i in range(P.dp):
            dJ += y[2 * P.n + P.dp + i] * g[2 * P.n + P.dp + i]
        f[ns] = dJ
        f[ns + 1] = s2 / (2.0 * phi)
    if not stm:
        return
    Phi = y + ns + 2
    dPhi = f + ns + 2
    for j in range(ns):
        for i in range(ns):
            sc[i] = y[i] + 1j * (CS_H * Phi[i * ns + j])
        eval_h(P, sc, gc)
        for i in range(ns):
            hv[i] = gc[i].imag / CS_H
        to_field(P, hv, fv)
        for i in range(ns):
            dPhi[i * ns + j] = fv[i]


cdef class _Work:
    cdef double* K
    cdef double* ytmp
    cdef double* ynew
    cdef double* fnew
    cdef double* ytry
    cdef int N

    def __cinit__(self, int N):
        self.N = N
        self.K = <double*> malloc(17 * N * sizeof(double))
        self.ytmp = <double*> malloc(N * sizeof(double))
        self.ynew = <double*> malloc(N * sizeof(double))
        self.fnew = <double*> malloc(N * sizeof(double))
        self.ytry = <double*> malloc(N * sizeof(double))

    def __dealloc__(self):
        free(self.K)
        free(self.ytmp)
        free(self.ynew)
        free(self.fnew)
        free(self.ytry)


cdef void rk_step(Params* P, int method, double* y, double* f0, double h,
                  double* ynew, double* K, double* ytmp, int N, bint stm) nogil:
    """One step; K receives all stages including f(ynew) in the last row."""
    cdef int nst, i, j, c
    cdef double acc
    nst = 12 if method == 8 else 6
    memcpy(K, f0, N * sizeof(double))
    for i in range(1, nst):
        for c in range(N):
            acc = 0.0
            for j in range(i):
                if method == 8:
                    acc += DA[i][j] * K[j * N + c]
                else:
                    acc += RA[i][j] * K[j * N + c]
            ytmp[c] = y[c] + h * acc
        rhs(P, ytmp, K + i * N, stm)
    for c in range(N):
        acc = 0.0
        for j in range(nst):
            if method == 8:
                acc += DB[j] * K[j * N + c]
            else:
                acc += RB[j] * K[j * N + c]
        ynew[c] = y[c] + h * acc
    rhs(P, ynew, K + nst * N, stm)


cdef double err_norm(int method, double* K, double h, double* y, double* ynew,
                     int N, double rtol, double atol) nogil:
    cdef int c, j, nst
    cdef double sc, e5, e3, n5 = 0.0, n3 = 0.0, e
    nst = 12 if method == 8 else 6
    for c in range(N):
        if not isfinite(ynew[c]):
            return 1e300
        sc = atol + rtol * (fabs(y[c]) if fabs(y[c]) > fabs(ynew[c]) else fabs(ynew[c]))
        if method == 8:
            e5 = 0.0
            e3 = 0.0
            for j in range(nst + 1):
                e5 += K[j * N + c] * DE5[j]
                e3 += K[j * N + c] * DE3[j]
            e5 /= sc
            e3 /= sc
            n5 += e5 * e5
            n3 += e3 * e3
        else:
            e = 0.0
            for j in range(nst + 1):
                e += K[j * N + c] * RE[j]
            e = e * h / sc
            n5 += e * e
    if method == 8:
        if n5 == 0.0 and n3 == 0.0:
            return 0.0
        return fabs(h) * n5 / sqrt((n5 + 0.01 * n3) * N)
    return sqrt(n5 / N)


cdef double ev_value(Params* P, double* s, int kind, int index, double level) nogil:
    cdef int i, k, m = P.m
    cdef double r[MAXM]
    cdef double dot, dist, best
    if kind == 1:
        best = 1e300
        for k in range(P.ncomp):
            if index >= 0 and k != index:
                continue
            for i in range(m):
                r[i] = s[i] - P.cpos[k * m + i]
            if P.ctype[k] == 1:
                dot = 0.0
                for i in range(m):
                    dot += r[i] * P.cdir[k * m + i]
                for i in range(m):
                    r[i] -= dot * P.cdir[k * m + i]
            dist = 0.0
            for i in range(m):
                dist += r[i] * r[i]
            dist = sqrt(dist)
            if dist < best:
                best = dist
        return best - level
    if kind == 2:
        dist = 0.0
        for i in range(P.dp):
            dist += s[2 * P.n + i] * s[2 * P.n + i]
        return dist - level
    return 1.0


cdef inline bint crossed(double g0, double g1, int direction) nogil:
    if direction > 0:
        return g0 < 0.0 and g1 >= 0.0
    if direction < 0:
        return g0 > 0.0 and g1 <= 0.0
    return (g0 < 0.0 and g1 >= 0.0) or (g0 > 0.0 and g1 <= 0.0)


cdef double locate(Params* P, int method, double* y, double* f0, double h,
                   int kind, int index, double level, double g0, double g1,
                   double* yout, double* K, double* ytmp, int N, bint stm,
                   double tol) nogil:
    """Illinois iteration on the step size; yout receives the located state."""
    cdef double a = 0.0, b = h, fa = g0, fb = g1, c, fc
    cdef int side = 0, it
    cdef bint have = False
    for it in range(100):
        c = (a * fb - b * fa) / (fb - fa)
        rk_step(P, method, y, f0, c, yout, K, ytmp, N, stm)
        fc = ev_value(P, yout, kind, index, level)
        if fabs(fc) <= tol or fabs(b - a) <= 1e-15 * (1.0 if fabs(h) < 1.0 else fabs(h)):
            return c
        if (fc > 0.0) == (fb > 0.0):
            b = c
            fb = fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a = c
            fa = fc
            if side == 1:
                fb *= 0.5
            side = 1
    rk_step(P, method, y, f0, b, yout, K, ytmp, N, stm)
    return b


cdef class Model:
    """Hamiltonian vector field plus integrator (compiled)."""

    cdef Params p
    cdef object _ctype, _cpos, _cdir, _calpha
    cdef public int kind, m, n, d, dp, ns, active
    cdef public double energy, mu, kappa, cf
    cdef public object omega, c0, P, Q, gauge

    def __init__(self, kind, m, omega, kappa, cf, ctype, cpos, cdir, calpha,
                 energy, mu, active=-1, c0=None, P=None, Q=None, gauge=None):
        cdef int i, j
        self.kind = int(kind)
        self.m = int(m)
        om = np.ascontiguousarray(omega, dtype=float).reshape(m, m)
        oto = om.T @ om
        self.omega = om
        self.kappa = float(kappa)
        self.cf = float(cf)
        self.energy = float(energy)
        self.mu = float(mu)
        self.active = int(active)
        self._ctype = np.ascontiguousarray(ctype, dtype=np.int32)
        self._cpos = np.ascontiguousarray(cpos, dtype=float).reshape(-1)
        self._cdir = np.ascontiguousarray(cdir, dtype=float).reshape(-1)
        self._calpha = np.ascontiguousarray(calpha, dtype=float)
        self.p.kind = self.kind
        self.p.m = self.m
        self.p.ncomp = self._ctype.shape[0]
        self.p.active = self.active
        self.p.E = self.energy
        self.p.mu = self.mu
        self.p.kappa = self.kappa
        self.p.cf = self.cf
        for i in range(m):
            for j in range(m):
                self.p.Om[i * m + j] = om[i, j]
                self.p.OtO[i * m + j] = oto[i, j]
        self.p.ctype = <int*> cnp.PyArray_DATA(self._ctype)
        self.p.cpos = <double*> cnp.PyArray_DATA(self._cpos)
        self.p.cdir = <double*> cnp.PyArray_DATA(self._cdir)
        self.p.calpha = <double*> cnp.PyArray_DATA(self._calpha)
        if self.kind == REG:
            c0a = np.asarray(c0, dtype=float)
            Pm = np.asarray(P, dtype=float).reshape(m, -1)
            Qm = np.asarray(Q, dtype=float).reshape(m, -1)
            ga = np.zeros(m) if gauge is None else np.asarray(gauge, dtype=float)
            self.c0, self.P, self.Q, self.gauge = c0a, Pm, Qm, ga
            self.n = Pm.shape[1]
            self.d = Qm.shape[1]
            self.dp = 2 if self.d == 2 else 4
            for i in range(m):
                self.p.c0[i] = c0a[i]
                self.p.gauge[i] = ga[i]
                for j in range(self.n):
                    self.p.P[i * self.n + j] = Pm[i, j]
                for j in range(self.d):
                    self.p.Q[i * self.d + j] = Qm[i, j]
            self.p.alpha_k = self._calpha[self.active]
            self.ns = 2 * self.n + 2 * self.dp
        else:
            self.n = self.d = self.dp = 0
            self.ns = 2 * self.m
        self.p.n = self.n
        self.p.d = self.d
        self.p.dp = self.dp
        self.p.ns = self.ns

    # -- evaluators ------------------------------------------------------
    def hamiltonian(self, s):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=float)
        cdef double g[MAXS]
        return eval_h(&self.p, &sv[0], g)

    def gradient(self, s):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=float)
        out = np.empty(self.ns)
        cdef double[::1] ov = out
        eval_h(&self.p, &sv[0], &ov[0])
        return out

    def field(self, s):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=float)
        cdef double g[MAXS]
        out = np.empty(self.ns)
        cdef double[::1] ov = out
        eval_h(&self.p, &sv[0], g)
        to_field(&self.p, g, &ov[0])
        return out

    def hessian(self, s):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=float)
        cdef int ns = self.ns, i, j
        cdef double complex sc[MAXS]
        cdef double complex gc[MAXS]
        out = np.empty((ns, ns))
        for j in range(ns):
            for i in range(ns):
                sc[i] = sv[i] + (1j * CS_H if i == j else 0.0)
            eval_h(&self.p, sc, gc)
            for i in range(ns):
                out[i, j] = gc[i].imag / CS_H
        return 0.5 * (out + out.T)

    def jacobian(self, s):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=float)
        cdef int ns = self.ns, i, j
        cdef double complex sc[MAXS]
        cdef double complex gc[MAXS]
        cdef double hv[MAXS]
        cdef double fv[MAXS]
        out = np.empty((ns, ns))
        for j in range(ns):
            for i in range(ns):
                sc[i] = sv[i] + (1j * CS_H if i == j else 0.0)
            eval_h(&self.p, sc, gc)
            for i in range(ns):
                hv[i] = gc[i].imag / CS_H
            to_field(&self.p, hv, fv)
            for i in range(ns):
                out[i, j] = fv[i]
        return out

    def rhs(self, y, stm):
        cdef double[::1] yv = np.ascontiguousarray(y, dtype=float)
        out = np.empty(yv.shape[0])
        cdef double[::1] ov = out
        rhs(&self.p, &yv[0], &ov[0], bool(stm))
        return out

    def aux_rates(self, s):
        y = np.zeros(self.ns + 2)
        y[:self.ns] = s
        return self.rhs(y, False)[self.ns:]

    def event_value(self, s, kind, index, level):
        cdef double[::1] sv = np.ascontiguousarray(s, dtype=float)
        return ev_value(&self.p, &sv[0], kind, index, level)

    def step(self, y, h, stm=False, method=METHOD_DOP853):
        """Single Runge-Kutta step of size ``h`` from the integration vector ``y``."""
        cdef double[::1] yv = np.ascontiguousarray(y, dtype=float)
        cdef int N = yv.shape[0]
        cdef _Work w = _Work(N)
        out = np.empty(N)
        cdef double[::1] ov = out
        rhs(&self.p, &yv[0], w.fnew, bool(stm))
        rk_step(&self.p, method, &yv[0], w.fnew, h, &ov[0], w.K, w.ytmp, N, bool(stm))
        return out

    # -- integration -----------------------------------------------------
    def integrate(self, y0, double t0, double t1, double rtol=1e-12,
                  double atol=1e-12, stm=False, int ev_kind=0, int ev_index=-1,
                  double ev_level=0.0, int ev_dir=0, double guard=0.0,
                  int max_steps=200000, double h_init=0.0, double h_max=0.0,
                  int method=8, double ev_tol=1e-13):
        """Integrate from ``t0`` to ``t1``; see the numpy fallback for the contract."""
        cdef cnp.ndarray[double, ndim=1] ya = np.array(y0, dtype=float)
        cdef int N = ya.shape[0], ns = self.ns, c, it, status
        cdef bint bstm = bool(stm)
        cdef _Work w = _Work(N)
        cdef double* y = <double*> cnp.PyArray_DATA(ya)
        cdef cnp.ndarray[double, ndim=1] fa = np.empty(N)
        cdef double* f = <double*> cnp.PyArray_DATA(fa)
        cdef double t = t0, direction, span, h, hs, remaining, err, fac, expo
        cdef double ge, gg, ge1, gg1, he, hg, hmax
        cdef bint rejected = False, hit_e, hit_g
        cdef double* tmp
        cdef double* ye = <double*> malloc(N * sizeof(double))
        cdef double* yg = <double*> malloc(N * sizeof(double))
        cdef int order = 7 if method == 8 else 4
        ts = [t]
        states = [ya[:ns + 2].copy()]
        try:
            direction = 1.0 if t1 >= t0 else -1.0
            span = fabs(t1 - t0)
            if span == 0.0:
                return np.array(ts), np.array(states), ya, ST_DONE
            rhs(&self.p, y, f, bstm)
            ge = ev_value(&self.p, y, ev_kind, ev_index, ev_level) if ev_kind != 0 else 1.0
            gg = ev_value(&self.p, y, 1, -1, guard) if guard > 0.0 else 1.0
            hmax = h_max if h_max > 0.0 else 1e300
            if h_init > 0.0:
                h = h_init
            else:
                h = self._initial_step(ya, fa, direction, rtol, atol, bstm, order)
            h = min(h, span, hmax)
            expo = -1.0 / (order + 1.0)
            status = ST_MAXSTEPS
            for it in range(max_steps):
                remaining = fabs(t1 - t)
                if h >= remaining:
                    h = remaining
                hs = direction * h
                rk_step(&self.p, method, y, f, hs, w.ynew, w.K, w.ytmp, N, bstm)
                err = err_norm(method, w.K, hs, y, w.ynew, N, rtol, atol)
                if err < 1.0:
                    if err == 0.0:
                        fac = 10.0
                    else:
                        fac = min(10.0, 0.9 * pow(err, expo))
                    if rejected:
                        fac = min(1.0, fac)
                    rejected = False
                    ge1 = ev_value(&self.p, w.ynew, ev_kind, ev_index, ev_level) if ev_kind != 0 else 1.0
                    gg1 = ev_value(&self.p, w.ynew, 1, -1, guard) if guard > 0.0 else 1.0
                    hit_e = ev_kind != 0 and crossed(ge, ge1, ev_dir)
                    hit_g = guard > 0.0 and crossed(gg, gg1, -1)
                    if hit_e or hit_g:
                        he = 1e300
                        hg = 1e300
                        if hit_e:
                            he = locate(&self.p, method, y, f, hs, ev_kind, ev_index,
                                        ev_level, ge, ge1, ye, w.K, w.ytmp, N, bstm, ev_tol)
                        if hit_g:
                            hg = locate(&self.p, method, y, f, hs, 1, -1, guard,
                                        gg, gg1, yg, w.K, w.ytmp, N, bstm, ev_tol)
                        if hit_e and (not hit_g or fabs(he) <= fabs(hg)):
                            t = t + he
                            memcpy(y, ye, N * sizeof(double))
                            status = ST_EVENT
                        else:
                            t = t + hg
                            memcpy(y, yg, N * sizeof(double))
                            status = ST_GUARD
                        ts.append(t)
                        states.append(ya[:ns + 2].copy())
                        break
                    t = t + hs
                    if h == remaining or fabs(t1 - t) <= 1e-14 * max(1.0, fabs(t1)):
                        t = t1
                    memcpy(y, w.ynew, N * sizeof(double))
                    memcpy(f, w.K + (12 if method == 8 else 6) * N, N * sizeof(double))
                    ge = ge1
                    gg = gg1
                    ts.append(t)
                    states.append(ya[:ns + 2].copy())
                    if t == t1:
                        status = ST_DONE
                        break
                    h = min(h * fac, hmax)
                else:
                    if err >= 1e299:
                        fac = 0.2
                    else:
                        fac = max(0.2, 0.9 * pow(err, expo))
                    h *= fac
                    rejected = True
                    if h < 10.0 * 2.220446049250313e-16 * max(1.0, fabs(t)):
                        status = ST_UNDERFLOW
                        break
            return np.array(ts), np.array(states), ya, status
        finally:
            free(ye)
            free(yg)

    def _initial_step(self, ya, fv, double direction, double rtol, double atol,
                      bint stm, int order):
        f0 = fv.copy()
        scale = atol + np.abs(ya) * rtol
        d0 = np.sqrt(np.mean((ya / scale) ** 2))
        d1 = np.sqrt(np.mean((f0 / scale) ** 2))
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        y1 = ya + h0 * direction * f0
        f1 = self.rhs(y1, stm)
        d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1.0))
        return min(100.0 * h0, h1)

"""numba twins of ``_numpy.py``: explicit loops, same signatures and outputs."""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def steering_objective(pos, wavenumber, thetas, u):
    G = thetas.shape[0]
    M = pos.shape[0]
    out = np.empty(G)
    uc = np.conj(u)
    for g in range(G):
        c = math.cos(thetas[g])
        s = math.sin(thetas[g])
        acc = 0.0 + 0.0j
        for m in range(M):
            ph = -wavenumber * (pos[m, 0] * c + pos[m, 1] * s)
            acc += complex(math.cos(ph), math.sin(ph)) * uc[m]
        out[g] = abs(acc)
    return out


@njit(cache=True)
def grid2d_power(H, pos, wavenumber, freqs, thetas, delays):
    G = thetas.shape[0]
    D = delays.shape[0]
    M, N = H.shape
    # B[n, d] = exp(+j 2 pi f_n tau_d)
    B = np.empty((N, D), dtype=np.complex128)
    for n in range(N):
        for d in range(D):
            ph = TWO_PI * freqs[n] * delays[d]
            B[n, d] = complex(math.cos(ph), math.sin(ph))
    Y = np.zeros((G, N), dtype=np.complex128)
    for g in range(G):
        c = math.cos(thetas[g])
        s = math.sin(thetas[g])
        for m in range(M):
            ph = wavenumber * (pos[m, 0] * c + pos[m, 1] * s)
            a = complex(math.cos(ph), math.sin(ph))
            for n in range(N):
                Y[g, n] += a * H[m, n]
    out = np.abs(np.dot(Y, B))
    return out


@njit(cache=True)
def autocorr(Hs):
    T, M, N = Hs.shape
    A = np.zeros((M, M), dtype=np.complex128)
    for t in range(T):
        for i in range(M):
            for k in range(i, M):
                acc = 0.0 + 0.0j
                for n in range(N):
                    acc += Hs[t, i, n] * np.conj(Hs[t, k, n])
                A[i, k] += acc
    for i in range(M):
        A[i, i] = A[i, i].real
        for k in range(i + 1, M):
            A[k, i] = np.conj(A[i, k])
    return A


@njit(cache=True)
def _rotmat(qx, qy, qz, qw, R):
    R[0, 0] = 1 - 2 * (qy * qy + qz * qz)
    R[0, 1] = 2 * (qx * qy - qz * qw)
    R[0, 2] = 2 * (qx * qz + qy * qw)
    R[1, 0] = 2 * (qx * qy + qz * qw)
    R[1, 1] = 1 - 2 * (qx * qx + qz * qz)
    R[1, 2] = 2 * (qy * qz - qx * qw)
    R[2, 0] = 2 * (qx * qz - qy * qw)
    R[2, 1] = 2 * (qy * qz + qx * qw)
    R[2, 2] = 1 - 2 * (qx * qx + qy * qy)


@njit(cache=True)
def odom_residuals(ti, qi, tj, qj, z):
    F = ti.shape[0]
    e = np.empty((F, 6))
    Ji = np.zeros((F, 6, 6))
    Jj = np.zeros((F, 6, 6))
    R = np.empty((3, 3))
    dtp = np.empty(3)
    for f in range(F):
        _rotmat(qi[f, 0], qi[f, 1], qi[f, 2], qi[f, 3], R)
        for a in range(3):
            acc = 0.0
            for b in range(3):
                acc += R[b, a] * (tj[f, b] - ti[f, b])
            dtp[a] = acc
        ax, ay, az, aw = -qi[f, 0], -qi[f, 1], -qi[f, 2], qi[f, 3]
        bx, by, bz, bw = qj[f, 0], qj[f, 1], qj[f, 2], qj[f, 3]
        ux = aw * bx + ax * bw + ay * bz - az * by
        uy = aw * by - ax * bz + ay * bw + az * bx
        uz = aw * bz + ax * by - ay * bx + az * bw
        w = aw * bw - ax * bx - ay * by - az * bz
        sgn = 1.0
        if w < 0.0:
            sgn = -1.0
        ux *= sgn
        uy *= sgn
        uz *= sgn
        w *= sgn
        for a in range(3):
            e[f, a] = z[f, a] - dtp[a]
        e[f, 3] = z[f, 3] - ux
        e[f, 4] = z[f, 4] - uy
        e[f, 5] = z[f, 5] - uz
        for a in range(3):
            for b in range(3):
                Ji[f, a, b] = R[b, a]
                Jj[f, a, b] = -R[b, a]
        # -skew(dtp)
        Ji[f, 0, 4] = dtp[2]
        Ji[f, 0, 5] = -dtp[1]
        Ji[f, 1, 3] = -dtp[2]
        Ji[f, 1, 5] = dtp[0]
        Ji[f, 2, 3] = dtp[1]
        Ji[f, 2, 4] = -dtp[0]
        hi = 0.5
        # Ji_rr = hi (w I - [u]x), Jj_rr = -hi (w I + [u]x)
        Ji[f, 3, 3] = hi * w
        Ji[f, 4, 4] = hi * w
        Ji[f, 5, 5] = hi * w
        Ji[f, 3, 4] = hi * uz
        Ji[f, 3, 5] = -hi * uy
        Ji[f, 4, 3] = -hi * uz
        Ji[f, 4, 5] = hi * ux
        Ji[f, 5, 3] = hi * uy
        Ji[f, 5, 4] = -hi * ux
        Jj[f, 3, 3] = -hi * w
        Jj[f, 4, 4] = -hi * w
        Jj[f, 5, 5] = -hi * w
        Jj[f, 3, 4] = hi * uz
        Jj[f, 3, 5] = -hi * uy
        Jj[f, 4, 3] = -hi * uz
        Jj[f, 4, 5] = hi * ux
        Jj[f, 5, 3] = hi * uy
        Jj[f, 5, 4] = -hi * ux
    return e, Ji, Jj


@njit(cache=True)
def bearing_residuals(t, q, ap_xy, theta):
    F = t.shape[0]
    e = np.empty((F, 2))
    Jp = np.zeros((F, 2, 6))
    Ja = np.zeros((F, 2, 2))
    bad = np.zeros(F, dtype=np.bool_)
    R = np.empty((3, 3))
    d = np.empty(3)
    v = np.empty(3)
    for f in range(F):
        _rotmat(q[f, 0], q[f, 1], q[f, 2], q[f, 3], R)
        v[0] = ap_xy[f, 0] - t[f, 0]
        v[1] = ap_xy[f, 1] - t[f, 1]
        v[2] = -t[f, 2]
        for a in range(3):
            d[a] = R[0, a] * v[0] + R[1, a] * v[1] + R[2, a] * v[2]
        rho2 = d[0] * d[0] + d[1] * d[1]
        if rho2 < 1e-12:
            bad[f] = True
            e[f, 0] = 0.0
            e[f, 1] = math.pi
            continue
        alpha = math.atan2(d[1], d[0])
        ux = math.cos(alpha)
        uy = math.sin(alpha)
        # seed axis: first index of min(|ux|, |uy|, 0)
        sx = 0.0
        sy = 0.0
        sz = 0.0
        if abs(ux) <= abs(uy) and abs(ux) <= 0.0:
            sx = 1.0
        elif abs(uy) <= 0.0:
            sy = 1.0
        else:
            sz = 1.0
        dot = sx * ux + sy * uy
        b1x = sx - dot * ux
        b1y = sy - dot * uy
        b1z = sz
        nb = math.sqrt(b1x * b1x + b1y * b1y + b1z * b1z)
        b1x /= nb
        b1y /= nb
        b1z /= nb
        # b2 = u x b1, u = (ux, uy, 0); its z part is not needed
        b2x = uy * b1z
        b2y = -ux * b1z
        # tangent direction (-uy, ux, 0)
        g0 = -uy * b1x + ux * b1y
        g1 = -uy * b2x + ux * b2y
        diff = theta[f] - alpha + math.pi
        diff = diff - TWO_PI * math.floor(diff / TWO_PI) - math.pi
        e[f, 0] = diff * g0
        e[f, 1] = diff * g1
        da0 = -d[1] / rho2
        da1 = d[0] / rho2
        # dalpha/dt = -dalpha_dd R^T ; dalpha/dphi = dalpha_dd skew(d)
        for b in range(3):
            dt_b = -(da0 * R[b, 0] + da1 * R[b, 1])
            Jp[f, 0, b] = -g0 * dt_b
            Jp[f, 1, b] = -g1 * dt_b
        dphi0 = da1 * d[2]
        dphi1 = -da0 * d[2]
        dphi2 = da0 * d[1] - da1 * d[0]
        Jp[f, 0, 3] = -g0 * dphi0
        Jp[f, 0, 4] = -g0 * dphi1
        Jp[f, 0, 5] = -g0 * dphi2
        Jp[f, 1, 3] = -g1 * dphi0
        Jp[f, 1, 4] = -g1 * dphi1
        Jp[f, 1, 5] = -g1 * dphi2
        for b in range(2):
            da_b = da0 * R[b, 0] + da1 * R[b, 1]
            Ja[f, 0, b] = -g0 * da_b
            Ja[f, 1, b] = -g1 * da_b
    return e, Jp, Ja, bad


@njit(cache=True)
def power_iteration(A, max_iter, rq_tol, res_tol):
    M = A.shape[0]
    u = np.full(M, 1e-3 + 0.0j)
    u[0] = 1.0
    u /= np.sqrt(np.sum(np.abs(u) ** 2))
    rho_prev = np.inf
    rho = 0.0
    it = 0
    v = np.empty(M, dtype=np.complex128)
    Au = np.empty(M, dtype=np.complex128)
    for it in range(1, max_iter + 1):
        for i in range(M):
            acc = 0.0 + 0.0j
            for k in range(M):
                acc += A[i, k] * u[k]
            v[i] = acc
        nv = 0.0
        for i in range(M):
            nv += v[i].real ** 2 + v[i].imag ** 2
        nv = math.sqrt(nv)
        if nv == 0.0:
            return u, 0.0, it
        for i in range(M):
            u[i] = v[i] / nv
        rho = 0.0
        for i in range(M):
            acc = 0.0 + 0.0j
            for k in range(M):
                acc += A[i, k] * u[k]
            Au[i] = acc
            rho += (np.conj(u[i]) * acc).real
        res = 0.0
        for i in range(M):
            r = Au[i] - rho * u[i]
            res += r.real ** 2 + r.imag ** 2
        if abs(rho - rho_prev) < rq_tol * abs(rho) and math.sqrt(res) <= res_tol * abs(rho):
            break
        rho_prev = rho
    return u, rho, it

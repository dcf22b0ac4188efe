"""Vectorized numpy implementations of the hot loops.

Every function here has a numba twin in ``_numba.py`` with an identical
signature. Array conventions:

    pos      (M, 2)  antenna offsets (X_m, Y_m) in meters
    thetas   (G,)    azimuth grid, radians from the array +x axis
    t, q     (F, 3), (F, 4)  pose translations / quaternions (x, y, z, w)
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def steering_objective(pos, wavenumber, thetas, u):
    """|sum_m exp(j phi_m(theta)) conj(u_m)| for every theta in the grid."""
    phase = -wavenumber * (np.outer(np.cos(thetas), pos[:, 0]) + np.outer(np.sin(thetas), pos[:, 1]))
    return np.abs(np.exp(1j * phase) @ np.conj(u))


def grid2d_power(H, pos, wavenumber, freqs, thetas, delays):
    """|sum_{m,n} H[m,n] exp(-j phi_m(theta)) exp(+j 2 pi f_n tau)| on a (theta, tau) grid."""
    phase = -wavenumber * (np.outer(np.cos(thetas), pos[:, 0]) + np.outer(np.sin(thetas), pos[:, 1]))
    A = np.exp(-1j * phase)  # (G, M)
    B = np.exp(1j * TWO_PI * np.outer(freqs, delays))  # (N, D)
    return np.abs(A @ H @ B)


def autocorr(Hs):
    """Sum over packets of H H^H for a stack Hs of shape (T, M, N)."""
    return np.einsum("tmn,tkn->mk", Hs, np.conj(Hs))


def _rotmats(q):
    x, y, z, w = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - z * w)
    R[:, 0, 2] = 2 * (x * z + y * w)
    R[:, 1, 0] = 2 * (x * y + z * w)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - x * w)
    R[:, 2, 0] = 2 * (x * z - y * w)
    R[:, 2, 1] = 2 * (y * z + x * w)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _skew(v):
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def odom_residuals(ti, qi, tj, qj, z):
    """Residuals z - predict(p_i, p_j) and their Jacobians.

    Jacobians are w.r.t. the right perturbation (dt world, dphi body) of
    pose i and pose j. Returns e (F, 6), Ji (F, 6, 6), Jj (F, 6, 6).
    """
    F = ti.shape[0]
    Ri = _rotmats(qi)
    RiT = np.transpose(Ri, (0, 2, 1))
    dtp = np.einsum("fab,fb->fa", RiT, tj - ti)

    # r = conj(qi) (x) qj
    ax, ay, az, aw = -qi[:, 0], -qi[:, 1], -qi[:, 2], qi[:, 3]
    bx, by, bz, bw = qj[:, 0], qj[:, 1], qj[:, 2], qj[:, 3]
    r = np.stack(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=1,
    )
    sgn = np.where(r[:, 3] < 0.0, -1.0, 1.0)
    r = r * sgn[:, None]
    u, w = r[:, :3], r[:, 3]

    e = np.empty((F, 6))
    e[:, :3] = z[:, :3] - dtp
    e[:, 3:] = z[:, 3:] - u

    eye = np.eye(3)
    Su = _skew(u)
    Ji = np.zeros((F, 6, 6))
    Jj = np.zeros((F, 6, 6))
    Ji[:, :3, :3] = RiT
    Ji[:, :3, 3:] = -_skew(dtp)
    Ji[:, 3:, 3:] = 0.5 * (w[:, None, None] * eye - Su)
    Jj[:, :3, :3] = -RiT
    Jj[:, 3:, 3:] = -0.5 * (w[:, None, None] * eye + Su)
    return e, Ji, Jj


def bearing_residuals(t, q, ap_xy, theta):
    """Tangent-plane bearing residuals and Jacobians.

    The residual is wrap(theta - azimuth) along the in-plane tangent
    direction, expressed in the tangent basis of the predicted direction.
    Returns e (F, 2), Jp (F, 2, 6), Ja (F, 2, 2), degenerate mask (F,).
    """
    F = t.shape[0]
    R = _rotmats(q)
    RT = np.transpose(R, (0, 2, 1))
    a = np.zeros((F, 3))
    a[:, :2] = ap_xy
    d = np.einsum("fab,fb->fa", RT, a - t)
    rho2 = d[:, 0] ** 2 + d[:, 1] ** 2
    bad = rho2 < 1e-12
    rho2s = np.where(bad, 1.0, rho2)
    alpha = np.arctan2(d[:, 1], d[:, 0])
    ux, uy = np.cos(alpha), np.sin(alpha)

    # tangent_basis seeded by the least-aligned axis, first index on ties
    absu = np.stack([np.abs(ux), np.abs(uy), np.zeros(F)], axis=1)
    k = np.argmin(absu, axis=1)
    u3 = np.stack([ux, uy, np.zeros(F)], axis=1)
    seed = np.zeros((F, 3))
    seed[np.arange(F), k] = 1.0
    b1 = seed - np.sum(seed * u3, axis=1)[:, None] * u3
    b1 /= np.linalg.norm(b1, axis=1)[:, None]
    b2 = np.cross(u3, b1)
    tan = np.stack([-uy, ux, np.zeros(F)], axis=1)
    g = np.stack([np.sum(b1 * tan, axis=1), np.sum(b2 * tan, axis=1)], axis=1)

    diff = np.mod(theta - alpha + np.pi, 2.0 * np.pi) - np.pi
    e = diff[:, None] * g

    dalpha_dd = np.stack([-d[:, 1], d[:, 0], np.zeros(F)], axis=1) / rho2s[:, None]
    dalpha_dt = -np.einsum("fa,fab->fb", dalpha_dd, RT)
    dalpha_dphi = np.einsum("fa,fab->fb", dalpha_dd, _skew(d))
    dalpha_da = np.einsum("fa,fab->fb", dalpha_dd, RT[:, :, :2])

    Jp = np.empty((F, 2, 6))
    Jp[:, :, :3] = -g[:, :, None] * dalpha_dt[:, None, :]
    Jp[:, :, 3:] = -g[:, :, None] * dalpha_dphi[:, None, :]
    Ja = -g[:, :, None] * dalpha_da[:, None, :]
    if bad.any():
        e[bad] = 0.0
        e[bad, 1] = np.pi
        Jp[bad] = 0.0
        Ja[bad] = 0.0
    return e, Jp, Ja, bad


def power_iteration(A, max_iter, rq_tol, res_tol):
    """Dominant eigenpair of Hermitian PSD ``A``; returns (u, rho, iterations).

    Start vector is e_0 plus a 1e-3 perturbation on every other axis. Stops
    once successive Rayleigh quotients agree to ``rq_tol * rho`` and the
    residual |A u - rho u| is below ``res_tol * rho``.
    """
    M = A.shape[0]
    u = np.full(M, 1e-3, dtype=np.complex128)
    u[0] = 1.0
    u /= np.linalg.norm(u)
    rho_prev = np.inf
    rho = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        v = A @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return u, 0.0, it
        u = v / nv
        Au = A @ u
        rho = float(np.real(np.vdot(u, Au)))
        if abs(rho - rho_prev) < rq_tol * abs(rho) and np.linalg.norm(Au - rho * u) <= res_tol * abs(rho):
            break
        rho_prev = rho
    return u, rho, it

"""Bearing/odometry factor graph over robot poses and WiFi access points.

Variables are SE(3) robot poses and planar AP positions (AP height is held
at zero; only azimuth is measured). Factors:

    odom     z - predict(p_i, p_j), quadratic cost with diagonal Sigma_odom
    bearing  tangent-plane azimuth residual, Huber-robustified
    prior    gauge anchor on pose 0

Pose updates are right perturbations: t += dt (world), q <- q (x) exp(dphi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import (
    Pose,
    Tangent6,
    odom_compose,
    odom_predict,
    quat_canonical,
    quat_relative,
    tangent_basis,
)
from .errors import DegenerateGeometryError, InvalidInputError, NumericalError

HUBER_C = 1.345
TRIGGER_EVERY = 25
FIXED_LAG = 200
RSSI_HALF_WIDTH = 2
INIT_RADIUS = 0.1
PRIOR_SIGMA = 1e-3


def _diag_vector(sigma, n: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 2:
        if s.shape != (n, n) or np.any(s - np.diag(np.diag(s))):
            raise InvalidInputError(f"sigma must be a diagonal {n}x{n} matrix")
        s = np.diag(s)
    elif s.ndim == 0:
        s = np.full(n, float(s))
    if s.shape != (n,) or np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise InvalidInputError(f"sigma must be {n} positive variances")
    return s.copy()


def odom_sigma(sigma_t=0.01, sigma_r=np.deg2rad(0.2)) -> np.ndarray:
    """Diagonal odometry covariance (variances) from per-step translation/rotation std.

    Rotation residuals live in quaternion-vector units (half-angle), so the
    rotation variances are (sigma_r / 2)^2.
    """
    st = np.broadcast_to(np.asarray(sigma_t, dtype=float), (3,))
    sr = np.broadcast_to(np.asarray(sigma_r, dtype=float), (3,))
    return np.concatenate([st**2, (0.5 * sr) ** 2])


@dataclass(frozen=True)
class OdomFactor:
    i: int
    j: int
    z: np.ndarray  # (6,) dt, dr
    sigma: np.ndarray  # (6,) variances

    def __post_init__(self):
        if self.j != self.i + 1:
            raise InvalidInputError("odometry factors link consecutive poses")
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(6))
        object.__setattr__(self, "sigma", _diag_vector(self.sigma, 6))


@dataclass(frozen=True)
class BearingFactor:
    i: int
    ap_id: str
    theta: float
    sigma: np.ndarray  # (2,) variances
    huber_c: float = HUBER_C
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sigma", _diag_vector(self.sigma, 2))
        if not self.huber_c > 0:
            raise InvalidInputError("huber_c must be positive")

    @property
    def z(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)])


@dataclass(frozen=True)
class PriorFactor:
    i: int
    pose: Pose
    sigma: np.ndarray  # (6,) variances

    def __post_init__(self):
        object.__setattr__(self, "sigma", _diag_vector(self.sigma, 6))


def huber_rho(s, c: float):
    """Huber cost of a squared whitened residual ``s``: s inside the c-ball, 2c sqrt(s) - c^2 outside."""
    s = np.asarray(s, dtype=float)
    r = np.sqrt(s)
    out = np.where(r <= c, s, 2.0 * c * r - c * c)
    return float(out) if out.ndim == 0 else out


def huber_weight(s, c):
    """d rho / d s, the IRLS weight."""
    r = np.sqrt(np.asarray(s, dtype=float))
    return np.where(r <= c, 1.0, c / np.maximum(r, 1e-300))


class GraphState:
    """Poses, AP positions and factors. Mutated only by its owner."""

    def __init__(self, anchor: Pose, prior_sigma=PRIOR_SIGMA):
        self.t = anchor.t[None, :].copy()
        self.q = anchor.q[None, :].copy()
        self.aps: dict[str, np.ndarray] = {}
        self.odom: list[OdomFactor] = []
        self.bearings: list[BearingFactor] = []
        self.priors: list[PriorFactor] = [PriorFactor(0, anchor, _diag_vector(np.asarray(prior_sigma) ** 2, 6))]
        self._cache = None

    # -- variables -------------------------------------------------------
    @property
    def n_poses(self) -> int:
        return self.t.shape[0]

    def pose(self, i: int) -> Pose:
        return Pose(self.t[i], self.q[i])

    @property
    def poses(self) -> list[Pose]:
        return [self.pose(i) for i in range(self.n_poses)]

    def append_pose(self, pose: Pose) -> int:
        self.t = np.vstack([self.t, pose.t[None, :]])
        self.q = np.vstack([self.q, pose.q[None, :]])
        return self.n_poses - 1

    def set_ap(self, ap_id: str, x) -> None:
        x = np.asarray(x, dtype=float).reshape(3).copy()
        x[2] = 0.0
        self.aps[ap_id] = x
        self._cache = None

    @property
    def factors(self) -> list:
        return [*self.priors, *self.odom, *self.bearings]

    # -- factors ---------------------------------------------------------
    def add_factor(self, f) -> None:
        if isinstance(f, OdomFactor):
            if f.j >= self.n_poses:
                raise InvalidInputError("odometry factor references a missing pose")
            self.odom.append(f)
        elif isinstance(f, BearingFactor):
            if f.i >= self.n_poses or f.ap_id not in self.aps:
                raise InvalidInputError("bearing factor references a missing variable")
            self.bearings.append(f)
        elif isinstance(f, PriorFactor):
            self.priors.append(f)
        else:
            raise InvalidInputError(f"unknown factor {f!r}")
        self._cache = None

    def snapshot(self) -> "GraphState":
        s = GraphState.__new__(GraphState)
        s.t = self.t.copy()
        s.q = self.q.copy()
        s.aps = {k: v.copy() for k, v in self.aps.items()}
        s.odom = list(self.odom)
        s.bearings = list(self.bearings)
        s.priors = list(self.priors)
        s._cache = self._cache
        return s

    def arrays(self):
        """Factor data gathered into arrays; cached until the factor set changes."""
        if self._cache is None:
            ap_ids = sorted(self.aps)
            ap_index = {a: k for k, a in enumerate(ap_ids)}
            oi = np.array([f.i for f in self.odom], dtype=np.int64)
            oz = np.array([f.z for f in self.odom]).reshape(-1, 6)
            ow = 1.0 / np.array([f.sigma for f in self.odom]).reshape(-1, 6)
            bi = np.array([f.i for f in self.bearings], dtype=np.int64)
            ba = np.array([ap_index[f.ap_id] for f in self.bearings], dtype=np.int64)
            bt = np.array([f.theta for f in self.bearings], dtype=float)
            bw = 1.0 / np.array([f.sigma for f in self.bearings]).reshape(-1, 2)
            bc = np.array([f.huber_c for f in self.bearings], dtype=float)
            self._cache = dict(ap_ids=ap_ids, oi=oi, oz=oz, ow=ow, bi=bi, ba=ba, bt=bt, bw=bw, bc=bc)
        return self._cache

    def ap_matrix(self, ap_ids) -> np.ndarray:
        return np.array([self.aps[a][:2] for a in ap_ids]).reshape(-1, 2)


# -- scalar measurement models ----------------------------------------------

def bearing_predict(pose: Pose, ap) -> tuple[np.ndarray, np.ndarray]:
    """Predicted azimuth-plane direction to ``ap`` in the robot frame.

    Returns the unit direction d (elevation projected away) and the 2x3
    matrix whose rows are the tangent basis (b1, b2) at d.
    """
    ap = np.asarray(ap, dtype=float)
    if np.linalg.norm(ap - pose.t) <= 1e-6:
        raise DegenerateGeometryError("AP coincides with the robot pose")
    d = pose.R.T @ (ap - pose.t)
    d[2] = 0.0
    n = np.linalg.norm(d)
    if n <= 1e-6:
        raise DegenerateGeometryError("AP lies on the robot's vertical axis")
    d /= n
    b1, b2 = tangent_basis(d)
    return d, np.vstack([b1, b2])


def local_coordinates(d: np.ndarray, B: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Tangent-plane coordinates of unit ``v`` at ``d``: rotation angle along the basis projection."""
    w = B @ v
    s = np.linalg.norm(w)
    c = float(d @ v)
    if s > 1e-15:
        return np.arctan2(s, c) / s * w
    if c > 0:
        return w
    # antipodal: saturate at pi along the in-plane tangent
    tan = np.array([-d[1], d[0], 0.0])
    return -np.pi * (B @ tan)


def bearing_error(factor: BearingFactor, state: GraphState) -> np.ndarray:
    d, B = bearing_predict(state.pose(factor.i), state.aps[factor.ap_id])
    z3 = np.array([np.cos(factor.theta), np.sin(factor.theta), 0.0])
    return local_coordinates(d, B, z3)


def odom_error(factor: OdomFactor, state: GraphState) -> np.ndarray:
    return factor.z - odom_predict(state.pose(factor.i), state.pose(factor.j)).as_vector()


def prior_error(factor: PriorFactor, state: GraphState) -> np.ndarray:
    p = state.pose(factor.i)
    return np.concatenate([p.t - factor.pose.t, quat_relative(factor.pose.q, p.q)[:3]])


# -- vectorized evaluation ---------------------------------------------------

def _residuals(state: GraphState, with_jacobians: bool):
    A = state.arrays()
    t, q = state.t, state.q
    out = {}
    if len(A["oi"]):
        i = A["oi"]
        out["odom"] = kernels.odom_residuals(t[i], q[i], t[i + 1], q[i + 1], A["oz"])
    if len(A["bi"]):
        i = A["bi"]
        ap = state.ap_matrix(A["ap_ids"])[A["ba"]]
        out["bearing"] = kernels.bearing_residuals(t[i], q[i], ap, A["bt"])
    pr = []
    for f in state.priors:
        r = quat_canonical(np.array(quat_relative(f.pose.q, q[f.i])))
        e = np.concatenate([t[f.i] - f.pose.t, r[:3]])
        J = np.zeros((6, 6))
        J[:3, :3] = np.eye(3)
        u, w = r[:3], r[3]
        J[3:, 3:] = 0.5 * (w * np.eye(3) + np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]]))
        pr.append((f.i, e, J, 1.0 / f.sigma))
    out["prior"] = pr
    return out


def cost_terms(state: GraphState) -> dict:
    A = state.arrays()
    res = _residuals(state, False)
    odom = 0.0
    bearing = 0.0
    if "odom" in res:
        odom = float(np.sum(res["odom"][0] ** 2 * A["ow"]))
    if "bearing" in res:
        s = np.sum(res["bearing"][0] ** 2 * A["bw"], axis=1)
        bearing = float(np.sum(huber_rho(s, A["bc"])))
    prior = float(sum(np.sum(e**2 * w) for _, e, _, w in res["prior"]))
    return {"odom": odom, "bearing": bearing, "prior": prior, "total": odom + bearing + prior}


def total_cost(state: GraphState) -> float:
    """Sum of Huber bearing costs plus quadratic odometry and prior costs."""
    return cost_terms(state)["total"]


# -- AP initialization -------------------------------------------------------

def smooth_rssi(values, k: int = RSSI_HALF_WIDTH) -> np.ndarray:
    """Centered moving average over 2k+1 samples; only full windows are returned."""
    v = np.asarray(values, dtype=float)
    w = 2 * k + 1
    if v.size < w:
        return np.empty(0)
    c = np.cumsum(np.concatenate([[0.0], v]))
    return (c[w:] - c[:-w]) / w


def find_rssi_peak(smoothed) -> int | None:
    """First interior local maximum; a plateau counts if both outer neighbours are lower.

    Returns the index of the earliest sample of the peak, or None.
    """
    s = np.asarray(smoothed, dtype=float)
    n = s.size
    i = 1
    while i < n - 1:
        if s[i] > s[i - 1]:
            j = i
            while j + 1 < n and s[j + 1] == s[i]:
                j += 1
            if j + 1 < n and s[j + 1] < s[i]:
                return i
            i = j + 1
        else:
            i += 1
    return None


class RssiTracker:
    """Per-AP RSSI series indexed by pose; samples landing on one pose are averaged."""

    def __init__(self, half_width: int = RSSI_HALF_WIDTH):
        self.half_width = int(half_width)
        self.series: dict[str, list[list[float]]] = {}  # ap -> [[pose_idx, mean, count], ...]

    def add(self, ap_id: str, pose_index: int, rssi: float) -> None:
        s = self.series.setdefault(ap_id, [])
        if s and s[-1][0] == pose_index:
            e = s[-1]
            e[2] += 1
            e[1] += (rssi - e[1]) / e[2]
        elif s and pose_index < s[-1][0]:
            raise InvalidInputError("RSSI samples must arrive in pose order")
        else:
            s.append([pose_index, float(rssi), 1])

    def indices(self, ap_id: str) -> list[int]:
        return [int(e[0]) for e in self.series.get(ap_id, [])]

    def values(self, ap_id: str) -> np.ndarray:
        return np.array([e[1] for e in self.series.get(ap_id, [])])

    def peak_pose(self, ap_id: str) -> int | None:
        vals = self.values(ap_id)
        k = find_rssi_peak(smooth_rssi(vals, self.half_width))
        if k is None:
            return None
        return self.indices(ap_id)[k + self.half_width]


def sample_ball(rng: np.random.Generator, radius: float = INIT_RADIUS) -> np.ndarray:
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    return v * radius * rng.random() ** (1.0 / 3.0)


def maybe_initialize_ap(tracker: RssiTracker, ap_id: str, state: GraphState, rng: np.random.Generator,
                        radius: float = INIT_RADIUS) -> bool:
    """Place ``ap_id`` at the pose of its RSSI peak plus a small random offset, if a peak exists."""
    if ap_id in state.aps:
        return False
    k = tracker.peak_pose(ap_id)
    if k is None:
        return False
    state.set_ap(ap_id, state.t[k] + sample_ball(rng, radius))
    return True


def add_odometry(state: GraphState, z: Tangent6, sigma) -> int:
    """Append a pose dead-reckoned from the last one and the odometry factor linking them."""
    if not isinstance(z, Tangent6):
        z = Tangent6.from_vector(z)
    last = state.n_poses - 1
    j = state.append_pose(odom_compose(state.pose(last), z))
    state.add_factor(OdomFactor(last, j, z.as_vector(), sigma))
    return j


# -- Levenberg-Marquardt -----------------------------------------------------

MAX_ITERS = 50
REL_TOL = 1e-9
LAMBDA_INIT = 1e-4
LAMBDA_MAX = 1e12
COST_FLOOR = 1e-18  # below this the residuals are at roundoff level


@dataclass
class OptimizeStats:
    iterations: int = 0
    cost_initial: float = 0.0
    cost_final: float = 0.0
    rejected: int = 0
    singular: int = 0
    free_poses: int = 0
    free_aps: int = 0
    lam: float = LAMBDA_INIT
    diagnostics: list = field(default_factory=list)


def free_ap_ids(state: GraphState) -> list[str]:
    """APs observed from at least two distinct poses."""
    seen: dict[str, set] = {}
    for f in state.bearings:
        seen.setdefault(f.ap_id, set()).add(f.i)
    return [a for a in sorted(state.aps) if len(seen.get(a, ())) >= 2]


def _btb(A, B):
    """Batched A^T B for stacks of small matrices."""
    return np.matmul(A.transpose(0, 2, 1), B)


def _btv(A, v):
    return np.matmul(A.transpose(0, 2, 1), v[:, :, None])[:, :, 0]


def _linearize(state: GraphState, pose_col: np.ndarray, ap_col: np.ndarray, n: int, pattern=None):
    A = state.arrays()
    res = _residuals(state, True)
    rows, cols, vals = [], [], []
    g = np.zeros(n)

    def add_block(ci, cj, blocks):
        # blocks: (F, a, b) contributions to H[ci-block, cj-block]
        F, a, b = blocks.shape
        ok = (ci >= 0) & (cj >= 0)
        if not ok.any():
            return
        if pattern is None:
            r = ci[ok, None, None] + np.arange(a)[None, :, None]
            c = cj[ok, None, None] + np.arange(b)[None, None, :]
            rows.append(np.broadcast_to(r, (ok.sum(), a, b)).ravel())
            cols.append(np.broadcast_to(c, (ok.sum(), a, b)).ravel())
        vals.append(blocks[ok].ravel())

    def add_grad(ci, vec):
        ok = ci >= 0
        if ok.any():
            idx = ci[ok, None] + np.arange(vec.shape[1])[None, :]
            g[:] += np.bincount(idx.ravel(), weights=vec[ok].ravel(), minlength=n)

    if "odom" in res:
        e, Ji, Jj = res["odom"]
        w = A["ow"]
        i = A["oi"]
        ci, cj = pose_col[i], pose_col[i + 1]
        WJi = Ji * w[:, :, None]
        WJj = Jj * w[:, :, None]
        add_block(ci, ci, _btb(Ji, WJi))
        add_block(cj, cj, _btb(Jj, WJj))
        add_block(ci, cj, _btb(Ji, WJj))
        add_block(cj, ci, _btb(Jj, WJi))
        add_grad(ci, _btv(WJi, e))
        add_grad(cj, _btv(WJj, e))
    if "bearing" in res:
        e, Jp, Ja, _ = res["bearing"]
        s = np.sum(e**2 * A["bw"], axis=1)
        w = A["bw"] * huber_weight(s, A["bc"])[:, None]
        ci = pose_col[A["bi"]]
        ca = ap_col[A["ba"]]
        WJp = Jp * w[:, :, None]
        WJa = Ja * w[:, :, None]
        add_block(ci, ci, _btb(Jp, WJp))
        add_block(ca, ca, _btb(Ja, WJa))
        add_block(ci, ca, _btb(Jp, WJa))
        add_block(ca, ci, _btb(Ja, WJp))
        add_grad(ci, _btv(WJp, e))
        add_grad(ca, _btv(WJa, e))
    for i, e, J, w in res["prior"]:
        c = pose_col[i]
        if c >= 0:
            WJ = J * w[:, None]
            add_block(np.array([c]), np.array([c]), (J.T @ WJ)[None])
            add_grad(np.array([c]), (WJ.T @ e)[None])
    if pattern is None:
        pattern = _Pattern(np.concatenate(rows) if rows else np.zeros(0, np.int64),
                           np.concatenate(cols) if cols else np.zeros(0, np.int64), n)
    return pattern.assemble(np.concatenate(vals) if vals else np.zeros(0)), g, pattern


class _Pattern:
    """CSC layout of the normal matrix; fixed while the factor set and free variables are."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, n: int):
        diag = np.arange(n)
        keys = np.concatenate([cols, diag]) * n + np.concatenate([rows, diag])
        ukeys, self.inverse = np.unique(keys, return_inverse=True)
        self.indices = (ukeys % n).astype(np.int32)
        ucols = ukeys // n
        self.indptr = np.searchsorted(ucols, np.arange(n + 1)).astype(np.int32)
        self.n = n
        self.diag = np.flatnonzero(self.indices == ucols)
        self.diag_col = ucols[self.diag]

    def assemble(self, vals: np.ndarray):
        from scipy import sparse

        data = np.bincount(self.inverse, weights=np.concatenate([vals, np.zeros(self.n)]),
                           minlength=self.indices.size)
        return sparse.csc_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def damped(self, H, lam: float, D: np.ndarray):
        """H + lam * diag(D); every diagonal entry is structurally present."""
        from scipy import sparse

        data = H.data.copy()
        data[self.diag] += lam * D[self.diag_col]
        return sparse.csc_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def _retract(state: GraphState, free_poses: np.ndarray, ap_ids: list[str], delta: np.ndarray) -> GraphState:
    out = state.snapshot()
    nfp = free_poses.size
    if nfp:
        d = delta[: 6 * nfp].reshape(nfp, 6)
        out.t[free_poses] += d[:, :3]
        phi = d[:, 3:]
        ang = np.linalg.norm(phi, axis=1)
        half = 0.5 * ang
        scale = np.where(ang > 1e-12, np.sin(half) / np.maximum(ang, 1e-300), 0.5)
        dq = np.concatenate([phi * scale[:, None], np.cos(half)[:, None]], axis=1)
        qa = out.q[free_poses]
        ax, ay, az, aw = qa.T
        bx, by, bz, bw = dq.T
        qn = np.stack(
            [
                aw * bx + ax * bw + ay * bz - az * by,
                aw * by - ax * bz + ay * bw + az * bx,
                aw * bz + ax * by - ay * bx + az * bw,
                aw * bw - ax * bx - ay * by - az * bz,
            ],
            axis=1,
        )
        qn /= np.linalg.norm(qn, axis=1)[:, None]
        qn[qn[:, 3] < 0] *= -1.0
        out.q[free_poses] = qn
    for k, a in enumerate(ap_ids):
        out.aps[a] = out.aps[a].copy()
        out.aps[a][:2] += delta[6 * nfp + 2 * k: 6 * nfp + 2 * k + 2]
    return out


POSE_BAND = 11  # odometry couples only consecutive 6-dof pose blocks


def solve_arrow(H, rhs: np.ndarray, m: int) -> np.ndarray:
    """Solve H x = rhs for SPD H whose leading m x m pose block is banded.

    The pose block gets a banded Cholesky and the few AP columns are
    eliminated through their Schur complement. Raises LinAlgError when H is
    not positive definite. Falls back to a general sparse solve if the pose
    block is not banded.
    """
    from scipy.linalg import solveh_banded
    from scipy.sparse.linalg import spsolve

    C = H.tocoo()
    r, c, v = C.row, C.col, C.data
    inp = (r < m) & (c < m)
    if m == 0 or np.any(np.abs(c[inp] - r[inp]) > POSE_BAND):
        x = spsolve(H.tocsc(), rhs)
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("singular normal equations")
        return x
    upper = inp & (c >= r)
    ab = np.zeros((POSE_BAND + 1, m))
    ab[POSE_BAND + r[upper] - c[upper], c[upper]] = v[upper]
    k = H.shape[0] - m
    if k == 0:
        return solveh_banded(ab, rhs)
    Hc = H.tocsc()
    B = Hc[:m, m:].toarray()
    A = Hc[m:, m:].toarray()
    X = solveh_banded(ab, np.column_stack([rhs[:m], B]))
    S = A - B.T @ X[:, 1:]
    xa = np.linalg.solve(S, rhs[m:] - B.T @ X[:, 0])
    return np.concatenate([X[:, 0] - X[:, 1:] @ xa, xa])


def optimize(state: GraphState, fixed_lag: int | None = None, max_iters: int = MAX_ITERS,
             rel_tol: float = REL_TOL) -> OptimizeStats:
    """Levenberg-Marquardt on the full graph, warm-started from the current estimate.

    With ``fixed_lag`` only the newest ``fixed_lag`` poses are free. APs seen
    from fewer than two distinct poses are held fixed. The state is updated
    in place; total cost never increases.
    """
    N = state.n_poses
    first_free = 0 if fixed_lag is None else max(0, N - fixed_lag)
    free_poses = np.arange(first_free, N)
    ap_ids = free_ap_ids(state)
    all_aps = state.arrays()["ap_ids"]
    pose_col = np.full(N, -1, dtype=np.int64)
    pose_col[free_poses] = 6 * np.arange(free_poses.size)
    ap_col = np.full(len(all_aps), -1, dtype=np.int64)
    for k, a in enumerate(ap_ids):
        ap_col[all_aps.index(a)] = 6 * free_poses.size + 2 * k
    n = 6 * free_poses.size + 2 * len(ap_ids)

    cost = total_cost(state)
    if not np.isfinite(cost):
        raise NumericalError("total cost is not finite at the initial estimate")
    stats = OptimizeStats(cost_initial=cost, cost_final=cost, free_poses=int(free_poses.size), free_aps=len(ap_ids))
    if n == 0 or cost < COST_FLOOR:
        return stats
    lam = LAMBDA_INIT
    current = state
    pattern = None
    for it in range(max_iters):
        H, g, pattern = _linearize(current, pose_col, ap_col, n, pattern)
        D = np.maximum(H.diagonal(), 1e-9)
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                with np.errstate(all="ignore"):
                    delta = solve_arrow(pattern.damped(H, lam, D), -g, 6 * free_poses.size)
                ok = np.all(np.isfinite(delta))
            except (RuntimeError, np.linalg.LinAlgError):
                ok = False
            if not ok:
                stats.singular += 1
                stats.diagnostics.append(f"iter {it}: singular normal equations at lambda={lam:.1e}")
                lam *= 10.0
                continue
            trial = _retract(current, free_poses, ap_ids, delta)
            new_cost = total_cost(trial)
            if new_cost < cost:
                accepted = True
                lam = max(lam / 10.0, 1e-12)
                break
            stats.rejected += 1
            # the model promises less than the convergence threshold: stop instead of shrinking the step
            predicted = -(2.0 * g @ delta + delta @ (H @ delta))
            if predicted <= rel_tol * cost:
                break
            lam *= 10.0
        if not accepted:
            break
        stats.iterations += 1
        rel = (cost - new_cost) / cost
        current, cost = trial, new_cost
        if rel < rel_tol or cost < COST_FLOOR:
            break
    state.t, state.q = current.t, current.q
    state.aps = current.aps
    stats.cost_final = cost
    stats.lam = lam
    return stats


# -- streaming session -------------------------------------------------------

@dataclass
class TriggerRecord:
    t: float
    reason: str
    n_poses: int
    n_bearings: int
    cost_before: float
    cost_after: float
    iterations: int


class WifiSlam:
    """Event-driven owner of a GraphState.

    Feed a single time-ordered stream via :meth:`add_odometry`,
    :meth:`add_bearing` and :meth:`add_rssi`, then call :meth:`finish`.

    Modes: ``incremental`` re-solves every ``trigger_every`` new bearing
    factors and on each AP initialization; ``fixed-lag`` does the same with
    only the newest ``fixed_lag`` poses free; ``batch`` solves once in
    :meth:`finish`.
    """

    MODES = ("incremental", "batch", "fixed-lag")

    def __init__(self, anchor: Pose, odom_sigma_diag=None, huber_c: float = HUBER_C, mode: str = "incremental",
                 trigger_every: int = TRIGGER_EVERY, fixed_lag: int = FIXED_LAG,
                 rssi_half_width: int = RSSI_HALF_WIDTH, init_radius: float = INIT_RADIUS,
                 seed: int = 0, on_trigger=None):
        if mode not in self.MODES:
            raise InvalidInputError(f"unknown mode {mode!r}")
        self.state = GraphState(anchor)
        self.odom_sigma = odom_sigma() if odom_sigma_diag is None else _diag_vector(odom_sigma_diag, 6)
        self.huber_c = huber_c
        self.mode = mode
        self.trigger_every = trigger_every
        self.fixed_lag = fixed_lag if mode == "fixed-lag" else None
        self.tracker = RssiTracker(rssi_half_width)
        self.init_radius = init_radius
        self.rng = np.random.default_rng(seed)
        self.pending: dict[str, list[BearingFactor]] = {}
        self.since_trigger = 0
        self.now = 0.0
        self.times = [0.0]
        self.trace: list[TriggerRecord] = []
        self.on_trigger = on_trigger

    def set_start_time(self, t0: float) -> None:
        self.times[0] = float(t0)
        self.now = float(t0)

    def add_odometry(self, t: float, z) -> int:
        self.now = float(t)
        j = add_odometry(self.state, z, self.odom_sigma)
        self.times.append(float(t))
        return j

    def add_bearing(self, pose_index: int, ap_id: str, theta: float, sigma, t: float | None = None) -> None:
        if t is not None:
            self.now = max(self.now, float(t))
        f = BearingFactor(int(pose_index), ap_id, float(theta), _diag_vector(sigma, 2), self.huber_c,
                          float(self.now if t is None else t))
        if ap_id in self.state.aps:
            self.state.add_factor(f)
            self.since_trigger += 1
            if self.mode != "batch" and self.since_trigger >= self.trigger_every:
                self._trigger("bearings")
        else:
            self.pending.setdefault(ap_id, []).append(f)

    def add_rssi(self, pose_index: int, ap_id: str, rssi: float, t: float | None = None) -> None:
        if t is not None:
            self.now = max(self.now, float(t))
        self.tracker.add(ap_id, int(pose_index), float(rssi))
        if maybe_initialize_ap(self.tracker, ap_id, self.state, self.rng, self.init_radius):
            for f in self.pending.pop(ap_id, []):
                self.state.add_factor(f)
            if self.mode != "batch":
                self._trigger(f"init:{ap_id}")

    def _trigger(self, reason: str) -> OptimizeStats:
        before = total_cost(self.state)
        stats = optimize(self.state, fixed_lag=self.fixed_lag)
        self.since_trigger = 0
        self.trace.append(TriggerRecord(self.now, reason, self.state.n_poses, len(self.state.bearings),
                                        before, stats.cost_final, stats.iterations))
        if self.on_trigger is not None:
            self.on_trigger(self)
        return stats

    def finish(self) -> OptimizeStats:
        """Final solve over the whole graph (all poses free in every mode but fixed-lag)."""
        return self._trigger("final")

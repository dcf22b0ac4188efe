"""Direct-path bearing estimation from windows of CSI packets.

PCAB: sum the per-packet autocorrelations H H^H over a short time window,
take the dominant eigenvector and match it against steering vectors on a
1-D azimuth grid. Reflections that change from packet to packet average out
of the dominant eigenvector while the stable direct path accumulates.

``grid2d_search`` is the joint (azimuth, delay) matched-filter baseline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import ArrayGeometry, CsiPacket
from .errors import DegenerateInputError, InvalidInputError

RSSI_THRESHOLD_DBM = -65.0
WINDOW_SECONDS = 0.5
DEFAULT_GRID_STEP = np.deg2rad(1.0)
DEFAULT_SIGMA = np.deg2rad(5.0)
DEFAULT_DELAY_GRID = np.arange(0.0, 200.5e-9, 1e-9)

POWER_MAX_ITER = 500
POWER_RQ_TOL = 1e-12
POWER_RES_TOL = 1e-10


def bearing_sigma(sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Diagonal 2x2 bearing covariance for a per-axis standard deviation (radians)."""
    return np.diag([sigma**2, sigma**2])


@dataclass
class BearingMeasurement:
    timestamp: float
    ap_id: str
    theta: float
    sigma: np.ndarray = field(default_factory=bearing_sigma)
    evaluations: int = 0
    at_edge: bool = False  # grid peak sat on a search-range boundary

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.timestamp)):
            raise InvalidInputError("bearing time and angle must be finite")
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.shape != (2, 2) or np.any(np.diag(self.sigma) <= 0):
            raise InvalidInputError("bearing sigma must be a positive 2x2 diagonal")

    @property
    def z(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)])

    @property
    def sigma_std(self) -> float:
        return float(np.sqrt(self.sigma[0, 0]))


class BearingWindow:
    """Time-ordered CSI packets of one AP within the last ``horizon`` seconds."""

    def __init__(self, ap_id: str, horizon: float = WINDOW_SECONDS):
        if horizon < 0:
            raise InvalidInputError("window horizon must be nonnegative")
        self.ap_id = ap_id
        self.horizon = float(horizon)
        self.packets: deque[CsiPacket] = deque()

    def __len__(self):
        return len(self.packets)

    def push(self, packet: CsiPacket) -> None:
        if packet.ap_id != self.ap_id:
            raise InvalidInputError(f"packet for {packet.ap_id!r} pushed into window of {self.ap_id!r}")
        if self.packets:
            last = self.packets[-1]
            if packet.timestamp < last.timestamp:
                raise InvalidInputError("packet timestamps must be nondecreasing")
            if packet.H.shape != last.H.shape or packet.wavelength != last.wavelength:
                raise InvalidInputError("packets in a window must share dimensions and wavelength")
        self.packets.append(packet)
        self.evict(packet.timestamp)

    def evict(self, now: float) -> None:
        cutoff = now - self.horizon - 1e-9
        while self.packets and self.packets[0].timestamp < cutoff:
            self.packets.popleft()

    @property
    def latest(self) -> CsiPacket:
        return self.packets[-1]

    @property
    def mid_time(self) -> float:
        """Mean packet timestamp: the instant the windowed estimate describes on a moving robot."""
        return float(np.mean([p.timestamp for p in self.packets]))

    def stack(self) -> np.ndarray:
        return np.stack([p.H for p in self.packets])

    @classmethod
    def of(cls, packets, horizon: float = WINDOW_SECONDS) -> "BearingWindow":
        packets = list(packets)
        if not packets:
            raise InvalidInputError("empty packet list")
        w = cls(packets[0].ap_id, horizon)
        for p in packets:
            w.push(p)
        return w


def autocorr_sum(window: BearingWindow) -> np.ndarray:
    """Hermitian M x M sum over the window of H H^H."""
    if len(window) == 0:
        raise InvalidInputError("empty window")
    return kernels.autocorr(window.stack())


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(u))
    k = int(np.argmax(np.abs(u) > 1e-9 * scale))
    return u * (np.abs(u[k]) / u[k])


def largest_eigenvector(A) -> np.ndarray:
    """Unit dominant eigenvector of Hermitian PSD ``A``, first nonzero entry real positive."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    if not np.any(A):
        raise DegenerateInputError("zero matrix has no dominant eigenvector")
    u, rho, _ = kernels.power_iteration(A, POWER_MAX_ITER, POWER_RQ_TOL, POWER_RES_TOL)
    if not rho > 0:
        raise DegenerateInputError("autocorrelation has no positive eigenvalue")
    return _canonical_phase(u / np.linalg.norm(u))


def bearing_grid(geom: ArrayGeometry, grid_step: float = DEFAULT_GRID_STEP, search_range=None) -> np.ndarray:
    lo, hi = geom.default_search_range() if search_range is None else search_range
    if not grid_step > 0 or hi < lo:
        raise InvalidInputError("invalid bearing grid")
    n = int(np.floor((hi - lo) / grid_step + 1e-9)) + 1
    return lo + grid_step * np.arange(n)


def _refine(geom: ArrayGeometry, wavenumber: float, u: np.ndarray, theta0: float, step: float):
    """Newton ascent on |a(theta)^T conj(u)|^2 inside [theta0 - step, theta0 + step]."""
    X, Y = geom.positions[:, 0], geom.positions[:, 1]
    uc = np.conj(u)
    theta = theta0
    evals = 0
    for _ in range(30):
        c, s = np.cos(theta), np.sin(theta)
        ph = -wavenumber * (X * c + Y * s)
        dph = -wavenumber * (-X * s + Y * c)
        a = np.exp(1j * ph) * uc
        S = a.sum()
        S1 = (1j * dph * a).sum()
        S2 = ((-1j * ph - dph**2) * a).sum()  # d2 phase = -phase
        evals += 1
        g = 2.0 * np.real(np.conj(S) * S1)
        h = 2.0 * (abs(S1) ** 2 + np.real(np.conj(S) * S2))
        if h >= 0:
            break
        new = theta - g / h
        new = min(max(new, theta0 - step), theta0 + step)
        if abs(new - theta) < 1e-15:
            theta = new
            break
        theta = new
    return theta, evals


def pcab_bearing(window: BearingWindow, geom: ArrayGeometry, grid_step: float = DEFAULT_GRID_STEP,
                 search_range=None, refine: bool = False, sigma: float = DEFAULT_SIGMA) -> BearingMeasurement:
    """Direct-path azimuth of the window's dominant eigenvector.

    The coarse estimate is the first (smallest-theta) grid maximum of
    |sum_m exp(j phi_m(theta)) conj(U(m))|. With ``refine`` the grid peak is
    polished by Newton steps confined to one grid cell.
    """
    U = largest_eigenvector(autocorr_sum(window))
    if U.shape[0] != geom.n_antennas:
        raise InvalidInputError("packet antenna count does not match the array geometry")
    thetas = bearing_grid(geom, grid_step, search_range)
    k = 2.0 * np.pi / window.latest.wavelength
    obj = kernels.steering_objective(geom.positions, k, thetas, U)
    g = int(np.argmax(obj))
    theta = float(thetas[g])
    evals = thetas.shape[0]
    if refine:
        theta, extra = _refine(geom, k, U, theta, grid_step)
        lo, hi = thetas[0], thetas[-1]
        theta = float(min(max(theta, lo), hi))
        evals += extra
    edge = g == 0 or g == thetas.shape[0] - 1
    return BearingMeasurement(window.mid_time, window.ap_id, theta, bearing_sigma(sigma), evals, edge)


@dataclass(frozen=True)
class Grid2dResult:
    theta: float
    delay: float
    peak: float
    evaluations: int
    at_edge: bool = False


def grid2d_search(packet: CsiPacket, geom: ArrayGeometry, theta_grid, delay_grid) -> Grid2dResult:
    theta_grid = np.asarray(theta_grid, dtype=float)
    delay_grid = np.asarray(delay_grid, dtype=float)
    if theta_grid.size == 0 or delay_grid.size == 0:
        raise InvalidInputError("empty search grid")
    if not np.any(packet.H):
        raise DegenerateInputError("zero channel")
    P = kernels.grid2d_power(packet.H, geom.positions, 2.0 * np.pi / packet.wavelength,
                             packet.freqs, theta_grid, delay_grid)
    g, d = np.unravel_index(int(np.argmax(P)), P.shape)
    return Grid2dResult(float(theta_grid[g]), float(delay_grid[d]), float(P[g, d]), int(P.size),
                        bool(g == 0 or g == theta_grid.size - 1))


def grid2d_baseline(packet: CsiPacket, geom: ArrayGeometry, theta_grid, delay_grid) -> float:
    """Azimuth of the joint (theta, tau) matched-filter peak of one packet."""
    return grid2d_search(packet, geom, theta_grid, delay_grid).theta


def rssi_gate(packet: CsiPacket, threshold: float = RSSI_THRESHOLD_DBM) -> bool:
    """True to keep the packet; packets strictly below ``threshold`` dBm are dropped."""
    return not packet.rssi < threshold


class BearingEstimator:
    """Streams packets through RSSI gating and per-AP windows, emitting one bearing per kept packet.

    With ``reject_edge`` an estimate whose grid peak lies on a boundary of the
    search range is discarded: the true direction is most likely outside the
    resolvable range and the boundary value is biased.
    """

    def __init__(self, geom: ArrayGeometry, estimator: str = "pcab", horizon: float = WINDOW_SECONDS,
                 grid_step: float = DEFAULT_GRID_STEP, search_range=None, refine: bool = False,
                 rssi_threshold: float = RSSI_THRESHOLD_DBM, sigma: float = DEFAULT_SIGMA,
                 delay_grid=DEFAULT_DELAY_GRID, reject_edge: bool = True):
        if estimator not in ("pcab", "grid2d"):
            raise InvalidInputError(f"unknown estimator {estimator!r}")
        self.geom = geom
        self.estimator = estimator
        self.horizon = horizon
        self.grid_step = grid_step
        self.search_range = search_range
        self.refine = refine
        self.rssi_threshold = rssi_threshold
        self.sigma = sigma
        self.delay_grid = np.asarray(delay_grid, dtype=float)
        self.reject_edge = reject_edge
        self.windows: dict[str, BearingWindow] = {}
        self.dropped = 0
        self.rejected_edge = 0

    def process(self, packet: CsiPacket) -> BearingMeasurement | None:
        if not rssi_gate(packet, self.rssi_threshold):
            self.dropped += 1
            return None
        m = self._estimate(packet)
        if self.reject_edge and m.at_edge:
            self.rejected_edge += 1
            return None
        return m

    def _estimate(self, packet: CsiPacket) -> BearingMeasurement:
        if self.estimator == "grid2d":
            thetas = bearing_grid(self.geom, self.grid_step, self.search_range)
            res = grid2d_search(packet, self.geom, thetas, self.delay_grid)
            return BearingMeasurement(packet.timestamp, packet.ap_id, res.theta,
                                      bearing_sigma(self.sigma), res.evaluations, res.at_edge)
        w = self.windows.get(packet.ap_id)
        if w is None:
            w = self.windows[packet.ap_id] = BearingWindow(packet.ap_id, self.horizon)
        w.push(packet)
        return pcab_bearing(w, self.geom, self.grid_step, self.search_range, self.refine, self.sigma)

    def run(self, packets) -> list[BearingMeasurement]:
        out = []
        for p in packets:
            m = self.process(p)
            if m is not None:
                out.append(m)
        return out

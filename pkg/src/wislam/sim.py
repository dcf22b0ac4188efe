"""Ground-truth trajectories, corrupted odometry and CSI streams for a scenario."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CsiPacket, PathComponent, synth_channel, synth_rssi
from .errors import DataError
from .geometry import Pose, Tangent6, odom_predict, quat_canonical, quat_exp, quat_from_yaw, quat_multiply, wrap_angle
from .scenario import Scenario

# independent RNG stream ids (combined with the scenario seed)
_ODOM_STREAM = 1
_CSI_STREAM = 100


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass(frozen=True)
class _Segment:
    t0: float
    t1: float
    kind: str  # "move" | "turn"
    p0: np.ndarray
    p1: np.ndarray
    yaw0: float
    yaw1: float


class Trajectory:
    """Continuous-time piecewise path: straight moves at constant speed, in-place turns at constant yaw rate."""

    def __init__(self, waypoints, speed: float, turn_rate: float):
        w = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        if w.shape[0] < 2:
            raise DataError("need at least two waypoints")
        steps = np.diff(w, axis=0)
        lens = np.linalg.norm(steps, axis=1)
        if np.any(lens < 1e-12):
            raise DataError("consecutive waypoints must differ")
        self.segments: list[_Segment] = []
        t = 0.0
        yaw = float(np.arctan2(steps[0, 1], steps[0, 0]))
        for k in range(len(lens)):
            heading = float(np.arctan2(steps[k, 1], steps[k, 0]))
            turn = wrap_angle(heading - yaw)
            if abs(turn) > 1e-12:
                dur = abs(turn) / turn_rate
                self.segments.append(_Segment(t, t + dur, "turn", w[k], w[k], yaw, yaw + turn))
                t += dur
            yaw = yaw + turn
            dur = lens[k] / speed
            self.segments.append(_Segment(t, t + dur, "move", w[k], w[k + 1], yaw, yaw))
            t += dur
        self.duration = t

    def at(self, t: float) -> Pose:
        t = min(max(t, 0.0), self.duration)
        seg = self.segments[-1]
        for s in self.segments:
            if t <= s.t1:
                seg = s
                break
        u = 0.0 if seg.t1 == seg.t0 else (t - seg.t0) / (seg.t1 - seg.t0)
        xy = seg.p0 + u * (seg.p1 - seg.p0) if seg.kind == "move" else seg.p0
        yaw = seg.yaw0 + u * (seg.yaw1 - seg.yaw0)
        if u == 1.0 and seg.kind == "move":
            xy = seg.p1
        return Pose(np.array([xy[0], xy[1], 0.0]), quat_from_yaw(yaw))

    def sample_times(self, rate: float) -> np.ndarray:
        dt = 1.0 / rate
        n = int(np.floor(self.duration / dt + 1e-9))
        times = dt * np.arange(n + 1)
        if self.duration - times[-1] > 1e-9:
            times = np.append(times, self.duration)
        return times


def scenario_trajectory(scn: Scenario) -> Trajectory:
    return Trajectory(scn.waypoints, scn.speed, scn.turn_rate)


def anchor_pose(scn: Scenario) -> Pose:
    return scenario_trajectory(scn).at(0.0)


def generate_truth(scn: Scenario) -> list[tuple[float, Pose]]:
    """Ground-truth poses sampled at the odometry rate, including the final waypoint."""
    traj = scenario_trajectory(scn)
    if traj.duration <= 0:
        raise DataError("scenario has zero duration")
    return [(float(t), traj.at(t)) for t in traj.sample_times(scn.odom_rate)]


def corrupt_odometry(truth, noise: dict, seed: int) -> list[Tangent6]:
    """Relative-pose measurements between consecutive truth poses with Gaussian noise and yaw-rate bias.

    ``noise`` keys: sigma_t (m per step, scalar or 3-vector), sigma_r_deg
    (rotation noise per step, degrees), yaw_bias (rad/s).
    """
    if len(truth) < 2:
        raise DataError("need at least two truth poses")
    rng = _rng(seed, _ODOM_STREAM)
    st = np.broadcast_to(np.asarray(noise.get("sigma_t", 0.0), dtype=float), (3,))
    sr = np.deg2rad(np.broadcast_to(np.asarray(noise.get("sigma_r_deg", 0.0), dtype=float), (3,)))
    bias = float(noise.get("yaw_bias", 0.0))
    out = []
    for (ta, pa), (tb, pb) in zip(truth[:-1], truth[1:]):
        z = odom_predict(pa, pb)
        nt = st * rng.standard_normal(3)
        nr = sr * rng.standard_normal(3)
        nr[2] += bias * (tb - ta)
        dt = z.dt + nt
        if np.any(nr):
            dq = quat_canonical(np.append(z.dr, np.sqrt(max(0.0, 1.0 - z.dr @ z.dr))))
            dr = quat_canonical(quat_multiply(dq, quat_exp(nr)))[:3]
        else:
            dr = z.dr
        out.append(Tangent6(dt, dr))
    return out


def true_azimuth(pose: Pose, ap_xyz) -> float:
    d = pose.R.T @ (np.asarray(ap_xyz, dtype=float) - pose.t)
    return float(np.arctan2(d[1], d[0]))


def _ap_packets(scn: Scenario, traj: Trajectory, ap_index: int, times: np.ndarray) -> list[CsiPacket]:
    ap = scn.aps[ap_index]
    rng = _rng(scn.seed, _CSI_STREAM + ap_index)
    mp = scn.multipath
    K = int(mp["K"])
    amp_lo, amp_hi = mp["amplitude"]
    ext_lo, ext_hi = mp["extra_length"]
    jitter = float(mp.get("amplitude_jitter", 0.0))
    static = None
    if K and not mp.get("rerandomize", True):
        static = (rng.uniform(-np.pi, np.pi, K), rng.uniform(ext_lo, ext_hi, K), rng.uniform(amp_lo, amp_hi, K))
    nlos_rate = float(scn.nlos.get("rate", 0.0))
    rs = scn.rssi
    out = []
    for t in times:
        pose = traj.at(float(t))
        length = float(np.linalg.norm(ap.xyz - pose.t))
        theta = true_azimuth(pose, ap.xyz)
        nlos = nlos_rate > 0 and rng.random() < nlos_rate
        a0 = float(scn.nlos["direct_amplitude"]) if nlos else 1.0
        paths = [PathComponent(theta, length, a0)]
        if K:
            if static is None:
                th = rng.uniform(-np.pi, np.pi, K)
                ext = rng.uniform(ext_lo, ext_hi, K)
                amp = rng.uniform(amp_lo, amp_hi, K)
            else:
                th, ext, amp = static
                if jitter > 0:
                    amp = np.clip(amp * (1.0 + jitter * rng.standard_normal(K)), 0.0, None)
            paths += [PathComponent(float(th[k]), length + float(ext[k]), float(amp[k])) for k in range(K)]
        psi = float(rng.uniform(0.0, 2.0 * np.pi))
        H = synth_channel(paths, scn.array, scn.freqs, scn.wavelength, psi, scn.noise_std, rng)
        rssi = synth_rssi(length, float(rs["p0"]), float(rs["exponent"]), float(rs["shadow_sigma"]), rng)
        if nlos:
            rssi -= float(scn.nlos["rssi_drop"])
        out.append(CsiPacket(float(t), ap.ap_id, rssi, H, scn.wavelength, scn.freqs))
    return out


def generate_csi_stream(scn: Scenario, truth=None) -> list[CsiPacket]:
    """Per-AP CSI packets at ``csi_rate``, merged into one timestamp-ordered stream.

    ``truth`` is accepted for interface symmetry; packets are generated from
    the continuous trajectory so CSI and odometry rates may differ.
    """
    traj = scenario_trajectory(scn)
    times = traj.sample_times(scn.csi_rate)
    streams = [_ap_packets(scn, traj, k, times) for k in range(len(scn.aps))]
    merged = [(p.timestamp, k, n, p) for k, s in enumerate(streams) for n, p in enumerate(s)]
    merged.sort(key=lambda x: x[:3])
    return [m[3] for m in merged]


def dead_reckon(anchor: Pose, odometry) -> list[Pose]:
    from .geometry import odom_compose

    poses = [anchor]
    for z in odometry:
        poses.append(odom_compose(poses[-1], z))
    return poses

"""In-memory pipeline stages shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bearing import BearingEstimator, BearingMeasurement, bearing_grid
from .channel import CsiPacket
from .geometry import Pose, Tangent6
from .scenario import Scenario
from .sim import anchor_pose, corrupt_odometry, generate_csi_stream, generate_truth
from .wifigraph import WifiSlam, odom_sigma


@dataclass
class SimData:
    truth: list[tuple[float, Pose]]
    odom_times: np.ndarray
    odometry: list[Tangent6]
    packets: list[CsiPacket]


def simulate(scn: Scenario, with_csi: bool = True) -> SimData:
    truth = generate_truth(scn)
    odom = corrupt_odometry(truth, scn.odom_noise, scn.seed)
    times = np.array([t for t, _ in truth[1:]])
    packets = generate_csi_stream(scn, truth) if with_csi else []
    return SimData(truth, times, odom, packets)


def make_estimator(scn: Scenario, estimator: str | None = None, grid_step_deg: float | None = None,
                   rssi_threshold: float | None = None, refine: bool | None = None) -> BearingEstimator:
    b = scn.bearing
    step = np.deg2rad(b["grid_step_deg"] if grid_step_deg is None else grid_step_deg)
    delays = np.arange(0.0, float(b["delay_max_ns"]) * 1e-9 + 1e-15, float(b["delay_step_ns"]) * 1e-9)
    return BearingEstimator(
        scn.array,
        estimator=b["estimator"] if estimator is None else estimator,
        horizon=float(b["window"]),
        grid_step=step,
        refine=bool(b["refine"] if refine is None else refine),
        rssi_threshold=float(b["rssi_threshold"] if rssi_threshold is None else rssi_threshold),
        sigma=np.deg2rad(float(b["sigma_deg"])),
        delay_grid=delays,
    )


def estimate_bearings(scn: Scenario, packets, **kw) -> tuple[list[BearingMeasurement], BearingEstimator]:
    est = make_estimator(scn, **kw)
    return est.run(packets), est


def grid_evaluation_counts(scn: Scenario, estimator: BearingEstimator) -> dict[str, int]:
    """Objective evaluations per estimate for both estimators on this scenario's grids."""
    G = bearing_grid(scn.array, estimator.grid_step, estimator.search_range).size
    return {"pcab": int(G), "grid2d": int(G * estimator.delay_grid.size)}


def nearest_index(node_times: np.ndarray, t: float) -> int:
    k = int(np.searchsorted(node_times, t))
    if k == 0:
        return 0
    if k >= node_times.size:
        return node_times.size - 1
    return k if node_times[k] - t < t - node_times[k - 1] else k - 1


def run_slam(scn: Scenario, odom_times, odometry, bearings, rssi_samples, mode: str = "incremental",
             huber_c: float | None = None, t0: float = 0.0, on_trigger=None) -> WifiSlam:
    """Feed odometry, RSSI samples and bearings through a WifiSlam session in time order.

    Each bearing/RSSI sample attaches to the pose node nearest in time and
    becomes available once both it and that node exist.
    """
    g = scn.graph
    slam = WifiSlam(
        anchor_pose(scn),
        odom_sigma(np.asarray(g["odom_sigma_t"], dtype=float), np.deg2rad(np.asarray(g["odom_sigma_r_deg"], dtype=float))),
        huber_c=float(g["huber_c"] if huber_c is None else huber_c),
        mode=mode,
        trigger_every=int(g["trigger_every"]),
        fixed_lag=int(g["fixed_lag"]),
        rssi_half_width=int(g["rssi_half_width"]),
        init_radius=float(g["init_radius"]),
        seed=scn.seed,
        on_trigger=on_trigger,
    )
    slam.set_start_time(t0)
    node_times = np.concatenate([[t0], np.asarray(odom_times, dtype=float)])
    events = []
    for k, z in enumerate(odometry):
        events.append((node_times[k + 1], 0, k, ("odom", node_times[k + 1], z)))
    for n, (t, ap, rssi) in enumerate(rssi_samples):
        i = nearest_index(node_times, t)
        events.append((max(t, node_times[i]), 1, n, ("rssi", i, ap, rssi, t)))
    for n, m in enumerate(bearings):
        i = nearest_index(node_times, m.timestamp)
        events.append((max(m.timestamp, node_times[i]), 2, n, ("bearing", i, m)))
    events.sort(key=lambda e: e[:3])
    for *_, ev in events:
        if ev[0] == "odom":
            slam.add_odometry(ev[1], ev[2])
        elif ev[0] == "rssi":
            slam.add_rssi(ev[1], ev[2], ev[3], ev[4])
        else:
            m = ev[2]
            slam.add_bearing(ev[1], m.ap_id, m.theta, np.diag(m.sigma), m.timestamp)
    slam.finish()
    return slam

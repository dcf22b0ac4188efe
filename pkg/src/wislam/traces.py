"""Readers and writers for the run-directory file formats.

    truth.csv / trajectory.csv   t,x,y,z,qx,qy,qz,qw
    odometry.csv                 t,dx,dy,dz,rx,ry,rz   (t of the later pose)
    csi.jsonl                    {"t","ap_id","rssi","lambda","freqs","H"}; H rows are antennas,
                                 entries [re, im]
    bearings.csv                 t,ap_id,theta_rad,sigma   (sigma: std in radians)
    rssi.csv                     t,ap_id,rssi
    aps.csv / aps_truth.csv      ap_id,x,y,z
    bearing_evals.csv            t,ap_id,evaluations   (objective evaluations per estimate)
    evaluations.csv              estimator,evaluations_per_estimate
    trace.csv                    t,reason,n_poses,n_bearings,cost_before,cost_after,iterations

Floats are written with ``repr`` so every file round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .bearing import BearingMeasurement, bearing_sigma
from .channel import CsiPacket
from .errors import DataError
from .geometry import Pose, Tangent6

TRAJ_HEADER = ["t", "x", "y", "z", "qx", "qy", "qz", "qw"]
ODOM_HEADER = ["t", "dx", "dy", "dz", "rx", "ry", "rz"]
BEARING_HEADER = ["t", "ap_id", "theta_rad", "sigma"]
RSSI_HEADER = ["t", "ap_id", "rssi"]
AP_HEADER = ["ap_id", "x", "y", "z"]
BEARING_EVALS_HEADER = ["t", "ap_id", "evaluations"]
EVAL_HEADER = ["estimator", "evaluations_per_estimate"]
TRACE_HEADER = ["t", "reason", "n_poses", "n_bearings", "cost_before", "cost_after", "iterations"]


def _f(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer)) else _f(v) for v in r])


def read_csv(path: Path, header) -> list[list[str]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(header):
        raise DataError(f"{path.name}: expected header {','.join(header)}")
    return rows[1:]


def write_trajectory(path, samples) -> None:
    """``samples``: iterable of (t, Pose)."""
    write_csv(path, TRAJ_HEADER, ([t, *p.t, *p.q] for t, p in samples))


def read_trajectory(path) -> list[tuple[float, Pose]]:
    try:
        return [(float(r[0]), Pose(np.array(r[1:4], dtype=float), np.array(r[4:8], dtype=float)))
                for r in read_csv(path, TRAJ_HEADER)]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{Path(path).name}: {exc}") from exc


def write_odometry(path, times, odometry) -> None:
    write_csv(path, ODOM_HEADER, ([t, *z.dt, *z.dr] for t, z in zip(times, odometry)))


def read_odometry(path) -> tuple[np.ndarray, list[Tangent6]]:
    try:
        rows = read_csv(path, ODOM_HEADER)
        times = np.array([float(r[0]) for r in rows])
        return times, [Tangent6.from_vector(np.array(r[1:7], dtype=float)) for r in rows]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{Path(path).name}: {exc}") from exc


def packet_to_json(p: CsiPacket) -> str:
    H = [[[float(v.real), float(v.imag)] for v in row] for row in p.H]
    obj = {"t": float(p.timestamp), "ap_id": p.ap_id, "rssi": float(p.rssi), "lambda": float(p.wavelength),
           "freqs": [float(f) for f in p.freqs], "H": H}
    return json.dumps(obj, separators=(",", ":"))


def packet_from_json(line: str) -> CsiPacket:
    try:
        o = json.loads(line)
        H = np.array(o["H"], dtype=float)
        return CsiPacket(float(o["t"]), str(o["ap_id"]), float(o["rssi"]), H[..., 0] + 1j * H[..., 1],
                         float(o["lambda"]), np.array(o["freqs"], dtype=float))
    except (KeyError, ValueError, TypeError, IndexError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed CSI record: {exc}") from exc


def write_csi(path, packets) -> None:
    with open(path, "w") as fh:
        for p in packets:
            fh.write(packet_to_json(p))
            fh.write("\n")


def iter_csi(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield packet_from_json(line)


def read_csi(path) -> list[CsiPacket]:
    return list(iter_csi(path))


def write_bearings(path, measurements) -> None:
    write_csv(path, BEARING_HEADER, ([m.timestamp, m.ap_id, m.theta, m.sigma_std] for m in measurements))


def read_bearings(path) -> list[BearingMeasurement]:
    try:
        return [BearingMeasurement(float(r[0]), r[1], float(r[2]), bearing_sigma(float(r[3])))
                for r in read_csv(path, BEARING_HEADER)]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{Path(path).name}: {exc}") from exc


def write_rssi(path, samples) -> None:
    """``samples``: iterable of (t, ap_id, rssi)."""
    write_csv(path, RSSI_HEADER, samples)


def read_rssi(path) -> list[tuple[float, str, float]]:
    try:
        return [(float(r[0]), r[1], float(r[2])) for r in read_csv(path, RSSI_HEADER)]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{Path(path).name}: {exc}") from exc


def write_aps(path, aps: dict) -> None:
    write_csv(path, AP_HEADER, ([k, *np.asarray(v, dtype=float)] for k, v in sorted(aps.items())))


def read_aps(path) -> dict[str, np.ndarray]:
    try:
        return {r[0]: np.array(r[1:4], dtype=float) for r in read_csv(path, AP_HEADER)}
    except (ValueError, IndexError) as exc:
        raise DataError(f"{Path(path).name}: {exc}") from exc


def write_bearing_evals(path, measurements) -> None:
    write_csv(path, BEARING_EVALS_HEADER, ([m.timestamp, m.ap_id, int(m.evaluations)] for m in measurements))


def write_evaluations(path, counts: dict) -> None:
    write_csv(path, EVAL_HEADER, ([k, int(v)] for k, v in sorted(counts.items())))


def write_trace(path, records) -> None:
    write_csv(path, TRACE_HEADER, ([r.t, r.reason, int(r.n_poses), int(r.n_bearings), r.cost_before,
                                    r.cost_after, int(r.iterations)] for r in records))

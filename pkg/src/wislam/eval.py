"""Trajectory and bearing error metrics, and the plot-data report of a run directory."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import Pose, quat_from_yaw, quat_multiply, quat_conjugate, wrap_angle, yaw_of

BIN_DEG = 10.0
DEGRADED_FACTOR = 3.0


@dataclass
class ErrorSeries:
    t: np.ndarray
    translation: np.ndarray  # XY Euclidean, meters
    orientation: np.ndarray  # |yaw difference| wrapped to [0, 180], degrees
    geodesic: np.ndarray  # full rotation angle between quaternions, degrees

    def __len__(self):
        return self.t.size

    def summary(self) -> dict[str, float]:
        return {
            "translation_median": float(np.median(self.translation)),
            "translation_p90": float(np.percentile(self.translation, 90)),
            "orientation_median": float(np.median(self.orientation)),
            "orientation_p90": float(np.percentile(self.orientation, 90)),
        }


def _times(traj) -> np.ndarray:
    return np.array([t for t, _ in traj], dtype=float)


def yaw_error_deg(qa, qb) -> float:
    return abs(float(np.degrees(wrap_angle(yaw_of(qa) - yaw_of(qb)))))


def geodesic_deg(qa, qb) -> float:
    r = quat_multiply(quat_conjugate(qa), qb)
    return float(np.degrees(2.0 * np.arctan2(np.linalg.norm(r[:3]), abs(r[3]))))


def align_and_score(est, truth, dt: float | None = None) -> ErrorSeries:
    """Per-sample errors of ``est`` against the truth sample nearest in time.

    Both trajectories are lists of (t, Pose). Estimate samples farther than
    ``dt / 2`` from every truth sample are skipped (``dt`` defaults to the
    median truth spacing). No alignment transform is applied.
    """
    if not len(est) or not len(truth):
        raise DataError("empty trajectory")
    tt = _times(truth)
    order = np.argsort(tt, kind="stable")
    tt = tt[order]
    if dt is None:
        dt = float(np.median(np.diff(tt))) if tt.size > 1 else 0.0
    tol = 0.5 * dt + 1e-9
    ts, tr, ori, geo = [], [], [], []
    for t, p in est:
        k = int(np.searchsorted(tt, t))
        cand = [c for c in (k - 1, k) if 0 <= c < tt.size]
        c = min(cand, key=lambda c: abs(tt[c] - t))
        if abs(tt[c] - t) > tol:
            continue
        q = truth[order[c]][1]
        ts.append(t)
        tr.append(float(np.hypot(*(p.t[:2] - q.t[:2]))))
        ori.append(yaw_error_deg(p.q, q.q))
        geo.append(geodesic_deg(p.q, q.q))
    if not ts:
        raise DataError("estimated and true trajectories do not overlap in time")
    return ErrorSeries(np.array(ts), np.array(tr), np.array(ori), np.array(geo))


def cdf_points(values) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF: sorted values and the fraction of samples at or below each."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise DataError("no values for a CDF")
    return v, np.arange(1, v.size + 1) / v.size


def interpolate_pose(truth, t: float) -> Pose:
    """Planar pose at time ``t`` by linear interpolation of xy and yaw between truth samples."""
    tt = _times(truth)
    if t <= tt[0]:
        return truth[0][1]
    if t >= tt[-1]:
        return truth[-1][1]
    k = int(np.searchsorted(tt, t))
    (t0, a), (t1, b) = truth[k - 1], truth[k]
    u = (t - t0) / (t1 - t0)
    ya = a.yaw
    yaw = ya + u * wrap_angle(b.yaw - ya)
    return Pose(a.t + u * (b.t - a.t), quat_from_yaw(yaw))


def true_bearings(measurements, truth, aps: dict) -> np.ndarray:
    """Ground-truth azimuth for each measurement, from the interpolated truth pose."""
    out = np.empty(len(measurements))
    for n, m in enumerate(measurements):
        p = interpolate_pose(truth, m.timestamp)
        d = p.R.T @ (np.asarray(aps[m.ap_id], dtype=float) - p.t)
        out[n] = np.arctan2(d[1], d[0])
    return out


@dataclass
class BearingBins:
    lo: np.ndarray  # bin lower edges, degrees
    count: np.ndarray
    median: np.ndarray  # per-bin median error in degrees; nan for empty bins
    width: float = BIN_DEG

    def bin_of(self, angle_deg: float) -> int:
        return int(np.floor((angle_deg - self.lo[0]) / self.width))

    def degraded(self, factor: float = DEGRADED_FACTOR) -> np.ndarray:
        """Bins whose median exceeds ``factor`` times the median of the bin holding 0 degrees."""
        ref = self.median[self.bin_of(0.0)]
        with np.errstate(invalid="ignore"):
            return self.median > factor * ref

    def rows(self):
        for lo, n, med in zip(self.lo, self.count, self.median):
            yield lo, lo + self.width, int(n), med


def bearing_error_stats(estimated, true, width: float = BIN_DEG) -> BearingBins:
    """Wrapped |estimated - true| binned by the true angle over [-180, 180) degrees.

    Angles are radians in any convention, as long as both inputs share it.
    """
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(true, dtype=float)
    if est.size == 0 or est.shape != tru.shape:
        raise DataError("bearing error stats need matching, nonempty inputs")
    err = np.degrees(np.abs(wrap_angle(est - tru)))
    ang = np.degrees(wrap_angle(tru))
    lo = np.arange(-180.0, 180.0, width)
    idx = np.clip(np.floor((ang + 180.0) / width).astype(int), 0, lo.size - 1)
    count = np.bincount(idx, minlength=lo.size)
    med = np.full(lo.size, np.nan)
    for b in np.flatnonzero(count):
        med[b] = np.median(err[idx == b])
    return BearingBins(lo, count, med, width)


# -- report -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if np.isnan(x) else f"{x:.6f}"


def _write(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def emit_report(run_dir, out_dir=None) -> dict[str, Path]:
    """Write plot-data CSVs for a completed run directory into ``run_dir/report``.

    Needs truth.csv and trajectory.csv; bearings.csv with aps_truth.csv,
    trace.csv and evaluations.csv are used when present.
    """
    from . import traces

    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    truth = traces.read_trajectory(run_dir / "truth.csv")
    est = traces.read_trajectory(run_dir / "trajectory.csv")
    series = align_and_score(est, truth)
    written = {}

    p = out / "errors.csv"
    _write(p, ["t", "translation_m", "orientation_deg", "geodesic_deg"],
           zip(series.t, series.translation, series.orientation, series.geodesic))
    written["errors"] = p

    p = out / "error_cdf.csv"
    rows = []
    for name, vals in (("translation_m", series.translation), ("orientation_deg", series.orientation)):
        x, y = cdf_points(vals)
        rows += [(name, a, b) for a, b in zip(x, y)]
    _write(p, ["metric", "value", "fraction"], rows)
    written["error_cdf"] = p

    p = out / "summary.csv"
    s = series.summary()
    _write(p, ["metric", "value"], [(k, v) for k, v in s.items()] + [("samples", len(series))])
    written["summary"] = p

    if (run_dir / "bearings.csv").is_file() and (run_dir / "aps_truth.csv").is_file():
        ms = traces.read_bearings(run_dir / "bearings.csv")
        if ms:
            aps = traces.read_aps(run_dir / "aps_truth.csv")
            tb = true_bearings(ms, truth, aps)
            bins = bearing_error_stats([m.theta for m in ms], tb)
            flags = bins.degraded()
            p = out / "bearing_bins.csv"
            _write(p, ["lo_deg", "hi_deg", "count", "median_error_deg", "degraded"],
                   ((*r, int(f)) for r, f in zip(bins.rows(), flags)))
            written["bearing_bins"] = p

    if (run_dir / "trace.csv").is_file():
        rows = traces.read_csv(run_dir / "trace.csv", traces.TRACE_HEADER)
        p = out / "cost_trace.csv"
        _write(p, ["t", "cost_before", "cost_after", "iterations"],
               ((float(r[0]), float(r[4]), float(r[5]), int(r[6])) for r in rows))
        written["cost_trace"] = p

    if (run_dir / "evaluations.csv").is_file():
        rows = traces.read_csv(run_dir / "evaluations.csv", traces.EVAL_HEADER)
        counts = {r[0]: int(r[1]) for r in rows}
        base = counts.get("grid2d")
        p = out / "evaluations.csv"
        _write(p, ["estimator", "evaluations_per_estimate", "fraction_of_grid2d"],
               ((k, v, v / base if base else float("nan")) for k, v in sorted(counts.items())))
        written["evaluations"] = p
    return written

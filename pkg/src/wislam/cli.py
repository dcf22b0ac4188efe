"""Command-line driver: simulate -> bearings -> slam -> eval over a run directory.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure. Each command
writes into a staging directory that is moved into place on success or kept
under ``quarantine/<command>`` on failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, kernels, traces
from .errors import DataError, DegenerateGeometryError, DegenerateInputError, InvalidInputError, NumericalError
from .scenario import load_scenario_text, parse_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
MANIFEST = "manifest.json"
TIMINGS = "timings.json"
QUARANTINE = "quarantine"
SCENARIO_FILE = "scenario.yaml"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- run-directory plumbing ----------------------------------------------------

def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _tracked_files(run_dir: Path):
    skip = {MANIFEST, TIMINGS}
    for p in sorted(run_dir.rglob("*")):
        rel = p.relative_to(run_dir)
        if p.is_file() and rel.parts[0] not in skip and rel.parts[0] != QUARANTINE and not rel.parts[0].startswith("."):
            yield rel.as_posix(), p


def _components() -> dict:
    import scipy

    return {"wislam": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "kernels": kernels.BACKEND}


def update_manifest(run_dir: Path, stage: str, params: dict, seconds: float) -> dict:
    """Record ``stage`` and refresh every file checksum. Wall-clock timings go to a separate file."""
    path = run_dir / MANIFEST
    man = json.loads(path.read_text()) if path.is_file() else {}
    man["components"] = _components()
    man.setdefault("stages", {})[stage] = params
    for key in ("scenario", "seed"):
        if key in params:
            man[key] = params[key]
    man["files"] = {name: sha256(p) for name, p in _tracked_files(run_dir)}
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    tpath = run_dir / TIMINGS
    tim = json.loads(tpath.read_text()) if tpath.is_file() else {}
    tim[stage] = round(seconds, 6)
    tpath.write_text(json.dumps(tim, indent=2, sort_keys=True) + "\n")
    return man


@contextmanager
def staged(out_dir: Path, name: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = out_dir / f".partial-{name}"
    if stage.exists():
        shutil.rmtree(stage)
    stage.mkdir()
    try:
        yield stage
    except BaseException:
        dest = out_dir / QUARANTINE / name
        if dest.exists():
            shutil.rmtree(dest)
        dest.parent.mkdir(exist_ok=True)
        stage.rename(dest)
        raise
    for f in sorted(stage.rglob("*")):
        if f.is_file():
            target = out_dir / f.relative_to(stage)
            target.parent.mkdir(parents=True, exist_ok=True)
            f.replace(target)
    shutil.rmtree(stage)


def _run_scenario(run_dir: Path):
    path = run_dir / SCENARIO_FILE
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    return parse_scenario(path.read_text())


# -- commands -----------------------------------------------------------------

def cmd_simulate(config: str, out_dir: Path, seed: int | None = None) -> dict:
    from . import pipeline
    from .sim import scenario_trajectory

    t0 = time.perf_counter()
    scn = parse_scenario(load_scenario_text(config)).with_seed(seed)
    with staged(out_dir, "simulate") as st:
        (st / SCENARIO_FILE).write_text(scn.to_yaml())
        data = pipeline.simulate(scn)
        traces.write_trajectory(st / "truth.csv", data.truth)
        traces.write_odometry(st / "odometry.csv", data.odom_times, data.odometry)
        traces.write_csi(st / "csi.jsonl", data.packets)
        traces.write_aps(st / "aps_truth.csv", {a.ap_id: a.xyz for a in scn.aps})
    params = {"scenario": str(config), "seed": scn.seed, "duration": scenario_trajectory(scn).duration}
    return update_manifest(out_dir, "simulate", params, time.perf_counter() - t0)


def cmd_bearings(in_dir: Path, out_dir: Path | None = None, estimator: str | None = None,
                 grid_step_deg: float | None = None, rssi_threshold: float | None = None,
                 refine: bool | None = None) -> dict:
    from . import pipeline

    t0 = time.perf_counter()
    out_dir = in_dir if out_dir is None else out_dir
    scn = _run_scenario(in_dir)
    est = pipeline.make_estimator(scn, estimator, grid_step_deg, rssi_threshold, refine)
    with staged(out_dir, "bearings") as st:
        if out_dir != in_dir:
            shutil.copy(in_dir / SCENARIO_FILE, st / SCENARIO_FILE)
        rssi, bearings = [], []
        for p in traces.iter_csi(in_dir / "csi.jsonl"):
            rssi.append((p.timestamp, p.ap_id, p.rssi))
            m = est.process(p)
            if m is not None:
                bearings.append(m)
        traces.write_bearings(st / "bearings.csv", bearings)
        traces.write_rssi(st / "rssi.csv", rssi)
        traces.write_bearing_evals(st / "bearing_evals.csv", bearings)
        traces.write_evaluations(st / "evaluations.csv", pipeline.grid_evaluation_counts(scn, est))
    params = {"estimator": est.estimator, "grid_step_deg": float(np.degrees(est.grid_step)),
              "rssi_threshold": est.rssi_threshold, "refine": est.refine, "window": est.horizon,
              "kept": len(bearings), "gated": est.dropped, "edge_rejected": est.rejected_edge}
    return update_manifest(out_dir, "bearings", params, time.perf_counter() - t0)


def _node_times(t0: float, odom_times) -> np.ndarray:
    return np.concatenate([[t0], np.asarray(odom_times, dtype=float)])


def _emit_estimate(st: Path, slam, node_times) -> None:
    state = slam.state
    n = state.n_poses
    traces.write_trajectory(st / "trajectory.csv", ((node_times[i], state.pose(i)) for i in range(n)))
    traces.write_aps(st / "aps.csv", state.aps)


def cmd_slam(in_dir: Path, out_dir: Path | None = None, mode: str = "incremental",
             huber_c: float | None = None) -> dict:
    from . import pipeline
    from .wifigraph import total_cost

    t0 = time.perf_counter()
    out_dir = in_dir if out_dir is None else out_dir
    scn = _run_scenario(in_dir)
    times, odom = traces.read_odometry(in_dir / "odometry.csv")
    bearings = traces.read_bearings(in_dir / "bearings.csv")
    rssi = traces.read_rssi(in_dir / "rssi.csv")
    if not odom:
        raise DataError("odometry trace is empty")
    node_times = _node_times(0.0, times)
    with staged(out_dir, "slam") as st:
        if out_dir != in_dir:
            shutil.copy(in_dir / SCENARIO_FILE, st / SCENARIO_FILE)
        slam = pipeline.run_slam(scn, times, odom, bearings, rssi, mode=mode, huber_c=huber_c,
                                 on_trigger=lambda s: _emit_estimate(st, s, node_times[: s.state.n_poses]))
        cost = total_cost(slam.state)
        if not (np.isfinite(cost) and np.all(np.isfinite(slam.state.t))):
            raise NumericalError("optimization produced non-finite estimates")
        _emit_estimate(st, slam, node_times)
        traces.write_trace(st / "trace.csv", slam.trace)
    params = {"mode": mode, "huber_c": slam.huber_c, "final_cost": float(cost), "triggers": len(slam.trace),
              "aps_initialized": sorted(slam.state.aps)}
    return update_manifest(out_dir, "slam", params, time.perf_counter() - t0)


def cmd_eval(run_dir: Path, out_dir: Path | None = None) -> dict:
    from .eval import emit_report

    t0 = time.perf_counter()
    target = run_dir if out_dir is None else out_dir
    with staged(target, "eval") as st:
        written = emit_report(run_dir, st / "report")
    return update_manifest(target, "eval", {"report": sorted(written)}, time.perf_counter() - t0)


# -- argument parsing ---------------------------------------------------------

def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _bearing_flags(p):
    p.add_argument("--estimator", choices=["pcab", "grid2d"], default=None)
    p.add_argument("--grid-step-deg", type=float, default=None, help="bearing grid step (default 1)")
    p.add_argument("--rssi-threshold", type=float, default=None, help="gate threshold in dBm (default -65)")
    p.add_argument("--refine", action=argparse.BooleanOptionalAction, default=None,
                   help="polish grid peaks with Newton steps inside one cell")


def _slam_flags(p):
    p.add_argument("--mode", choices=["incremental", "batch", "fixed-lag"], default="incremental")
    p.add_argument("--huber-c", type=float, default=None, help="Huber threshold (default 1.345)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="wislam", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"wislam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write truth, odometry and CSI traces")
    p.add_argument("--config", required=True, help="scenario YAML path or built-in name")
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("bearings", help="estimate bearings from a CSI trace")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    _bearing_flags(p)

    p = sub.add_parser("slam", help="run the factor graph over odometry, RSSI and bearings")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    _slam_flags(p)

    p = sub.add_parser("eval", help="write the report CSVs of a run directory")
    p.add_argument("--in", dest="in_dir", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("run", help="simulate, bearings, slam and eval into one directory")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--out", required=True, type=Path)
    _bearing_flags(p)
    _slam_flags(p)
    return ap


def _dispatch(a) -> None:
    if a.command == "simulate":
        cmd_simulate(a.config, a.out, a.seed)
    elif a.command == "bearings":
        cmd_bearings(a.in_dir, a.out, a.estimator, a.grid_step_deg, a.rssi_threshold, a.refine)
    elif a.command == "slam":
        cmd_slam(a.in_dir, a.out, a.mode, a.huber_c)
    elif a.command == "eval":
        cmd_eval(a.in_dir, a.out)
    else:
        cmd_simulate(a.config, a.out, a.seed)
        cmd_bearings(a.out, None, a.estimator, a.grid_step_deg, a.rssi_threshold, a.refine)
        cmd_slam(a.out, None, a.mode, a.huber_c)
        cmd_eval(a.out)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"wislam: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        _dispatch(args)
    except (DataError, OSError, InvalidInputError, DegenerateInputError, DegenerateGeometryError) as exc:
        print(f"wislam: data error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"wislam: numerical failure: {_one_line(exc)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())

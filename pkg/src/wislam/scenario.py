"""Scenario configuration: YAML key/value files describing a synthetic world."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .channel import ArrayGeometry, default_wavelength, subcarrier_freqs
from .errors import DataError

DEFAULTS = {
    "name": "unnamed",
    "seed": 0,
    "waypoints": [[0.0, 0.0], [10.0, 0.0]],
    "speed": 1.0,
    "turn_rate_deg": 45.0,
    "odom_rate": 10.0,
    "csi_rate": 10.0,
    "aps": [],
    "array": {"kind": "square", "size_wavelengths": 0.375, "n": 4},
    "channel": {"center_freq": 5.21e9, "bandwidth": 40e6, "subcarriers": 32, "noise_std": 0.0},
    "multipath": {
        "K": 0,
        "amplitude": [0.1, 0.5],
        "extra_length": [1.0, 15.0],
        "rerandomize": True,
        "amplitude_jitter": 0.0,
    },
    "odom_noise": {"sigma_t": 0.0, "sigma_r_deg": 0.0, "yaw_bias": 0.0},
    "rssi": {"p0": -35.0, "exponent": 2.0, "shadow_sigma": 0.0},
    "nlos": {"rate": 0.0, "direct_amplitude": 0.05, "rssi_drop": 15.0},
    "bearing": {
        "estimator": "pcab",
        "window": 0.5,
        "grid_step_deg": 1.0,
        "sigma_deg": 5.0,
        "refine": False,
        "rssi_threshold": -65.0,
        "delay_max_ns": 200.0,
        "delay_step_ns": 1.0,
    },
    "graph": {
        "huber_c": 1.345,
        "trigger_every": 25,
        "fixed_lag": 200,
        "rssi_half_width": 2,
        "init_radius": 0.1,
        "odom_sigma_t": 0.01,
        "odom_sigma_r_deg": 0.2,
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ApSpec:
    ap_id: str
    position: np.ndarray  # (x, y)
    height: float

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1], self.height], dtype=float)


class Scenario:
    """Validated view over a scenario dictionary."""

    def __init__(self, cfg: dict):
        self.cfg = _merge(DEFAULTS, cfg)
        c = self.cfg
        self.name = str(c["name"])
        self.seed = int(c["seed"])
        self.waypoints = np.array(c["waypoints"], dtype=float).reshape(-1, 2)
        self.speed = float(c["speed"])
        self.turn_rate = np.deg2rad(float(c["turn_rate_deg"]))
        self.odom_rate = float(c["odom_rate"])
        self.csi_rate = float(c["csi_rate"])
        self.aps = [ApSpec(str(a["id"]), np.array(a["position"], dtype=float)[:2], float(a.get("height", 0.0)))
                    for a in c["aps"]]
        self.multipath = c["multipath"]
        self.odom_noise = c["odom_noise"]
        self.rssi = c["rssi"]
        self.nlos = c["nlos"]
        self.bearing = c["bearing"]
        self.graph = c["graph"]
        ch = c["channel"]
        self.center_freq = float(ch["center_freq"])
        self.wavelength = default_wavelength(self.center_freq)
        self.freqs = subcarrier_freqs(self.center_freq, float(ch["bandwidth"]), int(ch["subcarriers"]))
        self.noise_std = float(ch["noise_std"])
        self.array = _array_from_cfg(c["array"], self.wavelength)
        self._validate()

    def _validate(self):
        if self.speed <= 0 or self.odom_rate <= 0 or self.csi_rate <= 0 or self.turn_rate <= 0:
            raise DataError("speed, turn rate and sample rates must be positive")
        if self.waypoints.shape[0] < 2:
            raise DataError("need at least two waypoints")
        if int(self.multipath["K"]) < 0:
            raise DataError("multipath K must be nonnegative")
        if len({a.ap_id for a in self.aps}) != len(self.aps):
            raise DataError("duplicate AP ids")

    def with_seed(self, seed: int | None) -> "Scenario":
        if seed is None:
            return self
        return Scenario(_merge(self.cfg, {"seed": int(seed)}))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.cfg, sort_keys=True)

    @property
    def dt(self) -> float:
        return 1.0 / self.odom_rate


def _array_from_cfg(a: dict, wavelength: float) -> ArrayGeometry:
    kind = a.get("kind", "square")
    if kind == "square":
        return ArrayGeometry.square(float(a.get("size_wavelengths", 0.375)) * wavelength)
    if kind == "linear":
        return ArrayGeometry.linear(int(a.get("n", 4)), float(a.get("size_wavelengths", 0.5)) * wavelength)
    if kind == "custom":
        return ArrayGeometry(np.array(a["positions_wavelengths"], dtype=float) * wavelength)
    raise DataError(f"unknown array kind {kind!r}")


def builtin_names() -> list[str]:
    root = resources.files("wislam") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario_text(source: str | Path) -> str:
    """YAML text of a scenario given a path or a built-in scenario name."""
    p = Path(source)
    if p.is_file():
        return p.read_text()
    name = str(source)
    if name in builtin_names():
        return (resources.files("wislam") / "scenarios" / f"{name}.yaml").read_text()
    raise DataError(f"scenario config not found: {source}")


def parse_scenario(text: str) -> Scenario:
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DataError(f"malformed scenario config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise DataError("scenario config must be a mapping")
    return Scenario(cfg)


def load_scenario(source: str | Path) -> Scenario:
    return parse_scenario(load_scenario_text(source))

"""Multipath CSI synthesis for planar antenna arrays.

Angles are azimuths in the array (robot) frame measured from +x. For a
uniform linear array laid along +x the classical broadside angle, measured
from +y, is ``broadside = pi/2 - azimuth``; see :func:`broadside_to_azimuth`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

SPEED_OF_LIGHT = 299_792_458.0
CENTER_FREQ = 5.21e9  # 5 GHz WiFi channel 42
BANDWIDTH = 40e6
N_SUBCARRIERS = 32


def default_wavelength(center_freq: float = CENTER_FREQ) -> float:
    return SPEED_OF_LIGHT / center_freq


def subcarrier_freqs(center_freq: float = CENTER_FREQ, bandwidth: float = BANDWIDTH,
                     n: int = N_SUBCARRIERS) -> np.ndarray:
    """Evenly spaced subcarrier frequencies spanning ``bandwidth`` around ``center_freq``."""
    if n < 1:
        raise InvalidInputError("need at least one subcarrier")
    if n == 1:
        return np.array([float(center_freq)])
    return np.linspace(center_freq - bandwidth / 2, center_freq + bandwidth / 2, n)


def broadside_to_azimuth(theta_broadside):
    return np.pi / 2 - np.asarray(theta_broadside, dtype=float)


def azimuth_to_broadside(theta):
    return np.pi / 2 - np.asarray(theta, dtype=float)


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna offsets (X_m, Y_m) relative to antenna 0, in meters."""

    positions: np.ndarray
    kind: str = "custom"
    size: float = 0.0  # spacing for linear arrays, side length for square arrays

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        if pos.shape[0] < 1:
            raise InvalidInputError("array needs at least one antenna")
        if not np.array_equal(pos[0], [0.0, 0.0]):
            raise InvalidInputError("antenna 0 must sit at the origin")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def linear(cls, n: int, spacing: float) -> "ArrayGeometry":
        pos = np.zeros((n, 2))
        pos[:, 0] = np.arange(n) * spacing
        return cls(pos, "linear", float(spacing))

    @classmethod
    def square(cls, side: float) -> "ArrayGeometry":
        s = float(side)
        return cls(np.array([[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]]), "square", s)

    @property
    def n_antennas(self) -> int:
        return self.positions.shape[0]

    def default_search_range(self) -> tuple[float, float]:
        """Unambiguous azimuth interval for this array, radians."""
        if self.kind == "linear":
            # broadside [-90, 90] deg, i.e. the half plane on the +y side
            return 0.0, np.pi
        return np.deg2rad(-160.0), np.deg2rad(160.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size, "positions": self.positions.tolist()}


@dataclass(frozen=True)
class PathComponent:
    """One propagation path: azimuth ``theta`` (rad), ``length`` (m), real ``amplitude``."""

    theta: float
    length: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidInputError(f"path length must be positive, got {self.length}")
        if not self.amplitude >= 0:
            raise InvalidInputError(f"path amplitude must be nonnegative, got {self.amplitude}")

    @property
    def delay(self) -> float:
        return self.length / SPEED_OF_LIGHT


@dataclass
class CsiPacket:
    timestamp: float
    ap_id: str
    rssi: float
    H: np.ndarray  # (M antennas, N subcarriers) complex
    wavelength: float
    freqs: np.ndarray = field(default_factory=lambda: subcarrier_freqs())

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=np.complex128)
        self.freqs = np.asarray(self.freqs, dtype=float)
        if self.H.ndim != 2 or self.H.shape[1] != self.freqs.shape[0] or self.H.shape[1] < 1:
            raise InvalidInputError(f"H shape {self.H.shape} does not match {self.freqs.shape[0]} subcarriers")
        if not np.all(np.isfinite(self.H)):
            raise InvalidInputError("H has non-finite entries")


def steering_phases(geom: ArrayGeometry, theta, wavelength: float) -> np.ndarray:
    """phi_m(theta) = -(2 pi / lambda) (X_m cos theta + Y_m sin theta), shape (..., M)."""
    if not wavelength > 0:
        raise InvalidInputError("wavelength must be positive")
    theta = np.asarray(theta, dtype=float)[..., None]
    X, Y = geom.positions[:, 0], geom.positions[:, 1]
    return -(2.0 * np.pi / wavelength) * (X * np.cos(theta) + Y * np.sin(theta))


def steering_phase(geom: ArrayGeometry, m: int, theta: float, wavelength: float) -> float:
    if not 0 <= m < geom.n_antennas:
        raise InvalidInputError(f"antenna index {m} out of range for {geom.n_antennas} antennas")
    return float(steering_phases(geom, theta, wavelength)[m])


def steering_vector(geom: ArrayGeometry, theta, wavelength: float) -> np.ndarray:
    return np.exp(1j * steering_phases(geom, theta, wavelength))


def synth_channel(paths, geom: ArrayGeometry, freqs, wavelength: float, psi: float = 0.0,
                  noise_std: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Channel matrix H (M x N) of a sum of plane-wave paths with a global phase offset ``psi``."""
    paths = list(paths)
    if not paths:
        raise InvalidInputError("at least one path (the direct path) is required")
    freqs = np.asarray(freqs, dtype=float)
    thetas = np.array([p.theta for p in paths])
    lengths = np.array([p.length for p in paths])
    amps = np.array([p.amplitude for p in paths])
    A = np.exp(1j * steering_phases(geom, thetas, wavelength))  # (K, M)
    D = np.exp(-2j * np.pi * np.outer(lengths, freqs) / SPEED_OF_LIGHT)  # (K, N)
    H = (A.T * amps) @ D
    if psi != 0.0:
        H = H * np.exp(-1j * psi)
    if noise_std > 0.0:
        if rng is None:
            raise InvalidInputError("noise_std > 0 requires an rng")
        noise = rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
        H = H + noise * (noise_std / np.sqrt(2.0))
    return H


def synth_rssi(direct_path_length: float, p0: float = -35.0, exponent: float = 2.0,
               shadow_sigma: float = 0.0, rng: np.random.Generator | None = None) -> float:
    """Log-distance RSSI in dBm with optional Gaussian shadowing."""
    if not direct_path_length > 0:
        raise InvalidInputError("direct path length must be positive")
    rssi = p0 - 10.0 * exponent * np.log10(direct_path_length)
    if shadow_sigma > 0.0:
        if rng is None:
            raise InvalidInputError("shadow_sigma > 0 requires an rng")
        rssi += shadow_sigma * rng.standard_normal()
    return float(rssi)

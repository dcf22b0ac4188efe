"""WiFi-bearing SLAM: CSI synthesis, PCAB bearings, a Huber-robust factor graph and evaluation."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DataError,
    DegenerateGeometryError,
    DegenerateInputError,
    InvalidInputError,
    NumericalError,
    WislamError,
)
from .geometry import Pose, Tangent6  # noqa: F401

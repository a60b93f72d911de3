"""Uniform linear array geometry and steering vectors.

Directions use azimuth measured from +x in the xy-plane and elevation measured
from the horizontal plane, so that
    u = (cos el * cos az, cos el * sin az, sin el).
Element 0 sits on ArrayConfig.reference and is the phase reference.
"""
import math
import re
from collections import namedtuple
from typing import Sequence, Tuple

import numpy as np

SPEED_OF_LIGHT = 299792458.0

AXIS_NAMES = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
}
UNIT_NORM_TOL = 1e-12

_RE_ARRAY_DESCRIPTOR = re.compile(r"^ula:(?P<n>[^:]+):(?P<spacing>[^:]+):(?P<axis>.+)$")


class ArrayConfigError(ValueError):
    pass


def wavelength_of(frequency_hz: float) -> float:
    if frequency_hz is None or frequency_hz <= 0.0:
        raise ValueError("Frequency must be positive. f={f}".format(f=frequency_hz))
    return SPEED_OF_LIGHT / frequency_hz


def _as_point(p, name="point") -> Tuple[float, float, float]:
    p = tuple(float(v) for v in p)
    if len(p) != 3:
        raise ArrayConfigError("{name} must be a 3-vector. got={p}".format(name=name, p=p))
    return p


class Direction(namedtuple("Direction", ("az_rad", "el_rad"))):
    """Propagation direction as (azimuth, elevation) in radians."""

    __slots__ = ()

    def __new__(cls, az_rad, el_rad):
        az_rad, el_rad = float(az_rad), float(el_rad)
        if not -math.pi < az_rad <= math.pi:
            raise ValueError("Azimuth out of (-pi, pi]. az={az}".format(az=az_rad))
        if not -math.pi / 2 <= el_rad <= math.pi / 2:
            raise ValueError("Elevation out of [-pi/2, pi/2]. el={el}".format(el=el_rad))
        return super().__new__(cls, az_rad, el_rad)

    @property
    def unit_vector(self) -> np.ndarray:
        cos_el = math.cos(self.el_rad)
        return np.array(
            [
                cos_el * math.cos(self.az_rad),
                cos_el * math.sin(self.az_rad),
                math.sin(self.el_rad),
            ]
        )

    @property
    def az_deg(self) -> float:
        return math.degrees(self.az_rad)

    @property
    def el_deg(self) -> float:
        return math.degrees(self.el_rad)

    @classmethod
    def from_vector(cls, v) -> "Direction":
        """Direction of a (not necessarily normalized) non-zero 3-vector."""
        x, y, z = (float(c) for c in v)
        norm = math.sqrt(x * x + y * y + z * z)
        if norm == 0.0:
            raise ValueError("Cannot take the direction of a zero vector.")
        el = math.asin(max(-1.0, min(1.0, z / norm)))
        az = math.atan2(y, x)
        if az <= -math.pi:
            az += 2.0 * math.pi
        return cls(az, el)

    @classmethod
    def from_degrees(cls, az_deg, el_deg) -> "Direction":
        az = math.radians(az_deg)
        # -180 deg is a valid export value; fold it onto +180
        if az <= -math.pi:
            az += 2.0 * math.pi
        el = max(-math.pi / 2, min(math.pi / 2, math.radians(el_deg)))
        return cls(az, el)


class ArrayConfig(
    namedtuple("ArrayConfig", ("n_elements", "spacing_wl", "axis", "reference"))
):
    """Uniform linear array.

    Fields:
        n_elements:
            Number of elements (N_tx or N_rx).
        spacing_wl:
            Element spacing in wavelengths.
        axis:
            Unit 3-vector along which the elements are laid out.
        reference:
            Position of element 0 in meters.
    """

    __slots__ = ()

    def __new__(
        cls, n_elements, spacing_wl=0.5, axis=AXIS_NAMES["y"], reference=(0.0, 0.0, 0.0)
    ):
        if int(n_elements) != n_elements or n_elements < 1:
            raise ArrayConfigError(
                "n_elements must be an integer >= 1. n={n}".format(n=n_elements)
            )
        if not spacing_wl > 0.0:
            raise ArrayConfigError(
                "spacing_wl must be positive. spacing={s}".format(s=spacing_wl)
            )
        axis = _as_point(axis, name="axis")
        if abs(math.sqrt(sum(c * c for c in axis)) - 1.0) > UNIT_NORM_TOL:
            raise ArrayConfigError("axis must be a unit vector. axis={a}".format(a=axis))
        reference = _as_point(reference, name="reference")
        return super().__new__(
            cls, int(n_elements), float(spacing_wl), axis, reference
        )

    def with_reference(self, point) -> "ArrayConfig":
        return self._replace(reference=_as_point(point, name="reference"))

    def aperture_m(self, wavelength_m: float) -> float:
        """Full aperture (distance between the first and last element)."""
        return (self.n_elements - 1) * self.spacing_wl * wavelength_m


def parse_array_descriptor(s: str) -> ArrayConfig:
    """Parse `ula:<n>:<spacing_wl>:<axis>`.

    axis is one of x, y, z or an explicit `ux,uy,uz` (angle brackets optional),
    which is normalized to unit length.
    """
    m = _RE_ARRAY_DESCRIPTOR.match(s.strip())
    if not m:
        raise ArrayConfigError(
            "Invalid array descriptor (expected ula:<n>:<spacing_wl>:<axis>). "
            "s={s}".format(s=s)
        )
    try:
        n = int(m.group("n"))
        spacing = float(m.group("spacing"))
    except ValueError:
        raise ArrayConfigError("Invalid element count or spacing. s={s}".format(s=s))

    axis_str = m.group("axis").strip().strip("<>")
    if axis_str in AXIS_NAMES:
        axis = AXIS_NAMES[axis_str]
    else:
        try:
            v = [float(c) for c in axis_str.split(",")]
        except ValueError:
            raise ArrayConfigError("Invalid axis. s={s}".format(s=s))
        if len(v) != 3:
            raise ArrayConfigError("Axis must have 3 components. s={s}".format(s=s))
        norm = math.sqrt(sum(c * c for c in v))
        if norm == 0.0:
            raise ArrayConfigError("Axis must be non-zero. s={s}".format(s=s))
        axis = tuple(c / norm for c in v)
    return ArrayConfig(n, spacing, axis)


def format_array_descriptor(cfg: ArrayConfig) -> str:
    for name, axis in AXIS_NAMES.items():
        if cfg.axis == axis:
            axis_str = name
            break
    else:
        axis_str = ",".join(repr(c) for c in cfg.axis)
    return "ula:{n}:{s!r}:{a}".format(n=cfg.n_elements, s=cfg.spacing_wl, a=axis_str)


def element_positions(cfg: ArrayConfig, wavelength_m: float) -> np.ndarray:
    """Element positions as an (n_elements, 3) array in meters."""
    if not wavelength_m > 0.0:
        raise ValueError("wavelength_m must be positive. wl={wl}".format(wl=wavelength_m))
    k = np.arange(cfg.n_elements, dtype=float)[:, None]
    return np.asarray(cfg.reference) + k * (cfg.spacing_wl * wavelength_m) * np.asarray(
        cfg.axis
    )


def steering_vector(
    cfg: ArrayConfig, direction: Direction, wavelength_m: float
) -> np.ndarray:
    """Unit-norm response a_k = exp(-j 2pi/lambda <p_k - p_0, u>) / sqrt(N)."""
    offsets = element_positions(cfg, wavelength_m) - np.asarray(cfg.reference)
    phase = (2.0 * np.pi / wavelength_m) * (offsets @ direction.unit_vector)
    return np.exp(-1j * phase) / math.sqrt(cfg.n_elements)


def steering_matrix(
    cfg: ArrayConfig, directions: Sequence[Direction], wavelength_m: float
) -> np.ndarray:
    """Steering vectors of several directions stacked as columns."""
    if not directions:
        return np.zeros((cfg.n_elements, 0), dtype=complex)
    return np.stack(
        [steering_vector(cfg, d, wavelength_m) for d in directions], axis=1
    )

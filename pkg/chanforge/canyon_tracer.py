"""Image-source ray tracer for an urban canyon.

The canyon is two vertical walls y = wall_y0 and y = wall_y1 (infinite in x,
bounded in z by wall_height_m) plus an optional ground plane z = 0.
Paths are specular only; blockage is not modeled.
"""
import itertools
import json
import logging
import math
import multiprocessing
import os
from collections import namedtuple
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .array_geom import SPEED_OF_LIGHT, Direction, wavelength_of
from .ray_model import PairRecord, Ray, make_pair_record

logger = logging.getLogger(__name__)

ENV_NO_PARALLEL = "CHANFORGE_NO_PARALLEL"

DEFAULT_TX_ID = "TX1"
DEFAULT_REFL_COEFF = complex(-0.8, 0.0)
DEFAULT_RX_RANGES_M = (5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0, 125.0, 150.0, 200.0)

# interaction points must lie strictly between image and target
_SEGMENT_EPS = 1e-12
_EXTENT_TOL = 1e-9


class SceneError(ValueError):
    pass


Plane = namedtuple("Plane", ("name", "axis", "offset"))
Plane.__doc__ = """Axis-aligned reflecting plane {p : p[axis] == offset}."""


class Scene(
    namedtuple(
        "Scene",
        (
            "wall_y0",
            "wall_y1",
            "wall_height_m",
            "ground",
            "tx",
            "rx_list",
            "frequency_hz",
            "refl_coeff",
            "max_order",
            "tx_id",
        ),
        defaults=(DEFAULT_TX_ID,),
    )
):
    """Urban-canyon scene. rx_list is a tuple of (rx_id, (x, y, z))."""

    __slots__ = ()

    def __new__(
        cls,
        wall_y0,
        wall_y1,
        wall_height_m,
        ground,
        tx,
        rx_list,
        frequency_hz,
        refl_coeff=DEFAULT_REFL_COEFF,
        max_order=2,
        tx_id=DEFAULT_TX_ID,
    ):
        self = super().__new__(
            cls,
            float(wall_y0),
            float(wall_y1),
            float(wall_height_m),
            bool(ground),
            tuple(float(c) for c in tx),
            tuple((str(rx_id), tuple(float(c) for c in pos)) for rx_id, pos in rx_list),
            float(frequency_hz),
            complex(refl_coeff),
            int(max_order),
            str(tx_id),
        )
        self.validate()
        return self

    def validate(self):
        if not self.wall_y0 < self.wall_y1:
            raise SceneError(
                "wall_y0 must be < wall_y1. y0={y0}, y1={y1}".format(
                    y0=self.wall_y0, y1=self.wall_y1
                )
            )
        if not self.wall_height_m > 0.0:
            raise SceneError("wall_height_m must be positive.")
        if not self.frequency_hz > 0.0:
            raise SceneError("frequency_hz must be positive.")
        if abs(self.refl_coeff) > 1.0:
            raise SceneError(
                "|refl_coeff| must be <= 1. refl_coeff={g}".format(g=self.refl_coeff)
            )
        if self.max_order < 0:
            raise SceneError("max_order must be >= 0.")
        self._check_inside("tx", self.tx)
        ids = set()
        for rx_id, pos in self.rx_list:
            if rx_id in ids:
                raise SceneError("Duplicate receiver id. rx={r}".format(r=rx_id))
            ids.add(rx_id)
            self._check_inside(rx_id, pos)

    def _check_inside(self, name, p):
        if len(p) != 3:
            raise SceneError("{n} must be a 3D point. got={p}".format(n=name, p=p))
        if not (
            self.wall_y0 < p[1] < self.wall_y1 and 0.0 < p[2] < self.wall_height_m
        ):
            raise SceneError(
                "{n} must be strictly inside the canyon. pos={p}".format(n=name, p=p)
            )

    @property
    def wavelength_m(self) -> float:
        return wavelength_of(self.frequency_hz)

    @property
    def planes(self) -> Tuple[Plane, ...]:
        planes = [Plane("wall_y0", 1, self.wall_y0), Plane("wall_y1", 1, self.wall_y1)]
        if self.ground:
            planes.append(Plane("ground", 2, 0.0))
        return tuple(planes)

    @property
    def rx_ids(self) -> List[str]:
        return [rx_id for rx_id, _ in self.rx_list]

    def rx_position(self, rx_id: str) -> Tuple[float, float, float]:
        for i, pos in self.rx_list:
            if i == rx_id:
                return pos
        raise SceneError("Receiver not found in scene. rx={r}".format(r=rx_id))

    @property
    def center_y(self) -> float:
        return 0.5 * (self.wall_y0 + self.wall_y1)

    def with_receivers(self, rx_list) -> "Scene":
        return Scene(
            self.wall_y0,
            self.wall_y1,
            self.wall_height_m,
            self.ground,
            self.tx,
            rx_list,
            self.frequency_hz,
            self.refl_coeff,
            self.max_order,
            self.tx_id,
        )

    def with_max_order(self, max_order: int) -> "Scene":
        return Scene(*self[:8], max_order=max_order, tx_id=self.tx_id)


class TracedPath(
    namedtuple(
        "TracedPath",
        ("plane_sequence", "points", "length_m", "aod", "aoa", "gain", "refl_gain"),
        defaults=(1.0,),
    )
):
    """One specular path. points = (TX, interaction points..., RX).

    refl_gain is the accumulated reflection factor refl_coeff ** order.
    """

    __slots__ = ()

    @property
    def order(self) -> int:
        return len(self.plane_sequence)

    @property
    def interactions(self) -> Tuple:
        return self.points[1:-1]

    @property
    def delay_s(self) -> float:
        return self.length_m / SPEED_OF_LIGHT

    def to_ray(self) -> Ray:
        return Ray(
            gain=self.gain,
            delay_s=self.delay_s,
            aod_az_deg=self.aod.az_deg,
            aod_el_deg=self.aod.el_deg,
            aoa_az_deg=self.aoa.az_deg,
            aoa_el_deg=self.aoa.el_deg,
            n_bounces=self.order,
            path_length_m=self.length_m,
            interactions=self.interactions,
        )


def default_scene(rx_ranges_m: Sequence[float] = DEFAULT_RX_RANGES_M) -> Scene:
    """20 m wide, 40 m high canyon at 60 GHz with receivers on the canyon axis."""
    scene = Scene(
        wall_y0=0.0,
        wall_y1=20.0,
        wall_height_m=40.0,
        ground=True,
        tx=(0.0, 10.0, 10.0),
        rx_list=(),
        frequency_hz=60e9,
        refl_coeff=DEFAULT_REFL_COEFF,
        max_order=2,
    )
    return place_receivers(
        scene, rx_ranges_m, rx_ids=["RX{i}".format(i=i + 1) for i in range(len(rx_ranges_m))]
    )


def place_receivers(
    scene: Scene, distances_m: Sequence[float], rx_ids: Optional[Sequence[str]] = None
) -> Scene:
    """Replace the receivers by points on the canyon axis at the TX height,
    distances_m ahead of the TX along +x.
    """
    if rx_ids is None:
        rx_ids = ["D{k}".format(k=k + 1) for k in range(len(distances_m))]
    rx_list = [
        (rx_id, (scene.tx[0] + float(d), scene.center_y, scene.tx[2]))
        for rx_id, d in zip(rx_ids, distances_m)
    ]
    return scene.with_receivers(rx_list)


def scene_from_dict(d: Dict) -> Scene:
    try:
        refl = d.get("refl_coeff", [DEFAULT_REFL_COEFF.real, DEFAULT_REFL_COEFF.imag])
        return Scene(
            wall_y0=d["wall_y0"],
            wall_y1=d["wall_y1"],
            wall_height_m=d["wall_height_m"],
            ground=d.get("ground", True),
            tx=d["tx"],
            rx_list=[(rx["id"], rx["pos"]) for rx in d["rx"]],
            frequency_hz=d["frequency_hz"],
            refl_coeff=complex(refl[0], refl[1]),
            max_order=d.get("max_order", 2),
            tx_id=d.get("tx_id", DEFAULT_TX_ID),
        )
    except (KeyError, TypeError, IndexError) as e:
        raise SceneError("Invalid scene. missing or malformed field: {e}".format(e=e))


def scene_to_dict(scene: Scene) -> Dict:
    return {
        "wall_y0": scene.wall_y0,
        "wall_y1": scene.wall_y1,
        "wall_height_m": scene.wall_height_m,
        "ground": scene.ground,
        "tx_id": scene.tx_id,
        "tx": list(scene.tx),
        "rx": [{"id": rx_id, "pos": list(pos)} for rx_id, pos in scene.rx_list],
        "frequency_hz": scene.frequency_hz,
        "refl_coeff": [scene.refl_coeff.real, scene.refl_coeff.imag],
        "max_order": scene.max_order,
    }


def load_scene(path: str) -> Scene:
    with open(path, encoding="utf-8") as fp:
        d = json.load(fp)
    if not isinstance(d, dict):
        raise SceneError("Scene must be a JSON object. f={f}".format(f=path))
    return scene_from_dict(d)


def enumerate_image_sequences(scene: Scene, order: int) -> List[Tuple[Plane, ...]]:
    """All plane sequences of the given length without immediate repetition.

    Sequences are in lexicographic order of the scene's plane order; there are
    P * (P - 1) ** (order - 1) of them for order >= 1.
    """
    if order < 0:
        raise ValueError("order must be >= 0. order={o}".format(o=order))
    planes = scene.planes
    return [
        seq
        for seq in itertools.product(planes, repeat=order)
        if all(a != b for a, b in zip(seq, seq[1:]))
    ]


def mirror(point, plane: Plane) -> np.ndarray:
    p = np.array(point, dtype=float)
    p[plane.axis] = 2.0 * plane.offset - p[plane.axis]
    return p


def image_point(point, planes: Sequence[Plane]) -> np.ndarray:
    """Mirror a point successively through the planes."""
    p = np.array(point, dtype=float)
    for plane in planes:
        p = mirror(p, plane)
    return p


def _inside_extent(scene: Scene, p: np.ndarray) -> bool:
    return (
        scene.wall_y0 - _EXTENT_TOL <= p[1] <= scene.wall_y1 + _EXTENT_TOL
        and -_EXTENT_TOL <= p[2] <= scene.wall_height_m + _EXTENT_TOL
    )


def specular_path(scene: Scene, rx, seq: Sequence[Plane]) -> Optional[TracedPath]:
    """Image-source construction of the specular path through seq.

    Returns None when an interaction point falls outside the wall extents or
    the image-RX line does not cross the planes in order.
    """
    tx = np.array(scene.tx, dtype=float)
    rx = np.array(rx, dtype=float)

    images = [tx]
    for plane in seq:
        images.append(mirror(images[-1], plane))

    target = rx
    reversed_points = []
    for k in range(len(seq), 0, -1):
        plane = seq[k - 1]
        img = images[k]
        denom = target[plane.axis] - img[plane.axis]
        if denom == 0.0:
            return None
        t = (plane.offset - img[plane.axis]) / denom
        if not _SEGMENT_EPS < t < 1.0 - _SEGMENT_EPS:
            return None
        point = img + t * (target - img)
        point[plane.axis] = plane.offset
        if not _inside_extent(scene, point):
            return None
        reversed_points.append(point)
        target = point

    points = [tx] + reversed_points[::-1] + [rx]
    length = float(np.linalg.norm(rx - images[-1]))
    wavelength = scene.wavelength_m
    refl_gain = scene.refl_coeff ** len(seq)
    gain = (
        refl_gain
        * (wavelength / (4.0 * math.pi * length))
        * np.exp(-2j * math.pi * length / wavelength)
    )
    return TracedPath(
        plane_sequence=tuple(seq),
        points=tuple(tuple(float(c) for c in p) for p in points),
        length_m=length,
        aod=Direction.from_vector(points[1] - points[0]),
        aoa=Direction.from_vector(points[-1] - points[-2]),
        gain=complex(gain),
        refl_gain=complex(refl_gain),
    )


def trace_paths(scene: Scene, rx_id: str) -> List[TracedPath]:
    """All valid paths of order 0..max_order, strongest first (ties: shorter)."""
    rx = scene.rx_position(rx_id)
    paths = []
    for order in range(scene.max_order + 1):
        for seq in enumerate_image_sequences(scene, order):
            path = specular_path(scene, rx, seq)
            if path is not None:
                paths.append(path)
    paths.sort(key=lambda p: (-abs(p.gain), p.length_m))
    logger.debug(
        "trace: ({rx}) done. n_paths={n}".format(rx=rx_id, n=len(paths))
    )
    return paths


def trace_pair(scene: Scene, rx_id: str) -> PairRecord:
    rays = [p.to_ray() for p in trace_paths(scene, rx_id)]
    return make_pair_record(
        scene.tx_id, rx_id, rays, frequency_hz=scene.frequency_hz
    )


def tracer_worker(scene: Scene, rx_id: str) -> PairRecord:
    """Wrapper for trace_pair().
    This function is used for multiprocessing.starmap() which requires a picklable
    function outside the scope of a class.
    """
    return trace_pair(scene, rx_id)


def parallel_disabled() -> bool:
    return os.environ.get(ENV_NO_PARALLEL, "") not in ("", "0")


def map_receivers(fnc, scene: Scene, jobs: int = 1, extra_args: Tuple = ()) -> List:
    """Evaluate fnc(scene, rx_id, *extra_args) for every receiver.

    Results are in receiver order regardless of jobs.
    """
    args = [(scene, rx_id) + tuple(extra_args) for rx_id in scene.rx_ids]
    if jobs <= 1 or len(args) <= 1 or parallel_disabled():
        return [fnc(*a) for a in args]
    with multiprocessing.Pool(min(jobs, len(args))) as p:
        return p.starmap(fnc, args)


def trace_scene(scene: Scene, jobs: int = 1) -> List[PairRecord]:
    logger.info(
        "trace: started. n_rx={n}, max_order={o}, jobs={j}".format(
            n=len(scene.rx_list), o=scene.max_order, j=jobs
        )
    )
    records = map_receivers(tracer_worker, scene, jobs=jobs)
    logger.info(
        "trace: done. n_rays={n}".format(n=sum(len(r.rays) for r in records))
    )
    return records

"""The two channel constructions under comparison.

geometric_channel():
    H = sqrt(N_tx N_rx) sum_l alpha_l a_r(aoa_l) a_t(aod_l)^H
    over the L most prominent rays of a PairRecord.
full_array_channel():
    Per-element spherical-wave superposition over traced paths, using the
    exact per-element specular path length of each path.
"""
import json
import logging
import math
from collections import namedtuple
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .abspath import AbsPath
from .array_geom import ArrayConfig, element_positions, steering_vector, wavelength_of
from .canyon_tracer import Scene, TracedPath, image_point, map_receivers, trace_paths
from .ray_model import PairRecord, format_float, select_top_l

logger = logging.getLogger(__name__)

METHOD_GEOMETRIC = "geometric"
METHOD_FULL = "full"
METHODS = (METHOD_GEOMETRIC, METHOD_FULL)


class ChannelMatrix(
    namedtuple(
        "ChannelMatrix",
        (
            "entries",
            "method",
            "tx_cfg",
            "rx_cfg",
            "frequency_hz",
            "pair",
            "distance_m",
            "los",
        ),
        defaults=(None, None),
    )
):
    """Dense N_rx x N_tx complex channel with its provenance.

    tx_cfg/rx_cfg may be None for matrices read back from a channel set file,
    which only records the dimensions.
    """

    __slots__ = ()

    def __new__(
        cls,
        entries,
        method,
        tx_cfg,
        rx_cfg,
        frequency_hz,
        pair,
        distance_m=None,
        los=None,
    ):
        entries = np.array(entries, dtype=complex)
        if entries.ndim != 2:
            raise ValueError("entries must be 2D. shape={s}".format(s=entries.shape))
        if method not in METHODS:
            raise ValueError("Unknown method. method={m}".format(m=method))
        if rx_cfg is not None and entries.shape[0] != rx_cfg.n_elements:
            raise ValueError(
                "Row count {r} != N_rx {n}".format(r=entries.shape[0], n=rx_cfg.n_elements)
            )
        if tx_cfg is not None and entries.shape[1] != tx_cfg.n_elements:
            raise ValueError(
                "Column count {c} != N_tx {n}".format(
                    c=entries.shape[1], n=tx_cfg.n_elements
                )
            )
        entries.setflags(write=False)
        return super().__new__(
            cls,
            entries,
            method,
            tx_cfg,
            rx_cfg,
            frequency_hz,
            (str(pair[0]), str(pair[1])),
            distance_m,
            los,
        )

    @property
    def n_rx(self) -> int:
        return self.entries.shape[0]

    @property
    def n_tx(self) -> int:
        return self.entries.shape[1]

    @property
    def pair_label(self) -> str:
        return "{tx}:{rx}".format(tx=self.pair[0], rx=self.pair[1])


def geometric_channel(
    record: PairRecord,
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    l: Optional[int] = None,
) -> ChannelMatrix:
    """Narrowband geometric channel over the l most prominent rays.

    l=None uses every ray. The zero matrix is returned when no ray is kept.
    """
    if record.frequency_hz is None:
        raise ValueError(
            "Frequency is not set for pair {tx}:{rx}.".format(
                tx=record.tx_id, rx=record.rx_id
            )
        )
    if l is not None:
        record = select_top_l(record, l)
    wavelength = wavelength_of(record.frequency_hz)

    h = np.zeros((rx_cfg.n_elements, tx_cfg.n_elements), dtype=complex)
    scale = math.sqrt(tx_cfg.n_elements * rx_cfg.n_elements)
    for ray in record.rays:
        a_r = steering_vector(rx_cfg, ray.aoa, wavelength)
        a_t = steering_vector(tx_cfg, ray.aod, wavelength)
        h += (scale * ray.gain) * np.outer(a_r, a_t.conj())

    logger.debug(
        "synth: ({tx}:{rx}) geometric done. n_rays={n}, shape={s}".format(
            tx=record.tx_id, rx=record.rx_id, n=len(record.rays), s=h.shape
        )
    )
    return ChannelMatrix(
        entries=h,
        method=METHOD_GEOMETRIC,
        tx_cfg=tx_cfg,
        rx_cfg=rx_cfg,
        frequency_hz=record.frequency_hz,
        pair=(record.tx_id, record.rx_id),
        distance_m=record.los_distance_m,
        los=record.has_los,
    )


def full_array_channel(
    path_list: Sequence[TracedPath],
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    frequency_hz: float,
    pair: Tuple[str, str] = ("TX1", "RX1"),
    phase_only: bool = False,
    distance_m: Optional[float] = None,
) -> ChannelMatrix:
    """Spherical-wave channel from exact per-element path lengths.

    Entry (p, q) sums, over paths, refl^order * lambda / (4 pi d_pq) *
    exp(-j 2 pi d_pq / lambda) where d_pq is the distance from RX element p to
    the image of TX element q through the path's plane sequence.
    With phase_only the amplitude uses the reference-element length of the path.
    Array references should be placed at the traced TX/RX points.
    """
    wavelength = wavelength_of(frequency_hz)
    tx_pos = element_positions(tx_cfg, wavelength)
    rx_pos = element_positions(rx_cfg, wavelength)

    h = np.zeros((rx_cfg.n_elements, tx_cfg.n_elements), dtype=complex)
    for path in path_list:
        if len(path.points) != path.order + 2:
            raise ValueError(
                "Path lacks interaction geometry. order={o}, n_points={n}".format(
                    o=path.order, n=len(path.points)
                )
            )
        images = np.array([image_point(t, path.plane_sequence) for t in tx_pos])
        d = np.linalg.norm(rx_pos[:, None, :] - images[None, :, :], axis=2)
        amplitude = wavelength / (4.0 * math.pi * (path.length_m if phase_only else d))
        h += path.refl_gain * amplitude * np.exp(-2j * math.pi * d / wavelength)

    logger.debug(
        "fullsim: ({p}) done. n_paths={n}, shape={s}".format(
            p=":".join(pair), n=len(path_list), s=h.shape
        )
    )
    los = any(p.order == 0 for p in path_list)
    if distance_m is None:
        for p in path_list:
            if p.order == 0:
                distance_m = p.length_m
    return ChannelMatrix(
        entries=h,
        method=METHOD_FULL,
        tx_cfg=tx_cfg,
        rx_cfg=rx_cfg,
        frequency_hz=frequency_hz,
        pair=pair,
        distance_m=distance_m,
        los=los,
    )


def fresnel_error_bound(
    tx_cfg: ArrayConfig, rx_cfg: ArrayConfig, distance_m: float, wavelength_m: float
) -> float:
    """Upper bound on the phase-aligned relative Frobenius error between the
    spherical-wave and plane-wave channels of a single LOS path.

    b = 2 sin(min(pi, pi (A_t + A_r)^2 / (2 lambda d)) / 2)
    """
    aperture = tx_cfg.aperture_m(wavelength_m) + rx_cfg.aperture_m(wavelength_m)
    if not distance_m > aperture:
        raise ValueError(
            "Distance must exceed the summed apertures. d={d}, A={a}".format(
                d=distance_m, a=aperture
            )
        )
    phase = min(math.pi, math.pi * aperture ** 2 / (2.0 * wavelength_m * distance_m))
    return 2.0 * math.sin(phase / 2.0)


def singular_values(h: ChannelMatrix) -> np.ndarray:
    return np.linalg.svd(h.entries, compute_uv=False)


def numerical_rank(h: ChannelMatrix, rtol: float = 1e-10) -> int:
    s = singular_values(h)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s / s[0] > rtol))


def _matrix_json(m: np.ndarray, indent: str) -> str:
    rows = [
        indent + "    [" + ", ".join(format_float(v) for v in row) + "]" for row in m
    ]
    return "[\n" + ",\n".join(rows) + "\n" + indent + "]"


def _channel_json(h: ChannelMatrix) -> str:
    pad = "        "
    fields = [
        ("pair", json.dumps(list(h.pair))),
        ("method", json.dumps(h.method)),
        ("n_rx", str(h.n_rx)),
        ("n_tx", str(h.n_tx)),
        (
            "frequency_hz",
            "null" if h.frequency_hz is None else format_float(h.frequency_hz),
        ),
    ]
    if h.distance_m is not None:
        fields.append(("distance_m", format_float(h.distance_m)))
    if h.los is not None:
        fields.append(("los", json.dumps(bool(h.los))))
    fields.append(("entries_re", _matrix_json(h.entries.real, pad)))
    fields.append(("entries_im", _matrix_json(h.entries.imag, pad)))
    body = ",\n".join(
        '{pad}"{k}": {v}'.format(pad=pad, k=k, v=v) for k, v in fields
    )
    return "    {\n" + body + "\n    }"


def channels_to_json(channels: Sequence[ChannelMatrix]) -> str:
    """Canonical channel set JSON text (row-major, 17 significant digits)."""
    if not channels:
        return "[]\n"
    return "[\n" + ",\n".join(_channel_json(h) for h in channels) + "\n]\n"


def channel_from_dict(d: dict) -> ChannelMatrix:
    try:
        entries = np.array(d["entries_re"], dtype=float) + 1j * np.array(
            d["entries_im"], dtype=float
        )
        entries = entries.reshape(int(d["n_rx"]), int(d["n_tx"]))
        return ChannelMatrix(
            entries=entries,
            method=d["method"],
            tx_cfg=None,
            rx_cfg=None,
            frequency_hz=d.get("frequency_hz"),
            pair=tuple(d["pair"]),
            distance_m=d.get("distance_m"),
            los=d.get("los"),
        )
    except (KeyError, TypeError) as e:
        raise ValueError("Invalid channel entry: {e}".format(e=e))


def write_channels(channels: Sequence[ChannelMatrix], path: str, no_lock: bool = False):
    AbsPath(path).write(channels_to_json(channels), no_lock=no_lock)


def read_channels(path: str) -> List[ChannelMatrix]:
    with open(path, encoding="utf-8") as fp:
        d = json.load(fp)
    if not isinstance(d, list):
        raise ValueError("Channel set must be a JSON array. f={f}".format(f=path))
    return [channel_from_dict(c) for c in d]


def place_arrays(
    scene: Scene, rx_id: str, tx_cfg: ArrayConfig, rx_cfg: ArrayConfig
) -> Tuple[ArrayConfig, ArrayConfig]:
    """Put element 0 of each array on the scene's TX/RX point."""
    return tx_cfg.with_reference(scene.tx), rx_cfg.with_reference(scene.rx_position(rx_id))


def fullsim_pair(
    scene: Scene,
    rx_id: str,
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    phase_only: bool = False,
    drop_los: bool = False,
) -> ChannelMatrix:
    """Trace one receiver and build its full-array channel.

    This function is also used for multiprocessing.starmap() which requires a
    picklable function outside the scope of a class.
    """
    paths = trace_paths(scene, rx_id)
    if drop_los:
        paths = [p for p in paths if p.order > 0]
    tx_cfg, rx_cfg = place_arrays(scene, rx_id, tx_cfg, rx_cfg)
    los_distance = float(
        np.linalg.norm(np.subtract(scene.rx_position(rx_id), scene.tx))
    )
    return full_array_channel(
        paths,
        tx_cfg,
        rx_cfg,
        scene.frequency_hz,
        pair=(scene.tx_id, rx_id),
        phase_only=phase_only,
        distance_m=los_distance,
    )


def fullsim_scene(
    scene: Scene,
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    phase_only: bool = False,
    drop_los: bool = False,
    jobs: int = 1,
) -> List[ChannelMatrix]:
    logger.info(
        "fullsim: started. n_rx={n}, n_tx_elem={t}, n_rx_elem={r}, jobs={j}".format(
            n=len(scene.rx_list), t=tx_cfg.n_elements, r=rx_cfg.n_elements, j=jobs
        )
    )
    return map_receivers(
        fullsim_pair,
        scene,
        jobs=jobs,
        extra_args=(tx_cfg, rx_cfg, phase_only, drop_los),
    )


def synth_records(
    records: Sequence[PairRecord],
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    l: Optional[int] = None,
) -> List[ChannelMatrix]:
    logger.info(
        "synth: started. n_pairs={n}, top_l={l}".format(n=len(records), l=l)
    )
    return [geometric_channel(rec, tx_cfg, rx_cfg, l) for rec in records]

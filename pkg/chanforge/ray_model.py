"""Per-ray propagation data and per-pair summaries.

Ray CSV schema (UTF-8, header required):
    tx_id,rx_id,ray_idx,gain_re,gain_im,delay_ns,aod_az_deg,aod_el_deg,
    aoa_az_deg,aoa_el_deg,n_bounces,path_length_m,interactions

Pair summaries (mean_toa_s, p_tx_w, p_rx_w, frequency_hz) live in a sidecar
JSON keyed by "tx_id:rx_id".
"""
import csv
import io
import json
import logging
import os
from collections import namedtuple
from typing import Dict, List, Optional, Sequence, Tuple

from .abspath import AbsPath
from .array_geom import SPEED_OF_LIGHT, Direction

logger = logging.getLogger(__name__)

RAY_CSV_COLUMNS = (
    "tx_id",
    "rx_id",
    "ray_idx",
    "gain_re",
    "gain_im",
    "delay_ns",
    "aod_az_deg",
    "aod_el_deg",
    "aoa_az_deg",
    "aoa_el_deg",
    "n_bounces",
    "path_length_m",
    "interactions",
)
SUMMARY_EXT = ".summary.json"
DEFAULT_P_TX_W = 1.0

PATH_LENGTH_RTOL = 1e-6
SUMMARY_RTOL = 1e-9

# delays are written in ns with 15 digits so that ns -> s -> ns is stable
_FMT_FLOAT = "{:.17g}"
_FMT_DELAY_NS = "{:.15g}"


class RayFileError(ValueError):
    pass


def format_float(x: float) -> str:
    return _FMT_FLOAT.format(x)


class Ray(
    namedtuple(
        "Ray",
        (
            "gain",
            "delay_s",
            "aod_az_deg",
            "aod_el_deg",
            "aoa_az_deg",
            "aoa_el_deg",
            "n_bounces",
            "path_length_m",
            "interactions",
        ),
        defaults=(None, None),
    )
):
    """One propagation path.

    gain is the full complex amplitude (propagation phase included).
    interactions, when present, is a tuple of n_bounces 3D points.
    """

    __slots__ = ()

    def __new__(
        cls,
        gain,
        delay_s,
        aod_az_deg,
        aod_el_deg,
        aoa_az_deg,
        aoa_el_deg,
        n_bounces=0,
        path_length_m=None,
        interactions=None,
    ):
        if interactions is not None:
            interactions = tuple(tuple(float(c) for c in p) for p in interactions)
            if not interactions and not n_bounces:
                interactions = None
        self = super().__new__(
            cls,
            complex(gain),
            float(delay_s),
            float(aod_az_deg),
            float(aod_el_deg),
            float(aoa_az_deg),
            float(aoa_el_deg),
            int(n_bounces),
            None if path_length_m is None else float(path_length_m),
            interactions,
        )
        self.validate()
        return self

    def validate(self):
        for name in ("aod_az_deg", "aoa_az_deg"):
            v = getattr(self, name)
            if not -180.0 < v <= 180.0:
                raise ValueError("{n} out of (-180, 180]. value={v}".format(n=name, v=v))
        for name in ("aod_el_deg", "aoa_el_deg"):
            v = getattr(self, name)
            if not -90.0 <= v <= 90.0:
                raise ValueError("{n} out of [-90, 90]. value={v}".format(n=name, v=v))
        if not self.delay_s >= 0.0:
            raise ValueError("delay_s must be >= 0. value={v}".format(v=self.delay_s))
        if self.n_bounces < 0:
            raise ValueError("n_bounces must be >= 0. value={v}".format(v=self.n_bounces))
        if self.path_length_m is not None:
            if not self.path_length_m > 0.0:
                raise ValueError(
                    "path_length_m must be positive. value={v}".format(
                        v=self.path_length_m
                    )
                )
            mismatch = abs(self.path_length_m - self.delay_s * SPEED_OF_LIGHT)
            if mismatch / self.path_length_m >= PATH_LENGTH_RTOL:
                raise ValueError(
                    "path_length_m inconsistent with delay_s. "
                    "length={l}, delay*c={dc}".format(
                        l=self.path_length_m, dc=self.delay_s * SPEED_OF_LIGHT
                    )
                )
        if self.interactions is not None:
            if len(self.interactions) != self.n_bounces:
                raise ValueError(
                    "interactions has {k} points but n_bounces={n}".format(
                        k=len(self.interactions), n=self.n_bounces
                    )
                )
            for p in self.interactions:
                if len(p) != 3:
                    raise ValueError("interaction point must be 3D. p={p}".format(p=p))

    @property
    def power(self) -> float:
        return abs(self.gain) ** 2

    @property
    def is_los(self) -> bool:
        return self.n_bounces == 0

    @property
    def aod(self) -> Direction:
        return Direction.from_degrees(self.aod_az_deg, self.aod_el_deg)

    @property
    def aoa(self) -> Direction:
        return Direction.from_degrees(self.aoa_az_deg, self.aoa_el_deg)


class PairRecord(
    namedtuple(
        "PairRecord",
        ("tx_id", "rx_id", "rays", "mean_toa_s", "p_tx_w", "p_rx_w", "frequency_hz"),
    )
):
    """Rays and summary quantities of one (TX m, RX n) pair.

    Use make_pair_record() to build one so that the summaries stay consistent.
    """

    __slots__ = ()

    @property
    def has_los(self) -> bool:
        return any(r.is_los for r in self.rays)

    @property
    def los_distance_m(self) -> Optional[float]:
        for r in self.rays:
            if r.is_los:
                if r.path_length_m is not None:
                    return r.path_length_m
                return r.delay_s * SPEED_OF_LIGHT
        return None


def mean_toa(rays: Sequence[Ray]) -> float:
    """Power-weighted mean delay. Unweighted mean if all gains are zero."""
    if not rays:
        return 0.0
    total = 0.0
    weighted = 0.0
    for r in rays:
        total += r.power
        weighted += r.power * r.delay_s
    if total == 0.0:
        return sum(r.delay_s for r in rays) / len(rays)
    toa = weighted / total
    # keep inside [min, max] against rounding
    return min(max(toa, min(r.delay_s for r in rays)), max(r.delay_s for r in rays))


def total_power_gain(rays: Sequence[Ray]) -> float:
    total = 0.0
    for r in rays:
        total += r.power
    return total


def make_pair_record(
    tx_id: str,
    rx_id: str,
    rays: Sequence[Ray],
    p_tx_w: float = DEFAULT_P_TX_W,
    frequency_hz: Optional[float] = None,
) -> PairRecord:
    rays = tuple(rays)
    return PairRecord(
        tx_id=str(tx_id),
        rx_id=str(rx_id),
        rays=rays,
        mean_toa_s=mean_toa(rays),
        p_tx_w=float(p_tx_w),
        p_rx_w=float(p_tx_w) * total_power_gain(rays),
        frequency_hz=None if frequency_hz is None else float(frequency_hz),
    )


def select_top_l(record: PairRecord, l: int) -> PairRecord:
    """Keep the l most prominent rays (largest |gain|).

    Ties go to the smaller delay, then to the earlier ray. Kept rays stay in
    their original order and the summaries are recomputed over them.
    """
    if l < 0:
        raise ValueError("l must be >= 0. l={l}".format(l=l))
    if l >= len(record.rays):
        keep = record.rays
    else:
        ranked = sorted(
            range(len(record.rays)),
            key=lambda i: (-abs(record.rays[i].gain), record.rays[i].delay_s, i),
        )
        kept_idx = sorted(ranked[:l])
        keep = tuple(record.rays[i] for i in kept_idx)
    return make_pair_record(
        record.tx_id,
        record.rx_id,
        keep,
        p_tx_w=record.p_tx_w,
        frequency_hz=record.frequency_hz,
    )


def drop_los(record: PairRecord) -> PairRecord:
    """Remove the direct (zero-bounce) rays to emulate an NLOS receiver."""
    return make_pair_record(
        record.tx_id,
        record.rx_id,
        [r for r in record.rays if not r.is_los],
        p_tx_w=record.p_tx_w,
        frequency_hz=record.frequency_hz,
    )


def summary_path_for(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + SUMMARY_EXT


def pair_key(tx_id: str, rx_id: str) -> str:
    return "{tx}:{rx}".format(tx=tx_id, rx=rx_id)


def _format_interactions(points: Optional[Tuple]) -> str:
    if not points:
        return ""
    return ";".join(" ".join(format_float(c) for c in p) for p in points)


def _parse_interactions(s: str) -> Optional[Tuple]:
    s = s.strip()
    if not s:
        return None
    points = []
    for chunk in s.split(";"):
        coords = chunk.split()
        if len(coords) != 3:
            raise ValueError("interaction point must have 3 coordinates. got={c}".format(c=chunk))
        points.append(tuple(float(c) for c in coords))
    return tuple(points)


def rays_to_csv(records: Sequence[PairRecord]) -> str:
    """Canonical CSV text of records (header only for an empty list)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RAY_CSV_COLUMNS)
    for rec in records:
        for idx, r in enumerate(rec.rays, start=1):
            writer.writerow(
                (
                    rec.tx_id,
                    rec.rx_id,
                    idx,
                    format_float(r.gain.real),
                    format_float(r.gain.imag),
                    _FMT_DELAY_NS.format(r.delay_s * 1e9),
                    format_float(r.aod_az_deg),
                    format_float(r.aod_el_deg),
                    format_float(r.aoa_az_deg),
                    format_float(r.aoa_el_deg),
                    r.n_bounces,
                    "" if r.path_length_m is None else format_float(r.path_length_m),
                    _format_interactions(r.interactions),
                )
            )
    return buf.getvalue()


def summary_to_json(records: Sequence[PairRecord]) -> str:
    d = {}
    for rec in records:
        d[pair_key(rec.tx_id, rec.rx_id)] = {
            "mean_toa_s": rec.mean_toa_s,
            "p_tx_w": rec.p_tx_w,
            "p_rx_w": rec.p_rx_w,
            "frequency_hz": rec.frequency_hz,
        }
    return json.dumps(d, indent=4) + "\n"


def write_rays(
    records: Sequence[PairRecord],
    path: str,
    summary_path: Optional[str] = None,
    no_lock: bool = False,
):
    """Writes the ray CSV and its summary sidecar (default <stem>.summary.json)."""
    if summary_path is None:
        summary_path = summary_path_for(path)
    AbsPath(path).write(rays_to_csv(records), no_lock=no_lock)
    AbsPath(summary_path).write(summary_to_json(records), no_lock=no_lock)
    logger.debug(
        "write_rays: done. n_pairs={n}, path={p}, summary={s}".format(
            n=len(records), p=path, s=summary_path
        )
    )


def read_summary(summary_path: str) -> Dict[str, Dict]:
    with open(summary_path, encoding="utf-8") as fp:
        d = json.load(fp)
    if not isinstance(d, dict):
        raise RayFileError(
            "Summary must be a JSON object keyed by tx_id:rx_id. f={f}".format(
                f=summary_path
            )
        )
    return d


def _row_to_ray(row: List[str], line_no: int) -> Tuple[str, str, int, Ray]:
    values = dict(zip(RAY_CSV_COLUMNS, row))
    try:
        n_bounces = int(values["n_bounces"])
        path_length = values["path_length_m"].strip()
        ray = Ray(
            gain=complex(float(values["gain_re"]), float(values["gain_im"])),
            delay_s=float(values["delay_ns"]) * 1e-9,
            aod_az_deg=float(values["aod_az_deg"]),
            aod_el_deg=float(values["aod_el_deg"]),
            aoa_az_deg=float(values["aoa_az_deg"]),
            aoa_el_deg=float(values["aoa_el_deg"]),
            n_bounces=n_bounces,
            path_length_m=float(path_length) if path_length else None,
            interactions=_parse_interactions(values["interactions"]),
        )
        return values["tx_id"], values["rx_id"], int(values["ray_idx"]), ray
    except ValueError as e:
        raise RayFileError(
            "Malformed row at line {n}. pair={p}, {e}".format(
                n=line_no,
                p=pair_key(values.get("tx_id", ""), values.get("rx_id", "")),
                e=e,
            )
        )


def parse_rays(path: str, summary_path: Optional[str] = None) -> List[PairRecord]:
    """Read a ray CSV into PairRecords grouped by (tx_id, rx_id).

    Pairs appear in order of first appearance; ray order follows the file.
    p_tx_w and frequency_hz come from the summary sidecar when one exists
    (explicit summary_path or <stem>.summary.json).
    """
    with open(path, encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        try:
            header = next(reader)
        except StopIteration:
            raise RayFileError("Missing header. f={f}".format(f=path))
        if tuple(c.strip() for c in header) != RAY_CSV_COLUMNS:
            unknown = sorted(set(header) - set(RAY_CSV_COLUMNS))
            raise RayFileError(
                "Header mismatch at line 1. unknown={u}, expected={e}".format(
                    u=unknown, e=",".join(RAY_CSV_COLUMNS)
                )
            )

        grouped: Dict[Tuple[str, str], List[Ray]] = {}
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RAY_CSV_COLUMNS):
                raise RayFileError(
                    "Malformed row at line {n}: expected {e} fields, got {g}".format(
                        n=line_no, e=len(RAY_CSV_COLUMNS), g=len(row)
                    )
                )
            tx_id, rx_id, ray_idx, ray = _row_to_ray(row, line_no)
            key = (tx_id, rx_id, ray_idx)
            if key in seen:
                raise RayFileError(
                    "Duplicate ray at line {n}. pair={p}, ray_idx={i}".format(
                        n=line_no, p=pair_key(tx_id, rx_id), i=ray_idx
                    )
                )
            seen.add(key)
            grouped.setdefault((tx_id, rx_id), []).append(ray)

    if summary_path is None and os.path.exists(summary_path_for(path)):
        summary_path = summary_path_for(path)
    summary = read_summary(summary_path) if summary_path else {}

    records = []
    for (tx_id, rx_id), rays in grouped.items():
        s = summary.get(pair_key(tx_id, rx_id), {})
        rec = make_pair_record(
            tx_id,
            rx_id,
            rays,
            p_tx_w=s.get("p_tx_w", DEFAULT_P_TX_W),
            frequency_hz=s.get("frequency_hz"),
        )
        _check_summary(rec, s)
        records.append(rec)

    logger.debug(
        "parse_rays: done. n_pairs={n}, path={p}".format(n=len(records), p=path)
    )
    return records


def _check_summary(rec: PairRecord, s: Dict):
    for field in ("p_rx_w", "mean_toa_s"):
        if s.get(field) is None:
            continue
        expected = getattr(rec, field)
        stored = float(s[field])
        scale = max(abs(expected), abs(stored))
        if scale > 0.0 and abs(expected - stored) / scale > SUMMARY_RTOL:
            raise RayFileError(
                "Summary mismatch. pair={p}, field={f}, stored={s}, "
                "recomputed={r}".format(
                    p=pair_key(rec.tx_id, rec.rx_id), f=field, s=stored, r=expected
                )
            )


def records_equal(a: PairRecord, b: PairRecord, rtol: float = 0.0) -> bool:
    """Field-wise comparison used for round-trip checks."""

    def close(x, y):
        if x is None or y is None:
            return x is y
        return x == y or abs(x - y) <= rtol * max(abs(x), abs(y))

    if (a.tx_id, a.rx_id, len(a.rays)) != (b.tx_id, b.rx_id, len(b.rays)):
        return False
    for field in ("mean_toa_s", "p_tx_w", "p_rx_w", "frequency_hz"):
        if not close(getattr(a, field), getattr(b, field)):
            return False
    for ra, rb in zip(a.rays, b.rays):
        if ra.n_bounces != rb.n_bounces or not close(ra.gain, rb.gain):
            return False
        for field in (
            "delay_s",
            "aod_az_deg",
            "aod_el_deg",
            "aoa_az_deg",
            "aoa_el_deg",
            "path_length_m",
        ):
            if not close(getattr(ra, field), getattr(rb, field)):
                return False
        if (ra.interactions is None) != (rb.interactions is None):
            return False
        if ra.interactions is not None and any(
            not close(ca, cb)
            for pa, pb in zip(ra.interactions, rb.interactions)
            for ca, cb in zip(pa, pb)
        ):
            return False
    return True

"""Error and capacity analysis of geometric vs full-array channels.

Error is the relative Frobenius error (percent) of a channel against the
full-array reference, raw and after optimal global phase alignment.
Capacity is the equal-power log-det capacity computed from the eigenvalues
of H H^H, which are found with a cyclic complex Jacobi solver.
"""
import csv
import io
import logging
import math
from collections import namedtuple
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .array_geom import ArrayConfig
from .canyon_tracer import Scene, map_receivers, place_receivers, trace_pair
from .channel_synth import (
    ChannelMatrix,
    fresnel_error_bound,
    fullsim_pair,
    geometric_channel,
)
from .ray_model import drop_los as drop_los_rays
from .ray_model import format_float

logger = logging.getLogger(__name__)

NORMALIZATION_RAW = "raw"
NORMALIZATION_FROBENIUS = "frobenius"
NORMALIZATIONS = (NORMALIZATION_RAW, NORMALIZATION_FROBENIUS)

DEFAULT_SNR_DB_GRID = tuple(float(s) for s in range(-10, 31, 5))

JACOBI_MAX_SWEEPS = 100
JACOBI_OFFDIAG_RTOL = 1e-13
HERMITIAN_RTOL = 1e-12

ERRORS_CSV_COLUMNS = ("pair", "distance_m", "los", "raw_error_pct", "aligned_error_pct")
CAPACITY_CSV_COLUMNS = ("pair", "method", "snr_db", "capacity_bps_hz")
SWEEP_CSV_COLUMNS = (
    "pair",
    "distance_m",
    "los",
    "raw_error_pct",
    "aligned_error_pct",
    "fresnel_bound_pct",
)


class EigenConvergenceError(RuntimeError):
    pass


ErrorReport = namedtuple(
    "ErrorReport",
    ("pair", "raw_error_pct", "aligned_error_pct", "tx_rx_distance_m", "los"),
)
CapacityCurve = namedtuple(
    "CapacityCurve",
    ("pair", "method", "snr_db", "capacity_bps_hz", "normalization"),
)
SweepPoint = namedtuple(
    "SweepPoint", ("distance_m", "error", "capacity", "fresnel_bound")
)
SweepPoint.__doc__ = """One range of a distance sweep.

capacity is a (geometric, full) pair of CapacityCurve.
fresnel_bound is None when the range does not exceed the summed apertures.
"""


def init_analysis(
    jacobi_max_sweeps: Optional[int] = None, jacobi_offdiag_rtol: Optional[float] = None
):
    global JACOBI_MAX_SWEEPS, JACOBI_OFFDIAG_RTOL
    if jacobi_max_sweeps is not None:
        JACOBI_MAX_SWEEPS = jacobi_max_sweeps
    if jacobi_offdiag_rtol is not None:
        JACOBI_OFFDIAG_RTOL = jacobi_offdiag_rtol


def _offdiag_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def hermitian_eigenvalues(g) -> np.ndarray:
    """Eigenvalues (ascending) of a Hermitian matrix by cyclic Jacobi rotations.

    Each (p, q) rotation first removes the phase of g[p, q] with a diagonal
    unitary and then applies the real symmetric Jacobi rotation.
    """
    a = np.array(g, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("Matrix must be square. shape={s}".format(s=a.shape))
    n = a.shape[0]
    max_abs = float(np.max(np.abs(a))) if a.size else 0.0
    if float(np.max(np.abs(a - a.conj().T), initial=0.0)) > HERMITIAN_RTOL * max_abs:
        raise ValueError("Matrix is not Hermitian.")
    # symmetrize the rounding away
    a = 0.5 * (a + a.conj().T)

    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return np.zeros(n)
    tol = JACOBI_OFFDIAG_RTOL * fro
    # entries below tol / n cannot keep the off-diagonal norm above tol
    skip = tol / n

    for sweep in range(JACOBI_MAX_SWEEPS + 1):
        off = _offdiag_norm(a)
        if off < tol:
            logger.debug(
                "jacobi: converged. n={n}, sweeps={s}, off={o}".format(
                    n=n, s=sweep, o=off
                )
            )
            return np.sort(np.real(np.diag(a)))
        if sweep == JACOBI_MAX_SWEEPS:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[p, q]
                mag = abs(b)
                if mag < skip:
                    continue
                phase = b / mag
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # u = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                u = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                cols = a[:, [p, q]] @ u
                a[:, p] = cols[:, 0]
                a[:, q] = cols[:, 1]
                rows = u.conj().T @ a[[p, q], :]
                a[p, :] = rows[0]
                a[q, :] = rows[1]
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real

    raise EigenConvergenceError(
        "Jacobi eigensolver did not converge in {m} sweeps. n={n}, off={o}".format(
            m=JACOBI_MAX_SWEEPS, n=n, o=_offdiag_norm(a)
        )
    )


def _entries(h) -> np.ndarray:
    if isinstance(h, ChannelMatrix):
        return h.entries
    return np.asarray(h, dtype=complex)


def normalize_channel(h, normalization: str = NORMALIZATION_FROBENIUS) -> np.ndarray:
    """H unchanged (raw) or scaled so that ||H||_F^2 = N_tx N_rx (frobenius)."""
    if normalization not in NORMALIZATIONS:
        raise ValueError("Unknown normalization. normalization={n}".format(n=normalization))
    m = _entries(h)
    if normalization == NORMALIZATION_RAW:
        return m
    fro = np.linalg.norm(m)
    if fro == 0.0:
        return m
    return m * (math.sqrt(m.shape[0] * m.shape[1]) / fro)


def channel_gram_eigenvalues(
    h, normalization: str = NORMALIZATION_FROBENIUS
) -> np.ndarray:
    m = normalize_channel(h, normalization)
    # non-negative by construction; clip rounding
    return np.clip(hermitian_eigenvalues(m @ m.conj().T), 0.0, None)


def _capacity_from_eigenvalues(eigs: np.ndarray, snr_linear: float, n_tx: int) -> float:
    if snr_linear < 0.0:
        raise ValueError("SNR must be >= 0. snr={s}".format(s=snr_linear))
    c = float(np.sum(np.log1p((snr_linear / n_tx) * eigs))) / math.log(2.0)
    return max(c, 0.0)


def capacity(h, snr_linear: float, normalization: str = NORMALIZATION_FROBENIUS) -> float:
    """Equal-power capacity log2 det(I + snr/N_tx H H^H) in bits/s/Hz."""
    eigs = channel_gram_eigenvalues(h, normalization)
    return _capacity_from_eigenvalues(eigs, snr_linear, _entries(h).shape[1])


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def snr_grid(spec: str) -> Tuple[float, ...]:
    """Parse `lo:hi:step` (dB, hi inclusive)."""
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ValueError("Invalid SNR grid (expected lo:hi:step). s={s}".format(s=spec))
    if step <= 0.0 or hi < lo:
        raise ValueError("Invalid SNR grid (need step > 0, hi >= lo). s={s}".format(s=spec))
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(lo + k * step for k in range(n))


def capacity_curve(
    h: ChannelMatrix,
    snr_db_grid: Sequence[float] = DEFAULT_SNR_DB_GRID,
    normalization: str = NORMALIZATION_FROBENIUS,
) -> CapacityCurve:
    """Capacity over an SNR grid from a single eigen-decomposition."""
    eigs = channel_gram_eigenvalues(h, normalization)
    values = tuple(
        _capacity_from_eigenvalues(eigs, db_to_linear(s), h.n_tx) for s in snr_db_grid
    )
    # log1p is monotone per eigenvalue but keep the curve monotone under rounding
    values = tuple(np.maximum.accumulate(values)) if values else ()
    return CapacityCurve(
        pair=h.pair_label,
        method=h.method,
        snr_db=tuple(float(s) for s in snr_db_grid),
        capacity_bps_hz=tuple(float(v) for v in values),
        normalization=normalization,
    )


def channel_error(
    a: ChannelMatrix,
    b: ChannelMatrix,
    distance_m: Optional[float] = None,
    los: Optional[bool] = None,
) -> ErrorReport:
    """Relative Frobenius error of a against the reference b, in percent.

    The aligned error rotates a by exp(-j theta*) with theta* = arg trace(b^H a),
    which minimizes ||a exp(-j theta) - b||_F over theta.
    """
    if a.entries.shape != b.entries.shape:
        raise ValueError(
            "Dimension mismatch. a={sa}, b={sb}".format(
                sa=a.entries.shape, sb=b.entries.shape
            )
        )
    if a.pair != b.pair:
        raise ValueError("Pair mismatch. a={pa}, b={pb}".format(pa=a.pair, pb=b.pair))
    ref = np.linalg.norm(b.entries)
    if ref == 0.0:
        raise ValueError("Reference channel is zero. pair={p}".format(p=b.pair_label))

    raw = 100.0 * np.linalg.norm(a.entries - b.entries) / ref
    inner = np.vdot(b.entries, a.entries)
    theta = np.angle(inner)
    aligned = 100.0 * np.linalg.norm(a.entries * np.exp(-1j * theta) - b.entries) / ref

    if distance_m is None:
        distance_m = b.distance_m if b.distance_m is not None else a.distance_m
    if los is None:
        los = b.los if b.los is not None else a.los
    return ErrorReport(
        pair=b.pair_label,
        raw_error_pct=float(raw),
        aligned_error_pct=float(min(aligned, raw)),
        tx_rx_distance_m=distance_m,
        los=los,
    )


def compare_channel_sets(
    approx: Sequence[ChannelMatrix], reference: Sequence[ChannelMatrix]
) -> List[ErrorReport]:
    """Pair up two channel sets by (tx, rx) and compare, in reference order."""
    by_pair = {h.pair: h for h in approx}
    reports = []
    for ref in reference:
        if ref.pair not in by_pair:
            raise ValueError("Pair missing from approximation. pair={p}".format(p=ref.pair_label))
        reports.append(channel_error(by_pair[ref.pair], ref))
    return reports


def rank_reports(reports: Sequence[ErrorReport], aligned: bool = True) -> dict:
    """Receivers worth a closer look: largest error, smallest error and the
    closest LOS receiver.
    """
    if not reports:
        return {}

    def err(r):
        return r.aligned_error_pct if aligned else r.raw_error_pct

    ranked = {
        "largest_error": max(reports, key=err),
        "smallest_error": min(reports, key=err),
    }
    los = [r for r in reports if r.los and r.tx_rx_distance_m is not None]
    if los:
        ranked["closest_los"] = min(los, key=lambda r: r.tx_rx_distance_m)
    return ranked


def distance_error_trend(reports: Sequence[ErrorReport], aligned: bool = True) -> float:
    """Spearman rank correlation between TX-RX distance and error."""
    pts = [r for r in reports if r.tx_rx_distance_m is not None]
    if len(pts) < 2:
        raise ValueError("Need at least two reports with a distance.")
    errors = [r.aligned_error_pct if aligned else r.raw_error_pct for r in pts]
    rho, _ = stats.spearmanr([r.tx_rx_distance_m for r in pts], errors)
    return float(rho)


def sweep_point(
    scene: Scene,
    rx_id: str,
    distance_m: float,
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    l: Optional[int],
    snr_db_grid: Sequence[float],
    normalization: str,
    phase_only: bool,
    drop_los: bool,
) -> SweepPoint:
    """Trace, build both channels, compare them and evaluate capacities for one
    receiver. Module-level so that it can be used with multiprocessing.
    """
    record = trace_pair(scene, rx_id)
    if drop_los:
        record = drop_los_rays(record)
    h_full = fullsim_pair(
        scene, rx_id, tx_cfg, rx_cfg, phase_only=phase_only, drop_los=drop_los
    )
    h_geo = geometric_channel(record, tx_cfg, rx_cfg, l)
    error = channel_error(h_geo, h_full, distance_m=distance_m, los=h_full.los)
    curves = (
        capacity_curve(h_geo, snr_db_grid, normalization),
        capacity_curve(h_full, snr_db_grid, normalization),
    )
    try:
        bound = fresnel_error_bound(tx_cfg, rx_cfg, distance_m, scene.wavelength_m)
    except ValueError:
        bound = None
    logger.debug(
        "sweep: ({rx}) done. d={d}, aligned={a}".format(
            rx=rx_id, d=distance_m, a=error.aligned_error_pct
        )
    )
    return SweepPoint(distance_m, error, curves, bound)


def distance_sweep(
    scene: Scene,
    distances_m: Sequence[float],
    tx_cfg: ArrayConfig,
    rx_cfg: ArrayConfig,
    l: Optional[int] = None,
    snr_db_grid: Sequence[float] = DEFAULT_SNR_DB_GRID,
    normalization: str = NORMALIZATION_FROBENIUS,
    phase_only: bool = False,
    drop_los: bool = False,
    jobs: int = 1,
) -> List[SweepPoint]:
    """Place a receiver on the canyon axis at each range and compare the two
    channel constructions there. Results are ordered by distance.
    """
    distances_m = [float(d) for d in distances_m]
    if any(d <= 0.0 for d in distances_m):
        raise ValueError("Distances must be positive. d={d}".format(d=distances_m))
    if any(b <= a for a, b in zip(distances_m, distances_m[1:])):
        raise ValueError("Distances must be ascending. d={d}".format(d=distances_m))

    swept = place_receivers(scene, distances_m)
    logger.info(
        "sweep: started. n_distances={n}, max_order={o}".format(
            n=len(distances_m), o=swept.max_order
        )
    )
    distance_of = dict(zip(swept.rx_ids, distances_m))
    points = map_receivers(
        _sweep_worker,
        swept,
        jobs=jobs,
        extra_args=(
            distance_of,
            tx_cfg,
            rx_cfg,
            l,
            tuple(snr_db_grid),
            normalization,
            phase_only,
            drop_los,
        ),
    )
    logger.info("sweep: done.")
    return points


def _sweep_worker(scene, rx_id, distance_of, *args) -> SweepPoint:
    return sweep_point(scene, rx_id, distance_of[rx_id], *args)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt_opt(x) -> str:
    return "" if x is None else format_float(x)


def _fmt_bool(x) -> str:
    return "" if x is None else str(bool(x)).lower()


def errors_to_csv(reports: Sequence[ErrorReport]) -> str:
    return _csv_text(
        ERRORS_CSV_COLUMNS,
        [
            (
                r.pair,
                _fmt_opt(r.tx_rx_distance_m),
                _fmt_bool(r.los),
                format_float(r.raw_error_pct),
                format_float(r.aligned_error_pct),
            )
            for r in reports
        ],
    )


def capacity_to_csv(curves: Sequence[CapacityCurve]) -> str:
    return _csv_text(
        CAPACITY_CSV_COLUMNS,
        [
            (c.pair, c.method, format_float(s), format_float(v))
            for c in curves
            for s, v in zip(c.snr_db, c.capacity_bps_hz)
        ],
    )


def sweep_to_csv(points: Sequence[SweepPoint]) -> str:
    return _csv_text(
        SWEEP_CSV_COLUMNS,
        [
            (
                p.error.pair,
                format_float(p.distance_m),
                _fmt_bool(p.error.los),
                format_float(p.error.raw_error_pct),
                format_float(p.error.aligned_error_pct),
                _fmt_opt(None if p.fresnel_bound is None else 100.0 * p.fresnel_bound),
            )
            for p in points
        ],
    )


def sweep_capacity_curves(points: Sequence[SweepPoint]) -> List[CapacityCurve]:
    return [c for p in points for c in p.capacity]


def log_reports(reports: Sequence[ErrorReport], aligned: bool = True):
    label = "aligned" if aligned else "raw"
    for key, r in sorted(rank_reports(reports, aligned=aligned).items()):
        logger.info(
            "compare: ({p}) {k}. {label}={e:.4f}%, distance={d}, los={los}".format(
                p=r.pair,
                k=key,
                label=label,
                e=r.aligned_error_pct if aligned else r.raw_error_pct,
                d=r.tx_rx_distance_m,
                los=r.los,
            )
        )


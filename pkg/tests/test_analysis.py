import cmath
import math

import numpy as np
import pytest

from chanforge import analysis
from chanforge.analysis import (
    CAPACITY_CSV_COLUMNS,
    DEFAULT_SNR_DB_GRID,
    ERRORS_CSV_COLUMNS,
    NORMALIZATION_FROBENIUS,
    NORMALIZATION_RAW,
    SWEEP_CSV_COLUMNS,
    EigenConvergenceError,
    ErrorReport,
    capacity,
    capacity_curve,
    capacity_to_csv,
    channel_error,
    compare_channel_sets,
    distance_error_trend,
    distance_sweep,
    errors_to_csv,
    hermitian_eigenvalues,
    init_analysis,
    normalize_channel,
    rank_reports,
    snr_grid,
    sweep_capacity_curves,
    sweep_to_csv,
)
from chanforge.array_geom import ArrayConfig
from chanforge.canyon_tracer import default_scene
from chanforge.channel_synth import METHOD_FULL, METHOD_GEOMETRIC, ChannelMatrix

ULA4 = ArrayConfig(4, 0.5)


def channel(entries, pair=("TX1", "RX1"), method=METHOD_FULL, distance_m=None, los=None):
    return ChannelMatrix(
        entries=entries,
        method=method,
        tx_cfg=None,
        rx_cfg=None,
        frequency_hz=60e9,
        pair=pair,
        distance_m=distance_m,
        los=los,
    )


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize(
    "g,expected",
    [
        (np.diag([3.0, 1.0, 2.0]), [1.0, 2.0, 3.0]),
        (np.array([[2.0, 1j], [-1j, 2.0]]), [1.0, 3.0]),
        (np.zeros((3, 3)), [0.0, 0.0, 0.0]),
        (np.array([[5.0]]), [5.0]),
    ],
)
def test_hermitian_eigenvalues(g, expected):
    np.testing.assert_allclose(hermitian_eigenvalues(g), expected, atol=1e-12)


def test_hermitian_eigenvalues_matches_numpy():
    rng = np.random.RandomState(7)
    for n in (2, 3, 5, 8, 16):
        m = random_complex(rng, n, n)
        g = m + m.conj().T
        np.testing.assert_allclose(
            hermitian_eigenvalues(g), np.linalg.eigvalsh(g), atol=1e-10
        )


def test_hermitian_eigenvalues_tiny_offdiag():
    g = np.array([[4096.0, 1e-9], [1e-9, 1.0]])
    assert analysis._offdiag_norm(g) == pytest.approx(math.sqrt(2) * 1e-9, rel=1e-12)
    np.testing.assert_allclose(
        hermitian_eigenvalues(g), np.linalg.eigvalsh(g), rtol=1e-15, atol=1e-12
    )


@pytest.mark.parametrize("n,rank", [(4, 4), (16, 2), (64, 3)])
def test_hermitian_eigenvalues_wide_range_gram(n, rank):
    rng = np.random.RandomState(11)
    u, _ = np.linalg.qr(random_complex(rng, n, rank))
    v, _ = np.linalg.qr(random_complex(rng, n, rank))
    s = np.logspace(3, -6, rank)
    h = u @ np.diag(s) @ v.conj().T
    g = h @ h.conj().T

    eigs = hermitian_eigenvalues(g)
    expected = np.linalg.eigvalsh(g)
    np.testing.assert_allclose(eigs, expected, rtol=0, atol=1e-9 * expected[-1])
    np.testing.assert_allclose(eigs[-rank:], np.sort(s ** 2), rtol=1e-9, atol=1e-9 * s[0] ** 2)


def test_hermitian_eigenvalues_invalid():
    with pytest.raises(ValueError, match="square"):
        hermitian_eigenvalues(np.ones((2, 3)))
    with pytest.raises(ValueError, match="Hermitian"):
        hermitian_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_hermitian_eigenvalues_no_convergence(monkeypatch):
    monkeypatch.setattr(analysis, "JACOBI_MAX_SWEEPS", analysis.JACOBI_MAX_SWEEPS)
    init_analysis(jacobi_max_sweeps=0)
    with pytest.raises(EigenConvergenceError):
        hermitian_eigenvalues(np.array([[2.0, 1j], [-1j, 2.0]]))


def test_capacity_zero_channel():
    for snr in (0.0, 1.0, 1000.0):
        assert capacity(np.zeros((4, 4)), snr) == 0.0
        assert capacity(np.zeros((4, 4)), snr, NORMALIZATION_RAW) == 0.0


def test_capacity_identity():
    c = capacity(np.eye(2), 3.0, NORMALIZATION_RAW)
    assert c == pytest.approx(2 * math.log2(2.5), rel=1e-12)
    assert capacity(np.eye(2), 0.0, NORMALIZATION_RAW) == 0.0


@pytest.mark.parametrize("gain", [1.0, 3.9e-6j, -2e-3 + 1e-3j])
def test_capacity_single_path_frobenius(gain):
    a_r = np.exp(-1j * np.pi * np.arange(4) * 0.3) / 2
    a_t = np.exp(-1j * np.pi * np.arange(4) * -0.6) / 2
    h = 4 * gain * np.outer(a_r, a_t.conj())
    assert capacity(h, 1.0) == pytest.approx(math.log2(5.0), rel=1e-10)


def test_capacity_orders_by_singular_value_spread():
    rng = np.random.RandomState(11)
    u, _ = np.linalg.qr(random_complex(rng, 4, 4))
    v, _ = np.linalg.qr(random_complex(rng, 4, 4))
    equal = u @ v.conj().T
    rank1 = np.outer(u[:, 0], v[:, 0].conj())
    mixed = u @ np.diag([2.0, 1.0, 0.5, 0.1]) @ v.conj().T
    for snr in (0.1, 1.0, 100.0):
        c_equal = capacity(equal, snr)
        c_mixed = capacity(mixed, snr)
        c_rank1 = capacity(rank1, snr)
        assert c_rank1 < c_mixed < c_equal


def test_normalize_channel():
    m = np.full((2, 3), 2.0 + 0j)
    assert np.linalg.norm(normalize_channel(m)) == pytest.approx(math.sqrt(6))
    np.testing.assert_allclose(
        normalize_channel(m, NORMALIZATION_FROBENIUS), normalize_channel(m)
    )
    assert normalize_channel(m, NORMALIZATION_RAW) is m
    assert not normalize_channel(np.zeros((2, 2))).any()
    with pytest.raises(ValueError):
        normalize_channel(m, "unit")


def test_snr_grid():
    assert snr_grid("-10:30:5") == DEFAULT_SNR_DB_GRID
    assert len(snr_grid("-10:30:5")) == 9
    assert snr_grid("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert snr_grid("3:3:1") == (3.0,)
    for s in ("1:2", "a:b:c", "0:10:0", "10:0:1"):
        with pytest.raises(ValueError):
            snr_grid(s)


def test_capacity_curve():
    rng = np.random.RandomState(5)
    h = channel(random_complex(rng, 4, 4), method=METHOD_GEOMETRIC)
    curve = capacity_curve(h)
    assert curve.pair == "TX1:RX1"
    assert curve.method == METHOD_GEOMETRIC
    assert curve.snr_db == DEFAULT_SNR_DB_GRID
    values = curve.capacity_bps_hz
    assert all(a <= b for a, b in zip(values, values[1:]))
    for s, c in zip(curve.snr_db, values):
        assert c == pytest.approx(capacity(h, 10 ** (s / 10)), rel=1e-12)


def test_channel_error_identical():
    b = channel(np.arange(6).reshape(2, 3) + 1j)
    r = channel_error(b, b)
    assert r.raw_error_pct == 0.0
    assert r.aligned_error_pct == 0.0


def test_channel_error_global_phase():
    rng = np.random.RandomState(2)
    b = channel(random_complex(rng, 3, 3))
    a = channel(b.entries * cmath.exp(1j * math.pi / 4))
    r = channel_error(a, b)
    assert r.raw_error_pct == pytest.approx(76.537, abs=1e-3)
    assert r.raw_error_pct == pytest.approx(200 * math.sin(math.pi / 8), rel=1e-12)
    assert r.aligned_error_pct == pytest.approx(0.0, abs=1e-12)


def test_channel_error_scale():
    rng = np.random.RandomState(4)
    b = channel(random_complex(rng, 2, 2))
    r = channel_error(channel(2 * b.entries), b)
    assert r.raw_error_pct == pytest.approx(100.0)
    assert r.aligned_error_pct == pytest.approx(100.0)


def test_channel_error_alignment_beats_phase_grid():
    rng = np.random.RandomState(9)
    thetas = np.radians(np.arange(360))
    for _ in range(20):
        a = random_complex(rng, 4, 4)
        b = random_complex(rng, 4, 4)
        r = channel_error(channel(a), channel(b))
        grid = min(
            100 * np.linalg.norm(a * np.exp(-1j * t) - b) / np.linalg.norm(b)
            for t in thetas
        )
        assert r.aligned_error_pct <= grid + 1e-12
        assert r.aligned_error_pct <= r.raw_error_pct


def test_channel_error_invalid():
    b = channel(np.ones((2, 2)))
    with pytest.raises(ValueError, match="Dimension"):
        channel_error(channel(np.ones((2, 3))), b)
    with pytest.raises(ValueError, match="Pair"):
        channel_error(channel(np.ones((2, 2)), pair=("TX1", "RX2")), b)
    with pytest.raises(ValueError, match="zero"):
        channel_error(b, channel(np.zeros((2, 2))))


def test_compare_channel_sets():
    ref = [
        channel(np.ones((2, 2)), pair=("TX1", "RX2"), distance_m=20.0, los=True),
        channel(np.ones((2, 2)), pair=("TX1", "RX1"), distance_m=10.0, los=False),
    ]
    approx = [
        channel(np.ones((2, 2)), pair=("TX1", "RX1"), method=METHOD_GEOMETRIC),
        channel(2 * np.ones((2, 2)), pair=("TX1", "RX2"), method=METHOD_GEOMETRIC),
    ]
    reports = compare_channel_sets(approx, ref)
    assert [r.pair for r in reports] == ["TX1:RX2", "TX1:RX1"]
    assert reports[0].raw_error_pct == pytest.approx(100.0)
    assert reports[0].tx_rx_distance_m == 20.0
    assert reports[1].raw_error_pct == 0.0
    assert reports[1].los is False

    with pytest.raises(ValueError, match="missing"):
        compare_channel_sets(approx[:1], ref)


def test_rank_reports():
    reports = [
        ErrorReport("TX1:RX1", 50.0, 40.0, 5.0, True),
        ErrorReport("TX1:RX2", 30.0, 10.0, 50.0, True),
        ErrorReport("TX1:RX3", 20.0, 20.0, 2.0, False),
    ]
    ranked = rank_reports(reports)
    assert ranked["largest_error"].pair == "TX1:RX1"
    assert ranked["smallest_error"].pair == "TX1:RX2"
    assert ranked["closest_los"].pair == "TX1:RX1"
    assert rank_reports(reports, aligned=False)["smallest_error"].pair == "TX1:RX3"
    assert rank_reports([]) == {}


def test_distance_error_trend():
    reports = [
        ErrorReport("TX1:RX{i}".format(i=i), 0.0, e, d, True)
        for i, (d, e) in enumerate([(5.0, 90.0), (10.0, 50.0), (20.0, 60.0), (40.0, 1.0)])
    ]
    assert distance_error_trend(reports) == pytest.approx(-0.8)
    with pytest.raises(ValueError):
        distance_error_trend(reports[:1])


def test_distance_sweep_single_distance(no_parallel):
    points = distance_sweep(
        default_scene().with_max_order(1), [30.0], ULA4, ULA4, snr_db_grid=(0.0, 10.0)
    )
    assert len(points) == 1
    p = points[0]
    assert p.distance_m == 30.0
    assert p.error.pair == "TX1:D1"
    assert p.error.los
    geo, full = p.capacity
    assert (geo.method, full.method) == (METHOD_GEOMETRIC, METHOD_FULL)
    assert geo.snr_db == (0.0, 10.0)
    assert p.fresnel_bound is not None


def test_distance_sweep_los_only_decreasing():
    points = distance_sweep(
        default_scene().with_max_order(0), [1.0, 10.0, 100.0], ULA4, ULA4, jobs=2
    )
    errors = [p.error.aligned_error_pct for p in points]
    assert errors[0] > errors[1] > errors[2]
    for p in points:
        assert p.error.aligned_error_pct <= 100.0 * p.fresnel_bound * (1 + 1e-6)
    assert [p.distance_m for p in points] == [1.0, 10.0, 100.0]


@pytest.mark.parametrize("distances", [[10.0, 5.0], [0.0, 1.0], [-1.0], [1.0, 1.0]])
def test_distance_sweep_invalid(distances):
    with pytest.raises(ValueError):
        distance_sweep(default_scene(), distances, ULA4, ULA4)


def test_errors_to_csv():
    reports = [
        ErrorReport("TX1:RX1", 12.5, 0.25, 5.0, True),
        ErrorReport("TX1:RX2", 1.0, 0.5, None, None),
    ]
    assert errors_to_csv(reports) == (
        ",".join(ERRORS_CSV_COLUMNS)
        + "\n"
        + "TX1:RX1,5,true,12.5,0.25\n"
        + "TX1:RX2,,,1,0.5\n"
    )
    assert errors_to_csv([]) == ",".join(ERRORS_CSV_COLUMNS) + "\n"


def test_capacity_to_csv():
    h = channel(np.eye(2))
    lines = capacity_to_csv([capacity_curve(h), capacity_curve(h, (0.0,))]).splitlines()
    assert lines[0] == ",".join(CAPACITY_CSV_COLUMNS)
    assert len(lines) == 1 + 9 + 1
    assert lines[1].startswith("TX1:RX1,full,-10,")


def test_sweep_to_csv(no_parallel):
    points = distance_sweep(default_scene().with_max_order(0), [1.0, 2.0], ULA4, ULA4)
    lines = sweep_to_csv(points).splitlines()
    assert lines[0] == ",".join(SWEEP_CSV_COLUMNS)
    assert lines[1].startswith("TX1:D1,1,true,")
    assert len(lines) == 3
    assert len(sweep_capacity_curves(points)) == 4

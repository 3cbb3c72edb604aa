"""Geometry, large-scale fading, spatial correlation, and channel sampling.

Closed-form values are hand-derived; distributional properties use moment
checks with explicit Monte Carlo error budgets.
"""

import math

import numpy as np
import pytest

from cran_split.channel import (
    Geometry,
    OneRingParams,
    PathLossParams,
    angle_and_spread,
    build_downlink_model,
    build_uplink_model,
    hermitian_sqrt,
    one_ring_correlation,
    path_loss,
    sample_channel,
)


# ---------------------------------------------------------------------------
# path loss and geometry


def test_path_loss_reference_points():
    pl = PathLossParams()
    assert path_loss(0.0, pl) == 1.0
    assert abs(path_loss(50.0, pl) - 0.5) < 1e-12
    # d = 2 d0, eta = 3: 1/(1+8) = 1/9
    assert abs(path_loss(100.0, pl) - 1.0 / 9.0) < 1e-12


def test_path_loss_vectorized_and_decreasing():
    d = np.linspace(0.0, 400.0, 81)
    g = path_loss(d, PathLossParams())
    assert g.shape == d.shape
    assert np.all(np.diff(g) < 0.0)
    assert np.all((g > 0.0) & (g <= 1.0))


def test_geometry_distances_shape():
    geo = Geometry(rrh=((0.0, 0.0), (100.0, 0.0)),
                   ue=((0.0, 30.0), (100.0, 40.0), (50.0, 0.0)))
    d = geo.distances()
    assert d.shape == (3, 2)  # (n_ue, n_rrh)
    assert abs(d[0, 0] - 30.0) < 1e-12
    assert abs(d[1, 1] - 40.0) < 1e-12
    assert abs(d[2, 0] - 50.0) < 1e-12


def test_uniform_geometry_in_area_and_reproducible():
    g1 = Geometry.uniform(4, 6, 500.0, rng=np.random.default_rng(3))
    g2 = Geometry.uniform(4, 6, 500.0, rng=np.random.default_rng(3))
    assert np.array_equal(g1.rrh, g2.rrh) and np.array_equal(g1.ue, g2.ue)
    pts = np.vstack([g1.rrh, g1.ue])
    assert np.all((pts >= 0.0) & (pts <= 500.0))


def test_angle_and_spread_axis_cases():
    oring = OneRingParams()  # scattering radius 10
    th, de = angle_and_spread((0.0, 0.0), (10.0, 0.0), oring)
    assert abs(th) < 1e-12 and abs(de - math.pi / 4) < 1e-12
    th, de = angle_and_spread((0.0, 0.0), (0.0, 10.0), oring)
    assert abs(th - math.pi / 2) < 1e-12 and abs(de - math.pi / 4) < 1e-12
    # diagonal placement: distance 50*sqrt(2), spread arctan(10/70.71)
    th, de = angle_and_spread((0.0, 0.0), (50.0, 50.0), oring)
    assert abs(th - math.pi / 4) < 1e-12
    assert abs(de - math.atan(10.0 / (50.0 * math.sqrt(2.0)))) < 1e-12
    assert abs(de - 0.14048970175352035) < 1e-12


def test_angle_and_spread_rejects_coincident_points():
    with pytest.raises(ValueError):
        angle_and_spread((5.0, 5.0), (5.0, 5.0), OneRingParams())


# ---------------------------------------------------------------------------
# one-ring correlation


def test_one_ring_trivial_order_one():
    r = one_ring_correlation(0.3, 0.2, alpha=0.7, n=1)
    assert r.shape == (1, 1)
    assert abs(r[0, 0] - 0.7) < 1e-12


def test_one_ring_diagonal_and_hermitian():
    r = one_ring_correlation(math.pi / 3, 0.25, alpha=0.8, n=5)
    assert np.allclose(np.diag(r).real, 0.8, atol=1e-12)
    assert np.allclose(np.diag(r).imag, 0.0, atol=1e-12)
    assert np.allclose(r, r.conj().T, atol=1e-12)


def test_one_ring_narrow_cone_limit():
    # as the cone collapses the lag-1 entry tends to the midpoint phase
    # exp(-j*pi*sin(theta)); at theta = pi/6 this is exp(-j*pi/2) = -j
    r = one_ring_correlation(math.pi / 6, 1e-6, alpha=1.0, n=2)
    assert abs(r[1, 0] - (-1j)) < 1e-4
    assert abs(r[0, 1] - 1j) < 1e-4


def test_one_ring_matches_trapezoid_oracle():
    theta, delta, alpha, n = 0.9, 0.3, 0.6, 4
    r = one_ring_correlation(theta, delta, alpha, n)
    t = np.linspace(theta - delta, theta + delta, 200_001)
    for k in range(n):
        for l in range(n):
            f = np.exp(-1j * math.pi * (k - l) * np.sin(t))
            ref = alpha * np.trapezoid(f, t) / (2 * delta)
            assert abs(r[k, l] - ref) < 1e-8


def test_one_ring_positive_semidefinite_grid():
    for theta in (-1.2, 0.0, 0.7, 2.9):
        for delta in (1e-3, 0.1, 0.6, 1.4):
            for n in (2, 4, 8):
                r = one_ring_correlation(theta, delta, 1.0, n)
                w = np.linalg.eigvalsh(r)
                assert w.min() >= -1e-10


# ---------------------------------------------------------------------------
# hermitian_sqrt


def test_hermitian_sqrt_identity_and_diagonal():
    assert np.allclose(hermitian_sqrt(np.eye(3)), np.eye(3), atol=1e-12)
    s = hermitian_sqrt(np.diag([4.0, 9.0]))
    assert np.allclose(s, np.diag([2.0, 3.0]), atol=1e-12)


def test_hermitian_sqrt_reconstructs_random_psd():
    rng = np.random.default_rng(11)
    b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    a = b @ b.conj().T
    s = hermitian_sqrt(a)
    assert np.linalg.norm(s @ s - a) < 1e-9
    assert np.allclose(s, s.conj().T, atol=1e-10)


def test_hermitian_sqrt_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        hermitian_sqrt(np.diag([1.0, -0.5]))


# ---------------------------------------------------------------------------
# channel sampling


def _uplink_model():
    # UE at the reference distance, so the path gain is exactly 0.5
    geo = Geometry(rrh=((0.0, 0.0),), ue=((50.0, 0.0),))
    return build_uplink_model(geo, PathLossParams(), ue_antennas=(2,),
                              rrh_antennas=(3,))


def test_sample_channel_deterministic_per_seed():
    model = _uplink_model()
    b1 = sample_channel(model, np.random.default_rng(42))
    b2 = sample_channel(model, np.random.default_rng(42))
    assert np.array_equal(b1.blocks[(0, 0)], b2.blocks[(0, 0)])
    b3 = sample_channel(model, np.random.default_rng(43))
    assert not np.array_equal(b1.blocks[(0, 0)], b3.blocks[(0, 0)])


def test_uplink_entry_variance_moment_check():
    model = _uplink_model()
    samples = np.abs(_stack_entries(model, np.random.default_rng(5),
                                    100_000)) ** 2
    var = samples.mean()
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(var - 0.5) < 3.0 * se


def _stack_entries(model, rng, n):
    out = np.empty(n, dtype=complex)
    k = 0
    while k < n:
        b = sample_channel(model, rng).blocks[(0, 0)].ravel()
        take = min(b.size, n - k)
        out[k:k + take] = b[:take]
        k += take
    return out


def test_downlink_sample_covariance_matches_transmit_correlation():
    geo = Geometry(rrh=((0.0, 0.0),), ue=((120.0, 35.0),))
    model = build_downlink_model(geo, PathLossParams(), OneRingParams(),
                                 rrh_antennas=(2,), ue_antennas=(1,))
    sig = model.tx_corr_sqrt[0][0]
    target = sig @ sig.conj().T
    rng = np.random.default_rng(17)
    n = 100_000
    acc = np.zeros((2, 2), dtype=complex)
    for _ in range(n):
        row = sample_channel(model, rng).blocks[(0, 0)]  # (1, 2)
        acc += row.conj().T @ row
    cov = acc / n
    rel = np.linalg.norm(cov - target) / np.linalg.norm(target)
    assert rel < 0.05

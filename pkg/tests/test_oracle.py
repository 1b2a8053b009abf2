import numpy as np
import pytest
import scipy.fft as sfft

from hallmhd import oracle
from hallmhd.operators import form_b, form_hall, map_Hall
from hallmhd.spectral import derivative, forward_transform, inner, inverse_transform, make_lattice, random_field


def test_dft_of_zero():
    assert not np.any(oracle.dft_direct(np.zeros((4, 4, 4))))


def test_dft_of_delta_is_flat():
    x = np.zeros((4, 4, 4))
    x[1, 2, 3] = 1.0
    assert np.allclose(np.abs(oracle.dft_direct(x)), 4**-1.5, atol=1e-15)


def test_dft_matches_fast_path(rng):
    x = rng.standard_normal((3, 4, 4, 4))
    direct = oracle.dft_direct(x)
    fast = sfft.fftn(x, axes=(1, 2, 3), norm="ortho")
    assert np.max(np.abs(direct - fast)) <= 1e-12 * np.max(np.abs(direct))


def test_dft_cost_guard():
    with pytest.raises(oracle.CostGuardError):
        oracle.dft_direct(np.zeros((10, 10, 10)))


def test_pointwise_evaluation_matches_grid_samples(lat8, rng):
    u = random_field(lat8, rng)
    pts = lat8.grid().reshape(3, -1)
    assert np.allclose(oracle.evaluate(u, pts).reshape(3, 8, 8, 8), inverse_transform(u), atol=1e-13)
    d = oracle.evaluate(u, pts, (1,)).reshape(3, 8, 8, 8)
    assert np.allclose(d, inverse_transform(derivative(u, "gradient", 1)), atol=1e-12)


def test_forms_reproduce_independently(lat4, rng):
    lat = make_lattice(4, 2 * np.pi, 1.0)
    for _ in range(5):
        u, w, v = (random_field(lat, rng) for _ in range(3))
        assert oracle.form_b_direct(u, w, v) == pytest.approx(form_b(u, w, v), rel=1e-10)
        assert oracle.form_hall_direct(u, w, v) == pytest.approx(form_hall(u, w, v), rel=1e-10)
        assert oracle.hall_pairing_direct(u, w, v) == pytest.approx(inner(map_Hall(u, w), v), rel=1e-10)
        assert oracle.inner_direct(u, v) == pytest.approx(inner(u, v), rel=1e-12)


def test_oracle_cancellations(lat8, rng):
    u, v = random_field(lat8, rng), random_field(lat8, rng)
    scale = abs(oracle.form_b_direct(u, v, derivative(u, "curl")))
    assert abs(oracle.form_b_direct(u, v, v)) <= 1e-10 * scale
    hall = oracle.form_hall_direct(u, u, v)
    plus = oracle.form_b_direct(u, u, derivative(v, "curl"))
    assert hall == pytest.approx(plus, rel=1e-10)


def test_trig_series_and_coercivity_scan():
    pts = make_lattice(8, 2 * np.pi, 1.0).grid().reshape(3, -1)
    vals = oracle.trig_series([{"m": [1, 0, 0], "cos": 2.0}, {"m": [0, 1, 0], "sin": 1.0}], 2 * np.pi, pts)
    assert np.allclose(vals, 2 * np.cos(pts[0]) + np.sin(pts[1]))
    rank_one = [[[{"m": [0, 0, 0], "cos": 1.1}], [], []]]
    assert oracle.coercivity_scan(rank_one, 2 * np.pi, 4) == pytest.approx(2 - 1.21, abs=1e-14)


def test_forward_transform_against_direct_dft(lat4, rng):
    x = rng.standard_normal((3, 4, 4, 4))
    direct = oracle.dft_direct(x)
    m = lat4.indices % 4
    assert np.allclose(forward_transform(x, lat4).coeffs, direct[:, m[:, 0], m[:, 1], m[:, 2]], atol=1e-12)

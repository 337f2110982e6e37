import cmath
import math

import numpy as np
import pytest

from conftest import random_right_half, random_spd
from radpml.anisotropy import Anisotropy
from radpml.scaling import (
    ComplexFreq,
    DampingProfile,
    MappedLayer,
    ShiftedScaling,
    a_sigma,
    cos_ratio_lower_bound,
    d_pair,
    half_angle_bound,
    jacobian,
    mapped_radius,
    mapped_radius_derivative,
    scaled_coordinate,
    sdd_coefficients,
    sigma_tilde,
)

SC = ShiftedScaling.make(1.0, 20.0, 10.0)


def test_constructors_validate():
    with pytest.raises(ValueError):
        DampingProfile(0.0, 1.0)
    with pytest.raises(ValueError):
        DampingProfile(1.0, -1.0)
    with pytest.raises(ValueError):
        ShiftedScaling(DampingProfile(1.0, 1.0), -1.0)
    with pytest.raises(ValueError):
        ComplexFreq(1j)
    with pytest.raises(ValueError):
        MappedLayer(1.0, 0.0)
    assert SC.nu == 2.0
    assert ShiftedScaling.make(1.0, 1.0).nu is None
    sc = ShiftedScaling.make(1.0, 3.0, 7.0)
    assert abs(sc.nu - 3.0 / 7.0) <= 1e-14


def test_sigma_tilde():
    prof = DampingProfile(1.0, 20.0)
    assert sigma_tilde(prof, 1.0) == 0.0
    assert sigma_tilde(prof, 2.0) == pytest.approx(10.0)
    r = np.linspace(1.0, 1e6, 1000)
    vals = sigma_tilde(prof, r)
    assert np.all(np.diff(vals) > 0) and vals[-1] < 20.0
    with pytest.raises(ValueError):
        sigma_tilde(prof, 0.0)


def test_d_pair_examples(rng):
    assert d_pair(SC, 1.0, 0.5) == (1.0, 1.0)
    sc0 = ShiftedScaling.make(1.0, 5.0)
    assert d_pair(sc0, 5.0, 2.0)[0] == 2.0
    # shifted d stays in the disk centred at 1 + nu/2 with radius nu/2
    for s in random_right_half(rng, 1000, 100.0):
        d, _ = d_pair(SC, s, 1.5)
        assert abs(d - (1 + SC.nu / 2)) < SC.nu / 2


def test_scaled_coordinate():
    np.testing.assert_array_equal(scaled_coordinate(SC, 1.0, [0.3, 0.4]), [0.3, 0.4])
    np.testing.assert_allclose(scaled_coordinate(SC, 1.0, [2.0, 0.0]), [2 + 20 / 11, 0.0], rtol=1e-15)
    sc0 = ShiftedScaling.make(1.0, 4.0)
    xs = scaled_coordinate(sc0, 0.7, [1.5, 1.0])
    assert np.all(xs.imag == 0) and np.linalg.norm(xs.real) > np.linalg.norm([1.5, 1.0])


def test_jacobian(rng):
    np.testing.assert_array_equal(jacobian(SC, 1.0, [0.1, 0.2]), np.eye(2))
    d, dt = d_pair(SC, 2 + 1j, 3.0)
    np.testing.assert_allclose(jacobian(SC, 2 + 1j, [3.0, 0.0]), np.diag([d, dt]), rtol=1e-15)
    for s in random_right_half(rng, 100):
        r = rng.uniform(1.0, 5.0)
        th = rng.uniform(0, 2 * np.pi)
        x = r * np.array([math.cos(th), math.sin(th)])
        J = jacobian(SC, s, x)
        d, dt = d_pair(SC, s, r)
        assert abs(np.linalg.det(J) - d * dt) <= 1e-13 * abs(d * dt)


def test_jacobian_matches_finite_difference_of_scaled_map():
    s = 1.3 + 0.4j
    x = np.array([1.7, -0.6])
    h = 1e-6
    fd = np.column_stack([(scaled_coordinate(SC, s, x + h * e) - scaled_coordinate(SC, s, x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(jacobian(SC, s, x), fd, rtol=1e-7, atol=1e-8)


def test_a_sigma(rng):
    an = Anisotropy.from_a(random_spd(rng))
    np.testing.assert_array_equal(a_sigma(an, SC, 1.0, [0.2, 0.1]), an.a)
    undamped = ShiftedScaling.make(1.0, 0.0, 3.0)
    np.testing.assert_array_equal(a_sigma(an, undamped, 2 + 1j, [3.0, 1.0]), an.a)
    for s in random_right_half(rng, 100):
        x = rng.uniform(-4, 4, 2)
        if np.linalg.norm(x) <= 1.0:
            continue
        A = a_sigma(an, SC, s, x)
        assert np.abs(A - A.T).max() <= 1e-13 * np.abs(A).max()
        J = jacobian(SC, s, x)
        ref = np.linalg.inv(J) @ an.a @ np.linalg.inv(J).T * np.linalg.det(J)
        np.testing.assert_allclose(A, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
    iso = Anisotropy.isotropic(2.5)
    s = 0.4 + 2j
    d, dt = d_pair(SC, s, 2.0)
    np.testing.assert_allclose(a_sigma(iso, SC, s, [0.0, 2.0]), 2.5 * np.diag([d / dt, dt / d]), rtol=1e-14)


def test_sdd_coefficients(rng):
    sc0 = ShiftedScaling.make(1.0, 7.0)
    for s in random_right_half(rng, 100):
        r = rng.uniform(0.5, 4.0)
        for sc in (sc0, SC):
            d, dt = d_pair(sc, s, r)
            prod, ratio, inv = sdd_coefficients(sc, s, r)
            assert abs(prod - s * d * dt) <= 1e-12 * abs(s * d * dt)
            assert abs(ratio - s * d / dt) <= 1e-12 * abs(s * d / dt)
            assert abs(inv - s * dt / d) <= 1e-12 * abs(s * dt / d)
    assert sdd_coefficients(SC, 1 + 1j, 0.5) == (1 + 1j, 1 + 1j, 1 + 1j)


def test_sdd_unshifted_expanded_form():
    sc0 = ShiftedScaling.make(1.0, 7.0)
    s, r = 0.3 + 1.1j, 2.0
    sg, st = 7.0, 3.5
    prod, _, _ = sdd_coefficients(sc0, s, r)
    assert abs(prod - (s + sg + st + sg * st / s)) <= 1e-12 * abs(prod)


def test_mapped_radius(rng):
    lay = MappedLayer(1.0, 1.0)
    assert mapped_radius(lay, 1.0) == 1.0
    assert mapped_radius(lay, 1.5) == 2.0
    assert mapped_radius(lay, 1.0 + 1 - 1e-12) > 1e11
    with pytest.raises(ValueError):
        mapped_radius(lay, 2.0)
    with pytest.raises(ValueError):
        mapped_radius(lay, 0.5)
    a = rng.uniform(1.0, 2.0, 1000)
    b = rng.uniform(1.0, 2.0, 1000)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keep = hi > lo
    assert np.all(mapped_radius(lay, hi[keep]) > mapped_radius(lay, lo[keep]))
    r = 1.37
    h = 1e-6
    fd = (mapped_radius(lay, r + h) - mapped_radius(lay, r - h)) / (2 * h)
    assert mapped_radius_derivative(lay, r) == pytest.approx(fd, rel=1e-8)


def test_d_tilde_between_one_and_d(rng):
    for s in random_right_half(rng, 300):
        r = rng.uniform(1.0, 50.0)
        d, dt = d_pair(SC, s, r)
        assert abs(dt - 1) <= abs(d - 1) + 1e-15
    d_far, dt_far = d_pair(SC, 1 + 1j, 1e9)
    assert abs(dt_far - d_far) < 1e-7
    assert d_pair(SC, 1 + 1j, 1.0)[1] == 1.0


def test_half_angle_bound(rng):
    for g in (0.1, 1.0, 10.0):
        vals = [half_angle_bound(g, s) for s in random_right_half(rng, 10_000, 100.0)]
        assert max(vals) <= 0.5


def test_cos_ratio_bound(rng):
    for sc in (SC, ShiftedScaling.make(1.0, 1.0, 3.0), ShiftedScaling.make(1.0, 50.0, 2.0)):
        lb = cos_ratio_lower_bound(sc)
        ss = random_right_half(rng, 10_000, 100.0)
        rs = 1.0 + np.exp(rng.uniform(-8, 4, ss.size))
        worst = min(math.cos(cmath.phase(d / dt)) for d, dt in (d_pair(sc, s, r) for s, r in zip(ss, rs)))
        assert worst >= lb - 1e-14

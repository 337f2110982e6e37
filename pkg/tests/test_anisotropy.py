import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from radpml.anisotropy import (
    UNBOUNDED,
    Anisotropy,
    backward_wave_in_direction,
    beta,
    dispersion_omega,
    group_phase_velocity,
    mu_star,
    nu_star,
    slowness_curve,
    symmetric_eig2,
)

DIAG19 = Anisotropy.from_a(np.diag([1.0, 9.0]))
QUARTER = Anisotropy.from_b(np.diag([1.0, 0.25]))


def test_mu_star_examples():
    assert mu_star(DIAG19) == pytest.approx(5 / 3, abs=1e-14)
    assert mu_star(Anisotropy.isotropic()) == 1.0
    assert mu_star(QUARTER) == pytest.approx(1.25, abs=1e-14)


def test_beta_and_nu_star_examples():
    assert beta(Anisotropy.from_b(np.diag([1.0, 1 / 9]))) == pytest.approx(0.8, abs=1e-14)
    assert beta(Anisotropy.isotropic(3.0)) == 0.0
    assert beta(QUARTER) == pytest.approx(0.6, abs=1e-14)
    assert nu_star(0.8) == pytest.approx(3.0, abs=1e-14)
    assert nu_star(0.6) == pytest.approx(8.0, abs=1e-13)
    assert nu_star(Anisotropy.isotropic()) is UNBOUNDED
    with pytest.raises(ValueError):
        nu_star(1.0)


def test_invalid_tensors_rejected():
    with pytest.raises(ValueError):
        Anisotropy.from_a([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        Anisotropy.from_a([[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Anisotropy.from_a(np.eye(3))


def test_type_invariants(rng):
    for _ in range(200):
        an = Anisotropy.from_a(random_spd(rng))
        assert np.abs(an.b @ an.a - np.eye(2)).max() <= 1e-12 * np.abs(an.a).max() * np.abs(an.b).max()
        assert an.lambda_max >= an.lambda_min > 0
        for lam in (an.lambda_max, an.lambda_min):
            w, v = np.linalg.eigh(an.b)
            assert np.min(np.abs(w - lam)) <= 1e-12 * an.lambda_max
        rot = np.array([[math.cos(an.angle), -math.sin(an.angle)], [math.sin(an.angle), math.cos(an.angle)]])
        diag = rot.T @ an.b @ rot
        assert diag[0, 0] == pytest.approx(an.lambda_max, rel=1e-12)
        assert abs(diag[0, 1]) <= 1e-12 * an.lambda_max


def test_eig2_near_isotropic_no_cancellation():
    m = np.array([[1.0, 1e-9], [1e-9, 1.0 + 1e-12]])
    lmax, lmin, _ = symmetric_eig2(m)
    ref = np.linalg.eigvalsh(m)
    assert lmin == pytest.approx(ref[0], rel=1e-15)
    assert lmax == pytest.approx(ref[1], rel=1e-15)


def test_mu_star_at_least_one(rng):
    for _ in range(1000):
        an = Anisotropy.from_a(random_spd(rng))
        m = mu_star(an)
        assert m >= 1.0 - 1e-15
        if an.lambda_max - an.lambda_min > 1e-6 * an.lambda_max:
            assert m > 1.0 + 1e-14
    assert mu_star(Anisotropy.isotropic(7.0)) == pytest.approx(1.0, abs=1e-12)


def test_dispersion_and_velocities():
    assert dispersion_omega(Anisotropy.isotropic(), [1, 0]) == (1.0, -1.0)
    assert dispersion_omega(DIAG19, [0, 1]) == (3.0, -3.0)
    assert dispersion_omega(DIAG19, [0, 0]) == (0.0, -0.0)
    vg, vp = group_phase_velocity(Anisotropy.isotropic(), [1, 0])
    np.testing.assert_allclose(vg, [1, 0])
    np.testing.assert_allclose(vp, [1, 0])
    vg, vp = group_phase_velocity(DIAG19, [0, 1])
    np.testing.assert_allclose(vg, [0, 3])
    np.testing.assert_allclose(vp, [0, 3])
    with pytest.raises(ValueError):
        group_phase_velocity(DIAG19, [0, 0])


def test_group_velocity_is_gradient_of_omega(rng):
    an = Anisotropy.from_a(random_spd(rng))
    k = rng.normal(size=2)
    vg, _ = group_phase_velocity(an, k)
    h = 1e-6
    fd = [(dispersion_omega(an, k + h * e)[0] - dispersion_omega(an, k - h * e)[0]) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(vg, fd, rtol=1e-7, atol=1e-9)


def test_star_shaped(rng):
    for _ in range(1000):
        an = Anisotropy.from_a(random_spd(rng))
        k = rng.normal(size=2)
        vg, vp = group_phase_velocity(an, k)
        assert vg @ vp > 0


def test_backward_waves():
    for e in ([1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]):
        assert not backward_wave_in_direction(Anisotropy.isotropic(2.0), e)
    rot = Anisotropy.from_a([[2.0, 1.5], [1.5, 3.0]])
    scan = backward_wave_in_direction(rot, [1.0, 0.0])
    assert scan.backward and scan.worst_product < 0 and scan.sample_count == 720
    vg, vp = group_phase_velocity(rot, scan.witness_k)
    assert vg[0] * vp[0] < 0
    assert not backward_wave_in_direction(DIAG19, None)
    with pytest.raises(ValueError):
        backward_wave_in_direction(DIAG19, [1.0, 1.0])
    with pytest.raises(ValueError):
        backward_wave_in_direction(DIAG19, [1.0, 0.0], sample_count=4)


def test_diagonal_tensor_has_no_backward_wave_along_axes():
    # along a principal axis the group and phase projections share sign
    assert not backward_wave_in_direction(DIAG19, [1.0, 0.0])


def test_slowness_curve():
    pts = slowness_curve(Anisotropy.isotropic(), 4)
    np.testing.assert_allclose(np.array(pts), [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)
    pts = np.array(slowness_curve(DIAG19, 8))
    np.testing.assert_allclose(pts[0], [1, 0])
    np.testing.assert_allclose(pts[2], [0, 1 / 3], atol=1e-15)
    with pytest.raises(ValueError):
        slowness_curve(DIAG19, 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0, np.pi), st.integers(3, 50))
def test_slowness_points_satisfy_relation(l1, l2, th, n):
    c, s = math.cos(th), math.sin(th)
    rot = np.array([[c, -s], [s, c]])
    an = Anisotropy.from_a(rot @ np.diag([l1, l2]) @ rot.T)
    for p in slowness_curve(an, n):
        assert abs(p @ an.a @ p - 1.0) <= 1e-12


def test_coupling_ratio_bound(rng):
    # |z1^T B z2| / (z1^T B z1) <= mu_star for unit vectors
    for _ in range(50):
        an = Anisotropy.from_a(random_spd(rng))
        z = rng.normal(size=(200, 2, 2))
        z /= np.linalg.norm(z, axis=2, keepdims=True)
        num = np.abs(np.einsum("ni,ij,nj->n", z[:, 0], an.b, z[:, 1]))
        den = np.einsum("ni,ij,nj->n", z[:, 0], an.b, z[:, 0])
        assert np.all(num / den <= mu_star(an) + 1e-12)


def test_negative_coupling_ratio_bound(rng):
    # for |x|=1, |y|<1, x^T B c < 0 with c = x - y: (x^T B c)^2 / (x^T B x c^T B c) <= beta^2
    hits = 0
    for _ in range(40):
        an = Anisotropy.from_a(random_spd(rng))
        t = rng.uniform(0, 2 * np.pi, 250)
        x = np.column_stack([np.cos(t), np.sin(t)])
        rad = np.sqrt(rng.uniform(0, 1, 250))
        tt = rng.uniform(0, 2 * np.pi, 250)
        y = rad[:, None] * np.column_stack([np.cos(tt), np.sin(tt)])
        c = x - y
        xbc = np.einsum("ni,ij,nj->n", x, an.b, c)
        mask = xbc < 0
        hits += int(mask.sum())
        ratio = xbc[mask] ** 2 / (np.einsum("ni,ij,nj->n", x, an.b, x) * np.einsum("ni,ij,nj->n", c, an.b, c))[mask]
        assert np.all(ratio <= beta(an) ** 2 + 1e-12)
    assert hits > 0


def test_beta_range_and_nu_star_monotone():
    grid = np.linspace(0.01, 0.99, 500)
    vals = np.array([nu_star(b) for b in grid])
    assert np.all(np.diff(vals) < 0)
    assert beta(Anisotropy.from_a(np.diag([1.0, 1e8]))) < 1.0

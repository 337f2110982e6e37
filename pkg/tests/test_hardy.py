import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from scipy import integrate

from radpml.hardy import (
    BasisKind,
    DegeneratePoleError,
    RadialBasisSpec,
    hardy_matrices,
    laguerre_l_minus1,
    laplace_basis_values,
    one_pole_matrices,
    phi_n,
    phi_two_pole,
    quadrature_oracle,
    spatial_basis,
    two_pole_matrices,
)


def one_pole_spec(M):
    # a one-pole space with M + 1 functions; M = 2N + 1
    return RadialBasisSpec(BasisKind.ONE_POLE, (M - 1) // 2)


def test_spec_validation():
    with pytest.raises(DegeneratePoleError):
        RadialBasisSpec(BasisKind.TWO_POLE, 2, eta1=1.0)
    with pytest.raises(ValueError):
        RadialBasisSpec(BasisKind.TWO_POLE, 2, eta1=-1.0)
    with pytest.raises(ValueError):
        RadialBasisSpec(BasisKind.ONE_POLE, -1)
    with pytest.raises(ValueError):
        RadialBasisSpec(BasisKind.ONE_POLE, 1, eta0=2.0)
    assert RadialBasisSpec("two-pole", 3, eta1=20.0).size == 8


def test_laguerre_small_orders():
    x = np.linspace(0, 10, 7)
    np.testing.assert_array_equal(laguerre_l_minus1(0, x), np.ones_like(x))
    np.testing.assert_allclose(laguerre_l_minus1(1, x), -x, atol=1e-15)
    with pytest.raises(ValueError):
        laguerre_l_minus1(-1, 1.0)


@pytest.mark.parametrize("n", [2, 5, 9, 14])
def test_laguerre_rodrigues(n, rng):
    # L_{n,-1}(x) = x e^x / n! d^n/dx^n (x^{n-1} e^{-x})
    xs = sympy.symbols("x")
    expr = sympy.simplify(xs * sympy.exp(xs) / sympy.factorial(n) * sympy.diff(xs ** (n - 1) * sympy.exp(-xs), xs, n))
    f = sympy.lambdify(xs, sympy.expand(expr), "numpy")
    x = rng.uniform(0, 8, 10)
    np.testing.assert_allclose(laguerre_l_minus1(n, x), f(x), rtol=1e-10, atol=1e-10)


def test_basis_values_at_interface():
    assert phi_n(0, 1.0) == 1.0
    assert phi_n(1, 1.0) == 0.0
    r = np.linspace(1, 5, 9)
    np.testing.assert_allclose(phi_n(0, r), np.exp(1 - r))
    with pytest.raises(ValueError):
        phi_n(0, 0.5)
    with pytest.raises(DegeneratePoleError):
        phi_two_pole(1, 1.0, 2.0)


@pytest.mark.parametrize("eta", [0.5, 2.0, 20.0])
def test_two_pole_first_function(eta):
    r = np.linspace(1, 4, 13)
    ref = -(1 + eta) / (1 - eta) * (np.exp(-eta * (r - 1)) - np.exp(-(r - 1)))
    np.testing.assert_allclose(phi_two_pole(1, eta, r), ref, rtol=1e-13, atol=1e-15)
    assert phi_two_pole(0, eta, 1.0) == 1.0


def test_laplace_values():
    assert laplace_basis_values(0, 2.0)[0] == pytest.approx(1 / 3)
    assert laplace_basis_values(-1, 2.0) == (0j, 0j, 0j)
    with pytest.raises(ZeroDivisionError):
        laplace_basis_values(1, -1.0)
    with pytest.raises(DegeneratePoleError):
        laplace_basis_values(1, 1.0, "two-pole", 1.0)


@pytest.mark.parametrize("kind,eta", [("one-pole", 1.0), ("two-pole", 0.5), ("two-pole", 20.0)])
def test_laplace_round_trip(kind, eta, rng):
    spec = RadialBasisSpec(kind, 4, eta1=eta)
    basis = spatial_basis(spec)
    ps = rng.uniform(0.2, 5, 20) + 1j * rng.uniform(-5, 5, 20)
    for n, b in enumerate(basis):
        for p in ps:
            # numerical transform by quadrature, not the closed-form ExpPoly.laplace
            f = lambda xi, part: getattr(np.exp(-p * xi) * b(xi), part)
            val = complex(integrate.quad(f, 0, 80, args=("real",), limit=400, epsabs=1e-13)[0],
                          integrate.quad(f, 0, 80, args=("imag",), limit=400, epsabs=1e-13)[0])
            assert abs(val - laplace_basis_values(n, p, kind, eta)[0]) <= 1e-9


def test_one_pole_m1_matrices():
    hm = one_pole_matrices(1)
    np.testing.assert_allclose(hm.mass, [[0.5, -0.5], [-0.5, 1.0]], atol=1e-12)
    np.testing.assert_allclose(hm.r_mass, [[0.75, -1.0], [-1.0, 2.5]], atol=1e-12)
    m, rm, _ = quadrature_oracle(one_pole_spec(1), method="gauss")
    np.testing.assert_allclose(m, [[0.5, -0.5], [-0.5, 1.0]], atol=1e-12)
    np.testing.assert_allclose(rm, [[0.75, -1.0], [-1.0, 2.5]], atol=1e-12)


@pytest.mark.parametrize("M", [0, 1, 3, 8, 15, 21])
def test_one_pole_q_and_factors(M):
    hm = one_pole_matrices(M)
    np.testing.assert_array_equal(hm.q, 2 * np.eye(M + 1))
    ref = 0.5 * (np.diag(np.ones(M), 1))
    np.testing.assert_array_equal(hm.t_minus, -0.5 * np.eye(M + 1) + ref)
    np.testing.assert_array_equal(hm.t_plus, 0.5 * np.eye(M + 1) + ref)


@pytest.mark.parametrize("M", [1, 5, 11, 21])
def test_one_pole_against_oracle(M):
    hm = one_pole_matrices(M)
    for method in ("exact", "gauss"):
        m, rm, rc = quadrature_oracle(one_pole_spec(M), method=method)
        assert np.abs(hm.mass - m).max() <= 1e-10
        assert np.abs(hm.r_mass - rm).max() <= 1e-10
        assert np.abs(hm.r_coupling - rc).max() <= 1e-10


@pytest.mark.parametrize("eta", [0.5, 20.0])
@pytest.mark.parametrize("N", [0, 1, 4, 10])
def test_two_pole_against_oracle(eta, N):
    hm = two_pole_matrices(eta, N)
    m, rm, rc = quadrature_oracle(RadialBasisSpec("two-pole", N, eta1=eta))
    scale = max(1.0, np.abs(m).max())
    assert np.abs(hm.mass - m).max() <= 1e-9 * scale
    assert np.abs(hm.r_mass - rm).max() <= 1e-9 * max(1.0, np.abs(rm).max())
    assert np.abs(hm.r_coupling - rc).max() <= 1e-9 * max(1.0, np.abs(rc).max())


@pytest.mark.parametrize("eta", [0.5, 2.0, 20.0])
def test_two_pole_q_blocks(eta):
    hm = two_pole_matrices(eta, 3)
    q = hm.q
    np.testing.assert_array_equal(q, q.T)
    assert np.all(np.linalg.eigvalsh(q) > 0)
    k = (1 - eta) / (1 + eta)
    np.testing.assert_allclose(q[:2, :2], (1 + eta) ** 2 / 2 * np.array([[1, k], [k, 1]]), rtol=1e-15)
    # off-diagonal blocks vanish
    assert np.all(q[:2, 2:] == 0)


def test_two_pole_q_limit():
    for eta in (1 - 1e-6, 1 + 1e-6):
        q = two_pole_matrices(eta, 2).q
        np.testing.assert_allclose(q, 2 * np.eye(6), atol=1e-5)


def test_dispatch():
    hm = hardy_matrices(RadialBasisSpec("one-pole", 2))
    assert hm.size == 6
    np.testing.assert_array_equal(hm.mass, one_pole_matrices(5).mass)
    hm2 = hardy_matrices(RadialBasisSpec("two-pole", 2, eta1=20.0))
    np.testing.assert_array_equal(hm2.mass, two_pole_matrices(20.0, 2).mass)


@pytest.mark.parametrize("spec", [RadialBasisSpec("one-pole", 4), RadialBasisSpec("two-pole", 4, eta1=20.0),
                                  RadialBasisSpec("two-pole", 4, eta1=0.5)])
def test_unweighted_coupling_against_exact(spec):
    hm = hardy_matrices(spec)
    basis = spatial_basis(spec)
    ref = np.array([[float((b.derivative() * c).integral()) for c in basis] for b in basis])
    assert np.abs(hm.coupling - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())


def _bandwidth(mat, tol=1e-13):
    n = mat.shape[0]
    scale = np.abs(mat).max()
    return max((abs(i - j) for i in range(n) for j in range(n) if abs(mat[i, j]) > tol * scale), default=0)


def test_bandwidths():
    hm = one_pole_matrices(21)
    for mat in (hm.mass, hm.r_mass, hm.r_coupling):
        assert _bandwidth(mat) <= 2
    hm = two_pole_matrices(20.0, 10)
    for mat in (hm.mass, hm.r_mass, hm.r_coupling):
        assert _bandwidth(mat) <= 4


@pytest.mark.parametrize("spec", [RadialBasisSpec("one-pole", 10), RadialBasisSpec("two-pole", 10, eta1=20.0),
                                  RadialBasisSpec("two-pole", 10, eta1=0.5)])
def test_mass_cholesky(spec):
    hm = hardy_matrices(spec)
    np.linalg.cholesky(hm.mass)
    np.linalg.cholesky(hm.r_mass)


def test_plancherel():
    for n in range(7):
        for m in range(7):
            f = lambda w: (laplace_basis_values(n, 1j * w)[0] * laplace_basis_values(m, -1j * w)[0]).real
            val = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, limit=500)[0] / (2 * np.pi)
            ref = integrate.quad(lambda r: phi_n(n, r) * phi_n(m, r), 1, np.inf, epsabs=1e-13, limit=500)[0]
            assert abs(val - ref) <= 1e-8


def test_dp_consistency():
    h = 1e-5
    for n in range(6):
        for p in (0.3, 1.0, 2.5):
            num = integrate.quad(lambda xi: math.exp(-p * xi) * (1 + xi) * float(phi_n(n, 1 + xi)), 0, np.inf,
                                 epsabs=1e-14, limit=400)[0]
            phi = lambda q: laplace_basis_values(n, q)[0]
            dp = phi(p) - (phi(p + h) - phi(p - h)) / (2 * h)
            assert abs(num - dp.real) <= 1e-7


def test_exact_oracle_is_rational():
    basis = spatial_basis(RadialBasisSpec("two-pole", 1, eta1=0.5))
    assert all(isinstance(c, Fraction) for b in basis for c in b.terms)


def test_gauss_oracle_scope():
    with pytest.raises(ValueError):
        quadrature_oracle(RadialBasisSpec("two-pole", 2, eta1=20.0), method="gauss")
    with pytest.raises(ValueError):
        quadrature_oracle(RadialBasisSpec("one-pole", 2), method="simpson")

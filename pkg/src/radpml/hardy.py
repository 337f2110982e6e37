"""Radial Hardy-space infinite-element bases and their small dense matrices.

Two radial families live on ``r >= 1`` and are described through Laplace
transforms in the shifted variable ``xi = r - 1``:

* one-pole: ``phi_n(r) = exp(1 - r) L_{n,-1}(2r - 2)``,
  ``Phi_0 = 1/(p+1)``, ``Phi_n = -2/(p+1)^2 ((p-1)/(p+1))^(n-1)``;
* two-pole with decay rates 1 and ``eta``:
  ``Phi_0 = 1/(p+1)``, ``Phi_n = Psi_{n-1}/(p+1)``,
  ``Psi_n = -(1+eta)/(p+eta) ((p-1)/(p+1))^floor((n+1)/2) ((p-eta)/(p+eta))^floor(n/2)``.

Radial integrals follow from the factorisations

    mass        = T_-^T Q T_-          (int phi_m phi_n dr)
    r-mass      = T_-^T Q Dt^T T_-     (int r phi_m phi_n dr)
    r-coupling  = T_+^T Q Dt^T T_-     (int r phi_m' phi_n dr)

where ``T_-`` maps basis coefficients to an auxiliary basis,
``T_+`` does the same for derivatives, ``Q`` is the Gram matrix of the
auxiliary basis on the imaginary axis and row ``m`` of ``Dt`` holds the
expansion of ``(1 - d/dp)`` applied to auxiliary function ``m``.

The spatial form of every basis function is recovered exactly as a sum of
``exp(-c xi) * poly(xi)`` terms with rational coefficients, which gives an
independent oracle for all three matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Tuple

import numpy as np

__all__ = [
    "BasisKind",
    "RadialBasisSpec",
    "HardyMatrices",
    "ExpPoly",
    "laguerre_l_minus1",
    "phi_n",
    "phi_two_pole",
    "spatial_basis",
    "one_pole_matrices",
    "two_pole_matrices",
    "hardy_matrices",
    "quadrature_oracle",
    "laplace_basis_values",
    "DegeneratePoleError",
]


class DegeneratePoleError(ValueError):
    """Raised when the two-pole construction is requested with coinciding poles."""


class BasisKind(str, Enum):
    ONE_POLE = "one-pole"
    TWO_POLE = "two-pole"


@dataclass(frozen=True)
class RadialBasisSpec:
    """Description of a radial infinite-element space.

    Attributes
    ----------
    kind : BasisKind
        One-pole or two-pole family.
    n_order : int
        Order ``N``; both families have ``2(N+1)`` functions.
    eta1 : float
        Second decay rate for the two-pole family (ignored for one-pole).
    eta0 : float
        First decay rate, fixed to 1.
    """

    kind: BasisKind
    n_order: int
    eta1: float = 1.0
    eta0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if self.n_order < 0:
            raise ValueError("n_order must be nonnegative")
        if self.eta0 != 1.0:
            raise ValueError("eta0 is fixed to 1")
        if self.kind is BasisKind.TWO_POLE:
            if not self.eta1 > 0:
                raise ValueError("eta1 must be positive")
            if self.eta1 == 1.0:
                raise DegeneratePoleError("two-pole basis needs eta1 != 1; use the one-pole basis")

    @property
    def size(self) -> int:
        return 2 * (self.n_order + 1)


@dataclass(frozen=True)
class HardyMatrices:
    """Factor matrices and the assembled radial integrals.

    ``mass[m, n] = int_1^inf phi_m phi_n dr``,
    ``r_mass[m, n] = int_1^inf r phi_m phi_n dr`` and
    ``r_coupling[m, n] = int_1^inf r phi_m' phi_n dr``.
    """

    t_minus: np.ndarray
    t_plus: np.ndarray
    q: np.ndarray
    d_tilde: np.ndarray
    mass: np.ndarray = field(repr=False)
    r_mass: np.ndarray = field(repr=False)
    r_coupling: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.q.shape[0]

    @property
    def coupling(self) -> np.ndarray:
        """Unweighted derivative coupling ``int phi_m' phi_n dr = T_+^T Q T_-``."""
        return self.t_plus.T @ self.q @ self.t_minus


def _assemble(t_minus, t_plus, q, d_tilde) -> HardyMatrices:
    mass = t_minus.T @ q @ t_minus
    r_mass = t_minus.T @ q @ d_tilde.T @ t_minus
    r_coupling = t_plus.T @ q @ d_tilde.T @ t_minus
    return HardyMatrices(t_minus, t_plus, q, d_tilde, mass, 0.5 * (r_mass + r_mass.T), r_coupling)


# ---------------------------------------------------------------------------
# Closed-form matrices
# ---------------------------------------------------------------------------
def one_pole_matrices(M: int) -> HardyMatrices:
    """Matrices of the one-pole space spanned by ``phi_0, ..., phi_M``."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    n = M + 1
    eye = np.eye(n)
    sup = np.eye(n, k=1)
    t_minus = 0.5 * (-eye + sup)
    t_plus = 0.5 * (eye + sup)
    q = 2.0 * eye
    idx = np.arange(n, dtype=float)
    tri = np.diag(-(2 * idx + 1)) + np.diag(idx[1:], k=-1) + np.diag(idx[1:], k=1)
    d_tilde = eye - 0.5 * tri
    return _assemble(t_minus, t_plus, q, d_tilde)


def _two_pole_blocks(eta: float):
    """2x2 building blocks of the two-pole factor matrices.

    ``d_diag(l)``, ``d_upper(l)`` and ``d_lower(l)`` are the blocks of
    ``2 (I - Dt)`` in block row ``l``; they were derived by expanding
    ``(1 - d/dp)`` of each auxiliary basis function back into that basis.
    """
    e = float(eta)
    rho = (1.0 - e) / (1.0 + e)
    T = np.array([[rho, 1.0], [0.0, 0.0]])
    TU = np.array([[-rho, 0.0], [1.0, 0.0]])
    Qb = 0.5 * (1.0 + e) ** 2 * np.array([[1.0, rho], [rho, 1.0]])
    ee = e * (1.0 + e)

    def d_diag(l):
        return np.array([
            [-(l * e * e + (6 * l + 2) * e + l) / ee, ((l + 1) * e + l) / e],
            [(l * e + l + 1) / e, -((l + 1) * e * e + (6 * l + 4) * e + l + 1) / ee],
        ])

    def d_upper(l):
        return l * np.array([[rho, 0.0], [(1.0 + e) / e, (e - 1.0) / ee]])

    def d_lower(l):
        return l * np.array([[(e - 1.0) / ee, (1.0 + e) / e], [0.0, rho]])

    return T, TU, Qb, d_diag, d_upper, d_lower


def two_pole_matrices(eta: float, N: int) -> HardyMatrices:
    """Matrices of the two-pole space with rates ``1`` and ``eta``.

    The space has ``N + 1`` blocks of two functions each.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    if eta == 1.0:
        raise DegeneratePoleError("eta = 1 collapses the two poles; use one_pole_matrices")
    if not eta > 0:
        raise ValueError("eta must be positive")
    T, TU, Qb, d_diag, d_upper, d_lower = _two_pole_blocks(eta)
    nb = N + 1
    n = 2 * nb
    calT = np.zeros((n, n))
    Q = np.zeros((n, n))
    blk = np.zeros((n, n))
    for b in range(nb):
        sl = slice(2 * b, 2 * b + 2)
        calT[sl, sl] = T
        Q[sl, sl] = Qb
        blk[sl, sl] = d_diag(b)
        if b + 1 < nb:
            nx = slice(2 * b + 2, 2 * b + 4)
            calT[sl, nx] = TU
            blk[sl, nx] = d_upper(b + 1)
            blk[nx, sl] = d_lower(b + 1)
    eye = np.eye(n)
    t_minus = (-eye + calT) / (2.0 * eta)
    t_plus = 0.5 * (eye + calT)
    d_tilde = eye - 0.5 * blk
    return _assemble(t_minus, t_plus, Q, d_tilde)


def hardy_matrices(spec: RadialBasisSpec) -> HardyMatrices:
    """Dispatch on the basis kind; both kinds give ``2(N+1)`` functions."""
    if spec.kind is BasisKind.ONE_POLE:
        return one_pole_matrices(2 * spec.n_order + 1)
    return two_pole_matrices(spec.eta1, spec.n_order)


# ---------------------------------------------------------------------------
# Spatial form: sums of exp(-c xi) * polynomial(xi), xi = r - 1
# ---------------------------------------------------------------------------
def _padd(a: List, b: List) -> List:
    out = list(a) + [0] * max(0, len(b) - len(a))
    for i, v in enumerate(b):
        out[i] += v
    return out


def _pmul(a: List, b: List) -> List:
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


@dataclass(frozen=True)
class ExpPoly:
    """Function ``sum_c exp(-c xi) P_c(xi)`` with exact rational coefficients.

    ``terms`` maps a decay rate ``c`` to ascending polynomial coefficients.
    """

    terms: Dict[Fraction, Tuple[Fraction, ...]]

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        t = {c: list(p) for c, p in self.terms.items()}
        for c, p in other.terms.items():
            t[c] = _padd(t.get(c, []), list(p))
        return ExpPoly({c: tuple(p) for c, p in t.items()})

    def scale(self, k) -> "ExpPoly":
        k = Fraction(k)
        return ExpPoly({c: tuple(k * v for v in p) for c, p in self.terms.items()})

    def __mul__(self, other: "ExpPoly") -> "ExpPoly":
        t: Dict[Fraction, List] = {}
        for c1, p1 in self.terms.items():
            for c2, p2 in other.terms.items():
                c = c1 + c2
                t[c] = _padd(t.get(c, []), _pmul(list(p1), list(p2)))
        return ExpPoly({c: tuple(p) for c, p in t.items()})

    def derivative(self) -> "ExpPoly":
        out = {}
        for c, p in self.terms.items():
            dp = [i * p[i] for i in range(1, len(p))]
            out[c] = tuple(_padd([-c * v for v in p], dp))
        return ExpPoly(out)

    def times_r(self) -> "ExpPoly":
        """Multiply by ``r = 1 + xi``."""
        return ExpPoly({c: tuple(_pmul(list(p), [Fraction(1), Fraction(1)])) for c, p in self.terms.items()})

    def integral(self) -> Fraction:
        """Exact ``int_0^inf`` using ``int xi^j exp(-c xi) = j! / c^(j+1)``."""
        total = Fraction(0)
        for c, p in self.terms.items():
            if c <= 0:
                raise ValueError("non-decaying term cannot be integrated")
            for j, v in enumerate(p):
                if v:
                    total += v * math.factorial(j) / c ** (j + 1)
        return total

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        for c, p in self.terms.items():
            coeffs = np.array([float(v) for v in p]) if p else np.zeros(1)
            out = out + np.exp(-float(c) * xi) * np.polynomial.polynomial.polyval(xi, coeffs)
        return out

    def laplace(self, p: complex) -> complex:
        """Laplace transform in ``xi`` evaluated at ``p``."""
        total = 0j
        for c, poly in self.terms.items():
            for j, v in enumerate(poly):
                if v:
                    total += float(v) * math.factorial(j) / (p + float(c)) ** (j + 1)
        return total


def laguerre_l_minus1(n: int, x):
    """Generalised Laguerre polynomial ``L_{n,-1}(x)``.

    ``L_{0,-1} = 1`` and, for ``n >= 1``,
    ``L_{n,-1}(x) = sum_{k=1}^{n} (k/n) C(n,k) (-x)^k / k!``.
    Small orders use the explicit sum; larger orders run the three-term
    recurrence ``(m+1) L_{m+1} = (2m - x) L_m - (m - 1) L_{m-1}``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.ones_like(x)
    if n <= 8:
        out = np.zeros_like(x)
        for k in range(1, n + 1):
            out = out + (k / n) * math.comb(n, k) * (-x) ** k / math.factorial(k)
        return out
    prev, cur = np.ones_like(x), -x
    for m in range(1, n):
        prev, cur = cur, ((2 * m - x) * cur - (m - 1) * prev) / (m + 1)
    return cur


def _one_pole_exppoly(n: int) -> ExpPoly:
    if n == 0:
        return ExpPoly({Fraction(1): (Fraction(1),)})
    coeffs = [Fraction(0)] * (n + 1)
    for k in range(1, n + 1):
        # (-2 xi)^k contribution
        coeffs[k] = Fraction(k, n) * math.comb(n, k) * Fraction((-2) ** k, math.factorial(k))
    return ExpPoly({Fraction(1): tuple(coeffs)})


def _shift_poly(coeffs: List[Fraction], a: Fraction) -> List[Fraction]:
    """Coefficients of ``P(t + a)`` in ``t`` from coefficients of ``P``."""
    out = [Fraction(0)] * len(coeffs)
    for k, v in enumerate(coeffs):
        if v == 0:
            continue
        for j in range(k + 1):
            out[j] += v * math.comb(k, j) * a ** (k - j)
    return out


def _pole_part(numer: List[Fraction], c: Fraction, mult: int, other_c: Fraction, other_mult: int):
    """Laurent coefficients of ``numer(p) / ((p+c)^mult (p+other_c)^other_mult)`` at ``p = -c``.

    Returns ``a_j`` such that the principal part is ``sum_j a_j / (p+c)^j``.
    """
    # p = t - c
    num_t = _shift_poly(numer, -c)
    e = other_c - c
    # (t + e)^(-m) = e^(-m) sum_k C(m+k-1, k) (-t/e)^k
    series = [Fraction(math.comb(other_mult + k - 1, k)) * (-1) ** k / e ** (k + other_mult) for k in range(mult)]
    prod = _pmul(num_t[:mult] + [Fraction(0)] * max(0, mult - len(num_t)), series)[:mult]
    prod += [Fraction(0)] * (mult - len(prod))
    # coefficient of t^k multiplies t^(k - mult)
    return {mult - k: prod[k] for k in range(mult)}


def _two_pole_exppoly(n: int, eta: Fraction) -> ExpPoly:
    one = Fraction(1)
    if n == 0:
        return ExpPoly({one: (one,)})
    a = n // 2
    b = (n - 1) // 2
    # numerator -(1+eta) (p-1)^a (p-eta)^b
    numer = [-(1 + eta)]
    for _ in range(a):
        numer = _pmul(numer, [-one, one])
    for _ in range(b):
        numer = _pmul(numer, [-eta, one])
    terms = {}
    for c, m, oc, om in ((one, a + 1, eta, b + 1), (eta, b + 1, one, a + 1)):
        part = _pole_part(numer, c, m, oc, om)
        poly = [Fraction(0)] * m
        for j, coef in part.items():
            poly[j - 1] += coef / math.factorial(j - 1)
        terms[c] = tuple(poly)
    return ExpPoly(terms)


def spatial_basis(spec: RadialBasisSpec) -> List[ExpPoly]:
    """Exact spatial basis functions (as functions of ``xi = r - 1``)."""
    if spec.kind is BasisKind.ONE_POLE:
        return [_one_pole_exppoly(n) for n in range(spec.size)]
    eta = Fraction(spec.eta1)
    return [_two_pole_exppoly(n, eta) for n in range(spec.size)]


def phi_n(n: int, r):
    """One-pole radial basis function ``exp(1 - r) L_{n,-1}(2r - 2)`` for ``r >= 1``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("radial basis functions live on r >= 1")
    return np.exp(1.0 - r) * laguerre_l_minus1(n, 2.0 * r - 2.0)


def phi_two_pole(n: int, eta: float, r):
    """Two-pole radial basis function obtained by exact partial fractions."""
    if eta == 1.0:
        raise DegeneratePoleError("eta = 1 collapses the two poles; use phi_n")
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("radial basis functions live on r >= 1")
    return _two_pole_exppoly(n, Fraction(eta))(r - 1.0)


def quadrature_oracle(spec: RadialBasisSpec, method: str = "exact"):
    """Radial integrals of the spatial basis, independent of the factorisations.

    Parameters
    ----------
    spec : RadialBasisSpec
    method : {"exact", "gauss"}
        ``"exact"`` integrates each ``xi^j exp(-c xi)`` term in rational
        arithmetic. ``"gauss"`` evaluates the products with a Gauss-Laguerre
        rule in double precision; it is offered for the one-pole family only,
        since the two exponential parts of the two-pole functions carry large
        coefficients that cancel in floating point.

    Returns
    -------
    mass, r_mass, r_coupling : ndarray
        ``int phi_m phi_n``, ``int r phi_m phi_n`` and ``int r phi_m' phi_n``
        over ``(1, inf)``.
    """
    basis = spatial_basis(spec)
    n = len(basis)
    derivs = [b.derivative() for b in basis]
    mass = np.zeros((n, n))
    r_mass = np.zeros((n, n))
    r_coupling = np.zeros((n, n))
    if method == "exact":
        for i in range(n):
            for j in range(n):
                prod = basis[i] * basis[j]
                if j >= i:
                    mass[i, j] = mass[j, i] = float(prod.integral())
                    r_mass[i, j] = r_mass[j, i] = float(prod.times_r().integral())
                r_coupling[i, j] = float((derivs[i] * basis[j]).times_r().integral())
        return mass, r_mass, r_coupling
    if method != "gauss":
        raise ValueError(f"unknown method {method!r}")
    if spec.kind is not BasisKind.ONE_POLE:
        raise ValueError("the gauss oracle supports the one-pole family only; use method='exact'")
    # every product is a sum of exp(-c xi) * polynomial of degree < 2n + 2;
    # the polynomial parts are evaluated exactly at the nodes because their
    # monomial coefficients alternate and cancel badly in floating point
    x, w = np.polynomial.laguerre.laggauss(2 * n + 4)
    nodes = [Fraction(float(v)) for v in x]
    rates = sorted({c for b in basis for c in b.terms})
    sums = sorted({a + b for a in rates for b in rates})

    def values(poly, total):
        return np.array([float(sum(v * (t / total) ** j for j, v in enumerate(poly))) for t in nodes])

    tables = {}
    for total in sums:
        for k, fam in enumerate((basis, derivs)):
            for i, b in enumerate(fam):
                for c, poly in b.terms.items():
                    tables[total, k, i, c] = values(poly, total)
    for total in sums:
        xi = x / float(total)
        wt = w / float(total)
        for i in range(n):
            for j in range(n):
                for a in basis[j].terms:
                    b_rate = total - a
                    if b_rate in basis[i].terms:
                        pv = tables[total, 0, i, b_rate] * tables[total, 0, j, a]
                        mass[i, j] += np.dot(wt, pv)
                        r_mass[i, j] += np.dot(wt, pv * (1.0 + xi))
                    if b_rate in derivs[i].terms:
                        pv = tables[total, 1, i, b_rate] * tables[total, 0, j, a]
                        r_coupling[i, j] += np.dot(wt, pv * (1.0 + xi))
    return mass, r_mass, r_coupling


def laplace_basis_values(n: int, p: complex, kind: BasisKind | str = BasisKind.ONE_POLE, eta: float = 1.0):
    """Laplace-domain basis values ``(Phi_n, Psi_n, Psi_tilde_n)`` at ``p``.

    ``Psi_{-1} = 0``. For the one-pole family ``Psi_tilde`` coincides with
    ``Psi``; for the two-pole family it is the auxiliary basis with the roles
    of the two poles exchanged.
    """
    kind = BasisKind(kind)
    p = complex(p)
    if n < -1:
        raise ValueError("n must be >= -1")
    if kind is BasisKind.ONE_POLE:
        if p == -1:
            raise ZeroDivisionError("pole hit at p = -1")
        u = (p - 1) / (p + 1)

        def psi(m):
            return 0j if m < 0 else -2.0 / (p + 1) * u ** m

        if n < 0:
            return 0j, 0j, 0j
        phi = 1.0 / (p + 1) if n == 0 else -2.0 / (p + 1) ** 2 * u ** (n - 1)
        return phi, psi(n), psi(n)
    if eta == 1.0:
        raise DegeneratePoleError("eta = 1 collapses the two poles")
    if p == -1 or p == -eta:
        raise ZeroDivisionError("pole hit")
    u = (p - 1) / (p + 1)
    v = (p - eta) / (p + eta)

    def psi(m):
        if m < 0:
            return 0j
        return -(1 + eta) / (p + eta) * u ** ((m + 1) // 2) * v ** (m // 2)

    def psi_t(m):
        if m < 0:
            return 0j
        return -(1 + eta) / (p + 1) * v ** ((m + 1) // 2) * u ** (m // 2)

    if n < 0:
        return 0j, 0j, 0j
    phi = 1.0 / (p + 1) if n == 0 else psi(n - 1) / (p + 1)
    return phi, psi(n), psi_t(n)

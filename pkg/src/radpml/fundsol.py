"""Scaled distances, source-location classification and the PML Green's function.

For a layer point ``x`` (``|x| >= R``) and a source point ``y`` the stretched
squared distance is

    h(s; x, y) = (x_s - y_s)^T B (x_s - y_s),

and the Laplace-domain fundamental solution of the layered problem is
``K0(s sqrt(h)) / (2 pi sqrt(det A))``. When ``h`` reaches the half-line
``(-inf, 0]`` for some ``s`` with ``Re s > 0`` the Green's function loses
analyticity, which is the signature of an unstable layer.

With ``c = R xh - y``, ``xi = |x| - R`` and ``d = 1 + sigma_c / s``,
``h = |c|^2 g11 + 2 d xi |c| g12 + d^2 xi^2 g22`` where
``g11 = ch^T B ch``, ``g12 = xh^T B ch`` and ``g22 = xh^T B xh``.
A source location is unstable exactly when ``g12 < 0`` for some direction
``xh``; every source closer to the origin than ``R / mu_star`` is stable.

The module also builds a point ``(s0, x0, xi0)`` where the principal symbol
``xi^T A_sigma xi`` vanishes, i.e. a witness that the layered operator is not
Fredholm.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import optimize, special

from .anisotropy import Anisotropy, mu_star
from .scaling import DampingProfile, ShiftedScaling, a_sigma, jacobian, scaled_coordinate

__all__ = [
    "BranchCutError",
    "BesselRangeError",
    "NoWitnessError",
    "WitnessSearchError",
    "bessel_k0",
    "bessel_k1",
    "bessel_i1",
    "GammaCoeffs",
    "gamma_coeffs",
    "Verdict",
    "PointClass",
    "classify_point",
    "stability_map",
    "h_sigma",
    "InstabilityWitness",
    "instability_witness",
    "green",
    "rotated_coupling_ratio",
    "SpectrumWitness",
    "essential_spectrum_witness",
    "circle_integral_check",
]

VERDICT_MARGIN = 1e-12


class BranchCutError(ValueError):
    """Argument lies on the branch cut ``(-inf, 0]``."""


class BesselRangeError(ArithmeticError):
    """Bessel value overflowed or underflowed the double range."""


class NoWitnessError(ValueError):
    """The input admits no witness of the requested kind."""


class WitnessSearchError(RuntimeError):
    """A witness should exist but the numerical search failed."""


# ---------------------------------------------------------------------------
# Modified Bessel functions
# ---------------------------------------------------------------------------
def _on_cut(z: complex) -> bool:
    return z.imag == 0.0 and z.real <= 0.0


def _checked(value: complex, z: complex, name: str) -> complex:
    if not cmath.isfinite(value):
        raise BesselRangeError(f"{name}({z}) overflows")
    if value == 0 and cmath.isfinite(z):
        raise BesselRangeError(f"{name}({z}) underflows")
    return value


def bessel_k0(z) -> complex:
    """Modified Bessel function ``K0`` on the principal branch."""
    z = complex(z)
    if _on_cut(z):
        raise BranchCutError(f"K0 is not defined on (-inf, 0]: z={z}")
    return _checked(complex(special.kv(0, z)), z, "K0")


def bessel_k1(z) -> complex:
    """Modified Bessel function ``K1`` on the principal branch."""
    z = complex(z)
    if _on_cut(z):
        raise BranchCutError(f"K1 is not defined on (-inf, 0]: z={z}")
    return _checked(complex(special.kv(1, z)), z, "K1")


def bessel_i1(x):
    """Modified Bessel function ``I1`` for real ``x >= 0``."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise ValueError("I1 is evaluated on nonnegative reals only")
    out = special.i1(x_arr)
    if not np.all(np.isfinite(out)):
        raise BesselRangeError("I1 overflows")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Direction coefficients and source classification
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GammaCoeffs:
    """Direction coefficients for a layer point ``x`` and a source ``y``."""

    g11: float
    g12: float
    g22: float
    c: np.ndarray
    xi: float

    @property
    def c_norm(self) -> float:
        return float(np.hypot(self.c[0], self.c[1]))


def gamma_coeffs(aniso: Anisotropy, x, y, radius_pml: float) -> GammaCoeffs:
    """Evaluate ``g11, g12, g22``, ``c = R xh - y`` and ``xi = |x| - R``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = float(np.hypot(x[0], x[1]))
    if r == 0.0:
        raise ValueError("x must be nonzero")
    if r < radius_pml * (1 - 1e-14):
        raise ValueError("x must lie in the layer, |x| >= R")
    xh = x / r
    c = radius_pml * xh - y
    cn = float(np.hypot(c[0], c[1]))
    if cn == 0.0:
        raise ValueError("source sits on the interface point R xh")
    ch = c / cn
    B = aniso.b
    return GammaCoeffs(float(ch @ B @ ch), float(xh @ B @ ch), float(xh @ B @ xh), c, r - radius_pml)


def _g12_of_angle(aniso: Anisotropy, y: np.ndarray, R: float, theta):
    theta = np.asarray(theta, dtype=float)
    xh = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    c = R * xh - y
    cn = np.hypot(c[..., 0], c[..., 1])
    return np.einsum("...i,ij,...j->...", xh, aniso.b, c) / cn


class Verdict(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class PointClass:
    """Classification of a source location.

    ``min_g12`` is the smallest ``g12`` found; ``witness_direction`` is the
    direction attaining it when the point is unstable.
    """

    verdict: Verdict
    min_g12: float
    min_angle: float
    witness_direction: Optional[np.ndarray] = None

    @property
    def unstable(self) -> bool:
        return self.verdict is Verdict.UNSTABLE


def classify_point(aniso: Anisotropy, profile: DampingProfile, y, angular_samples: int = 256) -> PointClass:
    """Decide whether ``g12(xh, y) < 0`` for some direction ``xh``.

    The angular minimum is sampled, then refined by a bounded golden-section
    search around the best sample. Sources near the interface get a denser
    sampling because ``g12`` varies on the scale ``(R - |y|) / R``.
    """
    if angular_samples < 64:
        raise ValueError("angular_samples must be at least 64")
    y = np.asarray(y, dtype=float)
    R = profile.radius_pml
    ry = float(np.hypot(y[0], y[1]))
    if ry >= R:
        raise ValueError("source must lie strictly inside the interface circle")
    n = max(angular_samples, min(int(math.ceil(16.0 * math.pi * R / (R - ry))), 1 << 20))
    theta = 2.0 * np.pi * np.arange(n) / n
    vals = _g12_of_angle(aniso, y, R, theta)
    i = int(np.argmin(vals))
    step = 2.0 * np.pi / n
    res = optimize.minimize_scalar(
        lambda t: float(_g12_of_angle(aniso, y, R, t)),
        bounds=(theta[i] - step, theta[i] + step),
        method="bounded",
        options={"xatol": 1e-13},
    )
    best_t, best = (float(res.x), float(res.fun)) if res.fun < vals[i] else (float(theta[i]), float(vals[i]))
    if best < -VERDICT_MARGIN:
        direction = np.array([math.cos(best_t), math.sin(best_t)])
        return PointClass(Verdict.UNSTABLE, best, best_t, direction)
    return PointClass(Verdict.STABLE, best, best_t, None)


def stability_map(aniso: Anisotropy, profile: DampingProfile, n: int, angular_samples: int = 256):
    """Classify an ``n x n`` grid on ``[-R, R]^2`` restricted to ``|y| < R``.

    Returns a list of ``(y1, y2, PointClass)`` in row-major order
    (``y2`` outer, ``y1`` inner).
    """
    if n < 2:
        raise ValueError("grid needs at least two points per side")
    R = profile.radius_pml
    ticks = np.linspace(-R, R, n)
    out = []
    for y2 in ticks:
        for y1 in ticks:
            if math.hypot(y1, y2) < R * (1.0 - 1e-9):
                out.append((float(y1), float(y2), classify_point(aniso, profile, (y1, y2), angular_samples)))
    return out


# ---------------------------------------------------------------------------
# Scaled distance, Green's function and instability witnesses
# ---------------------------------------------------------------------------
def h_sigma(aniso: Anisotropy, scaling: ShiftedScaling, s, x, y) -> complex:
    """Stretched squared distance ``(x_s - y_s)^T B (x_s - y_s)``."""
    dz = scaled_coordinate(scaling, s, x) - scaled_coordinate(scaling, s, y)
    return complex(dz @ aniso.b @ dz)


def green(aniso: Anisotropy, scaling: ShiftedScaling, s, x, y) -> complex:
    """Laplace-domain fundamental solution ``K0(s sqrt(h)) / (2 pi sqrt(det A))``."""
    s = complex(getattr(s, "s", s))
    if np.allclose(np.asarray(x, float), np.asarray(y, float), rtol=0, atol=0):
        raise ValueError("x and y must differ")
    h = h_sigma(aniso, scaling, s, x, y)
    if h.imag == 0.0 and h.real <= 0.0:
        raise BranchCutError(f"scaled distance hits the branch cut: h={h}")
    return bessel_k0(s * cmath.sqrt(h)) / (2.0 * math.pi * math.sqrt(aniso.det_a))


@dataclass(frozen=True)
class InstabilityWitness:
    """Frequency and layer point at which ``h`` touches the branch cut."""

    s: complex
    x: np.ndarray
    h: complex
    direction: np.ndarray


def instability_witness(aniso: Anisotropy, profile: DampingProfile, y, angular_samples: int = 256,
                        re_d: float = 2.0) -> InstabilityWitness:
    """Construct ``(s, x)`` with ``h(s; x, y) = 0`` for an unstable source ``y``.

    ``h`` vanishes when ``Re d = -|c| g12 / (xi g22)`` and
    ``cos^2 arg d = g12^2 / (g11 g22)``. The construction fixes ``Re d``,
    takes ``arg d`` on that boundary and solves for the layer depth ``xi``.
    """
    if profile.sigma_c <= 0:
        raise NoWitnessError("an undamped layer has no instability witness")
    y = np.asarray(y, dtype=float)
    cls = classify_point(aniso, profile, y, angular_samples)
    if not cls.unstable:
        raise NoWitnessError(f"source {y} is stable; g12 >= 0 in every direction")
    R = profile.radius_pml
    xh = cls.witness_direction
    gc = gamma_coeffs(aniso, R * xh, y, R)
    disc = max(gc.g11 * gc.g22 - gc.g12 ** 2, 0.0)
    tan_arg = math.sqrt(disc) / abs(gc.g12)
    d = complex(re_d, re_d * tan_arg)
    s = profile.sigma_c / (d - 1.0)
    xi = -gc.c_norm * gc.g12 / (re_d * gc.g22)
    x = (R + xi) * xh
    h = h_sigma(aniso, ShiftedScaling(profile, 0.0), s, x, y)
    return InstabilityWitness(s, x, h, xh)


# ---------------------------------------------------------------------------
# Essential-spectrum witness
# ---------------------------------------------------------------------------
def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def rotated_coupling_ratio(aniso: Anisotropy, phi: float) -> float:
    """``|A12| / sqrt(A11 A22)`` of ``A`` written in the polar frame at angle ``phi``."""
    rot = _rotation(phi)
    ap = rot.T @ aniso.a @ rot
    return abs(ap[0, 1]) / math.sqrt(ap[0, 0] * ap[1, 1])


@dataclass(frozen=True)
class SpectrumWitness:
    """Point where ``xi0^T A_sigma(s0, x0) xi0`` vanishes.

    ``xi0`` is Cartesian; ``tau = arg(d / dt)`` and ``a0`` is the coupling
    ratio at the polar angle ``phi``.
    """

    s0: complex
    x0: np.ndarray
    xi0: np.ndarray
    residual: float
    phi: float
    tau: float
    a0: float


def _cos_arg_z(eta, omega, sg, st):
    re = eta * eta + omega * omega + (sg + st) * eta + sg * st
    im = (st - sg) * omega
    return re / math.hypot(re, im)


def essential_spectrum_witness(aniso: Anisotropy, profile: DampingProfile, phi: Optional[float] = None,
                               tol: float = 1e-10) -> SpectrumWitness:
    """Find ``(s0, x0, xi0)`` annihilating the stretched principal symbol.

    In the polar frame at angle ``phi`` the stretched tensor has entries
    ``(dt/d) A11, A12, (d/dt) A22``; with
    ``xi0 = (c^{1/2} sqrt(A22), -c^{-1/2} sqrt(A11) sign A12)``, ``c = |d/dt|``,
    the symbol vanishes iff ``cos arg(d/dt) = a0``. Writing ``s = eta + i omega``,
    ``arg(d/dt) = arg z`` with
    ``z = eta^2 + omega^2 + (sigma + sigma_t) eta + sigma sigma_t + i (sigma_t - sigma) omega``.
    The search picks a layer radius and ``omega`` where ``cos arg z < a0`` at
    ``eta = 0`` and root-finds in ``eta``.
    """
    if aniso.is_isotropic:
        raise NoWitnessError("isotropic media have no essential-spectrum witness")
    if profile.sigma_c <= 0:
        raise NoWitnessError("an undamped layer has no essential-spectrum witness")
    if phi is None:
        grid = np.linspace(0.0, np.pi, 721)
        ratios = [rotated_coupling_ratio(aniso, p) for p in grid]
        phi = float(grid[int(np.argmax(ratios))])
    a0 = rotated_coupling_ratio(aniso, phi)
    if a0 <= 1e-12:
        raise NoWitnessError(f"polar frame at phi={phi} decouples; pick another angle")
    R, sc = profile.radius_pml, profile.sigma_c
    scaling = ShiftedScaling(profile, 0.0)
    rot = _rotation(phi)
    ap = rot.T @ aniso.a @ rot
    last_error = "no admissible (r0, omega0) found"
    for k in range(1, 9):
        eps = 10.0 ** (-k)
        r0 = R * (1.0 + eps * eps)
        omega0 = sc * eps
        st = sc * (r0 - R) / r0
        if _cos_arg_z(0.0, omega0, sc, st) >= a0:
            continue
        hi = max(sc, omega0, 1.0)
        while _cos_arg_z(hi, omega0, sc, st) <= a0:
            hi *= 2.0
            if hi > 1e300:
                raise WitnessSearchError("failed to bracket the root in eta")
        f = lambda e: _cos_arg_z(e, omega0, sc, st) - a0
        eta0 = optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        if not eta0 > 0:
            last_error = f"root at eta={eta0} is not in the right half-plane"
            continue
        s0 = complex(eta0, omega0)
        d = 1.0 + sc / s0
        dt = 1.0 + st / s0
        cd = abs(d / dt)
        tau = cmath.phase(d / dt)
        sgn = math.copysign(1.0, ap[0, 1])
        xi_polar = np.array([math.sqrt(cd) * math.sqrt(ap[1, 1]), -sgn * math.sqrt(ap[0, 0]) / math.sqrt(cd)])
        xi = rot @ xi_polar
        x0 = r0 * np.array([math.cos(phi), math.sin(phi)])
        resid = abs(complex(xi @ a_sigma(aniso, scaling, s0, x0) @ xi))
        if resid <= tol:
            return SpectrumWitness(s0, x0, xi, resid, phi, tau, a0)
        last_error = f"residual {resid:.3e} above tolerance at r0={r0}, omega0={omega0}"
    raise WitnessSearchError(last_error)


# ---------------------------------------------------------------------------
# Circle integral identity
# ---------------------------------------------------------------------------
def circle_integral_check(aniso: Anisotropy, scaling: ShiftedScaling, s, x, rtol: float = 1e-14,
                          max_points: int = 1 << 18) -> Tuple[complex, complex]:
    """Quadrature of ``int_{S^1} dz / (z^T J^T B J z)`` and its closed form.

    The periodic trapezoidal rule is refined by doubling until two successive
    values agree to ``rtol``. Returns ``(quadrature, 2 pi sqrt(det A) / det J)``.
    """
    J = jacobian(scaling, s, x)
    M = J.T @ aniso.b @ J
    closed = 2.0 * math.pi * math.sqrt(aniso.det_a) / (J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])

    def trap(n):
        t = 2.0 * np.pi * np.arange(n) / n
        z = np.stack([np.cos(t), np.sin(t)])
        q = M[0, 0] * z[0] ** 2 + (M[0, 1] + M[1, 0]) * z[0] * z[1] + M[1, 1] * z[1] ** 2
        return complex(np.sum(1.0 / q) * (2.0 * np.pi / n))

    n = 64
    prev = trap(n)
    while n < max_points:
        n *= 2
        cur = trap(n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur, complex(closed)
        prev = cur
    return prev, complex(closed)


def stable_radius(aniso: Anisotropy, profile: DampingProfile) -> float:
    """Radius ``R / mu_star`` of the disk of guaranteed-stable sources."""
    return profile.radius_pml / mu_star(aniso)

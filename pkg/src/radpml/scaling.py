"""Complex scaling algebra of radial perfectly matched layers.

A radial layer starts at ``r = R`` and stretches the radius as

    r  ->  r * dt(s, r),    dt = 1 + sigma_t(r) / (s + gamma),
    sigma_t(r) = r^{-1} int_R^r sigma,

so that ``d(r dt)/dr = d = 1 + sigma(r)/(s + gamma)``. With ``gamma > 0`` the
layer is frequency shifted. The Jacobian of the stretch is
``J = d P_par + dt P_perp`` (projectors along and across ``x``), and the
stretched tensor is ``A_sigma = J^{-1} A J^{-T} det J``.

A separate map ``f_L(r) = R L / (R + L - r)`` sends the finite layer
``[R, R + L)`` onto ``[R, inf)`` for truncation-free layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .anisotropy import Anisotropy

__all__ = [
    "ProfileKind",
    "DampingProfile",
    "ShiftedScaling",
    "ComplexFreq",
    "MappedLayer",
    "SingularJacobianError",
    "sigma",
    "sigma_tilde",
    "d_pair",
    "scaled_coordinate",
    "jacobian",
    "a_sigma",
    "sdd_coefficients",
    "mapped_radius",
    "mapped_radius_derivative",
    "half_angle_bound",
    "cos_ratio_lower_bound",
]

_TINY_RADIUS = 1e-300


class SingularJacobianError(ArithmeticError):
    """The stretch Jacobian is singular at the requested frequency."""


class ProfileKind(str, Enum):
    PIECEWISE_CONSTANT = "piecewise-constant"


@dataclass(frozen=True)
class DampingProfile:
    """Damping ``sigma(r) = 0`` for ``r <= R`` and ``sigma_c`` beyond."""

    radius_pml: float
    sigma_c: float
    kind: ProfileKind = ProfileKind.PIECEWISE_CONSTANT

    def __post_init__(self):
        if not self.radius_pml > 0:
            raise ValueError("radius_pml must be positive")
        if not self.sigma_c >= 0:
            raise ValueError("sigma_c must be nonnegative")
        object.__setattr__(self, "kind", ProfileKind(self.kind))


@dataclass(frozen=True)
class ShiftedScaling:
    """Damping profile together with the frequency shift ``gamma``."""

    profile: DampingProfile
    gamma: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")

    @property
    def nu(self) -> Optional[float]:
        """``sigma_c / gamma``, or ``None`` without a shift."""
        return None if self.gamma == 0 else self.profile.sigma_c / self.gamma

    @classmethod
    def make(cls, radius_pml: float, sigma_c: float, gamma: float = 0.0) -> "ShiftedScaling":
        return cls(DampingProfile(radius_pml, sigma_c), gamma)


@dataclass(frozen=True)
class ComplexFreq:
    """Laplace frequency with strictly positive real part."""

    s: complex

    def __post_init__(self):
        s = complex(self.s)
        if not s.real > 0:
            raise ValueError(f"Laplace frequency must satisfy Re s > 0, got {s}")
        object.__setattr__(self, "s", s)

    def __complex__(self):
        return self.s


def _freq(s) -> complex:
    return complex(s.s) if isinstance(s, ComplexFreq) else complex(s)


@dataclass(frozen=True)
class MappedLayer:
    """Finite layer ``[R, R + L)`` mapped onto ``[R, inf)``."""

    radius_pml: float
    width: float

    def __post_init__(self):
        if not self.radius_pml > 0:
            raise ValueError("radius_pml must be positive")
        if not self.width > 0:
            raise ValueError("width must be positive")


def sigma(profile: DampingProfile, r):
    """Damping value at radius ``r``."""
    r = np.asarray(r, dtype=float)
    return np.where(r > profile.radius_pml, profile.sigma_c, 0.0)


def sigma_tilde(profile: DampingProfile, r):
    """Averaged damping ``r^{-1} int_R^r sigma``; ``sigma_c (r - R) / r`` past ``R``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("radius must be positive")
    R = profile.radius_pml
    out = np.where(r_arr > R, profile.sigma_c * (r_arr - R) / r_arr, 0.0)
    return float(out) if out.ndim == 0 else out


def d_pair(scaling: ShiftedScaling, s, r) -> Tuple[complex, complex]:
    """Stretch factors ``(d, dt)`` at frequency ``s`` and radius ``r``."""
    s = _freq(s)
    if r <= 0:
        raise ValueError("radius must be positive")
    z = s + scaling.gamma
    if z == 0:
        raise ZeroDivisionError("s + gamma vanishes")
    sg = float(sigma(scaling.profile, r))
    st = sigma_tilde(scaling.profile, r)
    return 1.0 + sg / z, 1.0 + st / z


def scaled_coordinate(scaling: ShiftedScaling, s, x) -> np.ndarray:
    """Stretched point ``x * dt(s, |x|)``."""
    x = np.asarray(x, dtype=float)
    r = float(np.hypot(x[0], x[1]))
    if r <= scaling.profile.radius_pml:
        return x.astype(complex)
    return x * d_pair(scaling, s, r)[1]


def _projectors(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r = float(np.hypot(x[0], x[1]))
    if r < _TINY_RADIUS:
        raise ValueError("projectors are undefined at the origin")
    xh = x / r
    par = np.outer(xh, xh)
    return par, np.eye(2) - par


def jacobian(scaling: ShiftedScaling, s, x) -> np.ndarray:
    """Jacobian ``d P_par + dt P_perp`` of the stretch at ``x``."""
    x = np.asarray(x, dtype=float)
    r = float(np.hypot(x[0], x[1]))
    if r <= scaling.profile.radius_pml:
        return np.eye(2, dtype=complex)
    d, dt = d_pair(scaling, s, r)
    par, perp = _projectors(x)
    return d * par + dt * perp


def a_sigma(aniso: Anisotropy, scaling: ShiftedScaling, s, x) -> np.ndarray:
    """Stretched material tensor ``J^{-1} A J^{-T} det J``."""
    x = np.asarray(x, dtype=float)
    r = float(np.hypot(x[0], x[1]))
    if r <= scaling.profile.radius_pml:
        return aniso.a.astype(complex)
    d, dt = d_pair(scaling, s, r)
    if d == 0 or dt == 0:
        raise SingularJacobianError(f"singular stretch at s={_freq(s)}: d={d}, dt={dt}")
    par, perp = _projectors(x)
    # J^{-1} det J = dt P_par + d P_perp
    adj = dt * par + d * perp
    return adj @ aniso.a @ adj.T / (d * dt)


def sdd_coefficients(scaling: ShiftedScaling, s, r) -> Tuple[complex, complex, complex]:
    """``(s d dt, s d / dt, s dt / d)`` through their partial-fraction forms.

    The expanded forms are the ones that turn into time-domain coefficients:
    polynomial parts become reaction terms and each ``1/(s + c)`` factor an
    auxiliary ODE.
    """
    s = _freq(s)
    sg = float(sigma(scaling.profile, r))
    st = sigma_tilde(scaling.profile, r)
    g = scaling.gamma
    if g == 0.0:
        prod = s + sg + st + sg * st / s
        ratio = s + sg - st - (sg - st) * st / (s + st)
        inv_ratio = s - (sg - st) + (sg - st) * sg / (s + sg)
        return prod, ratio, inv_ratio
    z = s + g
    prod = s + sg + st + (sg * st - g * (sg + st)) / z - g * sg * st / z ** 2
    ratio = s + sg - st - (sg - st) * (g + st) / (z + st)
    inv_ratio = s - (sg - st) + (sg - st) * (g + sg) / (z + sg)
    return prod, ratio, inv_ratio


def mapped_radius(layer: MappedLayer, r):
    """``f_L(r) = R L / (R + L - r)`` on ``[R, R + L)``."""
    r_arr = np.asarray(r, dtype=float)
    R, L = layer.radius_pml, layer.width
    if np.any(r_arr < R) or np.any(r_arr >= R + L):
        raise ValueError("mapped radius needs R <= r < R + L")
    out = R * L / (R + L - r_arr)
    return float(out) if out.ndim == 0 else out


def mapped_radius_derivative(layer: MappedLayer, r):
    """``f_L'(r) = R L / (R + L - r)^2``."""
    r_arr = np.asarray(r, dtype=float)
    R, L = layer.radius_pml, layer.width
    out = R * L / (R + L - r_arr) ** 2
    return float(out) if out.ndim == 0 else out


def half_angle_bound(gamma: float, s) -> float:
    """``|Im 1/(s/gamma + 1)|``, at most 1/2 on the right half-plane."""
    s = _freq(s)
    return abs((1.0 / (s / gamma + 1.0)).imag)


def cos_ratio_lower_bound(scaling: ShiftedScaling) -> float:
    """Lower bound ``1/sqrt(1 + (sigma_c / 2 gamma)^2)`` for ``cos arg(d/dt)``."""
    if scaling.gamma == 0:
        return 0.0
    return 1.0 / math.sqrt(1.0 + (scaling.profile.sigma_c / (2.0 * scaling.gamma)) ** 2)

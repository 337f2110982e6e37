"""Material tensor bookkeeping and plane-wave diagnostics for anisotropic media.

The scalar wave equation ``u_tt = div(A grad u)`` with a constant symmetric
positive definite ``A`` has the dispersion relation ``omega^2 = k^T A k``.
This module stores ``A``, its inverse ``B`` and the eigenvalues of ``B`` and
derives the scalar constants that control radial PML stability:

    mu_star = (lmax + lmin) / (2 sqrt(lmax lmin))
    beta    = (lmax - lmin) / (lmax + lmin)
    nu_star = 2 sqrt(1/beta^2 - 1) (sqrt(1/beta^2 - 1) + 1/beta)

``mu_star`` bounds how far inside the PML interface a source must sit,
``nu_star`` bounds the ratio ``sigma_c / gamma`` of a frequency-shifted PML.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

__all__ = [
    "Anisotropy",
    "UNBOUNDED",
    "symmetric_eig2",
    "mu_star",
    "beta",
    "nu_star",
    "dispersion_omega",
    "group_phase_velocity",
    "backward_wave_in_direction",
    "slowness_curve",
    "BackwardWaveScan",
]

#: Marker returned by :func:`nu_star` for isotropic media (no restriction on nu).
UNBOUNDED = math.inf

DEFAULT_BACKWARD_SAMPLES = 720


def symmetric_eig2(m) -> Tuple[float, float, float]:
    """Eigenvalues of a real symmetric 2x2 matrix in closed form.

    Returns ``(lam_max, lam_min, theta)`` where ``(cos theta, sin theta)`` is
    the eigenvector of ``lam_max``. The smaller eigenvalue is recovered from
    the determinant, which avoids cancellation when the matrix is nearly
    isotropic or badly scaled.
    """
    m = np.asarray(m, dtype=float)
    p, q, r = m[0, 0], 0.5 * (m[0, 1] + m[1, 0]), m[1, 1]
    mean = 0.5 * (p + r)
    rad = math.hypot(0.5 * (p - r), q)
    lam_max = mean + rad if mean >= 0 else mean - rad
    det = p * r - q * q
    lam_other = det / lam_max if lam_max != 0 else mean - rad
    lam_max, lam_min = max(lam_max, lam_other), min(lam_max, lam_other)
    theta = 0.5 * math.atan2(2.0 * q, p - r)
    return lam_max, lam_min, theta


@dataclass(frozen=True)
class Anisotropy:
    """Constant SPD material tensor ``A`` with ``B = A^{-1}``.

    Attributes
    ----------
    a, b : ndarray, shape (2, 2)
        Wave-speed tensor and its inverse.
    lambda_max, lambda_min : float
        Eigenvalues of ``b``.
    angle : float
        Rotation angle taking the coordinate axes to the eigenvectors of
        ``b``; ``R(angle)^T b R(angle) = diag(lambda_max, lambda_min)``.
    """

    a: np.ndarray
    b: np.ndarray
    lambda_max: float
    lambda_min: float
    angle: float

    @classmethod
    def from_a(cls, a) -> "Anisotropy":
        a = np.array(a, dtype=float)
        _check_spd(a, "A")
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        b = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
        return cls._build(a, b)

    @classmethod
    def from_b(cls, b) -> "Anisotropy":
        b = np.array(b, dtype=float)
        _check_spd(b, "B")
        det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
        a = np.array([[b[1, 1], -b[0, 1]], [-b[1, 0], b[0, 0]]]) / det
        return cls._build(a, b)

    @classmethod
    def isotropic(cls, a: float = 1.0) -> "Anisotropy":
        return cls.from_a(a * np.eye(2))

    @classmethod
    def _build(cls, a, b) -> "Anisotropy":
        lmax, lmin, theta = symmetric_eig2(b)
        a.setflags(write=False)
        b.setflags(write=False)
        return cls(a, b, lmax, lmin, theta)

    @property
    def is_isotropic(self) -> bool:
        return self.lambda_max - self.lambda_min <= 1e-14 * self.lambda_max

    @property
    def det_a(self) -> float:
        return float(self.a[0, 0] * self.a[1, 1] - self.a[0, 1] * self.a[1, 0])


def _check_spd(m: np.ndarray, name: str) -> None:
    if m.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if abs(m[0, 1] - m[1, 0]) > 1e-12 * max(1.0, np.abs(m).max()):
        raise ValueError(f"{name} must be symmetric")
    if not (m[0, 0] > 0 and m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] > 0):
        raise ValueError(f"{name} must be positive definite")


def mu_star(aniso: Anisotropy) -> float:
    """``(lmax + lmin) / (2 sqrt(lmax lmin))``; equals 1 only for isotropic media."""
    lmax, lmin = aniso.lambda_max, aniso.lambda_min
    return (lmax + lmin) / (2.0 * math.sqrt(lmax * lmin))


def beta(aniso: Anisotropy) -> float:
    """Anisotropy ratio ``(lmax - lmin) / (lmax + lmin)`` in ``[0, 1)``."""
    lmax, lmin = aniso.lambda_max, aniso.lambda_min
    return (lmax - lmin) / (lmax + lmin)


def nu_star(aniso_or_beta) -> float:
    """Stability threshold for ``nu = sigma_c / gamma``.

    Accepts an :class:`Anisotropy` or a raw ``beta`` value. Returns
    :data:`UNBOUNDED` when ``beta == 0``.
    """
    b = beta(aniso_or_beta) if isinstance(aniso_or_beta, Anisotropy) else float(aniso_or_beta)
    if not 0.0 <= b < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if b == 0.0:
        return UNBOUNDED
    root = math.sqrt(1.0 / (b * b) - 1.0)
    return 2.0 * root * (root + 1.0 / b)


def dispersion_omega(aniso: Anisotropy, k) -> Tuple[float, float]:
    """Both roots ``(+omega, -omega)`` of ``omega^2 = k^T A k``."""
    k = np.asarray(k, dtype=float)
    w = math.sqrt(max(float(k @ aniso.a @ k), 0.0))
    return w, -w


def group_phase_velocity(aniso: Anisotropy, k) -> Tuple[np.ndarray, np.ndarray]:
    """Group velocity ``A k / omega`` and phase velocity ``omega k / |k|^2``."""
    k = np.asarray(k, dtype=float)
    kk = float(k @ k)
    if kk == 0.0:
        raise ValueError("wave vector must be nonzero")
    w = dispersion_omega(aniso, k)[0]
    return aniso.a @ k / w, (w / kk) * k


@dataclass(frozen=True)
class BackwardWaveScan:
    """Result of a sampled backward-wave test.

    ``worst_product`` is the minimum of ``(v_g . e)(v_p . e)`` over the
    ``sample_count`` sampled unit wave vectors; ``witness_k`` attains it.
    """

    backward: bool
    witness_k: np.ndarray
    worst_product: float
    sample_count: int

    def __bool__(self) -> bool:
        return self.backward


def _unit_circle(n: int, offset: float = 0.0) -> np.ndarray:
    t = offset + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(t), np.sin(t)])


def backward_wave_in_direction(aniso: Anisotropy, e=None, sample_count: int = DEFAULT_BACKWARD_SAMPLES) -> BackwardWaveScan:
    """Scan unit wave vectors for opposite-sign projections of ``v_g`` and ``v_p``.

    Parameters
    ----------
    aniso : Anisotropy
    e : array_like or None
        Unit direction. ``None`` tests each wave vector against its own
        direction, ``(v_g . k)(v_p . k)``.
    sample_count : int
        Number of equispaced directions; the verdict is only as fine as this
        sampling.
    """
    if sample_count < 8:
        raise ValueError("sample_count must be at least 8")
    ks = _unit_circle(sample_count, offset=np.pi / sample_count)
    w = np.sqrt(np.einsum("ni,ij,nj->n", ks, aniso.a, ks))
    vg = ks @ aniso.a.T / w[:, None]
    vp = ks * w[:, None]
    if e is None:
        prod = np.einsum("ni,ni->n", vg, ks) * np.einsum("ni,ni->n", vp, ks)
    else:
        e = np.asarray(e, dtype=float)
        if abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        prod = (vg @ e) * (vp @ e)
    i = int(np.argmin(prod))
    return BackwardWaveScan(bool(prod[i] < 0.0), ks[i].copy(), float(prod[i]), sample_count)


def slowness_curve(aniso: Anisotropy, n: int) -> List[np.ndarray]:
    """``n`` points ``p`` with ``p^T A p = 1``, ordered by polar angle from 0."""
    if n < 3:
        raise ValueError("need at least three points")
    dirs = _unit_circle(n)
    scale = 1.0 / np.sqrt(np.einsum("ni,ij,nj->n", dirs, aniso.a, dirs))
    return [d * s for d, s in zip(dirs, scale)]

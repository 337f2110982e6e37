"""Semi-analytic error of a truncated, frequency-shifted 1D PML.

Model: ``u_tt = u_xx`` on ``x > 0`` with ``u(t, 0) = g(t)``, a shifted layer on
``(R, R + L)`` and a homogeneous Dirichlet condition at ``R + L``. In the
Laplace domain the error at an interior point ``0 < x < R`` is

    e_hat(s, x) = E(s) g_hat(s) (exp(-s x) - exp(s x)),
    E(s) = exp(-2 s x*) / (1 - exp(-2 s x*)),  x* = R + L + sigma_c L / (s + gamma).

Expanding ``E`` in a geometric series and inverting each term gives

    e(t, x) = sum_l exp(-2 sigma_c L l) [ T_l g(t)
              + alpha_l int_0^t exp(-gamma tau) I1(2 alpha_l sqrt(tau)) tau^{-1/2} T_l g(t - tau) dtau ],
    T_l g(t) = g(t - x - 2(R+L) l) - g(t + x - 2(R+L) l),   alpha_l = sqrt(2 L gamma sigma_c l).

The same error is also obtained by convolution quadrature of the transfer
function, which gives an independent cross-check.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, signal, special

logger = logging.getLogger(__name__)

__all__ = [
    "SIGNALS",
    "t2_gaussian",
    "gaussian_pulse",
    "sine_burst",
    "ErrorSeriesParams",
    "CQKind",
    "CQScheme",
    "CQResult",
    "QuadratureError",
    "laplace_error_factor",
    "laplace_error_transfer",
    "error_series",
    "cq_weights",
    "cq_invert",
    "sigma_sweep",
    "attenuation_factor",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


# ---------------------------------------------------------------------------
# Causal signals
# ---------------------------------------------------------------------------
def t2_gaussian(t):
    """``t^2 exp(-t^2)`` for ``t > 0``, zero otherwise."""
    t = np.asarray(t, dtype=float)
    tp = np.maximum(t, 0.0)
    return np.where(t > 0, tp * tp * np.exp(-tp * tp), 0.0)


def gaussian_pulse(t, center: float = 1.0, width: float = 0.25):
    """Smooth pulse ``exp(-((t - center)/width)^2)``, cut to ``t > 0``."""
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.exp(-(((t - center) / width) ** 2)), 0.0)


def sine_burst(t, frequency: float = 2.0, duration: float = 2.0):
    """``sin(2 pi f t) sin^2(pi t / duration)`` on ``0 < t < duration``."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < duration)
    return np.where(inside, np.sin(2 * np.pi * frequency * t) * np.sin(np.pi * t / duration) ** 2, 0.0)


SIGNALS: Dict[str, Callable] = {
    "t2-gaussian": t2_gaussian,
    "gaussian-pulse": gaussian_pulse,
    "sine-burst": sine_burst,
}


@dataclass(frozen=True)
class ErrorSeriesParams:
    """Configuration of the 1D error model.

    Attributes
    ----------
    radius_pml, width : float
        Layer start ``R`` and width ``L``.
    sigma_c, gamma : float
        Damping constant and frequency shift.
    x : float
        Observation point in ``(0, R)``.
    g : callable
        Causal boundary signal, vectorised over time.
    """

    radius_pml: float
    width: float
    sigma_c: float
    gamma: float
    x: float
    g: Callable = t2_gaussian

    def __post_init__(self):
        if not 0 < self.x < self.radius_pml:
            raise ValueError("observation point must satisfy 0 < x < R")
        if not (self.width > 0 and self.sigma_c >= 0 and self.gamma >= 0):
            raise ValueError("need L > 0, sigma_c >= 0, gamma >= 0")
        if float(np.asarray(self.g(np.array([0.0, -1.0]))).__abs__().max()) != 0.0:
            raise ValueError("boundary signal must vanish for t <= 0")

    @property
    def period(self) -> float:
        """Round-trip length ``2 (R + L)``."""
        return 2.0 * (self.radius_pml + self.width)


# ---------------------------------------------------------------------------
# Laplace domain
# ---------------------------------------------------------------------------
def _x_star(p: ErrorSeriesParams, s):
    return p.radius_pml + p.width + p.sigma_c * p.width / (s + p.gamma)


def laplace_error_factor(params: ErrorSeriesParams, s):
    """``E(s) = exp(-2 s x*) / (1 - exp(-2 s x*))``."""
    s = np.asarray(s, dtype=complex)
    a = -2.0 * s * _x_star(params, s)
    return np.exp(a) / (-np.expm1(a))


def laplace_error_transfer(params: ErrorSeriesParams, s):
    """Full transfer ``E(s) (exp(-s x) - exp(s x))`` from ``g_hat`` to the error."""
    s = np.asarray(s, dtype=complex)
    a = -2.0 * s * _x_star(params, s)
    # exp(a) (exp(-s x) - exp(s x)) written with decaying exponentials only
    num = np.exp(a - s * params.x) - np.exp(a + s * params.x)
    return num / (-np.expm1(a))


# ---------------------------------------------------------------------------
# Time-domain series
# ---------------------------------------------------------------------------
def _n_terms(params: ErrorSeriesParams, t: float) -> int:
    """Number of nonzero terms: ``l < (t + R) / (2 (R + L))``."""
    bound = (t + params.radius_pml) / params.period
    return max(int(math.ceil(bound)) - 1, 0)


def _t_op(params: ErrorSeriesParams, ell: int, t):
    shift = params.period * ell
    return params.g(t - params.x - shift) - params.g(t + params.x - shift)


def error_series(params: ErrorSeriesParams, t: float, tol: float = 1e-13, extra_terms: int = 0) -> float:
    """Evaluate the series error ``e(t, x)``.

    The ``tau^{-1/2}`` endpoint singularity is removed by ``tau = u^2`` and the
    exponentially large Bessel factor is combined with its decaying prefactor
    in log form, so the integrand stays ``O(alpha)`` even for large damping.

    Parameters
    ----------
    tol : float
        Absolute tolerance handed to the adaptive quadrature per term.
    extra_terms : int
        Terms to add beyond the causal cutoff (they vanish identically).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    p = params
    total = 0.0
    for ell in range(1, _n_terms(p, t) + 1 + extra_terms):
        decay = 2.0 * p.sigma_c * p.width * ell
        shift = p.period * ell
        total += math.exp(-decay) * float(_t_op(p, ell, t))
        alpha = math.sqrt(2.0 * p.width * p.gamma * p.sigma_c * ell)
        if alpha == 0.0:
            continue
        upper_sq = t + p.x - shift
        if upper_sq <= 0:
            continue
        upper = math.sqrt(upper_sq)

        def integrand(u, alpha=alpha, ell=ell, decay=decay):
            z = 2.0 * alpha * u
            expo = z - p.gamma * u * u - decay
            return 2.0 * alpha * special.i1e(z) * math.exp(expo) * float(_t_op(p, ell, t - u * u))

        pts = []
        if t - p.x - shift > 0:
            pts.append(math.sqrt(t - p.x - shift))
        if p.gamma > 0 and 0 < alpha / p.gamma < upper:
            pts.append(alpha / p.gamma)
        # breakpoints that coincide with an endpoint or with each other up to
        # rounding leave a degenerate panel that spoils the error estimate
        margin = 1e-9 * upper
        kept = []
        for q in sorted(pts):
            if margin < q < upper - margin and (not kept or q - kept[-1] > margin):
                kept.append(q)
        pts = kept
        val, err = integrate.quad(integrand, 0.0, upper, points=pts or None, epsabs=tol, epsrel=1e-12, limit=1000)
        if not err <= max(10 * tol, 1e-10 * abs(val)):
            raise QuadratureError(f"term l={ell}: estimated error {err:.2e} exceeds tolerance")
        total += val
    return total


# ---------------------------------------------------------------------------
# Convolution quadrature
# ---------------------------------------------------------------------------
class CQKind(str, Enum):
    BDF2 = "bdf2"
    TRAPEZOIDAL = "trapezoidal"


@dataclass(frozen=True)
class CQScheme:
    """Multistep rule and time grid for convolution quadrature."""

    kind: CQKind
    dt: float
    n_steps: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CQKind(self.kind))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")

    def delta(self, zeta):
        """Generating function of the multistep rule."""
        if self.kind is CQKind.BDF2:
            return (1.0 - zeta) + 0.5 * (1.0 - zeta) ** 2
        return 2.0 * (1.0 - zeta) / (1.0 + zeta)


@dataclass(frozen=True)
class CQResult:
    t: np.ndarray
    error: np.ndarray


def cq_weights(transfer: Callable, scheme: CQScheme) -> np.ndarray:
    """Weights ``w_j`` of ``K(delta(zeta)/dt) = sum_j w_j zeta^j``, ``j = 0..n_steps``.

    Computed by an FFT on the circle of radius ``lam`` with
    ``lam^(n_steps+1) = sqrt(eps)``, which balances aliasing and round-off.
    """
    m = scheme.n_steps + 1
    lam = np.finfo(float).eps ** (0.5 / m)
    zeta = lam * np.exp(2j * np.pi * np.arange(m) / m)
    vals = transfer(scheme.delta(zeta) / scheme.dt)
    w = np.fft.fft(vals) / m
    return (w * lam ** (-np.arange(m))).real


def cq_invert(params: ErrorSeriesParams, scheme: CQScheme) -> CQResult:
    """Time samples of the error by convolution quadrature of its transfer function.

    The boundary signal enters only through its samples, so the result is the
    discrete convolution of the CQ weights with ``g(t_n)``.
    """
    t = scheme.dt * np.arange(scheme.n_steps + 1)
    w = cq_weights(lambda s: laplace_error_transfer(params, s), scheme)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite convolution weights")
    g = np.asarray(params.g(t), dtype=float)
    e = signal.fftconvolve(w, g)[: t.size]
    return CQResult(t, e)


# ---------------------------------------------------------------------------
# Sweeps and diagnostics
# ---------------------------------------------------------------------------
def sigma_sweep(template: ErrorSeriesParams, sigma_list: Sequence[float], t: float,
                x: Optional[float] = None, nu: Optional[float] = None, threads: int = 1,
                tol: float = 1e-13) -> List[Tuple[float, float]]:
    """``(sigma_c, |e(t, x)|)`` rows with ``gamma = sigma_c / nu`` held proportional.

    ``nu`` defaults to the template's ``sigma_c / gamma``.
    """
    if nu is None:
        if template.gamma == 0:
            raise ValueError("template has gamma = 0; pass nu explicitly")
        nu = template.sigma_c / template.gamma
    base = template if x is None else replace(template, x=x)

    def one(sc: float) -> Tuple[float, float]:
        p = replace(base, sigma_c=float(sc), gamma=float(sc) / nu)
        return float(sc), abs(error_series(p, t, tol=tol))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, sigma_list))
    return [one(sc) for sc in sigma_list]


def attenuation_factor(sigma_c: float, gamma: float, omega: float, k: float, depth: float) -> float:
    """Amplitude ``exp(-k omega sigma_c depth / (omega^2 + gamma^2))`` of a layered plane wave."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    denom = omega * omega + gamma * gamma
    if denom == 0:
        raise ZeroDivisionError("omega and gamma both vanish")
    return math.exp(-k * omega * sigma_c * depth / denom)

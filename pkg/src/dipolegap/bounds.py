"""Explicit inequalities and constants: Hardy/Herbst, sandwich, resolvent kernel, moment bounds.

Every check returns its two sides and a quadrature error estimate obtained by
repeating the evaluation with doubled node counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import j0, roots_jacobi, spherical_jn

from ._quadrature import composite_gauss, gauss_legendre
from .errors import (
    BadBumpSupport,
    CouplingTooLarge,
    DomainError,
    NotIntegrable,
    NotSmoothEnough,
    PointChargesOnly,
    QuadratureFailure,
)
from .potentials import ChargeDistribution, PhysicalParams
from .spectrum import GapSpectrum

L_UNIVERSAL = 1.0  # placeholder for the universal constant of the moment bound
L_LIEB_THIRRING = 1.0  # placeholder for the best Lieb-Thirring constant


# --------------------------------------------------------------------------
# Hardy / Herbst


def hardy_constant(n: int, alpha: float) -> float:
    """Sharp constant ``2^alpha [Gamma((n+alpha)/4) / Gamma((n-alpha)/4)]^2``."""
    if not 0 < alpha < n:
        raise DomainError(f"need 0 < alpha < n, got alpha={alpha}, n={n}")
    return 2.0**alpha * (gamma_fn((n + alpha) / 4) / gamma_fn((n - alpha) / 4)) ** 2


C_H = hardy_constant(2, 1.0)


@dataclass(frozen=True)
class GaussianMixture:
    """``psi(x) = sum_i c_i exp(-a_i |x - b_i|^2)`` in ``R^n`` (real coefficients)."""

    coeffs: np.ndarray
    widths: np.ndarray
    centers: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        a = np.asarray(self.widths, dtype=float).reshape(-1)
        b = np.asarray(self.centers, dtype=float).reshape(len(c), -1)
        if len(a) != len(c):
            raise ValueError("coeffs and widths differ in length")
        if np.any(a <= 0):
            raise NotIntegrable("Gaussian widths must be positive")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "widths", a)
        object.__setattr__(self, "centers", b)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d2 = ((x[..., None, :] - self.centers) ** 2).sum(-1)
        return (self.coeffs * np.exp(-self.widths * d2)).sum(-1)

    @classmethod
    def random(cls, rng: np.random.Generator, n: int = 2, terms: int = 3, spread: float = 1.0):
        return cls(
            rng.normal(size=terms),
            rng.uniform(0.3, 3.0, size=terms),
            rng.normal(scale=spread, size=(terms, n)),
        )


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    margin: float
    quadrature_error: float
    constant: float = 1.0

    @property
    def holds(self) -> bool:
        return self.margin >= -10 * self.quadrature_error


def _momentum_side(psi: GaussianMixture, alpha, n_k):
    """``<psi, |p|^alpha psi>`` from the analytic transform, radial Gauss in ``k``.

    With ``psi_hat(k) = sum c_i (pi/a_i)^{n/2} e^{-k^2/4a_i} e^{-i k.b_i}`` the
    angular integral of each cross term is a Bessel-type kernel in ``k |b_i - b_j|``.
    """
    n = psi.dim
    c, a, b = psi.coeffs, psi.widths, psi.centers
    s = 0.25 / a[:, None] + 0.25 / a[None, :]
    d = np.linalg.norm(b[:, None, :] - b[None, :, :], axis=-1)
    pref = c[:, None] * c[None, :] * (np.pi**2 / (a[:, None] * a[None, :])) ** (n / 2)
    kmax = math.sqrt(80.0 / s.min())
    breaks = np.linspace(0.0, kmax, 17)
    k, w = composite_gauss(breaks, n_k)
    K = k[:, None, None]
    if n == 2:
        ang = 2 * np.pi * j0(K * d)
    elif n == 3:
        ang = 4 * np.pi * spherical_jn(0, K * d)
    else:
        raise DomainError("herbst_check supports n = 2 and n = 3")
    integrand = (pref * ang * np.exp(-s * K**2)).sum(axis=(1, 2)) * k ** (alpha + n - 1)
    return float(w @ integrand) / (2 * np.pi) ** n


def _weighted_position_side(psi: GaussianMixture, alpha, center, n_r, n_ang):
    """``int |psi|^2 |x - center|^{-alpha} dx`` in polar/spherical coordinates about ``center``.

    The radial rule carries the ``r^{n-1-alpha}`` weight exactly (Gauss-Jacobi on
    the first panel), so the singularity costs nothing.
    """
    n = psi.dim
    rmax = np.max(np.linalg.norm(psi.centers - center, axis=1)) + math.sqrt(40.0 / psi.widths.min())
    beta = n - 1 - alpha
    # first panel [0, r1] with weight r^beta, then plain Gauss panels
    r1 = rmax / 16
    xj, wj = roots_jacobi(n_r, 0.0, beta)
    r_first = 0.5 * r1 * (xj + 1)
    w_first = wj * (0.5 * r1) ** (1 + beta)  # includes the r^beta weight
    r_rest, w_rest = composite_gauss(np.linspace(r1, rmax, 16), n_r)
    w_rest = w_rest * r_rest**beta
    r = np.concatenate([r_first, r_rest])
    wr = np.concatenate([w_first, w_rest])
    if n == 2:
        phi = 2 * np.pi * np.arange(n_ang) / n_ang
        dirs = np.stack([np.cos(phi), np.sin(phi)], -1)
        wa = np.full(n_ang, 2 * np.pi / n_ang)
    elif n == 3:
        ct, wct = gauss_legendre(-1.0, 1.0, n_ang)
        phi = 2 * np.pi * np.arange(n_ang) / n_ang
        st = np.sqrt(1 - ct**2)
        dirs = np.stack(
            [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(ct, np.ones_like(phi))], -1
        ).reshape(-1, 3)
        wa = np.outer(wct, np.full(n_ang, 2 * np.pi / n_ang)).ravel()
    else:
        raise DomainError("herbst_check supports n = 2 and n = 3")
    pts = center + r[:, None, None] * dirs[None, :, :]
    vals = psi(pts) ** 2
    return float(wr @ (vals @ wa))


def herbst_check(psi: GaussianMixture, n: int = 2, alpha: float = 1.0, center=None,
                 n_k: int = 24, n_r: int = 24, n_ang: int = 64) -> InequalityCheck:
    """``<psi, |p|^alpha psi> - C(n, alpha) <psi, |x - center|^{-alpha} psi>`` (must be >= 0)."""
    if psi.dim != n:
        raise ValueError(f"test function lives in R^{psi.dim}, not R^{n}")
    C = hardy_constant(n, alpha)
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    lhs = _momentum_side(psi, alpha, n_k)
    rhs = _weighted_position_side(psi, alpha, center, n_r, n_ang)
    lhs2 = _momentum_side(psi, alpha, 2 * n_k)
    rhs2 = _weighted_position_side(psi, alpha, center, 2 * n_r, 2 * n_ang)
    err = abs(lhs2 - lhs) + C * abs(rhs2 - rhs) + 1e-14 * (abs(lhs2) + C * abs(rhs2))
    if not (math.isfinite(lhs2) and math.isfinite(rhs2)):
        raise NotIntegrable("test function moments are not finite")
    return InequalityCheck(lhs2, rhs2, lhs2 - C * rhs2, err, C)


# --------------------------------------------------------------------------
# sandwich inequality


@dataclass(frozen=True)
class SpinorTerm:
    """One term ``f(r) e^{i n theta}`` of a spinor component (0 upper, 1 lower)."""

    component: int
    n: int
    coeff: complex
    profile: Callable  # r -> f(r)
    derivative: Callable  # r -> f'(r)


@dataclass(frozen=True)
class RadialSpinor:
    """Two-component test function as a finite sum of angular modes.

    ``r_range`` bounds the radial integration (in log scale below 1);
    ``smooth`` marks test functions that are smooth and rapidly decaying.
    """

    terms: Tuple[SpinorTerm, ...]
    r_range: Tuple[float, float] = (1e-12, 60.0)
    smooth: bool = True

    def modes(self, r) -> Dict[Tuple[int, int], np.ndarray]:
        out: Dict[Tuple[int, int], np.ndarray] = {}
        for t in self.terms:
            key = (t.component, t.n)
            out[key] = out.get(key, 0) + t.coeff * t.profile(r)
        return out

    @classmethod
    def gaussian(cls, spec: Sequence[Tuple[int, int, complex, int, float]]):
        """Terms ``coeff * r^p exp(-a r^2) e^{i n theta}`` given as ``(component, n, coeff, p, a)``.

        Smooth at the origin iff ``p >= |n|`` and ``p - |n|`` is even.
        """
        terms = []
        smooth = True
        a_min = math.inf
        for comp, n, c, p, a in spec:
            if a <= 0:
                raise NotIntegrable("Gaussian width must be positive")
            if p < abs(n) or (p - abs(n)) % 2:
                smooth = False
            a_min = min(a_min, a)
            terms.append(SpinorTerm(
                comp, n, complex(c),
                (lambda r, p=p, a=a: r**p * np.exp(-a * r * r)),
                (lambda r, p=p, a=a: (p * r ** (p - 1) if p else 0.0 * r) * np.exp(-a * r * r)
                 - 2 * a * r ** (p + 1) * np.exp(-a * r * r)),
            ))
        return cls(tuple(terms), (1e-12, math.sqrt(60.0 / a_min)), smooth)

    @classmethod
    def random(cls, rng: np.random.Generator, terms: int = 3):
        spec = []
        for _ in range(terms):
            comp = int(rng.integers(0, 2))
            n = int(rng.integers(-2, 3))
            p = abs(n) + 2 * int(rng.integers(0, 2))
            c = complex(rng.normal(), rng.normal())
            spec.append((comp, n, c, p, float(rng.uniform(0.3, 3.0))))
        return cls.gaussian(spec)

    @classmethod
    def sharpness_probe(cls, eps: float):
        """``(r^{-1+eps} e^{-r}, 0)``; its sandwich ratio at ``m = eta = 0`` is ``1 + 2 eps``."""
        if not 0 < eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        t = SpinorTerm(
            0, 0, 1.0,
            lambda r: r ** (-1 + eps) * np.exp(-r),
            lambda r: ((-1 + eps) / r - 1.0) * r ** (-1 + eps) * np.exp(-r),
        )
        # mass sits down to r ~ exp(-1/eps); cutting at 1e-140 drops a fraction ~ e^{-645 eps}
        return cls((t,), (1e-140, 60.0), smooth=False)


def _log_rule(r_lo, r_hi, n):
    """Gauss nodes in ``x = ln r`` with unit-width panels; returns ``r`` and weights for ``dr``."""
    xb = np.arange(math.log(r_lo), math.log(r_hi), 1.0)
    xb = np.append(xb, math.log(r_hi))
    x, w = composite_gauss(xb, n)
    r = np.exp(x)
    return r, w * r


def _sandwich_sides(psi: RadialSpinor, m, eta, n):
    r, w = _log_rule(psi.r_range[0], psi.r_range[1], n)
    # Phi = r^{1/2} (D0 - i eta) r^{1/2} psi, mode by mode in the angle
    out: Dict[Tuple[int, int], np.ndarray] = {}

    def add(key, val):
        out[key] = out.get(key, 0) + val

    for t in psi.terms:
        f = t.coeff * t.profile(r)
        df = t.coeff * t.derivative(r)
        if t.component == 0:
            add((0, t.n), r * (m - 1j * eta) * f)
            # lower row: e^{i theta}(-i d_r + (1/r) d_theta) acting on r^{1/2} f e^{i n theta}
            add((1, t.n + 1), -1j * r * (df + f / (2 * r) - t.n * f / r))
        else:
            add((1, t.n), r * (-m - 1j * eta) * f)
            # upper row: e^{-i theta}(-i d_r - (1/r) d_theta)
            add((0, t.n - 1), -1j * r * (df + f / (2 * r) + t.n * f / r))
    lhs = 2 * np.pi * sum(float(w @ (np.abs(v) ** 2 * r)) for v in out.values())
    norm = 2 * np.pi * sum(float(w @ (np.abs(v) ** 2 * r)) for v in psi.modes(r).values())
    return lhs, 0.25 * norm


def sandwich_check(psi: RadialSpinor, m: float = 0.0, eta: float = 0.0, n: int = 8,
                   require_smooth: bool = True) -> InequalityCheck:
    """``|| |x|^{1/2} (D0 - i eta) |x|^{1/2} psi ||^2`` against ``||psi||^2 / 4``.

    The left side is evaluated from the polar form of ``D0`` directly, with no
    identity applied first.  Angular integrals are exact (mode orthogonality);
    the radial one uses Gauss panels in ``ln r`` and is repeated with doubled
    nodes for the error estimate.
    """
    if require_smooth and not psi.smooth:
        raise NotSmoothEnough("test function is not smooth at the origin")
    lhs, rhs = _sandwich_sides(psi, m, eta, n)
    lhs2, rhs2 = _sandwich_sides(psi, m, eta, 2 * n)
    err = abs(lhs2 - lhs) + abs(rhs2 - rhs) + 1e-13 * (lhs2 + rhs2)
    return InequalityCheck(lhs2, rhs2, lhs2 - rhs2, err)


# --------------------------------------------------------------------------
# free resolvent kernel


def resolvent_constant(x0_norm: float, eta0: float, m: float) -> float:
    """``(1/4pi) (4/|x0| + 16 / (|x0|^2 sqrt(m^2 + eta0^2)))``."""
    return (4.0 / x0_norm + 16.0 / (x0_norm**2 * math.sqrt(m * m + eta0 * eta0))) / (4 * math.pi)


@dataclass(frozen=True)
class ResolventSample:
    separation: float
    eta: float
    kappa: float
    kernel_entries: np.ndarray  # 2x2 complex
    bound_value: float

    @property
    def within_bound(self) -> bool:
        return bool(np.max(np.abs(self.kernel_entries)) <= self.bound_value)


def _scaled_t_integral(z, weight_exp, tol=1e-13, max_panels=4096):
    """``int_{-inf}^{inf} e^{c u} e^{-z (cosh u - 1)} du`` for ``c`` in {0, -1}, split at ``u = 0``.

    After ``t = t* e^u`` with ``t* = rho / (2 kappa)`` the heat-kernel integrand
    peaks at ``u = 0``; the ``e^{-z}`` factor is taken out.
    """
    # integrand below e^{-40} beyond U
    U = math.acosh(1 + 40.0 / z) if z > 0 else 40.0
    U = max(U, 1e-3) + (1.0 if weight_exp else 0.0)
    if weight_exp:
        U = max(U, 40.0 if z < 1e-3 else U)
    panels = 8
    prev = None
    while panels <= max_panels:
        total = 0.0
        for lo, hi in ((-U, 0.0), (0.0, U)):
            u, w = composite_gauss(np.linspace(lo, hi, panels + 1), 10)
            total += float(w @ (np.exp(weight_exp * u - z * (np.cosh(u) - 1.0))))
        if prev is not None and abs(total - prev) <= tol * abs(total):
            return total
        prev = total
        panels *= 2
    raise QuadratureFailure(f"heat-kernel integral not converged for z={z:g}")


def resolvent_kernel(separation: float, eta: float, m: float, direction: float = 0.0,
                     x0_norm: float = 1.0, eta0: float = 0.0) -> ResolventSample:
    """Entries of ``R0(i eta)(x - y) = (D0 + i eta)(-Delta + kappa^2)^{-1}(x - y)``.

    ``direction`` is the polar angle of ``x - y``.  With ``z = kappa |x - y|``,
    ``G = (e^{-z}/4pi) I_0`` and ``|grad G| = (kappa e^{-z}/4pi) I_1`` where
    ``I_c`` are the scaled integrals of :func:`_scaled_t_integral`.
    """
    if separation <= 0:
        raise ValueError("separation must be positive")
    kappa = math.sqrt(m * m + eta * eta)
    z = kappa * separation
    G = math.exp(-z) * _scaled_t_integral(z, 0) / (4 * math.pi)
    dG = -kappa * math.exp(-z) * _scaled_t_integral(z, -1) / (4 * math.pi)  # radial derivative
    e = np.exp(1j * direction)
    entries = np.array([
        [(m + 1j * eta) * G, -1j * dG / e],
        [-1j * dG * e, (-m + 1j * eta) * G],
    ])
    bound = resolvent_constant(x0_norm, eta0, m) * math.exp(-0.25 * z)
    return ResolventSample(float(separation), float(eta), kappa, entries, bound)


def resolvent_sweep(params: PhysicalParams, separations, etas, eta0: float = 0.0) -> List[ResolventSample]:
    """Kernel samples over a (separation, eta) grid; separations below |x0| are rejected."""
    x0 = params.x0_norm
    seps = np.asarray(separations, dtype=float)
    if np.any(seps < x0):
        raise ValueError("the kernel bound holds for separations >= |x0|")
    if np.any(np.abs(np.asarray(etas)) < eta0):
        raise ValueError("the kernel bound holds for |eta| >= eta0")
    return [resolvent_kernel(s, e, params.mass, 0.0, x0, eta0) for s in seps for e in etas]


@dataclass(frozen=True)
class BumpSpec:
    """Smooth cutoff: 1 on ``r <= inner``, 0 on ``r >= outer``, C-infinity between."""

    inner: float
    outer: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        t = np.clip((r - self.inner) / (self.outer - self.inner), 0.0, 1.0)

        def f(s):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

        return f(1 - t) / (f(1 - t) + f(t))


def hs_offdiagonal_bound(params: PhysicalParams, eta: float, chi: Optional[BumpSpec] = None,
                         eta0: float = 0.0) -> Dict[str, float]:
    """Hilbert-Schmidt bound ``4 C e^{-kappa |x0| / 4} ||V_i||_1 ||V_j||_1`` for the localised pieces.

    ``V_i = chi(|x - x_i|)^2 / |x - x_i|`` so ``||V_i||_1 = 2 pi int chi^2 dr``.
    """
    x0 = params.x0_norm
    if chi is None:
        chi = BumpSpec(x0 / 4, x0 / 2)
    if not (chi.inner >= x0 / 4 * (1 - 1e-12) and chi.outer <= x0 / 2 * (1 + 1e-12) and chi.inner < chi.outer):
        raise BadBumpSupport("bump must equal 1 on r <= |x0|/4 and vanish on r >= |x0|/2")
    r, w = composite_gauss(np.concatenate([[0.0], np.linspace(chi.inner, chi.outer, 33)]), 16)
    l1 = 2 * math.pi * float(w @ chi(r) ** 2)
    kappa = math.sqrt(params.mass**2 + eta * eta)
    C = resolvent_constant(x0, eta0, params.mass)
    bound = 4 * C * math.exp(-0.25 * kappa * x0) * l1 * l1
    return {"l1_norm": l1, "constant": C, "kappa": kappa, "bound": bound}


# --------------------------------------------------------------------------
# moment bounds


@dataclass(frozen=True)
class LiebThirringParams:
    delta: float
    delta0: float
    rho_param: float
    theta: float
    c1: float
    c2: float
    gamma: float


def lt_parameters(gamma: float, delta: float, delta0: float) -> LiebThirringParams:
    """``rho`` from ``c2 = (1 + gamma/C_H)/2`` and ``theta`` from ``gamma = c2 (1 - theta) C_H``."""
    if not 0 < gamma:
        raise ValueError("gamma must be positive")
    if gamma >= C_H:
        raise CouplingTooLarge(f"gamma={gamma} must stay below C_H={C_H:.6f}")
    if not (0 < delta0 < 1 and delta0 <= delta):
        raise ValueError("need 0 < delta0 < 1 and delta0 <= delta")
    c2 = 0.5 * (1 + gamma / C_H)
    # c2 = (sqrt(rho^2+1) - 1)/rho inverts to rho = 2 c2 / (1 - c2^2)
    rho = 2 * c2 / (1 - c2 * c2)
    c1 = (math.sqrt(rho * rho + 1) - 1) / rho**2
    c2_exact = (math.sqrt(rho * rho + 1) - 1) / rho
    theta = 1 - gamma / (c2_exact * C_H)
    return LiebThirringParams(delta, delta0, rho, theta, c1, c2_exact, gamma)


def _dipole_pair(pts, x0n):
    """``1/|x - x0| - 1/|x + x0|`` for ``x0 = (x0n, 0)``, free of cancellation at large ``|x|``."""
    a = np.hypot(pts[..., 0] - x0n, pts[..., 1])
    b = np.hypot(pts[..., 0] + x0n, pts[..., 1])
    return 4 * x0n * pts[..., 0] / (a * b * (a + b))


def _semiclassical_value(x0n, gamma, p, n):
    """``int_{x1 > 0} (gamma V)^p dx`` for the pair potential with ``x0 = (x0n, 0)``."""
    R = 2 * x0n
    c = np.array([x0n, 0.0])
    total = 0.0
    # inner half-disc |x| <= R, polar about the centre; rays to the corners (0, +-R)
    psi_c = math.pi - math.atan2(2.0, 1.0)
    xj, wj = roots_jacobi(n, 0.0, 1.0 - p)  # s^{1-p} from (gamma V)^p s
    for ang, wa in zip(*gauss_legendre(-psi_c, psi_c, n)):
        d = np.array([math.cos(ang), math.sin(ang)])
        smax = -x0n * d[0] + math.sqrt((x0n * d[0]) ** 2 + R * R - x0n * x0n)
        s = 0.5 * smax * (xj + 1)
        f = (gamma * _dipole_pair(c + s[:, None] * d, x0n) * s) ** p
        total += wa * float(wj @ f) * (0.5 * smax) ** (2 - p)
    # rays ending on x1 = 0, where V vanishes linearly: weight (1-x)^p (1+x)^{1-p}
    xk, wk = roots_jacobi(n, p, 1.0 - p)
    for lo, hi in ((psi_c, math.pi), (-math.pi, -psi_c)):
        for ang, wa in zip(*gauss_legendre(lo, hi, n)):
            d = np.array([math.cos(ang), math.sin(ang)])
            smax = x0n / -d[0]
            s = 0.5 * smax * (xk + 1)
            base = _dipole_pair(c + s[:, None] * d, x0n) * s / (1.0 - s / smax)
            total += wa * float(wk @ (gamma * base) ** p) * (0.5 * smax) ** (2 - p) * 2.0 ** (-p)
    # outer region r >= R: w = r^{-2 delta0} makes the r^{-2p} decay bounded; cos(phi)^p edges
    d0 = p - 1
    wn, ww = gauss_legendre(0.0, R ** (-2 * d0), n)
    t, wt = roots_jacobi(n, p, p)
    phi = 0.5 * math.pi * t
    r = wn ** (-1.0 / (2 * d0))
    pts = np.stack([np.outer(r, np.cos(phi)), np.outer(r, np.sin(phi))], -1)
    f = (gamma * _dipole_pair(pts, x0n) / (1 - t * t)) ** p
    jac = r**2 / (2 * d0 * wn)
    total += float(ww @ ((f @ wt) * 0.5 * math.pi * jac))
    return total


def semiclassical_integral(params: PhysicalParams, delta0: float, side: str = "+",
                           n: int = 32, return_error: bool = False):
    """``int (gamma V_side)^{1 + delta0} dx`` over the plane.

    ``V_+`` is ``V`` on the half-plane toward ``+x0`` and ``V_-`` is ``-V`` on the
    other half; by the reflection ``x -> -x`` both integrals coincide.  The plane
    is split at ``|x| = 2|x0|``: the inner part in polar coordinates about the
    centre (Jacobi weight for the ``|x - x0|^{-1-delta0}`` singularity), the outer
    part with ``w = r^{-2 delta0}``, which turns the ``r^{-2-2 delta0}`` decay
    into a bounded integrand.
    """
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    if delta0 >= 1:
        raise NotIntegrable("(gamma V)^{1+delta0} is not integrable at the centres for delta0 >= 1")
    if delta0 <= 0:
        raise NotIntegrable("the outer region diverges for delta0 <= 0")
    p = 1 + delta0
    val = _semiclassical_value(params.x0_norm, params.gamma, p, n)
    if return_error:
        val2 = _semiclassical_value(params.x0_norm, params.gamma, p, 2 * n)
        return val2, abs(val2 - val)
    return val


def moment_bound_factor(params: PhysicalParams, delta: float, delta0: float,
                        L: float = L_UNIVERSAL) -> float:
    """Right side of the eigenvalue-sum bound (``L`` defaults to the placeholder 1)."""
    g = params.gamma
    if g >= C_H:
        return math.nan  # no bound above the critical coupling
    if not (0 < delta0 < 1 and delta0 <= delta):
        raise ValueError("need 0 < delta0 < 1 and delta0 <= delta")
    m = params.mass
    return (L * m ** (1 + delta - delta0) * g ** (1 + delta0) * params.x0_norm ** (1 - delta0)
            / (1 - g / C_H) ** (2 + delta0) / (delta0 * (1 - delta0)))


@dataclass(frozen=True)
class MomentReport:
    deltas: List[float]
    partial_sums: List[float]
    tails: List[float]
    relative_tails: List[float]
    extrapolated: List[float]
    reduction_bounds: List[float]  # m^{delta - delta0} sum (m - |E|)^{delta0}
    bound_factors: List[float]  # modulo the placeholder L
    delta0: float
    levels: int

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _groups(spec: GapSpectrum):
    if spec.channels is not None:
        keys = [tuple(c) for c in spec.channels]
    else:
        keys = [(0, int(np.sign(e))) for e in spec.energies]
    groups: Dict[tuple, List[float]] = {}
    for k, d in zip(keys, spec.gap_distance):
        groups.setdefault(k, []).append(float(d))
    return groups


def geometric_tail(distances: Sequence[float], delta: float) -> float:
    """Tail ``sum_{j > last} d_j^delta`` of a geometric ladder fitted to the last two levels."""
    d = sorted((x for x in distances if x > 0), reverse=True)
    if len(d) < 2:
        return 0.0
    rho = d[-1] / d[-2]
    if not 0 < rho < 1:
        return math.inf
    q = rho**delta
    return d[-1] ** delta * q / (1 - q)


def moment_report(spec: GapSpectrum, deltas: Sequence[float], params: PhysicalParams,
                  delta0: float = 0.5, L: float = L_UNIVERSAL) -> MomentReport:
    """Partial sums of ``sum (m - |E_n|)^delta`` with tower-wise geometric tails."""
    if len(spec) == 0:
        raise ValueError("spectrum is empty")
    m = spec.mass
    d_all = np.asarray(spec.gap_distance, dtype=float)
    groups = _groups(spec)
    partial, tails, rel, extra, red, fac = [], [], [], [], [], []
    s0 = float(np.sum(d_all**delta0))
    for delta in deltas:
        s = float(np.sum(d_all**delta))
        t = sum(geometric_tail(v, delta) for v in groups.values())
        partial.append(s)
        tails.append(t)
        rel.append(t / s if s > 0 else math.inf)
        extra.append(s + t)
        red.append(m ** (delta - delta0) * s0 if delta >= delta0 else math.nan)
        try:
            fac.append(moment_bound_factor(params, delta, delta0, L) if delta >= delta0 else math.nan)
        except ValueError:
            fac.append(math.nan)
    return MomentReport(list(map(float, deltas)), partial, tails, rel, extra, red, fac, delta0, len(d_all))


# --------------------------------------------------------------------------
# density norms


@dataclass(frozen=True)
class DensityNorms:
    delta: float
    p_a: float
    p_b: float
    norm_a: float
    norm_b: float


def density_norms(rho: ChargeDistribution, delta: float) -> DensityNorms:
    """``||rho||_{p_a}`` and ``||rho||_{p_b}`` with ``p_a = 3(1+d)/(2(2+d))``, ``p_b = 3(2+d)/(2(3+d))``.

    Both exponents are always reported; at ``d = 2`` they are 9/8 and 6/5.
    """
    if delta <= 1:
        raise DomainError("density norms need delta > 1")
    if rho.density is None:
        raise PointChargesOnly("Lebesgue norms are undefined for point charges")
    if len(rho.charges):
        raise PointChargesOnly("distribution has atoms; Lebesgue norms are undefined")
    vals = np.abs(rho.density.values)
    dv = rho.density.cell_volume
    p_a = 3 * (1 + delta) / (2 * (2 + delta))
    p_b = 3 * (2 + delta) / (2 * (3 + delta))
    na = float((np.sum(vals**p_a) * dv) ** (1 / p_a))
    nb = float((np.sum(vals**p_b) * dv) ** (1 / p_b))
    return DensityNorms(delta, p_a, p_b, na, nb)

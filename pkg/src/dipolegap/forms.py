"""Quadratic forms s_+/- and the dilated trial functions that certify bound states.

``s_pm[psi] = ||grad psi||^2 + gamma^2 ||V psi||^2 pm gamma m (V psi, psi)``.

Each trial function is a trapezoidal radial profile times a Mathieu
eigenfunction in the dipole angle.  A family of such functions with pairwise
disjoint radial supports and ``s_-[phi] < 0`` (with a quadrature margin) is a
lower bound on the number of eigenvalues in the gap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._quadrature import periodic_gauss, radial_rule
from .errors import (
    ChannelNotNegative,
    SupportTouchesSingularity,
    TargetNotReached,
)
from .mathieu import MathieuSpectrum, eval_eigenfunction, mathieu_eigs
from .potentials import PhysicalParams, TwoCenter, polar_to_plane

# certification requires total + MARGIN_FACTOR * quadrature_error < 0
MARGIN_FACTOR = 3.0
# supports end below this radius; beyond it r^3 overflows in the potential evaluation
MAX_RADIUS = 1e100


def chi_profile(k: float):
    """Piecewise-linear profile: 0 below k, ramps to 1 on [k, k^2], 1 up to k^3, ramps to 0 at k^4."""
    if not k > 1:
        raise ValueError("k must exceed 1")
    k2, k3, k4 = k * k, k**3, k**4

    def chi(r):
        r = np.asarray(r, dtype=float)
        out = np.where(
            r <= k,
            0.0,
            np.where(
                r <= k2,
                (r - k) / (k2 - k),
                np.where(r <= k3, 1.0, np.where(r <= k4, (k4 - r) / (k4 - k3), 0.0)),
            ),
        )
        return float(out) if out.ndim == 0 else out

    return chi


def chi_derivative(k: float):
    k2, k3, k4 = k * k, k**3, k**4

    def dchi(r):
        r = np.asarray(r, dtype=float)
        out = np.where((r > k) & (r < k2), 1.0 / (k2 - k), 0.0)
        out = np.where((r > k3) & (r < k4), -1.0 / (k4 - k3), out)
        return float(out) if out.ndim == 0 else out

    return dchi


def chi_scaled(k: float, R: float):
    """``chi_R(r) = chi(r/R) / R``."""
    chi = chi_profile(k)
    return lambda r: chi(np.asarray(r) / R) / R


def chi_norm_squared(k: float) -> float:
    """Exact ``int chi(r)^2 r dr`` (the same for every dilation chi_R)."""
    L1 = k * k - k
    L2 = k**4 - k**3
    ramp_up = L1 * L1 / 4 + k * L1 / 3
    plateau = (k**6 - k**4) / 2
    ramp_down = k**4 * L2 / 3 - L2 * L2 / 4
    return ramp_up + plateau + ramp_down


@dataclass(frozen=True)
class TrialSpec:
    k: float
    R: float
    level: int = 0
    q: float = 0.0

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError("k must exceed 1")
        if not self.R > 0:
            raise ValueError("R must be positive")

    @property
    def support(self):
        return (self.k * self.R, self.k**4 * self.R)

    def radial_breaks(self):
        k, R = self.k, self.R
        return np.array([k, k * k, k**3, k**4]) * R


class TrialFunction:
    """``psi(r, theta) = chi_R(r) Y_n(q; theta)`` in the dipole-angle frame."""

    def __init__(self, spec: TrialSpec, mathieu: MathieuSpectrum):
        self.spec = spec
        self.mathieu = mathieu
        self._chi = chi_profile(spec.k)
        self._dchi = chi_derivative(spec.k)

    @property
    def support(self):
        return self.spec.support

    def radial_breaks(self):
        return self.spec.radial_breaks()

    def radial(self, r):
        R = self.spec.R
        return self._chi(np.asarray(r) / R) / R

    def radial_derivative(self, r):
        R = self.spec.R
        return self._dchi(np.asarray(r) / R) / (R * R)

    def angular(self, theta, derivative=0):
        return eval_eigenfunction(self.mathieu, self.spec.level, theta, derivative)

    def __call__(self, r, theta):
        return np.multiply.outer(self.radial(r), self.angular(theta))

    def parts(self, r, theta):
        """Value, d/dr and d/dtheta on the product grid ``r x theta``."""
        f, df = self.radial(r), self.radial_derivative(r)
        Y, dY = self.angular(theta), self.angular(theta, 1)
        return np.multiply.outer(f, Y), np.multiply.outer(df, Y), np.multiply.outer(f, dY)

    def norm_squared(self, n_radial=8, n_theta=64):
        r, wr = radial_rule(self.radial_breaks(), n_radial)
        th, wt = periodic_gauss(n_theta)
        psi = self(r, th)
        return float(np.einsum("i,j,ij->", wr * r, wt, psi**2))


class ReflectedTrial:
    """``U psi``: reflection across the axis perpendicular to x0 (theta -> pi - theta)."""

    def __init__(self, base):
        self.base = base
        self.spec = getattr(base, "spec", None)

    @property
    def support(self):
        return self.base.support

    def radial_breaks(self):
        return self.base.radial_breaks()

    def __call__(self, r, theta):
        return self.base(r, math.pi - np.asarray(theta))

    def parts(self, r, theta):
        v, dr, dth = self.base.parts(r, math.pi - np.asarray(theta))
        return v, dr, -dth


def reflect_angles(theta):
    return math.pi - np.asarray(theta)


def build_trial(spec: TrialSpec, mathieu: Optional[MathieuSpectrum] = None) -> TrialFunction:
    if mathieu is None or mathieu.q != spec.q or mathieu.levels <= spec.level:
        mathieu = mathieu_eigs(spec.q, levels=max(spec.level + 1, 4))
    lam = mathieu.eigenvalues[spec.level]
    if lam >= 0:
        warnings.warn(
            f"Mathieu level {spec.level} at q={spec.q} has lambda={lam:.4g} >= 0; "
            "it cannot certify bound states",
            ChannelNotNegative,
            stacklevel=2,
        )
    return TrialFunction(spec, mathieu)


@dataclass(frozen=True)
class FormBreakdown:
    gradient_term: float
    v_squared_term: float
    cross_term: float
    total: float
    quadrature_error: float


def _form_terms(psi, sign, params, model, n_radial, n_theta, include_v_squared):
    breaks = psi.radial_breaks()
    r, wr = radial_rule(breaks, n_radial)
    th, wt = periodic_gauss(n_theta)
    val, d_r, d_th = psi.parts(r, th)
    W = np.outer(wr * r, wt)
    grad = float(np.sum(W * (d_r**2 + (d_th / r[:, None]) ** 2)))
    pts = polar_to_plane(params, r[:, None], th[None, :])
    V = model.evaluate(pts)
    g, m = params.gamma, params.mass
    v2 = float(g * g * np.sum(W * (V * val) ** 2)) if include_v_squared else 0.0
    cross = sign * g * m * float(np.sum(W * V * val**2))
    return grad, v2, cross


def eval_form(psi, sign: int, params: PhysicalParams, model, n_radial: int = 8, n_theta: int = 64,
              include_v_squared: bool = True) -> FormBreakdown:
    """Evaluate ``s_+`` (sign=+1) or ``s_-`` (sign=-1) by polar product quadrature.

    Radial panels sit on the profile breakpoints, so every panel integrand is
    smooth.  The error estimate is the change from halving the node counts.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    r_in = psi.support[0]
    if isinstance(model, TwoCenter) and r_in <= params.x0_norm:
        raise SupportTouchesSingularity(
            f"trial support starts at {r_in:.4g} <= |x0| = {params.x0_norm:.4g}"
        )
    coarse = _form_terms(psi, sign, params, model, n_radial, n_theta, include_v_squared)
    fine = _form_terms(psi, sign, params, model, 2 * n_radial, 2 * n_theta, include_v_squared)
    grad, v2, cross = fine
    total = grad + v2 + cross
    err = abs(total - sum(coarse))
    # rounding floor on the summed terms
    err = max(err, 64 * np.finfo(float).eps * (abs(grad) + abs(v2) + abs(cross)))
    return FormBreakdown(grad, v2, cross, grad + v2 + cross, err)


def reflection_symmetry_check(psi, params: PhysicalParams, model=None, **kw):
    """Return ``(s_+[U psi], s_-[psi])``; the two agree because V(Ux) = -V(x)."""
    if model is None:
        model = TwoCenter(params)
    plus = eval_form(ReflectedTrial(psi), +1, params, model, **kw)
    minus = eval_form(psi, -1, params, model, **kw)
    return plus, minus


def leading_order_estimate(k: float, R: float, lambda0: float) -> float:
    """``R^-2 [(k^2+k)/(k^2-k) + (k^4+k^3)/(k^4-k^3) + lambda0 ln k]``, the known part of the bound."""
    if not k > 1:
        raise ValueError("k must exceed 1")
    bracket = (k * k + k) / (k * k - k) + (k**4 + k**3) / (k**4 - k**3)
    return (bracket + lambda0 * math.log(k)) / (R * R)


def _estimate_threshold(lambda0):
    """Smallest k (on a fine grid) where the leading-order estimate turns negative."""
    k = 1.5
    while leading_order_estimate(k, 1.0, lambda0) >= 0:
        k *= 1.25
        if k > 1e300:
            return math.inf
    return k


@dataclass
class CertifiedCount:
    count: int
    family: List[TrialSpec]
    totals: List[float] = field(default_factory=list)
    errors: List[float] = field(default_factory=list)
    margins: List[float] = field(default_factory=list)
    gram_defect: float = 0.0
    attempts: int = 0

    def to_dict(self):
        return {
            "count": self.count,
            "specs": [{"k": s.k, "R": s.R, "level": s.level, "q": s.q} for s in self.family],
            "totals": list(self.totals),
            "errors": list(self.errors),
            "margins": list(self.margins),
            "gram_defect": self.gram_defect,
            "attempts": self.attempts,
        }


def gram_matrix(family: List[TrialFunction], n_radial=8, n_theta=64) -> np.ndarray:
    """Gram matrix of the normalised family; off-diagonal overlaps vanish for disjoint supports."""
    n = len(family)
    G = np.zeros((n, n))
    th, wt = periodic_gauss(n_theta)
    norms = [math.sqrt(chi_norm_squared(f.spec.k)) for f in family]
    for i in range(n):
        for j in range(i, n):
            a = max(family[i].support[0], family[j].support[0])
            b = min(family[i].support[1], family[j].support[1])
            if b <= a:
                continue
            breaks = np.unique(np.clip(np.concatenate([family[i].radial_breaks(), family[j].radial_breaks()]), a, b))
            r, wr = radial_rule(breaks, n_radial)
            ov = float(np.einsum("i,j,ij->", wr * r, wt, family[i](r, th) * family[j](r, th)))
            G[i, j] = G[j, i] = ov / (norms[i] * norms[j])
    return G


def certified_lower_bound(params: PhysicalParams, target: int, budget: Optional[int] = None,
                          model=None, level: int = 0, r_start: Optional[float] = None,
                          n_radial: int = 8, n_theta: int = 64,
                          r_max: Optional[float] = None) -> CertifiedCount:
    """Build ``target`` orthogonal trial functions with certified ``s_-[phi] < 0``.

    Scales follow ``R_j = R_0 (2 k^3)^j`` so consecutive supports ``[kR, k^4 R]``
    are disjoint.  ``k`` is swept geometrically over powers of two, starting a
    few octaves below the leading-order estimate of the threshold.  ``budget``
    caps the number of form evaluations; when it runs out before ``target``
    members are certified, TargetNotReached carries the partial result.
    With ``r_max`` set, supports must end inside the disc of that radius; the
    search stops at the first spec that would leave it.  ``MAX_RADIUS`` acts as
    an implicit ``r_max``, which caps the count near 25 in double precision.
    """
    if target < 1:
        raise ValueError("target must be at least 1")
    if budget is None:
        budget = 2 * target + 24
    if model is None:
        model = TwoCenter(params)
    q = params.mathieu_q
    mathieu = mathieu_eigs(q, levels=max(level + 1, 4))
    lam = float(mathieu.eigenvalues[level])
    if lam >= 0:
        warnings.warn(f"level {level} is not negative at q={q}", ChannelNotNegative, stacklevel=2)
    if r_start is None:
        # inner edge of the first support, well outside the charges
        r_start = 8.0 * params.x0_norm
    k_est = _estimate_threshold(lam) if lam < 0 else math.inf
    exponent = max(1, int(math.floor(math.log2(k_est))) - 3) if math.isfinite(k_est) else 1
    result = CertifiedCount(0, [])
    attempts = 0
    while attempts < budget and result.count < target:
        k = 2.0**exponent
        R = r_start / k
        first = True
        while attempts < budget and result.count < target:
            spec = TrialSpec(k, R, level, q)
            if spec.support[1] > (MAX_RADIUS if r_max is None else min(r_max, MAX_RADIUS)):
                budget = attempts
                break
            psi = TrialFunction(spec, mathieu)
            fb = eval_form(psi, -1, params, model, n_radial, n_theta)
            attempts += 1
            margin = fb.total + MARGIN_FACTOR * fb.quadrature_error
            if margin < 0:
                result.family.append(spec)
                result.totals.append(fb.total)
                result.errors.append(fb.quadrature_error)
                # margins reported relative to the member's own scale
                result.margins.append(margin * R * R)
                result.count += 1
            elif first:
                break
            first = False
            R *= 2 * k**3
        if result.count == 0:
            exponent += 1
        elif result.count < target and attempts < budget:
            # current k stopped certifying; keep going with the next octave beyond the last support
            exponent += 1
            r_start = max(r_start, 2 * result.family[-1].support[1])
    result.attempts = attempts
    if result.family:
        fam = [TrialFunction(s, mathieu) for s in result.family]
        G = gram_matrix(fam, n_radial, n_theta)
        result.gram_defect = float(np.max(np.abs(G - np.eye(len(fam)))))
    if result.count < target:
        raise TargetNotReached(
            f"certified {result.count} of {target} trial functions within budget {budget}",
            partial=result,
        )
    return result

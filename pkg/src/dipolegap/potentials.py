"""Potential models for the gapped Dirac problem and charge-distribution multipoles.

Planar models live in R^2 with the two centres at +x0 and -x0.  The dipole
(Mathieu) angle ``theta`` used throughout the toolkit is measured from the
direction of -x0; with that choice the large-distance behaviour of the
two-centre potential reads ``-2|x0| cos(theta) / r**2`` and the angular part of
the s_- form is the Mathieu operator ``-d^2/dtheta^2 + 2 q cos(theta)``.  In
terms of the angle ``phi = theta - pi`` measured from +x0 the same tail is
``+2|x0| cos(phi) / r**2``, which is what direct expansion of the closed form
gives.

Charge distributions are three-dimensional (point charges and/or a gridded
density); their potential ``(1/4pi) int dmu(y)/|x-y|`` is restricted to the
plane x3 = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import factorial, lpmv

from .errors import (
    EmptyDistribution,
    OutsideValidity,
    PreconditionViolated,
    SingularPoint,
    ToleranceAmbiguous,
    ViolationDetected,
)

FOUR_PI = 4.0 * math.pi

# relative zero tolerance for multipole moments, scaled by TV * R**l
MOMENT_ZERO_RTOL = 1e-10
# moments in (tol, AMBIGUITY_FACTOR * tol] are neither clearly zero nor clearly not
AMBIGUITY_FACTOR = 100.0


@dataclass(frozen=True)
class PhysicalParams:
    """Coupling ``gamma``, gap half-width ``mass`` and centre offset ``x0``."""

    gamma: float
    mass: float
    x0: tuple = (1.0, 0.0)

    def __post_init__(self):
        x0 = tuple(float(c) for c in np.ravel(self.x0))
        if len(x0) != 2:
            raise ValueError("x0 must be a 2-vector")
        object.__setattr__(self, "x0", x0)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not math.hypot(*x0) > 0:
            raise ValueError("x0 must be nonzero")

    @property
    def x0_norm(self) -> float:
        return math.hypot(*self.x0)

    @property
    def x0_unit(self) -> np.ndarray:
        return np.asarray(self.x0) / self.x0_norm

    @property
    def mathieu_q(self) -> float:
        """Mathieu parameter of the s_- form, ``m * gamma * |x0|``."""
        return self.mass * self.gamma * self.x0_norm


# --------------------------------------------------------------------------
# planar potential models


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    return x


def _two_center(x, x0, eps=None):
    d1 = np.linalg.norm(x - x0, axis=-1)
    d2 = np.linalg.norm(x + x0, axis=-1)
    dot = x @ x0
    with np.errstate(divide="ignore", invalid="ignore"):
        # 1/d1 - 1/d2 = 4 x.x0 / (d1 d2 (d1 + d2)); no cancellation at large |x|
        stable = 4.0 * dot / (d1 * d2 * (d1 + d2))
    if eps is None:
        return stable
    capped = 1.0 / np.maximum(d1, eps) - 1.0 / np.maximum(d2, eps)
    return np.where((d1 > eps) & (d2 > eps), stable, capped)


@dataclass(frozen=True)
class TwoCenter:
    params: PhysicalParams
    kind = "TwoCenter"

    def evaluate(self, x):
        x = _as_points(x)
        x0 = np.asarray(self.params.x0)
        d1 = np.linalg.norm(x - x0, axis=-1)
        d2 = np.linalg.norm(x + x0, axis=-1)
        if np.any(d1 == 0) or np.any(d2 == 0):
            raise SingularPoint("two-centre potential evaluated at a centre")
        return _two_center(x, x0)


@dataclass(frozen=True)
class PureDipole:
    """Leading dipole term ``2 x.x0 / |x|**3`` of the two-centre potential."""

    params: PhysicalParams
    kind = "PureDipole"

    def evaluate(self, x):
        x = _as_points(x)
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0):
            raise SingularPoint("pure dipole evaluated at the origin")
        return 2.0 * (x @ np.asarray(self.params.x0)) / r**3


@dataclass(frozen=True)
class RegularizedTwoCenter:
    """Two-centre potential with each Coulomb term capped at distance ``eps``.

    ``1/|x-x0|`` is replaced by ``1/max(|x-x0|, eps)`` (radial capping), which
    keeps the antisymmetry and the exact far field.
    """

    params: PhysicalParams
    eps: float
    scheme: str = "cap"
    kind = "RegularizedTwoCenter"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.scheme != "cap":
            raise ValueError(f"unknown regularization scheme {self.scheme!r}")

    def evaluate(self, x):
        x = _as_points(x)
        return _two_center(x, np.asarray(self.params.x0), self.eps)


@dataclass(frozen=True)
class MultipoleTail:
    """Truncated multipole expansion, valid for ``|x| >= 2R``."""

    table: "MultipoleTable"
    kind = "MultipoleTail"

    def evaluate(self, x):
        value, _ = multipole_tail_with_error(self.table, x)
        return value


PotentialModel = Union[TwoCenter, PureDipole, RegularizedTwoCenter, MultipoleTail]


def eval_potential(model: PotentialModel, x):
    """Evaluate ``model`` at a planar point (or an array of points, shape (..., 2))."""
    out = model.evaluate(x)
    return float(out) if np.ndim(out) == 0 else out


def dipole_leading_term(x0_norm, r, theta):
    """Pure dipole term ``-2|x0| cos(theta) / r**2`` in the Mathieu angle.

    ``theta`` is measured from the direction of -x0 (see module docstring).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    out = -2.0 * x0_norm * np.cos(theta) / r**2
    return float(out) if np.ndim(out) == 0 else out


def polar_to_plane(params: PhysicalParams, r, theta):
    """Cartesian points for polar coordinates in the Mathieu-angle frame."""
    u = params.x0_unit
    v = np.array([-u[1], u[0]])
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    # theta = 0 points along -x0
    c, s = np.cos(theta), np.sin(theta)
    return (r * c)[..., None] * (-u) + (r * s)[..., None] * (-v)


# --------------------------------------------------------------------------
# charge distributions and multipoles


@dataclass(frozen=True)
class DensityGrid:
    """Density samples ``values[i,j,k]`` at ``origin + (i,j,k) * spacing``.

    Each sample stands for a cell of volume ``prod(spacing)`` centred on it
    (midpoint rule).
    """

    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "spacing", np.asarray(self.spacing, dtype=float).reshape(3))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3:
            raise ValueError("density values must be a 3D array")
        if np.any(self.spacing <= 0):
            raise ValueError("density spacing must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def nodes(self):
        """Sample positions and charges (value * cell volume) of nonzero cells."""
        idx = np.nonzero(self.values)
        pos = self.origin + np.stack(idx, axis=-1) * self.spacing
        return pos, self.values[idx] * self.cell_volume


@dataclass(frozen=True)
class ChargeDistribution:
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    charges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: Optional[DensityGrid] = None
    support_radius: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        q = np.asarray(self.charges, dtype=float).reshape(-1)
        if len(pos) != len(q):
            raise ValueError("positions and charges differ in length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "charges", q)
        if not np.all(np.isfinite(q)):
            raise ValueError("charges must be finite")
        R = float(self.support_radius)
        pts, _ = self.atoms()
        if len(pts) and np.max(np.linalg.norm(pts, axis=1)) > R * (1 + 1e-12):
            raise ValueError("charge found outside the support ball B(0, R)")

    def atoms(self):
        """All charges as a discrete set (density cells collapsed to midpoints)."""
        pos, q = self.positions, self.charges
        if self.density is not None:
            dpos, dq = self.density.nodes()
            pos = np.concatenate([pos, dpos])
            q = np.concatenate([q, dq])
        return pos, q

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.atoms()[1])))

    def translated(self, shift, support_radius=None):
        shift = np.asarray(shift, dtype=float)
        dens = None
        if self.density is not None:
            d = self.density
            dens = DensityGrid(d.origin + shift, d.spacing, d.values)
        R = support_radius
        if R is None:
            R = self.support_radius + float(np.linalg.norm(shift))
        return ChargeDistribution(self.positions + shift, self.charges, dens, R)


def charge_distribution_from_json(doc) -> ChargeDistribution:
    """Build a distribution from the JSON document layout (dict, str or path)."""
    if isinstance(doc, (str, Path)):
        p = Path(doc)
        text = p.read_text() if p.exists() else str(doc)
        doc = json.loads(text)
    points = doc.get("points", [])
    pos = [pt["pos"] for pt in points]
    q = [pt["q"] for pt in points]
    dens = None
    if doc.get("density") is not None:
        d = doc["density"]
        vals = np.asarray(d["values"], dtype=float)
        if "shape" in d:
            vals = vals.reshape(d["shape"])
        dens = DensityGrid(d["origin"], d["spacing"], vals)
    return ChargeDistribution(
        np.asarray(pos, dtype=float).reshape(-1, 3), q, dens, float(doc["support_radius"])
    )


def charge_distribution_to_json(rho: ChargeDistribution) -> dict:
    doc = {
        "points": [
            {"pos": [float(c) for c in p], "q": float(q)}
            for p, q in zip(rho.positions, rho.charges)
        ],
        "support_radius": float(rho.support_radius),
    }
    if rho.density is not None:
        doc["density"] = {
            "origin": rho.density.origin.tolist(),
            "spacing": rho.density.spacing.tolist(),
            "values": rho.density.values.tolist(),
        }
    return doc


def lm_index(l: int, m: int) -> int:
    return l * l + m + l


def solid_harmonics(l_max: int, y) -> np.ndarray:
    """Regular real solid harmonics ``|y|^l C_lm(y/|y|)``, Racah normalised.

    The normalisation gives ``C_00 = 1`` and ``(C_1,-1, C_10, C_11) = (y, z, x)/|y|``,
    so that the addition theorem reads ``sum_m C_lm(a) C_lm(b) = P_l(a.b)``.
    Returns an array of shape ``(len(y), (l_max+1)**2)``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    r = np.linalg.norm(y, axis=1)
    safe = np.where(r > 0, r, 1.0)
    cos_t = np.where(r > 0, y[:, 2] / safe, 1.0)
    phi = np.arctan2(y[:, 1], y[:, 0])
    out = np.zeros((len(y), (l_max + 1) ** 2))
    for l in range(l_max + 1):
        rl = r**l
        for m in range(0, l + 1):
            # lpmv carries the Condon-Shortley phase; remove it
            p = (-1) ** m * lpmv(m, l, cos_t)
            norm = math.sqrt(factorial(l - m, exact=True) / factorial(l + m, exact=True))
            if m == 0:
                out[:, lm_index(l, 0)] = rl * norm * p
            else:
                out[:, lm_index(l, m)] = rl * math.sqrt(2) * norm * p * np.cos(m * phi)
                out[:, lm_index(l, -m)] = rl * math.sqrt(2) * norm * p * np.sin(m * phi)
    return out


@dataclass(frozen=True)
class MultipoleTable:
    e: float
    p: np.ndarray
    moments: np.ndarray
    l_max: int
    leading_order: Optional[int]
    total_variation: float
    support_radius: float

    def q(self, l: int, m: int) -> float:
        return float(self.moments[lm_index(l, m)])

    def order_moments(self, l: int) -> np.ndarray:
        return self.moments[l * l : (l + 1) ** 2]

    def zero_tol(self, l: int) -> float:
        return MOMENT_ZERO_RTOL * self.total_variation * self.support_radius**l

    def q_l(self, l: int) -> float:
        """``max_m |q_lm|`` for order ``l``."""
        return float(np.max(np.abs(self.order_moments(l))))


def multipole_moments(rho: ChargeDistribution, l_max: int = 8) -> MultipoleTable:
    """Moments ``q_lm = int |y|^l C_lm(y/|y|) dmu(y)`` by direct summation.

    Gridded densities use the midpoint rule on the supplied cells.
    """
    if l_max < 0:
        raise ValueError("l_max must be nonnegative")
    pos, q = rho.atoms()
    if len(q) == 0:
        raise EmptyDistribution("distribution has no charges")
    moments = q @ solid_harmonics(l_max, pos)
    tv = float(np.sum(np.abs(q)))
    R = float(rho.support_radius)
    leading = None
    for l in range(l_max + 1):
        tol = MOMENT_ZERO_RTOL * tv * R**l
        if np.any(np.abs(moments[l * l : (l + 1) ** 2]) > tol):
            leading = l
            break
    e = float(moments[0])
    p = np.array([moments[lm_index(1, 1)], moments[lm_index(1, -1)], moments[lm_index(1, 0)]]) if l_max >= 1 else np.zeros(3)
    return MultipoleTable(e, p, moments, l_max, leading, tv, R)


def _embed(x):
    x = _as_points(x)
    return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)


def multipole_tail_with_error(table: MultipoleTable, x):
    """Truncated expansion in the plane x3 = 0 and a bound on the dropped orders.

    The tail bound follows from ``|sum_m q_lm C_lm(xhat)| <= TV R^l``.
    """
    X = _embed(x)
    shape = X.shape[:-1]
    X = X.reshape(-1, 3)
    r = np.linalg.norm(X, axis=1)
    R = table.support_radius
    if np.any(r < 2 * R):
        raise OutsideValidity(f"multipole tail needs |x| >= 2R = {2 * R}")
    C = solid_harmonics(table.l_max, X / r[:, None])
    val = np.zeros(len(r))
    for l in range(table.l_max + 1):
        sl = slice(l * l, (l + 1) ** 2)
        val += C[:, sl] @ table.moments[sl] / r ** (l + 1)
    val /= FOUR_PI
    ratio = R / r
    tail = table.total_variation / (FOUR_PI * r) * ratio ** (table.l_max + 1) / (1 - ratio)
    val, tail = val.reshape(shape), tail.reshape(shape)
    if val.ndim == 0:
        return float(val), float(tail)
    return val, tail


def charge_potential(rho: ChargeDistribution, x):
    """Exact ``(1/4pi) int dmu(y)/|x - y|`` restricted to the plane x3 = 0."""
    X = _embed(x)
    shape = X.shape[:-1]
    X = X.reshape(-1, 3)
    pos, q = rho.atoms()
    out = np.zeros(len(X))
    # chunk to bound memory for large density grids
    step = max(1, 2_000_000 // max(len(pos), 1))
    for i in range(0, len(X), step):
        d = np.linalg.norm(X[i : i + step, None, :] - pos[None, :, :], axis=-1)
        if np.any(d == 0):
            raise SingularPoint("potential evaluated on a point charge")
        out[i : i + step] = (q / d).sum(axis=1) / FOUR_PI
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Classification:
    kind: str  # "InfinitelyMany" | "Finite" | "Zero"
    reason: Optional[str] = None  # "Monopole" | "Dipole" for InfinitelyMany
    leading_order: Optional[int] = None


def _check_ambiguity(table: MultipoleTable, l_upto: int):
    for l in range(l_upto + 1):
        tol = table.zero_tol(l)
        for m in range(-l, l + 1):
            v = abs(table.q(l, m))
            if tol < v <= AMBIGUITY_FACTOR * tol:
                raise ToleranceAmbiguous(l, m, table.q(l, m), tol)


def classify_charge(rho: ChargeDistribution, l_max: int = 8) -> Classification:
    """Infinitely many in-gap states iff the charge or the dipole moment is nonzero."""
    if len(rho.atoms()[1]) == 0 or rho.total_variation == 0:
        return Classification("Zero")
    table = multipole_moments(rho, l_max)
    lead = table.leading_order
    _check_ambiguity(table, min(l_max, 1 if lead is None else max(lead, 1)))
    if lead is None:
        return Classification("Zero")
    if lead == 0:
        return Classification("InfinitelyMany", "Monopole", 0)
    if lead == 1:
        return Classification("InfinitelyMany", "Dipole", 1)
    return Classification("Finite", None, lead)


@dataclass(frozen=True)
class TailBoundReport:
    order: int
    q_l: float
    C_l: float
    radii: np.ndarray
    max_abs_v: np.ndarray
    decay_exponent: float
    holds: bool


def tail_bound_check(table: MultipoleTable, r_samples, rho: Optional[ChargeDistribution] = None,
                     n_angles: int = 64) -> TailBoundReport:
    """Fit ``C_l`` in ``|V(r e^{i phi}, 0)| <= C_l q_l (1+r)^{-l-1}`` over the samples.

    ``V`` is the exact potential of ``rho`` when given, otherwise the truncated
    multipole expansion.  A decay slower than ``r^{-l-1}`` over the outer half
    of the samples means no finite constant works and raises ViolationDetected.
    """
    r = np.sort(np.asarray(r_samples, dtype=float))
    if np.any(r < 2 * table.support_radius):
        raise PreconditionViolated("tail samples must satisfy r >= 2R")
    phi = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    pts = np.stack([np.outer(r, np.cos(phi)), np.outer(r, np.sin(phi))], axis=-1)
    if rho is not None:
        V = charge_potential(rho, pts)
    else:
        V = multipole_tail_with_error(table, pts)[0]
    vmax = np.max(np.abs(V), axis=1)
    lead = table.leading_order
    if lead is None:
        _, tail = multipole_tail_with_error(table, pts[:, :1])
        holds = bool(np.all(vmax <= tail[:, 0] * (1 + 1e-9) + 1e-300))
        return TailBoundReport(table.l_max + 1, 0.0, 0.0, r, vmax, math.nan, holds)
    if lead < 2:
        raise PreconditionViolated(f"tail bound needs leading order >= 2, got {lead}")
    l = lead
    ql = table.q_l(l)
    W = (1 + r) ** (-l - 1)
    ratio = vmax / (ql * W)
    half = len(r) // 2
    outer = slice(half, None) if len(r) >= 4 else slice(None)
    good = vmax[outer] > 0
    if np.count_nonzero(good) >= 2:
        slope = np.polyfit(np.log(r[outer][good]), np.log(vmax[outer][good]), 1)[0]
    else:
        slope = -math.inf
    if slope > -(l + 1) + 0.1:
        raise ViolationDetected(
            f"|V| decays like r^{slope:.3f}, slower than the order-{l} law r^{-(l + 1)}"
        )
    C = float(np.max(ratio))
    return TailBoundReport(l, ql, C, r, vmax, float(slope), True)

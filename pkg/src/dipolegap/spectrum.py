"""In-gap spectra: per-channel radial towers, a block Dirac solver, finite counts.

Channel solver
    In the dipole region the s_- form separates into Mathieu channels.  For a
    channel with eigenvalue ``lambda_n < 0`` the reduced radial operator is
    ``-f'' + (lambda_n - 1/4)/r^2 f`` with a Dirichlet wall at ``r_cut``.  Its
    negative eigenvalues ``-kappa^2`` map into the gap by ``E = sqrt(m^2 - kappa^2)``.
    The discretisation works in ``x = ln r`` with ``f = sqrt(r) g``, which turns
    the problem into the symmetric tridiagonal pencil
    ``(-D_xx + lambda_n) g = -kappa^2 r^2 g``.  Eigenvalues are located by Sturm
    counts of the pencil, which keeps high relative accuracy for levels whose
    ``kappa^2`` spans many decades.

Block solver
    Two-component Dirac operator in the basis ``e^{i j phi}`` (upper) and
    ``i e^{i (j+1) phi}`` (lower), ``|j| <= J``, on a staggered radial grid
    (upper components on nodes, lower on midpoints).  For the free operator the
    square of the discrete matrix is ``m^2 +`` a nonnegative matrix, so no
    spurious states can enter the gap from the kinetic part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.linalg import eig_banded
from scipy.sparse.linalg import splu

from .errors import (
    ChannelBudgetExceeded,
    GridRangeTooSmall,
    GridTooCoarse,
    NoNegativeChannel,
    PollutionSuspected,
    TooFewLevels,
    TruncationTooSmall,
)
from .mathieu import mathieu_eigs
from .potentials import MultipoleTable, PhysicalParams, RegularizedTwoCenter

MIN_NODES_PER_DECADE = 16
# a level counts as resolved when its decay length fits this many times inside r_max
RESOLVED_KAPPA_RMAX = 5.0
# error of the coarse solution of a second-order scheme from a two-grid difference
RICHARDSON_2 = 4.0 / 3.0


@dataclass(frozen=True)
class RadialGrid:
    """Log-uniform radial nodes ``r_min = r_0 < ... < r_{n-1} = r_max``."""

    r_min: float
    r_max: float
    n_nodes: int

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if self.n_nodes < 3:
            raise ValueError("need at least 3 nodes")

    @classmethod
    def with_density(cls, r_min, r_max, nodes_per_decade=32):
        decades = math.log10(r_max / r_min)
        return cls(r_min, r_max, int(math.ceil(decades * nodes_per_decade)) + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.exp(np.linspace(math.log(self.r_min), math.log(self.r_max), self.n_nodes))

    @property
    def h(self) -> float:
        """Spacing in ``ln r``."""
        return math.log(self.r_max / self.r_min) / (self.n_nodes - 1)

    @property
    def nodes_per_decade(self) -> float:
        return (self.n_nodes - 1) / math.log10(self.r_max / self.r_min)

    def refined(self, factor=2):
        return RadialGrid(self.r_min, self.r_max, factor * (self.n_nodes - 1) + 1)


# --------------------------------------------------------------------------
# channel operator


@dataclass(frozen=True)
class ChannelOperator:
    """Pencil ``A g = mu B g`` on the interior nodes; ``B = diag(r^2)``.

    ``mu = -kappa^2`` are the eigenvalues of ``-f'' + c(r)/r^2 f``.
    """

    diag: np.ndarray
    off: np.ndarray
    weight: np.ndarray
    r: np.ndarray

    def symmetric_matrix(self) -> np.ndarray:
        """Dense ``B^{-1/2} A B^{-1/2}``, symmetric by construction."""
        s = 1.0 / np.sqrt(self.weight)
        T = np.diag(self.diag * s * s)
        o = self.off * s[:-1] * s[1:]
        T += np.diag(o, 1) + np.diag(o, -1)
        return T

    def count_below(self, mu) -> np.ndarray:
        """Number of eigenvalues below each ``mu`` (Sylvester inertia of ``A - mu B``)."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        d = self.diag[0] - mu * self.weight[0]
        tiny = np.finfo(float).tiny
        d = np.where(d == 0, -tiny, d)
        count = (d < 0).astype(int)
        off2 = self.off**2
        for i in range(1, len(self.diag)):
            d = self.diag[i] - mu * self.weight[i] - off2[i - 1] / d
            d = np.where(d == 0, -tiny, d)
            count += d < 0
        return count

    def negative_count(self) -> int:
        return int(self.count_below(0.0)[0])

    def eigenvalues_between(self, lo: float, hi: float, iters: int = 200) -> np.ndarray:
        """All eigenvalues in ``(lo, hi)`` with ``lo < hi <= 0`` by bisection in ``log(-mu)``.

        Bisection stops at full double precision in the log variable.
        """
        if not lo < hi <= 0:
            raise ValueError("need lo < hi <= 0")
        hi_eff = hi if hi < 0 else -1e-300
        c_lo, c_hi = self.count_below([lo, hi_eff])
        n = int(c_hi - c_lo)
        if n <= 0:
            return np.zeros(0)
        idx = np.arange(c_lo, c_hi)  # the (idx+1)-th eigenvalue
        a = np.full(n, math.log(-lo))  # log(-mu) upper end (deeper)
        b = np.full(n, math.log(-hi_eff))
        for _ in range(iters):
            mid = 0.5 * (a + b)
            c = self.count_below(-np.exp(mid))
            deeper = c > idx  # eigenvalue idx lies below -exp(mid)
            a, b = np.where(deeper, a, mid), np.where(deeper, mid, b)
            if np.all(np.abs(a - b) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(a))):
                break
        return -np.exp(0.5 * (a + b))


def assemble_channel_operator(lambda_n: float, grid: RadialGrid, r_cut: float) -> ChannelOperator:
    """Pencil for ``-f'' + (lambda_n - 1/4)/r^2 f`` on ``[r_min, r_max]``, Dirichlet ends.

    Below ``r_cut`` the inverse-square coefficient is zero.
    """
    if grid.nodes_per_decade < MIN_NODES_PER_DECADE:
        raise GridTooCoarse(
            f"{grid.nodes_per_decade:.1f} nodes per decade < {MIN_NODES_PER_DECADE}"
        )
    if r_cut < grid.r_min * (1 - 1e-12):
        raise ValueError("r_cut must not lie below the grid")
    r = grid.nodes[1:-1]
    h2 = grid.h**2
    c = np.where(r >= r_cut * (1 - 1e-12), lambda_n - 0.25, 0.0)
    diag = 2.0 / h2 + c + 0.25
    off = np.full(len(r) - 1, -1.0 / h2)
    return ChannelOperator(diag, off, r * r, r)


def count_channel_negative(lambda_n: float, grid: RadialGrid, r_cut: float) -> int:
    return assemble_channel_operator(lambda_n, grid, r_cut).negative_count()


def _gap_distance(kappa_sq, m):
    # m - sqrt(m^2 - k^2) without cancellation
    return kappa_sq / (m + np.sqrt(m * m - kappa_sq))


@dataclass(frozen=True)
class ChannelSpectrum:
    channel: int
    lambda_n: float
    kappa_sq: np.ndarray  # descending: deepest level first
    energies: np.ndarray
    gap_distance: np.ndarray  # m - E_j
    ratios: np.ndarray
    r_cut: float
    r_max: float
    mass: float

    @property
    def resolved(self) -> np.ndarray:
        return np.sqrt(self.kappa_sq) * self.r_max >= RESOLVED_KAPPA_RMAX

    @property
    def predicted_ratio(self) -> float:
        return math.exp(-2 * math.pi / math.sqrt(-self.lambda_n))


def channel_levels(lambda_n: float, grid: RadialGrid, r_cut: float, mass: float) -> np.ndarray:
    """``kappa^2`` values in ``(0, m^2)`` for one channel, deepest first."""
    op = assemble_channel_operator(lambda_n, grid, r_cut)
    mu = op.eigenvalues_between(-mass * mass, 0.0)
    return np.sort(-mu)[::-1]


def channel_spectrum(n: int, lambda_n: float, grid: RadialGrid, r_cut: float, mass: float) -> ChannelSpectrum:
    k2 = channel_levels(lambda_n, grid, r_cut, mass)
    E = np.sqrt(mass * mass - k2)
    dist = _gap_distance(k2, mass)
    ratios = dist[1:] / dist[:-1]
    return ChannelSpectrum(n, float(lambda_n), k2, E, dist, ratios, float(r_cut), grid.r_max, mass)


def mathieu_parameter(params: PhysicalParams, coupling: str = "form") -> float:
    """Mathieu parameter for the radial reduction.

    ``"form"`` is the s_- form, ``q = m gamma |x0|``.  ``"squared"`` is the
    leading large-distance reduction of ``H^2 - m^2`` on the upper component,
    where the cross term carries ``2 m gamma``, so ``q = 2 m gamma |x0|``.
    """
    if coupling == "form":
        return params.mathieu_q
    if coupling == "squared":
        return 2.0 * params.mathieu_q
    raise ValueError(f"unknown coupling {coupling!r}")


def solve_towers(params: PhysicalParams, grid: RadialGrid, r_cut: Optional[float] = None,
                 coupling: str = "form", min_levels: int = 3) -> List[ChannelSpectrum]:
    """In-gap levels of every negative Mathieu channel."""
    if r_cut is None:
        r_cut = params.x0_norm
    q = mathieu_parameter(params, coupling)
    spec = mathieu_eigs(q, levels=int(2 * math.sqrt(2 * q)) + 6)
    neg = [i for i, lam in enumerate(spec.eigenvalues) if lam < 0]
    if not neg:
        raise NoNegativeChannel(f"M({q}) has no negative eigenvalue")
    sub = RadialGrid(r_cut, grid.r_max, max(3, int(round(math.log(grid.r_max / r_cut) / grid.h)) + 1)) \
        if r_cut > grid.r_min else grid
    towers = [channel_spectrum(n, spec.eigenvalues[n], sub, r_cut, params.mass) for n in neg]
    if len(towers[0].kappa_sq) < min_levels:
        raise GridRangeTooSmall(
            f"only {len(towers[0].kappa_sq)} levels resolved in channel 0; increase r_max"
        )
    return towers


@dataclass(frozen=True)
class ClusteringReport:
    ratio_estimate: float
    predicted_ratio: float
    levels_used: int
    deviation: float


def fit_geometric_ratio(distances) -> float:
    """Least-squares ratio of a geometric sequence (fit of log d_j against j)."""
    d = np.asarray(distances, dtype=float)
    j = np.arange(len(d))
    slope = np.polyfit(j, np.log(d), 1)[0]
    return float(math.exp(slope))


def clustering_report(ch: ChannelSpectrum, levels: int = 4) -> ClusteringReport:
    """Geometric-ratio fit over the last ``levels`` resolved levels of a tower."""
    dist = ch.gap_distance[ch.resolved]
    if len(dist) < max(levels, 4):
        raise TooFewLevels(f"need >= {max(levels, 4)} resolved levels, have {len(dist)}")
    used = dist[-levels:]
    est = fit_geometric_ratio(used)
    pred = ch.predicted_ratio
    return ClusteringReport(est, pred, len(used), abs(est / pred - 1.0))


# --------------------------------------------------------------------------
# gap spectra


@dataclass(frozen=True)
class GapSpectrum:
    """In-gap eigenvalues, ordered by decreasing distance to the nearest gap edge."""

    energies: np.ndarray
    mass: float
    channels: Optional[list] = None  # (tower, sign) labels from the channel solver
    residuals: Optional[np.ndarray] = None
    metadata: Dict = field(default_factory=dict)
    # distances computed without cancellation; m - |E| rounds to 0 once it drops below ~1e-16 m
    distances: Optional[np.ndarray] = None

    @property
    def gap_distance(self) -> np.ndarray:
        if self.distances is not None:
            return np.asarray(self.distances, dtype=float)
        return self.mass - np.abs(self.energies)

    def __len__(self):
        return len(self.energies)


def gap_spectrum_from_towers(towers: Sequence[ChannelSpectrum], both_edges: bool = True,
                             resolved_only: bool = False) -> GapSpectrum:
    """Collect tower levels; the mirror tower at ``-E`` follows from the reflection symmetry."""
    E, labels, dist = [], [], []
    for ch in towers:
        mask = ch.resolved if resolved_only else np.ones(len(ch.energies), bool)
        for e, d in zip(ch.energies[mask], ch.gap_distance[mask]):
            for sgn in ((1, -1) if both_edges else (1,)):
                E.append(sgn * e)
                labels.append((ch.channel, sgn))
                dist.append(d)
    order = np.argsort(-np.asarray(dist), kind="stable")
    m = towers[0].mass if towers else float("nan")
    return GapSpectrum(
        np.asarray(E)[order],
        m,
        [labels[i] for i in order],
        None,
        {"solver": "towers", "r_cut": towers[0].r_cut if towers else None},
        np.asarray(dist, dtype=float)[order],
    )


# --------------------------------------------------------------------------
# block Dirac solver


def _angular_coefficients(model, r, J, n_phi=None):
    """Fourier coefficients ``V_k(r)``, ``k = -2J..2J``, about the origin (phi from x0)."""
    params = model.params
    if n_phi is None:
        n_phi = max(512, 16 * J)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    u = params.x0_unit
    v = np.array([-u[1], u[0]])
    pts = (r[:, None, None] * (np.cos(phi)[None, :, None] * u + np.sin(phi)[None, :, None] * v))
    V = model.evaluate(pts)
    c = np.fft.fft(V, axis=1) / n_phi
    ks = np.arange(-2 * J, 2 * J + 1)
    # V is even in phi, so the coefficients are real
    return ks, np.real(c[:, ks % n_phi])


def assemble_dirac_block(params: PhysicalParams, model, grid: RadialGrid, J: int):
    """Sparse symmetric matrix of the Dirac operator on the staggered grid.

    Lower components live on the midpoints of every channel.  Upper components
    live on the nodes, with the wall placed on the side that respects
    regularity at the origin: channels with ``kappa = j + 1/2 < 0`` have
    ``U(r_min) = 0`` (``U ~ r^{|kappa|+1}``), channels with ``kappa > 0`` keep
    ``U`` free at ``r_min`` and vanish at ``r_max`` instead, so their lower
    component (``W ~ r^{kappa+1}``) carries the inner condition.  A wall on the
    wrong component supports boundary modes ``W ~ r^{-kappa}`` near ``E = -m``.

    Returns ``(H, layout)``; unknowns are ordered by radial position.
    """
    r = grid.nodes
    n = len(r)
    h = np.diff(r)
    mid = np.sqrt(r[:-1] * r[1:])
    w_u = np.empty(n)
    w_u[1:-1] = 0.5 * (r[2:] - r[:-2])
    w_u[0] = 0.5 * (r[1] - r[0])
    w_u[-1] = 0.5 * (r[-1] - r[-2])
    nj = 2 * J + 1
    js = np.arange(-J, J + 1)
    kap = js + 0.5

    # slot layout: node i (U of existing channels), then midpoint i (W of all channels)
    has_u = np.ones((n, nj), dtype=bool)
    has_u[0, kap < 0] = False
    has_u[-1, kap > 0] = False
    u_index = np.full((n, nj), -1)
    w_index = np.full((n - 1, nj), -1)
    k = 0
    for i in range(n):
        cnt = int(has_u[i].sum())
        u_index[i, has_u[i]] = np.arange(k, k + cnt)
        k += cnt
        if i < n - 1:
            w_index[i] = np.arange(k, k + nj)
            k += nj
    dim = k

    rows, cols, vals = [], [], []
    # kinetic: (B U)_{i+1/2} = -(U_{i+1} - U_i)/h_i + kappa (U_i + U_{i+1}) / (2 r_{i+1/2})
    I = np.arange(n - 1)[:, None]
    for shift, sign in ((1, -1.0), (0, 1.0)):
        coef = (sign / h[:, None] + 0.5 * kap[None, :] / mid[:, None])
        coef = coef * np.sqrt(h)[:, None] / np.sqrt(w_u[I + shift])
        tgt = u_index[I + shift, np.arange(nj)[None, :]]
        ok = tgt >= 0
        rows.append(w_index[ok]); cols.append(tgt[ok]); vals.append(coef[ok])
    m, g = params.mass, params.gamma
    ks, Vu = _angular_coefficients(model, r, J)
    _, Vw = _angular_coefficients(model, mid, J)
    kidx = (js[:, None] - js[None, :]) + 2 * J
    for i in range(n):
        idx = u_index[i][has_u[i]]
        sel = np.flatnonzero(has_u[i])
        blk = g * Vu[i][kidx[np.ix_(sel, sel)]] + m * np.eye(len(sel))
        rows.append(np.repeat(idx, len(idx))); cols.append(np.tile(idx, len(idx))); vals.append(blk.ravel() / 2)
        if i < n - 1:
            idx = w_index[i]
            blk = g * Vw[i][kidx] - m * np.eye(nj)
            rows.append(np.repeat(idx, nj)); cols.append(np.tile(idx, nj)); vals.append(blk.ravel() / 2)
    R = np.concatenate(rows); C = np.concatenate(cols); Vv = np.concatenate(vals)
    A = sps.coo_matrix((Vv, (R, C)), shape=(dim, dim))
    H = (A + A.T).tocsc()
    layout = {"n_radial": n, "n_channels": nj, "dim": dim, "u_index": u_index, "w_index": w_index}
    return H, layout


def _to_banded(H):
    """Upper banded storage of a symmetric sparse matrix (for ``eig_banded``)."""
    C = sps.triu(H).tocoo()
    u = int((C.col - C.row).max()) if C.nnz else 0
    ab = np.zeros((u + 1, H.shape[0]))
    ab[u + C.row - C.col, C.col] = C.data
    return ab


def _gap_eigenvalues(H, m):
    """All eigenvalues in ``(-m, m)``: banded reduction plus bisection (exact count)."""
    lim = m * (1 - 1e-15)
    return eig_banded(_to_banded(H), eigvals_only=True, select="v", select_range=(-lim, lim))


def _nearest_eigenpair(H, sigma, max_iter=60, tol=1e-13):
    """Eigenpair of ``H`` closest to ``sigma`` by shifted inverse iteration."""
    n = H.shape[0]
    lu = splu((H - sigma * sps.identity(n, format="csc")).tocsc())
    v = np.random.default_rng(12345).standard_normal(n)
    v /= np.linalg.norm(v)
    e = sigma
    for _ in range(max_iter):
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        Hw = H @ w
        e_new = float(w @ Hw)
        res = np.linalg.norm(Hw - e_new * w)
        v = w
        if res <= tol * max(1.0, abs(e_new)) or abs(e_new - e) <= 1e-16 * max(1.0, abs(e)):
            e = e_new
            break
        e = e_new
    return e, v


def solve_dirac_block(params: PhysicalParams, model: RegularizedTwoCenter, grid: RadialGrid, J: int,
                      residual_tol: float = 1e-6, grid_rtol: float = 0.1, J_tol: float = 1e-6,
                      check_grid: bool = True, check_J: bool = True, strict: bool = False) -> GapSpectrum:
    """In-gap spectrum of the regularised two-centre Dirac operator.

    Retained eigenpairs must pass three filters: residual
    ``||(H - E) v|| <= residual_tol * ||H||``; grid stability, the eigenvalue
    of the twice-refined matrix nearest to ``E`` lies within
    ``grid_rtol * (m - |E|)``; truncation stability, the nearest eigenvalue
    with ``J + 2`` lies within ``J_tol * m``.  Failing states are dropped and
    listed in the metadata (or raise when ``strict``).
    """
    if not isinstance(model, RegularizedTwoCenter):
        raise TypeError("block solver needs a RegularizedTwoCenter model")
    if J < 4:
        raise ValueError("angular truncation J must be at least 4")
    m = params.mass
    H, layout = assemble_dirac_block(params, model, grid, J)
    E0 = _gap_eigenvalues(H, m)
    scale = float(abs(H).sum(axis=1).max())
    E = np.empty(len(E0))
    res = np.empty(len(E0))
    for k, e in enumerate(E0):
        E[k], v = _nearest_eigenpair(H, e + 1e-12 * max(1.0, abs(e)))
        res[k] = np.linalg.norm(H @ v - E[k] * v)
    keep = (res <= residual_tol * scale) & (np.abs(E) < m)
    reasons = {i: "residual" for i in np.flatnonzero(~keep)}
    moves_grid = np.zeros(len(E))
    moves_J = np.zeros(len(E))
    if check_grid and len(E):
        Hf, _ = assemble_dirac_block(params, model, grid.refined(), J)
        for k, e in enumerate(E):
            moves_grid[k] = abs(_nearest_eigenpair(Hf, e)[0] - e)
        for i in np.flatnonzero(keep & (moves_grid > grid_rtol * (m - np.abs(E)))):
            if strict:
                raise PollutionSuspected(f"E={E[i]:.10g} unstable under grid refinement")
            reasons[i] = "grid"
            keep[i] = False
    if check_J and len(E):
        HJ, _ = assemble_dirac_block(params, model, grid, J + 2)
        for k, e in enumerate(E):
            moves_J[k] = abs(_nearest_eigenpair(HJ, e)[0] - e)
        for i in np.flatnonzero(keep & (moves_J > J_tol * m)):
            if strict:
                raise TruncationTooSmall(f"E={E[i]:.10g} moves {moves_J[i]:.3g} under J -> J+2")
            reasons[i] = "truncation"
            keep[i] = False
    order = [i for i in np.argsort(-(m - np.abs(E)), kind="stable") if keep[i]]
    meta = {
        "solver": "dirac_block",
        "grid": {"r_min": grid.r_min, "r_max": grid.r_max, "n_nodes": grid.n_nodes},
        "J": J,
        "eps": model.eps,
        "scheme": model.scheme,
        "dim": layout["dim"],
        "residual_tol": residual_tol,
        "norm_scale": scale,
        "grid_rtol": grid_rtol,
        "J_tol": J_tol,
        "in_gap_total": int(len(E)),
        "dropped": [{"E": float(E[i]), "reason": reasons[i], "grid_move": float(moves_grid[i]),
                     "J_move": float(moves_J[i])} for i in sorted(reasons)],
        "grid_moves": [float(moves_grid[i]) for i in order],
        "J_moves": [float(moves_J[i]) for i in order],
    }
    return GapSpectrum(E[order], m, None, res[order], meta)


# --------------------------------------------------------------------------
# finite count for charge-neutral, dipole-free distributions


TAIL_WELL_TOL = 1e-6


def _zero_energy_nodes(j: int, grid: RadialGrid, well) -> int:
    """Negative eigenvalues of one channel on ``(0, inf)`` by oscillation counting.

    In ``x = ln r`` the zero-energy equation is ``g'' = (j^2 - r^2 well) g``.
    The discrete solution starts with the regular behaviour ``g ~ r^j`` at
    ``r_min`` and sign changes are counted.  Beyond ``r_max`` the well is
    negligible and ``g`` continues as ``a + b x`` (``j = 0``) or
    ``A e^{jx} + B e^{-jx}``; a zero of that continuation counts too.  A box
    count would miss the exponentially shallow ``j = 0`` state that every
    attractive well carries in two dimensions.
    """
    r = grid.nodes
    h = grid.h
    if r[-1] ** 2 * abs(float(well(r[-1:])[0])) > TAIL_WELL_TOL * max(1, j * j):
        raise GridRangeTooSmall(f"well not negligible at r_max={r[-1]:g}; increase r_max")
    c = h * h * (j * j - r * r * well(r))
    g_prev, g = math.exp(-j * h), 1.0
    changes = 0
    for i in range(1, len(r) - 1):
        g_next = (2.0 + c[i]) * g - g_prev
        if g_next == 0.0 or (g_next > 0) != (g > 0):
            changes += 1
        g_prev, g = g, g_next
        big = abs(g)
        if big > 1e150:
            g_prev /= big
            g /= big
    if j == 0:
        slope = g - g_prev
        if slope != 0 and (slope > 0) != (g > 0):
            changes += 1
    else:
        # A e^{j(x-x1)} + B e^{-j(x-x1)} through the last two nodes
        A, B = np.linalg.solve([[math.exp(-j * h), math.exp(j * h)], [1.0, 1.0]], [g_prev, g])
        # the zero sits at e^{2j(x-x1)} = -B/A, beyond the grid when that exceeds 1
        if A * B < 0 and -B / A > 1.0:
            changes += 1
    return changes


def solve_finite_count(table: MultipoleTable, m: float, grid: RadialGrid, channels: int,
                       C_l: float, order: Optional[int] = None) -> int:
    """Negative eigenvalues of ``-Delta - C^2 q^2 W^2 - m C q W`` summed over channels.

    ``W(r) = (1+r)^{-l-1}``.  Channel ``j`` is ``-f'' + (j^2 - 1/4)/r^2 f - well f``
    on the half-line, counted with multiplicity 2 for ``j >= 1``.
    """
    l = table.leading_order if order is None else order
    if l is None:
        return 0
    if l < 2:
        raise ValueError(f"finite count needs leading order >= 2, got {l}")
    ql = table.q_l(l)
    if ql == 0 or C_l == 0:
        return 0
    a = C_l * ql

    def well(r):
        W = (1.0 + r) ** (-l - 1)
        return a * a * W * W + m * a * W

    total = 0
    last = 0
    for j in range(channels + 1):
        c = _zero_energy_nodes(j, grid, well)
        total += c if j == 0 else 2 * c
        last = c
    if last > 0:
        raise ChannelBudgetExceeded(f"channel j={channels} still binds {last} state(s)")
    return total


# --------------------------------------------------------------------------
# cross-solver comparison


@dataclass(frozen=True)
class TowerComparison:
    """Near-edge block levels against a phase-matched channel tower.

    The channel tower fixes its short-range phase through ``r_cut``; that one
    parameter is fitted to the deepest compared block level (the reference),
    and every other level is a prediction.
    """

    r_cut: float
    reference_energy: float
    energies: np.ndarray  # block eigenvalues compared (reference excluded)
    block_distance: np.ndarray
    channel_distance: np.ndarray
    relative_difference: np.ndarray
    relative_error_bar: np.ndarray

    @property
    def agree(self) -> np.ndarray:
        return self.relative_difference <= self.relative_error_bar

    @property
    def all_agree(self) -> bool:
        return bool(len(self.energies)) and bool(np.all(self.agree))


def _nearest_in_log(values, targets):
    lv = np.log(values)
    return np.array([int(np.argmin(np.abs(lv - math.log(t)))) for t in targets])


def compare_to_towers(block: GapSpectrum, params: PhysicalParams, max_kappa: Optional[float] = None,
                      nodes_per_decade: int = 64, coupling: str = "squared") -> TowerComparison:
    """Phase-matched comparison of block-solver levels with channel tower 0.

    Compared levels satisfy the dipole-regime condition ``kappa <= max_kappa``
    (default ``0.02/|x0|``, decay length at least fifty separations) and are
    resolved in the box.  Error bars are second-order Richardson estimates,
    ``(4/3) |E_h - E_{h/2}|``, summed over the compared level and the
    reference (block solver) and the channel solver's own refinement.
    """
    m = block.mass
    r_max = float(block.metadata["grid"]["r_max"])
    if max_kappa is None:
        max_kappa = 0.02 / params.x0_norm
    E = np.asarray(block.energies)
    dist = m - np.abs(E)
    kappa = np.sqrt(dist * (m + np.abs(E)))
    moves = np.asarray(block.metadata.get("grid_moves", np.zeros(len(E))))
    sel = np.flatnonzero((kappa <= max_kappa) & (kappa * r_max >= RESOLVED_KAPPA_RMAX))
    pos = sel[E[sel] > 0]
    if len(sel) < 2 or len(pos) == 0:
        raise TooFewLevels("need a positive reference level and at least one more level in the dipole regime")
    ref = pos[np.argmax(dist[pos])]
    k2_ref = kappa[ref] ** 2

    lam0 = float(mathieu_eigs(mathieu_parameter(params, coupling), levels=1).eigenvalues[0])
    if lam0 >= 0:
        raise NoNegativeChannel("no tower to compare with")

    def tower(r_cut, npd):
        g = RadialGrid.with_density(r_cut, r_max, npd)
        return channel_levels(lam0, g, r_cut, m)

    # scale invariance of the inverse-square ladder: kappa_j(r_cut) = kappa_j(1) / r_cut
    r_cut = 1.0
    for _ in range(3):
        k2 = tower(r_cut, nodes_per_decade)
        j = _nearest_in_log(k2, [k2_ref])[0]
        r_cut *= math.sqrt(k2[j] / k2_ref)
    k2 = tower(r_cut, nodes_per_decade)
    k2_fine = tower(r_cut, 2 * nodes_per_decade)
    chan = _gap_distance(k2, m)
    chan_fine = _gap_distance(k2_fine, m)

    others = np.array([i for i in sel if i != ref])
    idx = _nearest_in_log(chan, dist[others])
    idx_ref = _nearest_in_log(chan, [dist[ref]])[0]
    chan_move = np.abs(chan_fine[np.minimum(idx, len(chan_fine) - 1)] - chan[idx]) / chan[idx]
    chan_move_ref = abs(chan_fine[min(idx_ref, len(chan_fine) - 1)] - chan[idx_ref]) / chan[idx_ref]
    rel = np.abs(dist[others] - chan[idx]) / chan[idx]
    bar = RICHARDSON_2 * (moves[others] / dist[others] + moves[ref] / dist[ref] + chan_move + chan_move_ref)
    return TowerComparison(float(r_cut), float(E[ref]), E[others], dist[others], chan[idx], rel, bar)

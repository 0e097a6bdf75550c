"""Angular problem ``M(q) = -d^2/dtheta^2 + 2 q cos(theta)`` on the circle.

The operator is represented in the Fourier basis ``e^{i n theta}/sqrt(2 pi)``,
``n = -N..N`` in ascending order, where it is an exactly tridiagonal symmetric
matrix: ``n**2`` on the diagonal and ``q`` coupling ``n`` to ``n +- 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import IndexOutOfRange, NoConvergence, SignAmbiguous

N_START = 32
N_CAP = 4096
ABS_TOL = 1e-10
REL_TOL = 1e-8


def assemble_mathieu_matrix(q: float, N: int) -> np.ndarray:
    """Dense ``(2N+1) x (2N+1)`` matrix of ``M(q)`` over Fourier modes ``-N..N``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    n = np.arange(-N, N + 1, dtype=float)
    A = np.diag(n**2)
    idx = np.arange(2 * N)
    A[idx, idx + 1] = q
    A[idx + 1, idx] = q
    return A


def _tridiagonal(q, N):
    n = np.arange(-N, N + 1, dtype=float)
    return n**2, np.full(2 * N, float(q))


def _accepted(delta, lam):
    return np.abs(delta) < np.maximum(ABS_TOL, REL_TOL * np.abs(lam))


def _resolve_parity(vals, vecs):
    """Rotate degenerate eigenvectors into even/odd combinations.

    Eigenfunctions of definite parity under ``n -> -n`` are real-valued
    (cosine or sine series), which is what ``eval_eigenfunction`` needs.
    """
    vecs = vecs.copy()
    parity = np.empty(len(vals), dtype=int)
    i = 0
    while i < len(vals):
        j = i + 1
        while j < len(vals) and abs(vals[j] - vals[i]) <= 1e-9 * max(1.0, abs(vals[i])):
            j += 1
        block = vecs[:, i:j]
        P = block.T @ block[::-1, :]
        w, Q = np.linalg.eigh(P)
        vecs[:, i:j] = block @ Q
        parity[i:j] = np.where(w > 0, 1, -1)
        i = j
    N = (vecs.shape[0] - 1) // 2
    for k in range(vecs.shape[1]):
        half = vecs[N:, k] if parity[k] > 0 else vecs[N + 1 :, k]
        if half[np.argmax(np.abs(half))] < 0:
            vecs[:, k] *= -1
    return vecs, parity


@dataclass(frozen=True)
class MathieuSpectrum:
    q: float
    N: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are Fourier coefficient vectors, modes -N..N
    parity: np.ndarray  # +1 even (cosine series), -1 odd (sine series)
    convergence_estimate: np.ndarray

    @property
    def levels(self) -> int:
        return len(self.eigenvalues)

    def coefficients(self, n: int) -> np.ndarray:
        if not 0 <= n < self.levels:
            raise IndexOutOfRange(f"level {n} not in 0..{self.levels - 1}")
        return self.eigenvectors[:, n]


def mathieu_eigs(q: float, N: int = N_START, levels: int = 8, n_cap: int = N_CAP) -> MathieuSpectrum:
    """Lowest ``levels`` eigenpairs of ``M(q)``, doubling ``N`` until converged.

    An eigenvalue is accepted once its change under ``N -> 2N`` is below
    ``max(1e-10, 1e-8 |lambda|)``.
    """
    if q < 0:
        raise ValueError("q must be nonnegative (M(-q) is unitarily equivalent to M(q))")
    levels = int(min(levels, 2 * N + 1))
    prev_err = math.inf
    while True:
        d1, e1 = _tridiagonal(q, N)
        lam1 = eigh_tridiagonal(d1, e1, eigvals_only=True, select="i", select_range=(0, levels - 1))
        d2, e2 = _tridiagonal(q, 2 * N)
        lam2, vec2 = eigh_tridiagonal(d2, e2, select="i", select_range=(0, levels - 1))
        delta = lam2 - lam1
        if np.all(_accepted(delta, lam2)):
            vecs, parity = _resolve_parity(lam2, vec2)
            return MathieuSpectrum(float(q), 2 * N, lam2, vecs, parity, np.abs(delta))
        err = float(np.max(np.abs(delta)))
        if 2 * N >= n_cap or (N >= 4 * N_START and err >= prev_err):
            raise NoConvergence(f"Mathieu eigenvalues at q={q} not converged by N={2 * N} (change {err:.2e})")
        prev_err = err
        N *= 2


def lowest_eigenvalue(q: float) -> float:
    return float(mathieu_eigs(q, levels=1).eigenvalues[0])


def count_negative(q: float) -> int:
    """Number of strictly negative eigenvalues of ``M(q)`` (= number of towers)."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    if q == 0:
        return 0
    levels = int(2 * math.sqrt(2 * q)) + 6
    spec = mathieu_eigs(q, levels=levels)
    lam = spec.eigenvalues
    tol = np.maximum(10 * spec.convergence_estimate, 1e-9)
    if np.any(np.abs(lam) <= tol):
        k = int(np.argmin(np.abs(lam) - tol))
        raise SignAmbiguous(f"lambda_{k}({q}) = {lam[k]:.3e} too close to zero")
    return int(np.count_nonzero(lam < 0))


def eval_eigenfunction(spec: MathieuSpectrum, n: int, theta, derivative: int = 0):
    """Real, L^2(S^1)-normalised eigenfunction ``Y_n(q; theta)`` (or its derivative)."""
    c = spec.coefficients(n)
    N = (len(c) - 1) // 2
    k = np.arange(1, N + 1)
    theta = np.asarray(theta, dtype=float)
    ang = np.multiply.outer(theta, k)
    norm = 1.0 / math.sqrt(2 * math.pi)
    cpos = c[N + 1 :]
    if spec.parity[n] > 0:
        # c0 + 2 sum c_k cos(k theta)
        if derivative == 0:
            out = c[N] + 2 * np.cos(ang) @ cpos
        elif derivative == 1:
            out = -2 * np.sin(ang) @ (k * cpos)
        else:
            out = -2 * np.cos(ang) @ (k**2 * cpos)
    else:
        # the odd combination i * 2 sum c_k sin(k theta), with the global phase dropped
        if derivative == 0:
            out = 2 * np.sin(ang) @ cpos
        elif derivative == 1:
            out = 2 * np.cos(ang) @ (k * cpos)
        else:
            out = -2 * np.sin(ang) @ (k**2 * cpos)
    out = norm * out
    return float(out) if out.ndim == 0 else out

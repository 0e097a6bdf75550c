"""Small quadrature helpers shared by the form and bound evaluations."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(a, b, n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(breaks, n):
    """Gauss-Legendre with ``n`` nodes on every panel between consecutive breaks."""
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            x, w = gauss_legendre(a, b, n)
            xs.append(x)
            ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def log_breaks(a, b, panels_per_e=1.0):
    """Breakpoints between a > 0 and b, uniform in log r."""
    if not (0 < a < b):
        raise ValueError("need 0 < a < b")
    n = max(1, int(math.ceil(math.log(b / a) * panels_per_e)))
    return np.exp(np.linspace(math.log(a), math.log(b), n + 1))


def radial_rule(breaks, n, panels_per_e=1.0):
    """Composite rule with log-uniform sub-panels inside each segment of ``breaks``."""
    pts = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        pts.extend(log_breaks(a, b, panels_per_e)[1:])
    return composite_gauss(np.asarray(pts), n)


def periodic_gauss(n):
    """Gauss-Legendre nodes on [0, 2 pi]."""
    return gauss_legendre(0.0, 2 * math.pi, n)

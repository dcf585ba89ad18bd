"""Adaptive Gauss-Legendre quadrature on piecewise smooth integrands.

The integrands met in this package (products of piecewise polynomial
densities, spectral projections along a coupling line) are smooth between
known breakpoints. Each piece is integrated with a pair of Gauss-Legendre
rules; the difference of the pair is the error estimate and pieces that
fail the tolerance are bisected.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import QuadratureFailure


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    evaluations: int


@lru_cache(maxsize=64)
def gauss_legendre(n):
    """Nodes and weights of the n-point rule on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _rule(fn, a, b, n):
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    t = 0.5 * (a + b) + half * x
    return half * float(np.dot(w, np.asarray(fn(t), dtype=float)))


def clean_breakpoints(points, lo, hi):
    """Sorted unique breakpoints clipped to [lo, hi], always including both ends."""
    pts = np.asarray(list(points), dtype=float)
    pts = pts[np.isfinite(pts)]
    pts = pts[(pts > lo) & (pts < hi)]
    pts = np.unique(np.concatenate([[lo], pts, [hi]]))
    # Merge breakpoints closer than rounding noise; they only create slivers.
    keep = np.concatenate([[True], np.diff(pts) > 1e-14 * max(1.0, abs(hi - lo))])
    pts = pts[keep]
    pts[-1] = hi
    return pts


def integrate_piecewise(fn, breakpoints, degree=None, rtol=1e-10, atol=1e-14,
                        max_depth=40):
    """Integrate ``fn`` over [breakpoints[0], breakpoints[-1]].

    ``fn`` must accept a 1-D array of abscissae. If ``degree`` is given the
    integrand is a polynomial of at most that degree on every piece and the
    low rule is already exact; the high rule then only confirms it.
    """
    bps = np.asarray(breakpoints, dtype=float)
    if bps.size < 2 or bps[-1] <= bps[0]:
        return QuadResult(0.0, 0.0, 0)
    if degree is not None:
        n_lo = max(2, degree // 2 + 1)
        n_hi = n_lo + 2
    else:
        n_lo, n_hi = 10, 15
    total = 0.0
    err = 0.0
    evals = 0
    stack = [(a, b, 0) for a, b in zip(bps[:-1], bps[1:]) if b > a]
    accepted = []
    while stack:
        a, b, depth = stack.pop()
        lo = _rule(fn, a, b, n_lo)
        hi = _rule(fn, a, b, n_hi)
        evals += n_lo + n_hi
        diff = abs(hi - lo)
        if not np.isfinite(hi):
            raise QuadratureFailure(f"non-finite integrand on [{a}, {b}]")
        if diff <= max(atol * (b - a), rtol * abs(hi)) or diff <= 1e-15 * abs(hi):
            accepted.append((a, hi, diff))
            continue
        if depth >= max_depth:
            raise QuadratureFailure(
                f"no convergence on [{a:.6g}, {b:.6g}] (estimate {diff:.3g})")
        mid = 0.5 * (a + b)
        stack.append((a, mid, depth + 1))
        stack.append((mid, b, depth + 1))
    # Deterministic summation order, independent of the stack history.
    accepted.sort(key=lambda item: item[0])
    for _, v, d in accepted:
        total += v
        err += d
    return QuadResult(total, err, evals)


def tensor_nodes(breakpoints, n_per_piece):
    """1-D composite Gauss nodes/weights over consecutive breakpoint pieces."""
    x, w = gauss_legendre(n_per_piece)
    nodes = []
    weights = []
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        half = 0.5 * (b - a)
        nodes.append(0.5 * (a + b) + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)

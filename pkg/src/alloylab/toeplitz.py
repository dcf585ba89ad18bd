"""Finite-section convolution transforms and their inverses.

A convolution vector ``alpha`` supported on a finite set of offsets ``Gamma``
induces the matrix ``A[j, k] = alpha[j - k]`` on the index set

    plus_set = {lam - gam : lam in box lattice, gam in Gamma}.

``A`` maps the i.i.d. coupling constants ``omega`` to the transformed
coordinates ``eta = A @ omega``; its inverse ``B`` pushes the product
density forward.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np
import scipy.linalg as sla

from .errors import IndexMismatch, NotAdmissible, SingularTransform

COND_LIMIT = 1e12


def _as_offset(key, d=None):
    if isinstance(key, (int, np.integer)):
        key = (int(key),)
    key = tuple(int(v) for v in key)
    if d is not None and len(key) != d:
        raise ValueError(f"offset {key} has dimension {len(key)}, expected {d}")
    return key


@dataclass(frozen=True)
class ConvolutionVector:
    """Coefficients ``alpha_k`` on a finite set of lattice offsets."""

    alpha: dict

    def __post_init__(self):
        if not self.alpha:
            raise ValueError("empty convolution vector")
        dims = {len(_as_offset(k)) for k in self.alpha}
        if len(dims) != 1:
            raise ValueError("offsets of mixed dimension")
        d = dims.pop()
        normalized = {_as_offset(k, d): float(v) for k, v in self.alpha.items()}
        zero = (0,) * d
        if normalized.get(zero, 0.0) == 0.0:
            raise ValueError("alpha_0 must be present and nonzero")
        object.__setattr__(self, "alpha", dict(sorted(normalized.items())))

    @classmethod
    def from_sequence(cls, values):
        """d = 1 vector with offsets 0, 1, ..., len(values) - 1."""
        return cls({(k,): v for k, v in enumerate(values)})

    @property
    def d(self):
        return len(next(iter(self.alpha)))

    @property
    def gamma(self):
        return tuple(self.alpha)

    @property
    def alpha0(self):
        return self.alpha[(0,) * self.d]

    def alpha_star(self):
        zero = (0,) * self.d
        return float(sum(abs(v) for k, v in self.alpha.items() if k != zero))

    def admissible(self):
        return self.alpha_star() < abs(self.alpha0)

    def norm_bound(self):
        """Row-sum bound 1 / (|alpha_0| - alpha*) on the inverse transform."""
        if not self.admissible():
            raise NotAdmissible(
                f"alpha* = {self.alpha_star():g} >= |alpha_0| = {abs(self.alpha0):g}")
        return 1.0 / (abs(self.alpha0) - self.alpha_star())


@dataclass(frozen=True, eq=False)
class IndexBox:
    """Lattice sites of the box [0, l)^d and the enlarged index set plus_set."""

    d: int
    l: int
    gamma: tuple
    lattice: np.ndarray
    plus_set: np.ndarray
    index_of: dict = field(repr=False)

    @classmethod
    def build(cls, d, l, gamma=None):
        if l < 1:
            raise ValueError("box side must be a positive integer")
        if gamma is None:
            gamma = ((0,) * d,)
        gamma = tuple(_as_offset(g, d) for g in gamma)
        lattice = np.array(list(itertools.product(range(l), repeat=d)), dtype=int)
        plus = {tuple(lam - np.asarray(g)) for lam in lattice for g in gamma}
        plus_set = np.array(sorted(plus), dtype=int).reshape(-1, d)
        index_of = {tuple(int(v) for v in p): i for i, p in enumerate(plus_set)}
        lattice.setflags(write=False)
        plus_set.setflags(write=False)
        return cls(d, l, gamma, lattice, plus_set, index_of)

    @property
    def size(self):
        """L = |plus_set|."""
        return len(self.plus_set)

    def position(self, site):
        """Row/column of a site label (int in d = 1, else a tuple) in plus_set order."""
        key = _as_offset(site, self.d)
        try:
            return self.index_of[key]
        except KeyError:
            raise IndexMismatch(f"site {key} is not in plus_set") from None

    def lattice_positions(self):
        """Positions in plus_set order of the sites inside the box."""
        return np.array([self.index_of[tuple(int(v) for v in s)] for s in self.lattice])


@dataclass(frozen=True, eq=False)
class ToeplitzTransform:
    box: IndexBox
    alpha: ConvolutionVector
    A: np.ndarray
    B: np.ndarray
    row_sum_norm_B: float
    det_A: float
    logabsdet_A: float

    @property
    def abs_det_B(self):
        return float(np.exp(-self.logabsdet_A))


def row_sum_norm(M):
    """Max over rows of the sum of absolute entries."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.abs(M).sum(axis=1).max())


def _convolution_matrix(alpha, box):
    P = box.plus_set
    L = len(P)
    A = np.zeros((L, L))
    for off, val in alpha.alpha.items():
        # entry (j, k) with j - k = off
        for k_idx, k in enumerate(P):
            j_idx = box.index_of.get(tuple(int(v) for v in k + np.asarray(off)))
            if j_idx is not None:
                A[j_idx, k_idx] = val
    return A


def build_transform(alpha, box):
    """Assemble A on plus_set, invert it and record det and row-sum norm."""
    if alpha.d != box.d:
        raise IndexMismatch("convolution vector and box differ in dimension")
    if set(alpha.gamma) != set(box.gamma):
        raise IndexMismatch("box was built for a different offset set Gamma")
    A = _convolution_matrix(alpha, box)
    L = A.shape[0]
    eye = np.eye(L)
    lower = not np.any(np.triu(A, 1))
    upper = not np.any(np.tril(A, -1))
    if lower or upper:
        diag = np.diag(A)
        cond = np.linalg.cond(A) if L > 1 else 1.0
        if cond > COND_LIMIT:
            raise SingularTransform(f"condition estimate {cond:.3g}")
        # Forward substitution keeps integer inverses exact.
        B = sla.solve_triangular(A, eye, lower=lower)
        sign = float(np.prod(np.sign(diag)))
        logabsdet = float(np.sum(np.log(np.abs(diag))))
    else:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularTransform(f"condition estimate {cond:.3g}")
        B = np.linalg.solve(A, eye)
        sign, logabsdet = np.linalg.slogdet(A)
        sign, logabsdet = float(sign), float(logabsdet)
    A.setflags(write=False)
    B.setflags(write=False)
    return ToeplitzTransform(box, alpha, A, B, row_sum_norm(B),
                             sign * float(np.exp(logabsdet)), logabsdet)


@dataclass(frozen=True)
class NormBoundReport:
    bound: float
    actual: float
    holds: bool


def verify_norm_bound(t, alpha=None):
    """Compare the row-sum norm of B with 1 / (|alpha_0| - alpha*)."""
    alpha = t.alpha if alpha is None else alpha
    bound = alpha.norm_bound()
    actual = t.row_sum_norm_B
    return NormBoundReport(bound, actual, actual <= bound + 1e-9)


def _check_field(t, values):
    values = np.asarray(values, dtype=float)
    if values.shape != (t.box.size,):
        raise IndexMismatch(
            f"field has shape {values.shape}, expected ({t.box.size},) indexed by plus_set")
    return values


def forward_coordinates(t, omega):
    """eta = A omega."""
    return t.A @ _check_field(t, omega)


def inverse_coordinates(t, eta):
    """omega = B eta."""
    return t.B @ _check_field(t, eta)


def example_one_alpha():
    """alpha = (1, -1): the boundary case alpha* = |alpha_0|."""
    return ConvolutionVector.from_sequence([1.0, -1.0])


def random_admissible(rng, d, n_offsets, ratio=None, reach=2):
    """Random convolution vector with ``n_offsets`` offsets and alpha* = ratio |alpha_0|.

    ``ratio`` defaults to a uniform draw in [0, 0.99).
    """
    zero = (0,) * d
    candidates = [o for o in itertools.product(range(-reach, reach + 1), repeat=d)
                  if o != zero]
    n_other = min(n_offsets - 1, len(candidates))
    picks = rng.choice(len(candidates), size=n_other, replace=False)
    alpha0 = rng.uniform(0.5, 3.0) * rng.choice([-1.0, 1.0])
    if ratio is None:
        ratio = rng.uniform(0.0, 0.99)
    coeffs = {zero: alpha0}
    if n_other:
        raw = rng.uniform(0.05, 1.0, size=n_other) * rng.choice([-1.0, 1.0], size=n_other)
        raw *= ratio * abs(alpha0) / np.abs(raw).sum()
        for p, v in zip(picks, raw):
            coeffs[candidates[p]] = v
    return ConvolutionVector(coeffs)

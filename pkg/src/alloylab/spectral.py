"""Eigenvalues, counting functions and IDS estimates.

Counting follows two conventions on purpose: ``counting`` is the
normalized count of eigenvalues strictly below E, ``trace_projection``
counts the closed interval [E1, E2].
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._parallel import pmap
from .errors import ConvergenceFailure, SizeOverflow
from .operator import MAX_POINTS, constant_field, spawn_seed

DENSE_LIMIT = 2000


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    eigenvalues: np.ndarray
    grid: object
    seed: int = 0

    @property
    def volume(self):
        return self.grid.l ** self.grid.d


def eigenvalues(H, seed=0):
    """Full dense symmetric eigenvalue decomposition, sorted."""
    if H.grid.n > MAX_POINTS:
        raise SizeOverflow(f"{H.grid.n} > {MAX_POINTS}")
    try:
        vals = sla.eigvalsh(H.dense())
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    vals.setflags(write=False)
    return SpectralSummary(vals, H.grid, seed)


def counting(s, E):
    """N(E) = l^-d #{i : lambda_i < E}."""
    return np.searchsorted(s.eigenvalues, E, side="left") / s.volume


def trace_projection(s, E1, E2):
    """#{i : E1 <= lambda_i <= E2}."""
    if E1 > E2:
        raise ValueError("empty interval: E1 > E2")
    ev = s.eigenvalues
    return int(np.searchsorted(ev, E2, side="right") - np.searchsorted(ev, E1, side="left"))


def inertia(H, sigma):
    """(negative, zero, positive) eigenvalue counts of H - sigma from an LDL^T factorization.

    The factorization is taken without pivoting so that U's diagonal is D
    and Sylvester's law of inertia applies.
    """
    M = (H.matrix - sigma * sp.identity(H.grid.n, format="csr")).tocsc()
    try:
        lu = spla.splu(M, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise ConvergenceFailure(f"singular factorization at shift {sigma}") from exc
    if np.any(lu.perm_r != np.arange(H.grid.n)):
        raise ConvergenceFailure("row pivoting occurred; inertia not available")
    D = lu.U.diagonal()
    tiny = 1e-13 * max(1.0, abs(sigma)) * max(1.0, float(np.abs(H.matrix).max()))
    neg = int(np.sum(D < -tiny))
    zero = int(np.sum(np.abs(D) <= tiny))
    return neg, zero, H.grid.n - neg - zero


def interval_count(H, E1, E2):
    """#{lambda in [E1, E2]}: dense for small meshes, inertia slicing otherwise."""
    if E1 > E2:
        raise ValueError("empty interval: E1 > E2")
    if H.grid.n <= DENSE_LIMIT:
        return trace_projection(eigenvalues(H), E1, E2)
    neg2, zero2, _ = inertia(H, E2)
    neg1, _, _ = inertia(H, E1)
    return neg2 + zero2 - neg1


@dataclass(frozen=True, eq=False)
class IdsEstimate:
    energies: np.ndarray
    mean_N: np.ndarray
    std_N: np.ndarray
    l: int
    samples: int
    std_defined: bool
    counts: np.ndarray = None


@dataclass(frozen=True, eq=False)
class IdsConfig:
    model: object
    l: int
    m: int
    energies: np.ndarray
    samples: int
    seed: int = 0
    fixed_coupling: float = None
    workers: int = 1
    tag: int = 0


def _spectrum_task(args):
    model, grid, seed, fixed = args
    if fixed is None:
        _, H = model.realize(grid, seed)
    else:
        H = model.hamiltonian(grid, constant_field(model.box(grid.l), fixed))
    return eigenvalues(H, seed).eigenvalues


def sample_spectra(model, grid, samples, seed, tag=0, workers=1, fixed_coupling=None):
    """(samples, n) eigenvalues of i.i.d. realizations; sample i uses spawn_seed(seed, tag, i)."""
    tasks = [(model, grid, spawn_seed(seed, tag, i), fixed_coupling) for i in range(samples)]
    return np.stack(pmap(_spectrum_task, tasks, workers))


def ids_from_spectra(spectra, energies, l, d=1):
    """(samples, len(energies)) normalized counts N_omega^l(E) from sorted spectra."""
    energies = np.asarray(energies, dtype=float)
    counts = np.stack([np.searchsorted(row, energies, side="left") for row in spectra])
    return counts, counts / l**d


def sample_std(values):
    """Per-column sample standard deviation; exactly zero for identical rows."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return np.full(values.shape[1:], np.nan)
    return (values - values[0]).std(axis=0, ddof=1)


def ids_estimate(config):
    """Sample mean and standard deviation of N_omega^l(E) over realizations."""
    if config.samples < 1:
        raise ValueError("need at least one sample")
    grid = config.model.grid(config.l, config.m)
    spectra = sample_spectra(config.model, grid, config.samples, config.seed, config.tag,
                             config.workers, config.fixed_coupling)
    energies = np.asarray(config.energies, dtype=float)
    counts, N = ids_from_spectra(spectra, energies, config.l, grid.d)
    defined = config.samples >= 2
    return IdsEstimate(energies, N.mean(axis=0), sample_std(N), config.l, config.samples,
                       defined, counts)

"""Multiscale-analysis diagnostics on finite boxes.

A box of side l is (gamma, E)-good when the block of the resolvent from
the central sub-box (side ~ l/3) to the boundary collar (cells touching
the box boundary) has operator norm at most exp(-gamma l).
"""

from dataclasses import dataclass
import itertools

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._parallel import pmap
from .errors import ConvergenceFailure, EnergyResonant, PreconditionError
from .operator import GridSpec, assemble_hamiltonian, spawn_seed
from .spectral import inertia

Z95 = 1.959963984540054
RESONANCE_TOL = 1e-8


def core_cells(l, d):
    """Cells of the centred sub-box of side round(l / 3) (at least one cell)."""
    s = max(1, int(round(l / 3)))
    start = (l - s) // 2
    return list(itertools.product(range(start, start + s), repeat=d))


def collar_cells(l, d):
    """Cells within distance one of the box boundary."""
    return [c for c in itertools.product(range(l), repeat=d)
            if any(v == 0 or v == l - 1 for v in c)]


def _check_resonance(H, E):
    below, _, _ = inertia(H, E - RESONANCE_TOL)
    above, _, _ = inertia(H, E + RESONANCE_TOL)
    if above != below:
        raise EnergyResonant(f"E = {E} lies within {RESONANCE_TOL} of an eigenvalue")


def good_box_norm(H, E):
    """|| chi_collar (H - E)^-1 chi_core || via direct solves and an SVD."""
    grid = H.grid
    try:
        _check_resonance(H, E)
    except ConvergenceFailure:
        # Zero pivot: E sits on an eigenvalue to working precision.
        raise EnergyResonant(f"factorization of H - {E} failed") from None
    core = np.flatnonzero(grid.cell_mask(core_cells(grid.l, grid.d)))
    collar = np.flatnonzero(grid.cell_mask(collar_cells(grid.l, grid.d)))
    lu = spla.splu((H.matrix - E * sp.identity(grid.n, format="csr")).tocsc())
    rhs = np.zeros((grid.n, len(core)))
    rhs[core, np.arange(len(core))] = 1.0
    block = lu.solve(rhs)[collar]
    return float(np.linalg.norm(block, 2))


@dataclass(frozen=True)
class GoodBoxReport:
    E: float
    gamma: float
    l: int
    offdiag_norm: float
    good: bool
    seed: int


def good_box_report(H, E, gamma, seed=0):
    norm = good_box_norm(H, E)
    threshold = np.exp(-gamma * H.grid.l)
    return GoodBoxReport(E, gamma, H.grid.l, norm, bool(norm <= threshold), seed)


@dataclass(frozen=True)
class GoodBoxEstimate:
    E: float
    gamma: float
    l: int
    p_hat: float
    half_width: float
    samples: int


def _good_task(args):
    model, grid, E, gamma, seed = args
    _, H = model.realize(grid, seed)
    return good_box_report(H, E, gamma, seed).good


def good_box_probability(model, E, gamma, l, m, samples, seed=0, workers=1, tag=0):
    """Fraction of (gamma, E)-good boxes over i.i.d. realizations at one energy."""
    if samples < 100:
        raise ValueError("good-box probability needs at least 100 samples")
    grid = model.grid(l, m)
    tasks = [(model, grid, E, gamma, spawn_seed(seed, tag, i)) for i in range(samples)]
    goods = np.array(pmap(_good_task, tasks, workers), dtype=float)
    p = float(goods.mean())
    return GoodBoxEstimate(E, gamma, l, p, float(Z95 * np.sqrt(p * (1 - p) / samples)), samples)


def decay_rate(ls, norms):
    """Exponential rate r in norm ~ exp(-r l) by least squares on log norm."""
    slope = np.polyfit(np.asarray(ls, dtype=float), np.log(np.asarray(norms, dtype=float)), 1)[0]
    return float(-slope)


def smooth_cutoff(grid, margin=1):
    """C^1 cutoff: 0 on the outer ``margin`` cells, 1 in the interior, cosine ramp of one cell."""
    x = (np.arange(grid.points_per_axis) + 0.5) * grid.h
    l = grid.l

    def ramp(s):
        s = np.clip(s, 0.0, 1.0)
        return 0.5 - 0.5 * np.cos(np.pi * s)

    prof = ramp(x - margin) * ramp(l - margin - x)
    out = prof
    for _ in range(grid.d - 1):
        out = np.multiply.outer(out, prof)
    return out.ravel()


def _check_margin(phi, grid):
    idx = grid.mesh_indices()
    N = grid.points_per_axis
    near = np.any((idx < grid.m) | (idx >= N - grid.m), axis=1)
    if np.any(phi[near] != 0):
        raise PreconditionError("cutoff must vanish on the outer cell layer of the inner box")


def resolvent_identity_residual(outer_potential, outer_grid, inner_l, offset, z, phi,
                                n_vectors=10, seed=0):
    """Relative residual of the discrete geometric resolvent identity.

    With J the restriction to the inner box, R = (H_inner - z)^-1 and
    R' = (H_outer - z)^-1, the identity checked on random vectors is

        R J phi = J phi R' - R J [H_outer, phi] R'.

    It is exact whenever phi vanishes on the outer cell layer of the inner
    box, so the residual measures only rounding.
    """
    d, m = outer_grid.d, outer_grid.m
    if any(o < 0 or o + inner_l > outer_grid.l for o in np.atleast_1d(offset)):
        raise PreconditionError("inner box does not fit inside the outer box")
    inner_grid = GridSpec(d, inner_l, m)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (inner_grid.n,):
        raise PreconditionError("phi must be sampled on the inner mesh")
    _check_margin(phi, inner_grid)

    start = np.broadcast_to(np.asarray(offset) * m, (d,))
    local = inner_grid.mesh_indices() + start
    embed = np.ravel_multi_index(local.T, outer_grid.shape)

    V_out = np.asarray(outer_potential, dtype=float)
    H_out = assemble_hamiltonian(V_out, outer_grid).matrix.astype(complex)
    H_in = assemble_hamiltonian(V_out[embed], inner_grid).matrix.astype(complex)
    if complex(z).imag == 0:
        for H in (H_in, H_out):
            vals = np.linalg.eigvalsh(H.real.toarray())
            if np.min(np.abs(vals - complex(z).real)) < RESONANCE_TOL:
                raise EnergyResonant(f"z = {z} is resonant")
    lu_out = spla.splu((H_out - z * sp.identity(outer_grid.n)).tocsc())
    lu_in = spla.splu((H_in - z * sp.identity(inner_grid.n)).tocsc())

    phi_out = np.zeros(outer_grid.n)
    phi_out[embed] = phi
    Phi = sp.diags(phi_out)
    comm = (H_out @ Phi - Phi @ H_out).tocsr()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_vectors):
        v = rng.normal(size=outer_grid.n) + 1j * rng.normal(size=outer_grid.n)
        x = lu_out.solve(v)
        lhs = lu_in.solve((phi_out * v)[embed])
        first = (phi_out * x)[embed]
        second = lu_in.solve((comm @ x)[embed])
        resid = lhs - first + second
        scale = np.linalg.norm(lhs) + np.linalg.norm(first) + np.linalg.norm(second)
        if scale == 0:
            continue
        worst = max(worst, float(np.linalg.norm(resid) / scale))
    return worst

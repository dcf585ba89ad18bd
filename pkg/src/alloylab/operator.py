"""Finite-volume discrete Hamiltonians of the alloy-type model.

The box [0, l)^d is discretized with ``m`` cell-centred mesh points per
unit cell and axis. The kinetic part is the periodic second-order
finite-difference Laplacian; the random part is

    V(x) = sum_{k in plus_set} omega_k u(x - k),   u = sum_gamma alpha_gamma w(. - gamma),

restricted to the box, with a base bump ``w`` supported on one unit cell.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import itertools

import numpy as np
import scipy.sparse as sp

from .errors import IndexMismatch, SizeOverflow
from .toeplitz import ConvolutionVector, IndexBox, build_transform

MAX_POINTS = 10_000


@dataclass(frozen=True)
class GridSpec:
    d: int
    l: int
    m: int

    def __post_init__(self):
        if self.d < 1 or self.l < 1 or self.m < 1:
            raise ValueError("d, l and m must be positive")
        if self.n > MAX_POINTS:
            raise SizeOverflow(f"{self.n} mesh points exceed the cap of {MAX_POINTS}")

    @property
    def h(self):
        return 1.0 / self.m

    @property
    def points_per_axis(self):
        return self.l * self.m

    @property
    def n(self):
        return (self.l * self.m) ** self.d

    @property
    def shape(self):
        return (self.points_per_axis,) * self.d

    def mesh_indices(self):
        """(n, d) integer mesh coordinates in C order."""
        return np.array(np.unravel_index(np.arange(self.n), self.shape)).T

    def coordinates(self):
        """(n, d) cell-centred positions in [0, l)^d."""
        return (self.mesh_indices() + 0.5) * self.h

    def cell_of_point(self):
        """Flat lattice index (C order over {0..l-1}^d) of each mesh point."""
        cells = self.mesh_indices() // self.m
        return np.ravel_multi_index(cells.T, (self.l,) * self.d)

    def cell_mask(self, cells):
        """Boolean mask of mesh points in the given cells (iterable of d-tuples)."""
        flat = {int(np.ravel_multi_index(tuple(c), (self.l,) * self.d)) for c in cells}
        return np.isin(self.cell_of_point(), sorted(flat))


@dataclass(frozen=True, eq=False)
class SingleSitePotential:
    """u = sum_gamma alpha_gamma w(. - gamma) with w a step function on one cell.

    ``w`` holds the subcell values of the base bump (shape (s,)*d); the
    default is the constant ``kappa`` on the unit cell.
    """

    alpha: ConvolutionVector
    w: np.ndarray = field(default_factory=lambda: np.ones(1))
    kappa: float = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1 and w.size == 1 and self.alpha.d > 1:
            w = w.reshape((1,) * self.alpha.d)
        if w.ndim != self.alpha.d or len(set(w.shape)) != 1:
            raise ValueError("w must be a cube of subcell values matching the dimension")
        if np.min(w) <= 0:
            raise ValueError("base bump must satisfy w >= kappa > 0 on its cell")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "kappa", float(np.min(w)))

    @classmethod
    def indicator(cls, alpha, kappa=1.0):
        return cls(alpha, np.full((1,) * alpha.d, float(kappa)))

    @property
    def d(self):
        return self.alpha.d

    def profile(self, m):
        """Values of w on the m^d mesh points of one unit cell (C order)."""
        s = self.w.shape[0]
        if m % s:
            raise ValueError(f"mesh m={m} does not resolve {s} subcells")
        prof = self.w
        for axis in range(self.d):
            prof = np.repeat(prof, m // s, axis=axis)
        return prof

    def local_values(self, grid):
        """w(x - cell(x)) at every mesh point."""
        local = grid.mesh_indices() % grid.m
        return self.profile(grid.m)[tuple(local.T)]


@dataclass(frozen=True, eq=False)
class CouplingField:
    values: np.ndarray
    box: IndexBox
    seed: int
    density_id: str


def sample_field(density, box, seed):
    """i.i.d. draws from ``density`` on plus_set, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    values = density.sample(rng, box.size)
    values.setflags(write=False)
    return CouplingField(values, box, int(seed), density.name)


def constant_field(box, value, density_id="constant"):
    values = np.full(box.size, float(value))
    values.setflags(write=False)
    return CouplingField(values, box, 0, density_id)


def cosine_background(grid, amplitude):
    """Z^d-periodic V0(x) = amplitude * sum_i cos(2 pi x_i)."""
    if amplitude == 0:
        return np.zeros(grid.n)
    return amplitude * np.cos(2 * np.pi * grid.coordinates()).sum(axis=1)


def _check_grid(box, grid):
    if box.d != grid.d or box.l != grid.l:
        raise IndexMismatch("coupling box and mesh describe different volumes")


def assemble_potential(coupling, u, grid, v0=None):
    """V0 + V_omega on the mesh, summed site by site from the single site potential."""
    box = coupling.box
    _check_grid(box, grid)
    values = np.asarray(coupling.values, dtype=float)
    if values.shape != (box.size,):
        raise IndexMismatch("field is not indexed by plus_set")
    l = grid.l
    cell_coef = np.zeros(l ** grid.d)
    for p, site in enumerate(box.plus_set):
        for off, a in u.alpha.alpha.items():
            cell = site + np.asarray(off)
            if np.all((cell >= 0) & (cell < l)):
                cell_coef[np.ravel_multi_index(tuple(cell), (l,) * grid.d)] += a * values[p]
    pot = cell_coef[grid.cell_of_point()] * u.local_values(grid)
    if v0 is not None:
        pot = pot + np.asarray(v0, dtype=float)
    return pot


def potential_from_eta(eta, box, u, grid, v0=None):
    """sum_{j in box} eta_j w(x - j): the potential in transformed coordinates."""
    _check_grid(box, grid)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (box.size,):
        raise IndexMismatch("eta is not indexed by plus_set")
    cell_coef = eta[box.lattice_positions()]
    pot = cell_coef[grid.cell_of_point()] * u.local_values(grid)
    if v0 is not None:
        pot = pot + np.asarray(v0, dtype=float)
    return pot


@lru_cache(maxsize=32)
def periodic_laplacian(grid):
    """-Delta_h with periodic wrap; (2d+1)-point stencil scaled by h^-2."""
    N = grid.points_per_axis
    i = np.arange(N)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i + 1) % N, (i - 1) % N])
    vals = np.concatenate([np.full(N, 2.0), -np.ones(N), -np.ones(N)])
    one = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr() / grid.h**2
    eye = sp.identity(N, format="csr")
    lap = sp.csr_matrix((grid.n, grid.n))
    for axis in range(grid.d):
        factors = [one if k == axis else eye for k in range(grid.d)]
        term = factors[0]
        for fac in factors[1:]:
            term = sp.kron(term, fac, format="csr")
        lap = lap + term
    return lap.tocsr()


@dataclass(frozen=True, eq=False)
class DiscreteHamiltonian:
    grid: GridSpec
    matrix: sp.csr_matrix
    potential_trace: np.ndarray
    periodic: bool = True

    def dense(self):
        return self.matrix.toarray()


def assemble_hamiltonian(potential, grid):
    potential = np.asarray(potential, dtype=float)
    if potential.shape != (grid.n,):
        raise IndexMismatch(f"potential has shape {potential.shape}, expected ({grid.n},)")
    H = (periodic_laplacian(grid) + sp.diags(potential)).tocsr()
    return DiscreteHamiltonian(grid, H, potential)


def spawn_seed(seed, *keys):
    """Independent 64-bit per-task seed derived from a base seed and integer keys."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class AlloyModel:
    """Density, single site potential and periodic background of one experiment."""

    density: object
    single_site: SingleSitePotential
    v0_amplitude: float = 0.0

    @property
    def d(self):
        return self.single_site.d

    @property
    def alpha(self):
        return self.single_site.alpha

    def box(self, l):
        return IndexBox.build(self.d, l, self.alpha.gamma)

    def transform(self, l):
        return build_transform(self.alpha, self.box(l))

    def grid(self, l, m):
        return GridSpec(self.d, l, m)

    def hamiltonian(self, grid, coupling):
        v0 = cosine_background(grid, self.v0_amplitude)
        return assemble_hamiltonian(assemble_potential(coupling, self.single_site, grid, v0), grid)

    def realize(self, grid, seed):
        coupling = sample_field(self.density, self.box(grid.l), seed)
        return coupling, self.hamiltonian(grid, coupling)

    def eta_range(self):
        """Interval containing every transformed coupling eta_j inside the box."""
        a, b = self.density.support
        vals = np.array(list(self.alpha.alpha.values()))
        return float(np.minimum(vals * a, vals * b).sum()), float(np.maximum(vals * a, vals * b).sum())

    def spectrum_lower_bound(self):
        """Deterministic lower bound on the spectrum of every realization."""
        lo, _ = self.eta_range()
        w = self.single_site.w
        v_min = lo * w.max() if lo < 0 else lo * w.min()
        return v_min - abs(self.v0_amplitude) * self.d


def translate_cells(values, grid, shift):
    """Cyclic shift of a mesh vector by ``shift`` whole cells along axis 0."""
    arr = np.asarray(values).reshape(grid.shape)
    return np.roll(arr, shift * grid.m, axis=0).ravel()


def all_cells(l, d):
    return list(itertools.product(range(l), repeat=d))

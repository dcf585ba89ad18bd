import numpy as np
import pytest

from alloylab.densities import triangular
from alloylab.operator import (AlloyModel, GridSpec, SingleSitePotential, assemble_hamiltonian)
from alloylab.spectral import (IdsConfig, counting, eigenvalues, ids_estimate, inertia,
                               interval_count, sample_spectra, trace_projection)
from alloylab.toeplitz import ConvolutionVector

MODEL = AlloyModel(triangular(),
                   SingleSitePotential.indicator(ConvolutionVector.from_sequence([1.0, -0.5]),
                                                 4.0))


def free(l, m, d=1):
    grid = GridSpec(d, l, m)
    return assemble_hamiltonian(np.zeros(grid.n), grid)


def test_counting_trivial_limits():
    s = eigenvalues(free(4, 4))
    assert counting(s, -1.0) == 0
    assert counting(s, 1e6) == 16 / 4


def test_counting_fourier_oracle():
    # n = 15 is not divisible by 4, so no mode sits on E = 2 h^-2
    l, m = 5, 3
    s = eigenvalues(free(l, m))
    k = np.arange(l * m)
    lam = 2 - 2 * np.cos(2 * np.pi * k / (l * m))
    assert counting(s, 2 * m**2) * l == np.sum(lam < 2)


def test_trace_projection_fourier_oracle():
    l, m = 5, 4
    s = eigenvalues(free(l, m))
    h = 1 / m
    lam1 = (2 - 2 * np.cos(2 * np.pi / (l * m))) / h**2
    assert trace_projection(s, 0.5 * lam1, 1.5 * lam1) == 2
    assert trace_projection(s, -np.inf, np.inf) == l * m
    # spectral gap between the first and second branch
    assert trace_projection(s, 0.2 * lam1, 0.8 * lam1) == 0
    with pytest.raises(ValueError):
        trace_projection(s, 1.0, 0.0)


def test_closed_interval_endpoints_and_additivity():
    s = eigenvalues(free(5, 4))
    ev = s.eigenvalues
    e = ev[7]
    left = trace_projection(s, -1.0, e)
    right = trace_projection(s, e, 1e4)
    on_edge = trace_projection(s, e, e)
    assert on_edge >= 1
    assert left + right - on_edge == trace_projection(s, -1.0, 1e4)


def test_trace_equals_counting_difference():
    grid = MODEL.grid(6, 4)
    for seed in range(5):
        _, H = MODEL.realize(grid, seed)
        s = eigenvalues(H)
        E, eps = float(np.median(s.eigenvalues)), 3.0
        upper = np.searchsorted(s.eigenvalues, E, side="right")
        lower = np.searchsorted(s.eigenvalues, E - eps, side="left")
        assert trace_projection(s, E - eps, E) == upper - lower
        diff = (counting(s, E + 1e-9) - counting(s, E - eps)) * 6
        assert diff == pytest.approx(upper - lower)


def test_counting_nondecreasing():
    _, H = MODEL.realize(MODEL.grid(6, 4), 3)
    s = eigenvalues(H)
    E = np.linspace(-5, 300, 400)
    assert np.all(np.diff(counting(s, E)) >= 0)


def test_eigenpair_residuals():
    _, H = MODEL.realize(MODEL.grid(8, 4), 1)
    M = H.dense()
    vals, vecs = np.linalg.eigh(M)
    norm = np.linalg.norm(M, 2)
    for i in np.random.default_rng(0).choice(len(vals), 10, replace=False):
        assert np.linalg.norm(M @ vecs[:, i] - vals[i] * vecs[:, i]) <= 1e-8 * norm
    np.testing.assert_allclose(eigenvalues(H).eigenvalues, vals, atol=1e-9)


def test_inertia_matches_dense_count():
    _, H = MODEL.realize(MODEL.grid(10, 4), 2)
    vals = np.linalg.eigvalsh(H.dense())
    for sigma in (-1.0, 5.3, 40.0, 150.0):
        neg, zero, pos = inertia(H, sigma)
        assert neg == np.sum(vals < sigma)
        assert neg + zero + pos == H.grid.n


def test_sparse_interval_count_matches_dense():
    grid = MODEL.grid(300, 8)
    assert grid.n > 2000
    _, H = MODEL.realize(grid, 4)
    vals = np.linalg.eigvalsh(H.dense())
    E1, E2 = 1.0, 6.0
    assert interval_count(H, E1, E2) == np.sum((vals >= E1) & (vals <= E2))


def test_ids_zero_disorder_has_zero_std():
    est = ids_estimate(IdsConfig(MODEL, 6, 4, np.linspace(-1, 50, 9), 5, fixed_coupling=0.1))
    assert np.all(est.std_N == 0)


def test_ids_single_sample_flags_undefined_std():
    est = ids_estimate(IdsConfig(MODEL, 6, 4, np.linspace(-1, 50, 9), 1))
    assert not est.std_defined and np.all(np.isnan(est.std_N))


def test_ids_mean_monotone_and_bounded():
    est = ids_estimate(IdsConfig(MODEL, 6, 4, np.linspace(-5, 400, 60), 20, seed=3))
    assert np.all(np.diff(est.mean_N) >= 0)
    assert est.mean_N.min() >= 0 and est.mean_N.max() <= 6 * 4 / 6


def test_sample_spectra_independent_of_workers():
    grid = MODEL.grid(5, 4)
    a = sample_spectra(MODEL, grid, 6, 11, workers=1)
    b = sample_spectra(MODEL, grid, 6, 11, workers=2)
    np.testing.assert_array_equal(a, b)

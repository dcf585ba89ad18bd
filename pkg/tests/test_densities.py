import numpy as np
import pytest
from scipy import integrate, stats

from alloylab.densities import (common_density_for, conditional_density, eval_common_density,
                                example_one, example_two, example_two_probe,
                                grad_density_integral, integrate_common_density, make_density,
                                marginal_density, smooth_bump, sup_along_line, triangular,
                                uniform)
from alloylab.errors import IndexMismatch, NotDifferentiable
from alloylab.toeplitz import ConvolutionVector

IDENTITY = ConvolutionVector.from_sequence([1.0])
HALF = ConvolutionVector.from_sequence([1.0, -0.5])


@pytest.mark.parametrize("f", [triangular(), uniform(), smooth_bump(), smooth_bump(0.0, 2.0)])
def test_builtin_densities_normalized(f):
    assert f.moment(0) == pytest.approx(1.0, abs=1e-12)
    a, b = f.support
    x = np.linspace(a - 1, b + 1, 2001)
    assert np.all(f(x) >= 0)
    assert np.all(f(x[(x < a) | (x > b)]) == 0)


def test_triangular_norms_and_moments():
    f = triangular()
    assert f.norm_f_inf == 2.0
    assert f.norm_fprime_L1 == pytest.approx(4.0)
    assert f.moment(1) == pytest.approx(0.0, abs=1e-15)
    assert f.moment(2) == pytest.approx(1.0 / 24.0)


def test_uniform_has_no_weak_derivative():
    with pytest.raises(NotDifferentiable):
        uniform().norm_fprime_L1
    assert not uniform().is_w11()
    assert triangular().is_w11() and smooth_bump().is_w11()


def test_smooth_bump_is_c1():
    f = smooth_bump()
    assert f.derivative(np.array([-0.5, 0.5])) == pytest.approx([0.0, 0.0], abs=1e-14)
    assert f.norm_fprime_L1 == pytest.approx(2 * f.norm_f_inf)


def test_sampler_matches_cdf():
    f = triangular()
    x = f.sample(np.random.default_rng(11), 100_000)
    assert abs(x.mean()) < 3 * np.sqrt(1 / 24) / np.sqrt(len(x))
    assert stats.kstest(x, f.cdf).pvalue > 0.01
    np.testing.assert_allclose(f.ppf(f.cdf(np.linspace(-0.49, 0.49, 9))),
                               np.linspace(-0.49, 0.49, 9), atol=1e-12)


def test_make_density_rejects_unknown():
    with pytest.raises(ValueError):
        make_density("gaussian")


def test_common_density_identity_transform():
    cd = common_density_for(IDENTITY, triangular(), 4)
    assert eval_common_density(cd, np.zeros(4)) == 16.0
    assert cd.supremum() == 16.0
    g = marginal_density(cd, 2, np.zeros(4))
    assert g.value == pytest.approx(8.0, rel=1e-12)
    eta = np.array([0.1, -0.2, 0.3, 0.05])
    rep = conditional_density(cd, 1, eta)
    assert rep.rho == pytest.approx(float(triangular()(-0.2)), rel=1e-12)


def test_common_density_example_values():
    assert eval_common_density(example_one(2), np.zeros(3)) == 8.0
    cd = example_two(4)
    for m in range(1, 6):
        assert eval_common_density(cd, example_two_probe(4, 1, m)) == 1.0
    with pytest.raises(IndexMismatch):
        cd(np.zeros(3))


def test_example_two_marginal_upper_bound():
    cd = example_two(4)
    for m in range(1, 8):
        delta = 2.0**-m
        g = marginal_density(cd, 1, example_two_probe(4, 1, m)).value
        assert g <= 2.0 * delta * (1 + 1e-12)


@pytest.mark.parametrize("l", [2, 4, 6])
def test_example_one_conditional_density_at_zero(l):
    cd = example_one(l)
    for j in range(-1, l):
        rep = conditional_density(cd, j, np.zeros(cd.L))
        assert rep.defined and rep.rho >= 0
        if (l - j) % 2 == 0:
            assert rep.rho == pytest.approx(l - j + 1, abs=1e-4)


@pytest.mark.parametrize("cd,j", [(example_one(4), 0), (example_one(3), 1),
                                  (common_density_for(HALF, smooth_bump(), 3), 2)])
def test_marginal_matches_adaptive_quad_oracle(cd, j):
    eta = np.random.default_rng(5).uniform(-0.2, 0.2, cd.L)
    pos = cd.position(j)

    def line(t):
        e = eta.copy()
        e[pos] = t
        return float(cd(e))

    oracle, _ = integrate.quad(line, -3, 3, points=np.linspace(-2, 2, 41), limit=500,
                               epsabs=1e-13)
    assert marginal_density(cd, j, eta).value == pytest.approx(oracle, rel=1e-8, abs=1e-12)


def test_example_two_divergence_is_monotone():
    cd = example_two(4)
    rho = [conditional_density(cd, 1, example_two_probe(4, 1, m)).rho for m in range(1, 11)]
    assert np.all(np.diff(rho) > 0)
    assert rho[-1] > 100
    for m, r in enumerate(rho, start=1):
        assert r >= 0.25 * 2**m


def test_undefined_conditional_density():
    cd = example_one(2)
    rep = conditional_density(cd, 0, np.full(cd.L, 5.0))
    assert not rep.defined and np.isnan(rep.rho)


@pytest.mark.parametrize("cd", [example_one(1), example_one(2),
                                common_density_for(HALF, triangular(), 2),
                                common_density_for(HALF, smooth_bump(), 1)])
def test_common_density_integrates_to_one(cd):
    assert integrate_common_density(cd) == pytest.approx(1.0, abs=1e-6)


def test_supremum_formula_for_triangular():
    for cd in (example_one(2), common_density_for(HALF, triangular(), 2)):
        assert eval_common_density(cd, np.zeros(cd.L)) == pytest.approx(cd.supremum())
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1.5, 1.5, size=(5000, cd.L))
        assert np.all(cd(pts) <= cd.supremum() * (1 + 1e-12))


def test_sup_along_line_bounded_by_global_supremum():
    cd = common_density_for(HALF, triangular(), 2)
    eta = np.array([0.1, -0.2, 0.05])
    s = sup_along_line(cd, 0, eta)
    assert 0 < s <= cd.supremum()


def test_push_forward_chi_square():
    cd = common_density_for(HALF, triangular(), 1)
    assert cd.L == 2
    rng = np.random.default_rng(2024)
    omega = triangular().sample(rng, (40_000, 2))
    eta = omega @ cd.transform.A.T
    edges = [np.linspace(-0.75, 0.75, 5), np.linspace(-0.75, 0.75, 5)]
    observed, _, _ = np.histogram2d(eta[:, 0], eta[:, 1], bins=edges)
    expected = np.empty_like(observed)
    for i in range(4):
        for k in range(4):
            lo = np.array([edges[0][i], edges[1][k]])
            hi = np.array([edges[0][i + 1], edges[1][k + 1]])
            expected[i, k] = integrate_common_density(cd, lo, hi)
    assert expected.sum() == pytest.approx(1.0, abs=1e-6)
    keep = expected > 5 / len(eta)
    obs, exp = observed[keep], expected[keep] * len(eta)
    exp *= obs.sum() / exp.sum()
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_gradient_integral_identity_is_exact():
    cd = common_density_for(IDENTITY, triangular(), 3)
    g = grad_density_integral(cd, 1)
    assert g.value == pytest.approx(4.0, rel=1e-10)
    assert g.bound == pytest.approx(4.0)


def test_gradient_bound_scales_with_alpha0():
    cd = common_density_for(ConvolutionVector.from_sequence([2.0]), triangular(), 2)
    g = grad_density_integral(cd, 0)
    assert g.bound == pytest.approx(2.0)
    assert g.value == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("cd,j", [(example_one(2), 0), (example_one(3), -1),
                                  (common_density_for(HALF, smooth_bump(), 3), 1)])
def test_gradient_integral_below_column_sum_bound(cd, j):
    g = grad_density_integral(cd, j)
    assert g.value <= g.bound + 1e-6
    col = cd.transform.B[:, cd.position(j)]
    assert g.bound == pytest.approx(cd.base.norm_fprime_L1 * np.abs(col).sum())
    max_col = np.abs(cd.transform.B).sum(axis=0).max()
    assert g.value <= cd.base.norm_fprime_L1 * max_col + 1e-6

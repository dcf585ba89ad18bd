"""Monte Carlo checks of the Wegner estimate and of its proof inequalities.

The sweep estimates E[Tr P([E - eps, E])] over a grid of (eps, l) and fits

    log mean = log C + s_eps log eps + s_vol log l

on the cells inside the linear window. The window is chosen from the
pooled spectrum only (never from the fitted slopes): eps must exceed
``spacing_factor`` mean level spacings of its box and stay below
``curvature_fraction`` times the distance from E to the pooled spectral
minimum.
"""

from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .densities import CommonDensity, line_structure, sup_along_line
from .errors import InsufficientData
from .operator import (AlloyModel, GridSpec, SingleSitePotential, assemble_hamiltonian,
                       potential_from_eta, sample_field, spawn_seed)
from .quadrature import clean_breakpoints, integrate_piecewise
from .spectral import sample_spectra
from .toeplitz import ConvolutionVector, IndexBox, build_transform, row_sum_norm

Z95 = 1.959963984540054


@dataclass(frozen=True)
class TraceEstimate:
    mean: float
    half_width: float
    samples: int


def _interval_counts(spectra, E, eps):
    """(samples, len(eps)) closed-interval counts in [E - eps, E]."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    hi = np.array([np.searchsorted(row, E, side="right") for row in spectra])
    lo = np.stack([np.searchsorted(row, E - eps, side="left") for row in spectra])
    return hi[:, None] - lo


def _estimate(counts):
    n = counts.shape[0]
    mean = counts.mean(axis=0)
    hw = Z95 * counts.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full_like(mean, np.nan)
    return mean, hw


def expected_trace(model, E, eps, l, m, samples, seed=0, workers=1, tag=0):
    """Monte Carlo mean of Tr P([E - eps, E]) with a 95% normal half-width."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    spectra = sample_spectra(model, model.grid(l, m), samples, seed, tag, workers)
    mean, hw = _estimate(_interval_counts(spectra, E, [eps]))
    return TraceEstimate(float(mean[0]), float(hw[0]), samples)


@dataclass(frozen=True, eq=False)
class WegnerSweepConfig:
    model: AlloyModel
    epsilons: tuple
    box_sizes: tuple
    samples: int
    m: int = 5
    seed: int = 0
    energy: float = None
    percentile: float = 5.0
    spacing_factor: float = 1.0
    curvature_fraction: float = 0.5
    bootstrap: int = 200
    workers: int = 1

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        if eps.size == 0 or np.any(eps <= 0):
            raise ValueError("epsilons must be positive")
        object.__setattr__(self, "epsilons", tuple(sorted(set(eps.tolist()), reverse=True)))
        object.__setattr__(self, "box_sizes", tuple(sorted(set(int(l) for l in self.box_sizes))))


@dataclass(frozen=True, eq=False)
class WegnerSweep:
    config: WegnerSweepConfig
    energy: float
    spectrum_min: float
    dos: float
    counts: dict
    rows: list
    window: dict


def run_sweep(config):
    """Eigenvalues for every box size, E from the pooled spectrum, counts for every eps."""
    model = config.model
    spectra = {}
    for tag, l in enumerate(config.box_sizes):
        spectra[l] = sample_spectra(model, model.grid(l, config.m), config.samples,
                                    config.seed, tag, config.workers)
    pooled = np.concatenate([s.ravel() for s in spectra.values()])
    E = float(np.percentile(pooled, config.percentile)) if config.energy is None \
        else float(config.energy)
    lam_min = float(pooled.min())
    eps = np.array(config.epsilons)
    d = model.d
    eps_max = config.curvature_fraction * (E - lam_min)
    # DOS per unit volume from a probe width independent of the eps grid.
    probe = eps_max if eps_max > 0 else float(eps.max())
    probe_counts = sum(_interval_counts(s, E, [probe]).sum() for s in spectra.values())
    volume = sum(config.samples * l ** d for l in spectra)
    dos = float(probe_counts) / (probe * volume)
    counts, rows, window = {}, [], {}
    for l, spec in spectra.items():
        c = _interval_counts(spec, E, eps)
        counts[l] = c
        mean, hw = _estimate(c)
        spacing = 1.0 / (dos * l ** d) if dos > 0 else np.inf
        inside = (eps >= config.spacing_factor * spacing) & (eps <= eps_max) & (mean > 0)
        window[l] = inside
        for e, mu, h, w in zip(eps, mean, hw, inside):
            rows.append({"E": E, "eps": float(e), "l": int(l), "samples": config.samples,
                         "mean": float(mu), "half_width": float(h), "in_window": bool(w)})
    return WegnerSweep(config, E, lam_min, dos, counts, rows, window)


@dataclass(frozen=True)
class ScalingFitResult:
    slope_eps: float
    slope_vol: float
    wegner_constant: float
    intercept: float
    confidence: dict
    ci_eps: tuple
    ci_vol: tuple
    r_squared: float
    cells: int
    energy: float
    norm_growth: float = 0.0
    volume_bound_exponent: float = None
    extras: dict = field(default_factory=dict)


def _design(sweep, means):
    X, Y = [], []
    eps = np.array(sweep.config.epsilons)
    for l, inside in sweep.window.items():
        mu = means[l]
        for i in np.flatnonzero(inside):
            if mu[i] <= 0:
                continue
            X.append([1.0, np.log(eps[i]), np.log(l)])
            Y.append(np.log(mu[i]))
    return np.array(X), np.array(Y)


def _lstsq(X, Y):
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return coef


def norm_growth_exponent(alpha, box_sizes):
    """Fitted q in ||B_l|| ~ l^q (0 for admissible alpha)."""
    ls = np.array(sorted(box_sizes), dtype=float)
    norms = [build_transform(alpha, IndexBox.build(alpha.d, int(l), alpha.gamma)).row_sum_norm_B
             for l in ls]
    slope = np.polyfit(np.log(ls), np.log(norms), 1)[0]
    return float(max(slope, 0.0)) if not alpha.admissible() else 0.0


def fit_scaling(source):
    """Joint log-log least squares for the eps and volume exponents, bootstrap CIs."""
    sweep = run_sweep(source) if isinstance(source, WegnerSweepConfig) else source
    cfg = sweep.config
    if len(cfg.epsilons) < 3 or len(cfg.box_sizes) < 3:
        raise InsufficientData("need at least 3 epsilons and 3 box sizes")
    if cfg.samples < 100:
        raise InsufficientData("need at least 100 samples per cell for a fit")
    means = {l: c.mean(axis=0) for l, c in sweep.counts.items()}
    X, Y = _design(sweep, means)
    if len(Y) < 3 or len(np.unique(X[:, 1])) < 2 or len(np.unique(X[:, 2])) < 2:
        raise InsufficientData(f"only {len(Y)} cells inside the linear window")
    coef = _lstsq(X, Y)
    resid = Y - X @ coef
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0

    rng = np.random.default_rng(spawn_seed(cfg.seed, 0xB007))
    boots = []
    for _ in range(cfg.bootstrap):
        bmeans = {}
        for l, c in sweep.counts.items():
            bmeans[l] = c[rng.integers(0, c.shape[0], c.shape[0])].mean(axis=0)
        bx, by = _design(sweep, bmeans)
        if len(by) >= 3:
            boots.append(_lstsq(bx, by))
    boots = np.array(boots)
    ci_eps = tuple(np.percentile(boots[:, 1], [2.5, 97.5]))
    ci_vol = tuple(np.percentile(boots[:, 2], [2.5, 97.5]))

    d = cfg.model.d
    eps = np.array(cfg.epsilons)
    ratios = [means[l][i] / (eps[i] * l**d) for l, w in sweep.window.items()
              for i in np.flatnonzero(w)]
    q = norm_growth_exponent(cfg.model.alpha, cfg.box_sizes)
    return ScalingFitResult(
        slope_eps=float(coef[1]), slope_vol=float(coef[2]),
        wegner_constant=float(max(ratios)), intercept=float(coef[0]),
        confidence={"slope_eps": (ci_eps[1] - ci_eps[0]) / 2,
                    "slope_vol": (ci_vol[1] - ci_vol[0]) / 2},
        ci_eps=ci_eps, ci_vol=ci_vol, r_squared=r2, cells=len(Y), energy=sweep.energy,
        norm_growth=q, volume_bound_exponent=q + d,
        extras={"dos": sweep.dos, "spectrum_min": sweep.spectrum_min,
                "bootstrap": len(boots)})


# --- proof inequalities on small instances ---------------------------------


@dataclass(frozen=True, eq=False)
class SpavInstance:
    """One-dimensional instance for the spectral averaging inequality.

    ``eta`` fixes the transformed couplings other than site ``j``; ``phi``
    is a normalized mesh vector and ``interval`` the closed window I.
    """

    alpha: ConvolutionVector
    density: object
    l: int
    m: int
    j: int
    eta: np.ndarray
    phi: np.ndarray
    interval: tuple
    kappa: float = 1.0

    def __post_init__(self):
        box = IndexBox.build(1, self.l, self.alpha.gamma)
        if box.size > 3:
            raise ValueError("spectral averaging check is limited to L <= 3")
        if not 0 <= self.j < self.l:
            raise ValueError("site j must lie inside the box")


@dataclass(frozen=True)
class SpavReport:
    lhs: float
    rhs: float
    holds: bool
    lhs_error: float
    sup_k: float


def _jumps(count_fn, a, b, tol=1e-12):
    """Points in [a, b] where a monotone integer step function changes value."""
    out = []
    stack = [(a, b, count_fn(a), count_fn(b))]
    while stack:
        x0, x1, c0, c1 = stack.pop()
        if c0 == c1:
            continue
        if x1 - x0 <= tol * max(1.0, abs(x0)):
            out.append(0.5 * (x0 + x1))
            continue
        mid = 0.5 * (x0 + x1)
        cm = count_fn(mid)
        stack.append((x0, mid, c0, cm))
        stack.append((mid, x1, cm, c1))
    return out


def spectral_averaging_check(inst, rtol=1e-9):
    """Compare int k(eta) s(eta) d eta_j with |I| sup_{eta_j} k(eta).

    s(eta) = <phi, chi_j P(I) chi_j phi> is smooth in eta_j away from the
    points where an eigenvalue crosses an endpoint of I. Since the single
    site bump is nonnegative the eigenvalues are monotone in eta_j, so the
    crossing points are located by bisection on eigenvalue counts and
    passed to the quadrature as breakpoints.
    """
    box = IndexBox.build(1, inst.l, inst.alpha.gamma)
    t = build_transform(inst.alpha, box)
    cd = CommonDensity(t, inst.density)
    grid = GridSpec(1, inst.l, inst.m)
    u = SingleSitePotential.indicator(inst.alpha, inst.kappa)
    pos = box.position(inst.j)
    eta = np.asarray(inst.eta, dtype=float).copy()
    E1, E2 = inst.interval
    width = E2 - E1
    sup_k = sup_along_line(cd, inst.j, eta)
    rhs = width * sup_k
    struct = line_structure(cd, pos, eta)
    if struct is None or width <= 0:
        return SpavReport(0.0, rhs, True, 0.0, sup_k)
    lo, hi, kinks = struct
    chi = grid.cell_mask([(inst.j,)]).astype(float)
    vec = chi * np.asarray(inst.phi, dtype=float)

    def eig(tv):
        e = eta.copy()
        e[pos] = tv
        H = assemble_hamiltonian(potential_from_eta(e, box, u, grid), grid)
        return np.linalg.eigh(H.dense())

    def below(tv, edge, strict):
        vals = eig(tv)[0]
        return int(np.searchsorted(vals, edge, side="left" if strict else "right"))

    jumps = _jumps(lambda tv: below(tv, E1, True), lo, hi)
    jumps += _jumps(lambda tv: below(tv, E2, False), lo, hi)
    bps = clean_breakpoints(list(kinks) + jumps, lo, hi)

    def integrand(ts):
        out = np.empty(len(ts))
        for i, tv in enumerate(ts):
            vals, vecs = eig(tv)
            sel = (vals >= E1) & (vals <= E2)
            s = float(np.sum((vecs[:, sel].T @ vec) ** 2))
            e = eta.copy()
            e[pos] = tv
            out[i] = cd(e) * s
        return out

    res = integrate_piecewise(integrand, bps, rtol=rtol, atol=1e-12, max_depth=30)
    lhs = res.value
    return SpavReport(lhs, rhs, lhs <= rhs * (1 + 1e-3) + 1e-12, res.error, sup_k)


def random_spav_instance(rng, density=None, m_choices=(2, 4)):
    """Random admissible instance with L <= 3, random phi and interval I."""
    from .densities import triangular

    density = density or triangular()
    l = int(rng.integers(1, 3))
    a0 = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
    if rng.random() < 0.2:
        alpha = ConvolutionVector({(0,): a0})
    else:
        alpha = ConvolutionVector({(0,): a0, (1,): rng.uniform(-0.99, 0.99) * abs(a0)})
    box = IndexBox.build(1, l, alpha.gamma)
    t = build_transform(alpha, box)
    omega = density.sample(rng, box.size)
    eta = t.A @ omega
    m = int(rng.choice(m_choices))
    grid = GridSpec(1, l, m)
    j = int(rng.integers(0, l))
    phi = rng.normal(size=grid.n)
    if rng.random() < 0.5:
        phi = phi * grid.cell_mask([(j,)])
    phi /= np.linalg.norm(phi)
    u = SingleSitePotential.indicator(alpha)
    H = assemble_hamiltonian(potential_from_eta(eta, box, u, grid), grid)
    vals = np.linalg.eigvalsh(H.dense())
    # Aim I at the bottom few levels so that s(eta) is rarely identically zero.
    center = vals[int(rng.integers(0, min(4, len(vals))))] + rng.normal(scale=0.5)
    width = float(np.exp(rng.uniform(np.log(0.1), np.log(30.0))))
    return SpavInstance(alpha, density, l, m, j, eta, phi, (center - width / 2, center + width / 2))


@dataclass(frozen=True)
class MainEstimateReport:
    lhs: float
    half_width: float
    rhs: float
    holds: bool


def _main_task(args):
    alpha, density, l, m, j, phi, interval, kappa, seed = args
    box = IndexBox.build(1, l, alpha.gamma)
    grid = GridSpec(1, l, m)
    u = SingleSitePotential.indicator(alpha, kappa)
    omega = sample_field(density, box, seed)
    model = AlloyModel(density, u)
    H = model.hamiltonian(grid, omega)
    vals, vecs = np.linalg.eigh(H.dense())
    sel = (vals >= interval[0]) & (vals <= interval[1])
    vec = grid.cell_mask([(j,)]) * phi
    return float(np.sum((vecs[:, sel].T @ vec) ** 2))


def main_estimate_check(alpha, density, l, m, j, phi, interval, samples=200, seed=0,
                        kappa=1.0, workers=1):
    """E[<phi, chi_j P(I) chi_j phi>] against |I| ||f'||_1 ||B|| / kappa."""
    box = IndexBox.build(1, l, alpha.gamma)
    if box.size > 3:
        raise ValueError("main estimate check is limited to L <= 3")
    t = build_transform(alpha, box)
    width = interval[1] - interval[0]
    rhs = width * density.norm_fprime_L1 * row_sum_norm(t.B) / kappa
    phi = np.asarray(phi, dtype=float)
    tasks = [(alpha, density, l, m, j, phi, interval, kappa, spawn_seed(seed, i))
             for i in range(samples)]
    vals = np.array(pmap(_main_task, tasks, workers))
    lhs = float(vals.mean())
    hw = float(Z95 * vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("nan")
    return MainEstimateReport(lhs, hw, rhs, lhs <= rhs)

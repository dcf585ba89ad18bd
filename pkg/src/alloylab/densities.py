"""Single-site densities and the densities of the transformed couplings.

``DensityModel`` is a piecewise polynomial probability density with exact
norms and an inverse-CDF sampler. ``CommonDensity`` is the push-forward

    k(eta) = |det B| * prod_k f((B eta)_k)

of the product density under ``eta = A omega``. Marginals over one
coordinate are computed by piecewise Gauss quadrature along the line
through ``eta``, with breakpoints placed at the exact kink points of
the integrand.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .errors import IndexMismatch, NotDifferentiable, QuadratureFailure
from .quadrature import clean_breakpoints, integrate_piecewise, tensor_nodes
from .toeplitz import (ConvolutionVector, IndexBox, build_transform,
                       example_one_alpha)

MARGINAL_MAX_L = 12
GRADIENT_MAX_L = 6
TENSOR_MAX_L = 4
UNDEFINED_BELOW = 1e-14


def _poly_max(p, a, b):
    crit = [r.real for r in p.deriv().roots() if abs(r.imag) < 1e-12 and a < r.real < b]
    return max(p(x) for x in [a, b, *crit])


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Probability density given by polynomials between sorted breakpoints."""

    name: str
    breakpoints: np.ndarray
    pieces: tuple

    def __post_init__(self):
        bps = np.asarray(self.breakpoints, dtype=float)
        if bps.ndim != 1 or len(bps) != len(self.pieces) + 1 or np.any(np.diff(bps) <= 0):
            raise ValueError("breakpoints must be increasing, one more than pieces")
        bps.setflags(write=False)
        object.__setattr__(self, "breakpoints", bps)
        mass = sum(p.integ()(b) - p.integ()(a)
                   for p, a, b in zip(self.pieces, bps[:-1], bps[1:]))
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"density integrates to {mass!r}, not 1")

    @property
    def support(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def degree(self):
        return max(p.degree() for p in self.pieces)

    @cached_property
    def _coeffs(self):
        deg = self.degree
        C = np.zeros((len(self.pieces), deg + 1))
        for i, p in enumerate(self.pieces):
            C[i, : len(p.coef)] = p.coef
        return C

    def _piece_index(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _horner(self, C, idx, x):
        out = np.zeros_like(x, dtype=float)
        for c in range(C.shape[1] - 1, -1, -1):
            out = out * x + C[idx, c]
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.support
        vals = self._horner(self._coeffs, self._piece_index(x), x)
        return np.where((x >= a) & (x <= b), vals, 0.0)

    pdf = __call__

    @cached_property
    def _deriv_coeffs(self):
        deg = max(self.degree, 1)
        C = np.zeros((len(self.pieces), deg))
        for i, p in enumerate(self.pieces):
            dc = p.deriv().coef
            C[i, : len(dc)] = dc
        return C

    def derivative(self, x):
        """Pointwise f' on the open pieces (zero outside the support)."""
        x = np.asarray(x, dtype=float)
        a, b = self.support
        vals = self._horner(self._deriv_coeffs, self._piece_index(x), x)
        return np.where((x > a) & (x < b), vals, 0.0)

    def jumps(self):
        """Jump of f at every breakpoint, support ends included."""
        bps = self.breakpoints
        left = [0.0] + [p(x) for p, x in zip(self.pieces, bps[1:])]
        right = [p(x) for p, x in zip(self.pieces, bps[:-1])] + [0.0]
        return np.array(right) - np.array(left)

    def is_w11(self):
        return bool(np.all(np.abs(self.jumps()) < 1e-12))

    def critical_points(self):
        """Interior zeros of f' inside the pieces (kinks of |f'|)."""
        out = []
        for p, a, b in zip(self.pieces, self.breakpoints[:-1], self.breakpoints[1:]):
            if p.degree() < 2:
                continue
            out += [r.real for r in p.deriv().roots()
                    if abs(r.imag) < 1e-12 and a < r.real < b]
        return sorted(out)

    @cached_property
    def norm_f_inf(self):
        return float(max(_poly_max(p, a, b) for p, a, b in
                         zip(self.pieces, self.breakpoints[:-1], self.breakpoints[1:])))

    @cached_property
    def _total_variation(self):
        tv = 0.0
        for p, a, b in zip(self.pieces, self.breakpoints[:-1], self.breakpoints[1:]):
            crit = [r.real for r in p.deriv().roots()
                    if abs(r.imag) < 1e-12 and a < r.real < b] if p.degree() > 1 else []
            xs = [a, *sorted(crit), b]
            tv += sum(abs(p(x1) - p(x0)) for x0, x1 in zip(xs[:-1], xs[1:]))
        return float(tv)

    @property
    def norm_fprime_L1(self):
        """||f'||_{L^1}; only defined for densities without jumps."""
        if not self.is_w11():
            raise NotDifferentiable(f"density {self.name!r} has jumps; f' is not in L^1")
        return self._total_variation

    def moment(self, k):
        total = 0.0
        for p, a, b in zip(self.pieces, self.breakpoints[:-1], self.breakpoints[1:]):
            q = (p * Polynomial([0.0] * k + [1.0])).integ()
            total += q(b) - q(a)
        return float(total)

    @cached_property
    def _cdf_parts(self):
        antider = [p.integ() for p in self.pieces]
        start = [0.0]
        for P, a, b in zip(antider, self.breakpoints[:-1], self.breakpoints[1:]):
            start.append(start[-1] + P(b) - P(a))
        return antider, np.array(start)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        antider, start = self._cdf_parts
        idx = self._piece_index(x)
        a, b = self.support
        out = np.empty_like(x)
        for i, P in enumerate(antider):
            sel = idx == i
            out[sel] = start[i] + P(x[sel]) - P(self.breakpoints[i])
        return np.where(x < a, 0.0, np.where(x > b, 1.0, out))

    def ppf(self, u):
        """Inverse CDF by vectorized bisection (64 halvings, bit-reproducible)."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        antider, start = self._cdf_parts
        idx = np.clip(np.searchsorted(start, u, side="right") - 1, 0, len(self.pieces) - 1)
        lo = self.breakpoints[idx].copy()
        hi = self.breakpoints[idx + 1].copy()
        target = u - start[idx]
        base = np.array([P(self.breakpoints[i]) for i, P in enumerate(antider)])[idx]
        A = np.zeros((len(antider), max(P.degree() for P in antider) + 1))
        for i, P in enumerate(antider):
            A[i, : len(P.coef)] = P.coef
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self._horner(A, idx, mid) - base < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, rng, size):
        return self.ppf(rng.random(size))


def triangular():
    """f(x) = 2 - 4|x| on [-1/2, 1/2]."""
    return DensityModel("triangular", np.array([-0.5, 0.0, 0.5]),
                        (Polynomial([2.0, 4.0]), Polynomial([2.0, -4.0])))


def uniform(a=0.0, b=1.0):
    """Indicator density on [a, b]; not W^{1,1}."""
    return DensityModel("uniform", np.array([a, b]), (Polynomial([1.0 / (b - a)]),))


def smooth_bump(a=-0.5, b=0.5):
    """C^1 quartic bump (15 / 16r) (1 - ((x - c) / r)^2)^2 on [a, b]."""
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    t = Polynomial([-c / r, 1.0 / r])
    p = (15.0 / (16.0 * r)) * (1 - t**2) ** 2
    return DensityModel("smooth-bump", np.array([a, b]), (p,))


DENSITIES = {"triangular": triangular, "uniform": uniform, "smooth-bump": smooth_bump}


def make_density(name, **params):
    try:
        factory = DENSITIES[name]
    except KeyError:
        raise ValueError(f"unknown density {name!r}; choose from {sorted(DENSITIES)}") from None
    return factory(**params)


@dataclass(frozen=True, eq=False)
class CommonDensity:
    """Joint density of eta = A omega, evaluated as |det B| F(B eta)."""

    transform: object
    base: DensityModel

    @property
    def L(self):
        return self.transform.box.size

    @property
    def abs_det_B(self):
        return self.transform.abs_det_B

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != self.L:
            raise IndexMismatch(f"eta has length {eta.shape[-1]}, expected {self.L}")
        omega = eta @ self.transform.B.T
        return self.abs_det_B * np.prod(self.base(omega), axis=-1)

    def supremum(self):
        """|det B| * ||f||_inf^L."""
        return self.abs_det_B * self.base.norm_f_inf ** self.L

    def position(self, j):
        return self.transform.box.position(j)


def eval_common_density(cd, eta):
    return float(cd(np.asarray(eta, dtype=float)))


def _full_eta(cd, pos, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape == (cd.L - 1,):
        eta = np.insert(eta, pos, 0.0)
    if eta.shape != (cd.L,):
        raise IndexMismatch(f"eta has shape {eta.shape}, expected ({cd.L},) or ({cd.L - 1},)")
    return eta


def line_structure(cd, pos, eta):
    """Support interval and kink points of t -> k(eta with eta[pos] = t).

    Returns ``(lo, hi, kinks)`` or ``None`` when the line misses the support.
    """
    B = cd.transform.B
    base = eta.copy()
    base[pos] = 0.0
    c = B @ base
    col = B[:, pos]
    a, b = cd.base.support
    moving = np.abs(col) > 1e-15
    fixed_vals = c[~moving]
    if np.any((fixed_vals < a) | (fixed_vals > b)):
        return None
    lo, hi = -np.inf, np.inf
    kinks = []
    for ck, bk in zip(c[moving], col[moving]):
        ends = sorted([(a - ck) / bk, (b - ck) / bk])
        lo, hi = max(lo, ends[0]), min(hi, ends[1])
        kinks.extend((cd.base.breakpoints - ck) / bk)
    if not np.isfinite(lo) or hi <= lo:
        return None
    return lo, hi, kinks


def _line_function(cd, pos, eta):
    def fn(t):
        pts = np.repeat(eta[None, :], len(t), axis=0)
        pts[:, pos] = t
        return cd(pts)
    return fn


@dataclass(frozen=True)
class MarginalResult:
    value: float
    error: float


def marginal_density(cd, j, eta, rtol=1e-10):
    """g_j(eta) = integral of k over eta_j, other coordinates held at ``eta``.

    ``eta`` is either the full vector (its j-th entry is ignored) or the
    L - 1 remaining coordinates.
    """
    if cd.L > MARGINAL_MAX_L:
        raise ValueError(f"marginal quadrature limited to L <= {MARGINAL_MAX_L}")
    pos = cd.position(j)
    eta = _full_eta(cd, pos, eta)
    struct = line_structure(cd, pos, eta)
    if struct is None:
        return MarginalResult(0.0, 0.0)
    lo, hi, kinks = struct
    bps = clean_breakpoints(kinks, lo, hi)
    degree = cd.L * cd.base.degree
    res = integrate_piecewise(_line_function(cd, pos, eta), bps, degree=degree, rtol=rtol)
    if res.error > 1e-8 * max(abs(res.value), 1e-300) and res.error > 1e-300:
        raise QuadratureFailure(f"marginal error estimate {res.error:.3g} too large")
    return MarginalResult(res.value, res.error)


@dataclass(frozen=True)
class ConditionalDensityReport:
    j: object
    eta: tuple
    k_value: float
    marginal_g: float
    rho: float
    quadrature_error: float
    defined: bool


def conditional_density(cd, j, eta):
    """rho_j(eta) = k(eta) / g_j(eta); undefined where the marginal vanishes."""
    pos = cd.position(j)
    eta = _full_eta(cd, pos, eta)
    k_val = eval_common_density(cd, eta)
    marg = marginal_density(cd, j, eta)
    defined = marg.value >= UNDEFINED_BELOW
    rho = k_val / marg.value if defined else float("nan")
    return ConditionalDensityReport(j, tuple(eta), k_val, marg.value, rho, marg.error, defined)


def sup_along_line(cd, j, eta, samples_per_piece=64):
    """sup over eta_j of k, holding the other coordinates fixed."""
    from scipy.optimize import minimize_scalar

    pos = cd.position(j)
    eta = _full_eta(cd, pos, eta)
    struct = line_structure(cd, pos, eta)
    if struct is None:
        return 0.0
    lo, hi, kinks = struct
    bps = clean_breakpoints(kinks, lo, hi)
    fn = _line_function(cd, pos, eta)
    best = float(np.max(fn(bps)))
    for a, b in zip(bps[:-1], bps[1:]):
        grid = np.linspace(a, b, samples_per_piece)
        vals = fn(grid)
        i = int(np.argmax(vals))
        best = max(best, float(vals[i]))
        ga, gb = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        if gb > ga:
            opt = minimize_scalar(lambda t: -fn(np.array([t]))[0], bounds=(ga, gb),
                                  method="bounded", options={"xatol": 1e-12})
            best = max(best, -float(opt.fun))
    return best


def integrate_common_density(cd, lower=None, upper=None, rtol=1e-9):
    """Nested tensor quadrature of k over a box in eta-space (L <= 4).

    Coordinates are integrated innermost-last. At each level, kink points
    come from the rows of B that do not involve the still-inner variables;
    for triangular B these are all the kinks of the partial integral, for
    other shapes the adaptive refinement resolves the rest.
    """
    L = cd.L
    if L > TENSOR_MAX_L:
        raise ValueError(f"tensor quadrature limited to L <= {TENSOR_MAX_L}")
    A, B = cd.transform.A, cd.transform.B
    a, b = cd.base.support
    glo = np.minimum(A * a, A * b).sum(axis=1)
    ghi = np.maximum(A * a, A * b).sum(axis=1)
    lo = glo if lower is None else np.maximum(glo, lower)
    hi = ghi if upper is None else np.minimum(ghi, upper)
    if np.any(hi <= lo):
        return 0.0
    degree = L * cd.base.degree
    kinks = cd.base.breakpoints
    eta = np.zeros(L)

    def level(i):
        rows = [r for r in range(L) if abs(B[r, i]) > 1e-15 and not np.any(B[r, i + 1:])]
        c = B[:, :i] @ eta[:i]
        pts = [(x - c[r]) / B[r, i] for r in rows for x in kinks]
        bps = clean_breakpoints(pts, lo[i], hi[i])
        if i == L - 1:
            def fn(t):
                block = np.repeat(eta[None, :], len(t), axis=0)
                block[:, i] = t
                return cd(block)
        else:
            def fn(t):
                out = np.empty(len(t))
                for n, tv in enumerate(t):
                    eta[i] = tv
                    out[n] = level(i + 1)
                return out
        return integrate_piecewise(fn, bps, degree=degree, rtol=rtol, atol=1e-13).value

    return level(0)


@dataclass(frozen=True)
class GradientIntegral:
    value: float
    error: float
    bound: float


def grad_density_integral(cd, j, budget=3_000_000):
    """Tensor quadrature of the integral of |d k / d eta_j| over R^L.

    After the substitution eta = A omega the determinants cancel and

        int |d_j k| d eta = int |sum_k b_kj f'(w_k) prod_{i != k} f(w_i)| d omega.

    Only coordinates with b_kj != 0 enter; the others integrate f to 1.
    """
    if cd.L > GRADIENT_MAX_L:
        raise ValueError(f"gradient integral limited to L <= {GRADIENT_MAX_L}")
    f = cd.base
    norm_fp = f.norm_fprime_L1
    pos = cd.position(j)
    col = cd.transform.B[:, pos]
    coeffs = col[np.abs(col) > 1e-15]
    bound = norm_fp * float(np.abs(col).sum())
    s = len(coeffs)
    bps = np.unique(np.concatenate([f.breakpoints, f.critical_points()]))
    pieces = len(bps) - 1
    n_fine = min(256, max(2, int(budget ** (1.0 / s)) // pieces))
    n_coarse = max(2, n_fine // 2)

    def tensor(n):
        x, w = tensor_nodes(bps, n)
        F, D = f(x), f.derivative(x)
        total = np.zeros((len(x),) * s)
        for k in range(s):
            factors = [D if i == k else F for i in range(s)]
            term = factors[0]
            for fac in factors[1:]:
                term = np.multiply.outer(term, fac)
            total = total + coeffs[k] * term
        weight = w
        for _ in range(s - 1):
            weight = np.multiply.outer(weight, w)
        return float(np.sum(weight * np.abs(total)))

    fine = tensor(n_fine)
    coarse = tensor(n_coarse)
    if not np.isfinite(fine):
        raise QuadratureFailure("non-finite gradient integral")
    return GradientIntegral(fine, abs(fine - coarse), bound)


def common_density_for(alpha, base, l, d=1):
    box = IndexBox.build(d, l, alpha.gamma)
    return CommonDensity(build_transform(alpha, box), base)


def example_one(l):
    """alpha = (1, -1) with the triangular density on the box [0, l)."""
    return common_density_for(example_one_alpha(), triangular(), l)


def example_two(l, a=0.5):
    """alpha = (1, -a) with the uniform density on [0, 1]."""
    return common_density_for(ConvolutionVector.from_sequence([1.0, -a]), uniform(), l)


def example_two_probe(l, j, m):
    """eta with eta_{j+1} = 1 - 2^-m and all other coordinates zero."""
    cd_box = IndexBox.build(1, l, ((0,), (1,)))
    eta = np.zeros(cd_box.size)
    eta[cd_box.position(j + 1)] = 1.0 - 2.0 ** (-m)
    return eta

"""Static SVG figures for the CLI reports.

Figures are written through the Agg backend with a fixed SVG hash salt
and no date stamp so that identical data give byte-identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 11,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "lines.linewidth": 1.4,
    "lines.markersize": 5,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "alloylab",
    "svg.fonttype": "path",
}


def _figure(width=5.0):
    golden = (np.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, width * golden))


def _save(fig, path, stamp):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": stamp})
    plt.close(fig)


def norm_growth(path, ls, norms, stamp=""):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax.plot(ls, norms, "o", label=r"$\|B_l\|$ (row sum)")
        ax.plot(ls, np.asarray(ls) + 1, "-", color="0.4", label=r"$l+1$")
        ax.set_xlabel("box side $l$")
        ax.set_ylabel("row-sum norm")
        ax.legend()
        _save(fig, path, stamp)


def divergence_curve(path, one_minus_eta, rho, stamp=""):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax.loglog(one_minus_eta, rho, "o-", label=r"$\rho_j$")
        ax.loglog(one_minus_eta, 0.5 / np.asarray(one_minus_eta), ":", color="0.4",
                  label=r"$\frac{1}{2}(1-\eta_{j+1})^{-1}$")
        ax.set_xlabel(r"$1-\eta_{j+1}$")
        ax.set_ylabel("conditional density")
        ax.legend()
        _save(fig, path, stamp)


def wegner_loglog(path, rows, fit=None, stamp=""):
    with plt.rc_context(STYLE):
        fig, ax = _figure(5.5)
        ls = sorted({r["l"] for r in rows})
        for l in ls:
            sel = [r for r in rows if r["l"] == l and r["mean"] > 0]
            eps = np.array([r["eps"] for r in sel])
            mean = np.array([r["mean"] for r in sel])
            inside = np.array([r["in_window"] for r in sel], dtype=bool)
            line, = ax.loglog(eps[inside], mean[inside], "o", label=f"l = {l}")
            ax.loglog(eps[~inside], mean[~inside], "x", color=line.get_color())
            if fit is not None:
                grid = np.geomspace(eps.min(), eps.max(), 50)
                ax.loglog(grid, np.exp(fit.intercept) * grid**fit.slope_eps * l**fit.slope_vol,
                          "-", color=line.get_color(), alpha=0.6)
        ax.set_xlabel(r"$\varepsilon$")
        ax.set_ylabel(r"$\mathbb{E}\,\mathrm{Tr}\,P([E-\varepsilon,E])$")
        ax.legend()
        _save(fig, path, stamp)


def ids_curves(path, curves, stamp=""):
    """``curves``: list of (label, energies, mean, std)."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for label, E, mean, std in curves:
            line, = ax.plot(E, mean, "-", label=label)
            ax.fill_between(E, mean - std, mean + std, color=line.get_color(), alpha=0.2)
        ax.set_xlabel("$E$")
        ax.set_ylabel(r"$N^l_\omega(E)$")
        ax.legend()
        _save(fig, path, stamp)


def good_box_decay(path, series, stamp=""):
    """``series``: list of (label, ls, norms)."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for label, ls, norms in series:
            ax.semilogy(ls, norms, "o-", label=label)
        ax.set_xlabel("box side $l$")
        ax.set_ylabel(r"$\|\chi^+ (H-E)^{-1} \chi^-\|$")
        ax.legend()
        _save(fig, path, stamp)


def spav_scatter(path, lhs, rhs, stamp=""):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        lhs, rhs = np.asarray(lhs), np.asarray(rhs)
        ax.plot(rhs, lhs, ".", alpha=0.7)
        top = float(max(rhs.max(initial=1.0), lhs.max(initial=1.0)))
        ax.plot([0, top], [0, top], "-", color="0.4")
        ax.set_xlabel(r"$|I|\,\sup_{\eta_j} k$")
        ax.set_ylabel(r"$\int k\, s\, d\eta_j$")
        _save(fig, path, stamp)

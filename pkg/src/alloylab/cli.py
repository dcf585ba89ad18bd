"""Command line front end: alloylab <command> [--config PATH] [--seed U64] ...

Each command resolves its configuration, runs the experiment, writes
CSV/JSON/SVG files into ``<out>/<config_hash>/`` together with
``manifest.json`` and returns an exit status: 0 when every numeric check
passed, 1 when one failed, 2 on configuration errors.
"""

import argparse
import sys

import numpy as np

from . import __version__, plotting
from ._parallel import pmap
from .config import (build_alpha, build_density, build_model, check_seed, config_hash, load,
                     resolve)
from .densities import (common_density_for, conditional_density, example_one, example_two,
                        example_two_probe, grad_density_integral, smooth_bump, triangular)
from .errors import AlloyLabError, ConfigError, InsufficientData
from .msa import (decay_rate, good_box_norm, good_box_probability,
                  resolvent_identity_residual, smooth_cutoff)
from .operator import GridSpec, constant_field, spawn_seed
from .output import RunManifest, RunWriter
from .spectral import eigenvalues, ids_from_spectra, sample_spectra, sample_std
from .toeplitz import (IndexBox, build_transform, example_one_alpha, random_admissible,
                       row_sum_norm)
from .wegner import (WegnerSweepConfig, fit_scaling, main_estimate_check, random_spav_instance,
                     run_sweep, spectral_averaging_check)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# --- toeplitz-check -------------------------------------------------------------


def _toeplitz_trial(rng, dims, max_offsets, max_l, trial):
    d = int(dims[trial % len(dims)])
    alpha = random_admissible(rng, d, int(rng.integers(1, max_offsets + 1)))
    l = int(rng.integers(1, max_l + 1))
    t = build_transform(alpha, IndexBox.build(d, l, alpha.gamma))
    residual = float(np.abs(t.A @ t.B - np.eye(t.box.size)).max())
    return {"trial": trial, "d": d, "l": l, "L": t.box.size, "offsets": len(alpha.alpha),
            "alpha0": alpha.alpha0, "alpha_star": alpha.alpha_star(), "residual": residual,
            "norm_B": t.row_sum_norm_B, "bound": alpha.norm_bound()}


def cmd_toeplitz_check(cfg, seed, workers, out):
    exp = cfg["experiment"]
    rng = np.random.default_rng(spawn_seed(seed, 1))
    out.start("sweep")
    rows = [_toeplitz_trial(rng, exp["dims"], exp["max_offsets"], exp["max_l"], i)
            for i in range(exp["trials"])]
    out.stop("sweep")
    for r in rows:
        r["holds"] = r["residual"] <= exp["inverse_tol"] and \
            r["norm_B"] <= r["bound"] + exp["bound_tol"]
    out.table("sweep.csv", ["trial", "d", "l", "L", "offsets", "alpha0", "alpha_star",
                            "residual", "norm_B", "bound", "holds"], rows)
    bad = sum(not r["holds"] for r in rows)
    out.check("norm_bound_sweep", bad == 0, f"{bad} of {len(rows)} trials violate")

    alpha = build_alpha(cfg["model"]["alpha"])
    exact = alpha.d == 1 and alpha.alpha == example_one_alpha().alpha
    bound = alpha.norm_bound() if alpha.admissible() else None
    table = []
    for l in cfg["grid"]["l"]:
        t = build_transform(alpha, IndexBox.build(alpha.d, int(l), alpha.gamma))
        row = {"l": int(l), "L": t.box.size, "norm_B": t.row_sum_norm_B}
        if exact:
            ones = np.tril(np.ones((t.box.size, t.box.size)))
            row["expected"] = float(l + 1)
            row["entries_exact"] = bool(np.array_equal(t.B, ones))
            row["holds"] = row["entries_exact"] and t.row_sum_norm_B == l + 1
        else:
            row["expected"] = bound
            row["entries_exact"] = None
            row["holds"] = bound is not None and t.row_sum_norm_B <= bound + exp["bound_tol"]
        table.append(row)
    out.table("norms.csv", ["l", "L", "norm_B", "expected", "entries_exact", "holds"], table)
    bad = sum(not r["holds"] for r in table)
    out.check("example_one_exact" if exact else "configured_alpha_bound", bad == 0,
              f"{bad} of {len(table)} box sizes fail")
    if exact:
        out.figure("norms.svg", plotting.norm_growth, [r["l"] for r in table],
                   [r["norm_B"] for r in table])


# --- density-examples ---------------------------------------------------------


def _gradient_task(args):
    alpha, density, l, j = args
    cd = common_density_for(alpha, density, l)
    g = grad_density_integral(cd, j)
    return {"alpha": " ".join(f"{v:.6g}" for v in alpha.alpha.values()), "density": density.name,
            "l": l, "L": cd.L, "j": j, "value": g.value, "error": g.error, "bound": g.bound}


def cmd_density_examples(cfg, seed, workers, out):
    exp = cfg["experiment"]
    density = build_density(cfg["density"])
    out.start("lin")
    lin = []
    for l in range(1, cfg["grid"]["l_max"] + 1):
        cd = common_density_for(example_one_alpha(), density, l)
        for site in cd.transform.box.plus_set:
            j = int(site[0])
            rep = conditional_density(cd, j, np.zeros(cd.L))
            closed = float(l - j + 1)
            asserted = (l - j) % 2 == 0 and density.name == "triangular"
            lin.append({"l": l, "j": j, "rho": rep.rho, "closed_form": closed,
                        "abs_error": abs(rep.rho - closed), "quadrature_error": rep.quadrature_error,
                        "note": "" if asserted else "not asserted"})
    out.stop("lin")
    out.table("lin.csv", ["l", "j", "rho", "closed_form", "abs_error", "quadrature_error",
                          "note"], lin)
    checked = [r for r in lin if not r["note"]]
    worst = max((r["abs_error"] for r in checked), default=0.0)
    out.check("conditional_density_exact", bool(checked) and worst <= exp["rho_tol"],
              f"{len(checked)} rows, max error {worst:.3g}")

    out.start("divergence")
    l, j = exp["divergence_l"], exp["divergence_j"]
    cd = example_two(l, exp["divergence_a"])
    div = []
    for m in range(1, exp["divergence_m_max"] + 1):
        eta = example_two_probe(l, j, m)
        rep = conditional_density(cd, j, eta)
        div.append({"m": m, "eta_next": 1.0 - 2.0**-m, "one_minus_eta": 2.0**-m,
                    "rho": rep.rho, "k": rep.k_value, "g": rep.marginal_g})
    out.stop("divergence")
    out.table("divergence.csv", ["m", "eta_next", "one_minus_eta", "rho", "k", "g"], div)
    rho = np.array([r["rho"] for r in div])
    out.check("divergence", bool(np.all(np.diff(rho) > 0)) and rho[-1] > exp["divergence_threshold"],
              f"rho at m={len(rho)} is {rho[-1]:.6g}")
    out.figure("divergence.svg", plotting.divergence_curve,
               [r["one_minus_eta"] for r in div], rho)

    out.start("gradient")
    rng = np.random.default_rng(spawn_seed(seed, 2))
    tasks = []
    max_l = exp["gradient_max_l"]
    for i in range(exp["gradient_instances"]):
        base = (triangular(), smooth_bump())[i % 2]
        alpha = example_one_alpha() if i % 4 == 3 else None
        while alpha is None:
            alpha = random_admissible(rng, 1, int(rng.integers(1, 4)), reach=2)
            offsets = [k[0] for k in alpha.alpha]
            if max(offsets) - min(offsets) + 1 > max_l:
                alpha = None
        offsets = [k[0] for k in alpha.alpha]
        l = int(rng.integers(1, max_l - (max(offsets) - min(offsets)) + 1))
        box = IndexBox.build(1, l, alpha.gamma)
        j = int(box.plus_set[rng.integers(0, box.size)][0])
        tasks.append((alpha, base, l, j))
    grad = pmap(_gradient_task, tasks, workers)
    out.stop("gradient")
    for r in grad:
        r["holds"] = r["value"] <= r["bound"] + exp["gradient_tol"]
    out.table("gradient.csv", ["alpha", "density", "l", "L", "j", "value", "error", "bound",
                               "holds"], grad)
    bad = sum(not r["holds"] for r in grad)
    out.check("gradient_bound", bad == 0, f"{bad} of {len(grad)} instances violate")


# --- wegner ---------------------------------------------------------------------


def cmd_wegner(cfg, seed, workers, out):
    exp = cfg["experiment"]
    model = build_model(cfg)
    eps = np.geomspace(exp["eps_min"], exp["eps_max"], exp["n_eps"])
    sweep_cfg = WegnerSweepConfig(
        model, tuple(eps), tuple(cfg["grid"]["l"]), exp["samples"], m=cfg["grid"]["m"],
        seed=seed, percentile=exp["percentile"], spacing_factor=exp["spacing_factor"],
        curvature_fraction=exp["curvature_fraction"], bootstrap=exp["bootstrap"],
        workers=workers)
    out.start("sweep")
    sweep = run_sweep(sweep_cfg)
    out.stop("sweep")
    out.table("sweep.csv", ["E", "eps", "l", "samples", "mean", "half_width", "in_window"],
              sweep.rows)
    try:
        out.start("fit")
        fit = fit_scaling(sweep)
        out.stop("fit")
    except InsufficientData as exc:
        fit = None
        reason = str(exc)
    summary = {"energy": sweep.energy, "spectrum_min": sweep.spectrum_min, "dos": sweep.dos}
    if fit is None:
        out.json("fit.json", {**summary, "fit": None, "reason": reason})
        if not out.manifest.smoke:
            out.check("wegner_fit", False, reason)
    else:
        out.json("fit.json", {**summary, "fit": {
            "slope_eps": fit.slope_eps, "slope_vol": fit.slope_vol, "ci_eps": fit.ci_eps,
            "ci_vol": fit.ci_vol, "intercept": fit.intercept, "r_squared": fit.r_squared,
            "wegner_constant": fit.wegner_constant, "cells": fit.cells,
            "norm_growth": fit.norm_growth, "volume_bound_exponent": fit.volume_bound_exponent,
            "bootstrap": fit.extras["bootstrap"]}})
        d = model.d
        lo, hi = fit.ci_eps
        out.check("eps_scaling", abs(fit.slope_eps - 1) <= exp["eps_slope_tol"] and lo <= 1 <= hi,
                  f"slope {fit.slope_eps:.4f}, CI [{lo:.4f}, {hi:.4f}]")
        out.check("volume_scaling", abs(fit.slope_vol - d) <= exp["vol_slope_tol"],
                  f"slope {fit.slope_vol:.4f}")
    out.figure("wegner.svg", plotting.wegner_loglog, sweep.rows, fit)


# --- ids ------------------------------------------------------------------------


def cmd_ids(cfg, seed, workers, out):
    exp = cfg["experiment"]
    model = build_model(cfg)
    ls = sorted(int(l) for l in cfg["grid"]["l"])
    m = cfg["grid"]["m"]
    fixed = exp["fixed_coupling"]
    out.start("spectra")
    spectra = {l: sample_spectra(model, model.grid(l, m), exp["samples"], seed, tag,
                                 workers, fixed) for tag, l in enumerate(ls)}
    out.stop("spectra")
    pooled = np.concatenate([s.ravel() for s in spectra.values()])
    curve_E = np.linspace(pooled.min(), np.percentile(pooled, 50), exp["n_energies"])
    probe_E = np.percentile(pooled, exp["percentiles"])
    d = model.d
    rows, curves = [], []
    for l, spec in spectra.items():
        _, N = ids_from_spectra(spec, curve_E, l, d)
        std = sample_std(N)
        curves.append((f"l = {l}", curve_E, N.mean(axis=0), std))
        rows += [{"l": l, "E": e, "mean_N": mu, "std_N": s, "samples": len(N)}
                 for e, mu, s in zip(curve_E, N.mean(axis=0), std)]
    out.table("ids.csv", ["l", "E", "mean_N", "std_N", "samples"], rows)
    out.figure("ids.svg", plotting.ids_curves, curves)

    rng = np.random.default_rng(spawn_seed(seed, 3))
    band = {}
    avg = []
    for l, spec in spectra.items():
        _, N = ids_from_spectra(spec, probe_E, l, d)
        n = len(N)
        std = sample_std(N)
        boots = np.array([sample_std(N[rng.integers(0, n, n)])
                          for _ in range(exp["bootstrap"])]) if n > 1 else None
        lo, hi = (np.percentile(boots, [2.5, 97.5], axis=0) if boots is not None
                  else (std, std))
        band[l] = (std, lo, hi)
        avg += [{"percentile": p, "E": e, "l": l, "std_N": s, "band_lo": a, "band_hi": b}
                for p, e, s, a, b in zip(exp["percentiles"], probe_E, std, lo, hi)]
    out.table("self_averaging.csv", ["percentile", "E", "l", "std_N", "band_lo", "band_hi"], avg)
    if fixed is not None:
        zero = all(np.all(band[l][0] == 0) for l in ls)
        out.check("zero_disorder_std", zero, "fixed coupling gives deterministic counts")
    elif len(ls) >= 2:
        stds = np.array([band[l][0] for l in ls])
        decreasing = bool(np.all(np.diff(stds, axis=0) < 0))
        separated = bool(np.all(band[ls[-1]][2] < band[ls[0]][1]))
        out.check("self_averaging", decreasing and separated,
                  f"std at l={ls[0]}: {np.round(stds[0], 5).tolist()}, "
                  f"l={ls[-1]}: {np.round(stds[-1], 5).tolist()}")


# --- msa ------------------------------------------------------------------------


def _identity_task(args):
    model, l_out, l_in, offset, m, z, seed = args
    grid = GridSpec(model.d, l_out, m)
    coupling, H = model.realize(grid, seed)
    V = H.potential_trace
    phi = smooth_cutoff(GridSpec(model.d, l_in, m), margin=1)
    res = resolvent_identity_residual(V, grid, l_in, offset, z, phi, seed=seed)
    return {"l_outer": l_out, "l_inner": l_in, "offset": offset, "m": m,
            "z_real": z.real, "z_imag": z.imag, "residual": res}


def cmd_msa(cfg, seed, workers, out):
    exp = cfg["experiment"]
    model = build_model(cfg)
    ls = sorted(int(l) for l in cfg["grid"]["l"])
    m = cfg["grid"]["m"]
    mean = model.density.moment(1)
    out.start("decay")
    decay_rows, series, rates = [], [], {}
    for mesh in (m, max(1, m // 2)):
        ref = model.hamiltonian(model.grid(ls[-1], mesh), constant_field(model.box(ls[-1]), mean))
        E = float(eigenvalues(ref).eigenvalues[0]) - exp["energy_offset"]
        norms = []
        for l in ls:
            H = model.hamiltonian(model.grid(l, mesh), constant_field(model.box(l), mean))
            norms.append(good_box_norm(H, E))
            decay_rows.append({"m": mesh, "E": E, "l": l, "norm": norms[-1]})
        rates[mesh] = decay_rate(ls, norms)
        series.append((f"m = {mesh}", ls, norms))
    out.stop("decay")
    out.table("decay.csv", ["m", "E", "l", "norm"], decay_rows)
    out.json("decay_rate.json", {"rates": {str(k): v for k, v in rates.items()}})
    out.figure("decay.svg", plotting.good_box_decay, series)
    r_fine, r_coarse = rates[m], rates[max(1, m // 2)]
    stable = abs(r_fine - r_coarse) <= exp["mesh_tol"] * max(abs(r_fine), abs(r_coarse))
    out.check("good_box_decay", r_fine > 0 and r_coarse > 0 and stable,
              f"rates {r_fine:.5f} (m={m}) and {r_coarse:.5f} (m={max(1, m // 2)})")

    out.start("probability")
    base = model.spectrum_lower_bound()
    prob_rows = []
    for k, offset in enumerate((exp["probability_offset"], 10.0, 2.0, 0.5)):
        est = good_box_probability(model, base - offset, exp["gamma"], exp["probability_l"],
                                   m, exp["samples"], seed=seed, workers=workers, tag=k)
        prob_rows.append({"E": est.E, "gamma": est.gamma, "l": est.l, "p_hat": est.p_hat,
                          "half_width": est.half_width})
    out.stop("probability")
    out.table("good_box.csv", ["E", "gamma", "l", "p_hat", "half_width"], prob_rows)
    out.check("deep_energy_good", prob_rows[0]["p_hat"] == 1.0,
              f"p_hat = {prob_rows[0]['p_hat']} at E = {prob_rows[0]['E']:.6g}")

    out.start("identity")
    rng = np.random.default_rng(spawn_seed(seed, 4))
    tasks = []
    for i in range(exp["identity_instances"]):
        l_out = int(rng.integers(4, 9))
        l_in = int(rng.integers(3, l_out + 1))
        offset = int(rng.integers(0, l_out - l_in + 1))
        mesh = int(rng.choice([2, 4]))
        z = complex(rng.normal(scale=5.0), rng.uniform(0.1, 2.0) * rng.choice([-1, 1]))
        tasks.append((model, l_out, l_in, offset, mesh, z, spawn_seed(seed, 5, i)))
    ident = pmap(_identity_task, tasks, workers)
    out.stop("identity")
    out.table("identity.csv", ["l_outer", "l_inner", "offset", "m", "z_real", "z_imag",
                               "residual"], ident)
    worst = max(r["residual"] for r in ident) if ident else 0.0
    out.check("resolvent_identity", worst <= exp["identity_tol"], f"max residual {worst:.3g}")


# --- spav -----------------------------------------------------------------------


def _spav_task(inst):
    rep = spectral_averaging_check(inst)
    return {"l": inst.l, "m": inst.m, "j": inst.j,
            "alpha": " ".join(repr(v) for v in inst.alpha.alpha.values()),
            "E1": inst.interval[0], "E2": inst.interval[1], "lhs": rep.lhs,
            "lhs_error": rep.lhs_error, "rhs": rep.rhs, "sup_k": rep.sup_k, "holds": rep.holds}


def cmd_spav(cfg, seed, workers, out):
    exp = cfg["experiment"]
    density = build_density(cfg["density"])
    meshes = tuple(int(v) for v in cfg["grid"]["m"])
    rng = np.random.default_rng(spawn_seed(seed, 6))
    out.start("spav")
    instances = [random_spav_instance(rng, density, meshes) for _ in range(exp["instances"])]
    rows = pmap(_spav_task, instances, workers)
    out.stop("spav")
    for i, r in enumerate(rows):
        r["instance"] = i
    out.table("spav.csv", ["instance", "l", "m", "j", "alpha", "E1", "E2", "lhs", "lhs_error",
                           "rhs", "sup_k", "holds"], rows)
    bad = sum(not r["holds"] for r in rows)
    out.check("spectral_averaging", bad == 0, f"{bad} violations in {len(rows)} instances")
    out.figure("spav.svg", plotting.spav_scatter, [r["lhs"] for r in rows],
               [r["rhs"] for r in rows])

    out.start("main")
    main_rows = []
    for i in range(exp["main_instances"]):
        alpha = random_admissible(rng, 1, 2, reach=1)
        l = int(rng.integers(1, 3))
        mesh = int(rng.choice(meshes))
        j = int(rng.integers(0, l))
        phi = rng.normal(size=l * mesh)
        phi /= np.linalg.norm(phi)
        center = float(rng.uniform(-2.0, 10.0))
        width = float(rng.uniform(0.5, 5.0))
        interval = (center - width / 2, center + width / 2)
        rep = main_estimate_check(alpha, density, l, mesh, j, phi, interval,
                                  samples=exp["main_samples"], seed=spawn_seed(seed, 7, i),
                                  workers=workers)
        box = IndexBox.build(1, l, alpha.gamma)
        main_rows.append({"instance": i, "l": l, "m": mesh, "j": j, "E1": interval[0],
                          "E2": interval[1], "lhs": rep.lhs, "half_width": rep.half_width,
                          "rhs": rep.rhs,
                          "norm_B": row_sum_norm(build_transform(alpha, box).B),
                          "holds": rep.holds})
    out.stop("main")
    out.table("main_estimate.csv", ["instance", "l", "m", "j", "E1", "E2", "lhs", "half_width",
                                    "rhs", "norm_B", "holds"], main_rows)
    bad = sum(not r["holds"] for r in main_rows)
    out.check("main_estimate", bad == 0, f"{bad} of {len(main_rows)} instances violate")


COMMANDS = {
    "toeplitz-check": cmd_toeplitz_check,
    "density-examples": cmd_density_examples,
    "wegner": cmd_wegner,
    "ids": cmd_ids,
    "msa": cmd_msa,
    "spav": cmd_spav,
}


def _parser():
    p = argparse.ArgumentParser(prog="alloylab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"alloylab {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="JSON document overriding the defaults")
    p.add_argument("--seed", type=int, default=0, help="base seed (unsigned 64-bit)")
    p.add_argument("--out", metavar="DIR", default="runs", help="parent of the run directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes for sample loops")
    p.add_argument("--smoke", action="store_true", help="reduced sizes for a quick run")
    return p


def run(command, cfg, seed, out="runs", workers=1, smoke=False):
    """Run one command on a resolved configuration. Returns (exit code, run writer)."""
    seed = check_seed(seed)
    h = config_hash(command, cfg, seed)
    writer = RunWriter(out, RunManifest(command, h, seed, __version__, cfg,
                                        workers=workers, smoke=smoke))
    writer.start("total")
    COMMANDS[command](cfg, seed, workers, writer)
    writer.stop("total")
    writer.finish()
    return (EXIT_OK if writer.passed else EXIT_FAIL), writer


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        document = load(args.config) if args.config else None
        cfg = resolve(args.command, document, smoke=args.smoke)
        code, writer = run(args.command, cfg, args.seed, args.out, args.workers, args.smoke)
    except ConfigError as exc:
        print(f"alloylab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AlloyLabError as exc:
        print(f"alloylab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for name, check in writer.manifest.checks.items():
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {name}: {check['detail']}")
    print(f"outputs in {writer.directory}")
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Exit criteria of the laboratory.

Each test prints one ``PASS``/``FAIL`` line. The experiments run through
the same entry point as the command line tool, with the default
(non-smoke) configurations, so the CSV files checked here are the ones a
user would get from ``alloylab <command>``.
"""

import json
import os
import time

import numpy as np
import pytest

from alloylab.cli import run
from alloylab.config import resolve
from alloylab.operator import GridSpec, periodic_laplacian
from alloylab.output import read_table
from alloylab.toeplitz import IndexBox, build_transform, example_one_alpha, row_sum_norm

pytestmark = pytest.mark.acceptance

SEED = 20240611
COMMANDS = ("toeplitz-check", "density-examples", "wegner", "ids", "msa", "spav")


class Run:
    def __init__(self, directory, code, seconds):
        self.directory = directory
        self.code = code
        self.seconds = seconds

    def table(self, name):
        return read_table(os.path.join(self.directory, name))

    def json(self, name):
        with open(os.path.join(self.directory, name)) as fh:
            return json.load(fh)


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """Every command once with the default configuration and one worker."""
    out = tmp_path_factory.mktemp("acceptance")
    done = {}
    for command in COMMANDS:
        start = time.perf_counter()
        code, writer = run(command, resolve(command), SEED, str(out), workers=1)
        done[command] = Run(writer.directory, code, time.perf_counter() - start)
    return done


def report(capsys, number, title, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} [{number:2d}] {title}: {detail}")
    assert passed, detail


def test_01_toeplitz_norm_bound(runs, capsys):
    r = runs["toeplitz-check"]
    rows = r.table("sweep.csv")
    dims = {int(x["d"]) for x in rows}
    residual = max(float(x["residual"]) for x in rows)
    excess = max(float(x["norm_B"]) - float(x["bound"]) for x in rows)
    shape_ok = (len(rows) >= 1000 and dims == {1, 2}
                and max(int(x["offsets"]) for x in rows) <= 5
                and max(int(x["l"]) for x in rows) <= 16)
    passed = shape_ok and residual <= 1e-10 and excess <= 1e-9 and r.seconds < 60
    report(capsys, 1, "Toeplitz norm bound", passed,
           f"{len(rows)} vectors, max |AB-I| {residual:.2e}, max(norm-bound) {excess:.2e}, "
           f"{r.seconds:.1f} s (whole command)")


def test_02_example_one_exact(runs, capsys):
    start = time.perf_counter()
    bad = []
    for l in range(2, 65):
        t = build_transform(example_one_alpha(), IndexBox.build(1, l, example_one_alpha().gamma))
        ones = np.tril(np.ones((l + 1, l + 1)))
        if not (np.array_equal(t.B, ones) and row_sum_norm(t.B) == l + 1):
            bad.append(l)
    table = runs["toeplitz-check"].table("norms.csv")
    from_cli = all(x["entries_exact"] == "true" and float(x["norm_B"]) == int(x["l"]) + 1
                   for x in table) and [int(x["l"]) for x in table] == list(range(2, 65))
    seconds = time.perf_counter() - start
    report(capsys, 2, "Example 1 exact inverse", not bad and from_cli and seconds < 10,
           f"b_jk = [j >= k] and norm = l + 1 for l = 2..64, failures {bad}, {seconds:.2f} s")


def test_03_conditional_density_exact(runs, capsys):
    r = runs["density-examples"]
    rows = [x for x in r.table("lin.csv") if int(x["l"]) <= 8 and x["note"] == ""]
    assert all((int(x["l"]) - int(x["j"])) % 2 == 0 for x in rows)
    worst = max(abs(float(x["rho"]) - (int(x["l"]) - int(x["j"]) + 1)) for x in rows)
    seconds = r.json("manifest.json")["timings_s"]["lin"]
    report(capsys, 3, "Conditional density rho_j(0) = l - j + 1",
           len(rows) > 0 and worst <= 1e-4 and seconds < 300,
           f"{len(rows)} (l, j) pairs, max error {worst:.2e}, {seconds:.1f} s")


def test_04_example_two_divergence(runs, capsys):
    r = runs["density-examples"]
    rows = r.table("divergence.csv")
    rho = np.array([float(x["rho"]) for x in rows])
    probes = [float(x["eta_next"]) for x in rows]
    expected = [1 - 2.0**-m for m in range(1, 11)]
    seconds = r.json("manifest.json")["timings_s"]["divergence"]
    passed = (probes == expected and bool(np.all(np.diff(rho) > 0)) and rho[-1] > 100
              and seconds < 120)
    report(capsys, 4, "Example 2 divergence", passed,
           f"rho(m=1..10) = {rho.round(3).tolist()}, {seconds:.2f} s")


def test_05_gradient_integral_bound(runs, capsys):
    r = runs["density-examples"]
    rows = r.table("gradient.csv")
    worst = max(float(x["value"]) - float(x["bound"]) for x in rows)
    big = max(int(x["L"]) for x in rows)
    seconds = r.json("manifest.json")["timings_s"]["gradient"]
    passed = big <= 6 and worst <= 1e-6 and seconds < 300
    report(capsys, 5, "Gradient integral bound", passed,
           f"{len(rows)} instances (L <= {big}), max(value - bound) {worst:.3e}, {seconds:.1f} s")


def test_06_spectral_averaging(runs, capsys):
    r = runs["spav"]
    rows = r.table("spav.csv")
    bad = sum(x["holds"] != "true" for x in rows)
    nontrivial = sum(float(x["lhs"]) > 0 for x in rows)
    ratio = max(float(x["lhs"]) / float(x["rhs"]) for x in rows if float(x["rhs"]) > 0)
    seconds = r.json("manifest.json")["timings_s"]["spav"]
    passed = len(rows) >= 100 and bad == 0 and seconds < 600
    report(capsys, 6, "Spectral averaging inequality", passed,
           f"{len(rows)} instances ({nontrivial} with lhs > 0), {bad} violations, "
           f"max lhs/rhs {ratio:.3f}, {seconds:.1f} s")


def _wegner_setup(r):
    cfg = r.json("manifest.json")["config"]
    return (cfg["model"]["alpha"] == [1.0, -0.5] and cfg["density"]["name"] == "triangular"
            and cfg["grid"]["l"] == [20, 40, 80] and cfg["grid"]["m"] == 5
            and cfg["experiment"]["samples"] >= 500 and cfg["experiment"]["percentile"] == 5.0)


def test_07_wegner_eps_scaling(runs, capsys):
    r = runs["wegner"]
    fit = r.json("fit.json")["fit"]
    lo, hi = fit["ci_eps"]
    passed = (_wegner_setup(r) and abs(fit["slope_eps"] - 1) <= 0.15 and lo <= 1 <= hi
              and r.seconds < 600)
    report(capsys, 7, "Wegner eps-scaling", passed,
           f"slope {fit['slope_eps']:.4f}, bootstrap CI [{lo:.4f}, {hi:.4f}] "
           f"({fit['bootstrap']} resamples, {fit['cells']} window cells), {r.seconds:.1f} s")


def test_08_wegner_volume_scaling(runs, capsys):
    r = runs["wegner"]
    fit = r.json("fit.json")["fit"]
    lo, hi = fit["ci_vol"]
    passed = _wegner_setup(r) and abs(fit["slope_vol"] - 1) <= 0.2
    report(capsys, 8, "Wegner volume-scaling", passed,
           f"slope {fit['slope_vol']:.4f}, bootstrap CI [{lo:.4f}, {hi:.4f}]")


def test_09_ids_self_averaging(runs, capsys):
    rows = runs["ids"].table("self_averaging.csv")
    ls = sorted({int(x["l"]) for x in rows})
    percentiles = sorted({float(x["percentile"]) for x in rows})
    assert ls == [20, 40, 80] and len(percentiles) == 3
    lines, passed = [], True
    for p in percentiles:
        sel = {int(x["l"]): x for x in rows if float(x["percentile"]) == p}
        std = [float(sel[l]["std_N"]) for l in ls]
        decreasing = all(b < a for a, b in zip(std, std[1:]))
        separated = float(sel[80]["band_hi"]) < float(sel[20]["band_lo"])
        passed &= decreasing and separated
        lines.append(f"E={float(sel[20]['E']):.3f}: " + " > ".join(f"{s:.4f}" for s in std))
    report(capsys, 9, "IDS self-averaging", passed, "; ".join(lines))


def test_10_free_laplacian_spectra(capsys):
    worst = 0.0
    for l, m in [(1, 1), (1, 2), (3, 1), (5, 3), (7, 4), (16, 8), (31, 1), (64, 4), (100, 5),
                 (64, 8), (511, 1), (256, 2), (128, 4)]:
        grid = GridSpec(1, l, m)
        n = l * m
        exact = np.sort((2 - 2 * np.cos(2 * np.pi * np.arange(n) / n)) / grid.h**2)
        vals = np.linalg.eigvalsh(periodic_laplacian(grid).toarray())
        worst = max(worst, float(np.abs(vals - exact).max()))
    for l, m in [(2, 2), (4, 4), (8, 2), (16, 1)]:
        grid = GridSpec(2, l, m)
        n = l * m
        one = (2 - 2 * np.cos(2 * np.pi * np.arange(n) / n)) / grid.h**2
        exact = np.sort(np.add.outer(one, one).ravel())
        vals = np.linalg.eigvalsh(periodic_laplacian(grid).toarray())
        worst = max(worst, float(np.abs(vals - exact).max()))
    report(capsys, 10, "Free Laplacian spectra", worst <= 1e-10,
           f"max deviation {worst:.2e} (d=1 up to n=512, d=2 tensor sums)")


def test_11_good_box_decay(runs, capsys):
    r = runs["msa"]
    rates = {int(k): v for k, v in r.json("decay_rate.json")["rates"].items()}
    cfg = r.json("manifest.json")["config"]
    m = cfg["grid"]["m"]
    fine, coarse = rates[m], rates[m // 2]
    rows = r.table("decay.csv")
    passed = (fine > 0 and coarse > 0 and abs(fine - coarse) <= 0.2 * max(fine, coarse)
              and len({x["l"] for x in rows}) >= 3)
    report(capsys, 11, "Good-box decay", passed,
           f"rate {fine:.5f} (m={m}), {coarse:.5f} (m={m // 2}), "
           f"relative difference {abs(fine - coarse) / max(fine, coarse):.2e}")


def test_12_geometric_resolvent_identity(runs, capsys):
    rows = runs["msa"].table("identity.csv")
    worst = max(float(x["residual"]) for x in rows)
    report(capsys, 12, "Geometric resolvent identity", len(rows) >= 50 and worst <= 1e-8,
           f"{len(rows)} nested-box instances, max relative residual {worst:.2e}")


def test_13_determinism(runs, tmp_path_factory, capsys):
    out = tmp_path_factory.mktemp("rerun")
    compared, mismatched = 0, []
    for command in COMMANDS:
        manifest = runs[command].json("manifest.json")
        code, writer = run(command, manifest["config"], manifest["seed"], str(out), workers=3)
        assert os.path.basename(writer.directory) == manifest["config_hash"]
        for name, kind in manifest["outputs"].items():
            if kind != "csv":
                continue
            with open(os.path.join(runs[command].directory, name), "rb") as fh:
                first = fh.read()
            with open(os.path.join(writer.directory, name), "rb") as fh:
                second = fh.read()
            compared += 1
            if first != second:
                mismatched.append(f"{command}/{name}")
    report(capsys, 13, "Determinism across worker counts", compared > 0 and not mismatched,
           f"{compared} CSV files compared (1 vs 3 workers), mismatches {mismatched}")


def test_exit_codes(runs):
    assert all(r.code == 0 for r in runs.values())

"""Acceptance gate: one test per headline criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) and then
asserts. The real-graph check needs the Chameleon files; point DSGM_CHAMELEON at
a directory holding ``chameleon.{edges,features,labels,splits}`` to run it.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE, random_symmetric_01
from gradcheck import gnn_gradient_error, mlp_gradient_error

from dsgm.cli import main as cli_main
from dsgm.concentration import ConcentrationParams
from dsgm.gnn import PreconditionError, graph_filter, interpolate_filter, softmax, spectral_coefficient_check
from dsgm.graphs import from_dense, normalized_adjacency, one_hot, sample_sbm, sbm_probabilities
from dsgm.harness import experiments as ex
from dsgm.harness.config import build_config
from dsgm.harness.reporting import RunResult, Record
from dsgm.kernels import (
    SyntheticPQ,
    discretize_kernel_spectrum,
    eval_kernel,
    induced_kernel,
    piecewise_spectrum,
    sbk_closed_form_spectrum,
)
from dsgm.spectra import eig_sym, gft, igft

pytestmark = pytest.mark.acceptance


def record(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE[name] = (status, detail)
    print(f"{status}  {name}: {detail}")
    assert ok, detail


# --- constructive filter interpolation


def test_interpolation_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst, solved = 0.0, 0
    while solved < 50:
        n = int(rng.integers(3, 13))
        a = random_symmetric_01(rng, n)
        d = eig_sym(a)
        x = rng.standard_normal(n)
        chk = spectral_coefficient_check(d, x)
        if chk.min_gap < 1e-3 or not chk.ok:
            continue
        y = rng.standard_normal(n)
        h = interpolate_filter(a, x, y)
        worst = max(worst, float(np.max(np.abs(graph_filter(a, x, h) - y))))
        solved += 1
    detected = 0
    try:
        interpolate_filter(np.ones((3, 3)) - np.eye(3), np.array([1.0, 2.0, 3.0]), np.ones(3))
    except PreconditionError:
        detected += 1
    path = np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1)
    try:
        interpolate_filter(path, eig_sym(path).vectors[:, 0], np.ones(5))
    except PreconditionError:
        detected += 1
    elapsed = time.perf_counter() - t0
    record(
        "filter interpolation",
        worst <= 1e-6 and detected == 2 and elapsed < 5,
        f"worst residual {worst:.2e} over 50 graphs (<= 1e-6), {detected}/2 preconditions detected, {elapsed:.2f}s (< 5s)",
    )


# --- gradients


def test_gradient_correctness():
    t0 = time.perf_counter()
    gnn = max(gnn_gradient_error(seed, taps=2, layers=2) for seed in range(20))
    mlp = max(mlp_gradient_error(seed) for seed in range(20))
    elapsed = time.perf_counter() - t0
    record(
        "gradient correctness",
        gnn < 1e-4 and mlp < 1e-4 and elapsed < 10,
        f"max relative error GNN {gnn:.1e}, SE classifier {mlp:.1e} (< 1e-4), 20 reps, {elapsed:.2f}s (< 10s)",
    )


# --- kernel spectrum oracle


def test_spectral_oracle():
    t0 = time.perf_counter()
    p, q = 0.8, 0.2
    closed = sbk_closed_form_spectrum(p, q)
    quad = discretize_kernel_spectrum(SyntheticPQ(p, q), 50.0, 4000, n_pairs=2)
    exact = np.array([(p + q) / 3, (p - q) / 3])
    err = float(np.max(np.abs(quad.eigenvalues[:2] - np.array([closed.lambda1, closed.lambda2]))))
    closed_ok = np.allclose([closed.lambda1, closed.lambda2], exact, atol=1e-12)
    elapsed = time.perf_counter() - t0
    record(
        "spectral oracle",
        err <= 1e-3 and closed_ok and elapsed < 30,
        f"closed form {closed.lambda1:.6f}/{closed.lambda2:.6f}, quadrature diff {err:.2e} (<= 1e-3), {elapsed:.2f}s (< 30s)",
    )


# --- two-block expected adjacency


def test_two_block_eigenvectors():
    t0 = time.perf_counter()
    n = 500
    labels = np.repeat([0, 1], n // 2)
    y = one_hot(labels)
    d = eig_sym(sbm_probabilities(y, [[0.5, 0.1], [0.1, 0.5]]))
    v1 = np.full(n, 1 / math.sqrt(n))
    v2 = np.where(labels == 0, 1.0, -1.0) / math.sqrt(n)
    e1 = float(np.max(np.abs(np.abs(d.vectors[:, 0]) - v1)))
    e2 = min(float(np.max(np.abs(d.vectors[:, 1] - s * v2))) for s in (1, -1))
    good = 0
    for seed in range(10):
        vec = eig_sym(sample_sbm(y, [[0.5, 0.1], [0.1, 0.5]], seed).adjacency).vectors[:, 1]
        pred = (vec < 0).astype(int)
        good += max(np.mean(pred == labels), np.mean(pred != labels)) >= 0.99
    elapsed = time.perf_counter() - t0
    record(
        "two-block eigenvectors",
        e1 <= 1e-12 and e2 <= 1e-12 and good >= 9 and elapsed < 10,
        f"eigenvector errors {e1:.1e}/{e2:.1e} (<= 1e-12), sign split >= 99% in {good}/10 seeds (>= 9), {elapsed:.2f}s (< 10s)",
    )


# --- concentration trend


def test_concentration_trend():
    t0 = time.perf_counter()
    cfg = build_config({"experiment": "concentration_study", "n": 1000, "trials": 10, "gammas": (0.002, 0.01), "ks": (1, 2)})
    study = ex.run_concentration_study(cfg)
    med = {(g, k): study.median_gap(g, k) for g in cfg.gammas for k in cfg.ks}
    trend = all(med[(0.002, k)] < med[(0.01, k)] for k in cfg.ks)
    grid = np.linspace(1e-4, 0.05, 200)
    probe = ConcentrationParams(A_w=1.0, c=1.0, gamma=0.01, N=1000)
    monotone = all(ex.bound_is_monotone(study.params, grid, f) and ex.bound_is_monotone(probe, grid, f) for f in ("min", "lipschitz", "grid"))
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"k={k}: {med[(0.002, k)]:.4f} vs {med[(0.01, k)]:.4f}" for k in cfg.ks)
    record(
        "concentration trend",
        trend and monotone and elapsed < 300,
        f"median |gamma lam_k(A) - lam_k(W)| dense vs sparse {detail} (dense must be smaller); "
        f"bounds monotone in gamma: {monotone}; {elapsed:.1f}s (< 300s)",
    )


# --- synthetic benchmark: directional accuracy and determinism


@pytest.fixture(scope="module")
def bench_seed7(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench7")
    t0 = time.perf_counter()
    for name in ("a", "b"):
        assert cli_main(["bench-synthetic", "--seed", "7", "--threads", "1", "--out", str(root / name)]) == 0
    return root, (time.perf_counter() - t0) / 2


def _read_records(path):
    import csv

    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return RunResult([
        Record(float(r["setting"]), r["operator"], r["method"], int(r["trial"]), int(r["replica"]), int(r["split"]),
               float(r["train_acc"]), float(r["test_acc"]))
        for r in rows
    ])


def test_determinism(bench_seed7):
    root, _ = bench_seed7
    same = [name for name in ("records.csv", "summary.csv") if (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()]
    record("determinism", len(same) == 2, f"bench-synthetic --seed 7 twice: {len(same)}/2 CSVs byte-identical")


def test_synthetic_directional(bench_seed7):
    root, elapsed = bench_seed7
    result = _read_records(root / "a" / "records.csv")
    parts, ok = [], True
    trials = len({r.trial for r in result.records})
    for op in ("adj", "norm"):
        means = {}
        for g in (0.002, 0.01):
            se = [r.test_acc for r in result.records if r.setting == g and r.operator == op and r.method == "SE(2)"]
            gnn = [r.test_acc for r in result.records if r.setting == g and r.operator == op and r.method.startswith("GNN")]
            means[g] = (100 * np.mean(se), 100 * np.mean(gnn))
        ok &= means[0.01][1] > means[0.01][0] and means[0.002][0] >= means[0.002][1] - 2.0
        parts.append(f"{op}: dense SE(2) {means[0.002][0]:.2f} vs GNN {means[0.002][1]:.2f}, "
                     f"sparse SE(2) {means[0.01][0]:.2f} vs GNN {means[0.01][1]:.2f}")
    record(
        "synthetic accuracy direction",
        ok and trials >= 10 and elapsed < 1800,
        f"{trials} seeds; " + "; ".join(parts) + f"; {elapsed:.0f}s per run (< 1800s)",
    )


# --- frequency energy


def test_frequency_energy(tmp_path):
    t0 = time.perf_counter()
    cfg = build_config({"experiment": "frequency_analysis", "trials": 5, "variants": ("linear",), "freq_operator": "norm"})
    panels = ex.run_frequency_analysis(cfg, tmp_path)
    dense, sparse = ex.mean_energy(panels, "dense", "linear"), ex.mean_energy(panels, "sparse", "linear")
    elapsed = time.perf_counter() - t0
    record(
        "frequency energy",
        dense > sparse and elapsed < 900,
        f"linear GNN top-2 energy fraction dense {dense:.4f} vs sparse {sparse:.4f} (dense must be larger), 5 seeds, {elapsed:.0f}s (< 900s)",
    )


# --- real graph ordering


def test_real_ordering():
    root = os.environ.get("DSGM_CHAMELEON")
    files = {k: Path(root or ".") / f"chameleon.{k}" for k in ("edges", "features", "labels", "splits")}
    if not root or not all(p.is_file() for p in files.values()):
        ACCEPTANCE["real-graph ordering"] = ("SKIP", "skipped: Chameleon files not provided (set DSGM_CHAMELEON)")
        pytest.skip("Chameleon files not provided")
    t0 = time.perf_counter()
    cfg = build_config({"experiment": "real_benchmark", **{k: str(v) for k, v in files.items()}})
    result = ex.run_real_benchmark(cfg)

    def mean(setting, op, method):
        return 100 * result.lookup(setting, op, method).mean

    drop = {m: mean(0.7, "norm", m) for m in ("GNN(non)", "SE(150)", "SE(200)")}
    orig = {m: mean(0.0, "adj", m) for m in result.methods()}
    ok = drop["GNN(non)"] >= max(drop["SE(150)"], drop["SE(200)"]) + 5 and orig["SE(150)"] >= max(orig.values()) - 3
    elapsed = time.perf_counter() - t0
    record(
        "real-graph ordering",
        ok and elapsed < 7200,
        f"Drop(70) norm GNN(non) {drop['GNN(non)']:.2f} vs SE {drop['SE(150)']:.2f}/{drop['SE(200)']:.2f}; "
        f"original adj SE(150) {orig['SE(150)']:.2f} vs best {max(orig.values()):.2f}; {elapsed:.0f}s",
    )


# --- invariants


def test_invariant_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    failures = []
    kernel = SyntheticPQ(0.8, 0.2)
    u = rng.uniform(-20, 20, 2000)
    v = rng.uniform(-20, 20, 2000)
    if not np.array_equal(eval_kernel(kernel, u, v), eval_kernel(kernel, v, u)):
        failures.append("kernel symmetry")
    for _ in range(200):
        n = int(rng.integers(1, 41))
        a = random_symmetric_01(rng, n, rng.uniform(0.1, 0.9))
        for s in (a, normalized_adjacency(from_dense(a)).toarray()):
            d = eig_sym(s)
            if np.max(np.abs(d.vectors.T @ d.vectors - np.eye(n))) > 1e-8:
                failures.append("orthonormality")
            sig = rng.standard_normal(n)
            c = gft(d.vectors, sig)
            if abs(np.linalg.norm(c) - np.linalg.norm(sig)) > 1e-10 or np.max(np.abs(igft(d.vectors, c) - sig)) > 1e-10:
                failures.append("transform isometry")
        z = rng.standard_normal((n, 3)) * rng.uniform(0.1, 500)
        if np.max(np.abs(softmax(z).sum(1) - 1)) > 1e-12:
            failures.append("softmax normalization")
    for n in range(2, 21):
        a = random_symmetric_01(rng, n)
        gamma = rng.uniform(0.01, 1.0)
        spectrum = piecewise_spectrum(induced_kernel(a, gamma))
        ref = gamma * np.linalg.eigvalsh(a[: n - 1, : n - 1])
        if not np.allclose(np.sort(spectrum.eigenvalues), np.sort(ref), atol=1e-10):
            failures.append(f"induced-kernel scaling n={n}")
    elapsed = time.perf_counter() - t0
    record(
        "invariant suites",
        not failures and elapsed < 60,
        f"{len(set(failures))} failing invariant families {sorted(set(failures))}, {elapsed:.1f}s (< 60s)",
    )

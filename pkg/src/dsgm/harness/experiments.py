"""Experiment pipelines: synthetic and real benchmarks, frequency responses,
the concentration study and the filter-interpolation demo.

Every random draw comes from ``make_rng(seed, trial, stream)`` with a fixed
stream id per purpose, so results do not depend on execution order or on the
number of workers.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..concentration import (
    ConcentrationParams,
    constant_beta,
    empirical_gap,
    eigenvalue_bound,
    fit_beta,
    graph_spectrum,
    write_gap_csv,
)
from ..gnn import (
    GnnConfig,
    PreconditionError,
    graph_filter,
    interpolate_filter,
    spectral_coefficient_check,
    train_gnn,
    train_se_classifier,
)
from ..graphs import (
    drop_edges,
    expected_adjacency_dsgm,
    graph_operator,
    make_rng,
    one_hot,
    sample_dsgm,
    sample_gaussian_mixture_features,
)
from ..kernels import SyntheticPQ, lipschitz_estimate, sbk_closed_form_spectrum, tail_mass
from ..spectra import eig_sym, feature_aware_embedding, model_frequency_response, top_energy_fraction, write_frequency_csv
from .config import ExperimentConfig, build_config
from .datasets import community_split, load_dataset
from .reporting import Record, RunResult, run_jobs

# stream ids for make_rng(seed, trial, stream)
GRAPH, FEATURES, SPLIT, TRAIN, DROP, INTERP = 1, 2, 3, 4, 5, 6


@dataclass(frozen=True)
class SyntheticInstance:
    graph: object
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    test: np.ndarray
    inputs: np.ndarray


def synthetic_instance(cfg: ExperimentConfig, gamma: float, trial: int) -> SyntheticInstance:
    """DSGM graph from the power-law kernel, Gaussian-mixture features and a 50/50 split per community."""
    kernel = SyntheticPQ(cfg.p, cfg.q)
    graph = sample_dsgm(kernel, cfg.n, gamma, make_rng(cfg.seed, trial, GRAPH))
    labels = one_hot(kernel.community(graph.latent), 2)
    m = cfg.mean
    cov = cfg.feature_var * np.eye(2)
    x = sample_gaussian_mixture_features(labels, [[m, m], [-m, -m]], [cov, cov], make_rng(cfg.seed, trial, FEATURES))
    split = community_split(labels, make_rng(cfg.seed, trial, SPLIT))
    inputs = masked_inputs(x, split.train) if cfg.mask_features else x
    return SyntheticInstance(graph, x, labels, split.train, split.test, inputs)


def masked_inputs(x, train_idx) -> np.ndarray:
    """Features of training nodes only; other rows are zero."""
    out = np.zeros_like(x)
    out[train_idx] = x[train_idx]
    return out


def scaled_operator(graph, kind: str):
    """Operator fed to the models, with its full eigendecomposition.

    The adjacency is divided by its spectral radius so gradient descent
    behaves the same on both operators; this rescales the filter taps but
    leaves the function class unchanged.
    """
    s = graph_operator(graph, kind)
    decomp = eig_sym(s)
    if kind == "adj":
        rho = float(np.max(np.abs(decomp.values))) if decomp.values.size else 0.0
        if rho > 0:
            s = sp.csr_array(s / rho)
            decomp = type(decomp)(decomp.values / rho, decomp.vectors)
    return s, decomp


def gnn_config(cfg: ExperimentConfig, variant: str, operator: str, lr: float | None = None) -> GnnConfig:
    return GnnConfig(
        layers=cfg.gnn_layers,
        taps=cfg.gnn_taps,
        hidden=(cfg.gnn_hidden,) * cfg.gnn_layers,
        activation="prelu" if variant == "nonlinear" else "identity",
        dropout=cfg.dropout,
        lr=cfg.gnn_lr if lr is None else lr,
        epochs=cfg.epochs,
        tol=cfg.tol,
        patience=cfg.patience,
        operator=operator,
    )


def gnn_label(variant: str) -> str:
    return "GNN(lin)" if variant == "linear" else "GNN(non)"


def _final_accuracies(result):
    last = result.history[-1]
    if result.best_epoch is not None:
        best = result.history[result.best_epoch]
        return best.train_acc, best.test_acc
    return last.train_acc, last.test_acc


# ---------------------------------------------------------------------------
# Synthetic benchmark


def _synthetic_job(job):
    cfg_dict, gamma, trial = job
    cfg = build_config(cfg_dict)
    inst = synthetic_instance(cfg, gamma, trial)
    records = []
    for op in cfg.operators:
        s, decomp = scaled_operator(inst.graph, op)
        for j, k in enumerate(cfg.se_dims):
            t0 = time.perf_counter()
            emb = feature_aware_embedding(decomp, inst.inputs, k, cfg.kappa)
            res = train_se_classifier(
                emb, inst.labels, inst.train, hidden=cfg.se_hidden, lr=cfg.se_lr, epochs=cfg.epochs,
                dropout=cfg.dropout, seed=make_rng(cfg.seed, trial, TRAIN, 100 + j),
                tol=cfg.tol, patience=cfg.patience, test_idx=inst.test,
            )
            tr, te = _final_accuracies(res)
            records.append(Record(gamma, op, f"SE({k})", trial, 0, 0, tr, te, time.perf_counter() - t0))
        for j, variant in enumerate(cfg.variants):
            t0 = time.perf_counter()
            res = train_gnn(
                gnn_config(cfg, variant, op), s, inst.inputs, inst.labels, inst.train,
                make_rng(cfg.seed, trial, TRAIN, 200 + j), test_idx=inst.test,
            )
            tr, te = _final_accuracies(res)
            records.append(Record(gamma, op, gnn_label(variant), trial, 0, 0, tr, te, time.perf_counter() - t0))
    return records


def run_synthetic_benchmark(cfg: ExperimentConfig) -> RunResult:
    """SE(K) and GNN test accuracy for every gamma, operator and trial."""
    cfg.validate()
    jobs = [(cfg.as_dict(), g, t) for g in cfg.gammas for t in range(cfg.trials)]
    out = run_jobs(_synthetic_job, jobs, cfg.workers, cfg.threads)
    return RunResult([r for recs, _ in out for r in recs])


# ---------------------------------------------------------------------------
# Frequency responses


@dataclass(frozen=True)
class FrequencyPanel:
    setting: str
    gamma: float
    variant: str
    trial: int
    top2_fraction: float
    test_acc: float


def _setting_names(gammas):
    lo, hi = min(gammas), max(gammas)
    return {g: ("dense" if g == lo else "sparse" if g == hi else f"gamma{g:g}") for g in gammas}


def _frequency_job(job):
    cfg_dict, gamma, trial, name, out_dir = job
    cfg = build_config(cfg_dict)
    inst = synthetic_instance(cfg, gamma, trial)
    op = cfg.freq_operator
    s, decomp = scaled_operator(inst.graph, op)
    panels = []
    for j, variant in enumerate(cfg.variants):
        res = train_gnn(
            gnn_config(cfg, variant, op), s, inst.inputs, inst.labels, inst.train,
            make_rng(cfg.seed, trial, TRAIN, 200 + j), test_idx=inst.test,
        )
        coeffs = model_frequency_response(res.model, decomp, inst.inputs, s)
        if trial == 0 and out_dir is not None:
            write_frequency_csv(Path(out_dir) / f"freq_{name}_{variant}.csv", decomp, coeffs)
        panels.append(FrequencyPanel(name, gamma, variant, trial, top_energy_fraction(decomp, coeffs, 2), _final_accuracies(res)[1]))
    return panels


def run_frequency_analysis(cfg: ExperimentConfig, out_dir) -> list:
    """Graph Fourier coefficients of trained GNN outputs.

    Writes ``freq_<setting>_<variant>.csv`` for trial 0 (one row per
    eigenvalue, decreasing) and ``freq_energy.csv`` with the share of output
    energy on the two largest eigenvalues for every trial.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = _setting_names(cfg.gammas)
    jobs = [(cfg.as_dict(), g, t, names[g], str(out_dir)) for g in cfg.gammas for t in range(cfg.trials)]
    panels = [p for ps, _ in run_jobs(_frequency_job, jobs, cfg.workers, cfg.threads) for p in ps]
    with open(out_dir / "freq_energy.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "gamma", "variant", "trial", "top2_fraction", "test_acc"])
        for p in panels:
            w.writerow([p.setting, repr(p.gamma), p.variant, p.trial, repr(p.top2_fraction), repr(p.test_acc)])
    return panels


def mean_energy(panels, setting: str, variant: str) -> float:
    vals = [p.top2_fraction for p in panels if p.setting == setting and p.variant == variant]
    return float(np.mean(vals)) if vals else math.nan


# ---------------------------------------------------------------------------
# Concentration study


@dataclass(frozen=True)
class ConcentrationStudy:
    rows: list
    sampling_gap: list
    beta_fit: float
    params: ConcentrationParams

    def median_gap(self, gamma: float, k: int, field: str = "adjacency_eigenvalue_gap") -> float:
        vals = [getattr(r, field) for g, _, r in self.rows if math.isclose(g, gamma) and r.k == k]
        return float(np.median(vals))


def admissible_c(n: int, gammas) -> float:
    """Largest truncation radius inside every latent window: ``min floor(N/2) gamma - gamma/2``."""
    return float(min((n // 2) * g - g / 2 for g in gammas))


def run_concentration_study(cfg: ExperimentConfig, out_path=None) -> ConcentrationStudy:
    """Eigenvalue and eigenfunction gaps with the evaluated bounds, per gamma and trial.

    The bound uses one truncation radius ``c`` for all gammas (``bound_c`` or
    the largest admissible one), so the bound columns depend on gamma only.
    ``lambda_gap_sampling`` is ``|gamma lam_k(A) - gamma lam_k(P)|`` with ``P``
    the expected adjacency: the sampling part of the gap, without the
    truncation to the latent window.
    """
    cfg.validate()
    kernel = SyntheticPQ(cfg.p, cfg.q)
    c = cfg.bound_c if cfg.bound_c > 0 else admissible_c(cfg.n, cfg.gammas)
    base = ConcentrationParams(
        A_w=lipschitz_estimate(kernel, c), c=c, gamma=cfg.gammas[0], N=cfg.n, chi=cfg.chi,
        epsilon=tail_mass(kernel, c),
    )
    closed = sbk_closed_form_spectrum(cfg.p, cfg.q, kernel.theta)
    reach = max(admissible_c(cfg.n, [g]) for g in cfg.gammas) + max(cfg.gammas)
    spectrum = closed.sample(np.linspace(-reach, reach, 40001), reach)
    k_max = max(cfg.ks)
    expected = {}
    rows, sampling = [], []
    for g in cfg.gammas:
        if g not in expected:
            p_vals = np.linalg.eigvalsh(expected_adjacency_dsgm(kernel, cfg.n, g))
            expected[g] = g * p_vals[np.argsort(-np.abs(p_vals), kind="stable")][:k_max]
        for t in range(cfg.trials):
            graph = sample_dsgm(kernel, cfg.n, g, make_rng(cfg.seed, t, GRAPH))
            gs = graph_spectrum(graph, g, k_max)
            for k in cfg.ks:
                rep = empirical_gap(spectrum, graph, k, g, base, k_max=k_max, cache=gs)
                rows.append((g, t, rep))
                sampling.append(abs(float(gs.adjacency_values[k - 1]) - float(expected[g][k - 1])))
    beta = fit_beta([(g, cfg.n, r) for g, _, r in rows], base)
    if out_path is not None:
        write_gap_csv(out_path, rows, {"lambda_gap_sampling": sampling})
    return ConcentrationStudy(rows, sampling, beta, base)


def bound_is_monotone(params: ConcentrationParams, gammas, form: str = "min") -> bool:
    from dataclasses import replace

    vals = [eigenvalue_bound(replace(params, gamma=g), form) for g in sorted(gammas)]
    return all(b >= a for a, b in zip(vals, vals[1:]))


def check_self_consistency(study: ConcentrationStudy) -> bool:
    """Every measured gap within its bound once beta is set to the fitted value."""
    from dataclasses import replace

    from ..concentration import eigenvector_bound

    p0 = replace(study.params, beta=constant_beta(study.beta_fit))
    for g, _, r in study.rows:
        p = replace(p0, gamma=g)
        if r.eigenvalue_gap > eigenvalue_bound(p):
            return False
        if r.delta_k > 0 and r.eigenfunction_gap > eigenvector_bound(p, r.delta_k):
            return False
    return True


# ---------------------------------------------------------------------------
# Real-graph benchmark


def _real_job(job):
    cfg_dict, fraction, fi, replica = job
    cfg = build_config(cfg_dict)
    ds = load_dataset(cfg.edges, cfg.features, cfg.labels, cfg.splits)
    graph = ds.graph if fraction == 0 else drop_edges(ds.graph, fraction, make_rng(cfg.seed, replica, DROP, fi))
    records = []
    for op in cfg.operators:
        s, decomp = scaled_operator(graph, op)
        for sid, split in enumerate(ds.splits[: cfg.max_splits]):
            x = masked_inputs(ds.features, split.train) if cfg.real_mask_features else ds.features
            for j, k in enumerate(cfg.real_se_dims):
                t0 = time.perf_counter()
                emb = feature_aware_embedding(decomp, x, k, min(k, min(x.shape)))
                res = train_se_classifier(
                    emb, ds.labels, split.train, hidden=cfg.se_hidden, lr=cfg.real_lr, epochs=cfg.epochs,
                    dropout=cfg.dropout, seed=make_rng(cfg.seed, replica, TRAIN, sid, 100 + j),
                    tol=cfg.tol, patience=cfg.patience, test_idx=split.test, val_idx=split.val,
                )
                tr, te = _final_accuracies(res)
                records.append(Record(fraction, op, f"SE({k})", 0, replica, sid, tr, te, time.perf_counter() - t0))
            for j, variant in enumerate(cfg.variants):
                t0 = time.perf_counter()
                res = train_gnn(
                    gnn_config(cfg, variant, op, cfg.real_lr), s, x, ds.labels, split.train,
                    make_rng(cfg.seed, replica, TRAIN, sid, 200 + j), test_idx=split.test, val_idx=split.val,
                )
                tr, te = _final_accuracies(res)
                records.append(Record(fraction, op, gnn_label(variant), 0, replica, sid, tr, te, time.perf_counter() - t0))
    return records


def run_real_benchmark(cfg: ExperimentConfig) -> RunResult:
    """Test accuracy on a real graph and on copies with a fraction of edges removed.

    Fraction 0 is the original graph (one replica); every other fraction gets
    ``replicas`` independently sparsified copies. Splits are the dataset's
    own, fixed across replicas; the model from the epoch with the best
    validation accuracy is scored.
    """
    cfg.validate()
    jobs = []
    for fi, f in enumerate(cfg.drop_fractions):
        for r in range(1 if f == 0 else cfg.replicas):
            jobs.append((cfg.as_dict(), f, fi, r))
    out = run_jobs(_real_job, jobs, cfg.workers, cfg.threads)
    return RunResult([r for recs, _ in out for r in recs])


# ---------------------------------------------------------------------------
# Filter interpolation demo


@dataclass(frozen=True)
class InterpolationCase:
    instance: int
    n: int
    min_gap: float
    min_coefficient: float
    residual: float
    status: str


def _random_case(cfg: ExperimentConfig, rng):
    """Random graph and input whose eigen gaps and spectral coefficients clear ``separation``."""
    for _ in range(10000):
        n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
        upper = np.triu(rng.random((n, n)) < cfg.edge_prob, 1)
        a = (upper | upper.T).astype(float)
        decomp = eig_sym(a)
        rho = float(np.max(np.abs(decomp.values)))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        chk = spectral_coefficient_check(decomp, x)
        if rho > 0 and chk.min_gap >= cfg.separation * rho and chk.min_coefficient >= cfg.separation:
            return a, x, y, chk
    raise RuntimeError("could not draw a well-separated instance; lower `separation`")


def interpolation_case(instance: int, a, x, y) -> InterpolationCase:
    a = np.asarray(a, dtype=float)
    decomp = eig_sym(a)
    chk = spectral_coefficient_check(decomp, x)
    try:
        h = interpolate_filter(a, x, y)
    except PreconditionError as exc:
        return InterpolationCase(instance, a.shape[0], chk.min_gap, chk.min_coefficient, math.nan, f"precondition: {exc}")
    resid = float(np.max(np.abs(graph_filter(a, x, h) - y)) / max(1.0, float(np.max(np.abs(y)))))
    return InterpolationCase(instance, a.shape[0], chk.min_gap, chk.min_coefficient, resid, "ok")


def run_interpolate_demo(cfg: ExperimentConfig, out_path=None) -> list:
    """Exact single-filter interpolation on random small graphs.

    Residuals are ``max|H(A) x - y| / max(1, max|y|)``. Two forced cases
    follow the random ones: the triangle (repeated eigenvalue) and an input
    equal to the leading eigenvector of a path (orthogonal to the others).
    Failures are reported, never raised.
    """
    cases = []
    for i in range(cfg.instances):
        a, x, y, _ = _random_case(cfg, make_rng(cfg.seed, i, INTERP))
        cases.append(interpolation_case(i, a, x, y))
    k3 = np.ones((3, 3)) - np.eye(3)
    rng = make_rng(cfg.seed, cfg.instances, INTERP)
    cases.append(interpolation_case(cfg.instances, k3, rng.standard_normal(3), rng.standard_normal(3)))
    path = np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1)
    v1 = eig_sym(path).vectors[:, 0]
    cases.append(interpolation_case(cfg.instances + 1, path, v1, rng.standard_normal(5)))
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["instance", "n", "min_gap", "min_coefficient", "residual", "status"])
            for c in cases:
                w.writerow([c.instance, c.n, repr(c.min_gap), repr(c.min_coefficient), repr(c.residual), c.status])
    return cases

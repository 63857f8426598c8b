"""Command-line entry point: ``dsgm <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .harness import experiments as ex
from .harness.config import ConfigError, format_config, load_config
from .harness.reporting import format_table, limited_threads, write_manifest, write_records_csv, write_summary_csv

COMMANDS = {
    "sample": "sample a DSGM graph and write its edge list and latent grid",
    "spectra": "kernel spectrum (closed form vs quadrature) and the spectrum of a graph",
    "concentration": "eigenvalue/eigenfunction gaps against the concentration bounds",
    "train": "train one GNN on a synthetic instance and save the model",
    "bench-synthetic": "SE vs GNN accuracy on dense and sparse synthetic graphs",
    "bench-real": "SE vs GNN accuracy on a real graph and sparsified copies",
    "freq": "graph Fourier coefficients of trained GNN outputs",
    "interpolate": "exact single-filter interpolation on random small graphs",
}


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsgm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--operator", choices=("adj", "norm"), help="restrict to one graph operator")
        p.add_argument("--threads", type=int, help="BLAS threads per worker (default 1)")
        p.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
        p.add_argument("--trials", type=int, help="number of seeds per setting")
        p.add_argument(
            "--set", dest="overrides", action="append", type=_key_value, default=[], metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
        if name == "spectra":
            p.add_argument("--graph", help="edge list whose operator spectrum is written as well")
            p.add_argument("--top", type=int, default=10, help="number of eigenvalues to report")
        if name == "bench-real":
            for key in ("edges", "features", "labels", "splits"):
                p.add_argument(f"--{key}", help=f"{key} file")
    return parser


def _config_from_args(args, experiment):
    overrides = dict(args.overrides)
    overrides["experiment"] = experiment
    for key in ("seed", "out", "threads", "workers", "trials"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.operator is not None:
        overrides["operators"] = (args.operator,)
        overrides["freq_operator"] = args.operator
    for key in ("edges", "features", "labels", "splits"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return load_config(args.config, overrides)


def _finish(cfg, out, t0, outputs, extra=None):
    manifest = out / "manifest.json"
    write_manifest(manifest, cfg.as_dict(), cfg.seed, time.perf_counter() - t0, outputs, extra)
    (out / "config.txt").write_text(format_config(cfg))
    print(f"wrote {', '.join(str(p) for p in outputs)} and {manifest}")


def cmd_sample(cfg, out, args):
    from .graphs import degree_summary, make_rng, sample_dsgm, write_edge_list
    from .kernels import SyntheticPQ

    outputs = []
    for g in cfg.gammas:
        graph = sample_dsgm(SyntheticPQ(cfg.p, cfg.q), cfg.n, g, make_rng(cfg.seed, 0, ex.GRAPH))
        path = out / f"graph_gamma{g:g}.edges"
        write_edge_list(graph, path)
        lat = out / f"graph_gamma{g:g}.latent.csv"
        np.savetxt(lat, graph.latent, fmt="%.17g")
        d = degree_summary(graph)
        print(f"gamma={g:g}: n={graph.n} edges={graph.n_edges} mean degree={d.mean:.2f} isolated={d.isolated}")
        outputs += [path, lat]
    return outputs, None


def cmd_spectra(cfg, out, args):
    from .graphs import graph_operator, read_edge_list
    from .kernels import SyntheticPQ, discretize_kernel_spectrum, sbk_closed_form_spectrum
    from .spectra import eig_sym

    kernel = SyntheticPQ(cfg.p, cfg.q)
    closed = sbk_closed_form_spectrum(cfg.p, cfg.q, kernel.theta)
    quad = discretize_kernel_spectrum(kernel, 50.0, 4000, n_pairs=2)
    path = out / "kernel_spectrum.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "closed_form", "quadrature", "abs_diff"])
        for k, (a, b) in enumerate(zip([closed.lambda1, closed.lambda2], quad.eigenvalues), 1):
            w.writerow([k, repr(float(a)), repr(float(b)), repr(abs(float(a) - float(b)))])
            print(f"lambda_{k}: closed form {a:.6f}  quadrature {b:.6f}")
    outputs = [path]
    if args.graph:
        graph = read_edge_list(args.graph)
        for op in cfg.operators:
            d = eig_sym(graph_operator(graph, op))
            gpath = out / f"graph_spectrum_{op}.csv"
            with open(gpath, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["index", "eigenvalue"])
                for i, v in enumerate(d.values[: args.top]):
                    w.writerow([i, repr(float(v))])
            outputs.append(gpath)
    return outputs, None


def cmd_concentration(cfg, out, args):
    path = out / "concentration.csv"
    study = ex.run_concentration_study(cfg, path)
    for g in cfg.gammas:
        for k in cfg.ks:
            print(
                f"gamma={g:g} k={k}: median |gamma lam_k(A) - lam_k(W)| = {study.median_gap(g, k):.5f}, "
                f"median eigenfunction gap = {study.median_gap(g, k, 'eigenfunction_gap'):.4f}"
            )
    print(f"fitted beta (self-consistency) = {study.beta_fit:.4g}")
    extra = {"beta_fit": study.beta_fit, "bound_c": study.params.c, "A_w": study.params.A_w, "epsilon": study.params.epsilon}
    return [path], extra


def cmd_train(cfg, out, args):
    from .gnn import save_model, train_gnn, write_history_csv
    from .graphs import make_rng

    gamma = cfg.gammas[0]
    op = cfg.operators[0]
    inst = ex.synthetic_instance(cfg, gamma, 0)
    s, _ = ex.scaled_operator(inst.graph, op)
    outputs = []
    for j, variant in enumerate(cfg.variants):
        res = train_gnn(
            ex.gnn_config(cfg, variant, op), s, inst.inputs, inst.labels, inst.train,
            make_rng(cfg.seed, 0, ex.TRAIN, 200 + j), test_idx=inst.test,
        )
        hist, model = out / f"history_{variant}.csv", out / f"model_{variant}.npz"
        write_history_csv(res.history, hist)
        save_model(res.model, model)
        last = res.history[-1]
        print(f"{ex.gnn_label(variant)} on {op}, gamma={gamma:g}: {len(res.history)} epochs, test acc {last.test_acc:.4f}")
        outputs += [hist, model]
    return outputs, None


def _bench_outputs(result, out, label):
    rec, summ = out / "records.csv", out / "summary.csv"
    write_records_csv(result, rec)
    write_summary_csv(result, summ)
    print(format_table(result, label))
    return [rec, summ]


def cmd_bench_synthetic(cfg, out, args):
    return _bench_outputs(ex.run_synthetic_benchmark(cfg), out, "gamma"), None


def cmd_bench_real(cfg, out, args):
    missing = [k for k in ("edges", "features", "labels", "splits") if not getattr(cfg, k) or not Path(getattr(cfg, k)).is_file()]
    if missing:
        print(f"skipped: dataset files not provided ({', '.join(missing)})", file=sys.stderr)
        return [], {"skipped": True}
    return _bench_outputs(ex.run_real_benchmark(cfg), out, "drop"), None


def cmd_freq(cfg, out, args):
    panels = ex.run_frequency_analysis(cfg, out)
    names = sorted({p.setting for p in panels})
    for name in names:
        for v in cfg.variants:
            print(f"{name} {v}: mean top-2 energy fraction {ex.mean_energy(panels, name, v):.4f}")
    return sorted(out.glob("freq_*.csv")), None


def cmd_interpolate(cfg, out, args):
    path = out / "interpolate.csv"
    cases = ex.run_interpolate_demo(cfg, path)
    ok = [c for c in cases if c.status == "ok"]
    worst = max((c.residual for c in ok), default=float("nan"))
    print(f"{len(ok)} instances solved, worst residual {worst:.3e}")
    for c in cases:
        if c.status != "ok":
            print(f"instance {c.instance} (n={c.n}): {c.status}")
    return [path], {"worst_residual": worst}


HANDLERS = {
    "sample": cmd_sample,
    "spectra": cmd_spectra,
    "concentration": cmd_concentration,
    "train": cmd_train,
    "bench-synthetic": cmd_bench_synthetic,
    "bench-real": cmd_bench_real,
    "freq": cmd_freq,
    "interpolate": cmd_interpolate,
}

EXPERIMENT_OF = {
    "concentration": "concentration_study",
    "bench-real": "real_benchmark",
    "freq": "frequency_analysis",
    "interpolate": "interpolate_demo",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args, EXPERIMENT_OF.get(args.command, "synthetic_benchmark"))
        cfg.validate(check_files=False)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with limited_threads(cfg.threads):
        outputs, extra = HANDLERS[args.command](cfg, out, args)
    _finish(cfg, out, t0, outputs, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())

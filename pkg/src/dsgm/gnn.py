"""Polynomial graph filters, graph neural networks and the SE classifier.

Everything is numpy with hand-written backpropagation; training is full-batch
gradient descent on the masked cross-entropy. Operators may be dense arrays or
scipy sparse matrices and are assumed symmetric.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .graphs import make_rng
from .spectra import SpectralDecomposition, eig_sym

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


class PreconditionError(ValueError):
    """An assumption of exact filter interpolation does not hold."""


# ---------------------------------------------------------------------------
# Graph filters


def _dense(m):
    return m.toarray() if sp.issparse(m) else m


def graph_filter(s, x, taps):
    """``sum_k S^k X H_k`` evaluated by Horner's rule, without forming ``S^k``.

    ``x`` may be a vector with scalar taps, or an ``N x D`` matrix with
    ``D x G`` tap matrices.
    """
    x = np.asarray(_dense(x))
    if x.dtype != np.longdouble:
        x = x.astype(float)
    taps = list(taps)
    if not taps:
        raise ValueError("need at least one tap")
    if x.ndim == 1:
        out = taps[-1] * x
        for h in reversed(taps[:-1]):
            out = s @ out + h * x
        return out
    taps = [np.atleast_2d(np.asarray(h, dtype=float)) for h in taps]
    for h in taps:
        if h.shape[0] != x.shape[1]:
            raise ValueError(f"tap shape {h.shape} does not match {x.shape[1]} input features")
    out = x @ taps[-1]
    for h in reversed(taps[:-1]):
        out = s @ out + x @ h
    return out


def _powers(s, x, k):
    out = [x]
    for _ in range(1, k):
        out.append(np.asarray(_dense(s @ out[-1])))
    return out


# ---------------------------------------------------------------------------
# Models


@dataclass
class GnnConfig:
    layers: int = 2
    taps: int = 3
    hidden: tuple = (32, 32)
    activation: str = "prelu"
    prelu_init: float = 0.25
    dropout: float = 0.5
    lr: float = 0.02
    epochs: int = 200
    tol: float = 1e-5
    patience: int = 10
    operator: str = "norm"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.layers < 1 or self.taps < 1:
            raise ValueError("layers and taps must be at least 1")
        if len(self.hidden) != self.layers or min(self.hidden) < 1:
            raise ValueError("need one positive hidden width per layer")
        if self.activation not in ("prelu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class GnnModel:
    filters: list  # per layer: array (taps, F_in, F_out)
    slopes: np.ndarray  # one PReLU slope per layer
    classifier: np.ndarray  # F_L x classes
    activation: str = "prelu"

    def parameters(self) -> dict:
        params = {f"H{i}": h for i, h in enumerate(self.filters)}
        if self.activation == "prelu":
            params["slopes"] = self.slopes
        params["C"] = self.classifier
        return params


def _glorot(rng, fan_in, fan_out, shape):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_gnn(config: GnnConfig, in_dim: int, n_classes: int, rng) -> GnnModel:
    widths = (in_dim, *config.hidden)
    filters = [
        np.stack([_glorot(rng, widths[i], widths[i + 1], (widths[i], widths[i + 1])) for _ in range(config.taps)])
        for i in range(config.layers)
    ]
    slopes = np.full(config.layers, float(config.prelu_init))
    classifier = _glorot(rng, widths[-1], n_classes, (widths[-1], n_classes))
    return GnnModel(filters, slopes, classifier, config.activation)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _prelu(z, a):
    return np.where(z > 0, z, a * z)


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _gnn_forward_cached(model, s, x, dropout=0.0, rng=None, x_powers=None):
    cache = []
    h = x
    k = model.filters[0].shape[0]
    for layer, taps in enumerate(model.filters):
        powers = x_powers if (layer == 0 and x_powers is not None) else _powers(s, h, k)
        z = sum(np.asarray(powers[j] @ taps[j]) for j in range(k))
        out = _prelu(z, model.slopes[layer]) if model.activation == "prelu" else z
        mask = None
        if rng is not None and dropout > 0:
            mask = _dropout_mask(rng, out.shape, dropout)
            out = out * mask
        cache.append((powers, z, mask))
        h = out
    logits = h @ model.classifier
    return logits, h, cache


def gnn_forward(model: GnnModel, s, x, dropout: float = 0.0, rng=None):
    """Return ``(logits, probabilities)``. Dropout is active only when ``rng`` is given."""
    if x.shape[0] != s.shape[0]:
        raise ValueError("feature rows must match the operator size")
    if x.shape[1] != model.filters[0].shape[1]:
        raise ValueError("feature width does not match the first filter bank")
    logits, _, _ = _gnn_forward_cached(model, s, x, dropout, rng)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("non-finite activations")
    return logits, softmax(logits)


def _mask_index(mask, n):
    idx = np.unique(np.asarray(mask, dtype=np.int64))
    if idx.size == 0:
        raise ValueError("training mask is empty")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("mask index out of range")
    return idx


def masked_cross_entropy(probabilities, y, mask) -> float:
    """Mean ``-log p(true class)`` over the masked nodes; probabilities floored at 1e-12."""
    idx = _mask_index(mask, probabilities.shape[0])
    p_true = np.sum(probabilities[idx] * y[idx], axis=1)
    return float(-np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))


def _ce_grad(probs, y, idx):
    """Loss and its gradient with respect to the logits."""
    p_true = np.sum(probs[idx] * y[idx], axis=1)
    loss = float(-np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))
    g = np.zeros_like(probs)
    live = p_true >= PROB_FLOOR
    g[idx[live]] = (probs[idx[live]] - y[idx[live]]) / idx.size
    return loss, g


def gnn_loss_and_grad(model: GnnModel, s, x, y, mask, dropout=0.0, rng=None, x_powers=None):
    """Masked cross-entropy and exact gradients for every parameter in ``model.parameters()``."""
    idx = _mask_index(mask, x.shape[0])
    logits, h_last, cache = _gnn_forward_cached(model, s, x, dropout, rng, x_powers)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("non-finite activations")
    probs = softmax(logits)
    loss, g = _ce_grad(probs, y, idx)
    grads = {"C": h_last.T @ g}
    slope_grads = np.zeros_like(model.slopes)
    dh = g @ model.classifier.T
    for layer in reversed(range(len(model.filters))):
        powers, z, mask_l = cache[layer]
        taps = model.filters[layer]
        if mask_l is not None:
            dh = dh * mask_l
        if model.activation == "prelu":
            neg = z <= 0
            slope_grads[layer] = np.sum(dh * z * neg)
            dz = np.where(neg, model.slopes[layer] * dh, dh)
        else:
            dz = dh
        grads[f"H{layer}"] = np.stack([np.asarray(powers[j].T @ dz) for j in range(taps.shape[0])])
        if layer:
            # sum_j S^j (dz H_j^T), Horner form; S is symmetric
            acc = dz @ taps[-1].T
            for j in range(taps.shape[0] - 2, -1, -1):
                acc = np.asarray(s @ acc) + dz @ taps[j].T
            dh = acc
    if model.activation == "prelu":
        grads["slopes"] = slope_grads
    return loss, grads, probs


# ---------------------------------------------------------------------------
# SE classifier: one hidden layer perceptron


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    slope: np.ndarray  # shape (1,)
    w2: np.ndarray
    b2: np.ndarray
    input_scale: float = 1.0

    def parameters(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "slope": self.slope, "w2": self.w2, "b2": self.b2}


def init_mlp(in_dim, hidden, n_classes, rng, prelu_init=0.25, input_scale=1.0) -> MlpModel:
    return MlpModel(
        _glorot(rng, in_dim, hidden, (in_dim, hidden)),
        np.zeros(hidden),
        np.array([float(prelu_init)]),
        _glorot(rng, hidden, n_classes, (hidden, n_classes)),
        np.zeros(n_classes),
        float(input_scale),
    )


def mlp_forward(model: MlpModel, e, dropout=0.0, rng=None):
    logits, _ = _mlp_forward_cached(model, e, dropout, rng)
    return logits, softmax(logits)


def _mlp_forward_cached(model, e, dropout, rng):
    inp = e * model.input_scale
    z = inp @ model.w1 + model.b1
    h = _prelu(z, model.slope[0])
    mask = None
    if rng is not None and dropout > 0:
        mask = _dropout_mask(rng, h.shape, dropout)
        h = h * mask
    return h @ model.w2 + model.b2, (inp, z, h, mask)


def mlp_loss_and_grad(model: MlpModel, e, y, mask, dropout=0.0, rng=None):
    idx = _mask_index(mask, e.shape[0])
    logits, (inp, z, h, mask_h) = _mlp_forward_cached(model, e, dropout, rng)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("non-finite activations")
    probs = softmax(logits)
    loss, g = _ce_grad(probs, y, idx)
    dh = g @ model.w2.T
    if mask_h is not None:
        dh = dh * mask_h
    neg = z <= 0
    dz = np.where(neg, model.slope[0] * dh, dh)
    grads = {
        "w2": h.T @ g,
        "b2": g.sum(0),
        "slope": np.array([np.sum(dh * z * neg)]),
        "w1": inp.T @ dz,
        "b1": dz.sum(0),
    }
    return loss, grads, probs


# ---------------------------------------------------------------------------
# Training


def accuracy(probabilities, y, idx) -> float:
    """Share of ``idx`` whose argmax (lowest class on ties) matches the label."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return float("nan")
    return float(np.mean(probabilities[idx].argmax(1) == y[idx].argmax(1)))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    val_acc: float = float("nan")


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int | None = None

    def __iter__(self):
        # allows ``model, history = train_gnn(...)``
        yield self.model
        yield self.history


def _gradient_descent(model, step, predict, y, train_idx, lr, epochs, tol, patience, dropout, rng, test_idx, val_idx):
    params = model.parameters()
    history = []
    best = (-1.0, None, None)
    stall = 0
    prev = None
    for epoch in range(epochs):
        loss, grads, _ = step(dropout, rng if dropout > 0 else None)
        if not math.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}")
        for name, g in grads.items():
            params[name] -= lr * g
        probs = predict()
        rec = EpochRecord(
            epoch,
            loss,
            accuracy(probs, y, train_idx),
            accuracy(probs, y, test_idx) if test_idx is not None else float("nan"),
            accuracy(probs, y, val_idx) if val_idx is not None else float("nan"),
        )
        history.append(rec)
        if val_idx is not None and rec.val_acc > best[0]:
            best = (rec.val_acc, epoch, copy.deepcopy(params))
        if prev is not None:
            improvement = (prev - loss) / max(abs(prev), 1e-300)
            stall = stall + 1 if improvement < tol else 0
            if stall >= patience:
                break
        prev = loss
    best_epoch = None
    if best[2] is not None:
        for name, arr in best[2].items():
            params[name][...] = arr
        best_epoch = best[1]
    return history, best_epoch


def train_gnn(config: GnnConfig, s, x, y, mask, seed, *, test_idx=None, val_idx=None) -> TrainResult:
    """Full-batch gradient descent on the masked cross-entropy.

    Stops after ``config.epochs`` or once the relative loss improvement stays
    below ``config.tol`` for ``config.patience`` consecutive epochs. With
    ``val_idx`` the parameters from the epoch with the best validation
    accuracy are restored at the end.
    """
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    y = np.asarray(y, dtype=float)
    train_idx = _mask_index(mask, x.shape[0])
    model = init_gnn(config, x.shape[1], y.shape[1], rng)
    x_powers = _powers(s, x, config.taps)

    def step(dropout, drng):
        return gnn_loss_and_grad(model, s, x, y, train_idx, dropout, drng, x_powers)

    def predict():
        logits, _, _ = _gnn_forward_cached(model, s, x, x_powers=x_powers)
        return softmax(logits)

    history, best = _gradient_descent(
        model, step, predict, y, train_idx, config.lr, config.epochs, config.tol,
        config.patience, config.dropout, rng, test_idx, val_idx,
    )
    return TrainResult(model, history, best)


def train_se_classifier(
    embedding, y, mask, hidden=64, lr=0.02, epochs=200, dropout=0.5, seed=0,
    *, tol=1e-5, patience=10, input_scale=None, test_idx=None, val_idx=None,
) -> TrainResult:
    """Train the one-hidden-layer PReLU perceptron on an embedding.

    ``input_scale`` multiplies the embedding before the first layer. It
    defaults to ``sqrt(N)``: eigenvector entries are ``O(N^-1/2)``, and
    rescaling them to ``O(1)`` keeps plain gradient descent at the usual
    learning rates from stalling.
    """
    e = np.asarray(embedding, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    scale = math.sqrt(e.shape[0]) if input_scale is None else float(input_scale)
    train_idx = _mask_index(mask, e.shape[0])
    model = init_mlp(e.shape[1], hidden, y.shape[1], rng, input_scale=scale)

    def step(dropout, drng):
        return mlp_loss_and_grad(model, e, y, train_idx, dropout, drng)

    def predict():
        return mlp_forward(model, e)[1]

    history, best = _gradient_descent(
        model, step, predict, y, train_idx, lr, epochs, tol, patience, dropout, rng, test_idx, val_idx
    )
    return TrainResult(model, history, best)


# ---------------------------------------------------------------------------
# Checkpoints


def save_model(model, path) -> None:
    """Write every parameter array (with its shape) to an ``.npz`` archive."""
    if isinstance(model, GnnModel):
        arrays = {f"H{i}": h for i, h in enumerate(model.filters)}
        arrays.update(slopes=model.slopes, C=model.classifier)
        meta = {"kind": "gnn", "activation": model.activation}
    else:
        arrays = dict(model.parameters())
        arrays["input_scale"] = np.array([model.input_scale])
        meta = {"kind": "mlp"}
    np.savez(path, __meta__=np.array([f"{k}={v}" for k, v in meta.items()]), **arrays)


def load_model(path):
    with np.load(path) as data:
        meta = dict(item.split("=", 1) for item in data["__meta__"])
        if meta["kind"] == "gnn":
            n_layers = sum(1 for k in data.files if k.startswith("H"))
            return GnnModel(
                [data[f"H{i}"].copy() for i in range(n_layers)],
                data["slopes"].copy(),
                data["C"].copy(),
                meta["activation"],
            )
        return MlpModel(
            data["w1"].copy(), data["b1"].copy(), data["slope"].copy(),
            data["w2"].copy(), data["b2"].copy(), float(data["input_scale"][0]),
        )


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "test_acc"])
        for rec in history:
            w.writerow([rec.epoch, repr(rec.train_loss), repr(rec.train_acc), repr(rec.test_acc)])


# ---------------------------------------------------------------------------
# Exact interpolation with a single polynomial filter


@dataclass(frozen=True)
class CoefficientCheck:
    ok: bool
    min_coefficient: float
    min_gap: float


def spectral_coefficient_check(decomp: SpectralDecomposition, x, tol: float = 1e-10) -> CoefficientCheck:
    """Whether every ``|[V^T x]_i|`` and every eigenvalue gap exceeds ``tol``."""
    coeffs = np.abs(decomp.vectors.T @ np.asarray(x, dtype=float))
    vals = np.sort(decomp.values)
    gap = float(np.min(np.diff(vals))) if vals.size > 1 else math.inf
    min_c = float(coeffs.min())
    return CoefficientCheck(bool(min_c > tol and gap > tol), min_c, gap)


def interpolate_filter(a, x, y, tol: float = 1e-10, refine: int = 3) -> np.ndarray:
    """Taps ``h`` (length ``N``) with ``sum_k h_k A^k x = y``.

    Solves the Krylov system ``[x, Ax, ..., A^{N-1} x] h = y`` by QR with
    column pivoting. The operator is first scaled to unit spectral radius so
    the Krylov columns stay bounded; the taps are rescaled afterwards.

    Raises :class:`PreconditionError` when ``A`` has a repeated eigenvalue or
    ``x`` is (numerically) orthogonal to an eigenvector, since the system is
    singular in either case.
    """
    a = np.asarray(_dense(a), dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = a.shape[0]
    if x.shape != (n,) or y.shape != (n,):
        raise ValueError("x and y must be vectors of length N")
    decomp = eig_sym(a)
    rho = float(np.max(np.abs(decomp.values)))
    scale = rho if rho > 0 else 1.0
    check = spectral_coefficient_check(decomp, x / max(np.linalg.norm(x), 1e-300), tol)
    if check.min_gap <= tol * scale:
        raise PreconditionError(
            f"operator has a repeated eigenvalue (min gap {check.min_gap:.3e}); "
            "distinct eigenvalues are required"
        )
    if check.min_coefficient <= tol:
        raise PreconditionError(
            f"input is orthogonal to an eigenvector (min |V^T x|/|x| = {check.min_coefficient:.3e}); "
            "every spectral coefficient must be nonzero"
        )
    b = a / scale
    cols = [x]
    for _ in range(n - 1):
        cols.append(b @ cols[-1])
    krylov = np.column_stack(cols)
    q, r, piv = scipy.linalg.qr(krylov, pivoting=True)

    def solve(rhs):
        g = np.empty(n)
        g[piv] = scipy.linalg.solve_triangular(r, q.T @ rhs)
        return g

    # mixed-precision refinement: the monomial basis loses digits to
    # cancellation, so residuals and taps are accumulated in long double
    bl = b.astype(np.longdouble)
    xl = x.astype(np.longdouble)
    g = solve(y).astype(np.longdouble)
    for _ in range(refine):
        resid = y.astype(np.longdouble) - graph_filter(bl, xl, g)
        g = g + solve(resid.astype(float))
    return g / np.longdouble(scale) ** np.arange(n)

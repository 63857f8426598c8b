"""Symmetric eigendecomposition, spectral embeddings and graph Fourier tools."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from ._linalg import fix_signs, order_by_magnitude


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs ordered by decreasing ``|lambda|``; column ``i`` of ``vectors`` pairs with ``values[i]``.

    Ties in magnitude put the positive eigenvalue first. Each eigenvector is
    signed so its largest-magnitude entry (first one on ties) is positive.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T

    def signed_order(self) -> np.ndarray:
        """Permutation sorting eigenvalues in decreasing signed order (stable)."""
        return np.argsort(-self.values, kind="stable")


def _as_dense(s) -> np.ndarray:
    return s.toarray() if sp.issparse(s) else np.asarray(s, dtype=float)


def eig_sym(s) -> SpectralDecomposition:
    """Full decomposition of a symmetric matrix (LAPACK ``syevd`` via numpy)."""
    a = _as_dense(s).astype(float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpectralError("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise SpectralError("matrix has non-finite entries")
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    order = order_by_magnitude(vals)
    return SpectralDecomposition(vals[order], fix_signs(vecs[:, order]))


def eig_sym_top(s, k: int, seed: int = 0) -> SpectralDecomposition:
    """Largest-magnitude ``k`` eigenpairs by Lanczos; for large sparse operators."""
    n = s.shape[0]
    if not 1 <= k < n:
        raise SpectralError(f"need 1 <= k < n, got k={k}, n={n}")
    v0 = np.random.default_rng(seed).standard_normal(n)
    vals, vecs = eigsh(sp.csr_array(s) if sp.issparse(s) else np.asarray(s, float), k=k, which="LM", v0=v0, tol=1e-12)
    order = order_by_magnitude(vals)
    return SpectralDecomposition(vals[order], fix_signs(vecs[:, order]))


def spectral_embedding(decomp: SpectralDecomposition, k: int) -> np.ndarray:
    """First ``k`` eigenvectors (by ``|lambda|``) as an ``N x k`` matrix."""
    if not 1 <= k <= decomp.vectors.shape[1]:
        raise SpectralError(f"embedding dimension {k} out of range")
    return decomp.vectors[:, :k].copy()


def feature_eigenvectors(x, kappa: int, center: bool = False) -> np.ndarray:
    """Top ``kappa`` eigenvectors of ``X X^T``, computed from the thin SVD of ``X``."""
    x = x.toarray() if sp.issparse(x) else np.asarray(x, dtype=float)
    if center:
        x = x - x.mean(0)
    if kappa == 0:
        return np.zeros((x.shape[0], 0))
    if not 0 < kappa <= min(x.shape):
        raise SpectralError(f"kappa={kappa} exceeds min(N, D)={min(x.shape)}")
    u, svals, _ = np.linalg.svd(x, full_matrices=False)
    order = np.argsort(-svals, kind="stable")[:kappa]
    return fix_signs(u[:, order])


def feature_aware_embedding(decomp: SpectralDecomposition, x, k: int, kappa: int, center: bool = False) -> np.ndarray:
    """``[V_K  V'_kappa]``: graph eigenvectors next to feature-covariance eigenvectors."""
    n = decomp.n
    if x.shape[0] != n:
        raise SpectralError("feature rows must match the number of nodes")
    graph_part = spectral_embedding(decomp, k)
    if kappa == 0:
        return graph_part
    return np.hstack([graph_part, feature_eigenvectors(x, kappa, center)])


def gft(v, s):
    """Graph Fourier transform ``V^T s``; ``s`` may be a vector or an ``N x C`` matrix."""
    v = np.asarray(v)
    s = np.asarray(s, dtype=float)
    if s.shape[0] != v.shape[0]:
        raise SpectralError("signal length does not match the basis")
    return v.T @ s


def igft(v, coeffs):
    return np.asarray(v) @ np.asarray(coeffs)


def filter_frequency_response(h, eigenvalues):
    """``sum_k h_k lambda^k`` at every eigenvalue (Horner's rule)."""
    lam = np.asarray(eigenvalues, dtype=float)
    out = np.zeros_like(lam)
    for coef in reversed(list(h)):
        out = out * lam + coef
    return out


def model_frequency_response(model, decomp: SpectralDecomposition, x, operator=None) -> np.ndarray:
    """Graph Fourier coefficients of a model's logits, ``V^T (X_L C)`` per channel.

    The model is run in evaluation mode on ``operator``; if omitted the
    operator is rebuilt from the decomposition.
    """
    from .gnn import gnn_forward

    if x.shape[0] != decomp.n:
        raise SpectralError("feature rows must match the decomposition size")
    s = decomp.reconstruct() if operator is None else operator
    if s.shape[0] != decomp.n:
        raise SpectralError("operator does not match the decomposition")
    logits, _ = gnn_forward(model, s, x)
    return gft(decomp.vectors, logits)


def write_frequency_csv(path, decomp: SpectralDecomposition, coeffs) -> None:
    """CSV ``index, eigenvalue, channel_0, ...`` with eigenvalues in decreasing order."""
    coeffs = np.asarray(coeffs).reshape(decomp.n, -1)
    order = decomp.signed_order()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue"] + [f"channel_{c}" for c in range(coeffs.shape[1])])
        for rank, i in enumerate(order):
            w.writerow([rank, repr(float(decomp.values[i]))] + [repr(float(c)) for c in coeffs[i]])


def top_energy_fraction(decomp: SpectralDecomposition, coeffs, m: int = 2) -> float:
    """Share of ``sum |V^T y|^2`` carried by the ``m`` largest (signed) eigenvalues."""
    coeffs = np.asarray(coeffs).reshape(decomp.n, -1)
    energy = np.sum(coeffs**2, axis=1)
    total = energy.sum()
    if total == 0:
        return 0.0
    return float(energy[decomp.signed_order()[:m]].sum() / total)

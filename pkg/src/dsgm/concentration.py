"""Concentration bounds for graph spectra and their empirical counterparts.

The bounds compare the spectrum of the kernel induced by a sampled graph with
the spectrum of the generating kernel. ``beta(chi, N)`` is left to the caller
(default zero); :func:`fit_beta` reports the smallest constant that makes a
set of measured gaps consistent with the bounds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ._linalg import fix_signs, order_by_magnitude
from .kernels import KernelSpectrum


class BoundError(ValueError):
    pass


def zero_beta(chi: float, n: int) -> float:
    return 0.0


def constant_beta(value: float) -> Callable:
    def beta(chi, n):
        return value

    return beta


@dataclass(frozen=True)
class ConcentrationParams:
    A_w: float
    c: float
    gamma: float
    N: int
    chi: float = 0.05
    beta: Callable = field(default=zero_beta, repr=False)
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("A_w", "c", "gamma", "epsilon"):
            val = getattr(self, name)
            if not (val >= 0 and math.isfinite(val)):
                raise BoundError(f"{name} must be finite and nonnegative, got {val}")
        if self.N < 1:
            raise BoundError("N must be positive")
        if not 0 < self.chi < 1:
            raise BoundError("chi must lie in (0, 1)")

    def beta_term(self) -> float:
        b = float(self.beta(self.chi, self.N))
        if b < 0:
            raise BoundError("beta must be nonnegative")
        return b / self.N


def eigenvalue_bound(params: ConcentrationParams, form: str = "min") -> float:
    """Right-hand side of the eigenvalue concentration bound.

    ``form`` selects ``4 A_w c gamma`` ("lipschitz"), ``2 A_w N gamma^2``
    ("grid") or the smaller of the two ("min"); ``beta/N + epsilon`` is added
    in every case.
    """
    lip = 4.0 * params.A_w * params.c * params.gamma
    grid = 2.0 * params.A_w * params.N * params.gamma**2
    if form == "lipschitz":
        main = lip
    elif form == "grid":
        main = grid
    elif form == "min":
        main = min(lip, grid)
    else:
        raise BoundError(f"unknown bound form {form!r}")
    return main + params.beta_term() + params.epsilon


def eigenvector_bound(params: ConcentrationParams, delta_k: float, form: str = "lipschitz") -> float:
    """``pi / (2 delta_k)`` times the eigenvalue bound."""
    if not delta_k > 0:
        raise BoundError(f"eigenvector bound is undefined for delta_k={delta_k} (need delta_k > 0)")
    return math.pi / (2.0 * delta_k) * eigenvalue_bound(params, form)


def compute_delta_k(kernel_eigs, induced_eigs, k: int) -> float:
    """Spectral separation for the 1-based index ``k``, over ``i != k``.

    ``min_i min(|lam_k(W) - lam_i(W_N)|, |lam_k(W_N) - lam_i(W)|)``; returns
    ``inf`` when neither list has another entry.
    """
    kw = np.asarray(kernel_eigs, dtype=float)
    kn = np.asarray(induced_eigs, dtype=float)
    if kw.size == 0 or kn.size == 0:
        raise BoundError("eigenvalue lists must be nonempty")
    if not (1 <= k <= kw.size and k <= kn.size):
        raise BoundError(f"index k={k} out of range")
    j = k - 1
    a = np.abs(kw[j] - np.delete(kn, j))
    b = np.abs(kn[j] - np.delete(kw, j))
    both = np.concatenate([a, b])
    return float(both.min()) if both.size else math.inf


@dataclass(frozen=True)
class GapReport:
    k: int
    eigenvalue_gap: float
    eigenfunction_gap: float
    delta_k: float
    bound_eigenvalue: float
    bound_eigenvector: float
    eigenfunction_gap_unaligned: float
    adjacency_eigenvalue_gap: float
    phi_tail: float


def _leggauss_nodes(breakpoints, order=4):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = breakpoints[:-1, None], breakpoints[1:, None]
    half = 0.5 * (hi - lo)
    nodes = lo + half * (x + 1.0)
    return nodes, half * w


def _step_distance(spectrum: KernelSpectrum, kk: int, vec, breakpoints, gamma):
    """Aligned and unaligned L2 distances on ``[u_1, u_N]`` plus the window mass."""
    nodes, weights = _leggauss_nodes(breakpoints)
    phi = spectrum.eigenfunction(kk, nodes)
    step = (vec / math.sqrt(gamma))[:, None]
    sign = 1.0 if np.sum(weights * step * phi) >= 0 else -1.0
    aligned = math.sqrt(float(np.sum(weights * (step - sign * phi) ** 2)))
    unaligned = math.sqrt(float(np.sum(weights * (step - phi) ** 2)))
    return aligned, unaligned, float(np.sum(weights * phi**2))


@dataclass(frozen=True)
class _GraphSpectrum:
    induced_values: np.ndarray
    induced_vectors: np.ndarray
    adjacency_values: np.ndarray


def graph_spectrum(graph, gamma: float | None = None, k_max: int | None = None) -> _GraphSpectrum:
    """Induced-kernel and adjacency eigenvalues, scaled by ``gamma``."""
    gamma = graph.gamma if gamma is None else gamma
    a = graph.dense()
    n = a.shape[0]
    vals, vecs = np.linalg.eigh(a[: n - 1, : n - 1])
    order = order_by_magnitude(vals)
    full = np.linalg.eigvalsh(a)
    full = full[order_by_magnitude(full)]
    if k_max is not None:
        order = order[:k_max]
        full = full[:k_max]
    return _GraphSpectrum(gamma * vals[order], fix_signs(vecs[:, order]), gamma * full)


def empirical_gap(
    spectrum: KernelSpectrum,
    graph,
    k: int,
    gamma: float | None = None,
    params: ConcentrationParams | None = None,
    k_max: int = 8,
    cache: _GraphSpectrum | None = None,
) -> GapReport:
    """Measured eigenvalue and eigenfunction gaps for the 1-based index ``k``.

    ``lam_k(W_N)`` is ``gamma`` times the k-th eigenvalue of the leading
    ``(N-1) x (N-1)`` block of ``A`` (the induced kernel's spectrum). The
    eigenfunction of ``W_N`` is the step extension of that eigenvector scaled
    by ``gamma^-1/2`` and compared with the kernel eigenfunction on
    ``[u_1, u_N]`` after choosing the sign that maximises their inner product.
    Bounds are NaN unless ``params`` is given; its ``gamma`` and ``N`` are
    replaced by the graph's.
    """
    gamma = graph.gamma if gamma is None else gamma
    if gamma is None or gamma <= 0:
        raise BoundError("a positive gamma is required")
    if graph.latent is None:
        raise BoundError("graph has no latent grid")
    if graph.gamma is not None and not math.isclose(graph.gamma, gamma, rel_tol=1e-12):
        raise BoundError(f"gamma={gamma} does not match the graph's grid spacing {graph.gamma}")
    lat = graph.latent
    if lat.size > 1 and not np.allclose(np.diff(lat), gamma, rtol=1e-9, atol=0):
        raise BoundError("latent coordinates are not spaced by gamma")
    if not 1 <= k <= min(k_max, spectrum.eigenvalues.size, graph.n - 1):
        raise BoundError(f"index k={k} out of range")
    gs = cache if cache is not None else graph_spectrum(graph, gamma, k_max)
    lam_w = float(spectrum.eigenvalues[k - 1])
    lam_n = float(gs.induced_values[k - 1])
    aligned, unaligned, window_mass = _step_distance(spectrum, k - 1, gs.induced_vectors[:, k - 1], lat, gamma)
    delta = compute_delta_k(spectrum.eigenvalues, gs.induced_values, k)
    if params is not None:
        p = replace(params, gamma=float(gamma), N=graph.n)
        bound_val = eigenvalue_bound(p)
        bound_vec = eigenvector_bound(p, delta) if delta > 0 else math.inf
    else:
        bound_val = bound_vec = math.nan
    total = spectrum.inner(spectrum.eigenfunctions[:, k - 1], spectrum.eigenfunctions[:, k - 1])
    return GapReport(
        k=k,
        eigenvalue_gap=abs(lam_n - lam_w),
        eigenfunction_gap=aligned,
        delta_k=delta,
        bound_eigenvalue=bound_val,
        bound_eigenvector=bound_vec,
        eigenfunction_gap_unaligned=unaligned,
        adjacency_eigenvalue_gap=abs(float(gs.adjacency_values[k - 1]) - lam_w),
        phi_tail=max(total - window_mass, 0.0),
    )


def fit_beta(rows, base: ConcentrationParams) -> float:
    """Smallest constant ``beta`` for which every measured gap meets its bound.

    ``rows`` are ``(gamma, N, report)`` triples. Both the eigenvalue bound and
    the eigenvector bound are taken into account; a tiny relative slack
    guards against rounding in the comparison.
    """
    need = 0.0
    for gamma, n, rep in rows:
        p = replace(base, gamma=float(gamma), N=int(n), beta=zero_beta)
        slack_val = rep.eigenvalue_gap - eigenvalue_bound(p)
        need = max(need, n * slack_val)
        if 0 < rep.delta_k < math.inf:
            inner = rep.eigenfunction_gap * 2.0 * rep.delta_k / math.pi
            need = max(need, n * (inner - eigenvalue_bound(p, "lipschitz")))
    return need * (1.0 + 1e-9) + 1e-12


GAP_COLUMNS = ("gamma", "seed", "k", "lambda_gap", "phi_gap", "delta_k", "bound_val", "bound_vec")
EXTRA_COLUMNS = ("lambda_gap_adj", "phi_gap_unaligned", "phi_tail")


def write_gap_csv(path, rows, extra=None) -> None:
    """Rows are ``(gamma, seed, report)``; ``extra`` maps column name to a per-row list."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(GAP_COLUMNS) + list(EXTRA_COLUMNS) + list(extra))
        for i, (gamma, seed, r) in enumerate(rows):
            vals = [
                r.eigenvalue_gap,
                r.eigenfunction_gap,
                r.delta_k,
                r.bound_eigenvalue,
                r.bound_eigenvector,
                r.adjacency_eigenvalue_gap,
                r.eigenfunction_gap_unaligned,
                r.phi_tail,
            ]
            w.writerow([repr(float(gamma)), seed, r.k] + [repr(float(v)) for v in vals] + [repr(float(col[i])) for col in extra.values()])

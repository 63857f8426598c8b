"""Probability kernels on the real line and their spectra.

A kernel is a symmetric function ``W: R^2 -> [0, 1]``. Three families are
provided:

* :class:`DegreeCorrectedSBK` -- two-community block kernel scaled by a
  degree function ``theta``.
* :class:`SyntheticPQ` -- the power-law member of that family with
  ``theta(u) = (|u| + 1)^-2``.
* :class:`PiecewiseConstant` -- a step kernel on a grid of intervals, e.g. the
  kernel induced by a sampled graph.

Kernels are vectorised: ``kernel(u, v)`` broadcasts like a numpy ufunc.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.sparse.linalg import eigsh

from ._linalg import fix_signs, order_by_magnitude


class KernelError(ValueError):
    """Raised when a kernel or a spectral computation is ill-posed."""


class Kernel:
    """Base class. Subclasses implement :meth:`evaluate`."""

    def evaluate(self, u, v):
        raise NotImplementedError

    def __call__(self, u, v):
        return self.evaluate(u, v)


@dataclass(frozen=True)
class CallableKernel(Kernel):
    """Wrap an arbitrary vectorised function ``f(u, v)`` as a kernel.

    Values are clipped to [0, 1]; symmetry is the caller's responsibility.
    """

    func: Callable

    def evaluate(self, u, v):
        return np.clip(self.func(np.asarray(u, float), np.asarray(v, float)), 0.0, 1.0)


def power_law_degree(u):
    """The degree function ``(|u| + 1)^-2``."""
    return 1.0 / (np.abs(u) + 1.0) ** 2


@dataclass(frozen=True)
class DegreeCorrectedSBK(Kernel):
    """Block kernel ``theta(u) theta(v) * (p if u v >= 0 else q)``."""

    p: float
    q: float
    theta: Callable = power_law_degree

    def __post_init__(self):
        for name in ("p", "q"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise KernelError(f"{name}={val} is not a probability")

    def evaluate(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        block = np.where(u * v >= 0, self.p, self.q)
        return block * (self.theta(u) * self.theta(v))

    def community(self, u):
        """Community index per latent coordinate: 0 for ``u >= 0``, 1 otherwise."""
        return np.where(np.asarray(u) >= 0, 0, 1)


@dataclass(frozen=True)
class SyntheticPQ(DegreeCorrectedSBK):
    """Degree-corrected SBK with ``theta(u) = (|u| + 1)^-2``."""

    p: float = 0.8
    q: float = 0.2
    theta: Callable = field(default=power_law_degree, repr=False)


@dataclass(frozen=True)
class PiecewiseConstant(Kernel):
    """Step kernel: ``values[i, j]`` on ``[b_i, b_{i+1}) x [b_j, b_{j+1})``.

    The last interval is closed on the right; the kernel vanishes outside
    ``[breakpoints[0], breakpoints[-1]]``.
    """

    values: np.ndarray
    breakpoints: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        bp = np.asarray(self.breakpoints, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise KernelError("values must be a square matrix")
        if bp.shape != (values.shape[0] + 1,):
            raise KernelError("need exactly one more breakpoint than intervals")
        if np.any(np.diff(bp) <= 0):
            raise KernelError("breakpoints must be strictly increasing")
        if not np.allclose(values, values.T, rtol=0, atol=1e-12):
            raise KernelError("values matrix must be symmetric")
        if values.min(initial=0.0) < 0 or values.max(initial=0.0) > 1:
            raise KernelError("values must lie in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "breakpoints", bp)

    @property
    def widths(self):
        return np.diff(self.breakpoints)

    def interval_index(self, u):
        """Interval containing each ``u``, or -1 outside the support."""
        u = np.asarray(u, dtype=float)
        bp = self.breakpoints
        idx = np.searchsorted(bp, u, side="right") - 1
        idx = np.where(u == bp[-1], len(bp) - 2, idx)
        inside = (u >= bp[0]) & (u <= bp[-1])
        return np.where(inside, idx, -1)

    def evaluate(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        iu = self.interval_index(u)
        iv = self.interval_index(v)
        ok = (iu >= 0) & (iv >= 0)
        out = np.zeros(u.shape)
        out[ok] = self.values[iu[ok], iv[ok]]
        return out if out.ndim else float(out)


def eval_kernel(kernel: Kernel, u, v):
    """Evaluate ``W(u, v)``; scalars in, float out."""
    out = kernel(u, v)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Spectra


@dataclass(frozen=True)
class KernelSpectrum:
    """Eigenpairs of a kernel operator sampled on a quadrature grid.

    ``eigenfunctions[:, k]`` holds samples of the k-th eigenfunction at
    ``grid``; columns are orthonormal under ``sum(weights * f * g)``.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: np.ndarray
    weights: np.ndarray
    c: float
    functions: tuple | None = field(default=None, repr=False)
    breakpoints: np.ndarray | None = field(default=None, repr=False)

    def inner(self, f, g):
        return float(np.sum(self.weights * f * g))

    def eigenfunction(self, k: int, u):
        """Evaluate the k-th eigenfunction (0-based) anywhere.

        Exact for closed-form and step spectra; otherwise linear
        interpolation of the samples, zero outside the grid.
        """
        u = np.asarray(u, dtype=float)
        if self.functions is not None:
            return np.asarray(self.functions[k](u), dtype=float) * np.ones_like(u)
        if self.breakpoints is not None:
            bp = self.breakpoints
            idx = np.searchsorted(bp, u, side="right") - 1
            idx = np.where(u == bp[-1], len(bp) - 2, idx)
            inside = (u >= bp[0]) & (u <= bp[-1])
            return np.where(inside, self.eigenfunctions[np.clip(idx, 0, len(bp) - 2), k], 0.0)
        return np.interp(u, self.grid, self.eigenfunctions[:, k], left=0.0, right=0.0)


def trapezoid_weights(grid):
    """Trapezoidal quadrature weights for an arbitrary increasing grid."""
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def _half_line_energy(theta, lower, upper):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(lambda t: float(theta(t)) ** 2, lower, upper, limit=200)
        except integrate.IntegrationWarning as exc:
            raise KernelError(f"degree function is not square-integrable: {exc}") from exc
    if not math.isfinite(val):
        raise KernelError("degree function is not square-integrable")
    return val


@dataclass(frozen=True)
class ClosedFormSBKSpectrum:
    """Top two eigenpairs of a degree-corrected SBK.

    ``phi1`` and ``phi2`` are callables, L2-normalised on the real line.
    """

    lambda1: float
    lambda2: float
    phi1: Callable
    phi2: Callable

    def sample(self, grid, c):
        grid = np.asarray(grid, float)
        w = trapezoid_weights(grid)
        funcs = np.column_stack([self.phi1(grid), self.phi2(grid)])
        return KernelSpectrum(
            np.array([self.lambda1, self.lambda2]), funcs, grid, w, float(c), functions=(self.phi1, self.phi2)
        )


def sbk_closed_form_spectrum(p, q, theta=power_law_degree) -> ClosedFormSBKSpectrum:
    """Exact top eigenpairs of ``theta(u) theta(v) (p if uv >= 0 else q)``.

    The operator has rank two on ``span{theta 1[u>=0], theta 1[u<0]}``. With
    ``a = int_{u>=0} theta^2`` and ``b = int_{u<0} theta^2`` the reduced matrix
    is ``[[p a, q b], [q a, p b]]``. For an even ``theta`` (a == b) this gives
    ``lambda = (p +- q) a`` with ``phi1 ~ theta`` and ``phi2 ~ sign(u) theta``.
    """
    a = _half_line_energy(theta, 0.0, np.inf)
    b = _half_line_energy(theta, -np.inf, 0.0)
    if a <= 0 or b <= 0:
        raise KernelError("degree function vanishes on a half-line")
    # symmetrised reduced operator in the orthonormal basis theta 1[.]/sqrt(a|b)
    m = np.array([[p * a, q * math.sqrt(a * b)], [q * math.sqrt(a * b), p * b]])
    vals, vecs = np.linalg.eigh(m)
    order = order_by_magnitude(vals)
    vals, vecs = vals[order], vecs[:, order]
    # orient so the first pair is positive on u >= 0 and the second splits by sign
    if vecs[0, 0] < 0:
        vecs[:, 0] *= -1
    if vecs[0, 1] < 0:
        vecs[:, 1] *= -1
    ca, cb = math.sqrt(a), math.sqrt(b)

    def make(col):
        alpha, beta = vecs[0, col] / ca, vecs[1, col] / cb

        def phi(u):
            u = np.asarray(u, dtype=float)
            return np.where(u >= 0, alpha, beta) * theta(u)

        return phi

    return ClosedFormSBKSpectrum(float(vals[0]), float(vals[1]) + 0.0, make(0), make(1))


def discretize_kernel_spectrum(kernel: Kernel, c: float, m: int, n_pairs: int = 4) -> KernelSpectrum:
    """Nyström discretisation of the kernel operator on ``[-c, c]``.

    Uses the trapezoidal rule on ``m`` uniform nodes; the symmetric matrix
    ``sqrt(w_i) W(u_i, u_j) sqrt(w_j)`` shares its eigenvalues with the
    discretised operator. Returns the ``n_pairs`` largest-magnitude pairs.
    """
    if c <= 0:
        raise KernelError("truncation c must be positive")
    if m < 16:
        raise KernelError("grid size m must be at least 16")
    if n_pairs > m // 2:
        raise KernelError(f"m={m} is too small to resolve {n_pairs} eigenpairs")
    grid = np.linspace(-c, c, m)
    w = trapezoid_weights(grid)
    sw = np.sqrt(w)
    mat = kernel(grid[:, None], grid[None, :]) * sw[:, None] * sw[None, :]
    if m <= 1500:
        vals, vecs = np.linalg.eigh(mat)
    else:
        v0 = np.ones(m)
        vals, vecs = eigsh(mat, k=min(n_pairs + 2, m - 1), which="LM", v0=v0)
    order = order_by_magnitude(vals)[:n_pairs]
    vals, vecs = vals[order], vecs[:, order]
    funcs = fix_signs(vecs / sw[:, None])
    return KernelSpectrum(vals, funcs, grid, w, float(c))


def piecewise_spectrum(kernel: PiecewiseConstant) -> KernelSpectrum:
    """Exact spectrum of a step kernel, sampled at interval midpoints.

    Eigenvalues are those of ``diag(sqrt(w)) V diag(sqrt(w))``; eigenfunctions
    are constant on each interval. With midpoints as nodes and interval widths
    as weights the quadrature inner product is exact for step functions.
    """
    w = kernel.widths
    sw = np.sqrt(w)
    vals, vecs = np.linalg.eigh(kernel.values * sw[:, None] * sw[None, :])
    order = order_by_magnitude(vals)
    vals, vecs = vals[order], vecs[:, order]
    mids = 0.5 * (kernel.breakpoints[:-1] + kernel.breakpoints[1:])
    c = float(np.max(np.abs(kernel.breakpoints)))
    return KernelSpectrum(vals, fix_signs(vecs / sw[:, None]), mids, w, c, breakpoints=kernel.breakpoints)


# ---------------------------------------------------------------------------
# Tail mass and regularity


def _tail_grid(c, radius, m):
    # geometric spacing resolves slowly decaying tails with few nodes
    if radius <= c:
        return np.array([c, c])
    return c + (np.geomspace(1.0, radius - c + 1.0, m) - 1.0)


def tail_mass(kernel: Kernel, c: float, radius: float = 100.0, m: int = 2001) -> float:
    """Integral of ``W`` over ``{|u| >= c, |v| >= c}`` truncated at ``|u|, |v| <= radius``.

    Trapezoidal rule on a geometrically graded grid for each half-line, summed
    over the four quadrants. The neglected mass beyond ``radius`` is estimated
    by :func:`tail_truncation_error`.
    """
    if c <= 0:
        raise KernelError("c must be positive")
    pos = _tail_grid(c, radius, m)
    w = trapezoid_weights(pos)
    total = 0.0
    for su in (1.0, -1.0):
        for sv in (1.0, -1.0):
            vals = kernel(su * pos[:, None], sv * pos[None, :])
            total += float(w @ vals @ w)
    return total


def tail_truncation_error(kernel: Kernel, c: float, radius: float = 100.0, m: int = 2001) -> float:
    """Change in :func:`tail_mass` when the truncation radius is doubled."""
    return tail_mass(kernel, c, 2 * radius, m) - tail_mass(kernel, c, radius, m)


def lipschitz_estimate(kernel: Kernel, c: float, m: int = 256) -> float:
    """Largest finite-difference gradient norm of ``W`` on ``[-c, c]^2``.

    Gradients are formed from one-sided differences on each grid cell (forward
    and backward), so kinks such as ``|u|`` are resolved from either side
    instead of averaged away. The result is an estimate of the Lipschitz
    constant from below; at a jump it grows like ``jump / h`` with refinement.
    """
    if m < 32:
        raise KernelError("grid size m must be at least 32")
    grid = np.linspace(-c, c, m)
    h = grid[1] - grid[0]
    vals = kernel(grid[:, None], grid[None, :])
    du = np.diff(vals, axis=0) / h
    dv = np.diff(vals, axis=1) / h
    fwd = np.hypot(du[:, :-1], dv[:-1, :])
    bwd = np.hypot(du[:, 1:], dv[1:, :])
    return float(max(fwd.max(), bwd.max()))


def induced_kernel(graph, gamma: float | None = None, latent=None) -> PiecewiseConstant:
    """Step kernel induced by a graph on its latent grid.

    Uses nodes ``1..N-1``: ``[A]_ij`` on ``I_i x I_j`` with ``I_i = [u_i, u_{i+1})``
    and the last interval closed. The operator spectrum is ``gamma`` times the
    spectrum of the leading ``(N-1) x (N-1)`` block of ``A``.

    ``graph`` is a :class:`~dsgm.graphs.Graph` (its ``gamma`` and ``latent``
    are used when not given) or a bare adjacency matrix.
    """
    adjacency = getattr(graph, "adjacency", graph)
    if gamma is None:
        gamma = getattr(graph, "gamma", None)
    if latent is None:
        latent = getattr(graph, "latent", None)
    if gamma is None or gamma <= 0:
        raise KernelError("gamma must be positive")
    a = adjacency.toarray() if hasattr(adjacency, "toarray") else np.asarray(adjacency)
    n = a.shape[0]
    if n < 2:
        raise KernelError("induced kernel needs at least two nodes")
    if latent is None:
        latent = -(n // 2) * gamma + gamma / 2 + gamma * np.arange(n)
    latent = np.asarray(latent, dtype=float)
    return PiecewiseConstant(a[: n - 1, : n - 1].astype(float), latent)

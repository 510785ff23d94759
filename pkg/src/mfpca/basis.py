"""Sampling grid and histogram basis, smoothing, and function projection.

The grid is t_h = h/(p-1), h = 0..p-1.  The basis on [0,1] has M cells
I_lam = [lam/M, (lam+1)/M) (the last cell closed at 1) with phi_lam =
sqrt(M) * 1_{I_lam}.  When M divides p, cell lam contains exactly the q = p/M
grid points with indices lam*q <= h < (lam+1)*q, a fact that makes the basis
Riemann-orthonormal on the grid: (1/p) sum_h phi_lam(t_h) phi_lam'(t_h) is
exactly the identity.  Smoothing and grid bookkeeping therefore use integer
index arithmetic, never float interval tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fnspace import CoefVector

__all__ = [
    "Grid",
    "HistogramBasis",
    "SmoothedSample",
    "make_grid",
    "make_basis",
    "eval_basis",
    "smooth",
    "project_function",
    "adaptive_cell_means",
]


@dataclass(frozen=True)
class Grid:
    """Regular design grid t_h = h/(p-1) on [0,1]."""

    p: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"grid needs p >= 2 points, got p={self.p}")


def make_grid(p: int) -> Grid:
    if p < 2:
        raise ValueError(f"grid needs p >= 2 points, got p={p}")
    return Grid(p=p, points=np.arange(p) / (p - 1.0))


@dataclass(frozen=True)
class HistogramBasis:
    """M-cell histogram basis bound to a p-point grid with M | p."""

    M: int
    grid: Grid

    def __post_init__(self):
        p = self.grid.p
        if self.M < 1:
            raise ValueError(f"need M >= 1, got {self.M}")
        if p % self.M != 0:
            raise ValueError(f"M must divide p, got M={self.M}, p={p}")
        dev = self._riemann_orthonormality_defect()
        if dev > 1e-12:
            raise AssertionError(
                f"histogram basis failed Riemann orthonormality, defect {dev:.3e}"
            )

    @property
    def p(self) -> int:
        return self.grid.p

    @property
    def points_per_cell(self) -> int:
        return self.grid.p // self.M

    @property
    def amplitude(self) -> float:
        return float(np.sqrt(self.M))

    def cell_of_index(self, h) -> np.ndarray:
        """Cell index of grid point h; the closure point t=1 lands in cell M-1."""
        return np.asarray(h) // self.points_per_cell

    def eval_matrix(self) -> np.ndarray:
        """Dense (p, M) matrix of phi_lam(t_h) values."""
        p, M = self.grid.p, self.M
        out = np.zeros((p, M))
        out[np.arange(p), self.cell_of_index(np.arange(p))] = self.amplitude
        return out

    def _riemann_orthonormality_defect(self) -> float:
        # (1/p) Phi^T Phi has diagonal (M/p)*q = 1 and zero off-diagonal because
        # each grid point is in exactly one cell; computed from evaluated values.
        counts = np.bincount(self.cell_of_index(np.arange(self.grid.p)),
                             minlength=self.M)
        diag = counts * (self.amplitude ** 2) / self.grid.p
        return float(np.max(np.abs(diag - 1.0)))


def make_basis(M: int, p: int) -> HistogramBasis:
    return HistogramBasis(M=M, grid=make_grid(p))


def eval_basis(basis: HistogramBasis, lam: int, t) -> np.ndarray:
    """phi_lam evaluated at scalar or array t (zero outside [0,1])."""
    if not 0 <= lam < basis.M:
        raise ValueError(f"cell index {lam} out of range [0, {basis.M})")
    t = np.asarray(t, dtype=float)
    cell = np.minimum(np.floor(t * basis.M), basis.M - 1)
    inside = (t >= 0.0) & (t <= 1.0) & (cell == lam)
    return np.where(inside, basis.amplitude, 0.0)


@dataclass(frozen=True)
class SmoothedSample:
    """Smoothed coefficient rows: ytilde[i] is the flat (d, lam) vector."""

    ytilde: np.ndarray
    n: int
    D: int
    M: int
    p: int

    def __post_init__(self):
        if self.ytilde.shape != (self.n, self.M * self.D):
            raise ValueError(
                f"ytilde shape {self.ytilde.shape} does not match "
                f"(n={self.n}, M*D={self.M * self.D})"
            )


def smooth(Y: np.ndarray, basis: HistogramBasis) -> SmoothedSample:
    """Project raw observations onto the basis by grid-Riemann sums.

    Y has shape (n, D, p); the result row i is the flat coefficient vector
    with entries (1/p) sum_h Y[i,d,h] phi_lam(t_h) = (sqrt(M)/p) * block sum,
    computed by reshaping each curve into its M contiguous index blocks.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 3:
        raise ValueError(f"Y must have shape (n, D, p), got {Y.shape}")
    n, D, p = Y.shape
    if n == 0:
        raise ValueError("empty observation set")
    if p != basis.grid.p:
        raise ValueError(f"observations have p={p}, basis grid has p={basis.grid.p}")
    M, q = basis.M, basis.points_per_cell
    blocks = Y.reshape(n, D, M, q).sum(axis=3)
    ytilde = (blocks * (basis.amplitude / p)).reshape(n, D * M)
    return SmoothedSample(ytilde=ytilde, n=n, D=D, M=M, p=p)


def adaptive_cell_means(
    f: Callable[[np.ndarray], np.ndarray],
    edges: np.ndarray,
    tol: float = 1e-10,
    start_nodes: int = 64,
    max_doublings: int = 8,
) -> np.ndarray:
    """Midpoint-rule means of f over consecutive intervals, refined until stable.

    Returns one mean value per interval [edges[j], edges[j+1]].  The node count
    per interval doubles until two successive refinements agree within tol in
    sup norm; failure to converge raises RuntimeError.
    """
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    k = start_nodes
    prev = None
    for _ in range(max_doublings + 1):
        offs = (np.arange(k) + 0.5) / k
        nodes = edges[:-1, None] + widths[:, None] * offs[None, :]
        vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.shape)
        cur = vals.mean(axis=1)
        if prev is not None and np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
        k *= 2
    raise RuntimeError(
        f"cell quadrature did not stabilize below {tol} after {max_doublings} doublings"
    )


def project_function(f, basis: HistogramBasis, tol: float = 1e-10,
                     max_doublings: int = 8) -> CoefVector:
    """Basis coefficients <phi_lam, f_d> of a function given as callables.

    f may be a single callable (D=1) or a sequence of per-component callables,
    each vectorized over t.  Coefficients are sqrt(M) times the cell means of
    f, computed with the adaptive midpoint rule.
    """
    comps: Sequence[Callable] = [f] if callable(f) else list(f)
    M = basis.M
    edges = np.arange(M + 1) / M
    out = np.empty((len(comps), M))
    for d, fd in enumerate(comps):
        # coeff = sqrt(M) * integral = sqrt(M) * (1/M) * cell mean
        out[d] = basis.amplitude / M * adaptive_cell_means(
            fd, edges, tol=tol, max_doublings=max_doublings)
    return CoefVector(out.ravel(), M=M, D=len(comps))

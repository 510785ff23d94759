"""Coefficient-space covariance operators and discretization diagnostics.

Everything here lives on the flat (d, lam) index of the histogram basis, so
the covariance operator of the smoothed data is an MD x MD symmetric PSD
matrix.  Two exact representations are supported: a dense array, and a
factored form G = W^T W / n holding only the n x MD matrix of smoothed rows,
which is the natural object when n << MD.  Both answer matvecs, quadratic
forms, Frobenius norms, and leading eigenpairs without approximation.

Population quantities for a known process come in through KernelSpec: the
Brownian and fractional Brownian families (optionally mixed across components
by a loading matrix) and the spectral family built from an explicit
eigen-decomposition.  exact_gamma_phi assembles the exact second moment of
the smoothed coefficients; remainder_report and projection_bias_report
measure the two discretization error terms against their closed-form bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import HistogramBasis, adaptive_cell_means, smooth

__all__ = [
    "GramOperator",
    "KernelSpec",
    "RemainderReport",
    "empirical_gram",
    "kernel_eval",
    "kernel_matrix",
    "exact_gamma_phi",
    "remainder_report",
    "projection_bias_report",
    "projection_bias_bound",
    "rk_bound",
    "psd_repair",
    "save_gram_csv",
    "load_gram_csv",
]

# materializing .matrix beyond this width would dwarf the data that built it
MAX_DENSE_DIM = 8192

_SYM_TOL = 1e-12
_PSD_TOL = 1e-10


def psd_repair(G: np.ndarray, psd_tol: float = _PSD_TOL) -> np.ndarray:
    """Clamp tiny negative eigenvalues of a symmetric matrix to zero.

    Eigenvalues in [-psd_tol * ||G||_2, 0) are rounding debris and are set to
    exactly zero; anything more negative means the matrix is genuinely not
    PSD and raises.
    """
    w, V = np.linalg.eigh(G)
    top = max(float(w[-1]), 0.0)
    floor = -psd_tol * top
    if w[0] < floor:
        raise ValueError(
            f"matrix is not PSD: min eigenvalue {w[0]:.6e} < {floor:.6e}"
        )
    if w[0] >= 0.0:
        return G
    w = np.maximum(w, 0.0)
    return (V * w) @ V.T


class GramOperator:
    """Symmetric PSD operator on flat coefficients, dense or factored.

    Dense: holds the MD x MD matrix.  Factored: holds W (n x MD) with
    G = W^T W / n, exact for empirical second moments.  All queries are exact
    in either representation; `.matrix` materializes the dense array on
    demand (refusing absurd widths).
    """

    def __init__(self, M: int, D: int, dense: Optional[np.ndarray] = None,
                 factor: Optional[np.ndarray] = None):
        if (dense is None) == (factor is None):
            raise ValueError("provide exactly one of dense or factor")
        self.M, self.D = int(M), int(D)
        self.dim = self.M * self.D
        self._dense = None
        self._factor = None
        self._fro2 = None
        self._top = {}
        if dense is not None:
            dense = np.asarray(dense, dtype=float)
            if dense.shape != (self.dim, self.dim):
                raise ValueError(f"dense Gram must be {self.dim}x{self.dim}, "
                                 f"got {dense.shape}")
            scale = float(np.max(np.abs(dense))) if dense.size else 0.0
            defect = float(np.max(np.abs(dense - dense.T)))
            if defect > _SYM_TOL * max(1.0, scale):
                raise ValueError(f"Gram matrix not symmetric: defect {defect:.3e}")
            self._dense = (dense + dense.T) / 2.0
        else:
            factor = np.asarray(factor, dtype=float)
            if factor.ndim != 2 or factor.shape[1] != self.dim:
                raise ValueError(f"factor must be (n, {self.dim}), got {factor.shape}")
            if factor.shape[0] == 0:
                raise ValueError("empty factor")
            self._factor = factor

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_dense(cls, G: np.ndarray, M: int, D: int) -> "GramOperator":
        return cls(M, D, dense=G)

    @classmethod
    def from_factor(cls, W: np.ndarray, M: int, D: int) -> "GramOperator":
        return cls(M, D, factor=W)

    # -- queries -----------------------------------------------------------

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    @property
    def nobs(self) -> Optional[int]:
        return None if self._factor is None else self._factor.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        if self._dense is None:
            if self.dim > MAX_DENSE_DIM:
                raise RuntimeError(
                    f"refusing to materialize a {self.dim}x{self.dim} dense Gram"
                )
            W = self._factor
            self._dense = W.T @ W / W.shape[0]
        return self._dense

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self._dense is not None:
            return self._dense @ v
        W = self._factor
        return W.T @ (W @ v) / W.shape[0]

    def quad(self, v: np.ndarray) -> float:
        """Quadratic form v^T G v (never negative beyond roundoff)."""
        v = np.asarray(v, dtype=float)
        if self._factor is not None:
            Wv = self._factor @ v
            return float(Wv @ Wv) / self._factor.shape[0]
        return float(v @ (self._dense @ v))

    def fro_norm2(self) -> float:
        """Squared Frobenius (= Hilbert-Schmidt) norm of G."""
        if self._fro2 is None:
            if self._dense is not None:
                self._fro2 = float(np.sum(self._dense * self._dense))
            else:
                W = self._factor
                n = W.shape[0]
                if n <= self.dim:
                    dual = W @ W.T / n
                    self._fro2 = float(np.sum(dual * dual))
                else:
                    G = W.T @ W / n
                    self._fro2 = float(np.sum(G * G))
        return self._fro2

    def norm2(self) -> float:
        """Operator (spectral) norm."""
        return float(self.top_eigs(1)[0][0])

    def top_eigs(self, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Leading k eigenvalues (descending) and eigenvectors (columns).

        Dense: full symmetric eigendecomposition.  Factored: the n x n dual
        Gram W W^T / n shares the nonzero spectrum, and primal vectors are
        recovered as W^T u / sqrt(n * eig); for large n a deflated power
        iteration on the exact matvec is used instead.
        """
        if k in self._top:
            return self._top[k]
        if k < 1 or k > self.dim:
            raise ValueError(f"need 1 <= k <= {self.dim}, got {k}")
        if self._dense is not None:
            w, V = np.linalg.eigh(self._dense)
            vals, vecs = w[::-1][:k].copy(), V[:, ::-1][:, :k].copy()
        else:
            W = self._factor
            n = W.shape[0]
            if n <= 1500:
                dual = W @ W.T / n
                w, U = np.linalg.eigh(dual)
                w, U = w[::-1][:k], U[:, ::-1][:, :k]
                vals = w.copy()
                vecs = np.zeros((self.dim, k))
                for j in range(k):
                    if w[j] > 1e-300:
                        vj = W.T @ U[:, j] / np.sqrt(n * w[j])
                        vecs[:, j] = vj / np.linalg.norm(vj)
            else:
                vals, vecs = _power_topk(self.matvec, self.dim, k)
        self._top[k] = (vals, vecs)
        return vals, vecs


def _power_topk(matvec, dim: int, k: int, tol: float = 1e-13,
                max_iter: int = 20000, seed: int = 0):
    """Deflated power iteration; exact matvecs, residual-based stopping."""
    rng = np.random.default_rng(seed)
    vals = np.zeros(k)
    vecs = np.zeros((dim, k))
    for j in range(k):
        v = rng.standard_normal(dim)
        for jj in range(j):
            v -= vecs[:, jj] * (vecs[:, jj] @ v)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = matvec(v)
            for jj in range(j):
                w -= vecs[:, jj] * (vals[jj] * (vecs[:, jj] @ v))
                # deflate through the operator, not the vector, to keep w exact
            for jj in range(j):
                w -= vecs[:, jj] * (vecs[:, jj] @ w)
            lam = float(v @ w)
            resid = np.linalg.norm(w - lam * v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
            if resid <= tol * max(1.0, abs(lam)):
                break
        vals[j], vecs[:, j] = lam, v
    return vals, vecs


def empirical_gram(sample, materialize: Optional[bool] = None) -> GramOperator:
    """Empirical second-moment operator (1/n) sum_i ytilde_i ytilde_i^T.

    materialize=None picks the cheaper exact representation: dense when the
    coefficient dimension is modest relative to n, factored otherwise.
    """
    W = np.asarray(sample.ytilde, dtype=float)
    if W.shape[0] == 0:
        raise ValueError("empty sample")
    n, dim = W.shape
    if materialize is None:
        materialize = dim <= 512 or (dim <= 4096 and dim <= 2 * n)
    if materialize:
        return GramOperator.from_dense(W.T @ W / n, sample.M, sample.D)
    return GramOperator.from_factor(W, sample.M, sample.D)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Population covariance kernel K_{d,d'}(s,t) of a D-variate process.

    kind "brownian": base kernel min(s,t); "fbm": (s^2H + t^2H - |s-t|^2H)/2
    with Hurst index hurst in (0,1); both are diagonal across components by
    default, or mixed as K = (A A^T)_{dd'} k0(s,t) by a loading matrix A.
    kind "spectral": K from an explicit finite eigensystem held by `model`
    (anything exposing eigenvalues and per-component eigenfunction callables).

    sup_norm, alpha, holder_L describe the regularity class the kernel sits
    in: E (Z_d(t) - Z_d(s))^2 <= holder_L |t-s|^(2 alpha), sup_norm the max
    of |K_{d,d}| on the square.
    """

    kind: str
    hurst: float = 0.5
    loadings: Optional[np.ndarray] = None
    model: object = None
    sup_norm: float = field(default=None)
    alpha: float = field(default=None)
    holder_L: float = field(default=None)

    def __post_init__(self):
        if self.kind not in ("brownian", "fbm", "spectral"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "fbm" and not 0.0 < self.hurst < 1.0:
            raise ValueError(f"Hurst index must be in (0,1), got {self.hurst}")
        if self.kind == "spectral":
            if self.model is None:
                raise ValueError("spectral kernel needs a model")
            object.__setattr__(self, "_mix", None)
            sup = self.sup_norm if self.sup_norm is not None else self.model.kernel_sup_norm()
            alpha = self.alpha if self.alpha is not None else self.model.alpha
            L = self.holder_L if self.holder_L is not None else self.model.holder_L
            object.__setattr__(self, "sup_norm", float(sup))
            object.__setattr__(self, "alpha", float(alpha))
            object.__setattr__(self, "holder_L", float(L))
            return
        if self.loadings is not None:
            A = np.asarray(self.loadings, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise ValueError(f"loading matrix must be square, got {A.shape}")
            object.__setattr__(self, "loadings", A)
            mix = A @ A.T
        else:
            mix = None
        object.__setattr__(self, "_mix", mix)
        peak = 1.0 if mix is None else float(np.max(np.abs(np.diag(mix))))
        alpha = 0.5 if self.kind == "brownian" else self.hurst
        # base-kernel sup and increment constant are both 1 on [0,1]^2
        object.__setattr__(self, "sup_norm",
                           peak if self.sup_norm is None else self.sup_norm)
        object.__setattr__(self, "alpha",
                           alpha if self.alpha is None else self.alpha)
        object.__setattr__(self, "holder_L",
                           peak if self.holder_L is None else self.holder_L)

    @property
    def D(self) -> int:
        if self.kind == "spectral":
            return self.model.D
        return 1 if self._mix is None else self._mix.shape[0]

    def component_weight(self, d: int, dp: int) -> float:
        if self._mix is None:
            return 1.0 if d == dp else 0.0
        return float(self._mix[d, dp])


def _base_kernel_matrix(spec: KernelSpec, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)[:, None]
    t = np.asarray(t, dtype=float)[None, :]
    if spec.kind == "brownian":
        return np.minimum(s, t)
    H2 = 2.0 * spec.hurst
    return 0.5 * (np.abs(s) ** H2 + np.abs(t) ** H2 - np.abs(s - t) ** H2)


def kernel_matrix(spec: KernelSpec, d: int, dp: int,
                  s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Matrix K_{d,dp}(s_i, t_j) for node vectors s, t."""
    if spec.kind == "spectral":
        return spec.model.kernel_values(d, dp, s, t)
    w = spec.component_weight(d, dp)
    if w == 0.0:
        return np.zeros((np.size(s), np.size(t)))
    return w * _base_kernel_matrix(spec, s, t)


def kernel_eval(spec: KernelSpec, d: int, dp: int, s: float, t: float) -> float:
    """Single kernel value K_{d,dp}(s, t)."""
    return float(kernel_matrix(spec, d, dp, np.atleast_1d(s), np.atleast_1d(t))[0, 0])


# ---------------------------------------------------------------------------
# exact discretized covariance and its error terms
# ---------------------------------------------------------------------------

def _riemann_block(spec: KernelSpec, basis: HistogramBasis,
                   d: int, dp: int) -> np.ndarray:
    """(1/p^2) sum_{h,h'} K_{d,dp}(t_h, t_h') phi_lam phi_lam' as an MxM block."""
    p, M, q = basis.grid.p, basis.M, basis.points_per_cell
    tk = basis.grid.points
    Kg = kernel_matrix(spec, d, dp, tk, tk)
    blocks = Kg.reshape(M, q, M, q).sum(axis=(1, 3))
    return blocks * (basis.M / p ** 2)


def _spectral_coef_matrix(model, basis: HistogramBasis) -> np.ndarray:
    """Riemann-smoothed coefficients of the model eigenfunctions, (r, M*D)."""
    tk = basis.grid.points
    F = model.eval_grid(tk)                      # (r, D, p)
    return smooth(F, basis).ytilde               # (r, M*D)


def exact_gamma_phi(spec: KernelSpec, basis: HistogramBasis,
                    sigma2: float) -> GramOperator:
    """Exact second-moment matrix of the smoothed coefficients.

    Entry ((d,lam), (d',lam')) is (1/p^2) sum_{h,h'} K_{d,d'}(t_h,t_h')
    phi_lam(t_h) phi_lam'(t_h') plus the noise part (sigma^2/p) on the
    diagonal.  This is the population target the empirical Gram estimates.
    """
    if sigma2 < 0:
        raise ValueError(f"noise variance must be nonnegative, got {sigma2}")
    M = basis.M
    if spec.kind == "spectral":
        C = _spectral_coef_matrix(spec.model, basis)
        mu = np.asarray(spec.model.eigenvalues, dtype=float)
        B = (C.T * mu) @ C
        D = spec.model.D
    else:
        D = spec.D
        B0 = _riemann_block(spec, basis, 0, 0)
        if spec._mix is None:
            B = B0 if D == 1 else np.kron(np.eye(D), B0)
        else:
            B = np.kron(spec._mix, B0)
    G = B + (sigma2 / basis.grid.p) * np.eye(M * D)
    return GramOperator.from_dense(psd_repair(G), M, D)


def _box_midpoint(spec: KernelSpec, d: int, dp: int, lam: int, lamp: int,
                  M: int, k: int, chunk: int = 1024) -> float:
    """Midpoint product rule for K_{d,dp} over I_lam x I_lam', k^2 nodes.

    Rows are processed in chunks so deep refinements never materialize a k x k
    kernel matrix.
    """
    offs = (np.arange(k) + 0.5) / (k * M)
    s = lam / M + offs
    t = lamp / M + offs
    total = 0.0
    for i0 in range(0, k, chunk):
        total += float(kernel_matrix(spec, d, dp, s[i0:i0 + chunk], t).sum())
    return total / (k * M) ** 2


def _exact_cell_integrals(spec: KernelSpec, basis: HistogramBasis,
                          d: int, dp: int, tol: float = 1e-10,
                          start_nodes: int = 64,
                          max_doublings: int = 10) -> np.ndarray:
    """integral over I_lam x I_lam' of K_{d,dp}, for every cell pair (MxM).

    Midpoint product rule per cell pair, node count doubling until the value
    moves less than tol.  Pairs away from a kernel kink converge at the first
    check; kinked diagonal pairs refine deep, which is why the rule runs per
    pair rather than on all cells at once.
    """
    M = basis.M
    out = np.empty((M, M))
    for lam in range(M):
        for lamp in range(M):
            k = start_nodes
            prev = _box_midpoint(spec, d, dp, lam, lamp, M, k)
            for _ in range(max_doublings):
                k *= 2
                cur = _box_midpoint(spec, d, dp, lam, lamp, M, k)
                if abs(cur - prev) < tol:
                    out[lam, lamp] = cur
                    break
                prev = cur
            else:
                raise RuntimeError(
                    f"cell-pair quadrature did not stabilize below {tol} "
                    f"after {max_doublings} doublings"
                )
    return out


def _exact_cell_integrals_spectral(model, basis: HistogramBasis,
                                   tol: float = 1e-10) -> np.ndarray:
    """Exact cell integrals for every (d, d') at once via the eigensystem.

    integral over I_lam x I_lam' of sum_l mu_l f_ld(s) f_ld'(t) factorizes
    into 1D cell integrals of the eigenfunctions; returns (D, D, M, M).
    """
    M, D = basis.M, model.D
    edges = np.arange(M + 1) / M
    r = len(model.eigenvalues)
    cell_int = np.empty((r, D, M))
    for l in range(r):
        for d in range(D):
            f = model.component_callable(l, d)
            cell_int[l, d] = adaptive_cell_means(f, edges, tol=tol,
                                                 max_doublings=12) / M
    mu = np.asarray(model.eigenvalues, dtype=float)
    return np.einsum("l,lda,leb->deab", mu, cell_int, cell_int)


def gamma_phi_top_eigs(spec: KernelSpec, basis: HistogramBasis,
                       sigma2: float, k: int = 2) -> np.ndarray:
    """Leading k eigenvalues of the exact Gamma_phi without materializing it.

    Spectral kernels reduce to an r x r problem through the smoothed
    eigenfunction coefficients; separable kernels to the loading spectrum
    times the base-block spectrum.  The noise shifts everything by sigma^2/p.
    """
    p = basis.grid.p
    if spec.kind == "spectral":
        C = _spectral_coef_matrix(spec.model, basis)
        mu = np.asarray(spec.model.eigenvalues, dtype=float)
        S = C * np.sqrt(mu)[:, None]
        w = np.linalg.eigvalsh(S @ S.T)[::-1]
        dim = C.shape[1]
    else:
        B0 = _riemann_block(spec, basis, 0, 0)
        w0 = np.linalg.eigvalsh(B0)[::-1]
        if spec._mix is None:
            wc = np.ones(spec.D)
        else:
            wc = np.linalg.eigvalsh(spec._mix)[::-1]
        w = np.sort(np.outer(wc, w0).ravel())[::-1]
        dim = spec.D * basis.M
    full = np.full(dim, 0.0)
    full[:min(len(w), dim)] = np.maximum(w[:dim], 0.0)
    return full[:k] + sigma2 / p


def rk_bound(spec: KernelSpec, M: int, p: int) -> float:
    """Closed-form ceiling for every kernel-discretization remainder entry."""
    return 4.0 * np.sqrt(spec.sup_norm * spec.holder_L) / (spec.alpha + 1.0) \
        / M / p ** spec.alpha


@dataclass(frozen=True)
class RemainderReport:
    max_RK: float     # worst kernel-discretization remainder entry
    max_RN: float     # worst noise-discretization remainder entry (0 when M|p)
    bound_RK: float   # proved ceiling for max_RK


def remainder_report(spec: KernelSpec, basis: HistogramBasis,
                     sigma2: float, tol: float = 1e-10) -> RemainderReport:
    """Measure both discretization remainders against the closed-form bound.

    R^K entry (d,d',lam,lam') is the Riemann double sum minus the exact double
    integral of K phi phi'; R^N is (sigma^2/p)((1/p) sum_h phi phi' - delta).
    Symmetry of the remainder tensor under (d,lam) <-> (d',lam') is asserted,
    not assumed.
    """
    M, p = basis.M, basis.grid.p
    D = spec.D
    max_rk = 0.0
    if spec.kind == "spectral":
        exact = _exact_cell_integrals_spectral(spec.model, basis, tol=tol)
        for d in range(D):
            for dp in range(d, D):
                RK = _riemann_block(spec, basis, d, dp) - M * exact[d, dp]
                RKt = _riemann_block(spec, basis, dp, d) - M * exact[dp, d]
                if np.max(np.abs(RK - RKt.T)) > 1e-9:
                    raise AssertionError("remainder tensor lost its symmetry")
                max_rk = max(max_rk, float(np.max(np.abs(RK))))
    else:
        weights = [spec.component_weight(d, dp)
                   for d in range(D) for dp in range(D)]
        wmax = max(abs(w) for w in weights)
        if wmax > 0.0:
            base_exact = _exact_cell_integrals(spec, basis, 0, 0, tol=tol)
            RK0 = _riemann_block(spec, basis, 0, 0) - M * base_exact
            if np.max(np.abs(RK0 - RK0.T)) > 1e-9:
                raise AssertionError("remainder tensor lost its symmetry")
            max_rk = wmax * float(np.max(np.abs(RK0)))
    Phi = basis.eval_matrix()
    RN = (sigma2 / p) * (Phi.T @ Phi / p - np.eye(M))
    return RemainderReport(
        max_RK=max_rk,
        max_RN=float(np.max(np.abs(RN))),
        bound_RK=rk_bound(spec, M, p),
    )


def projection_bias_bound(spec: KernelSpec, M: int) -> float:
    """Ceiling for the sup-norm bias of projecting K onto the cell products."""
    return 4.0 * np.sqrt(spec.holder_L * spec.sup_norm) / (spec.alpha + 1.0) \
        / M ** spec.alpha


def projection_bias_report(spec: KernelSpec, basis: HistogramBasis,
                           points_per_cell: int = 9,
                           tol: float = 1e-10) -> float:
    """Sup over a test lattice of |Pi_(S^2) K - K|, asserted against the bound.

    The projected kernel is the cell-pair average of K; the lattice places
    points_per_cell interior points per cell along each axis.
    """
    M, D = basis.M, spec.D
    offs = (np.arange(points_per_cell) + 0.5) / (points_per_cell * M)
    lattice = (np.arange(M)[:, None] / M + offs[None, :]).ravel()
    cell_of = np.repeat(np.arange(M), points_per_cell)
    worst = 0.0
    if spec.kind == "spectral":
        exact = _exact_cell_integrals_spectral(spec.model, basis, tol=tol)
        pairs = [(d, dp) for d in range(D) for dp in range(d, D)]
        for d, dp in pairs:
            proj = (M * M) * exact[d, dp]
            Kl = kernel_matrix(spec, d, dp, lattice, lattice)
            dev = np.abs(Kl - proj[np.ix_(cell_of, cell_of)])
            worst = max(worst, float(dev.max()))
    else:
        weights = [abs(spec.component_weight(d, dp))
                   for d in range(D) for dp in range(D)]
        wmax = max(weights)
        if wmax > 0.0:
            proj = (M * M) * _exact_cell_integrals(spec, basis, 0, 0, tol=tol)
            Kl = _base_kernel_matrix(spec, lattice, lattice)
            dev = np.abs(Kl - proj[np.ix_(cell_of, cell_of)])
            worst = wmax * float(dev.max())
    bound = projection_bias_bound(spec, M)
    if worst > bound:
        raise AssertionError(
            f"projection bias {worst:.6e} exceeds its bound {bound:.6e}"
        )
    return worst


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_gram_csv(path, gram: GramOperator, p: int, sigma: float) -> None:
    """Dense Gram as CSV: one metadata header line, then MD rows."""
    G = gram.matrix
    with open(path, "w") as fh:
        fh.write(f"M={gram.M},D={gram.D},p={p},sigma={float(sigma)!r}\n")
        for row in G:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def load_gram_csv(path) -> tuple[GramOperator, int, float]:
    """Inverse of save_gram_csv; returns (gram, p, sigma)."""
    with open(path) as fh:
        header = fh.readline().strip()
        meta = dict(part.split("=", 1) for part in header.split(","))
        rows = [np.fromiter(line.split(","), dtype=float)
                for line in fh if line.strip()]
    M, D, p = int(meta["M"]), int(meta["D"]), int(meta["p"])
    G = np.vstack(rows)
    return GramOperator.from_dense(G, M, D), p, float(meta["sigma"])

"""Synthetic data: sparse finite-rank process models and grid observations.

A process model is a finite Mercer system: strictly decreasing eigenvalues
mu_1 > ... > mu_r > 0 and H-orthonormal eigenfunctions f_l, with the leading
one supported on s of the D components.  Eigenfunctions are linear
combinations of seeded random bump shapes, orthonormalized exactly (to
quadrature accuracy) by a Cholesky change of basis that leaves f_1 a scalar
multiple of its raw bump, so its component support is preserved by
construction.

All randomness flows through counter-based Philox streams keyed by
(seed, *stream) so that any replicate can be regenerated independently of
scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .basis import make_grid
from .covariance import KernelSpec

__all__ = [
    "ProcessModel",
    "ObservationSet",
    "make_rng",
    "build_sparse_model",
    "sample_observations",
    "sample_gaussian_kernel",
    "empirical_holder_ratio",
]


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for an addressable stream; order-independent."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(x) for x in stream))
    return np.random.Generator(np.random.Philox(ss))


class _Bump:
    """C-infinity bump exp(-1/(1-u^2)) scaled to center c, half-width w."""

    __slots__ = ("c", "w", "amp")

    def __init__(self, c: float, w: float, amp: float = 1.0):
        self.c, self.w, self.amp = float(c), float(w), float(amp)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        u = (t - self.c) / self.w
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
        return self.amp * out

    @property
    def support(self) -> tuple[float, float]:
        return (max(0.0, self.c - self.w), min(1.0, self.c + self.w))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()


class _Triangle:
    """Piecewise-linear tent, the rough counterpart shape family."""

    __slots__ = ("c", "w", "amp")

    def __init__(self, c: float, w: float, amp: float = 1.0):
        self.c, self.w, self.amp = float(c), float(w), float(amp)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amp * np.maximum(0.0, 1.0 - np.abs(t - self.c) / self.w)

    @property
    def support(self) -> tuple[float, float]:
        return (max(0.0, self.c - self.w), min(1.0, self.c + self.w))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.c,)


_SHAPES = {"smooth": _Bump, "piecewise": _Triangle}


class _ComponentEval:
    """Picklable callable for one (eigenfunction, component) pair."""

    __slots__ = ("model", "l", "d")

    def __init__(self, model: "ProcessModel", l: int, d: int):
        self.model, self.l, self.d = model, l, d

    def __call__(self, t):
        return self.model.component_eval(self.l, self.d, t)


@dataclass(eq=False)
class ProcessModel:
    """Finite-rank D-variate process with a sparse leading eigenfunction."""

    D: int
    s: int
    support: np.ndarray
    eigenvalues: np.ndarray
    raw: list                 # raw[j][d] is a shape callable or None
    coef: np.ndarray          # (r, r) lower triangular, f_l = sum_j coef[l,j] raw_j
    alpha: float
    holder_L: float
    sigma: float = 0.0
    shape: str = "smooth"
    _sup_cache: Optional[float] = field(default=None, repr=False)

    @property
    def r(self) -> int:
        return len(self.eigenvalues)

    def component_eval(self, l: int, d: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for j in range(self.r):
            cj = self.coef[l, j]
            shape = self.raw[j][d]
            if cj != 0.0 and shape is not None:
                out += cj * shape(t)
        return out

    def component_callable(self, l: int, d: int):
        return _ComponentEval(self, l, d)

    def eval_grid(self, t: np.ndarray) -> np.ndarray:
        """All eigenfunctions on a node vector, shape (r, D, len(t))."""
        t = np.asarray(t, dtype=float)
        raw_vals = np.zeros((self.r, self.D, t.size))
        for j in range(self.r):
            for d in range(self.D):
                shape = self.raw[j][d]
                if shape is not None:
                    raw_vals[j, d] = shape(t)
        return np.einsum("lj,jdt->ldt", self.coef, raw_vals)

    def kernel_values(self, d: int, dp: int, s_nodes, t_nodes) -> np.ndarray:
        s_nodes = np.atleast_1d(np.asarray(s_nodes, dtype=float))
        t_nodes = np.atleast_1d(np.asarray(t_nodes, dtype=float))
        out = np.zeros((s_nodes.size, t_nodes.size))
        for l in range(self.r):
            fs = self.component_eval(l, d, s_nodes)
            ft = self.component_eval(l, dp, t_nodes)
            out += self.eigenvalues[l] * np.outer(fs, ft)
        return out

    def kernel_sup_norm(self, lattice_size: int = 257) -> float:
        if self._sup_cache is None:
            t = np.linspace(0.0, 1.0, lattice_size)
            worst = 0.0
            for d in range(self.D):
                vals = np.stack([self.component_eval(l, d, t)
                                 for l in range(self.r)])
                Kdd = (vals.T * self.eigenvalues) @ vals
                worst = max(worst, float(np.max(np.abs(Kdd))))
            self._sup_cache = worst
        return self._sup_cache

    def as_kernel_spec(self) -> KernelSpec:
        return KernelSpec(kind="spectral", model=self)

    def with_sigma(self, sigma: float) -> "ProcessModel":
        return replace(self, sigma=float(sigma))


_GL_CACHE: dict = {}


def _gl_rule(deg: int):
    if deg not in _GL_CACHE:
        _GL_CACHE[deg] = np.polynomial.legendre.leggauss(deg)
    return _GL_CACHE[deg]


def _pair_integral(f, g, panels: int, deg: int = 16) -> float:
    """integral of f*g over the support intersection, composite Gauss-Legendre.

    Panels are split at the breakpoints of both factors, so the piecewise
    families are integrated exactly; the bump family is smooth and the rule
    converges far below tolerance at these panel counts.
    """
    lo = max(f.support[0], g.support[0])
    hi = min(f.support[1], g.support[1])
    if hi <= lo:
        return 0.0
    cuts = sorted({lo, hi, *(b for b in f.breakpoints + g.breakpoints
                             if lo < b < hi)})
    x, w = _gl_rule(deg)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(a, b, panels + 1)
        mid = (edges[:-1] + edges[1:]) / 2.0
        half = (edges[1:] - edges[:-1]) / 2.0
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        vals = (f(nodes) * g(nodes)).reshape(panels, deg)
        total += float(np.sum(vals @ w * half))
    return total


def _h_gram_of_raws(raw, r: int, D: int) -> np.ndarray:
    """H inner products of the raw functions, verified by panel doubling."""
    def gram(panels):
        P = np.zeros((r, r))
        for i in range(r):
            for j in range(i, r):
                acc = 0.0
                for d in range(D):
                    fi, fj = raw[i][d], raw[j][d]
                    if fi is not None and fj is not None:
                        acc += _pair_integral(fi, fj, panels)
                P[i, j] = P[j, i] = acc
        return P

    P1, P2 = gram(32), gram(64)
    drift = float(np.max(np.abs(P2 - P1)))
    if drift > 1e-12 * max(1.0, float(np.max(np.abs(P2)))):
        raise RuntimeError(f"raw Gram quadrature not converged: drift {drift:.3e}")
    return P2


def build_sparse_model(
    D: int,
    s: int,
    r: int,
    eigenvalues,
    seed: int,
    sigma: float = 0.0,
    alpha: float = 0.5,
    shape: str = "smooth",
) -> ProcessModel:
    """Random sparse model: f_1 on s seeded components, trailing spread wide.

    eigenvalues must be strictly decreasing and positive.  The raw leading
    function places one bump per active component; each trailing raw function
    places bumps on every component.  Orthonormalization is the Cholesky
    change of basis of the raw Gram, lower triangular, so f_1 keeps exactly
    its s active components.
    """
    if s > D:
        raise ValueError(f"sparsity s={s} cannot exceed D={D}")
    if s < 1 or r < 1:
        raise ValueError(f"need s >= 1 and r >= 1, got s={s}, r={r}")
    mu = np.asarray(eigenvalues, dtype=float)
    if len(mu) != r:
        raise ValueError(f"expected {r} eigenvalues, got {len(mu)}")
    if np.any(mu <= 0) or np.any(np.diff(mu) >= 0):
        raise ValueError("eigenvalues must be positive and strictly decreasing")
    if shape not in _SHAPES:
        raise ValueError(f"unknown shape family {shape!r}")
    Shape = _SHAPES[shape]

    rng = make_rng(seed, 0xB0)
    support = np.sort(rng.choice(D, size=s, replace=False))
    raw: list[list] = []
    lead = [None] * D
    for d in support:
        c = rng.uniform(0.3, 0.7)
        w = rng.uniform(0.25, 0.45)
        amp = rng.uniform(0.6, 1.4) * rng.choice([-1.0, 1.0])
        lead[d] = Shape(c, w, amp)
    raw.append(lead)
    for _ in range(1, r):
        row = []
        for d in range(D):
            c = rng.uniform(0.15, 0.85)
            w = rng.uniform(0.2, 0.5)
            amp = rng.uniform(0.6, 1.4) * rng.choice([-1.0, 1.0])
            row.append(Shape(c, w, amp))
        raw.append(row)

    P = _h_gram_of_raws(raw, r, D)
    try:
        Lchol = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("raw shape functions are numerically dependent; "
                           "try another seed") from exc
    # exact structural zeros above the diagonal keep f_1 = coef[0,0] * raw_0,
    # so its component support survives orthonormalization untouched
    coef = solve_triangular(Lchol, np.eye(r), lower=True)

    model = ProcessModel(D=D, s=s, support=support, eigenvalues=mu, raw=raw,
                         coef=coef, alpha=float(alpha), holder_L=1.0,
                         sigma=float(sigma), shape=shape)
    model.holder_L = _estimate_holder_L(model)
    return model


def _estimate_holder_L(model: ProcessModel, lattice_size: int = 513) -> float:
    """Smallest L (x 1.05 headroom) with E(Z_d(t)-Z_d(s))^2 <= L |t-s|^(2a).

    The expectation is sum_l mu_l (f_ld(t) - f_ld(s))^2, evaluated on all
    lattice pairs.
    """
    t = np.linspace(0.0, 1.0, lattice_size)
    gaps = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gaps, 1.0)
    denom = gaps ** (2.0 * model.alpha)
    worst = 0.0
    for d in range(model.D):
        vals = np.stack([model.component_eval(l, d, t) for l in range(model.r)])
        diffs2 = (vals[:, :, None] - vals[:, None, :]) ** 2
        incr = np.einsum("l,lst->st", model.eigenvalues, diffs2)
        np.fill_diagonal(incr, 0.0)
        worst = max(worst, float(np.max(incr / denom)))
    return 1.05 * worst


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Raw grid observations Y = Z + noise, with provenance for truth lookups."""

    Y: np.ndarray
    sigma: float
    seed: int
    model: Optional[ProcessModel] = None
    kernel: Optional[KernelSpec] = None

    def __post_init__(self):
        if self.Y.ndim != 3 or self.Y.shape[0] == 0:
            raise ValueError(f"Y must be nonempty (n, D, p), got {self.Y.shape}")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def D(self) -> int:
        return self.Y.shape[1]

    @property
    def p(self) -> int:
        return self.Y.shape[2]


def sample_observations(model: ProcessModel, n: int, p: int,
                        seed: int, stream: tuple = ()) -> ObservationSet:
    """n i.i.d. curves of the model on the p-point grid, plus N(0, sigma^2) noise.

    Bit-identical for identical (seed, stream); scores and noise come from
    separate substreams so the noiseless part is reproducible on its own.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    grid = make_grid(p)
    F = model.eval_grid(grid.points)                      # (r, D, p)
    amp = np.sqrt(model.eigenvalues)
    rng_scores = make_rng(seed, *stream, 1)
    rng_noise = make_rng(seed, *stream, 2)
    xi = rng_scores.standard_normal((n, model.r))
    Z = np.einsum("il,ldp->idp", xi * amp, F)
    Y = Z if model.sigma == 0.0 else \
        Z + model.sigma * rng_noise.standard_normal(Z.shape)
    return ObservationSet(Y=Y, sigma=model.sigma, seed=seed, model=model)


def sample_gaussian_kernel(spec: KernelSpec, n: int, p: int, D: int,
                           sigma: float, seed: int,
                           stream: tuple = ()) -> ObservationSet:
    """Gaussian curves with covariance from a KernelSpec, observed with noise.

    Separable kernels factor as loadings x base process: the base grid
    covariance is Cholesky-factored with a 1e-10 diagonal jitter (the grid
    matrix of e.g. Brownian motion is singular at t=0); a factorization
    failure after the jitter is an error.  Spectral kernels sample through
    their eigensystem directly.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if spec.kind == "spectral":
        base = spec.model if spec.model.sigma == sigma else \
            spec.model.with_sigma(sigma)
        obs = sample_observations(base, n, p, seed, stream=stream)
        return ObservationSet(Y=obs.Y, sigma=sigma, seed=seed,
                              model=base, kernel=spec)
    if spec.loadings is not None and spec.loadings.shape[0] != D:
        raise ValueError(
            f"loading matrix is {spec.loadings.shape[0]}x"
            f"{spec.loadings.shape[1]} but D={D}"
        )
    grid = make_grid(p)
    K0 = _base_grid_cov(spec, grid.points)
    try:
        L0 = np.linalg.cholesky(K0 + 1e-10 * np.eye(p))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(
            "grid covariance factorization failed even with jitter") from exc
    rng_z = make_rng(seed, *stream, 1)
    rng_e = make_rng(seed, *stream, 2)
    g = rng_z.standard_normal((n, D, p))
    Z = np.einsum("idp,qp->idq", g, L0)
    if spec.loadings is not None:
        Z = np.einsum("de,iep->idp", spec.loadings, Z)
    Y = Z if sigma == 0.0 else Z + sigma * rng_e.standard_normal(Z.shape)
    return ObservationSet(Y=Y, sigma=sigma, seed=seed, kernel=spec)


def _base_grid_cov(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    from .covariance import _base_kernel_matrix
    return _base_kernel_matrix(spec, points, points)


def empirical_holder_ratio(obs: ObservationSet, alpha: float,
                           L: float, max_pairs: int = 64) -> float:
    """max_d mean((Z_d(t)-Z_d(s))^2) / (L |t-s|^(2 alpha)) over grid pairs.

    Uses the observed Y, so with noise present the ratio includes 2 sigma^2 /
    (L gap^2a); call on noiseless draws for a clean membership check.
    """
    n, D, p = obs.Y.shape
    idx = np.unique(np.linspace(0, p - 1, min(max_pairs, p)).astype(int))
    t = idx / (p - 1.0)
    sub = obs.Y[:, :, idx]
    worst = 0.0
    gaps = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gaps, 1.0)
    denom = L * gaps ** (2.0 * alpha)
    for d in range(D):
        diff2 = (sub[:, d, :, None] - sub[:, d, None, :]) ** 2
        mean = diff2.mean(axis=0)
        np.fill_diagonal(mean, 0.0)
        worst = max(worst, float(np.max(mean / denom)))
    return worst

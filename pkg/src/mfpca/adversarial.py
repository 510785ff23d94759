"""Worst-case generators: bump curves, a two-point Gaussian pair, an ω-family.

These are the hard instances against which any first-component estimator can be
stress-tested.  The two-point pair plants two unit-norm candidate directions
whose observation laws are nearly indistinguishable (their Hellinger distance
stays bounded away from 2 as n grows, quantified here through the affinity of
two explicit pD x pD Gaussian covariances).  The ω-family indexes 2^p candidate
directions by a bitstring; its defining feature is that all of them produce the
same values at the sampling nodes, so no estimator can tell them apart from
grid data.  Everything is built from one C-infinity bump with exact zeros
outside its support, which is what makes the node values vanish exactly rather
than approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .simulate import _gl_rule, make_rng

__all__ = [
    "BumpFamily",
    "HypothesisPair",
    "GaussPairCov",
    "OmegaFamily",
    "make_bump_family",
    "eval_bumps",
    "build_pair",
    "hellinger_affinity",
    "build_omega_family",
]


def _phi(t) -> np.ndarray:
    """exp(-1/(1-t^2)) on (-1, 1), identically zero outside (exact zeros)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    u = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - u * u))
    return out


def _varphi_n(t) -> np.ndarray:
    """Mean-zero double bump on (0, 1): phi(4t-3) on [1/2,1), -phi(4t-1) on (0,1/2)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    hi = (t >= 0.5) & (t < 1.0)
    lo = (t > 0.0) & (t < 0.5)
    out[hi] = _phi(4.0 * t[hi] - 3.0)
    out[lo] = -_phi(4.0 * t[lo] - 1.0)
    return out


def _varphi_p(t) -> np.ndarray:
    """Centered variant on (-1/2, 1/2): phi(4t-1) on [0,1/2), -phi(4t+1) on (-1/2,0)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    hi = (t >= 0.0) & (t < 0.5)
    lo = (t > -0.5) & (t < 0.0)
    out[hi] = _phi(4.0 * t[hi] - 1.0)
    out[lo] = -_phi(4.0 * t[lo] + 1.0)
    return out


_BUMPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "phi": _phi,
    "varphi_n": _varphi_n,
    "varphi_p": _varphi_p,
}


@dataclass(frozen=True)
class BumpFamily:
    """The bump trio plus the numeric constants the constructions need.

    ``l_alpha`` is the alpha-Hölder constant of the double bump (the centered
    and the shifted variant are translates of each other, so one constant and
    one squared L2 norm ``norm2`` serve both).
    """

    alpha: float
    l_alpha: float
    norm2: float

    def phi(self, t) -> np.ndarray:
        return _phi(t)

    def varphi_n(self, t) -> np.ndarray:
        return _varphi_n(t)

    def varphi_p(self, t) -> np.ndarray:
        return _varphi_p(t)


@lru_cache(maxsize=32)
def _bump_constants(alpha: float) -> tuple[float, float]:
    # Hölder constant: lattice sup of |dphi| / gap^alpha with 5% headroom, the
    # same estimator style the process generator uses.  norm2 by 32-panel
    # Gauss-Legendre, stable to ~1e-15 for this analytic integrand (the module
    # tests cross-check it against adaptive quadrature).
    t = np.linspace(-0.5, 0.5, 2049)
    v = _varphi_p(t)
    gaps = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gaps, 1.0)
    ratios = np.abs(v[:, None] - v[None, :]) / gaps**alpha
    l_alpha = 1.05 * float(np.max(ratios))
    nodes, weights = _gl_rule(32)
    norm2 = 0.0
    for lo, hi in ((-0.5, 0.0), (0.0, 0.5)):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x = mid + half * nodes
        norm2 += half * float(np.dot(weights, _varphi_p(x) ** 2))
    return l_alpha, norm2


def make_bump_family(alpha: float) -> BumpFamily:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    l_alpha, norm2 = _bump_constants(float(alpha))
    return BumpFamily(alpha=float(alpha), l_alpha=l_alpha, norm2=norm2)


def eval_bumps(family: BumpFamily, which: str, t) -> np.ndarray:
    """Pointwise bump values; exact 0.0 outside the named bump's support."""
    try:
        fn = _BUMPS[which]
    except KeyError:
        raise ValueError(f"unknown bump {which!r}; choose from {sorted(_BUMPS)}") from None
    return fn(t)


# --------------------------------------------------------------- two-point


@dataclass(frozen=True)
class HypothesisPair:
    """Two unit-norm candidate first components sharing a support of size s.

    ``eta0`` is the flat profile 1/sqrt(s); ``eta1`` adds a frequency-x bump
    correction scaled by 1/sqrt(n) and renormalized by C <= 1.  ``phi_grid``
    holds the per-node values of the bump profile a*varphi(x t_h), built by
    index pairing so that its entries cancel exactly in pairs.
    """

    support: np.ndarray
    c: float
    a: float
    x: float
    q: int
    mu1_star: float
    s: int
    n: int
    p: int
    D: int
    family: BumpFamily
    phi_grid: np.ndarray = field(repr=False)

    def eta(self, j: int, t) -> np.ndarray:
        """Profile of hypothesis j on its support components."""
        t = np.asarray(t, dtype=float)
        flat = np.full_like(t, 1.0 / math.sqrt(self.s))
        if j == 0:
            return flat
        if j != 1:
            raise ValueError(f"hypothesis index must be 0 or 1, got {j!r}")
        bump = self.a * _varphi_n(self.x * t)
        return self.c * (flat + bump / math.sqrt(self.n))

    def f_coeffs(self, j: int, t_nodes: np.ndarray) -> np.ndarray:
        """Stacked (D*p) node values of hypothesis j, component-major."""
        vals = self.eta(j, t_nodes)
        out = np.zeros((self.D, len(np.atleast_1d(t_nodes))))
        out[self.support] = vals
        return out.ravel()

    def phi_stacked(self) -> np.ndarray:
        """The (D*p) bump vector: phi_grid on each support component, else 0."""
        out = np.zeros((self.D, self.p))
        out[self.support] = self.phi_grid
        return out.ravel()

    def ones_stacked(self) -> np.ndarray:
        out = np.zeros((self.D, self.p))
        out[self.support] = 1.0
        return out.ravel()


@dataclass(frozen=True)
class GaussPairCov:
    """Observation covariances of the two hypotheses, as dense pD x pD arrays."""

    G0: np.ndarray
    G1: np.ndarray
    sigma: float
    s: int
    p: int
    D: int
    n: int


def _paired_bump_grid(p: int, x: float, q: int) -> np.ndarray:
    """Node values varphi(x t_h) on t_h = h/(p-1), paired to cancel exactly.

    With q = (p-1)/(2x) an integer, node h sits at x*t_h = h/(2q), so the
    negative half covers h in (0, q) and the positive half is the same bump
    values shifted by q.  Writing each magnitude once and storing it with both
    signs makes sum(values) an exact float zero in any summation order.
    """
    vals = np.zeros(p)
    for k in range(1, q):
        w = float(_phi(2.0 * k / q - 1.0))
        vals[k] = -w
        vals[k + q] = w
    return vals


def build_pair(s: int, n: int, p: int, D: int, sigma: float, seed: int) -> tuple[HypothesisPair, GaussPairCov]:
    """Construct the two-point instance at grid size p with planted mu1 = 1/(sp).

    The bump frequency x is 1 when (p-1)/2 is an integer and (p-1)/(p-2) when
    p is even, in both cases making q = (p-1)/(2x) an integer, which is what
    lets the discrete bump pair up into exact cancellations.
    """
    if p < 3:
        raise ValueError(f"need p >= 3 grid nodes, got {p}")
    if not s >= 1:
        raise ValueError(f"support size must be at least 1, got {s}")
    if s > min(n, D):
        raise ValueError(f"support size s={s} cannot exceed min(n, D) = {min(n, D)}")
    if sigma < 0:
        raise ValueError(f"noise level must be nonnegative, got {sigma}")
    if (p - 1) % 2 == 0:
        x, q = 1.0, (p - 1) // 2
    else:
        x, q = (p - 1) / (p - 2), (p - 2) // 2
    family = make_bump_family(0.5)
    a = math.sqrt(x) / math.sqrt(family.norm2)
    c = (1.0 + a**2 * s * family.norm2 / (x * n)) ** -0.5
    mu1_star = 1.0 / (s * p)
    rng = make_rng(seed, 0xADF)
    support = np.sort(rng.choice(D, size=s, replace=False))
    phi_grid = a * _paired_bump_grid(p, x, q)

    pair = HypothesisPair(support=support, c=c, a=a, x=x, q=q, mu1_star=mu1_star,
                          s=s, n=n, p=p, D=D, family=family, phi_grid=phi_grid)
    ones = pair.ones_stacked()
    phi = pair.phi_stacked()
    eye = np.eye(p * D)
    g0 = (mu1_star / s) * np.outer(ones, ones) + sigma**2 * eye
    g1 = mu1_star * c**2 * (
        np.outer(ones, ones) / s
        + (np.outer(ones, phi) + np.outer(phi, ones)) / math.sqrt(s * n)
        + np.outer(phi, phi) / n
    ) + sigma**2 * eye
    cov = GaussPairCov(G0=g0, G1=g1, sigma=sigma, s=s, p=p, D=D, n=n)
    return pair, cov


def _sym_logdet(g: np.ndarray, name: str) -> float:
    """log det via Cholesky; singular PSD maps to -inf, indefinite raises."""
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(g)
        scale = float(np.max(np.abs(w))) if w.size else 0.0
        if w[0] < -1e-12 * max(scale, 1.0):
            raise ValueError(f"{name} is not positive semidefinite (min eig {w[0]:.3e})") from None
        return -math.inf
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def hellinger_affinity(g0: np.ndarray, g1: np.ndarray) -> float:
    """det(G0 G1)^(1/4) / det((G0+G1)/2)^(1/2) for centered Gaussians.

    Accumulated in log space so that dimension-pD determinant products cannot
    underflow.  Returns a value in [0, 1]; identical inputs give exactly 1.0.
    """
    g0 = np.asarray(g0, dtype=float)
    g1 = np.asarray(g1, dtype=float)
    if g0.shape != g1.shape or g0.ndim != 2 or g0.shape[0] != g0.shape[1]:
        raise ValueError(f"need two square matrices of equal size, got {g0.shape} and {g1.shape}")
    ld_avg = _sym_logdet((g0 + g1) / 2.0, "the average covariance")
    if ld_avg == -math.inf:
        raise ValueError("the average covariance (G0+G1)/2 is singular")
    ld0 = _sym_logdet(g0, "G0")
    ld1 = _sym_logdet(g1, "G1")
    if ld0 == -math.inf or ld1 == -math.inf:
        return 0.0
    return min(1.0, math.exp(0.25 * (ld0 + ld1) - 0.5 * ld_avg))


# --------------------------------------------------------------- omega family


@dataclass(frozen=True)
class OmegaFamily:
    """One member of the 2^p-indexed family of candidate first components.

    The profile is c_omega * (gamma + sum_k omega_k p^(-alpha) bump_k(t)) where
    bump_k lives strictly between nodes t_k and t_k + 1/p.  At every sampling
    node all bumps are exactly zero, so the node values are the constant
    c_omega * gamma regardless of omega; scores scaled by sqrt(mu1_star) then
    make the observed data law omega-free, with node amplitude score_scale.
    """

    p: int
    s: int
    D: int
    gamma1: float
    alpha: float
    holder_L: float
    omega: np.ndarray
    family: BumpFamily
    c_omega: float
    gamma: float
    mu1_star: float

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.s)

    @property
    def score_scale(self) -> float:
        """Node amplitude sqrt(mu1_star) * c_omega * gamma in cancelled form.

        Algebraically the c_omega factors cancel, leaving
        gamma * sqrt(L) / (sqrt(2) L_alpha); computing it this way makes the
        value bit-identical across all omega.
        """
        return self.gamma * math.sqrt(self.holder_L) / (math.sqrt(2.0) * self.family.l_alpha)

    def eval(self, t) -> np.ndarray:
        """Profile values; each t can intersect at most the bump it sits over."""
        t = np.asarray(t, dtype=float)
        k = np.clip(np.floor(t * (self.p - 1)).astype(int), 0, self.p - 1)
        u = self.p * (t - k / (self.p - 1.0)) - 0.5
        bump = np.where(self.omega[k] == 1, _varphi_p(u), 0.0)
        return self.c_omega * (self.gamma + self.p ** -self.alpha * bump)

    def grid_values(self) -> np.ndarray:
        """Values at the sampling nodes t_j = j/(p-1): constant c_omega * gamma."""
        t = np.arange(self.p) / (self.p - 1.0)
        return self.eval(t)


def build_omega_family(p: int, s: int, D: int, gamma1: float, omega,
                       alpha: float = 0.5, holder_L: float = 1.0) -> OmegaFamily:
    """Build the candidate component for one bitstring omega of length p."""
    omega = np.asarray(omega)
    if omega.shape != (p,) or not np.isin(omega, (0, 1)).all():
        raise ValueError(f"omega must be a 0/1 vector of length p={p}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not (1 <= s <= D):
        raise ValueError(f"need 1 <= s <= D, got s={s}, D={D}")
    if gamma1 <= 0 or holder_L <= 0:
        raise ValueError("gamma1 and holder_L must be positive")
    if p < 2 or p < s ** (1.0 / (2.0 * alpha)):
        raise ValueError(
            f"grid too coarse: need p >= s^(1/(2 alpha)) = {s ** (1.0 / (2.0 * alpha)):.3g}, got p={p}"
        )
    family = make_bump_family(alpha)
    gamma = gamma1 / math.sqrt(s)
    n_bumps = int(np.sum(omega))
    c_omega = (s * gamma**2 + s * p ** (-2.0 * alpha - 1.0) * family.norm2 * n_bumps) ** -0.5
    mu1_star = holder_L / (2.0 * family.l_alpha**2 * c_omega**2)
    return OmegaFamily(p=p, s=s, D=D, gamma1=gamma1, alpha=alpha, holder_L=holder_L,
                       omega=omega.astype(np.uint8), family=family, c_omega=c_omega,
                       gamma=gamma, mu1_star=mu1_star)

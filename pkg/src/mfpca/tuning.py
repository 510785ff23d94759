"""Penalty levels, the curvature-margin feasibility check, and nuisance estimates.

The penalized estimator needs three knobs: the penalty level lambda, the l1
budget T, and the locality radius eta.  This module computes the closed-form
high-probability penalty level ``lambda1``, the operational rule ``lambda_rule``
built on top of it, and ``oracle_check``, which evaluates the margin condition
under which the curvature argument goes through (and, by bisection, the largest
l1 budget that still satisfies it).  ``estimate_nuisances`` backs out the scale
constants (top eigenvalue, kernel sup-norm, noise level) from raw grid data for
use when they are not known a priori.

Everything here is a pure function of its inputs; nothing is fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import HistogramBasis, smooth
from .covariance import empirical_gram
from .fnspace import CoefVector, norms
from .simulate import ObservationSet

__all__ = [
    "TuningInputs",
    "TuningReport",
    "lambda1",
    "lambda_rule",
    "oracle_check",
    "estimate_nuisances",
]


def _is_integral(x: float) -> bool:
    return float(x).is_integer()


@dataclass(frozen=True)
class TuningInputs:
    """Scale constants the tuning formulas consume.

    ``g_ref`` supplies the norms of the reference direction: the simulation
    truth in oracle mode, the plain PCA pre-estimate in practice mode.  The
    design sizes (n, p, D, M, s) are accepted as reals so that closed-form
    spot evaluations (e.g. D*M = e^2) are expressible; divisibility of p by M
    is enforced only when both are integers.
    """

    n: float
    p: float
    D: float
    M: float
    s: float
    sigma: float
    k_sup: float        # sup-norm of the covariance kernel
    mu1_tilde: float    # top eigenvalue of the basis-projected covariance
    holder_L: float
    alpha: float
    g_ref: CoefVector

    def __post_init__(self) -> None:
        for name in ("n", "p", "D", "M", "s"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("sigma", "k_sup", "mu1_tilde", "holder_L"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be nonnegative and finite, got {v!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.s > self.D:
            raise ValueError(f"sparsity s={self.s!r} cannot exceed D={self.D!r}")
        if _is_integral(self.p) and _is_integral(self.M) and int(self.p) % int(self.M):
            raise ValueError(f"M={int(self.M)} must divide p={int(self.p)}")
        if not isinstance(self.g_ref, CoefVector):
            raise TypeError("g_ref must be a CoefVector")

    @property
    def noise_floor(self) -> float:
        """Per-node noise variance sigma^2 / p."""
        return self.sigma**2 / self.p

    @property
    def zeta(self) -> float:
        """Sub-Gaussian scale of the score-coefficient products, 3*sqrt(mu1_tilde + sigma^2/p)."""
        return 3.0 * math.sqrt(self.mu1_tilde + self.noise_floor)

    @property
    def lambda0(self) -> float:
        """Base concentration level sqrt(2 log(2 p D) / n)."""
        return math.sqrt(2.0 * math.log(2.0 * self.p * self.D) / self.n)


@dataclass(frozen=True)
class TuningReport:
    """Everything oracle_check computed, in one record.

    ``lam`` is the operational penalty (the smallest value the rule admits),
    never below ``4 * lam1`` because the rule only adds nonnegative terms to it.
    ``t_suggest`` is the largest l1 budget for which the margin condition still
    holds (0.0 when none does, inf when the condition does not depend on T).
    """

    lam1: float
    lam: float
    c_t: float
    oracle_lhs: float
    oracle_rhs: float
    oracle_satisfied: bool
    t_suggest: float
    s_ceiling: float
    s_ok: bool

    def __post_init__(self) -> None:
        if self.lam < 4.0 * self.lam1:
            raise ValueError("penalty below 4*lam1; the rule cannot produce this")
        if self.oracle_satisfied != (self.oracle_lhs <= self.oracle_rhs):
            raise ValueError("oracle_satisfied flag contradicts the recorded sides")

    def as_text(self) -> str:
        """Keyed block, one `name = value` line per field, 17 significant digits."""
        rows = [
            ("lambda1", self.lam1),
            ("lambda", self.lam),
            ("C_T", self.c_t),
            ("oracle_lhs", self.oracle_lhs),
            ("oracle_rhs", self.oracle_rhs),
            ("oracle_satisfied", self.oracle_satisfied),
            ("T_suggest", self.t_suggest),
            ("s_ceiling", self.s_ceiling),
            ("s_ok", self.s_ok),
        ]
        out = []
        for key, val in rows:
            text = str(val) if isinstance(val, bool) else format(val, ".17g")
            out.append(f"{key} = {text}")
        return "\n".join(out)


def lambda1(inputs: TuningInputs) -> float:
    """High-probability bound on the penalty-calibrating noise level.

    4 * sqrt((mu1_tilde + sigma^2/p) (k_sup + sigma^2/p))
      * (4 sqrt(log(D M)/n) + log(D M)/n),
    with natural logs.  Decreasing in n, increasing in the product D*M.
    """
    nf = inputs.noise_floor
    scale = math.sqrt((inputs.mu1_tilde + nf) * (inputs.k_sup + nf))
    x = math.log(inputs.D * inputs.M) / inputs.n
    return 4.0 * scale * (4.0 * math.sqrt(x) + x)


def lambda_rule(inputs: TuningInputs, lam1: float) -> float:
    """Smallest admissible penalty built from lambda1 and the reference norms.

    4 * (|g|_H (lam1 + 8 sqrt(L k_sup s)/M^alpha) + |g|_inf sigma^2/p + lam1),
    where the norms are those of ``inputs.g_ref``.  Raises on a zero reference:
    the rule scales with the direction it is protecting and a zero direction
    means the pre-estimate failed upstream.
    """
    g = norms(inputs.g_ref)
    if g.h_norm == 0.0:
        raise ValueError("g_ref is zero; the penalty rule needs a nonzero reference direction")
    bias = 8.0 * math.sqrt(inputs.holder_L * inputs.k_sup * inputs.s) / inputs.M**inputs.alpha
    return 4.0 * (g.h_norm * (lam1 + bias) + g.sup_norm * inputs.noise_floor + lam1)


def _margin_lhs(inputs: TuningInputs, c_t: float) -> float:
    bias = 8.0 * math.sqrt(inputs.holder_L * inputs.k_sup) * inputs.D / inputs.M**inputs.alpha
    stochastic = 108.0 * (inputs.mu1_tilde + inputs.noise_floor) * c_t * (c_t + math.sqrt(2.0))
    return 4.0 * (bias + inputs.noise_floor + stochastic)


def _c_t(inputs: TuningInputs, g_l1: float, t: float) -> float:
    return (g_l1 + t) ** 2 * math.sqrt(3.0 * math.log(inputs.p * inputs.D) / inputs.n)


def _largest_feasible_t(inputs: TuningInputs, g_l1: float, rhs: float) -> float:
    """Largest t with margin lhs(t) <= rhs, by bisection on the increasing lhs."""
    if _margin_lhs(inputs, _c_t(inputs, g_l1, 0.0)) > rhs:
        return 0.0
    # lhs is constant in t when the stochastic term has zero weight.
    if inputs.mu1_tilde + inputs.noise_floor == 0.0:
        return math.inf
    lo, hi = 0.0, 1.0
    while _margin_lhs(inputs, _c_t(inputs, g_l1, hi)) <= rhs:
        hi *= 2.0
        if hi > 2.0**200:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _margin_lhs(inputs, _c_t(inputs, g_l1, mid)) <= rhs:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, lo):
            break
    return lo


def oracle_check(inputs: TuningInputs, t: float, eta: float, rho: float, mu1: float) -> TuningReport:
    """Evaluate the curvature-margin condition at l1 budget ``t``.

    The condition compares
        lhs = 4 (8 sqrt(L k_sup) D / M^alpha + sigma^2/p
               + 108 (mu1_tilde + sigma^2/p) C_T (C_T + sqrt 2))
    with
        rhs = sqrt(mu1) (rho - 8 eta),
    where C_T = (|g_ref|_1 + T)^2 sqrt(3 log(p D)/n).  The locality radius must
    leave a positive margin (8 eta < rho) or there is nothing to check.  The
    report also carries the largest feasible budget and the sparsity ceiling
    s <= sqrt(n / log(p D)).
    """
    if not (t >= 0 and math.isfinite(t)):
        raise ValueError(f"l1 budget T must be nonnegative and finite, got {t!r}")
    if not (mu1 > 0 and math.isfinite(mu1)):
        raise ValueError(f"mu1 must be positive and finite, got {mu1!r}")
    if not (rho > 0 and math.isfinite(rho)) or eta < 0:
        raise ValueError(f"need rho > 0 and eta >= 0, got rho={rho!r}, eta={eta!r}")
    if 8.0 * eta >= rho:
        raise ValueError(
            f"locality radius eta={eta!r} leaves no curvature margin: need 8*eta < rho={rho!r}"
        )
    g_l1 = float(norms(inputs.g_ref).l1_norm)
    c_t = _c_t(inputs, g_l1, t)
    lhs = _margin_lhs(inputs, c_t)
    rhs = math.sqrt(mu1) * (rho - 8.0 * eta)
    lam1 = lambda1(inputs)
    lam = lambda_rule(inputs, lam1)
    s_ceiling = math.sqrt(inputs.n / math.log(inputs.p * inputs.D))
    return TuningReport(
        lam1=lam1,
        lam=lam,
        c_t=c_t,
        oracle_lhs=lhs,
        oracle_rhs=rhs,
        oracle_satisfied=bool(lhs <= rhs),
        t_suggest=_largest_feasible_t(inputs, g_l1, rhs),
        s_ceiling=s_ceiling,
        s_ok=bool(inputs.s <= s_ceiling),
    )


def estimate_nuisances(
    obs: ObservationSet,
    basis: HistogramBasis,
    alpha: float | None = None,
    holder_L: float | None = None,
) -> tuple[float, float, float]:
    """Back out (mu1_tilde_hat, k_sup_hat, sigma_hat) from raw grid observations.

    sigma^2 is estimated as half the mean squared first difference of Y along
    the grid; consecutive-node noise differences contribute 2 sigma^2 while the
    smooth process contributes its own squared increment, at most L dt^(2 alpha)
    per node pair.  When (alpha, holder_L) are supplied, half that worst-case
    increment is subtracted as a plug-in correction; otherwise the raw half-mean
    is returned, biased upward by half the process increment.  The top
    eigenvalue of the empirical Gram of the smoothed coefficients estimates
    mu1_tilde + sigma^2/p, so the noise floor is subtracted, and the kernel
    sup-norm comes from the largest per-node empirical variance minus sigma^2.
    All three estimates are clamped at zero.
    """
    if obs.n < 2:
        raise ValueError(f"need at least 2 observations to separate noise from signal, got n={obs.n}")
    y = obs.Y
    p = obs.p
    diffs = np.diff(y, axis=2)
    sigma2 = 0.5 * float(np.mean(diffs**2))
    if alpha is not None and holder_L is not None:
        dt = 1.0 / (p - 1)
        sigma2 = max(0.0, sigma2 - 0.5 * holder_L * dt ** (2.0 * alpha))
    top = empirical_gram(smooth(y, basis)).norm2()
    mu1_tilde_hat = max(0.0, top - sigma2 / p)
    k_sup_hat = max(0.0, float(np.var(y, axis=0, ddof=1).max()) - sigma2)
    return mu1_tilde_hat, k_sup_hat, math.sqrt(sigma2)

"""Penalized rank-one fitting of the coefficient covariance.

The estimator minimizes ||G - a a^T||_F^2 + lambda ||a||_1 (the l1 norm in
function units) over the intersection of an l1 ball of radius T (function
units) and a Euclidean ball of radius eta around a pre-estimate, by projected
proximal gradient with backtracking.  The objective is quartic and nonconvex;
what the theory guarantees, and what this module certifies, is a stationary
point with a small prox-gradient residual, plus strong convexity of the
smooth part on the ball when 8 eta < sqrt(mu1) - sqrt(mu2).

Internally the smooth objective is handled without its ||G||_F^2 constant so
that descent tests compare O(mu1^2) quantities instead of a large constant
plus a small difference; the public objective() reports the full value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .covariance import GramOperator
from .fnspace import (
    CoefVector,
    _values,
    project_joint,
    soft_threshold,
)

__all__ = [
    "SolverConfig",
    "SolveResult",
    "PreEstimate",
    "objective",
    "gradient_smooth",
    "hessian_quadratic_form",
    "pre_estimate",
    "solve_penalized",
    "extract_f",
    "aligned_error",
]

_FEAS_TOL = 1e-9


def _check_shapes(G: GramOperator, a: np.ndarray) -> None:
    if a.shape != (G.dim,):
        raise ValueError(f"coefficient vector has shape {a.shape}, "
                         f"operator needs ({G.dim},)")


def objective(G: GramOperator, a, lam: float = 0.0) -> float:
    """||G - a a^T||_F^2 + lam * M^(-1/2) * sum_i |a_i|.

    The Frobenius reduction of the Hilbert-Schmidt distance is exact in an
    orthonormal basis: the cross term is -2 a^T G a and the rank-one term is
    ||a||^4.
    """
    v = _values(a)
    _check_shapes(G, v)
    nsq = float(v @ v)
    val = G.fro_norm2() - 2.0 * G.quad(v) + nsq * nsq
    if lam:
        val += lam * float(np.sum(np.abs(v))) / math.sqrt(G.M)
    return val


def gradient_smooth(G: GramOperator, a) -> CoefVector:
    """Gradient of the smooth part: 4 (||a||^2 a - G a)."""
    v = _values(a)
    _check_shapes(G, v)
    g = 4.0 * (float(v @ v) * v - G.matvec(v))
    return CoefVector(coeffs=g, M=G.M, D=G.D)


def hessian_quadratic_form(G: GramOperator, a, x) -> float:
    """Second differential of the smooth part along x:

    4 (||a||^2 ||x||^2 + 2 <a,x>^2 - <x, G x>).
    """
    va, vx = _values(a), _values(x)
    _check_shapes(G, va)
    _check_shapes(G, vx)
    return 4.0 * (float(va @ va) * float(vx @ vx)
                  + 2.0 * float(va @ vx) ** 2
                  - G.quad(vx))


# ---------------------------------------------------------------------------
# pre-estimate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreEstimate:
    """Top eigenpair scaled to g_init = sqrt(mu1) v1, with spectrum context."""

    g: CoefVector
    mu1: float
    mu2: float
    degenerate: bool
    iterations: int

    @property
    def gap(self) -> float:
        return math.sqrt(max(self.mu1, 0.0)) - math.sqrt(max(self.mu2, 0.0))


def _power_iterate(matvec, v0: np.ndarray, tol: float, max_iters: int,
                   deflate: Optional[np.ndarray] = None):
    v = v0 / np.linalg.norm(v0)
    if deflate is not None:
        v -= deflate * (deflate @ v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0, v, 0, True
        v /= nv
    lam = 0.0
    for it in range(1, max_iters + 1):
        w = matvec(v)
        if deflate is not None:
            w -= deflate * (deflate @ w)
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return lam, v, it, True
        v = w / nw
        if resid <= tol * max(abs(lam), 1e-300):
            return lam, v, it, True
    return lam, v, max_iters, False


def pre_estimate(G: GramOperator, restarts: int = 3, tol: float = 1e-12,
                 max_iters: int = 20000, seed: int = 0x5EED) -> PreEstimate:
    """g_init = sqrt(mu_hat_1) v_hat_1 by restarted power iteration.

    Restarts are independent random directions, not deflations; the best
    Rayleigh quotient wins.  A second, deflated run estimates mu2 so a
    (near-)tied spectrum is flagged instead of silently picking a direction.
    Raises on a zero operator, and on non-convergence of every restart.
    """
    rng = np.random.default_rng(seed)
    best = None
    iters_total = 0
    any_converged = False
    for _ in range(max(1, restarts)):
        lam, v, its, ok = _power_iterate(G.matvec, rng.standard_normal(G.dim),
                                         tol, max_iters)
        iters_total += its
        any_converged = any_converged or ok
        if best is None or lam > best[0]:
            best = (lam, v)
    mu1, v1 = best
    if mu1 <= 0.0 or not np.isfinite(mu1):
        raise ValueError("operator has no positive leading eigenvalue")
    if not any_converged:
        raise RuntimeError(f"power iteration did not converge in {max_iters} "
                           "iterations from any restart")
    mu2, _, its2, _ = _power_iterate(G.matvec, rng.standard_normal(G.dim),
                                     tol, max_iters, deflate=v1)
    iters_total += its2
    mu2 = min(max(mu2, 0.0), mu1)
    degenerate = (math.sqrt(mu1) - math.sqrt(mu2)) <= 1e-8 * math.sqrt(mu1)
    top = int(np.argmax(np.abs(v1)))
    if v1[top] < 0.0:
        v1 = -v1
    g = CoefVector(coeffs=math.sqrt(mu1) * v1, M=G.M, D=G.D)
    return PreEstimate(g=g, mu1=mu1, mu2=mu2, degenerate=degenerate,
                       iterations=iters_total)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Penalty, constraint geometry, and step policy for solve_penalized.

    lam and T are in function-L1 units; eta is the Euclidean ball radius
    around the init.  step_rule "backtracking" halves from the curvature-scale
    default until sufficient decrease; "fixed" uses gamma as given.
    """

    lam: float = 0.0
    T: float = math.inf
    eta: float = math.inf
    max_iters: int = 2000
    step_rule: str = "backtracking"
    gamma: Optional[float] = None
    beta: float = 0.5
    armijo_c: float = 1e-4
    tol_stationarity: float = 1e-9
    tol_step: float = 1e-13
    dykstra: bool = False

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError(f"penalty must be nonnegative, got {self.lam}")
        if not self.T > 0.0 or not self.eta > 0.0:
            raise ValueError("constraint radii must be positive")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "fixed" and not (self.gamma and self.gamma > 0):
            raise ValueError("fixed step rule needs gamma > 0")
        if not (self.tol_stationarity > 0 and self.tol_step > 0):
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0,1), got {self.beta}")


@dataclass(frozen=True)
class SolveResult:
    g_hat: CoefVector
    f_hat: CoefVector
    mu_hat: float
    objective_trace: np.ndarray
    stationarity_gap: float
    iterations: int
    binding: dict

    def __post_init__(self):
        diffs = np.diff(self.objective_trace)
        if diffs.size and float(diffs.max()) > 1e-12:
            raise AssertionError("objective trace increased")


def _binding_flags(a: np.ndarray, center: np.ndarray, cfg: SolverConfig,
                   l1_radius: float) -> dict:
    l1 = float(np.sum(np.abs(a)))
    dist = float(np.linalg.norm(a - center))
    return {
        "l1_constraint": math.isfinite(l1_radius)
        and l1 >= l1_radius - _FEAS_TOL * max(1.0, l1_radius),
        "ball": math.isfinite(cfg.eta)
        and dist >= cfg.eta - _FEAS_TOL * max(1.0, cfg.eta),
    }


def _assert_feasible(a: np.ndarray, center: np.ndarray, cfg: SolverConfig,
                     l1_radius: float) -> None:
    l1 = float(np.sum(np.abs(a)))
    if l1 > l1_radius + _FEAS_TOL * max(1.0, l1_radius):
        raise RuntimeError("projected iterate escaped the l1 ball")
    dist = float(np.linalg.norm(a - center))
    if dist > cfg.eta + _FEAS_TOL * max(1.0, cfg.eta if math.isfinite(cfg.eta)
                                        else 1.0):
        raise RuntimeError("projected iterate escaped the locality ball")


def solve_penalized(G: GramOperator, config: SolverConfig,
                    init: CoefVector) -> SolveResult:
    """Projected proximal gradient from (and localized around) init.

    One step is soft-threshold -> l1-ball projection -> locality-ball
    projection; the composed map is not an exact joint prox, so acceptance is
    a sufficient-decrease test on the composite objective and the certificate
    reported is the prox-gradient residual ||a+ - a|| / gamma.
    """
    v0 = _values(init)
    _check_shapes(G, v0)
    center = v0.copy()
    rootM = math.sqrt(G.M)
    l1_radius = config.T * rootM          # coefficient-unit radius
    tau_unit = config.lam / rootM         # threshold per unit step
    pen = (lambda a: config.lam * float(np.sum(np.abs(a))) / rootM) \
        if config.lam else (lambda a: 0.0)

    a = project_joint(v0, center, config.eta, l1_radius,
                      dykstra=config.dykstra)
    if float(np.sum(np.abs(a))) > l1_radius + _FEAS_TOL * max(1.0, l1_radius):
        # Dykstra converged onto the l1 ball's closest face instead of a
        # common point: the two constraint sets do not intersect
        raise ValueError(
            "l1 radius T and locality ball eta have empty intersection "
            "around this init"
        )
    Ga = G.matvec(a)

    def centered(avec, Gavec):
        nsq = float(avec @ avec)
        return -2.0 * float(avec @ Gavec) + nsq * nsq + pen(avec)

    fro2 = G.fro_norm2()
    Fa = centered(a, Ga)
    if not math.isfinite(Fa):
        raise RuntimeError("objective is not finite at the initial point")
    trace = [Fa]
    gamma0 = config.gamma if config.step_rule == "fixed" else \
        1.0 / (8.0 * (G.norm2() + 3.0 * float(a @ a)))

    def prox_step(avec, grad, gamma):
        x = soft_threshold(avec - gamma * grad, gamma * tau_unit)
        return project_joint(x, center, config.eta, l1_radius,
                             dykstra=config.dykstra)

    gap = math.inf
    iterations = 0
    for it in range(1, config.max_iters + 1):
        nsq = float(a @ a)
        grad = 4.0 * (nsq * a - Ga)
        gamma = gamma0
        accepted = False
        if config.step_rule == "fixed":
            a_new = prox_step(a, grad, gamma)
            Ga_new = G.matvec(a_new)
            F_new = centered(a_new, Ga_new)
            accepted = True
        else:
            for _ in range(64):
                a_new = prox_step(a, grad, gamma)
                Ga_new = G.matvec(a_new)
                F_new = centered(a_new, Ga_new)
                step2 = float(np.sum((a_new - a) ** 2))
                if F_new <= Fa - config.armijo_c * step2 / gamma:
                    accepted = True
                    break
                gamma *= config.beta
        if not math.isfinite(F_new):
            raise RuntimeError(f"objective diverged at iteration {it}")
        iterations = it
        if not accepted:
            # no step at any scale improves the objective beyond float noise:
            # numerically stationary
            gap = float(np.linalg.norm(a_new - a)) / gamma
            break
        delta = float(np.linalg.norm(a_new - a))
        a, Ga, Fa = a_new, Ga_new, F_new
        trace.append(Fa)
        gap = delta / gamma
        if gap <= config.tol_stationarity:
            break
        if delta <= config.tol_step * max(1.0, float(np.linalg.norm(a))):
            break
    else:
        if config.max_iters == 0:
            # report the residual a single probe step would take
            probe = prox_step(a, 4.0 * (float(a @ a) * a - Ga), gamma0)
            gap = float(np.linalg.norm(probe - a)) / gamma0

    _assert_feasible(a, center, config, l1_radius)
    mu_hat = float(a @ a)
    g_hat = CoefVector(coeffs=a.copy(), M=G.M, D=G.D)
    f = a / math.sqrt(mu_hat) if mu_hat > 0.0 else np.zeros_like(a)
    return SolveResult(
        g_hat=g_hat,
        f_hat=CoefVector(coeffs=f, M=G.M, D=G.D),
        mu_hat=mu_hat,
        objective_trace=np.asarray(trace) + fro2,
        stationarity_gap=gap,
        iterations=iterations,
        binding=_binding_flags(a, center, config, l1_radius),
    )


def extract_f(result: SolveResult) -> CoefVector:
    """Unit-norm first component from a solve; rejects the zero estimate."""
    if result.mu_hat <= 0.0:
        raise ValueError("estimate is zero; no direction to extract")
    return result.f_hat


def aligned_error(est, truth) -> float:
    """Squared error after optimal sign alignment: min_s ||est - s truth||^2."""
    e, t = _values(est), _values(truth)
    if e.shape != t.shape:
        raise ValueError(f"shape mismatch: {e.shape} vs {t.shape}")
    return float(min(np.sum((e - t) ** 2), np.sum((e + t) ** 2)))

"""Coefficient-space geometry for D-variate curves in a histogram basis.

A function h = (h_1, ..., h_D) with each component expanded on M orthonormal
histogram cells is stored as a flat coefficient vector of length M*D, ordered
component-major: entry (d, lam) lives at index d*M + lam.  Because the basis
is orthonormal in L2 and the space inner product sums component inner
products, every Hilbert-space quantity reduces to plain Euclidean arithmetic
on the flat vector.  The exceptions are the mixed-unit norms: the function L1
norm is M^(-1/2) times the coefficient l1 norm, and the sup norm is sqrt(M)
times the largest coefficient magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CoefVector",
    "NormReport",
    "h_inner",
    "norms",
    "tensor_hs_norm",
    "sign_map",
    "soft_threshold",
    "project_l2_ball",
    "project_l1_ball",
    "project_joint",
]


@dataclass(frozen=True)
class CoefVector:
    """Flat coefficient vector of a D-variate function, component-major."""

    coeffs: np.ndarray
    M: int
    D: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if self.M < 1 or self.D < 1:
            raise ValueError(f"need M >= 1 and D >= 1, got M={self.M}, D={self.D}")
        if c.ndim != 1 or c.size != self.M * self.D:
            raise ValueError(
                f"coefficient vector must be flat with length M*D={self.M * self.D}, "
                f"got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficient vector contains non-finite entries")
        object.__setattr__(self, "coeffs", c)

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.coeffs.astype(dtype)
        return self.coeffs

    def by_component(self) -> np.ndarray:
        """View of the coefficients as a (D, M) array, row d = component d."""
        return self.coeffs.reshape(self.D, self.M)

    def with_coeffs(self, coeffs: np.ndarray) -> "CoefVector":
        return replace(self, coeffs=coeffs)


@dataclass(frozen=True)
class NormReport:
    h_norm: float      # Hilbert norm, = Euclidean norm of the coefficients
    l1_norm: float     # function L1 norm, M^(-1/2) * coefficient l1
    sup_norm: float    # function sup norm, sqrt(M) * max |coefficient|
    l0_count: int      # number of components d with any nonzero coefficient


def _values(a) -> np.ndarray:
    v = a.coeffs if isinstance(a, CoefVector) else np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a flat coefficient vector, got shape {v.shape}")
    return v


def h_inner(a, b) -> float:
    """Space inner product <a, b>; plain dot product of the flat coefficients."""
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    return float(np.dot(va, vb))


def norms(a: CoefVector) -> NormReport:
    """All norms of a coefficient vector in function units."""
    c = a.coeffs
    # The coefficient l1 norm is evaluated as <Sign(a), a> so that it agrees
    # bit-for-bit with the same quantity computed through h_inner; np.sum and
    # the BLAS dot accumulate in different orders.
    coeff_l1 = h_inner(sign_map(c), c)
    active = np.any(a.by_component() != 0.0, axis=1)
    return NormReport(
        h_norm=float(np.linalg.norm(c)),
        l1_norm=coeff_l1 / np.sqrt(a.M),
        sup_norm=float(np.sqrt(a.M) * np.max(np.abs(c))) if c.size else 0.0,
        l0_count=int(np.count_nonzero(active)),
    )


def tensor_hs_norm(a, b) -> float:
    """Hilbert-Schmidt norm of the rank-one tensor a (x) b, i.e. ||a||*||b||."""
    return float(np.linalg.norm(_values(a)) * np.linalg.norm(_values(b)))


def sign_map(a) -> np.ndarray:
    """Entrywise sign with Sign(0) = +1, so <Sign(a), a> is the coeff l1 norm."""
    v = _values(a)
    return np.where(v >= 0.0, 1.0, -1.0)


def soft_threshold(a, tau: float) -> np.ndarray:
    """Entrywise shrinkage sign(a_i) * max(|a_i| - tau, 0)."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    v = _values(a)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def project_l2_ball(a, center, radius: float) -> np.ndarray:
    """Euclidean projection onto the ball of given radius around center."""
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    v, c = _values(a), _values(center)
    if v.shape != c.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {c.shape}")
    if np.isinf(radius):
        return v.copy()
    diff = v - c
    dist = np.linalg.norm(diff)
    if dist <= radius:
        return v.copy()
    return c + diff * (radius / dist)


def project_l1_ball(a, radius_coeff: float) -> np.ndarray:
    """Euclidean projection onto {x : sum_i |x_i| <= radius_coeff}.

    The radius is in coefficient units; a function L1 constraint ||h||_1 <= T
    translates to radius_coeff = sqrt(M) * T.  Sort-and-threshold algorithm:
    the projection is a soft threshold at the level theta >= 0 that makes the
    result's l1 norm hit the radius, and theta is found in closed form from
    the sorted magnitudes.
    """
    if radius_coeff < 0:
        raise ValueError(f"radius must be nonnegative, got {radius_coeff}")
    v = _values(a)
    if np.isinf(radius_coeff):
        return v.copy()
    if radius_coeff == 0.0:
        return np.zeros_like(v)
    mags = np.abs(v)
    if mags.sum() <= radius_coeff:
        return v.copy()
    u = np.sort(mags)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    hit = np.nonzero(u * j > css - radius_coeff)[0]
    if hit.size == 0:
        # radius below float resolution of the magnitudes; projection is ~0
        return np.zeros_like(v)
    rho = hit[-1]
    theta = (css[rho] - radius_coeff) / (rho + 1.0)
    return np.sign(v) * np.maximum(mags - theta, 0.0)


def project_joint(
    a,
    center,
    eta: float,
    radius_coeff: float,
    dykstra: bool = False,
    max_iter: int = 2000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Project onto the intersection of the l1 ball and the l2 ball.

    The default path applies project_l1_ball then project_l2_ball, which is
    not the exact joint projection; the result is checked for feasibility and
    the Dykstra alternating scheme is run whenever the sequential point
    violates either constraint (or always, when dykstra=True).
    """
    v, c = _values(a), _values(center)
    seq = project_l2_ball(project_l1_ball(v, radius_coeff), c, eta)
    if not dykstra and _joint_feasible(seq, c, eta, radius_coeff):
        return seq
    # Dykstra's alternating projections: exact for two closed convex sets.
    x = v.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = project_l1_ball(x + p, radius_coeff)
        p = x + p - y
        x_new = project_l2_ball(y + q, c, eta)
        q = y + q - x_new
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x_new)):
            x = x_new
            break
        x = x_new
    return x


def _joint_feasible(x: np.ndarray, center: np.ndarray, eta: float,
                    radius_coeff: float, slack: float = 1e-9) -> bool:
    ok_l1 = np.isinf(radius_coeff) or np.abs(x).sum() <= radius_coeff * (1 + slack) + slack
    ok_l2 = np.isinf(eta) or np.linalg.norm(x - center) <= eta * (1 + slack) + slack
    return bool(ok_l1 and ok_l2)

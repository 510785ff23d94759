import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mfpca.fnspace import (
    CoefVector,
    h_inner,
    norms,
    project_joint,
    project_l1_ball,
    project_l2_ball,
    sign_map,
    soft_threshold,
    tensor_hs_norm,
)


def vec_strategy(size=None, max_size=24):
    if size is None:
        return st.integers(2, max_size).flatmap(
            lambda n: arrays(np.float64, n,
                             elements=st.floats(-1e6, 1e6, allow_nan=False)))
    return arrays(np.float64, size, elements=st.floats(-1e6, 1e6, allow_nan=False))


def test_unit_conversions_single_cell_spike():
    # M=4, one component, coefficient 2 on the first cell: the function is
    # 2*phi_0 = 4 on [0, 1/4), so L1 integral 1, sup 4, Hilbert norm 2.
    cv = CoefVector(np.array([2.0, 0.0, 0.0, 0.0]), M=4, D=1)
    rep = norms(cv)
    assert rep.h_norm == 2.0
    assert rep.l1_norm == 1.0
    assert rep.sup_norm == 4.0
    assert rep.l0_count == 1


def test_l0_counts_components_not_cells():
    c = np.zeros(6)
    c[0] = 0.5
    c[1] = -0.25          # same component as c[0]
    c[5] = 1.0            # third component
    rep = norms(CoefVector(c, M=2, D=3))
    assert rep.l0_count == 2


def test_h_inner_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        h_inner(np.ones(3), np.ones(4))


def test_coefvector_validation():
    with pytest.raises(ValueError):
        CoefVector(np.array([1.0, np.nan]), M=2, D=1)
    with pytest.raises(ValueError):
        CoefVector(np.ones(3), M=2, D=2)
    with pytest.raises(ValueError):
        CoefVector(np.ones(4), M=4, D=0)


def test_soft_threshold_negative_tau_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        soft_threshold(np.ones(3), -0.1)


def test_inf_radii_are_identity():
    v = np.array([3.0, -4.0, 1.0])
    assert np.array_equal(project_l2_ball(v, np.zeros(3), np.inf), v)
    assert np.array_equal(project_l1_ball(v, np.inf), v)
    assert np.array_equal(soft_threshold(v, 0.0), v)


@given(vec_strategy())
@settings(deadline=None)
def test_sign_inner_is_coeff_l1_exactly(c):
    M = 2
    while c.size % M:
        M = 1
    cv = CoefVector(c, M=M, D=c.size // M)
    coeff_l1 = h_inner(sign_map(cv), cv)
    assert norms(cv).l1_norm == coeff_l1 / np.sqrt(M)
    assert coeff_l1 == pytest.approx(np.sum(np.abs(c)), rel=1e-12, abs=1e-12)


@given(vec_strategy(), st.floats(0.0, 1e3))
@settings(deadline=None)
def test_soft_threshold_shrinks_l1(c, tau):
    out = soft_threshold(c, tau)
    assert np.sum(np.abs(out)) <= np.sum(np.abs(c)) + 1e-9
    # per-entry: shrunk by exactly min(tau, |c_i|)
    assert np.all(np.abs(out) <= np.maximum(np.abs(c) - tau, 0.0) + 1e-12)


@given(vec_strategy(8), vec_strategy(8))
@settings(deadline=None)
def test_hs_norm_matches_materialized_outer(a, b):
    direct = np.sqrt(np.sum(np.outer(a, b) ** 2))
    assert tensor_hs_norm(a, b) == pytest.approx(direct, rel=1e-10, abs=1e-10)


@given(vec_strategy(6), vec_strategy(6), st.floats(0.0, 100.0))
@settings(deadline=None)
def test_l2_projection_feasible_idempotent_nonexpansive(v, c, r):
    p = project_l2_ball(v, c, r)
    # feasibility up to roundoff, which scales with the travel distance
    assert np.linalg.norm(p - c) <= r + 1e-9 * (1 + np.linalg.norm(v - c))
    p2 = project_l2_ball(p, c, r)
    assert np.allclose(p, p2, rtol=0, atol=1e-9 * (1 + np.linalg.norm(p)))
    w = v * 0.5 + 1.0
    q = project_l2_ball(w, c, r)
    assert np.linalg.norm(p - q) <= np.linalg.norm(v - w) * (1 + 1e-9) + 1e-12


@given(vec_strategy(6), st.floats(0.0, 100.0))
@settings(deadline=None)
def test_l1_projection_feasible_idempotent_nonexpansive(v, r):
    p = project_l1_ball(v, r)
    assert np.abs(p).sum() <= r * (1 + 1e-10) + 1e-9
    p2 = project_l1_ball(p, r)
    assert np.allclose(p, p2, rtol=0, atol=1e-9 * (1 + np.abs(p).sum()))
    w = np.roll(v, 1) * 0.25
    q = project_l1_ball(w, r)
    assert np.linalg.norm(p - q) <= np.linalg.norm(v - w) * (1 + 1e-9) + 1e-12


@given(vec_strategy(6), vec_strategy(6), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
@settings(deadline=None, max_examples=60)
def test_joint_projection_feasible_both_paths(v, c, eta, r):
    # the intersection must be nonempty: project the center into the l1 ball
    c = project_l1_ball(c, 0.9 * r)
    seq = project_joint(v, c, eta, r)
    dyk = project_joint(v, c, eta, r, dykstra=True)
    for x in (seq, dyk):
        assert np.abs(x).sum() <= r * (1 + 1e-6) + 1e-6
        assert np.linalg.norm(x - c) <= eta * (1 + 1e-6) + 1e-6
    # Dykstra converges to the exact projection, so it is never farther away
    assert np.linalg.norm(dyk - v) <= np.linalg.norm(seq - v) * (1 + 1e-6) + 1e-6

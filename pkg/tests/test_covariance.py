import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpca.basis import make_basis, make_grid, smooth
from mfpca.covariance import (
    GramOperator,
    KernelSpec,
    _exact_cell_integrals,
    _power_topk,
    _riemann_block,
    empirical_gram,
    exact_gamma_phi,
    gamma_phi_top_eigs,
    kernel_eval,
    kernel_matrix,
    load_gram_csv,
    projection_bias_bound,
    projection_bias_report,
    psd_repair,
    remainder_report,
    rk_bound,
    save_gram_csv,
)
from mfpca.simulate import build_sparse_model


def random_psd(rng, dim):
    A = rng.standard_normal((dim, dim))
    return A @ A.T / dim


# ---------------------------------------------------------------------------
# GramOperator
# ---------------------------------------------------------------------------

def test_gram_requires_exactly_one_representation():
    with pytest.raises(ValueError):
        GramOperator(2, 2)
    with pytest.raises(ValueError):
        GramOperator(2, 2, dense=np.eye(4), factor=np.ones((3, 4)))


def test_gram_rejects_asymmetric_dense():
    G = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="symmetric"):
        GramOperator.from_dense(G, 2, 1)


def test_gram_rejects_empty_factor():
    with pytest.raises(ValueError):
        GramOperator.from_factor(np.zeros((0, 4)), 2, 2)


def test_dense_and_factored_agree_everywhere():
    rng = np.random.default_rng(7)
    n, M, D = 9, 3, 4
    W = rng.standard_normal((n, M * D))
    dense = GramOperator.from_dense(W.T @ W / n, M, D)
    fact = GramOperator.from_factor(W, M, D)
    v = rng.standard_normal(M * D)
    assert np.allclose(dense.matvec(v), fact.matvec(v), atol=1e-12)
    assert abs(dense.quad(v) - fact.quad(v)) <= 1e-12 * (1 + abs(dense.quad(v)))
    assert abs(dense.fro_norm2() - fact.fro_norm2()) <= 1e-12 * dense.fro_norm2()
    assert np.allclose(fact.matrix, dense.matrix, atol=1e-13)

    wd, Vd = dense.top_eigs(3)
    wf, Vf = fact.top_eigs(3)
    assert np.allclose(wd, wf, atol=1e-10)
    for j in range(3):
        if wd[j] > 1e-12:
            assert abs(abs(Vd[:, j] @ Vf[:, j]) - 1.0) < 1e-8


def test_power_iteration_matches_eigh():
    rng = np.random.default_rng(21)
    G = random_psd(rng, 30)
    w_true = np.sort(np.linalg.eigvalsh(G))[::-1]
    vals, vecs = _power_topk(lambda v: G @ v, 30, 3)
    assert np.allclose(vals, w_true[:3], atol=1e-8)
    for j in range(3):
        resid = G @ vecs[:, j] - vals[j] * vecs[:, j]
        assert np.linalg.norm(resid) < 1e-7


def test_quad_matches_matvec_definition():
    rng = np.random.default_rng(3)
    W = rng.standard_normal((40, 12))
    op = GramOperator.from_factor(W, 4, 3)
    v = rng.standard_normal(12)
    assert abs(op.quad(v) - v @ op.matvec(v)) < 1e-11


def test_empirical_gram_picks_and_forces_representation():
    rng = np.random.default_rng(5)
    basis = make_basis(4, 16)
    Y = rng.standard_normal((6, 3, 16))
    sam = smooth(Y, basis)
    auto = empirical_gram(sam)
    forced = empirical_gram(sam, materialize=False)
    assert auto.is_dense
    assert not forced.is_dense
    assert np.allclose(auto.matrix, forced.matrix, atol=1e-13)
    with pytest.raises(ValueError, match="empty"):
        empirical_gram(smooth(Y, basis).__class__(
            ytilde=np.zeros((0, 12)), n=0, D=3, M=4, p=16))


def test_psd_repair_clamps_debris_and_rejects_real_negatives():
    G = np.diag([1.0, -1e-14])
    fixed = psd_repair(G)
    w = np.linalg.eigvalsh(fixed)
    assert w[0] >= 0.0
    assert abs(w[1] - 1.0) < 1e-12
    with pytest.raises(ValueError, match="not PSD"):
        psd_repair(np.diag([1.0, -1e-6]))


# ---------------------------------------------------------------------------
# kernels and the exact coefficient covariance
# ---------------------------------------------------------------------------

def test_kernel_spec_validation():
    with pytest.raises(ValueError, match="kind"):
        KernelSpec(kind="matern")
    with pytest.raises(ValueError, match="Hurst"):
        KernelSpec(kind="fbm", hurst=0.0)
    with pytest.raises(ValueError, match="Hurst"):
        KernelSpec(kind="fbm", hurst=1.0)
    with pytest.raises(ValueError, match="square"):
        KernelSpec(kind="brownian", loadings=np.ones((2, 3)))
    with pytest.raises(ValueError, match="model"):
        KernelSpec(kind="spectral")


def test_kernel_values_closed_forms():
    bm = KernelSpec(kind="brownian")
    assert kernel_eval(bm, 0, 0, 0.3, 0.7) == 0.3
    assert kernel_eval(bm, 0, 0, 1.0, 1.0) == 1.0
    fbm = KernelSpec(kind="fbm", hurst=0.7)
    assert abs(kernel_eval(fbm, 0, 0, 0.3, 0.3) - 0.3 ** 1.4) < 1e-15
    # distinct components of an unmixed kernel are independent
    assert kernel_eval(bm, 0, 1, 0.5, 0.5) == 0.0


def test_kernel_loadings_mix_components():
    A = np.array([[1.0, 0.0], [1.0, 2.0]])
    spec = KernelSpec(kind="brownian", loadings=A)
    mix = A @ A.T
    assert spec.D == 2
    for d in range(2):
        for dp in range(2):
            want = mix[d, dp] * 0.25
            assert abs(kernel_eval(spec, d, dp, 0.25, 0.8) - want) < 1e-15
    # regularity constants follow the worst diagonal weight
    assert spec.sup_norm == pytest.approx(5.0)
    assert spec.holder_L == pytest.approx(5.0)
    assert spec.alpha == 0.5


def brownian_cell_integral(a, b, c, d):
    # closed form of the double integral of min(s,t) over [a,b] x [c,d]
    # for histogram cells, which are identical or disjoint
    if b <= c:
        return (b * b - a * a) / 2.0 * (d - c)
    if d <= a:
        return (d * d - c * c) / 2.0 * (b - a)
    assert (a, b) == (c, d)
    return a * (b - a) ** 2 + (b - a) ** 3 / 3.0


@pytest.mark.parametrize("M", [2, 4])
def test_exact_cell_integrals_match_brownian_closed_form(M):
    spec = KernelSpec(kind="brownian")
    basis = make_basis(M, 8 * M)
    got = _exact_cell_integrals(spec, basis, 0, 0)
    edges = np.arange(M + 1) / M
    want = np.array([
        [brownian_cell_integral(edges[i], edges[i + 1], edges[j], edges[j + 1])
         for j in range(M)]
        for i in range(M)
    ])
    assert np.max(np.abs(got - want)) < 2e-10


def test_exact_cell_integrals_raise_when_not_converging():
    spec = KernelSpec(kind="brownian")
    basis = make_basis(2, 8)
    with pytest.raises(RuntimeError, match="stabilize"):
        _exact_cell_integrals(spec, basis, 0, 0, tol=1e-10, max_doublings=2)


def test_exact_gamma_phi_noise_only():
    # zero loadings kill the process part, leaving the exact noise diagonal
    spec = KernelSpec(kind="brownian", loadings=np.array([[0.0]]))
    basis = make_basis(4, 16)
    op = exact_gamma_phi(spec, basis, sigma2=0.09)
    assert np.allclose(op.matrix, (0.09 / 16) * np.eye(4), atol=1e-15)


def test_exact_gamma_phi_rejects_negative_noise():
    with pytest.raises(ValueError, match="nonnegative"):
        exact_gamma_phi(KernelSpec(kind="brownian"), make_basis(2, 8), -1.0)


def test_exact_gamma_phi_matches_literal_double_sum():
    # independent oracle: plain Python loop over grid pairs
    spec = KernelSpec(kind="brownian")
    M, p = 2, 16
    basis = make_basis(M, p)
    tk = basis.grid.points
    q = p // M
    B = np.zeros((M, M))
    for lam in range(M):
        for lamp in range(M):
            acc = 0.0
            for h in range(lam * q, (lam + 1) * q):
                for hp in range(lamp * q, (lamp + 1) * q):
                    acc += min(tk[h], tk[hp]) * M
            B[lam, lamp] = acc / p ** 2
    sigma2 = 0.25
    op = exact_gamma_phi(spec, basis, sigma2)
    assert np.max(np.abs(op.matrix - (B + sigma2 / p * np.eye(M)))) < 1e-14


def test_spectral_gamma_matches_kernel_grid_route():
    # same object through two routes: smoothed eigenfunction coefficients
    # versus Riemann block sums of the assembled kernel
    model = build_sparse_model(D=2, s=1, r=2, eigenvalues=[1.0, 0.4], seed=11)
    spec = model.as_kernel_spec()
    basis = make_basis(4, 16)
    sigma2 = 0.04
    op = exact_gamma_phi(spec, basis, sigma2)
    M, D = 4, 2
    G = np.zeros((M * D, M * D))
    for d in range(D):
        for dp in range(D):
            G[d * M:(d + 1) * M, dp * M:(dp + 1) * M] = \
                _riemann_block(spec, basis, d, dp)
    G += sigma2 / 16 * np.eye(M * D)
    assert np.max(np.abs(op.matrix - G)) < 1e-12


def test_gamma_phi_top_eigs_avoids_materializing():
    A = np.array([[1.0, 0.0], [0.5, 0.8]])
    spec = KernelSpec(kind="brownian", loadings=A)
    basis = make_basis(8, 32)
    sigma2 = 0.1
    fast = gamma_phi_top_eigs(spec, basis, sigma2, k=3)
    slow, _ = exact_gamma_phi(spec, basis, sigma2).top_eigs(3)
    assert np.allclose(fast, slow, atol=1e-12)

    model = build_sparse_model(D=3, s=2, r=2, eigenvalues=[1.0, 0.3], seed=5)
    mspec = model.as_kernel_spec()
    fast = gamma_phi_top_eigs(mspec, basis, sigma2, k=4)
    slow, _ = exact_gamma_phi(mspec, basis, sigma2).top_eigs(4)
    assert np.allclose(fast, slow, atol=1e-11)


# ---------------------------------------------------------------------------
# discretization remainders and bias
# ---------------------------------------------------------------------------

def test_rk_bound_frozen_value():
    # 4 sqrt(sup L) / (alpha + 1) / (M p^alpha) with sup = L = 1, alpha = 1/2:
    # M = 4, p = 64 gives 4 / (1.5 * 4 * 8) = 1/12
    spec = KernelSpec(kind="brownian")
    assert abs(rk_bound(spec, 4, 64) - 1.0 / 12.0) < 1e-15


def test_projection_bias_bound_frozen_value():
    # M = 8: 4 / (1.5 * sqrt(8)) = 2 sqrt(2) / 3
    spec = KernelSpec(kind="brownian")
    assert abs(projection_bias_bound(spec, 8) - 2.0 * np.sqrt(2.0) / 3.0) < 1e-15


@pytest.mark.parametrize("M,p", [(2, 8), (4, 64), (8, 64)])
def test_remainder_report_brownian(M, p):
    spec = KernelSpec(kind="brownian")
    basis = make_basis(M, p)
    rep = remainder_report(spec, basis, sigma2=1.0)
    # exactly zero in exact arithmetic when M divides p; the measured value
    # only picks up the rounding of the squared amplitude (sqrt(M)^2 != M
    # in floats for M = 2), orders below the 1e-12 certification scale
    assert rep.max_RN <= 1e-15
    assert 0.0 < rep.max_RK <= rep.bound_RK
    assert abs(rep.bound_RK - rk_bound(spec, M, p)) < 1e-15


def test_remainder_report_spectral_model():
    model = build_sparse_model(D=2, s=1, r=2, eigenvalues=[1.0, 0.4], seed=3)
    rep = remainder_report(model.as_kernel_spec(), make_basis(4, 32), sigma2=0.5)
    assert rep.max_RN <= 1e-15
    assert rep.max_RK <= rep.bound_RK


@pytest.mark.parametrize("M", [2, 4, 8])
def test_projection_bias_within_bound(M):
    spec = KernelSpec(kind="brownian")
    basis = make_basis(M, 8 * M)
    measured = projection_bias_report(spec, basis)
    assert 0.0 < measured <= projection_bias_bound(spec, M)


def test_projection_bias_shrinks_with_m():
    spec = KernelSpec(kind="brownian")
    vals = [projection_bias_report(spec, make_basis(M, 8 * M)) for M in (2, 4, 8)]
    assert vals[0] > vals[1] > vals[2]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2), st.integers(0, 2),
       st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_kernel_matrix_symmetry(seed, d, dp, s, t):
    A = np.linalg.qr(np.random.default_rng(seed).standard_normal((3, 3)))[0]
    spec = KernelSpec(kind="brownian", loadings=A)
    # K_{d,d'}(s,t) = K_{d',d}(t,s) for any covariance kernel
    assert kernel_eval(spec, d, dp, s, t) == pytest.approx(
        kernel_eval(spec, dp, d, t, s), abs=1e-15)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_gram_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    M, D = 3, 2
    G = random_psd(rng, M * D)
    op = GramOperator.from_dense(G, M, D)
    path = tmp_path / "gram.csv"
    save_gram_csv(path, op, p=24, sigma=0.375)
    back, p, sigma = load_gram_csv(path)
    assert p == 24 and sigma == 0.375
    assert back.M == M and back.D == D
    assert np.array_equal(back.matrix, op.matrix)


def test_gram_csv_roundtrip_is_bit_exact_for_awkward_floats(tmp_path):
    vals = np.array([[np.pi, 1e-17], [1e-17, 1.0 / 3.0]])
    op = GramOperator.from_dense(vals, 2, 1)
    path = tmp_path / "g.csv"
    save_gram_csv(path, op, p=8, sigma=np.sqrt(2.0))
    back, p, sigma = load_gram_csv(path)
    assert sigma == np.sqrt(2.0)
    assert np.array_equal(back.matrix, op.matrix)


def test_kernel_matrix_cross_checks_eval():
    spec = KernelSpec(kind="fbm", hurst=0.3)
    s = np.array([0.1, 0.5])
    t = np.array([0.2, 0.9, 1.0])
    Kst = kernel_matrix(spec, 0, 0, s, t)
    for i, si in enumerate(s):
        for j, tj in enumerate(t):
            assert Kst[i, j] == pytest.approx(kernel_eval(spec, 0, 0, si, tj))

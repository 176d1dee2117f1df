import numpy as np
import pytest

from irscs.arrays import GridSpec, UlaSpec, UpaSpec, build_dictionaries
from irscs.beamforming import nmse
from irscs.cascade import (KroneckerRowOperator, assemble_problem, build_representation, lam_to_x,
                           merge_coefficients, reconstruct_h, x_to_lam)
from irscs.channel import ChannelStatistics, PathComponent, draw_channel, grid_coefficients
from irscs.solvers import (GampConfig, UnderdeterminedError, conventional_ls, conventional_ls_flops,
                           default_residual_tol, gamp_em_bg, ls_error_floor, omp, oracle_ls,
                           oracle_support_from_truth, sparse_solver_flops, true_support)

STATS = ChannelStatistics()


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def naive_omp(phi, y, k):
    # textbook OMP with a fresh lstsq each step
    support, r = [], y.copy()
    norms = np.linalg.norm(phi, axis=0)
    for _ in range(k):
        corr = np.abs(phi.conj().T @ r) / norms
        corr[support] = -1
        support.append(int(np.argmax(corr)))
        coef = np.linalg.lstsq(phi[:, support], y, rcond=None)[0]
        r = y - phi[:, support] @ coef
    x = np.zeros(phi.shape[1], dtype=complex)
    x[support] = coef
    return x, sorted(support)


def sparse_instance(rng, t, n, k, snr_db=None):
    phi = crandn(rng, t, n) / np.sqrt(t)
    x = np.zeros(n, dtype=complex)
    supp = rng.choice(n, k, replace=False)
    x[supp] = crandn(rng, k)
    clean = phi @ x
    sigma = 0.0
    if snr_db is not None:
        sigma = np.sqrt(np.mean(np.abs(clean) ** 2) / 10 ** (snr_db / 10))
    return phi, x, np.sort(supp), clean + sigma * crandn(rng, t), sigma


# -- OMP ----------------------------------------------------------------------

def test_omp_zero_measurements():
    est = omp(np.eye(4)[:3], np.zeros(3), max_support=3)
    assert not np.any(est.x_hat) and est.support.size == 0


def test_omp_single_atom():
    rng = np.random.default_rng(0)
    phi = crandn(rng, 10, 40)
    c = 1.5 - 0.5j
    est = omp(phi, c * phi[:, 7], max_support=5)
    assert list(est.support) == [7]
    assert abs(est.x_hat[7] - c) < 1e-8


def test_omp_gaussian_two_spikes():
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(100):
        phi, x, supp, y, _ = sparse_instance(rng, 32, 256, 2)
        est = omp(phi, y, max_support=8)
        hits += np.array_equal(est.support, supp)
    assert hits >= 95


def test_omp_matches_naive_reference():
    rng = np.random.default_rng(2)
    for _ in range(10):
        phi, x, supp, y, _ = sparse_instance(rng, 24, 60, 4, snr_db=15)
        est = omp(phi, y, max_support=6, residual_tol=0.0)
        ref_x, ref_supp = naive_omp(phi, y, 6)
        assert list(est.support) == ref_supp
        np.testing.assert_allclose(est.x_hat, ref_x, atol=1e-9)


def test_omp_invariants():
    rng = np.random.default_rng(3)
    phi, x, supp, y, _ = sparse_instance(rng, 30, 100, 6, snr_db=10)
    est = omp(phi, y, max_support=20, residual_tol=0.0)
    hist = np.array(est.residual_history)
    assert np.all(np.diff(hist) <= 1e-12)
    assert len(set(est.support)) == len(est.support) == est.iterations


def test_omp_operator_equals_dense():
    rng = np.random.default_rng(4)
    op = KroneckerRowOperator(crandn(rng, 20, 6), crandn(rng, 20, 9))
    y = op.matvec(np.where(rng.random(54) < 0.05, 1.0, 0.0) + 0j) + 0.01 * crandn(rng, 20)
    a = omp(op, y, max_support=5)
    b = omp(op.dense(), y, max_support=5)
    np.testing.assert_allclose(a.x_hat, b.x_hat, atol=1e-10)


def test_omp_rejects_oversized_support():
    with pytest.raises(ValueError):
        omp(np.ones((3, 5)), np.ones(3), max_support=4)


def test_default_residual_tol():
    y = np.ones(100)
    assert np.isclose(default_residual_tol(y, 0.5), 1.1 * 10 * 0.5)
    assert np.isclose(default_residual_tol(y), 1e-6 * 10)


# -- GAMP ---------------------------------------------------------------------

def test_gamp_zero_measurements():
    est = gamp_em_bg(np.ones((5, 8)), np.zeros(5))
    assert np.linalg.norm(est.x_hat) < 1e-6


def test_gamp_gaussian_benchmark():
    rng = np.random.default_rng(5)
    errs, var_ok = [], 0
    for _ in range(100):
        phi, x, supp, y, sigma = sparse_instance(rng, 200, 1000, 20, snr_db=30)
        est = gamp_em_bg(phi, y)
        errs.append(np.linalg.norm(est.x_hat - x) ** 2 / np.linalg.norm(x) ** 2)
        var_ok += 0.5 <= est.noise_var / sigma ** 2 <= 2.0
    assert np.mean(errs) < 1e-2
    assert var_ok >= 90


def test_gamp_close_to_support_ls():
    # the debiased LS fit on GAMP's own support is no better than GAMP by a wide margin
    rng = np.random.default_rng(6)
    phi, x, supp, y, _ = sparse_instance(rng, 200, 1000, 20, snr_db=30)
    est = gamp_em_bg(phi, y)
    ls = oracle_ls(phi, y, est.support)
    e_gamp = np.linalg.norm(est.x_hat - x) ** 2 / np.linalg.norm(x) ** 2
    e_ls = np.linalg.norm(ls.x_hat - x) ** 2 / np.linalg.norm(x) ** 2
    assert e_gamp < 1e-2 and e_ls < 1e-2
    assert set(supp) <= set(est.support)


def test_gamp_rejects_nonfinite():
    with pytest.raises(ValueError):
        gamp_em_bg(np.ones((2, 3)), np.array([1.0, np.nan]))


def test_gamp_config_validation():
    with pytest.raises(ValueError):
        GampConfig(damping=0.0)
    with pytest.raises(ValueError):
        GampConfig(max_iters=0)


# -- least squares baselines ----------------------------------------------------

def test_oracle_ls_examples():
    rng = np.random.default_rng(7)
    phi, x, supp, y, _ = sparse_instance(rng, 30, 80, 5)
    est = oracle_ls(phi, y, supp)
    np.testing.assert_allclose(est.x_hat, x, atol=1e-9)
    assert not np.any(oracle_ls(phi, y, []).x_hat)
    dup = np.column_stack([phi[:, :3], phi[:, :1]])
    assert "rank_deficient" in oracle_ls(dup, phi[:, 0], [0, 3]).flags


def test_oracle_ls_beats_cs_on_average():
    dicts = build_dictionaries(UlaSpec(4), UpaSpec(4, 4), GridSpec(16, 8, 8))
    rep = build_representation(dicts)
    rng = np.random.default_rng(8)
    e = {"oracle": [], "omp": [], "gamp": []}
    for _ in range(100):
        ch = draw_channel(rng, dicts.ula, dicts.upa, STATS, dicts.grid)
        alpha, sigma = grid_coefficients(ch, dicts.ula, dicts.upa, dicts.grid, STATS)
        supp = true_support(merge_coefficients(alpha, sigma, rep.merge))
        prob = assemble_problem(ch, rep, 40, rng, snr_db=10.0)
        ests = {"oracle": oracle_ls(prob.operator, prob.y, supp),
                "omp": omp(prob.operator, prob.y, 16, default_residual_tol(prob.y, prob.noise_std)),
                "gamp": gamp_em_bg(prob.operator, prob.y)}
        for name, est in ests.items():
            h_hat = reconstruct_h(x_to_lam(est.x_hat, dicts.grid.m_grid), rep.d_u, dicts)
            e[name].append(nmse(h_hat, ch.h_cascade))
    assert np.mean(e["oracle"]) <= np.mean(e["omp"])
    assert np.mean(e["oracle"]) <= np.mean(e["gamp"])


def test_conventional_ls_exact_square():
    rng = np.random.default_rng(9)
    w_v = crandn(rng, 12, 12)
    h = crandn(rng, 12)
    np.testing.assert_allclose(conventional_ls(w_v, w_v @ h), h, rtol=1e-8)
    with pytest.raises(UnderdeterminedError):
        conventional_ls(w_v[:11], (w_v @ h)[:11])


def test_conventional_ls_noise_floor_small():
    # mean squared error tracks sigma^2 trace((W^H W)^-1)
    rng = np.random.default_rng(10)
    w_v = crandn(rng, 60, 20)
    h = crandn(rng, 20)
    sigma = 0.3
    errs = [np.linalg.norm(conventional_ls(w_v, w_v @ h + sigma * crandn(rng, 60)) - h) ** 2
            for _ in range(2000)]
    assert abs(np.mean(errs) / ls_error_floor(w_v, sigma) - 1) < 0.05


def test_conventional_ls_noise_floor():
    dicts = build_dictionaries(UlaSpec(16), UpaSpec(8, 8), GridSpec(64, 32, 32))
    rep = build_representation(dicts)
    rng = np.random.default_rng(11)
    measured, predicted = [], []
    for _ in range(50):
        ch = draw_channel(rng, dicts.ula, dicts.upa, STATS)
        prob = assemble_problem(ch, rep, 1524, rng, snr_db=10.0)
        w_v = prob.w_v()
        h_hat = conventional_ls(w_v, prob.y).reshape(ch.h_cascade.shape, order="F")
        den = np.linalg.norm(ch.h_cascade) ** 2
        measured.append(np.linalg.norm(h_hat - ch.h_cascade) ** 2 / den)
        predicted.append(ls_error_floor(w_v, prob.noise_std) / den)
    assert abs(np.mean(measured) / np.mean(predicted) - 1) < 0.2
    with pytest.raises(UnderdeterminedError):
        conventional_ls(w_v[:1023], prob.y[:1023])


def test_flop_models():
    assert conventional_ls_flops(1524, 1024) / sparse_solver_flops(110, 65536, 300) > 1


# -- oracle support -----------------------------------------------------------

def test_oracle_support_exact_on_critical_grid():
    # critically sampled grids make all atoms orthogonal, so the greedy fit is exact
    dicts = build_dictionaries(UlaSpec(4), UpaSpec(4, 4), GridSpec(4, 4, 4))
    rep = build_representation(dicts)
    rng = np.random.default_rng(12)
    for _ in range(20):
        ch = draw_channel(rng, dicts.ula, dicts.upa, STATS, dicts.grid)
        alpha, sigma = grid_coefficients(ch, dicts.ula, dicts.upa, dicts.grid, STATS)
        truth = true_support(merge_coefficients(alpha, sigma, rep.merge))
        got = oracle_support_from_truth(ch.h_cascade, rep, len(truth))
        np.testing.assert_array_equal(got, truth)


def test_oracle_support_trivial_cases():
    dicts = build_dictionaries(UlaSpec(4), UpaSpec(4, 4), GridSpec(16, 8, 8))
    rep = build_representation(dicts)
    path = PathComponent(gain=1.0, azimuth=0.4, elevation=1.1, is_los=True, departure=-0.3)
    from irscs.channel import ChannelRealization, assemble_g, assemble_hr, cascade
    g = assemble_g([path], dicts.ula, dicts.upa, grid=dicts.grid)
    h_r = assemble_hr([path], dicts.upa, grid=dicts.grid)
    ch = ChannelRealization(g=g, h_r=h_r, h_cascade=cascade(g, h_r), paths_g=[path],
                            paths_hr=[path], on_grid=True)
    alpha, sigma = grid_coefficients(ch, dicts.ula, dicts.upa, dicts.grid, STATS)
    lam = merge_coefficients(alpha, sigma, rep.merge)
    truth = true_support(lam)
    assert truth.size == 1
    np.testing.assert_array_equal(oracle_support_from_truth(ch.h_cascade, rep, 1), truth)
    assert oracle_support_from_truth(ch.h_cascade, rep, 0).size == 0
    np.testing.assert_allclose(lam_to_x(lam)[truth], lam[truth[0] % 64, truth[0] // 64])

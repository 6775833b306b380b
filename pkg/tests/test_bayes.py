import numpy as np
import pytest

from _util import mann_kendall_z, quiet_decomposition, shift_model, sim_dataset, siso_model
from sidshrink.bayes import (
    GibbsConfig,
    _gamma_hf_parts,
    _gf_from_nu,
    _omega_hankel,
    _omega_independent,
    init_gibbs,
    run_gibbs,
    step_gamma_hf,
    step_gf,
    step_lp,
)
from sidshrink.errors import ConfigError, NumericalError
from sidshrink.estimation import HankelData, assemble, ls_estimate
from sidshrink.linalg import build_selectors, psd_sqrt, toeplitz_from_col, vec


def _dataset(seed=0, f=3, p=3, n_cols=40):
    rng = np.random.default_rng(seed)
    model = siso_model([[0.5]], [[1.0]], [[1.0]], [[0.2]], [[0.3]])
    _, _, data = sim_dataset(model, n_cols, f, p, rng, burn_in=30)
    return data


def _state(seed=0, rank=2, **kw):
    data = _dataset(seed, **kw)
    ls = ls_estimate(data)
    return data, ls, init_gibbs(ls.h_fp_hat, ls.h_f_hat, data, rank)


class _FixedRng:
    """Deterministic stand-in: fixed normal vector and chi-square draw."""

    def __init__(self, normals, chi):
        self._normals = np.asarray(normals, dtype=float)
        self._chi = float(chi)

    def standard_normal(self, size=None):
        flat = self._normals
        if size is None:
            return float(flat[0])
        out = np.broadcast_to(flat[:int(np.prod(size))].reshape(size), size)
        return np.array(out)

    def chisquare(self, dof):
        return self._chi


# ------------------------------------------------------------------ config

def test_config_validation():
    with pytest.raises(ConfigError):
        GibbsConfig(rank=1, gf_variant="toeplitz")
    with pytest.raises(ConfigError):
        GibbsConfig(rank=1, n_total=10, n_burn=10)
    with pytest.raises(ConfigError):
        GibbsConfig(rank=1, n_burn=-1)
    with pytest.raises(ConfigError):
        GibbsConfig(rank=0)


# -------------------------------------------------------------- init_gibbs

def test_init_rejects_multivariable_data():
    rng = np.random.default_rng(1)
    j = 30
    z = rng.standard_normal((8, j))
    data = HankelData(y_f=rng.standard_normal((4, j)), u_f=rng.standard_normal((4, j)),
                      u_p=z[:4], y_p=z[4:], z_p=z, f=2, p=2, n_cols=j, n_i=2, n_o=2)
    with pytest.raises(ConfigError):
        init_gibbs(rng.standard_normal((4, 8)), rng.standard_normal((4, 4)), data, 1)


def test_init_rank_bounds():
    data, ls, _ = _state()
    with pytest.raises(ValueError):
        init_gibbs(ls.h_fp_hat, ls.h_f_hat, data, 0)
    with pytest.raises(ValueError):
        init_gibbs(ls.h_fp_hat, ls.h_f_hat, data, 4)


def test_init_factorizes_reconstruction():
    data, ls, state = _state(rank=2)
    m = ls.h_fp_hat @ data.z_p
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    ref = (u[:, :2] * s[:2]) @ vt[:2]
    got = state.gamma_f @ state.l_p @ data.z_p
    assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)
    # symmetric split of the singular values
    assert np.allclose(np.linalg.norm(state.gamma_f, axis=0) ** 2, s[:2], rtol=1e-8)


def test_init_prior_scales():
    data, ls, state = _state(rank=2)
    s = np.linalg.svd(ls.h_fp_hat @ data.z_p, compute_uv=False)
    i, j = data.f, data.n_cols
    assert np.allclose(np.diag(state.lambda_gamma), i / s[:2], rtol=1e-10)
    assert np.allclose(np.diag(state.lambda_l), j / s[:2], rtol=1e-10)
    trace_h = float(np.trace(ls.h_f_hat.T @ ls.h_f_hat))
    assert np.allclose(state.lambda_h, np.eye(i) * i * i / trace_h, rtol=1e-10)
    assert np.array_equal(state.g_f, np.eye(i))
    assert np.allclose(state.x_p, state.l_p @ data.z_p)


def test_init_scale_homogeneity():
    data, ls, state = _state(rank=2)
    scaled = init_gibbs(3.7 * ls.h_fp_hat, ls.h_f_hat, data, 2)
    assert np.allclose(np.diag(scaled.lambda_gamma),
                       np.diag(state.lambda_gamma) / 3.7, rtol=1e-10)


def test_init_flags_rank_deficiency():
    data, ls, _ = _state()
    rank_one = np.outer(np.arange(1.0, 4.0), np.ones(6))
    state = init_gibbs(rank_one, ls.h_f_hat, data, 3)
    assert state.rank_deficient


# ------------------------------------------------------------- step means

def test_gamma_hf_ridge_to_ls_limit():
    data, ls, state = _state(rank=2)
    state.lambda_gamma = np.eye(2) * 1e-12
    state.lambda_h = np.eye(3) * 1e-12
    state.gamma_scalar = 1.0
    state.g_bar = np.eye(3)
    gamma_det, h_det = step_gamma_hf(state, data, None, deterministic=True)
    reg = np.vstack([state.x_p, data.u_f])
    coeff, *_ = np.linalg.lstsq(reg.T, data.y_f.T, rcond=None)
    coeff = coeff.T
    from sidshrink.linalg import toeplitz_project
    assert np.allclose(gamma_det, coeff[:, :2], atol=1e-6)
    assert np.allclose(h_det, toeplitz_project(coeff[:, 2:]), atol=1e-6)


def test_gamma_hf_strong_prior_shrinks_to_zero():
    data, ls, state = _state(rank=2)
    state.lambda_gamma = np.eye(2) * 1e12
    state.lambda_h = np.eye(3) * 1e12
    gamma_det, h_det = step_gamma_hf(state, data, None, deterministic=True)
    assert np.abs(gamma_det).max() < 1e-6
    assert np.abs(h_det).max() < 1e-6


def test_lp_gls_collapse():
    data, ls, state = _state(rank=2)
    state.lambda_l = np.eye(2) * 1e-12
    state.g_f = np.eye(3)
    l_det = step_lp(state, data, None, deterministic=True)
    target = data.y_f - state.h_f @ data.u_f
    coeff, *_ = np.linalg.lstsq(state.gamma_f, target, rcond=None)
    assert np.allclose(l_det, coeff @ state.z_pinv, atol=1e-6)


def test_lp_orthonormal_closed_form():
    data, ls, state = _state(rank=2)
    q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 2)))
    state.gamma_f = q
    state.lambda_l = np.eye(2)
    state.g_f = np.eye(3)
    l_det = step_lp(state, data, None, deterministic=True)
    expect = 0.5 * q.T @ (data.y_f - state.h_f @ data.u_f) @ state.z_pinv
    assert np.allclose(l_det, expect, atol=1e-10)


def test_steps_leave_priors_untouched():
    data, ls, state = _state(rank=2)
    lam_g = state.lambda_gamma.copy()
    lam_h = state.lambda_h.copy()
    lam_l = state.lambda_l.copy()
    rng = np.random.default_rng(0)
    step_gamma_hf(state, data, rng)
    step_lp(state, data, rng)
    step_gf(state, np.random.default_rng(1).standard_normal((3, data.n_cols)), rng,
            "independent")
    assert np.array_equal(state.lambda_gamma, lam_g)
    assert np.array_equal(state.lambda_h, lam_h)
    assert np.array_equal(state.lambda_l, lam_l)


# -------------------------------------------------- sampler law (gamma draw)

def test_gamma_draw_mean_and_covariance():
    data, ls, state = _state(rank=2)
    mean_ref, gram = _gamma_hf_parts(state, data)
    rng = np.random.default_rng(123)
    n = 10000
    draws = np.empty((n, 6))  # vec of the 3 x 2 gamma block
    for t in range(n):
        gamma_draw, _ = step_gamma_hf(state, data, rng)
        draws[t] = vec(gamma_draw)
    emp_mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(emp_mean - vec(mean_ref[:, :2])) <= 4.0 * se)
    # column-major vec: Cov = (gram^-1 gamma block) (x) row covariance, rows iid here
    cov_ref = np.kron(np.linalg.inv(gram)[:2, :2], state.g_bar @ state.g_bar.T)
    emp_cov = np.cov(draws.T, ddof=1)
    se_cov = np.sqrt((np.outer(np.diag(cov_ref), np.diag(cov_ref)) + cov_ref**2) / n)
    assert np.all(np.abs(emp_cov - cov_ref) <= 4.5 * se_cov)


# ------------------------------------------------------------ noise factor

def test_omega_matrices_match_dense_kronecker_forms():
    rng = np.random.default_rng(0)
    for (i, j) in [(2, 5), (3, 4), (4, 6)]:
        e = rng.standard_normal((i, j))
        sel = build_selectors(i, j)
        m = np.kron(e.T, np.eye(i)) @ sel.b_t
        om_ind = m.T @ m
        assert np.allclose(_omega_independent(e), om_ind, atol=1e-12)
        d_inv = np.linalg.inv(sel.b_w.T @ sel.b_w)
        om_han = m.T @ sel.b_w @ d_inv @ sel.b_w.T @ m
        assert np.allclose(_omega_hankel(e), om_han, atol=1e-12)


def test_gf_change_of_variables():
    rng = np.random.default_rng(2)
    i, j = 4, 9
    e = rng.standard_normal((i, j)) * 1.3
    omega = _omega_hankel(e)
    om_l = np.linalg.cholesky(omega)
    for _ in range(20):
        nu = np.concatenate([rng.standard_normal(i - 1),
                             [np.sqrt(rng.chisquare(j + 1))]])
        g, row = _gf_from_nu(omega, nu)
        # row solves row' = Omega_L^-T nu, i.e. row @ Omega_L = nu
        assert np.abs(row @ om_l - nu).max() < 1e-10
        # the draw parameterizes the last row of G^-1
        assert np.abs(np.linalg.inv(g)[-1] - row).max() < 1e-8
        # G is lower-triangular Toeplitz with positive diagonal
        assert np.all(np.triu(g, 1) == 0.0)
        assert np.allclose(g, toeplitz_from_col(g[:, 0]))
        assert g[0, 0] > 0.0


def test_gf_scalar_case():
    e = np.array([[1.2, -0.4, 2.2, 0.3]])
    omega = _omega_hankel(e)
    assert omega.shape == (1, 1)
    assert omega[0, 0] == pytest.approx(float(np.sum(e**2)))
    nu = np.array([1.7])
    g, row = _gf_from_nu(omega, nu)
    assert row[0] == pytest.approx(1.7 / np.sqrt(np.sum(e**2)))
    assert g[0, 0] == pytest.approx(np.sqrt(np.sum(e**2)) / 1.7)


def test_step_gf_scale_equivariance():
    data, ls, state = _state(rank=2)
    resid = np.random.default_rng(4).standard_normal((3, data.n_cols))
    stub = _FixedRng(np.array([0.3, -0.8, 0.0, 0.0]), chi=float(data.n_cols))
    g1 = step_gf(state, resid, stub, "hankel_exact").copy()
    _, _, state2 = _state(rank=2)
    g2 = step_gf(state2, 2.5 * resid, stub, "hankel_exact")
    assert np.allclose(g2, 2.5 * g1, rtol=1e-10)


def test_step_gf_updates_state():
    data, ls, state = _state(rank=2)
    resid = np.random.default_rng(5).standard_normal((3, data.n_cols))
    g = step_gf(state, resid, np.random.default_rng(6), "independent")
    assert state.g_f is g
    assert np.allclose(state.g_bar, g / g[0, 0])
    assert state.gamma_scalar == pytest.approx(1.0 / g[0, 0] ** 2)
    assert np.allclose(state.sigma_e, g @ g.T)


def test_step_gf_rejects_unknown_variant():
    data, ls, state = _state(rank=2)
    with pytest.raises(ConfigError):
        step_gf(state, np.zeros((3, data.n_cols)), np.random.default_rng(0), "mixed")


# -------------------------------------------------------------- run_gibbs

def test_run_gibbs_single_iterate_is_init_product():
    data, ls, state = _state(rank=2)
    est = run_gibbs(data, ls.h_fp_hat, ls.h_f_hat,
                    GibbsConfig(rank=2, n_total=1, n_burn=0, seed=0))
    assert np.allclose(est.h_fp_bayes, state.gamma_f @ state.l_p, atol=1e-12)
    assert est.chain_diagnostics.shape == (1,)


def test_run_gibbs_is_deterministic():
    data, ls, _ = _state(rank=1)
    cfg = GibbsConfig(rank=1, n_total=40, n_burn=5, seed=11)
    a = run_gibbs(data, ls.h_fp_hat, ls.h_f_hat, cfg)
    b = run_gibbs(data, ls.h_fp_hat, ls.h_f_hat, cfg)
    assert np.array_equal(a.h_fp_bayes, b.h_fp_bayes)
    assert np.array_equal(a.chain_diagnostics, b.chain_diagnostics)


def test_run_gibbs_recovers_noiseless_map():
    # nilpotent n_x = f = p = 2: the true map is exactly rank 2 and the
    # posterior concentrates tightly around it
    model = shift_model(2)
    td = quiet_decomposition(model, 2, 2)
    rng = np.random.default_rng(5)
    _, _, data = sim_dataset(model, 297, 2, 2, rng)
    ls = ls_estimate(data)
    cfg = GibbsConfig(rank=2, n_total=250, n_burn=1, seed=9)
    est = run_gibbs(data, ls.h_fp_hat, ls.h_f_hat, cfg)
    rel = np.linalg.norm(est.h_fp_bayes - td.h_fp) / np.linalg.norm(td.h_fp)
    assert rel < 0.05


def test_run_gibbs_flags_divergence():
    data, ls, _ = _state(rank=1)
    bad = HankelData(y_f=data.y_f * np.nan, u_f=data.u_f, u_p=data.u_p,
                     y_p=data.y_p, z_p=data.z_p, f=data.f, p=data.p,
                     n_cols=data.n_cols, n_i=1, n_o=1)
    with pytest.raises(NumericalError, match="iteration"):
        run_gibbs(bad, ls.h_fp_hat, ls.h_f_hat,
                  GibbsConfig(rank=1, n_total=5, n_burn=0, seed=0))


def test_chain_is_stationary_after_burn_in():
    # trend test on the second half of the chain diagnostics
    model = siso_model([[0.5]], [[1.0]], [[1.0]], [[0.2]], [[0.3]])
    rng = np.random.default_rng(17)
    _, _, data = sim_dataset(model, 343, 4, 4, rng, burn_in=50)
    ls = ls_estimate(data)
    est = run_gibbs(data, ls.h_fp_hat, ls.h_f_hat,
                    GibbsConfig(rank=1, n_total=250, n_burn=50, seed=3))
    half = est.chain_diagnostics[125:]
    assert abs(mann_kendall_z(half)) < 2.576  # 1% two-sided


def test_rao_blackwell_reduces_chain_variance():
    data, ls, _ = _state(rank=1, n_cols=60)
    seeds = range(6)
    rb, raw = [], []
    for s in seeds:
        cfg_rb = GibbsConfig(rank=1, n_total=60, n_burn=10, seed=s, rao_blackwell=True)
        cfg_raw = GibbsConfig(rank=1, n_total=60, n_burn=10, seed=s, rao_blackwell=False)
        rb.append(run_gibbs(data, ls.h_fp_hat, ls.h_f_hat, cfg_rb).h_fp_bayes)
        raw.append(run_gibbs(data, ls.h_fp_hat, ls.h_f_hat, cfg_raw).h_fp_bayes)
    var_rb = np.var(np.stack(rb), axis=0).mean()
    var_raw = np.var(np.stack(raw), axis=0).mean()
    assert var_rb <= var_raw

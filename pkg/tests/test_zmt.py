import numpy as np
import pytest

from loopcut.bondmetric import (BondEnvironment, diag_metric, gauge_transform,
                                measure_error, fidelity_mismatch, product_env)
from loopcut.eatgauge import eat_truncate
from loopcut.fixtures import toy_pair, toy_error, virtual_loop_network, \
    random_env, random_psd
from loopcut.tensor import NumericalError, eig_general
from loopcut.zmt import (select_mode, step_linear, step_general, step_product,
                         refine_w, improve_mode, truncate_to,
                         linear_update_diag, _mode_projector)


def planted_rank1_env(d, seed, field="complex", scale=10.0):
    """PSD metric with an exact rank-1 zero mode R L^T, L @ R != 0."""
    rng = np.random.default_rng(seed)
    if field == "complex":
        rv = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        lv = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    else:
        rv, lv = rng.standard_normal(d), rng.standard_normal(d)
    rv /= np.linalg.norm(rv)
    lv /= np.linalg.norm(lv)
    z = np.outer(rv, lv).reshape(-1)
    g0 = random_psd(d * d, rng, field) * scale
    p = np.eye(d * d) - np.outer(z, z.conj()) / (z.conj() @ z)
    g = p.conj().T @ g0 @ p
    return BondEnvironment(g.reshape(d, d, d, d), validate="fast"), rv, lv


def scaled_mode_env(d, seed, n_scale, field="real"):
    """Env with a planted eigenmode of tunable eigenvalue n_scale."""
    rng = np.random.default_rng(seed)
    rv, lv = rng.standard_normal(d), rng.standard_normal(d)
    z0 = np.outer(rv, lv)
    z0 /= np.linalg.norm(z0)
    z = z0.reshape(-1)
    g0 = random_psd(d * d, rng, field) * 5
    p = np.eye(d * d) - np.outer(z, z) / (z @ z)
    g = p.T @ g0 @ p + n_scale * np.outer(z, z)
    return BondEnvironment(g.reshape(d, d, d, d), validate="fast")


# -------------------------------------------------------------- select_mode

def test_select_mode_nonloopy_picks_last_schmidt_pattern():
    lam = np.array([1.0, 0.7, 0.2])
    env = product_env(np.diag(lam), np.diag(lam))
    cand = select_mode(env, "full")
    z = np.abs(cand.z_matrix)
    expect = np.zeros((3, 3))
    expect[2, 2] = 1.0
    np.testing.assert_allclose(z, expect, atol=1e-12)
    assert cand.n_value == pytest.approx(lam[-1] ** 2, rel=1e-12)


def test_select_mode_toy_diagonal():
    tp = toy_pair()
    cand = select_mode(tp.env, "diagonal")
    zv = cand.z_vector / cand.z_vector[0]
    np.testing.assert_allclose(zv, [1.0, -1.0], atol=1e-12)
    assert cand.n_value == pytest.approx(0.0, abs=1e-12)
    assert cand.f_pred == pytest.approx(0.0, abs=1e-12)


def test_select_mode_can_prefer_higher_mode():
    # brute-force f over all full-subspace modes and check the argmin is
    # neither forced to be the lowest-N mode nor missed by select_mode
    env = random_env(3, "loopy", loop_target=0.5, seed=15)
    w, v = np.linalg.eigh(env.matrix)
    fs = []
    for i in range(len(w)):
        z = v[:, i].reshape(3, 3)
        e = eig_general(z).values[-1]
        fs.append(max(w[i], 0.0) / abs(e) ** 2)
    best = int(np.argmin(fs[:8]))
    assert best != 0          # seed chosen so the lowest-N mode is not optimal
    cand = select_mode(env, "full")
    assert cand.f_pred == pytest.approx(fs[best], rel=1e-10)


def test_select_mode_rejects_unknown_subspace():
    env = random_env(2, "product", seed=0)
    with pytest.raises(ValueError):
        select_mode(env, "bogus")


# -------------------------------------------------------------- step_linear

def test_step_linear_toy_reaches_bond_dimension_one():
    tp = toy_pair()
    g = tp.g.astype(float)
    step = step_linear(g, env=tp.env)
    assert step.dim_after == 1
    # the kept branch carries coefficient 2 = 1 - (-1)/1, i.e. the z = 1/2
    # zero-mode gauge of the pseudoinverse solution
    np.testing.assert_allclose(np.abs(step.coefficients), [2.0], atol=1e-12)
    assert step.f_measured.absolute == pytest.approx(0.0, abs=1e-12)
    # the truncated coefficient state reproduces the target exactly
    m = step.left_absorb @ step.right_absorb
    assert measure_error(tp.env, m).absolute == pytest.approx(0.0, abs=1e-12)
    # in the paper's c-vector language: c = (1,0) (or its branch swap) has f=0
    assert toy_error(tp.g, tp.zero_mode_solution) == pytest.approx(0.0, abs=1e-14)
    assert toy_error(tp.g, tp.pinv_solution) == pytest.approx(0.0, abs=1e-14)


def test_step_linear_prediction_matches_measurement():
    env = random_env(4, "loopy", loop_target=0.4, seed=3)
    gd = diag_metric(env)
    step = step_linear(gd, env=env)
    # the dropped singular value is exactly zero, so measured == predicted
    assert step.f_measured.absolute == pytest.approx(step.f_pred, rel=1e-9)
    assert step.f_pred > 0


def test_step_linear_diag_update_matches_full_congruence():
    env = random_env(4, "loopy", loop_target=0.4, seed=4)
    gd = diag_metric(env)
    step = step_linear(gd, env=env)
    gd2 = linear_update_diag(gd, step)
    env2 = gauge_transform(env, step.left_absorb, step.right_absorb)
    np.testing.assert_allclose(gd2, diag_metric(env2), atol=1e-12)


# ------------------------------------------------------------- step_general

def test_step_general_exact_zero_mode():
    env, rv, lv = planted_rank1_env(4, seed=1)
    step, env2 = step_general(env, "full", k_candidates=16)
    assert step.f_measured.relative <= 1e-12
    assert env2.d == 3
    # the dropped singular value of delta - Z/E is exactly zero
    kmat = np.eye(4) - step.candidate.z_matrix / step.candidate.e_lead
    s = np.linalg.svd(kmat, compute_uv=False)
    assert s[-1] <= 1e-12 * s[0]


def test_step_general_diagonal_restriction_matches_linear():
    env = random_env(3, "loopy", loop_target=0.5, seed=6)
    step_g, _ = step_general(env, "diagonal")
    step_l = step_linear(diag_metric(env), env=env)
    m_g = step_g.left_absorb @ step_g.right_absorb
    m_l = step_l.left_absorb @ step_l.right_absorb
    assert fidelity_mismatch(env, m_g, m_l) <= 1e-12
    assert step_g.f_pred == pytest.approx(step_l.f_pred, rel=1e-10)


def test_step_general_real_e_selection():
    env = random_env(3, "loopy", loop_target=0.5, seed=8, field="real")
    step, _ = step_general(env, "full", real_e_only=True)
    assert abs(np.imag(step.candidate.e_lead)) <= 1e-10


# ------------------------------------------------------------- step_product

def test_step_product_recovers_planted_mode():
    for field in ("real", "complex"):
        env, rv, lv = planted_rank1_env(4, seed=42, field=field)
        step, _ = step_product(env)
        assert step.f_measured.relative <= 1e-12


def test_step_product_objective_monotone():
    # each half-step is an exact minimizer, so f never increases
    from loopcut.zmt import _product_half_update
    rng = np.random.default_rng(0)
    for seed in range(10):
        env = random_env(3, "loopy", loop_target=0.6, seed=seed)
        g4 = env.g4
        lv = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        lv /= np.linalg.norm(lv)
        rv = lv.copy()

        def f_of(lv, rv):
            ml = np.einsum("j,ijpq,q->ip", lv.conj(), g4, lv)
            return float(np.real(rv.conj() @ ml @ rv)) / abs(lv @ rv) ** 2

        f_prev = f_of(lv, rv)
        for _ in range(25):
            ml = np.einsum("j,ijpq,q->ip", lv.conj(), g4, lv)
            rv = _product_half_update(ml, lv.conj())
            f_mid = f_of(lv, rv)
            assert f_mid <= f_prev * (1 + 1e-10) + 1e-15
            mr = np.einsum("i,ijpq,p->jq", rv.conj(), g4, rv)
            lv = _product_half_update(mr, rv.conj())
            f_new = f_of(lv, rv)
            assert f_new <= f_mid * (1 + 1e-10) + 1e-15
            f_prev = f_new


def test_step_product_matches_full_when_optimum_rank_one():
    # diagonal non-loopy env: |D><D| is provably the rank-1 optimum, and it
    # is also the lowest full-subspace eigenmode, so the schemes must agree
    lam = np.array([1.0, 0.6, 0.3, 0.1])
    env = product_env(np.diag(lam), np.diag(lam))
    step_f, _ = step_general(env, "full")
    step_p, _ = step_product(env)
    assert step_p.f_pred == pytest.approx(step_f.f_pred, rel=1e-10, abs=1e-14)
    assert step_f.f_pred == pytest.approx(lam[-1] ** 2, rel=1e-12)


# ----------------------------------------------------------------- refine_w

def test_refine_w_exact_zero_mode_is_fixed_point():
    # plant a generic (full-rank) zero mode so the w-direction is nontrivial
    rng = np.random.default_rng(2)
    d = 3
    z0 = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    z0 /= np.linalg.norm(z0)
    z = z0.reshape(-1)
    g0 = random_psd(d * d, rng, "complex") * 5
    p = np.eye(d * d) - np.outer(z, z.conj()) / (z.conj() @ z)
    env = BondEnvironment((p.conj().T @ g0 @ p).reshape(d, d, d, d),
                          validate="fast")
    cand = select_mode(env, "full", k_candidates=9)
    assert cand.f_pred <= 1e-12
    w, fmin = refine_w(env, cand)
    assert w == pytest.approx(-1.0, abs=1e-6)
    assert fmin <= 1e-12


@pytest.mark.parametrize("d,seed", [(3, 5), (4, 9)])
def test_refine_w_matches_dense_scan(d, seed):
    env = random_env(d, "loopy", loop_target=0.5, seed=seed)
    cand = select_mode(env, "full")
    w_min, f_min = refine_w(env, cand)
    y = _mode_projector(cand)
    z, e = cand.z_matrix, cand.e_lead

    def f_of(w):
        m = np.eye(d) + (w / e) * z - (1 + w) * y
        return measure_error(env, m).absolute

    # the scan oracle: coarse grid then local refinement around the best
    grid = [f_of(u + 1j * v)
            for u in np.linspace(-3, 1, 101) for v in np.linspace(-2, 2, 101)]
    assert f_min <= min(grid) + 1e-10
    assert f_of(w_min) == pytest.approx(f_min, abs=1e-12)
    assert f_of(-1.0) == pytest.approx(cand.f_pred, rel=1e-8)
    assert f_min <= cand.f_pred + 1e-14


def test_refine_w_appendix_a_closed_form():
    # the literal imperfect-linear-dependence optimum on a real env
    env = random_env(4, "loopy", loop_target=0.4, seed=12, field="real")
    cand = select_mode(env, "diagonal")
    w_min, f_min = refine_w(env, cand)
    zv = cand.z_vector
    m = cand.e_index
    gd = diag_metric(env).real
    n = cand.n_value / gd[m, m]
    zdsq = abs(zv[m]) ** 2
    w_ref = -1.0 * (1 - n) / (1 - n * (2 - 1 / zdsq))
    f0 = cand.n_value / zdsq
    f_ref = f0 * (1 - n * zdsq) / (1 - n * (2 - 1 / zdsq))
    assert w_min == pytest.approx(w_ref, rel=1e-8)
    assert f_min == pytest.approx(f_ref, rel=1e-8)
    assert f0 == pytest.approx(cand.f_pred, rel=1e-12)


# -------------------------------------------------------------- improve_mode

def test_improve_mode_zero_mode_fixed_point():
    env, rv, lv = planted_rank1_env(3, seed=3)
    cand = select_mode(env, "full", k_candidates=9)
    out = improve_mode(env, cand)
    # f = 0 is a fixed point: the mode is unchanged up to normalization
    assert out.f_pred <= 1e-12
    overlap = abs(np.vdot(out.z_matrix, cand.z_matrix))
    assert overlap == pytest.approx(1.0, abs=1e-8)


def test_improve_mode_quadratic_gain():
    fs, gains = [], []
    for k in range(2, 6):
        env = scaled_mode_env(3, seed=7, n_scale=1e-2 * 10.0 ** (-k))
        cand = select_mode(env, "full", k_candidates=9)
        out = improve_mode(env, cand)
        assert out.f_pred <= cand.f_pred
        fs.append(cand.f_pred)
        gains.append(cand.f_pred - out.f_pred)
    assert all(g > 0 for g in gains)
    slope = np.polyfit(np.log(fs), np.log(gains), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_improve_mode_perturbation_orthogonal():
    env = scaled_mode_env(3, seed=11, n_scale=1e-4)
    cand = select_mode(env, "full", k_candidates=9)
    out, eps = improve_mode(env, cand, return_eps=True)
    assert abs(np.vdot(cand.z_matrix, eps)) <= 1e-12 * max(np.linalg.norm(eps), 1.0)


# -------------------------------------------------------------- truncate_to

@pytest.mark.parametrize("scheme", ["zmt1", "zmt2", "zmt3"])
def test_truncate_to_fixture_exact(scheme):
    fx = virtual_loop_network(2, 2, seed=3)
    rep = truncate_to(fx.env, 2, scheme, delta=1e-10)
    assert rep.f_cumulative.relative <= 1e-12
    assert all(s.f_measured.relative <= 1e-12 for s in rep.steps)


def test_truncate_to_nonloopy_matches_eat():
    env = random_env(5, "product", seed=23)
    rep = truncate_to(env, 3, "zmt3", delta=0.0, eat_gauge_first=True)
    res = eat_truncate(env, 3)
    assert rep.f_cumulative.absolute == pytest.approx(
        res.f_measured.absolute, rel=1e-8, abs=1e-12)
    # cumulative error equals the dropped Schmidt weight
    assert rep.f_cumulative.absolute == pytest.approx(
        float(np.sum(res.lam[3:] ** 2)), rel=1e-8)


def test_truncate_to_delta_boundaries():
    env = random_env(4, "loopy", loop_target=0.5, seed=31)
    rep0 = truncate_to(env, 2, "zmt2", delta=0.0)
    assert all(s.scheme.startswith("general") for s in rep0.steps)
    rep_inf = truncate_to(env, 2, "zmt2", delta=np.inf)
    assert all(s.scheme == "linear" for s in rep_inf.steps)


def test_truncate_to_validates_target():
    env = random_env(3, "product", seed=1)
    with pytest.raises(ValueError):
        truncate_to(env, 0, "zmt1")
    with pytest.raises(ValueError):
        truncate_to(env, 3, "zmt1")


def test_truncate_to_absorbs_tensors():
    rng = np.random.default_rng(2)
    env = random_env(3, "loopy", loop_target=0.3, seed=3)
    a = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    rep = truncate_to(env, 2, "zmt3", delta=0.0, tensors=(a, b))
    ta, tb = rep.tensors
    np.testing.assert_allclose(
        ta @ tb, a @ (rep.left_total @ rep.right_total) @ b, atol=1e-12)


# --------------------------------------------------------------- invariants

def test_full_subspace_prediction_gauge_invariant():
    env = random_env(3, "loopy", loop_target=0.6, seed=3)
    f0 = select_mode(env, "full").f_pred
    rng = np.random.default_rng(0)
    for _ in range(10):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3))
                            + 1j * rng.standard_normal((3, 3)))
        env2 = gauge_transform(env, q, q.conj().T)
        assert select_mode(env2, "full").f_pred == pytest.approx(f0, rel=1e-10)


def test_lowest_n_monotone_in_subspace_nesting():
    # Rayleigh: the lowest metric eigenvalue cannot increase on a larger
    # search space.  (The f_pred ordering is NOT monotone; see Fig. 12-type
    # behavior where the symmetric restriction typically wins.)
    for seed in range(8):
        env = random_env(3, "loopy", loop_target=0.5, seed=seed, field="real")
        n_diag = np.linalg.eigvalsh(diag_metric(env).real)[0]
        gc_full = np.linalg.eigvalsh(env.matrix.real)[0]
        from loopcut.zmt import _compress_metric
        gc_sym, _ = _compress_metric(env, "real-symmetric")
        n_sym = np.linalg.eigvalsh(gc_sym)[0]
        assert gc_full <= n_sym + 1e-12
        assert n_sym <= n_diag + 1e-12


def test_prediction_consistency_under_scaling():
    # f_measured tracks f_pred to well within the allowed O(f^2) slack
    for k in (2, 4, 6):
        env = scaled_mode_env(3, seed=13, n_scale=10.0 ** (-k))
        step, _ = step_general(env, "full", k_candidates=9)
        slack = max(1e-12, 10 * step.f_pred ** 2 / env.norm_target)
        assert abs(step.f_measured.absolute - step.f_pred) <= slack * env.norm_target


def test_exact_zero_mode_dim_reduction():
    env, _, _ = planted_rank1_env(5, seed=8)
    step, env2 = step_general(env, "full", k_candidates=12)
    assert step.dim_after == step.dim_before - 1 == 4
    assert step.f_measured.absolute <= 1e-12 * env.norm_target

import numpy as np
import pytest

from loopcut.bondmetric import (gauge_transform, measure_error, eat_split,
                                fidelity_mismatch, product_env)
from loopcut.eatgauge import eat_gauge_fix, eat_truncate
from loopcut.fixtures import random_env, random_psd, virtual_loop_network
from loopcut.zmt import step_general


@pytest.mark.parametrize("field", ["real", "complex"])
@pytest.mark.parametrize("d", [2, 4, 8])
def test_identity_insertion(field, d):
    env = random_env(d, "loopy", loop_target=0.3, seed=d, field=field) \
        if d > 1 else None
    gp = eat_gauge_fix(env)
    resid = np.linalg.norm(gp.left_factor @ gp.right_factor - np.eye(d))
    assert resid <= 1e-10
    assert np.all(np.diff(gp.lam) <= 1e-12)


def test_nonloopy_transformed_metric_is_lambda_kron_lambda():
    env = random_env(4, "product", seed=5)
    gp = eat_gauge_fix(env)
    env2 = gauge_transform(env, gp.left_factor, gp.right_factor)
    expect = np.einsum("i,j,ip,jq->ijpq", gp.lam, gp.lam,
                       np.eye(4), np.eye(4))
    assert np.linalg.norm(env2.g4 - expect) <= 1e-12 * np.linalg.norm(expect)
    # transformed left/right factors are both diagonal and equal to lam
    es2 = eat_split(env2)
    np.testing.assert_allclose(es2.g_left * es2.lambda1 ** 0.5,
                               np.diag(gp.lam) / np.linalg.norm(np.diag(gp.lam)) * es2.lambda1 ** 0.5,
                               atol=1e-10 * gp.lam[0])


def test_gauge_fix_idempotent_up_to_phases():
    env = random_env(3, "product", seed=8)
    gp = eat_gauge_fix(env)
    env2 = gauge_transform(env, gp.left_factor, gp.right_factor)
    gp2 = eat_gauge_fix(env2)
    # already in the EAT gauge: new factors are identity up to diagonal phases
    np.testing.assert_allclose(np.abs(gp2.left_factor), np.eye(3), atol=1e-8)
    np.testing.assert_allclose(np.abs(gp2.right_factor), np.eye(3), atol=1e-8)


def test_d1_scalars():
    env = product_env(np.array([[2.0]]), np.array([[3.0]]))
    gp = eat_gauge_fix(env)
    assert gp.left_factor.shape == (1, 1)
    assert (gp.left_factor * gp.right_factor).reshape(()) == pytest.approx(1.0)


def test_lambda_matches_eq20_singular_values():
    env = random_env(4, "loopy", loop_target=0.5, seed=13)
    es = eat_split(env)
    gp = eat_gauge_fix(env)
    scale = np.sqrt(es.lambda1)
    nl, ul = np.linalg.eigh(scale * es.g_left)
    nr, ur = np.linalg.eigh(scale * es.g_right)
    nl, nr = np.clip(nl, 0, None), np.clip(nr, 0, None)
    m = (np.sqrt(nl)[:, None] * (ul.T @ ur)) * np.sqrt(nr)
    lam_ref = np.linalg.svd(m, compute_uv=False)
    np.testing.assert_allclose(gp.lam, lam_ref, rtol=1e-10, atol=1e-12 * lam_ref[0])


def test_nonloopy_truncation_is_schmidt_optimal():
    env = random_env(4, "product", seed=21)
    res = eat_truncate(env, 3)
    # dropping the smallest Lambda costs exactly its square
    assert res.f_measured.absolute == pytest.approx(res.lam[-1] ** 2, rel=1e-8)
    res2 = eat_truncate(env, 2)
    assert res2.f_measured.absolute == pytest.approx(
        float(np.sum(res2.lam[2:] ** 2)), rel=1e-8)


def test_fixture_truncation_fails_on_loop():
    fx = virtual_loop_network(2, 2, seed=3)
    res = eat_truncate(fx.env, 2)
    assert res.f_measured.relative > 1e-3


def test_full_dim_truncation_is_identity():
    env = random_env(3, "loopy", loop_target=0.4, seed=2)
    res = eat_truncate(env, 3)
    assert res.f_measured.relative <= 1e-12


def test_absorbs_into_bond_tensors():
    rng = np.random.default_rng(0)
    env = random_env(3, "product", seed=4)
    a = rng.standard_normal((5, 3))
    b = rng.standard_normal((3, 5))
    res = eat_truncate(env, 2, tensors=(a, b))
    ta, tb = res.tensors
    assert ta.shape == (5, 2) and tb.shape == (2, 5)
    np.testing.assert_allclose(ta @ tb, a @ res.coeff @ b, atol=1e-12)


@pytest.mark.parametrize("field", ["real", "complex"])
def test_zmt_in_eat_gauge_equals_eat_when_nonloopy(field):
    # Non-loopy equivalence: the full-subspace zero-mode cut performed in the
    # EAT gauge produces the same truncated state as the EAT cut.
    env = random_env(4, "product", seed=31, field=field)
    gp = eat_gauge_fix(env)
    env_g = gauge_transform(env, gp.left_factor, gp.right_factor)
    step, _ = step_general(env_g, "full")
    m_zmt = gp.left_factor @ (step.left_absorb @ step.right_absorb) @ gp.right_factor
    res = eat_truncate(env, 3)
    m_eat = res.coeff
    assert fidelity_mismatch(env, m_zmt, m_eat) <= 1e-12
    assert abs(step.f_measured.absolute - res.f_measured.absolute) \
        <= 1e-10 * env.norm_target

"""
EAT gauge fixing and environment-assisted truncation of a single bond.

The gauge inserts a resolution of the identity A @ B = 1 on the bond such
that the transformed left and right metric factors both become the diagonal
matrix Lambda of split singular values.  For a non-loopy bond Lambda is the
Schmidt spectrum and dropping its tail is the optimal truncation.
"""
import numpy as np
from typing import NamedTuple

from .tensor import NumericalError
from .bondmetric import eat_split, gauge_transform, measure_error

__all__ = ["GaugePair", "EatTruncation", "eat_gauge_fix", "gauge_from_split",
           "eat_truncate", "absorb_factors"]

SPECTRAL_FLOOR = 1e-14   # relative floor on metric-factor eigenvalues


class GaugePair(NamedTuple):
    left_factor: np.ndarray    # D x D, absorbed into the left tensor
    right_factor: np.ndarray   # D x D, absorbed into the right tensor
    lam: np.ndarray            # non-increasing, >= 0


class EatTruncation(NamedTuple):
    left_absorb: np.ndarray    # D x D'
    right_absorb: np.ndarray   # D' x D
    coeff: np.ndarray          # left_absorb @ right_absorb on the old bond
    lam: np.ndarray
    f_measured: "ErrorMeasure"
    env_after: "BondEnvironment"
    tensors: tuple


def gauge_from_split(g_left, g_right, lambda1, is_complex=True):
    """EAT gauge pair from a rank-1 split of the metric.

    Both factors get the scale sqrt(lambda1) so that for a non-loopy bond the
    transformed full metric equals diag(lam) (x) diag(lam) exactly.
    """
    scale = np.sqrt(lambda1)
    wl, ul = np.linalg.eigh(scale * np.asarray(g_left))
    wr, ur = np.linalg.eigh(scale * np.asarray(g_right))
    wl = np.clip(wl, 0, None)
    wr = np.clip(wr, 0, None)
    if wl[-1] <= 0 or wr[-1] <= 0:
        raise NumericalError("EAT gauge: a metric factor is numerically zero")
    wl = np.maximum(wl, SPECTRAL_FLOOR * wl[-1])
    wr = np.maximum(wr, SPECTRAL_FLOOR * wr[-1])
    # SVD of N_L^{1/2} U_L^dag U_R^* N_R^{1/2}; the same floored eigenvalues
    # enter the inverse square roots, so left @ right = 1 holds exactly.
    m = (np.sqrt(wl)[:, None] * (ul.conj().T @ ur.conj())) * np.sqrt(wr)
    w, lam, vh = np.linalg.svd(m)
    left = (ul / np.sqrt(wl)) @ (w * np.sqrt(lam))
    right = (np.sqrt(lam)[:, None] * vh) @ ((1 / np.sqrt(wr))[:, None] * ur.T)
    if not is_complex:
        left, right = left.real, right.real
    return GaugePair(left, right, lam)


def eat_gauge_fix(env):
    """Fix the EAT gauge of a bond environment."""
    es = eat_split(env)
    return gauge_from_split(es.g_left, es.g_right, es.lambda1,
                            is_complex=env.is_complex)


def absorb_factors(tensors, left_absorb, right_absorb):
    """Absorb bond factors into a (left, right) tensor pair.

    The left tensor carries the bond on its last axis, the right tensor on
    its first axis.
    """
    if tensors is None:
        return None
    tl, tr = tensors
    tl2 = np.tensordot(tl, left_absorb, axes=(tl.ndim - 1, 0))
    tr2 = np.tensordot(right_absorb, tr, axes=(1, 0))
    return (tl2, tr2)


def eat_truncate(env, target_dim, tensors=None):
    """Truncate a bond to `target_dim` by dropping the EAT spectrum tail."""
    if target_dim < 1:
        raise ValueError("target_dim must be >= 1")
    if target_dim > env.d:
        raise ValueError(f"target_dim {target_dim} exceeds bond dimension {env.d}")
    gp = eat_gauge_fix(env)
    left = gp.left_factor[:, :target_dim]
    right = gp.right_factor[:target_dim, :]
    coeff = left @ right
    f = measure_error(env, coeff)
    env_after = gauge_transform(env, left, right)
    return EatTruncation(left, right, coeff, gp.lam, f, env_after,
                         absorb_factors(tensors, left, right))

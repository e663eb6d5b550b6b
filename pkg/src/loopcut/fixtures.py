"""
Analytic and randomized test networks.

The virtual-loop plaquette carries an internal index cycle decoupled from all
physical legs; merging it into one edge inflates that bond dimension by the
loop dimension without adding any physical content, which is exactly the
redundancy zero-mode truncation removes.
"""
import numpy as np
from typing import NamedTuple

from scipy.optimize import brentq

from .tensor import DenseTensor, NumericalError, contract, merge_legs
from .bondmetric import (BondEnvironment, contract_network, loopiness,
                         product_env)

__all__ = ["ToyPair", "VirtualLoopFixture", "toy_pair", "toy_error",
           "virtual_loop_network", "random_env", "random_psd"]


class ToyPair(NamedTuple):
    states: np.ndarray            # columns are the two (identical) states
    g: np.ndarray                 # their overlap matrix, 1 + sigma^x
    env: BondEnvironment          # full bond metric of the same construction
    pinv_solution: np.ndarray     # (1/2, 1/2)
    zero_mode_solution: np.ndarray  # (1, 0)
    zero_mode: np.ndarray         # (1, -1)/sqrt(2)


class VirtualLoopFixture(NamedTuple):
    env: BondEnvironment
    ket: DenseTensor              # contracted ket with the two stub legs open
    d_bond: int
    d_loop: int
    backbone: str
    merged_dim: int               # d_bond * d_loop
    exact_dim: int                # bond dimension sufficient for the state


def toy_pair():
    """Two identical normalized states behind a dimension-2 bond.

    The target is sum_j psi_j / 2; the overlap matrix 1 + sigma^x is singular
    with zero mode (1,-1).  The pseudoinverse keeps both branches with
    coefficients (1/2, 1/2); spending the zero-mode gauge freedom at z = 1/2
    reaches the one-branch solution (1, 0).  Both have error exactly zero.
    """
    v = np.array([1.0, 0.0])
    states = np.stack([v, v], axis=1)
    g = states.T @ states                       # = [[1,1],[1,1]] = 1 + sigma^x
    # full-metric version: psi_ij = v * M_ij with M = ones, whose diagonal
    # restriction reproduces g
    ket = np.einsum("p,ij->pij", v, np.ones((2, 2)))
    g4 = np.einsum("pij,pkl->ijkl", ket, ket)
    env = BondEnvironment(g4)
    return ToyPair(states, g, env,
                   np.array([0.5, 0.5]), np.array([1.0, 0.0]),
                   np.array([1.0, -1.0]) / np.sqrt(2))


def toy_error(g, c):
    """Norm squared of (variational - target) in the toy pair."""
    c = np.asarray(c, dtype=complex)
    ones = np.ones(2)
    return float(np.real(c.conj() @ g @ c - ones @ c - c.conj() @ ones + 1.0))


def virtual_loop_network(d_bond, d_loop, seed=0, backbone="plaquette",
                         phys_dim=2):
    """Four-tensor plaquette with a decoupled loop merged into one edge.

    The cut bond carries the merged index of dimension d_bond * d_loop; any
    single loop branch spans the same state, so the merged bond truncates
    exactly back to d_bond.  With `backbone="product"` the two sides connect
    only through the cut bond and the loopiness of the merged-bond metric is
    exactly 1 for d_loop >= 2 (degenerate leading split from the loop).
    """
    if d_bond < 1 or d_loop < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    D, d, p = d_bond, d_loop, phys_dim

    if backbone == "plaquette":
        a1 = DenseTensor(rng.standard_normal((D, p, D)), ["e4b", "p1", "i"])
        a2 = DenseTensor(rng.standard_normal((D, p, D)), ["j", "p2", "e2a"])
        a3 = DenseTensor(rng.standard_normal((D, p, D)), ["e2b", "p3", "e3a"])
        a4 = DenseTensor(rng.standard_normal((D, p, D)), ["e3b", "p4", "e4a"])
        tensors = [a1, a2, a3, a4]
        pairs = [("e2a", "e2b"), ("e3a", "e3b"), ("e4a", "e4b")]
    elif backbone == "product":
        a1 = DenseTensor(rng.standard_normal((p, D)), ["p1", "i"])
        a2 = DenseTensor(rng.standard_normal((D, p)), ["j", "p2"])
        tensors = [a1, a2]
        pairs = []
    else:
        raise ValueError(f"unknown backbone {backbone!r}")

    wire = DenseTensor(np.eye(d), ["a", "b"])
    ket = contract_network(tensors, pairs)
    ket = contract(ket, wire, [])
    ket = merge_legs(ket, ["i", "a"], "kL")
    ket = merge_legs(ket, ["j", "b"], "kR")
    phys = [l for l in ket.legs if l not in ("kL", "kR")]
    k = ket.to_matrix(phys, ["kL", "kR"])
    g = k.conj().T @ k
    dd = D * d
    env = BondEnvironment(g.reshape(dd, dd, dd, dd))
    return VirtualLoopFixture(env, ket, D, d, backbone, dd, D)


def random_psd(d, rng, field="complex", rank=None, decay=0.0):
    """Random PSD matrix with unit Frobenius norm.

    With `decay` > 0 the eigenvalues fall off geometrically like
    exp(-decay * k), mimicking the fast-decaying spectra of contracted
    network environments; decay = 0 gives a generic Wishart matrix.
    """
    rank = rank or 2 * d
    if field == "complex":
        a = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    else:
        a = rng.standard_normal((d, rank))
    g = a @ a.conj().T
    if decay > 0:
        w, q = np.linalg.eigh(g)
        spect = np.exp(-decay * np.arange(d))[::-1] * (0.5 + rng.random(d))
        g = (q * spect) @ q.conj().T
        g = (g + g.conj().T) / 2
    return g / np.linalg.norm(g)


def _product_matrix(d, rng, field, decay):
    gl = random_psd(d, rng, field, decay=decay)
    gr = random_psd(d, rng, field, decay=decay)
    m = np.einsum("ip,jq->ijpq", gl, gr)
    return m


def _support_psd(d, lo, hi, rng, field, decay):
    """Random PSD supported on basis indices [lo, hi); unit Frobenius norm."""
    k = hi - lo
    g = np.zeros((d, d), dtype=complex if field == "complex" else float)
    g[lo:hi, lo:hi] = random_psd(k, rng, field, decay=decay)
    return g


def _orthogonal_pair_matrix(d, rng, field, decay):
    """Sum of two product metrics with split-orthogonal factors.

    The two Kronecker terms have PSD factors on disjoint supports, so the
    left-right split has exactly two equal singular values: loopiness 1.
    """
    h = d // 2
    k1 = np.einsum("ip,jq->ijpq", _support_psd(d, 0, h, rng, field, decay),
                   _support_psd(d, 0, h, rng, field, decay))
    k2 = np.einsum("ip,jq->ijpq", _support_psd(d, h, d, rng, field, decay),
                   _support_psd(d, h, d, rng, field, decay))
    return k1 / np.linalg.norm(k1) + k2 / np.linalg.norm(k2)


def random_env(d, kind="product", loop_target=None, seed=0, field="complex",
               decay=2.0):
    """Seeded random bond environment.

    `kind="product"` gives an exactly non-loopy metric; `kind="loopy"`
    blends a product metric with a two-term product perturbation, binary
    searched so the loopiness lands within 0.02 of `loop_target`.  `decay`
    sets the geometric eigenvalue falloff of the PSD factors (decaying
    spectra are what contracted network environments look like; decay = 0
    gives generic Wishart factors).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "product":
        gl = random_psd(d, rng, field, decay=decay)
        gr = random_psd(d, rng, field, decay=decay)
        return product_env(gl, gr)
    if kind != "loopy":
        raise ValueError(f"unknown env kind {kind!r}")
    if d < 2:
        raise ValueError("loopy envs need d >= 2")
    if loop_target is None or not (0 <= loop_target < 1):
        raise ValueError("loopy envs need loop_target in [0, 1)")

    base = _product_matrix(d, rng, field, decay)
    base = base / np.linalg.norm(base)
    # the perturbation alone has loopiness exactly 1; the blend with the
    # full-rank product base sweeps the whole range and stays PSD
    pert = _orthogonal_pair_matrix(d, rng, field, decay)
    pert = pert / np.linalg.norm(pert)

    def gap(t):
        env = BondEnvironment((1 - t) * base + t * pert, validate="fast")
        return loopiness(env) - loop_target

    hi = 1.0 - 1e-9
    if gap(0.0) > 0 or gap(hi) < 0:
        raise NumericalError(
            f"cannot bracket loop_target {loop_target} "
            f"(endpoint loopiness {gap(hi) + loop_target:.3f})")
    t_star = brentq(gap, 0.0, hi, xtol=1e-12)
    env = BondEnvironment((1 - t_star) * base + t_star * pert)
    if abs(loopiness(env) - loop_target) > 0.02:
        raise NumericalError("loopiness search failed to converge")
    return env

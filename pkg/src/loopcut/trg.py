"""
Tensor renormalization group for the 2D classical Ising model.

One iteration takes the checkerboard tensor pair (Ta, Tb), treats the four
tensors around a plaquette as a periodic MPS, brings it to the Vidal gauge,
splits every site into two rank-3 tensors, compresses the four new chi^2
bonds back to chi with a pluggable truncation scheme, optimizes all eight
tensors by alternating least squares against the exact plaquette, and
contracts the groups of four half-tensors around the complementary
plaquettes into the next (Na, Nb) pair.

Free energies are accumulated from the per-iteration normalization factors
plus a terminal two-site torus trace, and validated against the Onsager
integral and exhaustive small-torus sums.
"""
import time
import numpy as np
from dataclasses import dataclass, field

from .tensor import NumericalError, pinv
from .bondmetric import BondEnvironment
from .eatgauge import gauge_from_split
from .zmt import step_linear, step_general, linear_update_diag
from .pmps import (PeriodicMPS, SplitChain, ring_sites, vidal_gauge,
                   split_sites, bond_env_dense, bond_env_diag, split_leading,
                   chain_quadratic_form, chain_norm_sq, target_norm_sq,
                   target_chain_overlap, recombine, _transfer3,
                   _site_transfer)
from .ising import (ising_tensor, critical_beta, onsager_free_energy,
                    lnz_per_spin_enumeration)

__all__ = ["TrgState", "TrgResult", "IterationReport", "BondReport",
           "SCHEMES", "ising_tensor", "onsager_free_energy", "critical_beta",
           "bond_metric_pmps", "als_optimize", "coarse_grain",
           "trg_iteration", "trg_run", "torus_lnz_per_spin"]

SCHEMES = ("tebd", "eat", "zmt1", "zmt2", "zmt3")


@dataclass
class BondReport:
    bond: int
    scheme: str
    dim_before: int
    dim_after: int
    f_rel: float                 # truncation error against the bond metric
    loopiness: float = None
    switched_at: int = None      # linear -> general switch dimension
    capped: bool = False         # general phase entered at the dimension cap


@dataclass
class IterationReport:
    iteration: int
    scheme: str
    cost_initial_rel: float
    cost_final_rel: float
    loopiness: float
    bonds: list
    c_a: float
    c_b: float
    als_sweeps: int
    wall_ms: float


@dataclass
class TrgState:
    tensor_a: np.ndarray
    tensor_b: np.ndarray
    log_norm_acc: float
    iteration: int
    reports: list

    @property
    def tensor(self):
        return self.tensor_a


@dataclass
class TrgResult:
    free_energy: float
    lnz_per_spin: float
    onsager: float
    state: TrgState
    beta: float
    chi: int
    scheme: str
    delta: float
    seed: int


def bond_metric_pmps(variational, bond_index, target=None, max_dense=64):
    """Dense bond metric of one new bond of the 8-site variational chain.

    The metric is the exact contraction of the chain against itself with the
    named bond cut in ket and bra; previously truncated bonds enter through
    the chain as given.  `target` is accepted for interface symmetry with
    the cost function but does not enter the metric.
    """
    sites = variational.sites if isinstance(variational, SplitChain) else variational
    d = sites[2 * bond_index].shape[2]
    if d > max_dense:
        raise NumericalError(
            f"bond dimension {d} too large to materialize a dense metric")
    return bond_env_dense(sites, bond_index, validate="fast")


def _absorb_bond(sites, bond, left, right):
    sites[2 * bond] = np.tensordot(sites[2 * bond], left, axes=(2, 0))
    sites[2 * bond + 1] = np.tensordot(right, sites[2 * bond + 1], axes=(1, 0))


def _truncate_bond(sites, bond, chi, scheme, delta, k_candidates,
                   max_general_dim, want_loopiness, seed):
    """Compress one chi^2 bond of the chain down to chi, in place."""
    m = sites[2 * bond].shape[2]
    loop_l = None
    if want_loopiness:
        s2, _, _ = split_leading(sites, bond, k=2, seed=seed)
        loop_l = float(s2[1] / s2[0])
    if m <= chi:
        return BondReport(bond, scheme, m, m, 0.0, loopiness=loop_l)

    if scheme == "tebd":
        # plain truncation of the split spectrum: the chain halves carry
        # sqrt(lambda-tilde) sorted non-increasing, so keep the first chi
        left = np.eye(m)[:, :chi]
        right = np.eye(m)[:chi, :]
        f = chain_quadratic_form(sites, bond, left @ right)
        _, norm = bond_env_diag(sites, bond)
        _absorb_bond(sites, bond, left, right)
        return BondReport(bond, scheme, m, chi, f / norm, loopiness=loop_l)

    if scheme == "eat":
        s2, gl, gr = split_leading(sites, bond, k=2, seed=seed)
        gp = gauge_from_split(gl, gr, float(s2[0]), is_complex=False)
        left = gp.left_factor[:, :chi]
        right = gp.right_factor[:chi, :]
        f = chain_quadratic_form(sites, bond, left @ right)
        _, norm = bond_env_diag(sites, bond)
        _absorb_bond(sites, bond, left, right)
        return BondReport(bond, scheme, m, chi, f / norm,
                          loopiness=float(s2[1] / s2[0]))

    if scheme not in ("zmt1", "zmt2", "zmt3"):
        raise ValueError(f"unknown truncation scheme {scheme!r}")

    gd, norm0 = bond_env_diag(sites, bond)
    ltot = np.eye(m)
    rtot = np.eye(m)
    dlt = np.inf if scheme == "zmt1" else delta
    switched_at = None
    capped = False
    cur = gd
    while cur.shape[0] > chi:
        st = step_linear(cur, k_candidates=k_candidates)
        norm_cur = float(np.real(cur.sum()))
        if st.f_pred / max(norm_cur, 1e-300) > dlt:
            if cur.shape[0] <= max_general_dim:
                switched_at = cur.shape[0]
                break
            capped = True          # too big for the dense metric; keep linear
        cur = linear_update_diag(cur, st)
        ltot = ltot @ st.left_absorb
        rtot = st.right_absorb @ rtot

    if switched_at is not None:
        tmp = list(sites)
        _absorb_bond(tmp, bond, ltot, rtot)
        env = bond_env_dense(tmp, bond, validate="fast")
        subspace = "real-symmetric" if scheme == "zmt2" else "full"
        real_e = scheme == "zmt3"
        while env.d > chi:
            st, env = step_general(env, subspace, k_candidates=k_candidates,
                                   real_e_only=real_e)
            ltot = ltot @ st.left_absorb
            rtot = st.right_absorb @ rtot

    f = chain_quadratic_form(sites, bond, ltot @ rtot)
    _absorb_bond(sites, bond, ltot, rtot)
    return BondReport(bond, scheme, m, chi, f / norm0, loopiness=loop_l,
                      switched_at=switched_at, capped=capped)


def _gauged_targets(pm):
    """Rank-4 target sites: sqrt(lam) Gamma sqrt(lam), matching the chain."""
    n = pm.n
    out = []
    for i in range(n):
        sl = np.sqrt(pm.bonds[(i - 1) % n])
        sr = np.sqrt(pm.bonds[i])
        out.append(np.einsum("a,apqb,b->apqb", sl, pm.sites[i], sr))
    return out


def _relative_cost(targets, chain, tt=None):
    tt = target_norm_sq(targets) if tt is None else tt
    vv = chain_norm_sq(chain)
    tv = target_chain_overlap(targets, chain)
    return max(tt - 2 * tv.real + vv, 0.0) / tt


def als_optimize(targets, chain, max_sweeps=100, tol=1e-10, rcond=1e-12):
    """Alternating least squares on the eight chain tensors.

    Every single-tensor update solves the exact normal equations of the
    Frobenius cost |target - chain|^2 (pseudoinverse-regularized) and is
    accepted only if the local quadratic does not increase, so the recorded
    cost trace is non-increasing.  Returns (chain, cost trace).
    """
    n8 = len(chain)
    tt = target_norm_sq(targets)
    trace = [_relative_cost(targets, chain, tt)]
    if trace[0] <= tol:
        return chain, trace
    for sweep in range(max_sweeps):
        for mpos in range(n8):
            _als_update(targets, chain, mpos, tt, rcond)
        trace.append(_relative_cost(targets, chain, tt))
        if abs(trace[-2] - trace[-1]) <= tol * max(trace[-2], 1e-300):
            break
    return chain, trace


def _als_update(targets, chain, mpos, tt, rcond):
    n8 = len(chain)
    i = mpos // 2
    n4 = n8 // 2
    # environment of <v|v>: product of the other seven double-layer transfers
    e = None
    for step in range(1, n8):
        j = (mpos + step) % n8
        t = _transfer3(chain[j])
        e = t if e is None else e @ t
    da, db = chain[mpos].shape[0], chain[mpos].shape[2]
    # e maps (right-bond pair of W) -> (left-bond pair of W)
    e4 = e.reshape(db, db, da, da)
    m_loc = e4.transpose(2, 0, 3, 1).reshape(da * db, da * db)
    m_loc = (m_loc + m_loc.conj().T) / 2

    # <t|v> with the W slot open
    if mpos % 2 == 0:
        part = np.einsum("LPQR,kQb->LPkRb", targets[i].conj(),
                         chain[2 * i + 1], optimize=True)
    else:
        part = np.einsum("LPQR,aPk->LkQRa", targets[i].conj(),
                         chain[2 * i], optimize=True)
    f = None
    for step in range(1, n4):
        j = (i + step) % n4
        fj = _site_transfer(recombine(chain[2 * j], chain[2 * j + 1]),
                            bra=targets[j])
        f = fj if f is None else f @ fj
    dl_t = targets[i].shape[0]
    dl_c = chain[2 * i].shape[0]
    dr_t = targets[i].shape[3]
    dr_c = chain[2 * i + 1].shape[2]
    # mixed transfers carry (chain, target) pairs: rows at the bond right of
    # site i, columns at the bond to its left
    f4 = f.reshape(dr_c, dr_t, dl_c, dl_t)
    if mpos % 2 == 0:
        # open legs [a, P, k]; part is [L, P, k, R, b]
        b_env = np.einsum("LpkRb,bRaL->apk", part, f4, optimize=True)
        b_vec = b_env.transpose(0, 2, 1)        # [a, k, p] -> bonds x phys
    else:
        # open legs [k, Q, b]; part is [L, k, Q, R, a]
        b_env = np.einsum("LkqRa,bRaL->kqb", part, f4, optimize=True)
        b_vec = b_env.transpose(0, 2, 1)        # [k, b, q]
    dp = chain[mpos].shape[1]
    w_old = chain[mpos].transpose(0, 2, 1).reshape(da * db, dp)
    b_mat = b_vec.reshape(da * db, dp)
    w_new = pinv(m_loc, rcond=rcond) @ b_mat

    def local_cost(w):
        return float(np.real(np.sum(w.conj() * (m_loc @ w))
                             - 2 * np.sum(np.real(w.conj() * b_mat))))

    if local_cost(w_new) <= local_cost(w_old):
        chain[mpos] = w_new.reshape(da, db, dp).transpose(0, 2, 1)


def coarse_grain(chain):
    """Contract the half-tensor groups around the complementary plaquettes.

    Each new tensor collects, from the four sites around one such plaquette,
    the half facing it; the split bonds become the legs of the new
    checkerboard pair (Na, Nb), returned in [u, l, d, r] order along with
    the max-abs normalization factors taken out.
    """
    x1, y1, x2, y2, x3, y3, x4, y4 = chain.sites
    # site (1,0) faces the first new plaquette with its (r,u) half Y2, etc.
    na = np.einsum("Bmn,noC,qmA,Doq->CBAD", y2, x3, x1, y4, optimize=True)
    nb = np.einsum("abD,Cca,dcB,Abd->ADCB", x4, y3, x2, y1, optimize=True)
    scale = np.exp(chain.log_scale / 2.0)
    na = na * scale
    nb = nb * scale
    c_a = float(np.abs(na).max())
    c_b = float(np.abs(nb).max())
    if c_a == 0 or c_b == 0:
        raise NumericalError("coarse tensor collapsed to zero")
    return na / c_a, nb / c_b, c_a, c_b


def trg_iteration(t_a, t_b, chi, scheme="tebd", delta=1e-10, als_sweeps=100,
                  als_tol=1e-10, k_candidates=None, max_general_dim=48,
                  want_loopiness=True, seed=0, iteration=0):
    """One full coarse-graining step; returns (Na, Nb, report)."""
    t0 = time.perf_counter()
    ring = ring_sites(t_a, t_b)
    pm = vidal_gauge(ring)
    targets = _gauged_targets(pm)
    chain = split_sites(pm)
    bonds = []
    for bond in range(4):
        rep = _truncate_bond(chain.sites, bond, chi, scheme, delta,
                             k_candidates, max_general_dim,
                             want_loopiness and bond == 0, seed)
        bonds.append(rep)
    cost0 = _relative_cost(targets, chain.sites)
    chain_sites, trace = als_optimize(targets, chain.sites,
                                      max_sweeps=als_sweeps, tol=als_tol)
    chain.sites = chain_sites
    na, nb, c_a, c_b = coarse_grain(chain)
    wall = (time.perf_counter() - t0) * 1e3
    report = IterationReport(iteration, scheme, cost0, trace[-1],
                             bonds[0].loopiness, bonds, c_a, c_b,
                             len(trace) - 1, wall)
    return na, nb, report


def _two_site_trace(t_a, t_b):
    """Tensor trace of the two-site diagonal torus (every neighbor pairing
    connects the two tensors)."""
    return float(np.einsum("uldr,drul->", t_a, t_b, optimize=True))


def _four_site_trace(t_a, t_b):
    """Tensor trace of the 2x2 checkerboard torus (doubled wrap bonds)."""
    return float(np.einsum("abcd,edfb,cgah,fheg->", t_a, t_b, t_b, t_a,
                           optimize=True))


def trg_run(beta, chi, n_iters, scheme="tebd", delta=1e-10, seed=0,
            als_sweeps=100, als_tol=1e-10, k_candidates=None,
            max_general_dim=48, want_loopiness=True):
    """Coarse grain the infinite lattice and estimate the free energy.

    Per iteration the tensors are normalized by their max-abs entries c_a,
    c_b; since each tensor after k iterations stands for 2^k original ones,
    ln Z per tensor site = sum_k 2^-k (ln c_a,k + ln c_b,k)/2 plus the
    terminal two-site torus trace, and each tensor covers two spins.
    """
    if chi < 2:
        raise ValueError("chi must be >= 2")
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    t_a = ising_tensor(beta)
    t_b = t_a.copy()
    acc = 0.0
    reports = []
    for k in range(1, n_iters + 1):
        t_a, t_b, rep = trg_iteration(
            t_a, t_b, chi, scheme=scheme, delta=delta, als_sweeps=als_sweeps,
            als_tol=als_tol, k_candidates=k_candidates,
            max_general_dim=max_general_dim, want_loopiness=want_loopiness,
            seed=seed, iteration=k)
        acc += 0.5 * (np.log(rep.c_a) + np.log(rep.c_b)) * 2.0 ** (-k)
        reports.append(rep)
    tail = 2.0 ** (-n_iters) * 0.5 * np.log(_two_site_trace(t_a, t_b))
    lnz_per_tensor = acc + tail
    lnz_per_spin = lnz_per_tensor / 2.0
    state = TrgState(t_a, t_b, lnz_per_tensor, n_iters, reports)
    return TrgResult(-lnz_per_spin / beta, lnz_per_spin,
                     onsager_free_energy(beta), state, beta, chi, scheme,
                     delta, seed)


def torus_lnz_per_spin(beta, chi, scheme="tebd", delta=1e-10, seed=0,
                       als_sweeps=100, als_tol=1e-10):
    """ln Z per spin of the 4x4 spin torus via two coarse-graining steps.

    The 16-spin torus is eight vertex tensors on a tilted torus; one step
    maps them to four tensors on a 2x2 checkerboard torus, a second to the
    two-site diagonal torus, which is traced exactly.  At full rank this
    reproduces the exhaustive spin sum to round-off.
    """
    t_a = ising_tensor(beta)
    t_b = t_a.copy()
    lnz = 0.0
    counts = [(2, 2), (1, 1)]
    for k in range(2):
        t_a, t_b, rep = trg_iteration(t_a, t_b, chi, scheme=scheme,
                                      delta=delta, als_sweeps=als_sweeps,
                                      als_tol=als_tol, iteration=k + 1,
                                      want_loopiness=False, seed=seed)
        ca_count, cb_count = counts[k]
        lnz += ca_count * np.log(rep.c_a) + cb_count * np.log(rep.c_b)
    lnz += np.log(_two_site_trace(t_a, t_b))
    return lnz / 16.0

"""
Periodic MPS machinery for the plaquette ring of the coarse-graining step.

A ring of rank-4 sites [l, p1, p2, r] is brought to the Vidal gauge (site
tensors Gamma_i, diagonal bond weights lam_i) using exact loop environments,
then each site is split across its (l, p1) x (p2, r) diagonal into two
rank-3 tensors [l, p, r] joined by a new bond.  All bond weights are
absorbed symmetrically, so the 8-site chain contracts like a plain ring.

Bond metrics of the new bonds are produced three ways: dense (small
dimensions), diagonal-only (cheap at chi^2), and as a lazy split operator
for the leading left-right singular pairs at full chi^2.
"""
import numpy as np
from dataclasses import dataclass, field

import scipy.sparse.linalg as spla

from .tensor import NumericalError
from .bondmetric import BondEnvironment

__all__ = ["PeriodicMPS", "SplitChain", "ring_sites", "vidal_gauge",
           "orthogonality_residual", "split_sites", "chain_norm_sq",
           "target_norm_sq", "target_chain_overlap", "ring_probe_value",
           "chain_probe_value", "bond_env_dense", "bond_env_diag",
           "split_leading", "chain_quadratic_form", "recombine"]

TRIM_TOL = 1e-12      # relative cut on split weights / environment eigenvalues
LAM_TRIM = 1e-6       # relative cut on gauge bond weights: direction weights
                      # below the eig-noise floor cannot satisfy the
                      # orthogonality conditions and carry ~1e-14 of the state


@dataclass
class PeriodicMPS:
    """Cyclic chain in Vidal form: bonds[i] sits between sites[i], sites[i+1].

    The represented ring value is exp(log_scale) times the plain contraction
    of the Gamma/lambda chain; the Fig-9b normalization of the canonical form
    fixes the chain's own norm, so the physical scale rides separately.
    """
    sites: list
    bonds: list
    gauge_residual: float = np.inf
    log_scale: float = 0.0

    @property
    def n(self):
        return len(self.sites)


@dataclass
class SplitChain:
    """8 rank-3 tensors [l, p, r]; new bond c sits between 2c and 2c+1."""
    sites: list
    spectra: list          # full new-bond spectra, one per original site
    log_scale: float = 0.0

    @property
    def n(self):
        return len(self.sites)

    def new_bond_dim(self, c):
        return self.sites[2 * c].shape[2]


def ring_sites(t_a, t_b):
    """The four ring arrangements of a checkerboard tensor pair.

    Sites are the corners BL, BR, TR, TL of a plaquette, traversed
    counterclockwise; legs are permuted so every site reads [ring-left, p1,
    p2, ring-right] with p1 grouped with ring-left by the later split:
    BL: [u l d r], BR: [l d r u], TR: [d r u l], TL: [r u l d].
    """
    return [np.ascontiguousarray(t_a),
            np.ascontiguousarray(np.transpose(t_b, (1, 2, 3, 0))),
            np.ascontiguousarray(np.transpose(t_a, (2, 3, 0, 1))),
            np.ascontiguousarray(np.transpose(t_b, (3, 0, 1, 2)))]


def _site_transfer(site, bra=None):
    """Double-layer transfer of a rank-4 site: [(l l'), (r r')]."""
    bra = site if bra is None else bra
    dl, dr = site.shape[0], site.shape[3]
    t = np.einsum("apqb,cpqd->acbd", site, bra.conj(), optimize=True)
    return t.reshape(dl * dl, dr * dr)


def _weighted_transfer(site, lam_right):
    w = np.einsum("apqb,b->apqb", site, lam_right)
    return _site_transfer(w)


def _dominant_eigmatrix(mat, dim, prev=None):
    """Dominant eigenvector of a loop transfer, as a Hermitian PSD matrix.

    Degenerate leading eigenvalues are resolved by maximal overlap with the
    previous iterate (the identity on the first pass).
    """
    w, v = np.linalg.eig(mat)
    order = np.argsort(-np.abs(w))
    w, v = w[order], v[:, order]
    top = np.abs(w) >= (1 - 1e-10) * np.abs(w[0])
    if prev is None or prev.size != dim * dim:
        prev = np.eye(dim)
    ref = prev.reshape(-1)
    cands = np.nonzero(top)[0]
    overlaps = [abs(np.vdot(v[:, k], ref)) for k in cands]
    pick = cands[int(np.argmax(overlaps))]
    rho = v[:, pick].reshape(dim, dim)
    tr = np.trace(rho)
    if abs(tr) > 1e-14 * np.linalg.norm(rho):
        rho = rho * (np.conj(tr) / abs(tr))
    rho = (rho + rho.conj().T) / 2
    if np.trace(rho).real < 0:
        rho = -rho
    return rho


def _psd_root(rho):
    """(kept eigenvalues, factor) with rho ~ factor^dag factor for the left
    or factor factor^dag for the right, after trimming the null space."""
    w, u = np.linalg.eigh(rho)
    keep = w > TRIM_TOL * max(w[-1], 0)
    if not np.any(keep):
        raise NumericalError("zero loop environment")
    return w[keep], u[:, keep]


def _realify(a):
    """Drop a numerically irrelevant imaginary part."""
    if np.iscomplexobj(a):
        scale = np.max(np.abs(a))
        if scale == 0 or np.max(np.abs(a.imag)) <= 1e-12 * scale:
            return np.ascontiguousarray(a.real)
    return a


def _condition_matrices(gam, lam, i):
    """Left/right orthogonality matrices of site i for the given weights."""
    n = len(gam)
    g = gam[i]
    left = np.einsum("a,apqb,apqc->bc", lam[(i - 1) % n] ** 2, g, g.conj(),
                     optimize=True)
    right = np.einsum("b,apqb,cpqb->ac", lam[i] ** 2, g, g.conj(),
                      optimize=True)
    return left, right


def _fix_condition_scales(gam, lam):
    """Rescale weights and sites so the orthogonality constants become one.

    At the shape-converged fixed point the condition matrices are
    proportional to the identity; this solves the cyclic log-linear system
    for per-bond and per-site scale factors and returns the log of the
    overall factor taken out of the ring value.
    """
    n = len(gam)
    c_l = np.empty(n)
    c_r = np.empty(n)
    for i in range(n):
        left, right = _condition_matrices(gam, lam, i)
        c_l[i] = max(np.real(np.trace(left)) / left.shape[0], 1e-300)
        c_r[i] = max(np.real(np.trace(right)) / right.shape[0], 1e-300)
    # a_i = ln t_i^2 (bond factors), b_i = ln s_i^2 (site factors) with
    # a_i - b_i = -ln c_r(i), a_{i-1} - b_i = -ln c_l(i)
    inc = np.log(c_l) - np.log(c_r)          # a_i - a_{i-1} for i = 0..n-1
    inc = inc - inc.mean()                    # close the cycle exactly
    a = np.concatenate([[0.0], np.cumsum(inc[1:])])
    b = a + np.log(c_r)
    log_factor = 0.5 * float(np.sum(a) - np.sum(b))
    for i in range(n):
        lam[i] = lam[i] * np.exp(0.5 * a[i])
        gam[i] = gam[i] / np.exp(0.5 * b[i])
    return -log_factor


def vidal_gauge(sites, max_sweeps=200, tol=1e-10):
    """Bring a ring of rank-4 sites to the Vidal gauge.

    Bond environments are the dominant eigenmatrices of the full cyclic
    transfer cut at the bond (exact at four sites, no power-iteration
    ambiguity); each bond is regauged by the symmetric square-root
    construction, per-site condition scales are solved exactly at the end of
    every sweep, and sweeps repeat until the Fig-9b orthogonality residual
    drops below `tol`.  The ring value is exp(log_scale) times the gauged
    chain's contraction.
    """
    n = len(sites)
    gam = [np.ascontiguousarray(s, dtype=float) for s in sites]
    lam = [np.ones(gam[i].shape[3]) for i in range(n)]
    prev_rho = [None] * (2 * n)
    log_scale = 0.0

    for sweep in range(max_sweeps):
        for i in range(n):
            # cyclic transfer from bond i around the ring, lam_i excluded
            mats = []
            for step in range(1, n + 1):
                j = (i + step) % n
                if step < n:
                    mats.append(_weighted_transfer(gam[j], lam[j]))
                else:
                    mats.append(_site_transfer(gam[j]))
            a = mats[0]
            for m in mats[1:]:
                a = a @ m
            dim = gam[i].shape[3]
            w_i = (lam[i][:, None] * lam[i][None, :]).reshape(-1)
            # messages just outside lam_i on both sides: right eigvector of
            # A W and left eigvector of W A
            rho_r = _dominant_eigmatrix(a * w_i[None, :], dim, prev_rho[2 * i])
            rho_l = _dominant_eigmatrix((a * w_i[:, None]).conj().T, dim,
                                        prev_rho[2 * i + 1])
            prev_rho[2 * i], prev_rho[2 * i + 1] = rho_r, rho_l

            wl, ul = _psd_root(rho_l)
            wr, ur = _psd_root(rho_r)
            x = np.sqrt(wl)[:, None] * ul.conj().T          # rho_l = x^dag x
            y = ur * np.sqrt(wr)                            # rho_r = y y^dag
            m = (x * lam[i]) @ y
            u, lnew, vh = np.linalg.svd(m, full_matrices=False)
            keep = lnew > LAM_TRIM * lnew[0]
            u, lnew, vh = u[:, keep], lnew[keep], vh[keep, :]
            xin_u = np.linalg.pinv(x) @ u
            vh_yin = vh @ np.linalg.pinv(y)
            gam[i] = _realify(np.einsum("apqb,bc->apqc", gam[i], xin_u))
            gam[(i + 1) % n] = _realify(np.einsum("ab,bpqc->apqc",
                                                  vh_yin, gam[(i + 1) % n]))
            lam[i] = lnew
        log_scale += _fix_condition_scales(gam, lam)
        pm = PeriodicMPS(gam, lam, log_scale=log_scale)
        pm.gauge_residual = orthogonality_residual(pm)
        if pm.gauge_residual < tol:
            return pm
    raise NumericalError(
        f"Vidal gauge did not reach residual {tol:.1e} in {max_sweeps} sweeps "
        f"(got {pm.gauge_residual:.3e})")


def orthogonality_residual(pm):
    """Worst violation of the left/right orthogonality relations."""
    worst = 0.0
    n = pm.n
    for i in range(n):
        g = pm.sites[i]
        lam_l, lam_r = pm.bonds[(i - 1) % n], pm.bonds[i]
        left = np.einsum("a,apqb,apqc->bc", lam_l ** 2, g, g.conj(),
                         optimize=True)
        right = np.einsum("b,apqb,cpqb->ac", lam_r ** 2, g, g.conj(),
                          optimize=True)
        dl = np.linalg.norm(left - np.eye(left.shape[0])) / np.sqrt(left.shape[0])
        dr = np.linalg.norm(right - np.eye(right.shape[0])) / np.sqrt(right.shape[0])
        worst = max(worst, dl, dr)
    return worst


def _invsqrt(lam):
    floor = TRIM_TOL * lam.max()
    return 1.0 / np.sqrt(np.maximum(lam, floor))


def split_sites(pm, max_rank=None):
    """SVD-split every site of a Vidal ring into two rank-3 tensors.

    Each Theta_i = lam_{i-1} Gamma_i lam_i is split across (l, p1) x (p2, r);
    the new-bond weights are absorbed as sqrt on both halves and the old-bond
    weights as inverse square roots, so the chain of the 16 ... 8 tensors
    contracts to exactly the same ring (at full rank).
    """
    n = pm.n
    chain = []
    spectra = []
    for i in range(n):
        lam_l, lam_r = pm.bonds[(i - 1) % n], pm.bonds[i]
        g = pm.sites[i]
        dl, p1, p2, dr = g.shape
        theta = np.einsum("a,apqb,b->apqb", lam_l, g, lam_r)
        u, s, vh = np.linalg.svd(theta.reshape(dl * p1, p2 * dr),
                                 full_matrices=False)
        keep = s > TRIM_TOL * s[0]
        if max_rank is not None:
            keep[max_rank:] = False
        u, sk, vh = u[:, keep], s[keep], vh[keep, :]
        x = (u * np.sqrt(sk)).reshape(dl, p1, -1)
        x = x * _invsqrt(lam_l)[:, None, None]
        y = (np.sqrt(sk)[:, None] * vh).reshape(-1, p2, dr)
        y = y * _invsqrt(lam_r)[None, None, :]
        chain.append(x)
        chain.append(y)
        spectra.append(s)
    return SplitChain(chain, spectra, log_scale=pm.log_scale)


def recombine(x, y):
    """Join the two halves of a split site back into a rank-4 tensor."""
    return np.einsum("apk,kqb->apqb", x, y, optimize=True)


def _transfer3(site, bra=None):
    bra = site if bra is None else bra
    dl, dr = site.shape[0], site.shape[2]
    t = np.einsum("apb,cpd->acbd", site, bra.conj(), optimize=True)
    return t.reshape(dl * dl, dr * dr)


def chain_norm_sq(chain):
    """<v|v> of a plain cyclic chain of rank-3 tensors."""
    a = _transfer3(chain[0])
    for s in chain[1:]:
        a = a @ _transfer3(s)
    return float(np.real(np.trace(a)))


def ring_probe_value(sites, probes, bonds=None):
    """Scalar from closing each site's phys legs with probe vectors."""
    n = len(sites)
    a = None
    for i, s in enumerate(sites):
        v1, v2 = probes[2 * i], probes[2 * i + 1]
        m = np.einsum("apqb,p,q->ab", s, v1, v2)
        if bonds is not None:
            m = m * bonds[i][None, :]
        a = m if a is None else a @ m
    return float(np.real(np.trace(a)))


def chain_probe_value(chain, probes):
    """Same probe closure for the 8-site split chain."""
    a = None
    for s, v in zip(chain, probes):
        m = np.einsum("apb,p->ab", s, v)
        a = m if a is None else a @ m
    return float(np.real(np.trace(a)))


def target_norm_sq(targets):
    """<t|t> of the ring of rank-4 target sites (plain contraction)."""
    a = _site_transfer(targets[0])
    for s in targets[1:]:
        a = a @ _site_transfer(s)
    return float(np.real(np.trace(a)))


def target_chain_overlap(targets, chain):
    """<t|v> between the 4-site target ring and the 8-site chain."""
    a = None
    for i, t in enumerate(targets):
        pair = recombine(chain[2 * i], chain[2 * i + 1])
        f = _site_transfer(pair, bra=t)
        # f maps with the chain on the ket layer and target on the bra
        a = f if a is None else a @ f
    return complex(np.trace(a))


def _metric_chain(chain, bond):
    """(y_end, middle rank-4 sites, x_end) of the cut-open metric chain."""
    n4 = len(chain) // 2
    y_end = chain[2 * bond + 1]
    x_end = chain[2 * bond]
    middle = [recombine(chain[2 * j], chain[2 * j + 1])
              for j in (np.arange(1, n4) + bond) % n4]
    return y_end, middle, x_end


def bond_env_dense(chain, bond, validate="fast"):
    """Dense BondEnvironment of new bond `bond` of the split chain."""
    y_end, middle, x_end = _metric_chain(chain, bond)
    d = y_end.shape[0]
    # a[s, t, b, c]: s is the ket right stub, t the bra right stub
    a = np.einsum("spb,tpc->stbc", y_end, y_end.conj(), optimize=True)
    a = a.reshape(d, d, -1)
    for s4 in middle:
        t = _site_transfer(s4)
        a = a @ t
    b = np.einsum("epi,fpj->efij", x_end, x_end.conj(), optimize=True)
    b = b.reshape(-1, d, d)
    # bra pair (j, t), ket pair (i, s)
    g4 = np.einsum("ste,eij->jtis", a, b, optimize=True)
    return BondEnvironment(g4, validate=validate)


def bond_env_diag(chain, bond):
    """Diagonal D x D metric of a new bond, plus the target norm.

    Never materializes the D^2 x D^2 metric: the ket stub index (carried on
    both ends of the cut) and the bra stub index ride through the transfer
    contraction as free indices.
    """
    y_end, middle, x_end = _metric_chain(chain, bond)
    d = y_end.shape[0]
    # carried indices: j = ket stub, i = bra stub
    a = np.einsum("jpb,ipc->jibc", y_end, y_end.conj(), optimize=True)
    a = a.reshape(d, d, -1)
    for s4 in middle:
        t = _site_transfer(s4)
        a = a @ t
    dl = x_end.shape[0]
    a = a.reshape(d, d, dl, dl)
    g = np.einsum("jief,epj,fpi->ij", a, x_end, x_end.conj(), optimize=True)
    g = (g + g.conj().T) / 2
    norm = float(np.real(g.sum()))
    return g, norm


def chain_quadratic_form(chain, bond, coeff):
    """(delta - coeff)^dag g (delta - coeff) on a new bond, lazily.

    Closes the ket layer of the cut with (delta - coeff) and the bra layer
    with its conjugate; cost is one ring contraction.
    """
    y_end, middle, x_end = _metric_chain(chain, bond)
    d = y_end.shape[0]
    r = np.eye(d) - np.asarray(coeff)
    ket = np.einsum("api,ij,jqb->apqb", x_end, r, y_end, optimize=True)
    bra = np.einsum("api,ij,jqb->apqb", x_end, r.conj(), y_end, optimize=True)
    a = _site_transfer(ket, bra=bra)
    for s4 in middle:
        a = a @ _site_transfer(s4)
    val = float(np.real(np.trace(a)))
    return max(val, 0.0)


def split_leading(chain, bond, k=2, dense_limit=36, seed=0):
    """Leading split singular values/factors of a new-bond metric.

    Dense for small bonds; ARPACK on a matrix-free operator at full chi^2.
    Returns (singular values, g_left, g_right) with Hermitized PSD factors.
    """
    d = chain[2 * bond].shape[2]
    if d <= dense_limit:
        env = bond_env_dense(chain, bond)
        m = env.split_matrix
        u, s, vh = np.linalg.svd(m)
        gl = u[:, 0].reshape(d, d)
        gr = vh[0, :].reshape(d, d)
    else:
        op = _SplitOperator(chain, bond)
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(d * d)
        u, s, vh = spla.svds(op, k=k, v0=v0, maxiter=5000)
        order = np.argsort(-s)
        u, s, vh = u[:, order], s[order], vh[order, :]
        gl = u[:, 0].reshape(d, d)
        gr = vh[0, :].reshape(d, d)
    from .bondmetric import _fix_product_phase, _hermitian_psd_part
    gl, gr = _fix_product_phase(gl, gr)
    gl = _hermitian_psd_part(gl).real
    gr = _hermitian_psd_part(gr).real
    return s[:k], gl, gr


class _SplitOperator(spla.LinearOperator):
    """Matrix-free (bra-left, ket-left) x (bra-right, ket-right) split."""

    def __init__(self, chain, bond):
        y_end, middle, x_end = _metric_chain(chain, bond)
        if any(np.iscomplexobj(t) for t in chain):
            raise NumericalError("lazy split operator supports real chains only")
        self.d = y_end.shape[0]
        self.y_end, self.x_end = y_end, x_end
        self.mids = [_site_transfer(s4) for s4 in middle]
        super().__init__(dtype=np.float64, shape=(self.d ** 2, self.d ** 2))

    def _matvec(self, x):
        # rows (i, p) = (bra-left, ket-left); cols (j, q) = (bra-right, ket-right)
        d = self.d
        xm = x.reshape(d, d)
        # close the right stubs: ket gets q, bra gets j
        v = np.einsum("jq,qpb,jpc->bc", xm, self.y_end, self.y_end,
                      optimize=True)
        v = v.reshape(-1)
        for t in self.mids:
            v = t.T @ v
        dl = self.x_end.shape[0]
        v = v.reshape(dl, dl)
        y = np.einsum("bc,bsp,csi->ip", v, self.x_end, self.x_end,
                      optimize=True)
        return y.reshape(-1)

    def _rmatvec(self, x):
        d = self.d
        xm = x.reshape(d, d)   # (i, p)
        v = np.einsum("ip,bsp,csi->bc", xm, self.x_end, self.x_end,
                      optimize=True)
        v = v.reshape(-1)
        for t in reversed(self.mids):
            v = t @ v
        dl = self.y_end.shape[2]
        v = v.reshape(dl, dl)
        y = np.einsum("bc,qpb,jpc->jq", v, self.y_end, self.y_end,
                      optimize=True)
        return y.reshape(-1)

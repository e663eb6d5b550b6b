"""
Bond metric tensors: the Gram matrix of the states obtained by cutting one
bond of a closed network in ket and bra.

Conventions.  ``g4[i, j, p, q]`` is the overlap of the bra state with left
stub ``i`` / right stub ``j`` against the ket state with stubs ``(p, q)``.
Flattened row-major over (i, j) this is the D^2 x D^2 metric matrix, and a
non-loopy (product) environment is exactly ``kron(g_left, g_right)``.
"""
import numpy as np
from typing import NamedTuple

from .tensor import (DenseTensor, LegError, NumericalError, contract,
                     merge_legs, svd_matrix)

__all__ = [
    "BondEnvironment", "EatSplit", "ErrorMeasure", "build_metric",
    "contract_network", "diag_metric", "loopiness", "eat_split",
    "measure_error", "state_overlap", "fidelity_mismatch", "gauge_transform",
    "product_env",
]

HERM_TOL = 1e-6       # beyond this the metric is considered broken, not noisy
PSD_TOL = 1e-10       # relative size of negative eigenvalues tolerated


class ErrorMeasure(NamedTuple):
    absolute: float
    relative: float


class EatSplit(NamedTuple):
    g_left: np.ndarray    # D x D, Hermitian, PSD-clipped, [bra, ket]
    g_right: np.ndarray
    lambda1: float
    spectrum: np.ndarray  # all split singular values, non-increasing


class BondEnvironment:
    """Validated bond metric of a single cut bond.

    Immutable after construction: ``g4`` has shape (D, D, D, D) indexed
    [bra-left, bra-right, ket-left, ket-right], is Hermitian as a D^2 x D^2
    matrix, and ``norm_target`` is the squared norm of the target state
    (the Kronecker-delta closure of the bond).
    """

    __slots__ = ("d", "g4", "norm_target")

    def __init__(self, g4, validate="full"):
        g4 = np.asarray(g4)
        if g4.ndim != 4 or len(set(g4.shape)) != 1:
            raise LegError(f"metric must be (D,D,D,D)-shaped, got {g4.shape}")
        d = g4.shape[0]
        g = g4.reshape(d * d, d * d)
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite entries in bond metric")
        nrm = np.linalg.norm(g)
        if nrm == 0:
            raise NumericalError("zero bond metric")
        herm_defect = np.linalg.norm(g - g.conj().T) / nrm
        if herm_defect > HERM_TOL:
            raise NumericalError(f"metric non-Hermitian: relative defect {herm_defect:.3e}")
        g = (g + g.conj().T) / 2
        if validate == "full":
            w = np.linalg.eigvalsh(g)
            wmax = max(w[-1], 0.0)
            if w[0] < -PSD_TOL * max(wmax, nrm):
                raise NumericalError(
                    f"metric not PSD: min eig {w[0]:.3e} vs max {wmax:.3e}")
            if w[0] < 0:
                # clip contraction round-off at zero
                w_full, v = np.linalg.eigh(g)
                g = (v * np.clip(w_full, 0, None)) @ v.conj().T
                g = (g + g.conj().T) / 2
        elif validate != "fast":
            raise ValueError(f"unknown validation mode {validate!r}")
        if np.isrealobj(g4) and np.iscomplexobj(g):
            g = g.real
        self.d = d
        self.g4 = g.reshape(d, d, d, d)
        norm = complex(np.einsum("iipp->", self.g4))
        self.norm_target = float(norm.real)
        if self.norm_target <= 0:
            raise NumericalError("target state has non-positive norm")

    @property
    def matrix(self):
        """D^2 x D^2 metric, row index (i, j) row-major."""
        d = self.d
        return self.g4.reshape(d * d, d * d)

    @property
    def is_complex(self):
        return np.iscomplexobj(self.g4)

    @property
    def split_matrix(self):
        """The metric regrouped (bra-left, ket-left) x (bra-right, ket-right)."""
        d = self.d
        return self.g4.transpose(0, 2, 1, 3).reshape(d * d, d * d)

    def __repr__(self):
        return f"BondEnvironment(d={self.d}, norm={self.norm_target:.6g})"


def contract_network(tensors, pairs):
    """Contract a tensor list over (leg, leg) pairs; leg names must be unique
    across the whole list.  Disconnected pieces are joined by outer products."""
    pool = list(tensors)

    def find(leg):
        hits = [k for k, t in enumerate(pool) if leg in t.legs]
        if len(hits) != 1:
            raise LegError(f"leg {leg!r} found in {len(hits)} tensors")
        return hits[0]

    for la, lb in pairs:
        ia, ib = find(la), find(lb)
        if ia == ib:
            t = pool[ia]
            a1, a2 = t.axis(la), t.axis(lb)
            if t.dims[a1] != t.dims[a2]:
                raise LegError(f"trace dims differ for {la!r}, {lb!r}")
            arr = np.trace(t.array, axis1=a1, axis2=a2)
            legs = [l for l in t.legs if l not in (la, lb)]
            pool[ia] = DenseTensor(arr, legs)
        else:
            t = contract(pool[ia], pool[ib], [(la, lb)])
            pool = [p for k, p in enumerate(pool) if k not in (ia, ib)]
            pool.append(t)
    out = pool[0]
    for p in pool[1:]:
        out = contract(out, p, [])
    return out


def build_metric(tensors, pairs, open_left, open_right, validate="full"):
    """Build the bond metric of the cut bond (`open_left`, `open_right`).

    `tensors` and `pairs` describe the ket network with the bond removed; the
    contraction must leave exactly the two stub legs plus physical legs open.
    The bra is the complex conjugate of the same network.
    """
    ket = contract_network(tensors, pairs)
    if open_left not in ket.legs or open_right not in ket.legs:
        raise LegError("cut-bond stubs missing from the contracted network")
    dl, dr = ket.dim(open_left), ket.dim(open_right)
    if dl != dr:
        raise LegError(f"stub dims differ: {dl} vs {dr}")
    phys = [l for l in ket.legs if l not in (open_left, open_right)]
    k = ket.to_matrix(phys, [open_left, open_right])   # (phys, D*D)
    g = k.conj().T @ k
    return BondEnvironment(g.reshape(dl, dl, dl, dl), validate=validate)


def product_env(g_left, g_right, validate="full"):
    """Exact non-loopy environment g4[i,j,p,q] = g_left[i,p] * g_right[j,q]."""
    g_left = np.asarray(g_left)
    g_right = np.asarray(g_right)
    g4 = np.einsum("ip,jq->ijpq", g_left, g_right)
    return BondEnvironment(g4, validate=validate)


def diag_metric(env):
    """The D x D metric of the diagonal subspace, g[i,j] = g4[i,i,j,j]."""
    g = np.einsum("iijj->ij", env.g4)
    return (g + g.conj().T) / 2


def loopiness(env):
    """Ratio of the two leading singular values of the left-right split."""
    s = np.linalg.svd(env.split_matrix, compute_uv=False)
    if s[0] <= 0:
        raise NumericalError("zero bond metric")
    if s.size < 2:
        return 0.0
    return float(s[1] / s[0])


def _fix_product_phase(u, v):
    """Rotate the rank-1 pair (u, v) so both factors are Hermitian-able."""
    tr = np.trace(u)
    if abs(tr) > 1e-14 * np.linalg.norm(u):
        phase = np.conj(tr) / abs(tr)
    else:
        k = np.argmax(np.abs(u))
        phase = np.conj(u.flat[k]) / abs(u.flat[k])
    return u * phase, v / phase


def _hermitian_psd_part(m):
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    if w[0] < 0:
        m = (v * np.clip(w, 0, None)) @ v.conj().T
        m = (m + m.conj().T) / 2
    return m


def eat_split(env):
    """Best rank-1 product approximation of the metric across the bond.

    Returns Hermitian, PSD-clipped factors with unit Frobenius norm (up to the
    clipping) and the full split spectrum; the approximation is
    g4 ~ g_left[i,p] * lambda1 * g_right[j,q].
    """
    d = env.d
    u, s, vh = np.linalg.svd(env.split_matrix)
    if s[0] <= 0:
        raise NumericalError("zero bond metric")
    gl = u[:, 0].reshape(d, d)
    gr = vh[0, :].reshape(d, d)
    gl, gr = _fix_product_phase(gl, gr)
    gl = _hermitian_psd_part(gl)
    gr = _hermitian_psd_part(gr)
    if not env.is_complex:
        gl, gr = gl.real, gr.real
    return EatSplit(gl, gr, float(s[0]), s)


def measure_error(env, coeff):
    """Norm squared of (target - coefficient state): (delta-M)^dag g (delta-M)."""
    coeff = np.asarray(coeff)
    if coeff.shape != (env.d, env.d):
        raise LegError(f"coefficient must be {env.d}x{env.d}")
    r = np.eye(env.d) - coeff
    f = np.einsum("ij,ijpq,pq->", r.conj(), env.g4, r)
    f = float(max(np.real(f), 0.0))
    return ErrorMeasure(f, f / env.norm_target)


def state_overlap(env, m1, m2):
    """Overlap <psi_m1 | psi_m2> of two coefficient states on the cut bond."""
    return complex(np.einsum("ij,ijpq,pq->", np.conj(m1), env.g4, m2))


def fidelity_mismatch(env, m1, m2):
    """1 - |<1|2>|^2 / (<1|1><2|2>) for two coefficient states."""
    n1 = state_overlap(env, m1, m1).real
    n2 = state_overlap(env, m2, m2).real
    if n1 <= 0 or n2 <= 0:
        raise NumericalError("zero-norm state in fidelity")
    ov = abs(state_overlap(env, m1, m2)) ** 2
    return float(max(1.0 - ov / (n1 * n2), 0.0))


def gauge_transform(env, left, right, validate="fast"):
    """Environment after absorbing `left` (D x D') into the left tensor and
    `right` (D' x D) into the right tensor of the bond.

    For an invertible pair with left @ right = identity this is a pure gauge
    change; rectangular factors implement a truncation.
    """
    left = np.asarray(left)
    right = np.asarray(right)
    if left.shape[0] != env.d or right.shape[1] != env.d:
        raise LegError("gauge factors do not match the bond dimension")
    if left.shape[1] != right.shape[0]:
        raise LegError("left/right factor inner dims differ")
    g4 = np.einsum("ik,lj,ijpq,pr,sq->klrs", left.conj(), right.conj(),
                   env.g4, left, right, optimize=True)
    return BondEnvironment(g4, validate=validate)

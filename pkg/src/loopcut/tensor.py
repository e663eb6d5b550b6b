"""
Dense tensors with named legs and the matrix decompositions used everywhere else.

A DenseTensor is a plain numpy array plus a list of unique string labels, one
per axis.  Contractions are permute-reshape-matmul; decompositions act on
tensors reshaped to two leg groups.
"""
import numpy as np
from typing import NamedTuple

__all__ = [
    "DenseTensor", "SvdResult", "EigResult", "LegError", "NumericalError",
    "contract", "merge_legs", "split_leg", "svd", "svd_matrix",
    "eig_hermitian", "eig_general", "pinv",
]


class LegError(ValueError):
    """Unknown, repeated, or mismatched tensor legs."""


class NumericalError(RuntimeError):
    """Non-finite data or a decomposition that failed to converge."""


class DenseTensor:
    """Multi-index numeric array with a unique string label per axis."""

    __slots__ = ("array", "legs")

    def __init__(self, array, legs):
        array = np.asarray(array)
        legs = list(legs)
        if array.ndim != len(legs):
            raise LegError(f"{len(legs)} legs for a rank-{array.ndim} array")
        if len(set(legs)) != len(legs):
            raise LegError(f"repeated leg labels in {legs}")
        if any(d < 1 for d in array.shape):
            raise LegError(f"zero-sized axis in shape {array.shape}")
        self.array = array
        self.legs = legs

    @property
    def dims(self):
        return list(self.array.shape)

    @property
    def ndim(self):
        return self.array.ndim

    @property
    def is_complex(self):
        return np.iscomplexobj(self.array)

    def axis(self, leg):
        try:
            return self.legs.index(leg)
        except ValueError:
            raise LegError(f"no leg {leg!r} in {self.legs}") from None

    def dim(self, leg):
        return self.array.shape[self.axis(leg)]

    def copy(self):
        return DenseTensor(self.array.copy(), list(self.legs))

    def conj(self):
        return DenseTensor(self.array.conj(), list(self.legs))

    def renamed(self, mapping):
        """New tensor with legs renamed through `mapping` (missing keys kept)."""
        return DenseTensor(self.array, [mapping.get(l, l) for l in self.legs])

    def transposed(self, leg_order):
        if sorted(leg_order) != sorted(self.legs):
            raise LegError(f"{leg_order} is not a permutation of {self.legs}")
        perm = [self.axis(l) for l in leg_order]
        return DenseTensor(self.array.transpose(perm), list(leg_order))

    def to_matrix(self, row_legs, col_legs):
        """Reshape into a matrix over the two ordered leg groups."""
        if sorted(list(row_legs) + list(col_legs)) != sorted(self.legs):
            raise LegError("row and column groups must partition the legs")
        t = self.transposed(list(row_legs) + list(col_legs))
        nrow = int(np.prod([t.dim(l) for l in row_legs], dtype=np.int64)) if row_legs else 1
        return t.array.reshape(nrow, -1)

    def item(self):
        if self.array.size != 1:
            raise LegError("item() needs a scalar tensor")
        return self.array.reshape(()).item()

    def __repr__(self):
        return f"DenseTensor(dims={self.dims}, legs={self.legs})"


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite entries in {what}")


def contract(a, b, pairs):
    """Contract tensors `a` and `b` over the given (leg-of-a, leg-of-b) pairs.

    The result carries the unpaired legs of `a` followed by those of `b`.
    An empty pair list gives the outer product.
    """
    legs_a = [p[0] for p in pairs]
    legs_b = [p[1] for p in pairs]
    if len(set(legs_a)) != len(legs_a) or len(set(legs_b)) != len(legs_b):
        raise LegError("a leg appears twice in the contraction pairs")
    ax_a = [a.axis(l) for l in legs_a]
    ax_b = [b.axis(l) for l in legs_b]
    for la, lb in pairs:
        if a.dim(la) != b.dim(lb):
            raise LegError(f"dim mismatch {la!r}:{a.dim(la)} vs {lb!r}:{b.dim(lb)}")
    out_legs = [l for l in a.legs if l not in legs_a] + [l for l in b.legs if l not in legs_b]
    if len(set(out_legs)) != len(out_legs):
        raise LegError(f"colliding output legs in {out_legs}; rename first")
    arr = np.tensordot(a.array, b.array, axes=(ax_a, ax_b))
    return DenseTensor(arr, out_legs)


def merge_legs(t, group, new_leg):
    """Merge the ordered `group` of legs into one leg, row-major.

    The merged leg sits where the first group leg was.  Returns the merged
    tensor; `split_leg` with the original dims is the exact inverse.
    """
    group = list(group)
    if not group:
        raise LegError("empty merge group")
    for l in group:
        t.axis(l)
    # the group, in its given order, goes to the position of its first leg
    head = [l for l in t.legs if l not in group][: _lead_count(t, group)]
    tail = [l for l in t.legs if l not in group][_lead_count(t, group):]
    tt = t.transposed(head + group + tail)
    shape = tt.dims
    k = len(head)
    merged_dim = int(np.prod(shape[k:k + len(group)], dtype=np.int64))
    new_shape = shape[:k] + [merged_dim] + shape[k + len(group):]
    new_legs = head + [new_leg] + tail
    if new_leg in head + tail:
        raise LegError(f"new leg {new_leg!r} collides with an existing leg")
    return DenseTensor(tt.array.reshape(new_shape), new_legs)


def _lead_count(t, group):
    """Number of non-group legs before the first group leg."""
    first = min(t.axis(l) for l in group)
    return sum(1 for l in t.legs[:first] if l not in group)


def split_leg(t, leg, new_legs, new_dims):
    """Split `leg` back into `new_legs` with the supplied dims (row-major)."""
    ax = t.axis(leg)
    new_dims = [int(d) for d in new_dims]
    if len(new_legs) != len(new_dims):
        raise LegError("need one dim per new leg")
    if int(np.prod(new_dims, dtype=np.int64)) != t.dims[ax]:
        raise LegError(f"dims {new_dims} do not factor {t.dims[ax]}")
    shape = t.dims[:ax] + new_dims + t.dims[ax + 1:]
    legs = t.legs[:ax] + list(new_legs) + t.legs[ax + 1:]
    if len(set(legs)) != len(legs):
        raise LegError(f"colliding legs in {legs}")
    return DenseTensor(t.array.reshape(shape), legs)


class SvdResult(NamedTuple):
    u: np.ndarray        # semi-unitary, columns are left singular vectors
    s: np.ndarray        # non-increasing, non-negative
    vh: np.ndarray       # semi-unitary rows
    rank_used: int


class EigResult(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray  # columns
    hermitian: bool
    cond_vectors: float


def _as_matrix(m):
    if isinstance(m, DenseTensor):
        if m.ndim != 2:
            raise LegError("need a matrix-shaped tensor (two legs)")
        return m.array
    m = np.asarray(m)
    if m.ndim != 2:
        raise LegError("need a 2d array")
    return m


def svd_matrix(a, max_rank=None, rel_cutoff=None):
    """Truncated SVD of a 2d array; keeps s >= rel_cutoff * s[0], at most max_rank."""
    a = _as_matrix(a)
    _check_finite(a, "svd input")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on hard cases; gesvd is the robust fallback
        import scipy.linalg
        u, s, vh = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
    rank = s.size
    if rel_cutoff is not None and s.size and s[0] > 0:
        rank = int(np.sum(s >= rel_cutoff * s[0]))
        rank = max(rank, 1)
    if max_rank is not None:
        rank = min(rank, int(max_rank))
    return SvdResult(u[:, :rank], s[:rank], vh[:rank, :], rank)


def svd(m, max_rank=None, rel_cutoff=None):
    return svd_matrix(m, max_rank=max_rank, rel_cutoff=rel_cutoff)


def eig_hermitian(m, rel_tol=1e-10):
    """Eigendecomposition of a (numerically) Hermitian matrix, values ascending."""
    a = _as_matrix(m)
    _check_finite(a, "eig input")
    if a.shape[0] != a.shape[1]:
        raise LegError("eig needs a square matrix")
    nrm = np.linalg.norm(a)
    herm_defect = np.linalg.norm(a - a.conj().T)
    if nrm > 0 and herm_defect > rel_tol * nrm:
        raise NumericalError(
            f"matrix is not Hermitian: defect {herm_defect:.3e} vs norm {nrm:.3e}")
    a = (a + a.conj().T) / 2
    w, v = np.linalg.eigh(a)
    return EigResult(w, v, True, 1.0)


def eig_general(m):
    """General eigendecomposition, eigenvalues sorted by ascending magnitude."""
    a = _as_matrix(m)
    _check_finite(a, "eig input")
    if a.shape[0] != a.shape[1]:
        raise LegError("eig needs a square matrix")
    w, v = np.linalg.eig(a)
    order = np.argsort(np.abs(w), kind="stable")
    w, v = w[order], v[:, order]
    cond = float(np.linalg.cond(v))
    return EigResult(w, v, False, cond)


def pinv(m, rcond=1e-12):
    """Moore-Penrose pseudoinverse; singular values below rcond*s_max are zeroed."""
    a = _as_matrix(m)
    _check_finite(a, "pinv input")
    return np.linalg.pinv(a, rcond=rcond)

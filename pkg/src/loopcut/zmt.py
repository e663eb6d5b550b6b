"""
Zero-mode truncation of a single bond.

Cutting a bond defines states |psi_ij> whose Gram matrix is the bond metric.
A (near-)null eigenmode Z of the metric makes delta + z*Z an equally good
bond closure for any z; choosing z = -1/E_D with E_D the leading eigenvalue
of Z makes the closure singular, and dropping its zero singular value cuts
the bond dimension by one at predicted cost f = N / |E_D|^2.

Schemes differ only in the subspace the eigenmodes are searched in:
the diagonal restriction (cheap, D x D), Hermitian or real-symmetric
matrices (compressed to a real eigenproblem), the full matrix space, and a
rank-1 product ansatz optimized by alternating least squares.
"""
import numpy as np
from dataclasses import dataclass, field

import scipy.linalg

from .tensor import NumericalError, eig_general, pinv
from .bondmetric import (BondEnvironment, ErrorMeasure, diag_metric,
                         gauge_transform, measure_error)
from .eatgauge import absorb_factors, eat_gauge_fix

__all__ = [
    "ZeroModeCandidate", "TruncationStep", "TruncationReport", "SUBSPACES",
    "select_mode", "step_linear", "step_general", "step_product",
    "refine_w", "improve_mode", "truncate_to", "linear_update_diag",
]

SUBSPACES = ("diagonal", "hermitian", "real-symmetric", "full", "product")
E_FLOOR = 1e-14          # reject modes whose leading eigenvalue is this small
DEFECT_COND = 1e12       # eigenvector condition number flagged as defective
REAL_E_TOL = 1e-8        # |Im E| <= tol * max|E| counts as a real eigenvalue


@dataclass
class ZeroModeCandidate:
    z_matrix: np.ndarray        # D x D, Frobenius norm 1
    n_value: float              # metric (quasi-)eigenvalue, >= 0
    e_lead: complex             # chosen leading eigenvalue E_D of z_matrix
    f_pred: float               # n_value / |e_lead|^2
    subspace: str
    z_vector: np.ndarray = None          # set for the diagonal scheme
    eig_vectors: np.ndarray = None       # right eigenvectors of z_matrix
    eig_values: np.ndarray = None
    e_index: int = None


@dataclass
class TruncationStep:
    scheme: str
    dim_before: int
    dim_after: int
    left_absorb: np.ndarray     # D x (D-1)
    right_absorb: np.ndarray    # (D-1) x D
    f_pred: float               # absolute, paper convention
    f_measured: ErrorMeasure
    candidate: ZeroModeCandidate = None


@dataclass
class TruncationReport:
    steps: list
    left_total: np.ndarray
    right_total: np.ndarray
    f_cumulative: ErrorMeasure
    env_after: BondEnvironment
    tensors: tuple = None
    switched_at: int = None     # dimension at which the linear phase ended


def _quad_form(g4, x, y):
    return complex(np.einsum("ij,ijpq,pq->", np.conj(x), g4, y, optimize=True))


def _hermitian_basis_indices(d):
    """Index bookkeeping for the real orthonormal basis of Hermitian DxD
    matrices: D singles (i,i), then sym and antisym pairs for i < j."""
    iu = np.triu_indices(d, k=1)
    return iu


def _compress_metric(env, subspace):
    """Compress the metric quadratic form to the real basis of `subspace`.

    Returns (gc, to_matrix) where gc is real symmetric and to_matrix maps a
    real coefficient vector to the D x D mode matrix.
    """
    d = env.d
    g = env.matrix
    iu, ju = _hermitian_basis_indices(d)
    npair = iu.size
    flat = lambda i, j: i * d + j
    diag_cols = flat(np.arange(d), np.arange(d))
    sym_a, sym_b = flat(iu, ju), flat(ju, iu)

    if subspace == "real-symmetric":
        if env.is_complex and np.max(np.abs(g.imag)) > 1e-12 * np.linalg.norm(g):
            raise NumericalError("real-symmetric subspace needs a real metric")
        gr = g.real
        n = d + npair
        cols = np.empty((d * d, n))
        cols[:, :d] = gr[:, diag_cols]
        cols[:, d:] = (gr[:, sym_a] + gr[:, sym_b]) / np.sqrt(2)
        gc = np.empty((n, n))
        gc[:d, :] = cols[diag_cols, :]
        gc[d:, :] = (cols[sym_a, :] + cols[sym_b, :]) / np.sqrt(2)
        gc = (gc + gc.T) / 2

        def to_matrix(x):
            z = np.zeros((d, d))
            z[np.arange(d), np.arange(d)] = x[:d]
            z[iu, ju] = x[d:] / np.sqrt(2)
            z[ju, iu] = x[d:] / np.sqrt(2)
            return z

        return gc, to_matrix

    if subspace == "hermitian":
        n = d + 2 * npair
        cols = np.empty((d * d, n), dtype=g.dtype if env.is_complex else complex)
        cols[:, :d] = g[:, diag_cols]
        cols[:, d:d + npair] = (g[:, sym_a] + g[:, sym_b]) / np.sqrt(2)
        cols[:, d + npair:] = (1j * g[:, sym_a] - 1j * g[:, sym_b]) / np.sqrt(2)
        gc = np.empty((n, n), dtype=complex)
        gc[:d, :] = cols[diag_cols, :]
        gc[d:d + npair, :] = (cols[sym_a, :] + cols[sym_b, :]) / np.sqrt(2)
        gc[d + npair:, :] = (np.conj(1j) * cols[sym_a, :] + np.conj(-1j) * cols[sym_b, :]) / np.sqrt(2)
        gc = gc.real
        gc = (gc + gc.T) / 2

        def to_matrix(x):
            z = np.zeros((d, d), dtype=complex)
            z[np.arange(d), np.arange(d)] = x[:d]
            z[iu, ju] = (x[d:d + npair] + 1j * x[d + npair:]) / np.sqrt(2)
            z[ju, iu] = (x[d:d + npair] - 1j * x[d + npair:]) / np.sqrt(2)
            return z

        return gc, to_matrix

    raise ValueError(f"no compressed basis for subspace {subspace!r}")


def _lowest_modes(mat, k):
    """k lowest eigenpairs of a (real or complex) Hermitian matrix."""
    n = mat.shape[0]
    k = min(k, n)
    w, v = scipy.linalg.eigh(mat, subset_by_index=[0, k - 1])
    return w, v


def _leading_eig(z, hermitian, real_e_only):
    """Pick E_D of a mode matrix.  Returns (E, index, values, vectors) or
    None when the mode must be skipped (defective or no admissible E)."""
    if hermitian:
        w, v = np.linalg.eigh(z)
        order = np.argsort(np.abs(w), kind="stable")
        w, v = w[order], v[:, order]
        return w[-1], len(w) - 1, w, v
    res = eig_general(z)
    if res.cond_vectors > DEFECT_COND:
        return None
    w, v = res.values, res.vectors
    if real_e_only:
        scale = np.max(np.abs(w)) if w.size else 0.0
        ok = np.abs(w.imag) <= REAL_E_TOL * max(scale, E_FLOOR)
        if not np.any(ok):
            return None
        idx_ok = np.nonzero(ok)[0]
        idx = idx_ok[np.argmax(np.abs(w[idx_ok].real))]
        return w[idx].real, int(idx), w, v
    return w[-1], len(w) - 1, w, v


def select_mode(env, subspace, k_candidates=None, real_e_only=False):
    """Pick the truncation mode with the lowest predicted error.

    Searches the `k_candidates` lowest eigenmodes of the metric restricted to
    `subspace` and returns the one minimizing f = N / |E_D|^2.  Ties go to the
    smaller N, then to the lower eigen-index.
    """
    if subspace not in ("diagonal", "hermitian", "real-symmetric", "full"):
        raise ValueError(f"select_mode cannot search subspace {subspace!r}")
    d = env.d

    if subspace == "diagonal":
        gd = diag_metric(env)
        n_dim = d
        w, v = np.linalg.eigh(gd)
        k = min(k_candidates or min(n_dim, 8), n_dim)
        w, v = w[:k], v[:, :k]
        modes = [("vector", v[:, i], w[i], i) for i in range(k)]
    elif subspace == "full":
        n_dim = d * d
        k = min(k_candidates or min(n_dim, 8), n_dim)
        w, v = _lowest_modes(env.matrix, k)
        modes = [("matrix", v[:, i].reshape(d, d), w[i], i) for i in range(k)]
    else:
        gc, to_matrix = _compress_metric(env, subspace)
        n_dim = gc.shape[0]
        k = min(k_candidates or min(n_dim, 8), n_dim)
        w, v = _lowest_modes(gc, k)
        modes = [("matrix", to_matrix(v[:, i]), w[i], i) for i in range(k)]

    hermitian_modes = subspace in ("hermitian", "real-symmetric")
    best = None
    skipped_defective = 0
    for kind, z, n_val, idx in modes:
        n_val = max(float(n_val), 0.0)
        if kind == "vector":
            zv = z
            m = int(np.argmax(np.abs(zv)))
            e = zv[m]
            if abs(e) <= E_FLOOR:
                continue
            cand = ZeroModeCandidate(np.diag(zv), n_val, e, n_val / abs(e) ** 2,
                                     "diagonal", z_vector=zv, e_index=m)
        else:
            pick = _leading_eig(z, hermitian_modes, real_e_only)
            if pick is None:
                skipped_defective += 1
                continue
            e, eidx, evals, evecs = pick
            if abs(e) <= E_FLOOR:
                continue
            cand = ZeroModeCandidate(z, n_val, e, n_val / abs(e) ** 2, subspace,
                                     eig_vectors=evecs, eig_values=evals,
                                     e_index=eidx)
        key = (cand.f_pred, cand.n_value, idx)
        if best is None or key < best[0]:
            best = (key, cand)
    if best is None:
        if skipped_defective:
            raise NumericalError("all candidate modes are near-defective")
        raise NumericalError("no candidate mode with |E_D| above threshold")
    return best[1]


def linear_update_diag(g_diag, step):
    """Congruence update of the diagonal metric after a linear step."""
    keep = step.kept_indices
    coeff = step.coefficients
    g = g_diag[np.ix_(keep, keep)]
    return np.conj(coeff)[:, None] * g * coeff[None, :]


@dataclass
class LinearStep(TruncationStep):
    kept_indices: np.ndarray = None
    coefficients: np.ndarray = None     # on the kept indices


def step_linear(g_diag, env=None, k_candidates=None, norm_target=None):
    """One D -> D-1 cut by eliminating the most linearly dependent branch.

    Works on the diagonal D x D metric alone.  The lowest-f eigenmode is
    selected among the `k_candidates` lowest; the branch with the largest
    |Z_j| is dropped and the coefficients 1 - Z_j/Z_max are absorbed into the
    surviving branches.
    """
    g_diag = np.asarray(g_diag)
    d = g_diag.shape[0]
    if d < 2:
        raise ValueError("cannot cut a bond of dimension < 2")
    w, v = np.linalg.eigh((g_diag + g_diag.conj().T) / 2)
    k = min(k_candidates or min(d, 8), d)
    best = None
    for i in range(k):
        z = v[:, i]
        m = int(np.argmax(np.abs(z)))
        e = z[m]
        if abs(e) <= E_FLOOR:
            continue
        f = max(float(w[i]), 0.0) / abs(e) ** 2
        key = (f, max(float(w[i]), 0.0), i)
        if best is None or key < best[0]:
            best = (key, z, m, e, max(float(w[i]), 0.0))
    if best is None:
        raise NumericalError("no linear zero-mode candidate with |Z_D| above threshold")
    _, z, m, e, n_val = best
    keep = np.array([j for j in range(d) if j != m])
    coeff = 1.0 - z[keep] / e
    if not np.iscomplexobj(g_diag):
        coeff = coeff.real
    left = np.zeros((d, d - 1), dtype=coeff.dtype)
    left[keep, np.arange(d - 1)] = coeff
    right = np.zeros((d - 1, d), dtype=coeff.dtype)
    right[np.arange(d - 1), keep] = 1.0
    # residual vector is exactly Z/Z_max, so the measured error is N/|Z_max|^2
    r = z / e
    f_abs = float(max(np.real(np.conj(r) @ g_diag @ r), 0.0))
    norm = norm_target if norm_target is not None else float(np.real(np.sum(g_diag)))
    cand = ZeroModeCandidate(np.diag(z), n_val, e, n_val / abs(e) ** 2,
                             "diagonal", z_vector=z, e_index=m)
    step = LinearStep("linear", d, d - 1, left, right,
                      n_val / abs(e) ** 2, ErrorMeasure(f_abs, f_abs / norm),
                      cand, kept_indices=keep, coefficients=coeff)
    if env is not None:
        step.f_measured = measure_error(env, left @ right)
    return step


def _cut_with_mode(env, cand, scheme):
    """SVD-truncate delta - Z/E_D after the zero singular value is dropped."""
    d = env.d
    kmat = np.eye(d) - cand.z_matrix / cand.e_lead
    if not env.is_complex and np.iscomplexobj(kmat):
        if np.max(np.abs(kmat.imag)) < 1e-13 * max(np.max(np.abs(kmat.real)), 1.0):
            kmat = kmat.real
    u, s, vh = np.linalg.svd(kmat)
    left = u[:, :d - 1] * np.sqrt(s[:d - 1])
    right = np.sqrt(s[:d - 1])[:, None] * vh[:d - 1, :]
    f = measure_error(env, left @ right)
    step = TruncationStep(scheme, d, d - 1, left, right, cand.f_pred, f, cand)
    env_after = gauge_transform(env, left, right)
    return step, env_after


def step_general(env, subspace, k_candidates=None, real_e_only=False):
    """One D -> D-1 cut with a general zero mode from `subspace`.

    Returns (step, updated environment).
    """
    if env.d < 2:
        raise ValueError("cannot cut a bond of dimension < 2")
    cand = select_mode(env, subspace, k_candidates=k_candidates,
                       real_e_only=real_e_only)
    return _cut_with_mode(env, cand, f"general:{subspace}")


def _product_half_update(m, v):
    """argmin of (x^dag m x)/|v^dag x|^2 over unit x, for Hermitian PSD m.

    The minimizer is pinv(m) v when v has no kernel component; otherwise the
    kernel component of v drives the quotient to zero.  Both candidates are
    evaluated and the better one returned, which keeps every half-step an
    exact minimizer up to round-off.
    """
    m = (m + m.conj().T) / 2
    w, p = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    vt = p.conj().T @ v
    floor = 1e-12 * max(w[-1], 1e-300)
    candidates = [p @ (vt / np.maximum(w, floor))]
    ker = w <= floor
    if np.any(ker) and np.linalg.norm(vt[ker]) > 0:
        candidates.append(p[:, ker] @ vt[ker])

    def objective(x):
        ov = abs(np.vdot(v, x)) ** 2
        if ov == 0:
            return np.inf
        return float(np.real(np.vdot(x, m @ x))) / ov

    best = min(candidates, key=objective)
    nx = np.linalg.norm(best)
    if nx == 0 or not np.isfinite(objective(best)):
        raise NumericalError("product-ansatz update collapsed to zero")
    return best / nx


def step_product(env, max_iters=200, tol=1e-12, n_restarts=2, seed=0):
    """One D -> D-1 cut with the rank-1 ansatz Z_ij = R_i L_j.

    Unit vectors L and R are optimized alternately; each half-step exactly
    minimizes f = (Z^dag g Z)/|sum_j L_j R_j|^2, so f is non-increasing.
    Returns (step, updated environment).
    """
    d = env.d
    if d < 2:
        raise ValueError("cannot cut a bond of dimension < 2")
    g4 = env.g4
    dtype = complex if env.is_complex else float

    # best rank-1 part of the lowest full-metric mode, then the lowest
    # diagonal mode, then seeded random restarts
    inits = []
    _, vfull = _lowest_modes(env.matrix, 1)
    u1, _, vh1 = np.linalg.svd(vfull[:, 0].reshape(d, d))
    inits.append((vh1[0, :].astype(dtype), u1[:, 0].astype(dtype)))
    gd = diag_metric(env)
    _, v0 = np.linalg.eigh((gd + gd.conj().T) / 2)
    inits.append((v0[:, 0].astype(dtype), v0[:, 0].astype(dtype)))
    rng = np.random.default_rng(seed)
    for _ in range(n_restarts):
        if env.is_complex:
            a = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            b = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        else:
            a, b = rng.standard_normal(d), rng.standard_normal(d)
        inits.append((a / np.linalg.norm(a), b / np.linalg.norm(b)))

    def cost(lv, rv):
        ml = np.einsum("j,ijpq,q->ip", lv.conj(), g4, lv, optimize=True)
        n = float(max(np.real(rv.conj() @ ml @ rv), 0.0))
        e = lv @ rv
        return n, e, (n / abs(e) ** 2 if abs(e) > E_FLOOR else np.inf)

    best = None
    for lv, rv in inits:
        n, e, f = cost(lv, rv)
        local_best = (f, lv.copy(), rv.copy(), n, e)
        for _ in range(max_iters):
            ml = np.einsum("j,ijpq,q->ip", lv.conj(), g4, lv, optimize=True)
            rv = _product_half_update(ml, lv.conj())
            mr = np.einsum("i,ijpq,p->jq", rv.conj(), g4, rv, optimize=True)
            lv = _product_half_update(mr, rv.conj())
            n, e, f_new = cost(lv, rv)
            if f_new < local_best[0]:
                local_best = (f_new, lv.copy(), rv.copy(), n, e)
            if not np.isfinite(f_new) or f_new > f + 1e-15 * max(f, 1.0):
                break   # stall: keep the best seen so far
            if f - f_new <= tol * max(f, 1e-300):
                f = f_new
                break
            f = f_new
        if best is None or local_best[0] < best[0]:
            best = local_best
    f, lv, rv, n, e = best
    if not np.isfinite(f) or abs(e) <= E_FLOOR:
        raise NumericalError("product ansatz converged to |E_D| ~ 0")
    z = np.outer(rv, lv)
    cand = ZeroModeCandidate(z, n, e, f, "product")
    return _cut_with_mode(env, cand, "product")


def _mode_projector(cand):
    """Spectral projector of z_matrix for the chosen eigenvalue (trace 1)."""
    z = cand.z_matrix
    if cand.subspace == "diagonal":
        m = cand.e_index
        y = np.zeros_like(z)
        y[m, m] = 1.0
        return y
    if cand.subspace == "product":
        # right eigenvector is R, left eigenvector is L; normalization L@R = E
        d = z.shape[0]
        rv = None
        # recover R, L from the rank-1 structure
        u, s, vh = np.linalg.svd(z)
        rv = u[:, 0] * s[0]
        lv = vh[0, :]
        return np.outer(rv, lv) / (lv @ rv)
    if cand.eig_vectors is None:
        res = eig_general(z)
        if res.cond_vectors > DEFECT_COND:
            raise NumericalError("mode matrix is near-defective")
        evals, evecs = res.values, res.vectors
    else:
        evals, evecs = cand.eig_values, cand.eig_vectors
    idx = cand.e_index
    if idx is None:
        idx = int(np.argmin(np.abs(evals - cand.e_lead)))
    vinv = np.linalg.inv(evecs)
    return np.outer(evecs[:, idx], vinv[idx, :])


def refine_w(env, cand):
    """Exact single-parameter optimum of the truncated variational family.

    The family keeps all non-leading spectral components of the mode and
    varies w = E_D * z; w = -1 reproduces the plain cut with f0 = N/|E_D|^2.
    Returns (w_min, f_min); f_min <= f_pred always, equal only at N = 0.
    """
    g4 = env.g4
    z, e = cand.z_matrix, cand.e_lead
    y = _mode_projector(cand)
    a = float(np.real(_quad_form(g4, z, z))) / abs(e) ** 2
    b = _quad_form(g4, z, y) / np.conj(e)
    c = float(np.real(_quad_form(g4, y, y)))
    den = a - 2 * np.real(b) + c
    if abs(den) <= 1e-14 * max(c, a, 1e-300):
        raise NumericalError("degenerate variational direction in refine_w")
    w_min = (b - c) / den

    def f_of(w):
        return float(np.real(a * abs(w) ** 2
                             - 2 * np.real(b * np.conj(w) * (1 + w))
                             + c * abs(1 + w) ** 2))

    f_min = min(f_of(w_min), f_of(-1.0))
    if not env.is_complex and abs(np.imag(w_min)) < 1e-14:
        w_min = float(np.real(w_min))
    return w_min, f_min


def improve_mode(env, cand, rcond=1e-12, return_eps=False):
    """Perturbative refinement of a truncation mode (error gain ~ f^2).

    Solves (g - N) eps = |E|^2 (lim Z^{dag(n-1)}/E*^n - Z) by pseudoinverse
    and returns the renormalized mode Z + f*eps; falls back to the input
    candidate if the perturbation does not help.
    """
    g4 = env.g4
    d = env.d
    z, e, n_val = cand.z_matrix, cand.e_lead, cand.n_value
    y = _mode_projector(cand)
    rhs = e * y.conj().T - abs(e) ** 2 * z
    gm = env.matrix - n_val * np.eye(d * d)
    eps_vec = pinv(gm, rcond=rcond) @ rhs.reshape(-1)
    rhs_norm = np.linalg.norm(rhs)
    resid = np.linalg.norm(gm @ eps_vec - rhs.reshape(-1))
    if rhs_norm > 1e-13 * np.linalg.norm(g4) and resid > 1e-8 * rhs_norm:
        raise NumericalError(
            f"improve_mode pseudoinverse residual {resid/rhs_norm:.3e}")
    eps = eps_vec.reshape(d, d)

    def out(result):
        return (result, eps) if return_eps else result

    znew = z + cand.f_pred * eps
    znew = znew / np.linalg.norm(znew)
    if not env.is_complex and np.iscomplexobj(znew):
        znew = znew.real / np.linalg.norm(znew.real)
    pick = _leading_eig(znew, False, False)
    if pick is None:
        return out(cand)
    e_new, idx, evals, evecs = pick
    if abs(e_new) <= E_FLOOR:
        return out(cand)
    n_new = float(np.real(_quad_form(g4, znew, znew)))
    f_new = max(n_new, 0.0) / abs(e_new) ** 2
    if f_new > cand.f_pred:
        return out(cand)
    return out(ZeroModeCandidate(znew, max(n_new, 0.0), e_new, f_new,
                                 cand.subspace, eig_vectors=evecs,
                                 eig_values=evals, e_index=idx))


def _scheme_plan(scheme, env_is_complex, delta):
    """Resolve a driver scheme name into (delta, general subspace, real_e)."""
    if scheme == "zmt1":
        return np.inf, None, False
    if scheme == "zmt2":
        sub = "real-symmetric" if not env_is_complex else "hermitian"
        return (1e-10 if delta is None else delta), sub, False
    if scheme == "zmt3":
        return (1e-10 if delta is None else delta), "full", not env_is_complex
    if scheme == "zmt4":
        return -np.inf, "product", False
    raise ValueError(f"unknown truncation scheme {scheme!r}")


def truncate_to(env, target_dim, scheme, delta=None, tensors=None,
                k_candidates=None, eat_gauge_first=False):
    """Cut a bond from D down to `target_dim` one dimension at a time.

    `scheme` is one of 'zmt1' (linear elimination throughout), 'zmt2'
    (linear until the relative step error first exceeds `delta`, then
    Hermitian / real-symmetric general modes), 'zmt3' (same switch, full
    subspace with real leading eigenvalues on real networks) or 'zmt4'
    (rank-1 product ansatz).  delta = 0 forces a pure general run, delta =
    inf a pure linear run.  The environment is congruence-updated after
    every cut; the report carries each step and the cumulative error
    measured against the original environment.
    """
    if target_dim < 1:
        raise ValueError("target_dim must be >= 1")
    if target_dim >= env.d:
        raise ValueError(f"target_dim {target_dim} must be below the bond dimension {env.d}")
    dlt, general_subspace, real_e = _scheme_plan(scheme, env.is_complex, delta)

    env0 = env
    cur = env
    dtype = complex if env.is_complex else float
    left_total = np.eye(env.d, dtype=dtype)
    right_total = np.eye(env.d, dtype=dtype)
    if eat_gauge_first:
        gp = eat_gauge_fix(env)
        left_total = left_total @ gp.left_factor
        right_total = gp.right_factor @ right_total
        cur = gauge_transform(cur, gp.left_factor, gp.right_factor)
    steps = []
    linear_phase = scheme != "zmt4"
    switched_at = None

    while cur.d > target_dim:
        step = None
        if linear_phase:
            gd = diag_metric(cur)
            cand_step = step_linear(gd, env=cur, k_candidates=k_candidates)
            if cand_step.f_pred / cur.norm_target > dlt:
                linear_phase = False
                switched_at = cur.d
            else:
                step = cand_step
                cur = gauge_transform(cur, step.left_absorb, step.right_absorb)
        if step is None:
            if general_subspace == "product":
                step, cur = step_product(cur)
            else:
                step, cur = step_general(cur, general_subspace,
                                         k_candidates=k_candidates,
                                         real_e_only=real_e)
        left_total = left_total @ step.left_absorb
        right_total = step.right_absorb @ right_total
        steps.append(step)

    f_cum = measure_error(env0, left_total @ right_total)
    return TruncationReport(steps, left_total, right_total, f_cum, cur,
                            absorb_factors(tensors, left_total, right_total),
                            switched_at)

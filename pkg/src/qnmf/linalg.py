"""Quaternion SVD through the complex adjoint.

A quaternion matrix ``A = A1 + A2 j`` (``A1``, ``A2`` complex) is represented
by its complex adjoint::

    chi(A) = [[ A1,        A2      ],
              [-conj(A2),  conj(A1)]]

``chi`` is additive and multiplicative, and its singular values are those of
``A`` with every value repeated twice.  The QSVD below runs a complex SVD of
the adjoint and folds the paired singular vectors back into quaternion
columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg

from .quaternion import _check_qmatrix, hermitian_transpose, qmat_mul, quat_conj, quat_mul

_EPS = np.finfo(float).eps


class SVDNonConvergence(RuntimeError):
    """Raised when the Jacobi iteration exceeds its sweep cap."""


def complex_adjoint(a) -> np.ndarray:
    """Map an ``(m, n, 4)`` quaternion matrix (or a stack of them) to its ``2m x 2n`` adjoint."""
    a = np.asarray(a, dtype=float)
    a1 = a[..., 0] + 1j * a[..., 1]
    a2 = a[..., 2] + 1j * a[..., 3]
    top = np.concatenate([a1, a2], axis=-1)
    bottom = np.concatenate([-a2.conj(), a1.conj()], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def from_complex_adjoint(c) -> np.ndarray:
    """Inverse of :func:`complex_adjoint`.

    Both copies of each block are averaged, so the result is the quaternion
    matrix whose adjoint is closest to ``c`` in Frobenius norm.
    """
    c = np.asarray(c)
    m, n = c.shape[-2] // 2, c.shape[-1] // 2
    a1 = 0.5 * (c[..., :m, :n] + c[..., m:, n:].conj())
    a2 = 0.5 * (c[..., :m, n:] - c[..., m:, :n].conj())
    return np.stack([a1.real, a1.imag, a2.real, a2.imag], axis=-1)


@numba.njit(cache=True, fastmath=True, nogil=True)
def _hestenes(wt, vt, tol, tiny, max_sweeps):
    """Cyclic one-sided Jacobi on the rows of ``wt`` (the columns of the matrix).

    Rotations are mirrored onto ``vt``.  Returns the number of sweeps used, or
    -1 when ``max_sweeps`` was exhausted.
    """
    cols, rows = wt.shape
    nv = vt.shape[1]
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = 0.0
                beta = 0.0
                gr = 0.0
                gi = 0.0
                for i in range(rows):
                    a = wt[p, i]
                    b = wt[q, i]
                    alpha += a.real * a.real + a.imag * a.imag
                    beta += b.real * b.real + b.imag * b.imag
                    gr += a.real * b.real + a.imag * b.imag
                    gi += a.real * b.imag - a.imag * b.real
                g = np.sqrt(gr * gr + gi * gi)
                if g <= tol * np.sqrt(alpha * beta) or alpha <= tiny or beta <= tiny:
                    continue
                rotated = True
                # b <- b * conj(phase(gamma)) makes a^H b real; then a real rotation.
                ph = complex(gr / g, -gi / g)
                zeta = (beta - alpha) / (2.0 * g)
                sg = 1.0 if zeta >= 0 else -1.0
                t = sg / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(rows):
                    a = wt[p, i]
                    b = wt[q, i] * ph
                    wt[p, i] = c * a - s * b
                    wt[q, i] = s * a + c * b
                for i in range(nv):
                    a = vt[p, i]
                    b = vt[q, i] * ph
                    vt[p, i] = c * a - s * b
                    vt[q, i] = s * a + c * b
        if not rotated:
            return sweep + 1
    return -1


def jacobi_svd(m, tol: float = 1e-13, max_sweeps: int = 30, v0=None, full_matrices: bool = True):
    """One-sided (Hestenes) Jacobi SVD of a complex matrix.

    Column pairs are orthogonalized with complex plane rotations until every
    pair satisfies ``|a^H b| <= tol * |a| |b|``.  Tall inputs are first reduced
    to their square triangular factor by a QR decomposition.

    Parameters
    ----------
    m : (r, c) complex array
    tol : relative off-diagonal tolerance
    max_sweeps : sweep cap; exceeding it raises :class:`SVDNonConvergence`
    v0 : optional unitary warm start for the factor on the smaller side
        (``V`` when ``r >= c``, ``U`` otherwise), e.g. taken from the SVD of
        a nearby matrix
    full_matrices : when false, the factor on the larger side is returned
        with ``min(r, c)`` columns only

    Returns
    -------
    u : (r, r) unitary, or (r, min(r, c)) with orthonormal columns
    s : (min(r, c),) nonnegative, descending
    v : (c, c) unitary, or (c, min(r, c)); ``m = u[:, :p] @ diag(s) @ v[:, :p]^H``
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError("jacobi_svd expects a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = m.shape
    if rows < cols:
        v, s, u = jacobi_svd(m.conj().T, tol, max_sweeps, v0, full_matrices)
        return u, s, v
    if v0 is not None and np.shape(v0) != (cols, cols):
        raise ValueError(f"warm start must be {cols}x{cols}")
    if rows > cols + cols // 4:
        q, r = np.linalg.qr(m)
        ur, s, v = jacobi_svd(r, tol, max_sweeps, v0)
        u = q @ ur
        return (_complete_unitary(u, rows) if full_matrices else u), s, v

    if v0 is None:
        v = np.eye(cols, dtype=complex)
        wt = np.array(m.T, order="C")
    else:
        v = np.asarray(v0, dtype=complex)
        wt = np.array((m @ v).T, order="C")
    vt = np.array(v.T, order="C")
    norm = np.linalg.norm(wt)
    # Columns below this are numerically zero; rotating them only shuffles rounding noise.
    tiny = (_EPS * max(norm, np.finfo(float).tiny)) ** 2
    if _hestenes(wt, vt, tol, tiny, max_sweeps) < 0:
        raise SVDNonConvergence(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    w, v = wt.T, vt.T

    s = np.linalg.norm(w, axis=0)
    order = np.argsort(-s, kind="stable")
    s, w, v = s[order], w[:, order], v[:, order]
    nonzero = s > np.sqrt(tiny)
    k = int(np.count_nonzero(nonzero))
    u_part = w[:, :k] / s[:k]
    if full_matrices:
        u = _complete_unitary(u_part, rows)
    else:
        u = u_part if k == cols else _complete_unitary(u_part, rows)[:, :cols]
    s = np.where(nonzero, s, 0.0)
    return u, s, v


def jacobi_spectral_map(m, fn, tol: float = 1e-13, max_sweeps: int = 30):
    """Apply a spectral function: ``U diag(fn(s)) V^H`` for ``m = U diag(s) V^H``.

    Only the Jacobi-orthogonalized columns ``W = U diag(s)`` are formed; with
    ``V^H = diag(1/s) U^H m`` the result is ``W diag(fn(s)/s^3) W^H m``, so
    the right rotations are never accumulated.  The input is first reduced
    by a column-pivoted QR and the sweeps run on the transposed triangle,
    which orders the columns well and cuts the sweep count.

    ``fn`` maps the descending singular values to new values and must vanish
    wherever ``s`` is zero.  Returns ``(result, s)``.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError("jacobi_spectral_map expects a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = m.shape
    if rows < cols:
        x, s = jacobi_spectral_map(m.conj().T, fn, tol, max_sweeps)
        return x.conj().T, s
    q, r, piv = scipy.linalg.qr(m, mode="economic", pivoting=True)
    lower = r.conj().T
    wt = np.array(lower.T, order="C")
    tiny = (_EPS * max(np.linalg.norm(wt), np.finfo(float).tiny)) ** 2
    if _hestenes(wt, np.zeros((cols, 0), dtype=complex), tol, tiny, max_sweeps) < 0:
        raise SVDNonConvergence(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    w = wt.T
    s = np.linalg.norm(w, axis=0)
    order = np.argsort(-s, kind="stable")
    s, w = s[order], w[:, order]
    s = np.where(s > np.sqrt(tiny), s, 0.0)
    d = np.asarray(fn(s), dtype=float)
    keep = (d != 0) & (s > 0)
    wk = w[:, keep]
    f_lower = (wk * (d[keep] / s[keep] ** 3)) @ (wk.conj().T @ lower)
    x = np.empty((rows, cols), dtype=complex)
    x[:, piv] = q @ f_lower.conj().T
    return x, s


def _complete_unitary(q: np.ndarray, n: int) -> np.ndarray:
    """Extend orthonormal columns ``q`` (n x k) to an n x n unitary matrix."""
    k = q.shape[1]
    if k == n:
        return q
    basis, _ = np.linalg.qr(np.hstack([q, np.eye(n, dtype=q.dtype)]), mode="complete")
    return np.hstack([q, basis[:, k:n]])


def complex_svd(m, backend: str = "jacobi"):
    """Full complex SVD ``m = u diag(s) v^H``; returns ``(u, s, v)``.

    ``backend="jacobi"`` uses :func:`jacobi_svd`; ``backend="lapack"`` uses
    :func:`numpy.linalg.svd`.
    """
    if backend == "jacobi":
        return jacobi_svd(m)
    if backend == "lapack":
        m = np.asarray(m, dtype=complex)
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")
        u, s, vh = np.linalg.svd(m, full_matrices=True)
        return u, s, vh.conj().T
    raise ValueError(f"unknown SVD backend {backend!r}")


@dataclass(frozen=True)
class QSVDFactors:
    """Quaternion SVD ``A = U diag(sigma) V^H``."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]


def _partner(a: np.ndarray) -> np.ndarray:
    """The adjoint column paired with ``a``: ``[u1; u2] -> [-conj(u2); conj(u1)]``."""
    h = a.shape[0] // 2
    return np.concatenate([-a[h:].conj(), a[:h].conj()])


def _to_quaternion_column(a: np.ndarray) -> np.ndarray:
    h = a.shape[0] // 2
    q1, q2 = a[:h], -a[h:].conj()
    return np.stack([q1.real, q1.imag, q2.real, q2.imag], axis=-1)


class _PairBasis:
    """Orthonormal adjoint vectors that are closed under the pairing map.

    Each accepted vector ``a`` contributes ``a`` and its partner, which is the
    adjoint form of quaternion orthonormality.
    """

    def __init__(self, dim: int):
        self.cols = np.zeros((dim, 0), dtype=complex)
        self.accepted: list[np.ndarray] = []

    def residual(self, c: np.ndarray) -> np.ndarray:
        r = c
        for _ in range(2):
            r = r - self.cols @ (self.cols.conj().T @ r)
        return r

    def add(self, a: np.ndarray) -> None:
        self.accepted.append(a)
        self.cols = np.hstack([self.cols, a[:, None], _partner(a)[:, None]])

    def pick(self, candidates: np.ndarray, count: int) -> list[np.ndarray]:
        """Accept ``count`` vectors from the span of ``candidates``, largest residual first.

        Returns the accepted (normalized) vectors.  Pivoting matters when the
        candidates are an arbitrary basis of a paired subspace: then no single
        column need stand out, but the best one always carries a fair share.
        """
        out = []
        r = self.residual(np.asarray(candidates, dtype=complex))
        for _ in range(count):
            norms = np.linalg.norm(r, axis=0)
            best = int(np.argmax(norms))
            a = self.residual(r[:, best] / norms[best])
            a /= np.linalg.norm(a)
            self.add(a)
            out.append(a)
            pa = _partner(a)
            r = r - np.outer(a, a.conj() @ r) - np.outer(pa, pa.conj() @ r)
        return out

    def fill(self, candidates: np.ndarray, count: int) -> None:
        """Complete the basis to ``count`` vectors, drawing on ``candidates`` then unit vectors."""
        need = count - len(self.accepted)
        if need > 0:
            pool = np.hstack([candidates, np.eye(self.cols.shape[0], dtype=complex)])
            self.pick(pool, need)


def _phase_normalize(u_col: np.ndarray) -> np.ndarray:
    """Unit quaternion ``p`` making the largest entry of ``u_col p`` real and positive."""
    mod = np.linalg.norm(u_col, axis=-1)
    big = u_col[int(np.argmax(mod))]
    nb = np.linalg.norm(big)
    if nb == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    return quat_conj(big) / nb


def qsvd(a, backend: str = "jacobi") -> QSVDFactors:
    """Quaternion singular value decomposition.

    Returns unitary ``U`` (m x m), ``V`` (n x n) and ``sigma`` of length
    ``min(m, n)``, nonnegative and descending, with
    ``A = U[:, :p] diag(sigma) V[:, :p]^H``.  Only the product is unique;
    individual vectors of repeated singular values are arbitrary.
    """
    a = _check_qmatrix(a, "qsvd input")
    m, n = a.shape[:2]
    p = min(m, n)
    if p == 0:
        return QSVDFactors(np.zeros((m, m, 4)), np.zeros(0), np.zeros((n, n, 4)))
    uc, s, vc = complex_svd(complex_adjoint(a), backend=backend)
    s = np.maximum(s[: 2 * p], 0.0)
    sigma = s[0::2].copy()

    smax = s[0]
    zero_tol = 4 * max(m, n) * _EPS * smax
    cluster_tol = max(1e-11 * smax, zero_tol)

    left = _PairBasis(2 * m)
    right_vecs: list[np.ndarray] = []
    start = 0
    while start < 2 * p and s[start] > zero_tol:
        end = start + 1
        while end < 2 * p and s[end - 1] - s[end] <= cluster_tol and s[end] > zero_tol:
            end += 1
        cl = slice(start, end)
        count = len(range(start + start % 2, end, 2))
        for r in left.pick(uc[:, cl], count):
            # Same combination of right vectors keeps A^H u = sigma v within the cluster.
            v = vc[:, cl] @ (uc[:, cl].conj().T @ r)
            right_vecs.append(v / np.linalg.norm(v))
        start = end
    k = len(left.accepted)

    right = _PairBasis(2 * n)
    for v in right_vecs:
        r = right.residual(v)
        right.add(r / np.linalg.norm(r))
    left.fill(uc, m)
    right.fill(vc, n)

    u = np.stack([_to_quaternion_column(c) for c in left.accepted], axis=1)
    v = np.stack([_to_quaternion_column(c) for c in right.accepted], axis=1)
    for i in range(m):
        ph = _phase_normalize(u[:, i])
        u[:, i] = quat_mul(u[:, i], ph)
        if i < k:
            v[:, i] = quat_mul(v[:, i], ph)
    return QSVDFactors(u, sigma, v)


def qsvd_reconstruct(f: QSVDFactors, sigma=None) -> np.ndarray:
    """``U diag(sigma) V^H``; ``sigma`` overrides the stored singular values."""
    sigma = f.sigma if sigma is None else np.asarray(sigma, dtype=float)
    m, n = f.u.shape[0], f.v.shape[0]
    if f.u.shape[:2] != (m, m) or f.v.shape[:2] != (n, n):
        raise ValueError("factor matrices must be square")
    p = min(m, n)
    if sigma.shape != (p,):
        raise ValueError(f"expected {p} singular values, got {sigma.shape}")
    scaled = f.u[:, :p] * sigma[None, :, None]
    return qmat_mul(scaled, hermitian_transpose(f.v[:, :p]))


def qsvd_values(a, backend: str = "lapack") -> np.ndarray:
    """Singular values only (one representative per adjoint pair)."""
    a = np.asarray(a, dtype=float)
    c = complex_adjoint(a)
    if backend == "lapack":
        s = np.linalg.svd(c, compute_uv=False)
    else:
        s = complex_svd(c, backend=backend)[1]
    p = min(a.shape[-3], a.shape[-2])
    return s[..., : 2 * p : 2]


def unitarity_defect(u) -> float:
    """``max |U^H U - I|`` over components."""
    u = np.asarray(u, dtype=float)
    g = qmat_mul(hermitian_transpose(u), u)
    g[..., 0] -= np.eye(u.shape[1])
    return float(np.max(np.abs(g)))

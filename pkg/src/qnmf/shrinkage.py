"""Singular-value shrinkage for the nuclear-minus-Frobenius penalty.

The matrix problem

    min_X  1/2 ||Y - X||_F^2 + lam * (||X||_* - alpha * ||X||_F)

acts on singular values only, where it becomes the vector problem

    min_x  1/2 ||y - x||^2 + lam * (||x||_1 - alpha * ||x||_2),   x >= 0.

Two closed-form rules are provided.  ``l1_minus_l2_prox`` solves the vector
problem exactly.  ``qnmf_shrink`` is the truncated rule used by the
restoration pipelines, which never enlarges a singular value and leaves the
dominant ones untouched.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import (
    complex_adjoint,
    from_complex_adjoint,
    jacobi_spectral_map,
    jacobi_svd,
    qsvd,
    qsvd_reconstruct,
    qsvd_values,
)
from .quaternion import _check_qmatrix, frobenius_norm, quat_modulus

SOFT_EPS = 1e-12
MODES = ("theorem", "truncated")


@dataclass(frozen=True)
class ShrinkParams:
    lam: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True)
class ShrinkResult:
    """Output of the truncated rule.

    ``k_multiplier`` is the scale applied in the middle branch and is 1 when
    nothing survives the threshold or ``alpha == 0``.
    """

    sigma_out: np.ndarray
    k_multiplier: float
    z_norm: float
    cutoff: float = np.inf


def _check_spectrum(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 1:
        raise ValueError("singular values must be a 1-D vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("singular values must be finite")
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    scale = max(1.0, float(s[0])) if s.size else 1.0
    if np.any(np.diff(s) > 1e-12 * scale):
        raise ValueError("singular values must be sorted in non-increasing order")
    return s


def _cutoff(k, lam):
    # k/(k - 1) with k = 1 meaning "no pass-through branch".
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(k > 1.0, k * lam / (2.0 * (k - 1.0)), np.inf)


def truncated_rule(s, lam, alpha):
    """Vectorized truncated shrinkage over the last axis of ``s``.

    Returns ``(out, k, z_norm)`` with ``k`` and ``z_norm`` shaped like
    ``s[..., 0]``.  No validation; callers pass sorted nonnegative spectra.
    """
    s = np.asarray(s, dtype=float)
    lam = np.asarray(lam, dtype=float)[..., None]
    z = np.where(s > lam, s - lam / 2.0, 0.0)
    zn = np.linalg.norm(z, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(zn > 0, 1.0 + alpha * lam[..., 0] / (2.0 * zn), 1.0)
    cut = _cutoff(k, lam[..., 0])[..., None]
    kk = k[..., None]
    out = np.where(s > cut, s, np.where(s > lam, kk * (s - lam / 2.0), 0.0))
    return out, k, zn


def theorem_rule(s, lam, alpha):
    """Vectorized exact minimizer of the vector problem over the last axis of ``s``.

    When some entry exceeds ``lam`` the solution rescales the soft-thresholded
    vector ``z``.  Otherwise the minimizer is either zero or supported on the
    largest entry alone, with value ``s1 + (alpha - 1) lam``, whichever wins;
    the latter happens exactly when ``s1 > (1 - alpha) lam``.
    """
    s = np.asarray(s, dtype=float)
    lam = np.asarray(lam, dtype=float)[..., None]
    z = np.maximum(s - lam, 0.0)
    zn = np.linalg.norm(z, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        dense = np.where(zn > 0, z * (zn + alpha * lam) / zn, 0.0)
    out = dense
    if s.shape[-1]:
        s1 = s[..., :1]
        lead = s1 + (alpha - 1.0) * lam
        sparse = np.zeros_like(s)
        sparse[..., :1] = np.where((s1 > (1.0 - alpha) * lam) & (lead > 0), lead, 0.0)
        out = np.where(zn > 0, dense, sparse)
    return out


def l1_minus_l2_prox(sigma_y, p: ShrinkParams) -> np.ndarray:
    """Exact proximal map of ``lam * (||x||_1 - alpha ||x||_2)`` on a sorted spectrum.

    Examples
    --------
    >>> l1_minus_l2_prox([4.0, 2.0], ShrinkParams(1.0, 0.0))
    array([3., 1.])
    """
    s = _check_spectrum(sigma_y)
    return theorem_rule(s, p.lam, p.alpha)


def qnmf_shrink(sigma_y, p: ShrinkParams) -> ShrinkResult:
    """Truncated three-branch shrinkage of a sorted spectrum."""
    s = _check_spectrum(sigma_y)
    out, k, zn = truncated_rule(s, p.lam, p.alpha)
    return ShrinkResult(out, float(k), float(zn), float(_cutoff(k, p.lam)))


def spectral_objective(sigma_y, sigma_x, p: ShrinkParams) -> float:
    """The vector objective at ``x`` (entries assumed nonnegative)."""
    y = np.asarray(sigma_y, dtype=float)
    x = np.asarray(sigma_x, dtype=float)
    return float(0.5 * np.sum((y - x) ** 2) + p.lam * (np.sum(np.abs(x)) - p.alpha * np.linalg.norm(x)))


def nuclear_norm(a) -> float:
    return float(np.sum(qsvd_values(a)))


def qnmf_objective(y, x, p: ShrinkParams) -> float:
    """``1/2 ||Y - X||_F^2 + lam (||X||_* - alpha ||X||_F)``."""
    return 0.5 * frobenius_norm(np.asarray(y) - np.asarray(x)) ** 2 + p.lam * (
        nuclear_norm(x) - p.alpha * frobenius_norm(x)
    )


def _rule(mode: str):
    if mode == "theorem":
        return theorem_rule
    if mode == "truncated":
        return lambda s, lam, alpha: truncated_rule(s, lam, alpha)[0]
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def spectral_prox(y, lam: float, alpha: float, mode: str = "truncated", v0=None, want_v: bool = False):
    """Shrink the singular values of a quaternion matrix through its complex adjoint.

    The adjoint spectrum holds every quaternion singular value twice, so the
    shrunken adjoint ``Uc diag(f(s)) Vc^H`` is again an adjoint and maps back
    to ``U diag(f(sigma)) V^H`` without forming the quaternion factors.

    Returns ``(x, sigma_in, sigma_out, warm)``.  ``warm`` is the adjoint's
    singular-vector factor on its smaller side; feed it back as ``v0`` for a
    nearby matrix to cut the Jacobi sweeps.  It is only computed when
    ``want_v`` is set or ``v0`` is given, and is ``None`` otherwise.
    """
    y = _check_qmatrix(y)
    m, n = y.shape[:2]
    p = min(m, n)
    c = complex_adjoint(y)
    rule = _rule(mode)
    if p == 0:
        return np.zeros_like(y), np.zeros(0), np.zeros(0), None
    if not (want_v or v0 is not None):
        got = {}

        def fn(s):
            sigma = 0.5 * (s[0 : 2 * p : 2] + s[1 : 2 * p : 2])
            got["sigma"], got["out"] = sigma, rule(sigma, lam, alpha)
            d = np.zeros_like(s)
            d[: 2 * p] = np.repeat(got["out"], 2)
            return d

        xc, _ = jacobi_spectral_map(c, fn)
        return from_complex_adjoint(xc), got["sigma"], got["out"], None
    if v0 is not None and np.shape(v0) != (2 * p, 2 * p):
        v0 = None
    uc, s, vc = jacobi_svd(c, v0=v0, full_matrices=False)
    s = s[: 2 * p]
    sigma = 0.5 * (s[0::2] + s[1::2])
    out = rule(sigma, lam, alpha)
    d = np.repeat(out, 2)
    keep = d > 0
    xc = (uc[:, : 2 * p][:, keep] * d[keep]) @ vc[:, : 2 * p][:, keep].conj().T
    warm = vc if m >= n else uc
    return from_complex_adjoint(xc), sigma, out, warm


def qnmf_denoise(y, p: ShrinkParams, mode: str = "truncated", route: str = "adjoint") -> np.ndarray:
    """Solve the matrix shrinkage problem in closed form.

    ``route="adjoint"`` shrinks the complex adjoint directly (fast);
    ``route="qsvd"`` goes through explicit quaternion factors.  Both give the
    same matrix up to rounding.
    """
    y = _check_qmatrix(y)
    if route == "adjoint":
        return spectral_prox(y, p.lam, p.alpha, mode)[0]
    if route == "qsvd":
        f = qsvd(y)
        return qsvd_reconstruct(f, _rule(mode)(f.sigma, p.lam, p.alpha))
    raise ValueError(f"route must be 'adjoint' or 'qsvd', got {route!r}")


def group_shrink(groups, lam, alpha: float, mode: str = "truncated") -> np.ndarray:
    """Shrink a stack of quaternion matrices ``(g, m, n, 4)``.

    ``lam`` may be a scalar or one threshold per group.
    """
    groups = np.asarray(groups, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), groups.shape[:1])

    def one(i):
        return spectral_prox(groups[i], float(lam[i]), alpha, mode)[0]

    workers = worker_count()
    if workers > 1 and len(groups) > 1:
        # The Jacobi kernel releases the GIL; results land in input order.
        with ThreadPoolExecutor(workers) as pool:
            return np.stack(list(pool.map(one, range(len(groups)))))
    return np.stack([one(i) for i in range(len(groups))]) if len(groups) else groups.copy()


def worker_count() -> int:
    """Worker threads for patch-group work, from ``QNMF_THREADS`` (default 1)."""
    raw = os.environ.get("QNMF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"QNMF_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def soft_threshold_quat(q, tau: float) -> np.ndarray:
    """Shrink each quaternion entry's modulus by ``tau``, keeping its direction."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    q = np.asarray(q, dtype=float)
    mod = quat_modulus(q)[..., None]
    return q / (mod + SOFT_EPS) * np.maximum(mod - tau, 0.0)

"""ADMM solvers for restoration with the nuclear-minus-Frobenius penalty.

Three problems share one splitting pattern with a multiplier ``eta`` and a
penalty ``beta`` that grows geometrically:

* linear inverse (deblurring / denoising):
  ``min gamma/2 ||A X - Y||^2 + lam R(X)`` with ``X = Z``;
* matrix completion: ``min lam R(X)`` with ``Y = X + Z`` and ``Z`` zero on
  the observed set;
* robust PCA: ``min lam R(X) + rho ||Z||_1`` with ``Y = X + Z``;

where ``R(X) = ||X||_* - alpha ||X||_F``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse.linalg as spla

from .linalg import qsvd_values
from .patches import PatchGroupSpec, aggregate_groups, all_patches, extract_groups, match_all, reference_grid
from .quaternion import _check_qmatrix, frobenius_norm, hermitian_transpose, l1_norm, qmat_mul
from .shrinkage import MODES, group_shrink, soft_threshold_quat, spectral_prox

TRACE_COLUMNS = ("iter", "feas_residual", "dx", "dz", "eta_norm", "beta", "objective")


class SolverDiverged(RuntimeError):
    """An iterate became non-finite."""


@dataclass(frozen=True)
class AdmmConfig:
    gamma: float = 1.0
    lam: float = 1.0
    alpha: float = 4.0
    beta0: float = 1.0
    mu: float = 1.05
    rho: float = 1.0
    max_iter: int = 300
    tol: float = 1e-4
    shrink_mode: str = "truncated"

    def __post_init__(self):
        for name in ("gamma", "lam", "beta0", "rho"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not (math.isfinite(self.mu) and self.mu > 1):
            raise ValueError(f"mu must exceed 1, got {self.mu}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.shrink_mode not in MODES:
            raise ValueError(f"shrink_mode must be one of {MODES}")

    def replace(self, **kw) -> "AdmmConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return AdmmConfig(**vals)


# Deblurring presets keyed by kernel kind: (beta0, gamma).
DEBLUR_PRESETS = {"uniform": (8.5, 115.0), "gaussian": (7.5, 65.0), "motion": (7.5, 115.0)}


@dataclass
class SolverTrace:
    """Per-iteration residual history.

    Residuals are absolute Frobenius norms; ``scale`` is the reference norm
    used for the relative stopping test.  ``lam`` and ``rank_dim`` (the
    smaller matrix dimension) fix the multiplier bound ``lam * sqrt(rank_dim)``.
    """

    scale: float
    lam: float
    rank_dim: int
    tol: float
    beta0: float
    mu: float
    feas: list = field(default_factory=list)
    dx: list = field(default_factory=list)
    dz: list = field(default_factory=list)
    eta_norm: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    lagrangian_before: list = field(default_factory=list)
    lagrangian_after: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.feas)

    def append(self, feas, dx, dz, eta_norm, beta, objective):
        row = (feas, dx, dz, eta_norm, beta, objective)
        if not all(math.isfinite(v) for v in row):
            raise SolverDiverged(f"non-finite diagnostics at iteration {len(self)}: {row}")
        for lst, v in zip((self.feas, self.dx, self.dz, self.eta_norm, self.beta, self.objective), row):
            lst.append(float(v))

    def relative(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name)) / self.scale

    def converged(self) -> bool:
        return len(self) > 0 and all(self.relative(n)[-1] <= self.tol for n in ("feas", "dx", "dz"))

    @property
    def eta_bound(self) -> float:
        return self.lam * math.sqrt(self.rank_dim)

    def rows(self):
        cols = (self.feas, self.dx, self.dz, self.eta_norm, self.beta, self.objective)
        for k, vals in enumerate(zip(*cols)):
            yield (k, *vals)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(v) for v in row[1:]])


@dataclass(frozen=True)
class LinearOperator:
    """Degradation operator ``A`` acting on quaternion images.

    ``kind`` is ``"identity"``, ``"convolution"`` (real kernel, periodic
    boundary, acting on each component alike) or ``"matrix"`` (left
    multiplication by a square quaternion matrix).
    """

    kind: str = "identity"
    kernel: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "convolution":
            k = np.asarray(self.kernel, dtype=float)
            if k.ndim != 2 or not np.all(np.isfinite(k)):
                raise ValueError("convolution kernel must be a finite 2-D array")
        elif self.kind == "matrix":
            a = _check_qmatrix(self.matrix, "operator matrix")
            if a.shape[0] != a.shape[1]:
                raise ValueError("operator matrix must be square")
        elif self.kind != "identity":
            raise ValueError(f"unknown operator kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "LinearOperator":
        return cls("identity")

    @classmethod
    def convolution(cls, kernel) -> "LinearOperator":
        return cls("convolution", kernel=np.asarray(kernel, dtype=float))

    @classmethod
    def from_matrix(cls, a) -> "LinearOperator":
        return cls("matrix", matrix=np.asarray(a, dtype=float))

    def otf(self, shape) -> np.ndarray:
        """Transfer function of the periodic convolution on an image of ``shape``."""
        k = np.asarray(self.kernel, dtype=float)
        h, w = shape[:2]
        if k.shape[0] > h or k.shape[1] > w:
            raise ValueError(f"kernel {k.shape} larger than image {shape[:2]}")
        pad = np.zeros((h, w))
        pad[: k.shape[0], : k.shape[1]] = k
        pad = np.roll(pad, (-(k.shape[0] // 2), -(k.shape[1] // 2)), axis=(0, 1))
        return np.fft.fft2(pad)

    def apply(self, x) -> np.ndarray:
        x = _check_qmatrix(x)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "convolution":
            return _filter(x, self.otf(x.shape))
        return qmat_mul(self.matrix, x)

    def adjoint(self, x) -> np.ndarray:
        x = _check_qmatrix(x)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "convolution":
            return _filter(x, self.otf(x.shape).conj())
        return qmat_mul(hermitian_transpose(self.matrix), x)


def _filter(x: np.ndarray, tf: np.ndarray) -> np.ndarray:
    xf = np.fft.fft2(x, axes=(0, 1))
    return np.real(np.fft.ifft2(xf * tf[..., None], axes=(0, 1)))


def x_update_fft(y, z, eta, op: LinearOperator, gamma: float, beta: float, otf=None) -> np.ndarray:
    """``(gamma A*A + beta I)^{-1} (gamma A* Y + beta Z - eta)`` for a periodic convolution.

    The kernel is real, so the four components decouple and each is solved
    by division in the Fourier domain.
    """
    y, z, eta = (_check_qmatrix(v) for v in (y, z, eta))
    if op.kind == "identity":
        return (gamma * y + beta * z - eta) / (gamma + beta)
    if op.kind != "convolution":
        raise ValueError("x_update_fft needs a convolution operator")
    a = op.otf(y.shape) if otf is None else otf
    fy, fz, fe = (np.fft.fft2(v, axes=(0, 1)) for v in (y, z, eta))
    num = gamma * a.conj()[..., None] * fy + beta * fz - fe
    den = gamma * np.abs(a[..., None]) ** 2 + beta
    return np.real(np.fft.ifft2(num / den, axes=(0, 1)))


def x_update_cg(y, z, eta, op: LinearOperator, gamma: float, beta: float, x0=None, rtol: float = 1e-10):
    """The same solve for a general operator, by conjugate gradients."""
    shape = np.shape(y)
    rhs = gamma * op.adjoint(y) + beta * np.asarray(z) - np.asarray(eta)

    def normal(v):
        v = v.reshape(shape)
        return (gamma * op.adjoint(op.apply(v)) + beta * v).ravel()

    n = rhs.size
    lin = spla.LinearOperator((n, n), matvec=normal, dtype=float)
    sol, info = spla.cg(lin, rhs.ravel(), x0=None if x0 is None else np.ravel(x0), rtol=rtol, atol=0.0, maxiter=10 * n)
    if info != 0:
        raise SolverDiverged(f"conjugate gradients did not converge (info={info})")
    return sol.reshape(shape)


def _penalty(sigma, alpha) -> float:
    return float(np.sum(sigma) - alpha * np.linalg.norm(sigma))


class _NssProx:
    """Patch-group shrinkage standing in for the global proximal step."""

    def __init__(self, spec: PatchGroupSpec, shape, regroup: bool, guide=None):
        self.spec = spec
        self.refs = reference_grid(shape, spec.patch_side, spec.stride)
        self.regroup = regroup
        self.positions = None if guide is None else match_all(guide, self.refs, spec)

    def __call__(self, w, thresh, alpha, mode, guide):
        if self.regroup or self.positions is None:
            self.positions = match_all(guide, self.refs, self.spec)
        m = self.spec.patch_side
        groups = extract_groups(w, self.positions, m, all_patches(w, m))
        out, weight = aggregate_groups(
            group_shrink(groups, thresh, alpha, mode), self.positions, w.shape, m, return_weights=True
        )
        # Pixels outside every group keep their input value.
        miss = weight == 0
        out[miss] = w[miss]
        return out


def solve_linear_inverse(
    y,
    op: LinearOperator | None = None,
    cfg: AdmmConfig = AdmmConfig(),
    regularizer: str = "global",
    spec: PatchGroupSpec | None = None,
    regroup: bool = True,
    record_lagrangian: bool = False,
):
    """ADMM for ``min gamma/2 ||A X - Y||_F^2 + lam (||X||_* - alpha ||X||_F)``.

    ``regularizer="nss"`` replaces the global proximal step by patch-group
    shrinkage (``spec`` required); groups are re-matched on the current
    iterate every iteration unless ``regroup=False``, in which case they are
    matched once on ``Y``.

    Returns ``(X, trace)``.  Stops when the relative feasibility residual and
    both step sizes fall below ``cfg.tol``, or after ``cfg.max_iter``.
    """
    y = _check_qmatrix(y)
    op = LinearOperator.identity() if op is None else op
    if op.kind == "matrix" and op.matrix.shape[1] != y.shape[0]:
        raise ValueError(f"operator {op.matrix.shape[:2]} does not match image {y.shape[:2]}")
    nss = _make_nss(regularizer, spec, y.shape, regroup, y)

    m, n = y.shape[:2]
    otf = op.otf(y.shape) if op.kind == "convolution" else None
    g, lam, alpha, mode = cfg.gamma, cfg.lam, cfg.alpha, cfg.shrink_mode
    x, z, eta = y.copy(), y.copy(), np.zeros_like(y)
    trace = SolverTrace(max(frobenius_norm(y), 1e-300), lam, min(m, n), cfg.tol, cfg.beta0, cfg.mu)

    def data(v):
        return 0.5 * g * frobenius_norm(op.apply(v) - y) ** 2

    def lagrangian(xv, zv, sig_z):
        d = xv - zv
        return data(xv) + lam * _penalty(sig_z, alpha) + np.sum(eta * d) + 0.5 * beta * np.sum(d * d)

    v0 = None
    sig_z = qsvd_values(z)
    for k in range(cfg.max_iter):
        beta = cfg.beta0 * cfg.mu**k
        before = lagrangian(x, z, sig_z) if record_lagrangian else None
        if op.kind == "matrix":
            x_new = x_update_cg(y, z, eta, op, g, beta, x0=x)
        else:
            x_new = x_update_fft(y, z, eta, op, g, beta, otf=otf)
        w = x_new + eta / beta
        if nss is None:
            z_new, _, sig_z, v0 = spectral_prox(w, lam / beta, alpha, mode, v0=v0, want_v=True)
        else:
            z_new = nss(w, lam / beta, alpha, mode, guide=x_new)
            sig_z = qsvd_values(z_new)
        if record_lagrangian:
            trace.lagrangian_before.append(before)
            trace.lagrangian_after.append(lagrangian(x_new, z_new, sig_z))
        r = x_new - z_new
        eta = eta + beta * r
        trace.append(
            frobenius_norm(r),
            frobenius_norm(x_new - x),
            frobenius_norm(z_new - z),
            frobenius_norm(eta),
            beta,
            data(x_new) + lam * _penalty(sig_z, alpha),
        )
        x, z = x_new, z_new
        if trace.converged():
            break
    return x, trace


def _check_mask(mask, shape) -> np.ndarray:
    omega = np.asarray(mask)
    if omega.shape != shape[:2]:
        raise ValueError(f"mask shape {omega.shape} does not match data {shape[:2]}")
    omega = omega.astype(bool)
    if not omega.any():
        raise ValueError("mask observes no entries")
    return omega


def _make_nss(regularizer, spec, shape, regroup, guide):
    if regularizer == "global":
        return None
    if regularizer != "nss":
        raise ValueError("regularizer must be 'global' or 'nss'")
    if spec is None:
        raise ValueError("nss regularizer needs a PatchGroupSpec")
    return _NssProx(spec, shape, regroup, guide=None if regroup else guide)


def _sum_split(y, cfg: AdmmConfig, z_step, scale, record_lagrangian, sparse_weight=None, nss=None):
    """Shared loop for ``Y = X + Z`` splittings (completion and robust PCA)."""
    m, n = y.shape[:2]
    lam, alpha, mode = cfg.lam, cfg.alpha, cfg.shrink_mode
    x, z, eta = y.copy(), np.zeros_like(y), np.zeros_like(y)
    trace = SolverTrace(max(scale, 1e-300), lam, min(m, n), cfg.tol, cfg.beta0, cfg.mu)

    def lagrangian(xv, zv, sig_x):
        r = y - xv - zv
        val = lam * _penalty(sig_x, alpha) + np.sum(eta * r) + 0.5 * beta * np.sum(r * r)
        if sparse_weight is not None:
            val += sparse_weight * l1_norm(zv)
        return val

    v0 = None
    sig_x = qsvd_values(x)
    for k in range(cfg.max_iter):
        beta = cfg.beta0 * cfg.mu**k
        before = lagrangian(x, z, sig_x) if record_lagrangian else None
        z_new = z_step(y - x + eta / beta, beta)
        w = y - z_new + eta / beta
        if nss is None:
            x_new, _, sig_x, v0 = spectral_prox(w, lam / beta, alpha, mode, v0=v0, want_v=True)
        else:
            x_new = nss(w, lam / beta, alpha, mode, guide=w)
            sig_x = qsvd_values(x_new)
        if record_lagrangian:
            trace.lagrangian_before.append(before)
            trace.lagrangian_after.append(lagrangian(x_new, z_new, sig_x))
        r = y - x_new - z_new
        eta = eta + beta * r
        obj = lam * _penalty(sig_x, alpha)
        if sparse_weight is not None:
            obj += sparse_weight * l1_norm(z_new)
        trace.append(
            frobenius_norm(r),
            frobenius_norm(x_new - x),
            frobenius_norm(z_new - z),
            frobenius_norm(eta),
            beta,
            obj,
        )
        x, z = x_new, z_new
        if trace.converged():
            break
    return x, z, trace


def solve_matrix_completion(
    y,
    omega,
    cfg: AdmmConfig = AdmmConfig(),
    regularizer: str = "global",
    spec: PatchGroupSpec | None = None,
    regroup: bool = True,
    record_lagrangian: bool = False,
):
    """Recover a low-rank quaternion matrix from the entries where ``omega`` is true.

    Entries of ``Y`` outside ``omega`` are ignored.  Returns ``(X, trace)``;
    the relative residuals use ``||P_omega(Y)||_F`` as reference.  With
    ``regularizer="nss"`` the low-rank step shrinks patch groups instead of
    the whole matrix.
    """
    y = _check_qmatrix(y)
    omega = _check_mask(omega, y.shape)
    y = y * omega[..., None]
    unobserved = (~omega)[..., None]

    def z_step(w, beta):
        return w * unobserved

    nss = _make_nss(regularizer, spec, y.shape, regroup, y)
    x, _, trace = _sum_split(y, cfg, z_step, frobenius_norm(y), record_lagrangian, nss=nss)
    return x, trace


def solve_rpca(
    y,
    cfg: AdmmConfig = AdmmConfig(),
    regularizer: str = "global",
    spec: PatchGroupSpec | None = None,
    regroup: bool = True,
    record_lagrangian: bool = False,
):
    """Split ``Y`` into a low-rank part ``X`` and an entrywise-sparse part ``Z``.

    Returns ``(X, Z, trace)``.
    """
    y = _check_qmatrix(y)

    def z_step(w, beta):
        return soft_threshold_quat(w, cfg.rho / beta)

    nss = _make_nss(regularizer, spec, y.shape, regroup, y)
    return _sum_split(y, cfg, z_step, frobenius_norm(y), record_lagrangian, cfg.rho, nss=nss)


@dataclass(frozen=True)
class ConvergenceReport:
    eta_bounded: bool
    max_eta: float
    eta_bound: float
    feas_ok: bool
    dx_ok: bool
    dz_ok: bool
    beta_geometric: bool
    iterations: int
    final_feas: float
    final_dx: float
    final_dz: float

    @property
    def ok(self) -> bool:
        return self.eta_bounded and self.feas_ok and self.dx_ok and self.dz_ok and self.beta_geometric


def convergence_report(trace: SolverTrace) -> ConvergenceReport:
    """Check a trace against the multiplier bound, the stopping tolerance and the penalty schedule."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    eta = np.asarray(trace.eta_norm)
    beta = np.asarray(trace.beta)
    expected = trace.beta0 * trace.mu ** np.arange(len(beta))
    feas, dx, dz = (trace.relative(n)[-1] for n in ("feas", "dx", "dz"))
    single = len(trace) == 1
    return ConvergenceReport(
        eta_bounded=bool(np.all(eta <= trace.eta_bound + 1e-9)),
        max_eta=float(eta.max()),
        eta_bound=trace.eta_bound,
        feas_ok=single or feas <= trace.tol,
        dx_ok=single or dx <= trace.tol,
        dz_ok=single or dz <= trace.tol,
        beta_geometric=bool(np.allclose(beta, expected, rtol=1e-12, atol=0.0)),
        iterations=len(trace),
        final_feas=float(feas),
        final_dx=float(dx),
        final_dz=float(dz),
    )

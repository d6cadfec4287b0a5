"""Restoration pipelines on RGB images: parameter schedules, degradations and NSS denoising."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .patches import PatchGroupSpec, aggregate_groups, all_patches, extract_groups, match_all, reference_grid
from .quaternion import frobenius_norm, rgb_decode, rgb_encode
from .shrinkage import group_shrink
from .solvers import (
    DEBLUR_PRESETS,
    AdmmConfig,
    LinearOperator,
    solve_linear_inverse,
    solve_matrix_completion,
    solve_rpca,
)

# (upper sigma bound, patch side, group size, outer iterations)
_SCHEDULE = ((5, 4, 80, 4), (20, 4, 80, 6), (40, 5, 90, 8), (60, 5, 120, 9), (math.inf, 5, 140, 10))

DELTA = 0.1
DEFAULT_STRIDE = 4
# Patch grouping for completion and robust PCA in nss mode.
NSS_SPEC = PatchGroupSpec(5, 40, 20, DEFAULT_STRIDE)
# 155 patches of 6x6 in a 30x30 window for deblurring.
DEBLUR_NSS_SPEC = PatchGroupSpec(6, 155, 30, DEFAULT_STRIDE)
# Regularization weights for 0-255 images, by task.
TASK_LAMBDA = {"complete": 1e4, "rpca": 1e4, "deblur": 3e4}
RPCA_RHO = 300.0


def default_config(task: str, kernel_kind: str | None = None) -> AdmmConfig:
    """Solver settings used when none are given, for images on the 0-255 scale."""
    if task == "deblur":
        beta0, gamma = DEBLUR_PRESETS[kernel_kind or "uniform"]
        return AdmmConfig(gamma=gamma, beta0=beta0, lam=TASK_LAMBDA["deblur"])
    if task == "complete":
        return AdmmConfig(lam=TASK_LAMBDA["complete"])
    if task == "rpca":
        return AdmmConfig(lam=TASK_LAMBDA["rpca"], rho=RPCA_RHO)
    raise ValueError(f"no solver defaults for task {task!r}")


@dataclass(frozen=True)
class DenoiseSchedule:
    sigma: float
    patch_side: int
    group_size: int
    outer_iters: int
    lam: float
    alpha: float = 4.0
    search_window: int = 30
    stride: int = DEFAULT_STRIDE
    delta: float = DELTA

    @property
    def spec(self) -> PatchGroupSpec:
        return PatchGroupSpec(self.patch_side, self.group_size, self.search_window, self.stride)


def schedule_lambda(sigma: float, group_size: int) -> float:
    """``2 c`` with ``c = sqrt(5 sqrt(2 n) sigma)``."""
    return 2.0 * math.sqrt(5.0 * math.sqrt(2.0 * group_size) * sigma)


def schedule_lookup(sigma: float) -> DenoiseSchedule:
    """Patch side, group size and outer iterations by noise level, plus lambda and alpha."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    for upper, m, n, k in _SCHEDULE:
        if sigma <= upper:
            return DenoiseSchedule(sigma, m, n, k, schedule_lambda(sigma, n))
    raise AssertionError("unreachable")


def group_threshold(lam: float, sigma_k: float) -> float:
    """Per-group singular-value threshold for residual noise level ``sigma_k``.

    The schedule's ``lam`` grows like ``sqrt(sigma)``; multiplying by
    ``sqrt(sigma_k)`` gives a threshold linear in the noise level, which is
    how the noise part of a group's spectrum scales.
    """
    return lam * math.sqrt(sigma_k)


def nss_denoise(noisy, sigma: float, sched: DenoiseSchedule | None = None, return_history: bool = False):
    """Denoise an ``(H, W, 3)`` image by patch-group shrinkage with iterative regularization.

    Each outer round feeds back a fraction ``delta`` of the residual,
    re-estimates the remaining noise level, re-matches patches on the current
    estimate and shrinks every group with the truncated rule.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    sched = schedule_lookup(sigma) if sched is None else sched
    spec = sched.spec
    y = rgb_encode(noisy)
    m = spec.patch_side
    if min(y.shape[:2]) < max(m, 2):
        raise ValueError("image is smaller than one patch")
    refs = reference_grid(y.shape, m, spec.stride)
    x = y.copy()
    n_vals = 3 * y.shape[0] * y.shape[1]
    history = []
    for _ in range(sched.outer_iters):
        yk = x + sched.delta * (y - x)
        sigma_k = math.sqrt(max(sigma**2 - frobenius_norm(y - x) ** 2 / n_vals, 0.0))
        history.append(sigma_k)
        if sigma_k == 0.0:
            break
        positions = match_all(x, refs, spec)
        groups = extract_groups(yk, positions, m, all_patches(yk, m))
        shrunk = group_shrink(groups, group_threshold(sched.lam, sigma_k), sched.alpha, "truncated")
        x, weight = aggregate_groups(shrunk, positions, y.shape, m, return_weights=True)
        x[weight == 0] = yk[weight == 0]
    out = rgb_decode(x)
    return (out, history) if return_history else out


def make_kernel(kind: str, size: int | None = None, std: float = 1.6, length: float = 20, angle: float = 60) -> np.ndarray:
    """Blur kernels: ``uniform`` (9x9), ``gaussian`` (25x25, std 1.6) or ``motion`` (length 20, 60 degrees).

    Angles are counter-clockwise from the positive column axis, with rows
    pointing down as in image coordinates.
    """
    if kind == "uniform":
        size = 9 if size is None else size
        k = np.ones((size, size))
    elif kind == "gaussian":
        size = 25 if size is None else size
        t = np.arange(size) - (size - 1) / 2
        g = np.exp(-(t**2) / (2 * std**2))
        k = np.outer(g, g)
    elif kind == "motion":
        k = _motion_kernel(length, angle)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return k / k.sum()


def _motion_kernel(length: float, angle: float) -> np.ndarray:
    # Digital line: one pixel per step along the dominant axis.
    if length < 1:
        raise ValueError("motion length must be at least 1")
    th = math.radians(angle)
    dx, dy = math.cos(th), -math.sin(th)
    steps = int(round((length - 1) * max(abs(dx), abs(dy))))
    t = np.linspace(-(length - 1) / 2, (length - 1) / 2, steps + 1)
    cols = np.rint(t * dx).astype(int)
    rows = np.rint(t * dy).astype(int)
    half = int(max(np.abs(cols).max(), np.abs(rows).max()))
    k = np.zeros((2 * half + 1, 2 * half + 1))
    k[rows + half, cols + half] = 1.0
    return k


def parse_kernel(text: str) -> tuple[str, np.ndarray]:
    """``uniform:9``, ``gaussian:25:1.6`` or ``motion:20:60`` -> (kind, kernel)."""
    parts = text.split(":")
    kind, args = parts[0], [float(p) for p in parts[1:]]
    if kind == "uniform":
        return kind, make_kernel(kind, size=int(args[0]) if args else None)
    if kind == "gaussian":
        size = int(args[0]) if args else None
        std = args[1] if len(args) > 1 else 1.6
        return kind, make_kernel(kind, size=size, std=std)
    if kind == "motion":
        length = args[0] if args else 20
        angle = args[1] if len(args) > 1 else 60
        return kind, make_kernel(kind, length=length, angle=angle)
    raise ValueError(f"unknown kernel spec {text!r}")


@dataclass(frozen=True)
class DegradationSpec:
    """``kind`` is ``gaussian_noise``, ``impulse``, ``blur`` or ``mask``.

    ``blur`` uses ``kernel`` (a spec string such as ``motion:20:60``) and adds
    noise of std ``sigma`` after blurring.
    """

    kind: str
    sigma: float = 0.0
    rate: float = 0.0
    kernel: str = "uniform:9"

    def __post_init__(self):
        if self.kind not in ("gaussian_noise", "impulse", "blur", "mask"):
            raise ValueError(f"unknown degradation {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must lie in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def _exact_count(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    # Exactly round(rate * pixels) pixels, chosen without replacement.
    n = shape[0] * shape[1]
    sel = np.zeros(n, dtype=bool)
    sel[rng.choice(n, size=int(round(rate * n)), replace=False)] = True
    return sel.reshape(shape[:2])


def degrade(img, spec: DegradationSpec, seed: int | None = 0):
    """Apply a degradation; returns ``(degraded, info)``.

    ``info`` carries ground-truth artifacts: the mask ``omega`` for ``mask``,
    the corrupted-pixel map ``support`` for ``impulse`` and the ``kernel``
    for ``blur``.
    """
    img = np.asarray(img, dtype=float)
    rng = np.random.default_rng(seed)
    info: dict = {}
    if spec.kind == "gaussian_noise":
        out = img + spec.sigma * rng.standard_normal(img.shape) if spec.sigma > 0 else img.copy()
    elif spec.kind == "impulse":
        support = _exact_count(rng, img.shape, spec.rate)
        out = img.copy()
        out[support] = rng.uniform(0.0, 255.0, size=(int(support.sum()), img.shape[-1]))
        info["support"] = support
    elif spec.kind == "mask":
        missing = _exact_count(rng, img.shape, spec.rate)
        out = img.copy()
        out[missing] = 0.0
        info["omega"] = ~missing
    else:
        _, kernel = parse_kernel(spec.kernel)
        blurred = rgb_decode_raw(LinearOperator.convolution(kernel).apply(rgb_encode(img)))
        out = blurred + spec.sigma * rng.standard_normal(img.shape) if spec.sigma > 0 else blurred
        info["kernel"] = kernel
    return out, info


def rgb_decode_raw(q) -> np.ndarray:
    """Imaginary parts without clamping."""
    return np.asarray(q)[..., 1:].copy()


def synthetic_image(kind: str = "textured", size: int = 128, seed: int = 0) -> np.ndarray:
    """Deterministic RGB test images on the 0-255 scale.

    ``piecewise``: flat colored rectangles and a disc.  ``textured``: the same
    with smooth gradients and stripes.  ``two_tone``: two colors split by a
    diagonal edge with a few bars.  ``lowrank``: a sum of three separable
    color patterns.
    """
    rng = np.random.default_rng(seed)
    r, c = np.mgrid[0:size, 0:size] / size
    if kind == "two_tone":
        a, b = np.array([200.0, 60.0, 40.0]), np.array([30.0, 90.0, 210.0])
        sel = (r + 0.6 * c < 0.9) ^ ((np.floor(c * 8) % 2 == 0) & (r > 0.75))
        return np.where(sel[..., None], a, b)
    if kind == "lowrank":
        out = np.zeros((size, size, 3))
        for _ in range(3):
            u = 0.5 + 0.5 * np.sin(2 * np.pi * (rng.uniform(0.5, 3) * r[:, :1] + rng.uniform()))
            v = 0.5 + 0.5 * np.cos(2 * np.pi * (rng.uniform(0.5, 3) * c[:1, :] + rng.uniform()))
            out += (u * v)[..., None] * rng.uniform(20, 80, size=3)
        return np.clip(out, 0, 255)
    if kind not in ("piecewise", "textured"):
        raise ValueError(f"unknown synthetic image {kind!r}")
    img = np.empty((size, size, 3))
    img[:] = rng.uniform(40, 215, size=3)
    for _ in range(6):
        r0, c0 = rng.uniform(0, 0.8, size=2)
        h, w = rng.uniform(0.15, 0.5, size=2)
        img[(r >= r0) & (r < r0 + h) & (c >= c0) & (c < c0 + w)] = rng.uniform(0, 255, size=3)
    cr, cc, rad = rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.12, 0.25)
    img[(r - cr) ** 2 + (c - cc) ** 2 < rad**2] = rng.uniform(0, 255, size=3)
    if kind == "textured":
        img += 30 * np.sin(2 * np.pi * 3 * (r + 0.5 * c))[..., None] * np.array([1.0, -0.5, 0.3])
        stripes = (np.floor(c * 16) % 2 == 0) & (r > 0.55) & (r < 0.8)
        img[stripes] *= 0.6
        img += 40 * (r - 0.5)[..., None] * np.array([0.5, 1.0, -0.8])
    return np.clip(img, 0, 255)


# Seeds of the bundled images, per kind.
BUILTIN_SEEDS = {"textured": 3, "piecewise": 3, "two_tone": 0, "lowrank": 1}


def builtin_image(name: str) -> np.ndarray:
    """Bundled synthetic images named ``<kind><size>``, e.g. ``two_tone64`` or ``textured128``.

    On the command line they are addressed as ``builtin:<name>``.
    """
    match = re.fullmatch(r"([a-z_]+?)(\d+)", name)
    if not match or match.group(1) not in BUILTIN_SEEDS:
        raise KeyError(f"unknown builtin image {name!r}; use <kind><size> with kind in {sorted(BUILTIN_SEEDS)}")
    kind, size = match.group(1), int(match.group(2))
    if not 16 <= size <= 4096:
        raise KeyError(f"builtin image size must lie in [16, 4096], got {size}")
    return synthetic_image(kind, size, BUILTIN_SEEDS[kind])


@dataclass(frozen=True)
class RestoreResult:
    image: np.ndarray
    trace: object = None
    extra: dict = field(default_factory=dict)


def mc_restore(img, omega, mode: str = "global", cfg: AdmmConfig | None = None, spec: PatchGroupSpec | None = None):
    """Fill in missing pixels of an RGB image; ``omega`` is true where observed."""
    cfg = default_config("complete") if cfg is None else cfg
    y = rgb_encode(img)
    omega = np.asarray(omega, dtype=bool)
    if mode == "nss":
        spec = NSS_SPEC if spec is None else spec
    x, trace = solve_matrix_completion(y, omega, cfg, mode, spec)
    # Observed pixels are data; keep them exactly.
    x[omega] = y[omega]
    return RestoreResult(rgb_decode(x), trace)


def rpca_restore(img, mode: str = "global", cfg: AdmmConfig | None = None, spec: PatchGroupSpec | None = None):
    """Remove impulse noise by low-rank plus sparse decomposition."""
    cfg = default_config("rpca") if cfg is None else cfg
    y = rgb_encode(img)
    if mode == "nss":
        spec = NSS_SPEC if spec is None else spec
    x, z, trace = solve_rpca(y, cfg, mode, spec)
    return RestoreResult(rgb_decode(x), trace, {"sparse": z})


def deblur(
    img,
    kernel_kind: str,
    kernel,
    cfg: AdmmConfig | None = None,
    mode: str = "global",
    spec: PatchGroupSpec | None = None,
    regroup: bool = True,
):
    """Deconvolve a blurred, noisy RGB image.

    Without ``cfg`` the penalty and fidelity weights come from the preset
    for ``kernel_kind``.
    """
    cfg = default_config("deblur", kernel_kind) if cfg is None else cfg
    y = rgb_encode(img)
    op = LinearOperator.convolution(kernel)
    if mode == "nss":
        spec = DEBLUR_NSS_SPEC if spec is None else spec
        x, trace = solve_linear_inverse(y, op, cfg, "nss", spec, regroup=regroup)
    elif mode == "global":
        x, trace = solve_linear_inverse(y, op, cfg)
    else:
        raise ValueError("mode must be 'global' or 'nss'")
    return RestoreResult(rgb_decode(x), trace)

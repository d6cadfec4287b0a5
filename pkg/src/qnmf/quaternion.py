"""Quaternion scalars, dense quaternion matrices and the RGB encoding.

A quaternion matrix is stored as a float64 array of shape ``(m, n, 4)`` whose
last axis holds the interleaved components ``(w, x, y, z)`` of
``w + x i + y j + z k``.  All functions are pure and broadcast over leading
axes where that makes sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Quaternion:
    """A single quaternion ``w + x i + y j + z k``."""

    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.w, self.x, self.y, self.z)):
            raise ValueError("quaternion components must be finite")

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def to_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def conj(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __abs__(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return Quaternion.from_array(quat_mul(self.to_array(), other.to_array()))
        return Quaternion(self.w * other, self.x * other, self.y * other, self.z * other)

    def __rmul__(self, other):
        return self * other

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion(self.w - other.w, self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product of quaternion arrays of shape ``(..., 4)``.

    Operands broadcast against each other; the order matters since the
    product is not commutative.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    b0, b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def quat_conj(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def quat_modulus(a) -> np.ndarray:
    """Entrywise modulus; returns an array with the last axis dropped."""
    return np.sqrt(np.sum(np.square(np.asarray(a, dtype=float)), axis=-1))


def _check_qmatrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 3 or a.shape[-1] != 4:
        raise ValueError(f"{name} must have shape (m, n, 4), got {a.shape}")
    return a


def qzeros(m: int, n: int) -> np.ndarray:
    return np.zeros((m, n, 4))


def qeye(n: int) -> np.ndarray:
    out = np.zeros((n, n, 4))
    out[np.arange(n), np.arange(n), 0] = 1.0
    return out


def qrandom(m: int, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Quaternion matrix with i.i.d. standard normal components."""
    rng = np.random.default_rng() if rng is None else rng
    return rng.standard_normal((m, n, 4))


def from_real(a) -> np.ndarray:
    """Embed a real matrix as a quaternion matrix with zero imaginary parts."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape + (4,))
    out[..., 0] = a
    return out


# The product is computed through the complex (Cayley-Dickson) split
# A = A1 + A2 j, which maps it to four complex matrix products.
def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return a[..., 0] + 1j * a[..., 1], a[..., 2] + 1j * a[..., 3]


def _merge(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    return np.stack([c1.real, c1.imag, c2.real, c2.imag], axis=-1)


def qmat_mul(a, b) -> np.ndarray:
    """Matrix product ``A B`` over the quaternion ring.

    Supports stacks of matrices: shapes ``(..., m, k, 4)`` and ``(..., k, n, 4)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim < 3 or b.ndim < 3 or a.shape[-1] != 4 or b.shape[-1] != 4:
        raise ValueError("operands must be quaternion matrices of shape (..., m, n, 4)")
    if a.shape[-2] != b.shape[-3]:
        raise ValueError(f"dimension mismatch: {a.shape[:-1]} @ {b.shape[:-1]}")
    a1, a2 = _split(a)
    b1, b2 = _split(b)
    # (A1 + A2 j)(B1 + B2 j) = (A1 B1 - A2 conj(B2)) + (A1 B2 + A2 conj(B1)) j
    c1 = a1 @ b1 - a2 @ b2.conj()
    c2 = a1 @ b2 + a2 @ b1.conj()
    return _merge(c1, c2)


def hermitian_transpose(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.swapaxes(quat_conj(a), -3, -2)


hconj = hermitian_transpose


def frobenius_norm(a) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(a, dtype=float)))))


def l1_norm(a) -> float:
    """Sum of entrywise quaternion moduli."""
    return float(np.sum(quat_modulus(a)))


def real_trace(a) -> float:
    a = _check_qmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"trace needs a square matrix, got {a.shape[:2]}")
    return float(np.trace(a[..., 0]))


def qinner(a, b) -> float:
    """Real inner product ``Re tr(A^H B)``, equal to the componentwise dot product."""
    return float(np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float)))


def hadamard(a, mask) -> np.ndarray:
    """Entrywise product of a quaternion matrix with a real mask."""
    a = np.asarray(a, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != a.shape[:-1]:
        raise ValueError(f"mask shape {mask.shape} does not match matrix {a.shape[:-1]}")
    return a * mask[..., None]


def rgb_encode(img) -> np.ndarray:
    """Encode an ``(H, W, 3)`` RGB image as the pure quaternion matrix R i + G j + B k."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {img.shape}")
    out = np.zeros(img.shape[:2] + (4,))
    out[..., 1:] = img
    return out


def rgb_decode(q, *, with_diagnostic: bool = False):
    """Drop the real part and clamp channels to [0, 255].

    With ``with_diagnostic=True`` also return ``max |w|``, which measures how
    far the input was from a pure quaternion matrix.
    """
    q = _check_qmatrix(q)
    img = np.clip(q[..., 1:], 0.0, 255.0)
    if with_diagnostic:
        return img, float(np.max(np.abs(q[..., 0]), initial=0.0))
    return img

"""Synthetic solver instances used by several test modules."""

import numpy as np
from oracles import low_rank_quaternion

from qnmf.imaging import make_kernel, synthetic_image
from qnmf.quaternion import rgb_encode
from qnmf.solvers import AdmmConfig, LinearOperator

MC_CFG = AdmmConfig(lam=100.0)
RPCA_CFG = AdmmConfig(lam=500.0, rho=40.0)
DEBLUR_CFG = AdmmConfig(gamma=115.0, beta0=8.5, lam=1.0)


def mc_instance(seed=0, size=50, rank=5, observed=0.5):
    """Rank-``rank`` quaternion matrix with exactly ``observed`` of its entries kept."""
    rng = np.random.default_rng(seed)
    truth = low_rank_quaternion(size, size, rank, rng)
    omega = np.zeros(size * size, dtype=bool)
    omega[rng.permutation(size * size)[: int(round(observed * size * size))]] = True
    omega = omega.reshape(size, size)
    return truth, omega, truth * omega[..., None]


def rpca_instance(seed=0, size=50, rank=5, rate=0.05, magnitude=100.0):
    """Low-rank matrix plus impulses of fixed modulus along random quaternion directions."""
    rng = np.random.default_rng(seed)
    truth = low_rank_quaternion(size, size, rank, rng)
    count = int(round(rate * size * size))
    support = np.zeros(size * size, dtype=bool)
    support[rng.permutation(size * size)[:count]] = True
    support = support.reshape(size, size)
    dirs = rng.standard_normal((count, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y = truth.copy()
    y[support] += magnitude * dirs
    return truth, support, y


def deblur_instance(seed=0, sigma=15.0):
    """64x64 two-tone image under the 9x9 uniform blur plus Gaussian noise."""
    clean = synthetic_image("two_tone", 64, 0)
    op = LinearOperator.convolution(make_kernel("uniform"))
    rng = np.random.default_rng(seed)
    y = op.apply(rgb_encode(clean))
    y[..., 1:] += sigma * rng.standard_normal(clean.shape)
    return rgb_encode(clean), op, y

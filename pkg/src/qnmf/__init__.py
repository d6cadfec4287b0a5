"""Color image restoration with quaternion low-rank models.

Quaternion matrices are float arrays of shape ``(m, n, 4)`` holding
``(w, x, y, z)``; an RGB pixel is the pure quaternion ``(0, R, G, B)``.
"""

from .imaging import (
    DegradationSpec,
    DenoiseSchedule,
    RestoreResult,
    builtin_image,
    deblur,
    default_config,
    degrade,
    make_kernel,
    mc_restore,
    nss_denoise,
    rpca_restore,
    schedule_lookup,
    synthetic_image,
)
from .linalg import QSVDFactors, SVDNonConvergence, complex_adjoint, jacobi_svd, qsvd, qsvd_reconstruct, qsvd_values
from .metrics import QualityReport, estimate_noise, psnr, quality, ssim
from .patches import PatchGroupSpec, aggregate_groups, block_match, extract_group
from .quaternion import Quaternion, frobenius_norm, qmat_mul, quat_mul, real_trace, rgb_decode, rgb_encode
from .shrinkage import ShrinkParams, ShrinkResult, l1_minus_l2_prox, qnmf_denoise, qnmf_shrink, spectral_prox
from .solvers import (
    AdmmConfig,
    LinearOperator,
    SolverDiverged,
    SolverTrace,
    convergence_report,
    solve_linear_inverse,
    solve_matrix_completion,
    solve_rpca,
)

__version__ = "0.1.0"

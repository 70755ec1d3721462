"""Orthogonal polar factors, exact (SVD) and via Newton-Schulz iteration.

The exact path is the oracle layer: Polar(M) = U V^T restricted to the
active spectrum of M (a partial isometry when M is rank deficient). The
iterative path mirrors what large-scale orthogonalized-momentum optimizers
run in practice and is deliberately approximate.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import DegenerateInput, InvalidInput, IterationDiverged

# Widely used quintic coefficients for momentum orthogonalization; the
# iteration contracts singular values into a band around 1 rather than
# converging to exactly 1.
QUINTIC_COEFFS = (3.4445, -4.7750, 2.0315)

# Singular values below this fraction of sigma_1 count as numerically zero.
DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True)
class NewtonSchulzConfig:
    """Settings for the Newton-Schulz polar iteration.

    variant 'cubic' uses X <- 1.5 X - 0.5 X X^T X (exact fixed point at
    orthogonality); 'quintic' uses X <- a X + b X X^T X + c (X X^T)^2 X
    with `quintic_coeffs`. With `pre_normalize` the input is scaled by
    1 / (||X||_F + 1e-7) so the spectral radius starts below 1.
    """

    iterations: int = 5
    variant: str = "quintic"
    quintic_coeffs: tuple = QUINTIC_COEFFS
    pre_normalize: bool = True

    def __post_init__(self):
        if not 1 <= self.iterations <= 50:
            raise InvalidInput(f"iterations must be in [1, 50], got {self.iterations}")
        if self.variant not in ("cubic", "quintic"):
            raise InvalidInput(f"unknown Newton-Schulz variant {self.variant!r}")
        if len(self.quintic_coeffs) != 3:
            raise InvalidInput("quintic_coeffs must have three entries")


def _require_nonzero(arr, op):
    if not np.any(arr):
        raise DegenerateInput(f"{op}: zero matrix has no polar factor")


def polar_exact(m) -> np.ndarray:
    """Exact orthogonal polar factor U V^T of a nonzero matrix.

    Zero singular directions are dropped, so the result is a partial
    isometry of the same rank as the input.
    """
    arr = matops.as_matrix(m)
    _require_nonzero(arr, "polar_exact")
    f = matops.svd(arr)
    keep = f.sigma > 1e-12 * f.sigma[0]
    return f.u[:, keep] @ f.vt[keep, :]


def polar_ns(m, cfg: NewtonSchulzConfig = NewtonSchulzConfig()) -> np.ndarray:
    """Approximate polar factor via Newton-Schulz iteration.

    Runs in the tall orientation (inputs with fewer rows than columns are
    transposed internally). Raises IterationDiverged when the iterate's
    Frobenius norm exceeds 10 sqrt(min(m, n)).
    """
    arr = matops.as_matrix(m)
    _require_nonzero(arr, "polar_ns")
    transposed = arr.shape[0] < arr.shape[1]
    x = arr.T.copy() if transposed else arr.copy()
    if cfg.pre_normalize:
        x /= np.linalg.norm(x) + 1e-7
    limit = 10.0 * math.sqrt(min(arr.shape))
    a, b, c = cfg.quintic_coeffs
    for _ in range(cfg.iterations):
        gram = x.T @ x
        if cfg.variant == "cubic":
            x = 1.5 * x - 0.5 * (x @ gram)
        else:
            x = a * x + x @ (b * gram + c * (gram @ gram))
        if np.linalg.norm(x) > limit:
            raise IterationDiverged("polar_ns: iterate norm exceeded divergence limit")
    return x.T if transposed else x


def condition_number(m, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """sigma_1 / sigma_k over singular values exceeding rank_tol * sigma_1.

    Directions numerically absent from the input (below the tolerance) are
    excluded so the ratio reflects the active spectrum.
    """
    arr = matops.as_matrix(m)
    _require_nonzero(arr, "condition_number")
    sigma = matops.singular_values(arr)
    active = sigma[sigma > rank_tol * sigma[0]]
    if active.size == 0:  # unreachable for rank_tol < 1; kept as a guard
        return math.inf
    return float(sigma[0] / active[-1])

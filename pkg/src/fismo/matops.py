"""Dense matrix kernels: validation, norms, SVD, and SPD inverse square roots.

Everything operates on plain float64 numpy arrays; matrices are 2-D,
SPD matrices are square 2-D. All functions are pure.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NearSingular, ShapeError

# Relative symmetry tolerance for SPD inputs.
SYM_TOL = 1e-12

# Eigenvalues below this fraction of the trace mark an SPD matrix as
# numerically singular for inverse square roots.
NEAR_SINGULAR_TOL = 1e-14


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return `a` as a finite float64 2-D array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name}: entries must be finite")
    return arr


def check_spd(a, name: str = "matrix") -> np.ndarray:
    """Validate that `a` is symmetric positive definite.

    Symmetry is required within SYM_TOL * max(1, ||A||_F) per entry;
    positive definiteness is checked via Cholesky.
    """
    arr = as_matrix(a, name)
    d = arr.shape[0]
    if arr.shape[1] != d:
        raise ShapeError(f"{name}: SPD matrix must be square, got {arr.shape}")
    scale = max(1.0, float(np.linalg.norm(arr)))
    if np.max(np.abs(arr - arr.T)) > SYM_TOL * scale:
        raise InvalidInput(f"{name}: not symmetric within tolerance")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise InvalidInput(f"{name}: not positive definite") from None
    return arr


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD a = u @ diag(sigma) @ vt with sigma nonincreasing."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def svd(a) -> SvdFactors:
    """Thin SVD with a deterministic sign convention.

    The first nonzero entry of every left singular vector is made
    positive (the matching row of vt is flipped with it), so repeated
    calls on equal inputs return identical factors.
    """
    arr = as_matrix(a)
    u, sigma, vt = np.linalg.svd(arr, full_matrices=False)
    for k in range(sigma.shape[0]):
        col = u[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        j = nz[0] if nz.size else int(np.argmax(np.abs(col)))
        if col[j] < 0.0:
            u[:, k] = -u[:, k]
            vt[k, :] = -vt[k, :]
    return SvdFactors(u=u, sigma=sigma, vt=vt)


def singular_values(a) -> np.ndarray:
    """Singular values of `a`, nonincreasing."""
    return np.linalg.svd(as_matrix(a), compute_uv=False)


def norm(a, kind: str = "frobenius") -> float:
    """Matrix norm: 'frobenius', 'spectral' (sigma_1) or 'nuclear' (sum sigma_i)."""
    arr = as_matrix(a)
    if kind == "frobenius":
        return float(np.linalg.norm(arr))
    if kind in ("spectral", "nuclear"):
        sigma = np.linalg.svd(arr, compute_uv=False)
        return float(sigma[0]) if kind == "spectral" else float(np.sum(sigma))
    raise InvalidInput(f"unknown norm kind {kind!r}")


def frobenius_inner(a, b) -> float:
    """Frobenius inner product tr(A^T B)."""
    arr_a = as_matrix(a, "a")
    arr_b = as_matrix(b, "b")
    if arr_a.shape != arr_b.shape:
        raise ShapeError(f"shape mismatch: {arr_a.shape} vs {arr_b.shape}")
    return float(np.sum(arr_a * arr_b))


def sym(a) -> np.ndarray:
    """Symmetric part (A + A^T) / 2 of a square matrix."""
    arr = as_matrix(a)
    if arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"sym requires a square matrix, got {arr.shape}")
    return 0.5 * (arr + arr.T)


def spd_eigh(a, name: str = "matrix"):
    """Eigendecomposition of an SPD matrix with the near-singular guard.

    Returns (eigenvalues, eigenvectors) with eigenvalues clamped below at
    NEAR_SINGULAR_TOL * trace / dim. Raises NearSingular when the smallest
    eigenvalue falls under NEAR_SINGULAR_TOL * trace.
    """
    arr = check_spd(a, name)
    w, v = np.linalg.eigh(arr)
    trace = float(np.trace(arr))
    if w[0] < NEAR_SINGULAR_TOL * trace:
        raise NearSingular(
            f"{name}: smallest eigenvalue {w[0]:.3e} below {NEAR_SINGULAR_TOL:g} * trace"
        )
    w = np.maximum(w, NEAR_SINGULAR_TOL * trace / arr.shape[0])
    return w, v


def inv_sqrt(a) -> np.ndarray:
    """Inverse square root R of an SPD matrix, with R A R = I.

    Computed by symmetric eigendecomposition; eigenvalues are clamped
    below at NEAR_SINGULAR_TOL * trace / dim before the square root.
    """
    w, v = spd_eigh(a, "inv_sqrt input")
    r = (v / np.sqrt(w)) @ v.T
    return 0.5 * (r + r.T)


def spd_inverse_pair(a):
    """(A^{-1}, A^{-1/2}) from one eigendecomposition of SPD `a`."""
    w, v = spd_eigh(a, "spd input")
    inv = (v / w) @ v.T
    inv_root = (v / np.sqrt(w)) @ v.T
    return 0.5 * (inv + inv.T), 0.5 * (inv_root + inv_root.T)

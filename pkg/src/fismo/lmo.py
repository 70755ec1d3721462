"""Closed-form minimization of <G, dW> over the preconditioned spectral ball.

`solve_lmo` returns the exact optimizer -eta P^-1/2 Polar(G~) Q^-1/2 with
G~ = P^-1/2 G Q^-1/2; `feasible_oracle` certifies optimality by Monte-Carlo
sampling of feasible points. This layer always uses the exact (SVD) polar
factor; approximate orthogonalization lives in the optimizer module.
"""

from dataclasses import dataclass

import numpy as np

from . import matops
from .errors import DegenerateInput, InvalidInput
from .kron_fisher import PreconditionerPair, whiten
from .polar import polar_exact


@dataclass(frozen=True)
class LmoSolution:
    """Optimal step, its objective value, and Polar(G~) for diagnostics."""

    delta_w: np.ndarray
    objective_value: float
    whitened_polar: np.ndarray


def solve_lmo(g, pair: PreconditionerPair, eta: float) -> LmoSolution:
    """Minimize <G, dW> subject to ||P^1/2 dW Q^1/2||_2 <= eta, in closed form."""
    if eta <= 0.0:
        raise InvalidInput(f"radius eta must be positive, got {eta}")
    arr = matops.as_matrix(g, "gradient")
    if not np.any(arr):
        raise DegenerateInput("solve_lmo: zero gradient")
    g_tilde = whiten(pair, arr)
    o = polar_exact(g_tilde)
    delta_w = -eta * (pair.p_inv_sqrt @ o @ pair.q_inv_sqrt)
    objective = -eta * matops.norm(g_tilde, "nuclear")
    return LmoSolution(delta_w=delta_w, objective_value=objective, whitened_polar=o)


def sample_feasible(rng, m: int, n: int, eta: float, count: int) -> np.ndarray:
    """Random points with spectral norm <= eta, shape (count, m, n).

    Built as eta * U diag(u) V^T with u_i uniform on [0, 1] and U, V
    orthogonal factors from QR of Gaussian matrices, covering both the
    boundary and the interior of the ball.
    """
    r = min(m, n)
    qu, ru = np.linalg.qr(rng.standard_normal((count, m, m)))
    qv, rv = np.linalg.qr(rng.standard_normal((count, n, n)))
    su = np.sign(np.einsum("bii->bi", ru))
    sv = np.sign(np.einsum("bii->bi", rv))
    su[su == 0] = 1.0
    sv[sv == 0] = 1.0
    qu = qu * su[:, None, :]
    qv = qv * sv[:, None, :]
    scales = eta * rng.uniform(0.0, 1.0, size=(count, r))
    left = qu[:, :, :r] * scales[:, None, :]
    return left @ np.transpose(qv[:, :, :r], (0, 2, 1))


def feasible_oracle(
    g,
    pair: PreconditionerPair,
    eta: float,
    trials: int,
    seed: int = 0,
    candidates=(),
) -> float:
    """Minimum of <G, dW> over `trials` feasible points.

    `candidates` are preconditioned-space points Phi (||Phi||_2 <= eta)
    evaluated first and counted toward `trials`; the remainder is drawn
    randomly. Always an upper certificate: the result is >= the closed-form
    optimum of solve_lmo.
    """
    if trials < 1:
        raise InvalidInput(f"trials must be >= 1, got {trials}")
    arr = matops.as_matrix(g, "gradient")
    m, n = arr.shape
    phis = [matops.as_matrix(c, "candidate") for c in candidates][:trials]
    n_random = trials - len(phis)
    if n_random > 0:
        rng = np.random.default_rng(seed)
        random_phis = sample_feasible(rng, m, n, eta, n_random)
        stack = np.concatenate([np.stack(phis), random_phis]) if phis else random_phis
    else:
        stack = np.stack(phis)
    steps = pair.p_inv_sqrt @ stack @ pair.q_inv_sqrt
    values = np.einsum("ij,bij->b", arr, steps)
    return float(values.min())

"""Kronecker-factored Fisher machinery.

Covers the log-det divergence between SPD matrices, the empirical
objective whose minimizers define the optimal left/right preconditioners,
the coupled fixed-point maps, and the online Gauss-Seidel preconditioner
update (EMA smoothing + identity damping + trace normalization) used by
the optimizer at every step.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import matops
from .errors import InvalidInput, ShapeError


def logdet_divergence(a, b) -> float:
    """Log-det divergence D_ld(A || B) = tr(B^-1 A) - log det(B^-1 A) - d.

    Nonnegative for SPD arguments, zero iff A = B.
    """
    arr_a = matops.check_spd(a, "a")
    arr_b = matops.check_spd(b, "b")
    if arr_a.shape != arr_b.shape:
        raise ShapeError(f"dimension mismatch: {arr_a.shape} vs {arr_b.shape}")
    d = arr_a.shape[0]
    trace_term = float(np.trace(np.linalg.solve(arr_b, arr_a)))
    _, logdet_a = np.linalg.slogdet(arr_a)
    _, logdet_b = np.linalg.slogdet(arr_b)
    return trace_term - (logdet_a - logdet_b) - d


def _check_samples(samples, m, n):
    if len(samples) == 0:
        raise InvalidInput("samples must be nonempty")
    out = []
    for g in samples:
        arr = matops.as_matrix(g, "sample")
        if arr.shape != (m, n):
            raise ShapeError(f"sample shape {arr.shape} != ({m}, {n})")
        out.append(arr)
    return out


def objective_J(p, q, samples, mu: float) -> float:
    """Empirical Kronecker-approximation objective.

    mean_i tr(P^-1 G_i Q^-1 G_i^T) + mu tr(P^-1) tr(Q^-1)
    + n log det P + m log det Q,
    the part of D_ld(F + mu I || Q kron P) that depends on (P, Q).
    """
    arr_p = matops.check_spd(p, "p")
    arr_q = matops.check_spd(q, "q")
    m, n = arr_p.shape[0], arr_q.shape[0]
    mats = _check_samples(samples, m, n)
    p_inv = np.linalg.inv(arr_p)
    q_inv = np.linalg.inv(arr_q)
    data_term = float(
        np.mean([np.sum((p_inv @ g @ q_inv) * g) for g in mats])
    )
    _, logdet_p = np.linalg.slogdet(arr_p)
    _, logdet_q = np.linalg.slogdet(arr_q)
    return (
        data_term
        + mu * float(np.trace(p_inv)) * float(np.trace(q_inv))
        + n * logdet_p
        + m * logdet_q
    )


def fixed_point_P(q, samples, mu: float) -> np.ndarray:
    """Unique minimizer over P for fixed Q:
    (1/n) mean[G Q^-1 G^T] + (mu tr(Q^-1) / n) I."""
    arr_q = matops.check_spd(q, "q")
    n = arr_q.shape[0]
    if len(samples) == 0:
        raise InvalidInput("samples must be nonempty")
    m = matops.as_matrix(samples[0], "sample").shape[0]
    mats = _check_samples(samples, m, n)
    q_inv = np.linalg.inv(arr_q)
    acc = np.zeros((m, m))
    for g in mats:
        acc += g @ q_inv @ g.T
    p_star = acc / (len(mats) * n) + (mu * float(np.trace(q_inv)) / n) * np.eye(m)
    return matops.sym(p_star)


def fixed_point_Q(p, samples, mu: float) -> np.ndarray:
    """Unique minimizer over Q for fixed P:
    (1/m) mean[G^T P^-1 G] + (mu tr(P^-1) / m) I."""
    arr_p = matops.check_spd(p, "p")
    m = arr_p.shape[0]
    if len(samples) == 0:
        raise InvalidInput("samples must be nonempty")
    n = matops.as_matrix(samples[0], "sample").shape[1]
    mats = _check_samples(samples, m, n)
    p_inv = np.linalg.inv(arr_p)
    acc = np.zeros((n, n))
    for g in mats:
        acc += g.T @ p_inv @ g
    q_star = acc / (len(mats) * m) + (mu * float(np.trace(p_inv)) / m) * np.eye(n)
    return matops.sym(q_star)


@dataclass(frozen=True)
class PreconditionerPair:
    """Coupled (P, Q) preconditioner state with cached inverses.

    Invariants maintained by `update_preconditioners`: both factors SPD,
    tr(P) = m and tr(Q) = n, caches consistent with the factors.
    """

    p: np.ndarray
    q: np.ndarray
    p_inv: np.ndarray
    q_inv: np.ndarray
    p_inv_sqrt: np.ndarray
    q_inv_sqrt: np.ndarray
    mu: float
    gamma: float

    @property
    def m(self) -> int:
        return self.p.shape[0]

    @property
    def n(self) -> int:
        return self.q.shape[0]


def make_pair(p, q, mu: float, gamma: float) -> PreconditionerPair:
    """Build a PreconditionerPair from explicit SPD factors."""
    if mu <= 0.0:
        raise InvalidInput(f"damping mu must be positive, got {mu}")
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInput(f"EMA decay gamma must lie in [0, 1], got {gamma}")
    arr_p = matops.check_spd(p, "p")
    arr_q = matops.check_spd(q, "q")
    p_inv, p_inv_sqrt = matops.spd_inverse_pair(arr_p)
    q_inv, q_inv_sqrt = matops.spd_inverse_pair(arr_q)
    return PreconditionerPair(
        p=arr_p, q=arr_q, p_inv=p_inv, q_inv=q_inv,
        p_inv_sqrt=p_inv_sqrt, q_inv_sqrt=q_inv_sqrt, mu=mu, gamma=gamma,
    )


def identity_pair(m: int, n: int, mu: float = 0.01, gamma: float = 0.99) -> PreconditionerPair:
    """Initial state P = I_m, Q = I_n."""
    return make_pair(np.eye(m), np.eye(n), mu=mu, gamma=gamma)


def update_preconditioners(state: PreconditionerPair, g) -> PreconditionerPair:
    """One Gauss-Seidel preconditioner step.

    L = (1/n) G Q^-1 G^T + mu (tr P / m) I; P <- sym(trace-normalized EMA);
    then R = (1/m) G^T P^-1 G + mu (tr Q / n) I with the *new* P, and the
    same EMA + normalization for Q. Caches are refreshed from fresh
    eigendecompositions. Inputs are not mutated.
    """
    arr = matops.as_matrix(g, "gradient")
    m, n = state.m, state.n
    if arr.shape != (m, n):
        raise ShapeError(f"gradient shape {arr.shape} != ({m}, {n})")
    gamma, mu = state.gamma, state.mu
    if gamma == 1.0:
        return state  # EMA frozen: P, Q and caches unchanged

    l_t = (arr @ state.q_inv @ arr.T) / n + (mu * np.trace(state.p) / m) * np.eye(m)
    p_tilde = gamma * state.p + (1.0 - gamma) * l_t
    tr_p = float(np.trace(p_tilde))
    assert tr_p > 0.0, "trace of EMA'd left factor must stay positive"
    p_new = matops.sym((m / tr_p) * p_tilde)
    p_inv, p_inv_sqrt = matops.spd_inverse_pair(p_new)

    r_t = (arr.T @ p_inv @ arr) / m + (mu * np.trace(state.q) / n) * np.eye(n)
    q_tilde = gamma * state.q + (1.0 - gamma) * r_t
    tr_q = float(np.trace(q_tilde))
    assert tr_q > 0.0, "trace of EMA'd right factor must stay positive"
    q_new = matops.sym((n / tr_q) * q_tilde)
    q_inv, q_inv_sqrt = matops.spd_inverse_pair(q_new)

    return replace(
        state, p=p_new, q=q_new, p_inv=p_inv, q_inv=q_inv,
        p_inv_sqrt=p_inv_sqrt, q_inv_sqrt=q_inv_sqrt,
    )


def kpq(state: PreconditionerPair) -> float:
    """Geometry distortion factor ||P^-1/2||_2 * ||Q^-1/2||_2 (>= 1/sqrt(mn))."""
    p_top = float(np.linalg.eigvalsh(state.p_inv_sqrt)[-1])
    q_top = float(np.linalg.eigvalsh(state.q_inv_sqrt)[-1])
    return p_top * q_top


def whiten(state: PreconditionerPair, g) -> np.ndarray:
    """Preconditioned coordinates P^-1/2 G Q^-1/2 of a gradient."""
    arr = matops.as_matrix(g, "gradient")
    if arr.shape != (state.m, state.n):
        raise ShapeError(f"gradient shape {arr.shape} != ({state.m}, {state.n})")
    return state.p_inv_sqrt @ arr @ state.q_inv_sqrt

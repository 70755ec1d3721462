"""Step rules sharing one functional interface.

FISMO keeps a Kronecker-factored Fisher preconditioner pair, whitens each
gradient, accumulates momentum in the whitened space, and steps along the
orthogonal polar factor mapped back through the preconditioners. Muon is
the same orthogonalized-momentum scheme without preconditioning; AdamW and
SGD with momentum are the element-wise baselines.

States are immutable; every step returns a fresh state and never mutates
its inputs, so a failed step leaves the caller's state untouched.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import matops
from .errors import InvalidInput, ShapeError
from .kron_fisher import (
    PreconditionerPair,
    identity_pair,
    update_preconditioners,
    whiten,
)
from .polar import NewtonSchulzConfig, polar_exact, polar_ns

# Below this momentum norm the polar factor is undefined and the weight
# update is skipped.
MOMENTUM_EPS = 1e-12


def _check_grad(g, shape):
    arr = np.asarray(g, dtype=np.float64)
    if arr.shape != shape:
        raise ShapeError(f"gradient shape {arr.shape} != {shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("gradient has non-finite entries")
    return arr


def _polar(m, backend, cfg):
    if backend == "exact":
        return polar_exact(m)
    if backend == "newton_schulz":
        return polar_ns(m, cfg)
    raise InvalidInput(f"unknown polar backend {backend!r}")


def coupled_gamma(eta: float, c_gamma: float = 1.0) -> float:
    """EMA decay tied to the step size: 1 - gamma = min(0.5, c_gamma * eta)."""
    return 1.0 - min(0.5, c_gamma * eta)


# ----------------------------------------------------------------- FISMO

@dataclass(frozen=True)
class FismoState:
    """Per-parameter FISMO state; momentum lives in whitened coordinates."""

    weights: np.ndarray
    momentum: np.ndarray
    precond: PreconditionerPair
    beta: float
    eta: float
    step_count: int
    polar_cfg: NewtonSchulzConfig
    polar_backend: str
    weight_decay: float = 0.0


def fismo_init(
    weights,
    eta: float = 0.02,
    beta: float = 0.95,
    mu: float = 0.01,
    gamma: float | None = None,
    c_gamma: float = 1.0,
    polar_backend: str = "newton_schulz",
    polar_cfg: NewtonSchulzConfig = NewtonSchulzConfig(),
    weight_decay: float = 0.0,
) -> FismoState:
    """Fresh FISMO state: P = I, Q = I, zero momentum.

    gamma=None couples the EMA decay to the step size via
    1 - gamma = min(0.5, c_gamma * eta).
    """
    w = matops.as_matrix(weights, "weights")
    if not 0.0 <= beta < 1.0:
        raise InvalidInput(f"beta must lie in [0, 1), got {beta}")
    if eta <= 0.0:
        raise InvalidInput(f"eta must be positive, got {eta}")
    if gamma is None:
        gamma = coupled_gamma(eta, c_gamma)
    m, n = w.shape
    return FismoState(
        weights=w.copy(),
        momentum=np.zeros((m, n)),
        precond=identity_pair(m, n, mu=mu, gamma=gamma),
        beta=beta,
        eta=eta,
        step_count=0,
        polar_cfg=polar_cfg,
        polar_backend=polar_backend,
        weight_decay=weight_decay,
    )


def fismo_step(state: FismoState, g) -> FismoState:
    """One FISMO step.

    Preconditioner update (Gauss-Seidel, EMA, damping, trace pinning),
    then whiten, momentum, polar, and the back-mapped weight update. When
    the momentum norm is below MOMENTUM_EPS the weight update is skipped
    (the polar factor is undefined) but preconditioners, momentum, and the
    step counter still advance.
    """
    arr = _check_grad(g, state.weights.shape)
    precond = update_preconditioners(state.precond, arr)
    g_tilde = whiten(precond, arr)
    momentum = state.beta * state.momentum + (1.0 - state.beta) * g_tilde
    if np.linalg.norm(momentum) < MOMENTUM_EPS:
        return replace(
            state, momentum=momentum, precond=precond, step_count=state.step_count + 1
        )
    o = _polar(momentum, state.polar_backend, state.polar_cfg)
    delta_w = precond.p_inv_sqrt @ o @ precond.q_inv_sqrt
    weights = state.weights * (1.0 - state.eta * state.weight_decay) - state.eta * delta_w
    return FismoState(
        weights=weights,
        momentum=momentum,
        precond=precond,
        beta=state.beta,
        eta=state.eta,
        step_count=state.step_count + 1,
        polar_cfg=state.polar_cfg,
        polar_backend=state.polar_backend,
        weight_decay=state.weight_decay,
    )


# -------------------------------------------------------------- baselines

@dataclass(frozen=True)
class BaselineState:
    """State for the muon / adamw / sgd_momentum step rules."""

    kind: str
    weights: np.ndarray
    lr: float
    step_count: int = 0
    momentum: np.ndarray | None = None
    exp_avg: np.ndarray | None = None
    exp_avg_sq: np.ndarray | None = None
    beta: float = 0.95
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    polar_cfg: NewtonSchulzConfig = NewtonSchulzConfig()
    polar_backend: str = "newton_schulz"


def muon_init(
    weights,
    lr: float = 0.02,
    beta: float = 0.95,
    polar_backend: str = "newton_schulz",
    polar_cfg: NewtonSchulzConfig = NewtonSchulzConfig(),
    weight_decay: float = 0.0,
) -> BaselineState:
    w = matops.as_matrix(weights, "weights")
    return BaselineState(
        kind="muon", weights=w.copy(), lr=lr, momentum=np.zeros_like(w), beta=beta,
        polar_cfg=polar_cfg, polar_backend=polar_backend, weight_decay=weight_decay,
    )


def adamw_init(
    weights, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> BaselineState:
    w = np.asarray(weights, dtype=np.float64).copy()
    return BaselineState(
        kind="adamw", weights=w, lr=lr, exp_avg=np.zeros_like(w),
        exp_avg_sq=np.zeros_like(w), betas=tuple(betas), eps=eps,
        weight_decay=weight_decay,
    )


def sgd_init(weights, lr: float = 0.1, momentum: float = 0.9,
             weight_decay: float = 0.0) -> BaselineState:
    w = np.asarray(weights, dtype=np.float64).copy()
    return BaselineState(
        kind="sgd_momentum", weights=w, lr=lr, momentum=np.zeros_like(w),
        beta=momentum, weight_decay=weight_decay,
    )


def muon_step(state: BaselineState, g) -> BaselineState:
    """Orthogonalized momentum: M = beta M + (1-beta) g, W -= lr Polar(M)."""
    arr = _check_grad(g, state.weights.shape)
    momentum = state.beta * state.momentum + (1.0 - state.beta) * arr
    if np.linalg.norm(momentum) < MOMENTUM_EPS:
        return replace(state, momentum=momentum, step_count=state.step_count + 1)
    o = _polar(momentum, state.polar_backend, state.polar_cfg)
    weights = state.weights * (1.0 - state.lr * state.weight_decay) - state.lr * o
    return replace(
        state, weights=weights, momentum=momentum, step_count=state.step_count + 1
    )


def adamw_step(state: BaselineState, g) -> BaselineState:
    """Element-wise moment EMAs with bias correction and decoupled decay."""
    arr = _check_grad(g, state.weights.shape)
    beta1, beta2 = state.betas
    t = state.step_count + 1
    exp_avg = beta1 * state.exp_avg + (1.0 - beta1) * arr
    exp_avg_sq = beta2 * state.exp_avg_sq + (1.0 - beta2) * arr * arr
    m_hat = exp_avg / (1.0 - beta1**t)
    v_hat = exp_avg_sq / (1.0 - beta2**t)
    update = m_hat / (np.sqrt(v_hat) + state.eps)
    weights = state.weights * (1.0 - state.lr * state.weight_decay) - state.lr * update
    return replace(
        state, weights=weights, exp_avg=exp_avg, exp_avg_sq=exp_avg_sq, step_count=t
    )


def sgd_step(state: BaselineState, g) -> BaselineState:
    """Heavy-ball momentum: buf = beta buf + g, W -= lr buf."""
    arr = _check_grad(g, state.weights.shape)
    buf = state.beta * state.momentum + arr
    weights = state.weights * (1.0 - state.lr * state.weight_decay) - state.lr * buf
    return replace(
        state, weights=weights, momentum=buf, step_count=state.step_count + 1
    )


_BASELINE_STEPS = {"muon": muon_step, "adamw": adamw_step, "sgd_momentum": sgd_step}


def step(state, g):
    """Uniform dispatch used by the harness."""
    if isinstance(state, FismoState):
        return fismo_step(state, g)
    if isinstance(state, BaselineState):
        return _BASELINE_STEPS[state.kind](state, g)
    raise InvalidInput(f"unknown optimizer state type {type(state).__name__}")

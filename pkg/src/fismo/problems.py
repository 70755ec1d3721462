"""Desk-scale training problems with exact gradient oracles.

Each problem carries its parameters as a tuple of float64 arrays
(single-matrix problems use a 1-tuple), a full-data loss/gradient pair,
and an i.i.d.-with-replacement mini-batch sampler, plus whatever constants
are derivable: the Frobenius smoothness constant L, the optimal value,
and a per-sample gradient variance bound.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class Problem:
    """Objective/gradient oracle over a tuple of parameter arrays."""

    name: str
    shapes: tuple
    loss: Callable
    full_gradient: Callable
    minibatch_gradient: Callable  # (params, batch_size, rng_seed) -> grads
    init_weights: Callable        # rng -> params tuple
    smoothness_L: Optional[float] = None
    optimum_value: Optional[float] = None
    noise_sigma2: Optional[float] = None
    n_samples: Optional[int] = None

    @property
    def shape(self):
        """The (m, n) shape of the unique matrix parameter."""
        mats = [s for s in self.shapes if len(s) == 2]
        if len(mats) != 1:
            raise InvalidInput(f"{self.name}: no unique matrix parameter")
        return mats[0]


def _as_params(weights):
    return tuple(np.asarray(w, dtype=np.float64) for w in weights)


# ----------------------------------------------------------------- quadratic

def _conditioned_factor(rng, d, cond):
    u, _ = np.linalg.qr(rng.standard_normal((d, d)))
    v, _ = np.linalg.qr(rng.standard_normal((d, d)))
    sigma = np.exp(np.linspace(0.0, -math.log(cond), d))
    return (u * sigma) @ v.T


def quadratic_problem(m: int, n: int, seed: int, cond: float = None) -> Problem:
    """L(W) = 0.5 ||A (W - W*) B||_F^2 with unit-spectral-norm A, B.

    With `cond` set, A and B get log-spaced singular values spanning that
    condition number (the Hessian condition number is then cond^4);
    otherwise they are normalized Gaussian draws. Deterministic: the
    mini-batch sampler returns the full gradient and the declared noise
    bound is zero. smoothness_L = (||A||_2 ||B||_2)^2.
    """
    if m < 2 or n < 2:
        raise InvalidInput("quadratic_problem needs m, n >= 2")
    if cond is not None and cond < 1.0:
        raise InvalidInput(f"cond must be >= 1, got {cond}")
    rng = np.random.default_rng(seed)
    if cond is None:
        a = rng.standard_normal((m, m))
        a /= np.linalg.norm(a, 2)
        b = rng.standard_normal((n, n))
        b /= np.linalg.norm(b, 2)
    else:
        a = _conditioned_factor(rng, m, cond)
        b = _conditioned_factor(rng, n, cond)
    w_star = rng.standard_normal((m, n))
    ata = a.T @ a
    bbt = b @ b.T

    def loss(params):
        (w,) = _as_params(params)
        return 0.5 * float(np.linalg.norm(a @ (w - w_star) @ b) ** 2)

    def full_gradient(params):
        (w,) = _as_params(params)
        return (ata @ (w - w_star) @ bbt,)

    def minibatch_gradient(params, batch_size, rng_seed):
        return full_gradient(params)

    def init_weights(rng):
        return (rng.standard_normal((m, n)),)

    smoothness = float((np.linalg.norm(a, 2) * np.linalg.norm(b, 2)) ** 2)
    return Problem(
        name="quadratic",
        shapes=((m, n),),
        loss=loss,
        full_gradient=full_gradient,
        minibatch_gradient=minibatch_gradient,
        init_weights=init_weights,
        smoothness_L=smoothness,
        optimum_value=0.0,
        noise_sigma2=0.0,
    )


# ------------------------------------------------------------------ logistic

def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits, y_onehot):
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - np.sum(z * y_onehot, axis=1)))


def logistic_functions(x, y_onehot):
    """(loss, full_gradient, batch_gradient_from_indices) closures for
    multiclass logistic regression with weight matrix (features x classes)."""

    n_total = x.shape[0]

    def loss(params):
        (w,) = _as_params(params)
        return _cross_entropy(x @ w, y_onehot)

    def full_gradient(params):
        (w,) = _as_params(params)
        residual = _softmax(x @ w) - y_onehot
        return (x.T @ residual / n_total,)

    def batch_gradient(params, idx):
        (w,) = _as_params(params)
        xb = x[idx]
        residual = _softmax(xb @ w) - y_onehot[idx]
        return (xb.T @ residual / len(idx),)

    return loss, full_gradient, batch_gradient


def _cluster_data(rng, n_samples, dim, n_classes, spread=2.0, noise=1.0,
                  class_probs=None):
    means = spread * rng.standard_normal((n_classes, dim))
    if class_probs is None:
        labels = rng.integers(0, n_classes, size=n_samples)
    else:
        labels = rng.choice(n_classes, size=n_samples, p=class_probs)
    x = means[labels] + noise * rng.standard_normal((n_samples, dim))
    y = np.zeros((n_samples, n_classes))
    y[np.arange(n_samples), labels] = 1.0
    return x, y


def logistic_problem(m: int, n: int, n_samples: int, seed: int) -> Problem:
    """Multiclass logistic regression on synthetic Gaussian clusters.

    Weight matrix is m x n (features x classes); mini-batches are drawn
    i.i.d. uniform with replacement. noise_sigma2 is the exact per-sample
    gradient variance at W = 0, and smoothness_L = 0.5 lambda_max(X^T X / N)
    (a valid Frobenius-smoothness bound for softmax cross-entropy).
    """
    rng = np.random.default_rng(seed)
    x, y = _cluster_data(rng, n_samples, m, n)
    loss, full_gradient, batch_gradient = logistic_functions(x, y)

    def minibatch_gradient(params, batch_size, rng_seed):
        if not 1 <= batch_size <= n_samples:
            raise InvalidInput(f"batch_size must be in [1, {n_samples}]")
        idx = np.random.default_rng(rng_seed).integers(0, n_samples, size=batch_size)
        return batch_gradient(params, idx)

    def init_weights(rng):
        return (0.01 * rng.standard_normal((m, n)),)

    # exact per-sample variance at the canonical point W = 0
    w0 = (np.zeros((m, n)),)
    mean_grad = full_gradient(w0)[0]
    residual0 = 1.0 / n - y  # softmax of zero logits is uniform
    per_sample = x[:, :, None] * residual0[:, None, :]
    sigma2 = float(np.mean(np.sum((per_sample - mean_grad) ** 2, axis=(1, 2))))

    smoothness = 0.5 * float(np.linalg.eigvalsh(x.T @ x / n_samples)[-1])
    return Problem(
        name="logistic",
        shapes=((m, n),),
        loss=loss,
        full_gradient=full_gradient,
        minibatch_gradient=minibatch_gradient,
        init_weights=init_weights,
        smoothness_L=smoothness,
        optimum_value=None,
        noise_sigma2=sigma2,
        n_samples=n_samples,
    )


# ----------------------------------------------------------------------- MLP

def mlp_loss_and_grads(params, x, y_onehot):
    """Loss and gradients of a tanh MLP with softmax cross-entropy head.

    params alternates (W1, b1, W2, b2, ...); hidden activations are tanh,
    the final layer is linear. Manual backprop, no autodiff.
    """
    params = _as_params(params)
    weights = params[0::2]
    biases = params[1::2]
    n_batch = x.shape[0]

    activations = [x]
    a = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        a = z if i == len(weights) - 1 else np.tanh(z)
        activations.append(a)

    logits = activations[-1]
    loss = _cross_entropy(logits, y_onehot)

    grads = []
    delta = (_softmax(logits) - y_onehot) / n_batch
    for i in range(len(weights) - 1, -1, -1):
        grads.append(np.sum(delta, axis=0))          # bias
        grads.append(activations[i].T @ delta)        # weight
        if i > 0:
            delta = (delta @ weights[i].T) * (1.0 - activations[i] ** 2)
    grads.reverse()
    return loss, tuple(grads)


def mlp_problem(layer_dims, n_samples: int, seed: int,
                label_noise: float = 0.0,
                feature_scale_decades: float = 0.0,
                class_skew: float = 0.0) -> Problem:
    """Small tanh MLP on synthetic Gaussian-cluster classification data.

    layer_dims = [input, hidden..., classes] with 2-3 hidden layers and all
    dims <= 64. Weight matrices and bias vectors are separate parameters so
    matrix optimizers act per layer and biases take an element-wise fallback.
    label_noise relabels that fraction of samples uniformly at random,
    giving the loss an irreducible floor (gradients never vanish).
    feature_scale_decades spreads per-feature input scales log-uniformly
    over that many decades (real datasets are rarely unit-scaled), which
    makes the gradient second moments anisotropic.
    class_skew in [0, 1) draws class k with probability proportional to
    (1 - class_skew)^k; imbalanced class frequencies keep the output-side
    gradient second moment anisotropic for the whole run (the model cannot
    learn away how often a class occurs).
    """
    dims = [int(d) for d in layer_dims]
    n_hidden = len(dims) - 2
    if not 2 <= n_hidden <= 3:
        raise InvalidInput(f"mlp_problem needs 2-3 hidden layers, got {n_hidden}")
    if max(dims) > 64:
        raise InvalidInput("mlp_problem dims must be <= 64")
    if not 0.0 <= label_noise < 1.0:
        raise InvalidInput(f"label_noise must lie in [0, 1), got {label_noise}")
    if not 0.0 <= class_skew < 1.0:
        raise InvalidInput(f"class_skew must lie in [0, 1), got {class_skew}")
    rng = np.random.default_rng(seed)
    class_probs = None
    if class_skew > 0.0:
        class_probs = (1.0 - class_skew) ** np.arange(dims[-1])
        class_probs = class_probs / class_probs.sum()
    x, y = _cluster_data(rng, n_samples, dims[0], dims[-1], class_probs=class_probs)
    if label_noise > 0.0:
        flip = rng.random(n_samples) < label_noise
        y[flip] = 0.0
        y[flip, rng.integers(0, dims[-1], size=int(flip.sum()))] = 1.0
    if feature_scale_decades > 0.0:
        half = 0.5 * feature_scale_decades
        scales = 10.0 ** rng.permutation(np.linspace(-half, half, dims[0]))
        x = x * scales

    shapes = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        shapes.append((d_in, d_out))
        shapes.append((d_out,))

    def loss(params):
        return mlp_loss_and_grads(params, x, y)[0]

    def full_gradient(params):
        return mlp_loss_and_grads(params, x, y)[1]

    def minibatch_gradient(params, batch_size, rng_seed):
        if not 1 <= batch_size <= n_samples:
            raise InvalidInput(f"batch_size must be in [1, {n_samples}]")
        idx = np.random.default_rng(rng_seed).integers(0, n_samples, size=batch_size)
        return mlp_loss_and_grads(params, x[idx], y[idx])[1]

    def init_weights(rng):
        params = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            params.append(rng.standard_normal((d_in, d_out)) / math.sqrt(d_in))
            params.append(np.zeros(d_out))
        return tuple(params)

    return Problem(
        name="mlp",
        shapes=tuple(shapes),
        loss=loss,
        full_gradient=full_gradient,
        minibatch_gradient=minibatch_gradient,
        init_weights=init_weights,
        n_samples=n_samples,
    )


_BUILDERS = {
    "quadratic": quadratic_problem,
    "logistic": logistic_problem,
    "mlp": mlp_problem,
}


def build_problem(name: str, **kwargs) -> Problem:
    """Construct a problem by name; used by the harness config layer."""
    if name not in _BUILDERS:
        raise InvalidInput(f"unknown problem {name!r}; have {sorted(_BUILDERS)}")
    return _BUILDERS[name](**kwargs)

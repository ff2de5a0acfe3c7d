"""Minimal differentiable kernels with hand-written backward passes.

Every forward here is a pure function of its inputs (plus an explicitly
passed RNG for dropout); each has a matching ``*_backward`` that returns the
exact analytic gradient of a scalar loss.  There is no autograd: the model
graph is fixed and gradients are composed by hand, then validated against
central finite differences via ``gradient_check``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

L2_EPS = 1e-12


class ParamStore:
    """Named trainable tensors in fixed registration order.

    Arrays are shared by reference with the layers that own them, so in-place
    optimizer updates are visible to the model without re-wiring.
    """

    def __init__(self):
        self._tensors: dict[str, np.ndarray] = {}

    def register(self, name: str, tensor: np.ndarray) -> np.ndarray:
        if name in self._tensors:
            raise ValueError(f"parameter '{name}' already registered")
        self._tensors[name] = tensor
        return tensor

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)


class GradStore:
    """Per-parameter gradient accumulators mirroring a ParamStore's shapes."""

    def __init__(self, params: ParamStore):
        self._grads = {name: np.zeros_like(t) for name, t in params.items()}

    def add(self, name: str, grad: np.ndarray) -> None:
        acc = self._grads[name]
        if grad.shape != acc.shape:
            raise ValueError(f"gradient for '{name}' has shape {grad.shape}, expected {acc.shape}")
        acc += grad

    def items(self):
        return self._grads.items()

    def __getitem__(self, name: str) -> np.ndarray:
        return self._grads[name]


@dataclass
class LinearLayer:
    """Affine map y = x @ W + b with W of shape (d_in, d_out)."""

    W: np.ndarray
    b: np.ndarray

    @property
    def d_in(self) -> int:
        return self.W.shape[0]

    @property
    def d_out(self) -> int:
        return self.W.shape[1]


def init_linear(d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32) -> LinearLayer:
    """Uniform(-sqrt(6/(d_in+d_out)), +...) weights, zero biases."""
    bound = np.sqrt(6.0 / (d_in + d_out))
    W = rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)
    b = np.zeros(d_out, dtype=dtype)
    return LinearLayer(W=W, b=b)


def linear_forward(X: np.ndarray, layer: LinearLayer) -> np.ndarray:
    if X.ndim != 2 or X.shape[1] != layer.d_in:
        raise ValueError(f"linear: input shape {X.shape} incompatible with ({layer.d_in}, ...)")
    return X @ layer.W + layer.b


def linear_backward(dY: np.ndarray, X: np.ndarray, layer: LinearLayer):
    """Gradients for y = x @ W + b: returns (dX, dW, db)."""
    dX = dY @ layer.W.T
    dW = X.T @ dY
    db = dY.sum(axis=0)
    return dX, dW, db


def relu(X: np.ndarray) -> np.ndarray:
    return np.maximum(X, 0)


def relu_backward(dY: np.ndarray, X: np.ndarray) -> np.ndarray:
    # Subgradient at 0 taken as 0.
    return dY * (X > 0)


def dropout(X: np.ndarray, rate: float, rng: np.random.Generator, training: bool):
    """Inverted dropout: survivors scaled by 1/(1-rate) so eval is identity.

    Returns (Y, mask); mask is None in eval mode or at rate 0, meaning the
    op was the identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return X, None
    keep = rng.random(X.shape) >= rate
    mask = keep.astype(X.dtype) / X.dtype.type(1.0 - rate)
    return X * mask, mask


def dropout_backward(dY: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dY if mask is None else dY * mask


def softmax_columns(B: np.ndarray) -> np.ndarray:
    """Softmax over proposals (rows) independently for each class column.

    Computed with per-column max subtraction, so it is stable and invariant
    under adding a constant to a column.  Every column sums to 1.
    """
    shifted = B - B.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def softmax_columns_backward(dS: np.ndarray, S: np.ndarray) -> np.ndarray:
    dot = (dS * S).sum(axis=0, keepdims=True)
    return S * (dS - dot)


def softmax_rows(A: np.ndarray) -> np.ndarray:
    """Softmax across classes within each proposal row."""
    shifted = A - A.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(dS: np.ndarray, S: np.ndarray) -> np.ndarray:
    dot = (dS * S).sum(axis=1, keepdims=True)
    return S * (dS - dot)


def l2_normalize(v: np.ndarray, eps: float = L2_EPS) -> np.ndarray:
    """v / max(||v||, eps); unit norm whenever ||v|| >= eps, zero stays zero."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    norm = np.linalg.norm(v)
    return v / max(norm, eps)


def l2_normalize_backward(dY: np.ndarray, v: np.ndarray, eps: float = L2_EPS) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < eps:
        return dY / eps
    return dY / norm - v * ((v @ dY) / norm**3)


def gradient_check(fn, params, grads, probe_eps: float = 1e-5, denom_floor: float = 1e-8) -> float:
    """Max relative error between analytic gradients and central differences.

    ``fn`` re-evaluates the scalar loss from the current parameter values and
    must be deterministic (dropout disabled or masks frozen).  ``params`` maps
    names to arrays that are perturbed in place; ``grads`` maps the same names
    to the analytic gradients under test.  Relative error per coordinate is
    |a - n| / max(|a|, |n|, denom_floor).

    The default floor suits 64-bit evaluation.  When the analytic side was
    computed in 32-bit, cancellation residue on mathematically-zero gradients
    sits near 1e-9, so callers should raise the floor to about 1e-5.
    """
    worst = 0.0
    for name, theta in params.items():
        analytic = grads[name]
        flat = theta.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + probe_eps
            f_plus = fn()
            flat[i] = orig - probe_eps
            f_minus = fn()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * probe_eps)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), denom_floor)
            worst = max(worst, err)
    return worst

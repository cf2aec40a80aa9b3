"""Three-layer MLP discriminator ``[N, floor(2 sqrt N), 1]`` with hand-written backprop."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


def hidden_width(n_data: int) -> int:
    return max(1, math.isqrt(4 * n_data))


@dataclass
class DiscriminatorMlp:
    w1: np.ndarray  # (H, N)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (1, H)
    b2: np.ndarray  # (1,)
    seed: int | None = None

    @property
    def layer_dims(self) -> list[int]:
        return [self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]]

    @property
    def n_data(self) -> int:
        return self.w1.shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "DiscriminatorMlp":
        return DiscriminatorMlp(*(p.copy() for p in self.parameters()), seed=self.seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "DiscriminatorMlp":
        arrays = [np.array(data[k], dtype=float) for k in ("w1", "b1", "w2", "b2")]
        return cls(*arrays, seed=data.get("seed"))


def disc_init(n_data: int, seed=None) -> DiscriminatorMlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if n_data < 1:
        raise ValueError("n_data must be >= 1")
    rng = np.random.default_rng(seed)
    h = hidden_width(n_data)
    lim1, lim2 = 1 / math.sqrt(n_data), 1 / math.sqrt(h)
    w1 = rng.uniform(-lim1, lim1, size=(h, n_data))
    w2 = rng.uniform(-lim2, lim2, size=(1, h))
    return DiscriminatorMlp(w1, np.zeros(h), w2, np.zeros(1), seed=seed if isinstance(seed, int) else None)


def _check_input(mlp: DiscriminatorMlp, x: np.ndarray) -> None:
    if x.shape[-1] != mlp.n_data:
        raise ValueError(f"discriminator expects {mlp.n_data} inputs, got {x.shape[-1]}")


def disc_forward(mlp: DiscriminatorMlp, x):
    """D(x) in (0, 1). Accepts one image (N,) or a batch (B, N)."""
    x = np.asarray(x, dtype=float)
    _check_input(mlp, x)
    hidden = np.maximum(x @ mlp.w1.T + mlp.b1, 0.0)
    out = expit(hidden @ mlp.w2.T + mlp.b2)[..., 0]
    return float(out) if out.ndim == 0 else out


@dataclass
class DiscGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    x: np.ndarray = field(repr=False)

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def __add__(self, other: "DiscGradients") -> "DiscGradients":
        return DiscGradients(*(a + b for a, b in zip(self.parameters(), other.parameters())), x=self.x)


def disc_backward(mlp: DiscriminatorMlp, x, d_out: float) -> DiscGradients:
    """Gradients of a loss w.r.t. every parameter and the input, given dLoss/dD(x).

    ReLU uses the zero subgradient at 0.
    """
    x = np.asarray(x, dtype=float)
    _check_input(mlp, x)
    pre1 = mlp.w1 @ x + mlp.b1
    hidden = np.maximum(pre1, 0.0)
    out = float(expit(mlp.w2 @ hidden + mlp.b2)[0])
    d_logit = d_out * out * (1.0 - out)
    d_w2 = d_logit * hidden[None, :]
    d_b2 = np.array([d_logit])
    d_hidden = d_logit * mlp.w2[0] * (pre1 > 0)
    d_w1 = np.outer(d_hidden, x)
    d_x = mlp.w1.T @ d_hidden
    return DiscGradients(d_w1, d_hidden, d_w2, d_b2, x=d_x)


# ---------------------------------------------------------------------------
# optimizers, shared with the generator
# ---------------------------------------------------------------------------


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> list[np.ndarray]:
    """In-place ``p -= lr * g`` for each pair; returns ``params``."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"shape mismatch {p.shape} vs {np.shape(g)}")
        p -= lr * g
    return params


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    state: AdamState,
    params: list[np.ndarray],
    grads: list[np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[AdamState, list[np.ndarray]]:
    state.t += 1
    bc1 = 1 - beta1**state.t
    bc2 = 1 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != np.shape(g):
            raise ValueError(f"shape mismatch {p.shape} vs {np.shape(g)}")
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state, params

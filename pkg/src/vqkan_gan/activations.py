"""Learnable angle functions for the quantum KAN ansatz.

Each rotation angle is

    phi(x) = sum_i 2 * acos( clip( E_f(x_i) + sum_s c_s B_s(x_i), -1, 1 ) )

with ``E_f(x) = x / (exp(-x) + 1)`` and ``B_s`` either cubic B-splines on an
open uniform knot vector over [0, 1] or Gaussian radial basis functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

CLAMP_GUARD = 1e-9


class BasisFamily(str, Enum):
    BSPLINE = "bspline"
    RBF = "rbf"


def grid_intervals(trial: int = 0) -> int:
    """Grid size schedule ``4 * (trial + 2)``."""
    if trial < 0:
        raise ValueError("trial counter must be non-negative")
    return 4 * (trial + 2)


@dataclass(frozen=True)
class BasisConfig:
    family: BasisFamily = BasisFamily.BSPLINE
    n_basis: int = 8
    n_grid_intervals: int = field(default_factory=grid_intervals)
    degree: int = 3

    def __post_init__(self):
        object.__setattr__(self, "family", BasisFamily(self.family))
        if self.n_basis < 1:
            raise ValueError("n_basis must be >= 1")
        if self.n_grid_intervals < 1:
            raise ValueError("n_grid_intervals must be >= 1")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")

    @property
    def spline_degree(self) -> int:
        # an open knot vector with n functions supports degree <= n - 1
        return min(self.degree, self.n_basis - 1)

    def knots(self) -> np.ndarray:
        k = self.spline_degree
        n_intervals = self.n_basis - k
        inner = np.linspace(0.0, 1.0, n_intervals + 1)
        return np.concatenate([np.zeros(k), inner, np.ones(k)])

    def rbf_centers(self) -> np.ndarray:
        if self.n_basis == 1:
            return np.array([0.5])
        return np.linspace(0.0, 1.0, self.n_basis)

    @property
    def rbf_width(self) -> float:
        return 1.0 / (self.n_basis - 1) if self.n_basis > 1 else 1.0


def fermi_activation(x):
    """``x / (exp(-x) + 1)``, i.e. ``x * sigmoid(x)``."""
    x = np.asarray(x, dtype=float)
    out = x * expit(x)
    return float(out) if out.ndim == 0 else out


def _bspline_matrix(config: BasisConfig, x: np.ndarray) -> np.ndarray:
    t = config.knots()
    k = config.spline_degree
    n_knots = len(t)
    # degree-0 indicator functions, with the last non-empty interval closed at 1
    basis = ((x[:, None] >= t[None, :-1]) & (x[:, None] < t[None, 1:])).astype(float)
    last = np.nonzero(t[:-1] < t[1:])[0][-1]
    basis[x >= 1.0, :] = 0.0
    basis[x >= 1.0, last] = 1.0
    for d in range(1, k + 1):
        nxt = np.zeros((len(x), n_knots - 1 - d))
        for i in range(n_knots - 1 - d):
            left_den = t[i + d] - t[i]
            right_den = t[i + d + 1] - t[i + 1]
            if left_den > 0:
                nxt[:, i] += (x - t[i]) / left_den * basis[:, i]
            if right_den > 0:
                nxt[:, i] += (t[i + d + 1] - x) / right_den * basis[:, i + 1]
        basis = nxt
    return basis


def basis_matrix(config: BasisConfig, x) -> np.ndarray:
    """Evaluate all basis functions at every point of ``x``: shape (len(x), n_basis).

    Points outside [0, 1] are clamped to the boundary.
    """
    x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), 0.0, 1.0)
    if config.family is BasisFamily.RBF:
        mu = config.rbf_centers()
        return np.exp(-(((x[:, None] - mu[None, :]) / config.rbf_width) ** 2))
    return _bspline_matrix(config, x)


def basis_eval(config: BasisConfig, s: int, x: float) -> float:
    if not 0 <= s < config.n_basis:
        raise IndexError(f"basis index {s} out of range for {config.n_basis} functions")
    return float(basis_matrix(config, [x])[0, s])


@dataclass
class KanActivationParams:
    """Coefficients ``c[n, j, d, s]`` for layer n, qubit j, depth d, basis s."""

    coefficients: np.ndarray
    config: BasisConfig

    @classmethod
    def zeros(cls, n_layers: int, n_qubits: int, depth: int, config: BasisConfig) -> "KanActivationParams":
        return cls(np.zeros((n_layers, n_qubits, depth, config.n_basis)), config)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 4 or self.coefficients.shape[-1] != self.config.n_basis:
            raise ValueError(
                f"coefficients must have shape (layers, qubits, depth, {self.config.n_basis}), "
                f"got {self.coefficients.shape}"
            )

    @property
    def size(self) -> int:
        return self.coefficients.size

    def copy(self) -> "KanActivationParams":
        return KanActivationParams(self.coefficients.copy(), self.config)


def _acos_args(coeffs: np.ndarray, config: BasisConfig, x_vec) -> tuple[np.ndarray, np.ndarray]:
    """Unclamped acos arguments u[..., i] and the basis matrix B[i, s].

    ``coeffs`` has shape (..., n_basis); the result broadcasts over the leading axes.
    """
    x = np.atleast_1d(np.asarray(x_vec, dtype=float))
    basis = basis_matrix(config, x)
    u = fermi_activation(x) + coeffs @ basis.T
    return np.asarray(u), basis


def layer_angles(coeffs: np.ndarray, config: BasisConfig, x_vec) -> np.ndarray:
    """Angles for every coefficient row; ``coeffs`` (..., n_basis) -> (...)."""
    u, _ = _acos_args(coeffs, config, x_vec)
    return np.sum(2.0 * np.arccos(np.clip(u, -1.0, 1.0)), axis=-1)


def layer_angle_gradients(coeffs: np.ndarray, config: BasisConfig, x_vec) -> np.ndarray:
    """d angle / d c_s for every coefficient row; (..., n_basis) -> (..., n_basis)."""
    u, basis = _acos_args(coeffs, config, x_vec)
    active = np.abs(u) < 1.0 - CLAMP_GUARD
    safe = np.where(active, u, 0.0)
    w = np.where(active, -2.0 / np.sqrt(1.0 - safe**2), 0.0)
    return w @ basis


def phi_angle(params: KanActivationParams, n: int, j: int, d: int, x_vec) -> float:
    return float(layer_angles(params.coefficients[n, j, d], params.config, x_vec))


def phi_gradient(params: KanActivationParams, n: int, j: int, d: int, x_vec) -> np.ndarray:
    return layer_angle_gradients(params.coefficients[n, j, d], params.config, x_vec)

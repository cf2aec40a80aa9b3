"""Dense state-vector simulation for the Ry/CZ gate set.

Basis ordering is little-endian: qubit ``q`` is bit ``q`` of the basis index,
so qubit 0 is the least significant bit. The ancilla, when present, is the
highest-index qubit, i.e. the most significant bit.

Besides the single-state API (``zero_state``, ``apply_ry`` ...) the module
exposes batched kernels working on ``(batch, 2**n)`` arrays. The generator and
the gradient code use those to evaluate many shifted circuits at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_QUBITS = 24


class PostSelectionError(ValueError):
    """Raised when the requested measurement branch has zero probability."""


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


def _check_qubit(n_qubits: int, qubit: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {n_qubits} qubits")


def zero_state(n_qubits: int, max_qubits: int = MAX_QUBITS) -> StateVector:
    if not 1 <= n_qubits <= max_qubits:
        raise ValueError(f"n_qubits must be in [1, {max_qubits}], got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def apply_ry(state: StateVector, qubit: int, theta: float) -> StateVector:
    """Return a new state with Ry(theta) applied to ``qubit``."""
    _check_qubit(state.n_qubits, qubit)
    out = ry_batch(state.amplitudes[None, :], state.n_qubits, qubit, np.array([theta]))
    return StateVector(state.n_qubits, out[0])


def apply_cz(state: StateVector, q1: int, q2: int) -> StateVector:
    _check_qubit(state.n_qubits, q1)
    _check_qubit(state.n_qubits, q2)
    if q1 == q2:
        raise ValueError("CZ needs two distinct qubits")
    idx = np.arange(1 << state.n_qubits)
    both = ((idx >> q1) & 1) & ((idx >> q2) & 1)
    amps = state.amplitudes.copy()
    amps[both == 1] *= -1
    return StateVector(state.n_qubits, amps)


def probabilities(state: StateVector) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def postselect(state: StateVector, qubit: int, outcome: int) -> tuple[StateVector, float]:
    """Condition on ``qubit`` reading ``outcome`` and drop that qubit.

    Returns the renormalised (n-1)-qubit state and the branch probability.
    """
    _check_qubit(state.n_qubits, qubit)
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome}")
    if state.n_qubits < 2:
        raise ValueError("cannot post-select the only qubit of a state")
    n = state.n_qubits
    # axis n-1-q of the C-ordered tensor carries qubit q
    tensor = state.amplitudes.reshape((2,) * n)
    branch = np.take(tensor, outcome, axis=n - 1 - qubit).reshape(-1)
    p = float(np.sum(np.abs(branch) ** 2))
    if p <= 0.0:
        raise PostSelectionError(f"outcome {outcome} on qubit {qubit} has zero probability")
    return StateVector(n - 1, branch / np.sqrt(p)), p


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------


def ry_batch(amps: np.ndarray, n_qubits: int, qubit: int, thetas: np.ndarray) -> np.ndarray:
    """Apply Ry(thetas[b]) on ``qubit`` of every row of ``amps`` (shape (B, 2**n))."""
    batch = amps.shape[0]
    view = amps.reshape(batch, 1 << (n_qubits - 1 - qubit), 2, 1 << qubit)
    half = np.asarray(thetas, dtype=float) / 2
    c = np.cos(half)[:, None, None]
    s = np.sin(half)[:, None, None]
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    out = np.empty_like(view, dtype=np.result_type(amps.dtype, float))
    out[:, :, 0, :] = c * a0 - s * a1
    out[:, :, 1, :] = s * a0 + c * a1
    return out.reshape(batch, -1)


@lru_cache(maxsize=None)
def cz_chain_signs(n_qubits: int) -> np.ndarray:
    """Diagonal of the product CZ(0,1) CZ(1,2) ... CZ(n-2,n-1)."""
    idx = np.arange(1 << n_qubits)
    parity = np.zeros_like(idx)
    for j in range(n_qubits - 1):
        parity ^= ((idx >> j) & 1) & ((idx >> (j + 1)) & 1)
    signs = 1.0 - 2.0 * parity
    signs.setflags(write=False)
    return signs


def zero_batch(batch: int, n_qubits: int, dtype=float) -> np.ndarray:
    amps = np.zeros((batch, 1 << n_qubits), dtype=dtype)
    amps[:, 0] = 1.0
    return amps

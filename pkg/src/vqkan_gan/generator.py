"""Patch generators: the quantum KAN ansatz and the plain Ry/CZ baseline.

Every patch is a Born machine. The latent vector ``z`` seeds a product state
``prod_j Ry(z_j)|0...0>``; each depth slot then applies ``Ry(angle[j, d])`` on
every qubit followed by a CZ chain over neighbouring qubits. In the KAN
generator the angles are learnable functions of the layer input (see
``activations``); in the baseline they are free parameters.

A patch is read out by optionally post-selecting the ancilla (highest qubit)
on 0, keeping the first ``patch_len`` probabilities and scaling them by their
maximum so pixels live in [0, 1].
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .activations import (
    BasisConfig,
    KanActivationParams,
    layer_angle_gradients,
    layer_angles,
)
from .statevector import (
    StateVector,
    apply_cz,
    apply_ry,
    cz_chain_signs,
    ry_batch,
    zero_state,
)

LATENT_SCALE = np.pi / 2
SHIFT = np.pi / 2
# kept-branch mass below this is rounding residue, not a distribution worth renormalizing
POSTSELECT_FLOOR = 1e-20


class Readout(str, Enum):
    TRUNCATE = "truncate"
    MARGINALIZE = "marginalize"


class GradientMode(str, Enum):
    FINITE_DIFFERENCE = "finite_difference"
    PARAMETER_SHIFT = "parameter_shift"


@dataclass(frozen=True)
class GeneratorConfig:
    n_qubits: int = 8
    n_ancilla: int = 0
    depth: int = 1
    n_layers: int = 1
    n_patches: int = 4
    patch_len: int = 64
    basis: BasisConfig = field(default_factory=BasisConfig)
    readout: Readout = Readout.TRUNCATE

    def __post_init__(self):
        object.__setattr__(self, "readout", Readout(self.readout))
        if isinstance(self.basis, dict):
            object.__setattr__(self, "basis", BasisConfig(**self.basis))
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.n_ancilla not in (0, 1):
            raise ValueError("n_ancilla must be 0 or 1")
        if self.n_ancilla >= self.n_qubits:
            raise ValueError("need at least one data qubit besides the ancilla")
        if self.depth < 0 or self.n_layers < 1 or self.n_patches < 1:
            raise ValueError("depth must be >= 0, n_layers and n_patches >= 1")
        if not 1 <= self.patch_len <= self.data_dim:
            raise ValueError(
                f"patch_len {self.patch_len} must be in [1, 2**(n_qubits - n_ancilla)] = [1, {self.data_dim}]"
            )
        if self.readout is Readout.MARGINALIZE and self.data_dim % self.patch_len:
            raise ValueError("marginalized readout needs patch_len dividing 2**(n_qubits - n_ancilla)")

    @property
    def data_dim(self) -> int:
        return 1 << (self.n_qubits - self.n_ancilla)

    @property
    def image_len(self) -> int:
        return self.n_patches * self.patch_len

    def to_dict(self) -> dict:
        d = asdict(self)
        d["readout"] = self.readout.value
        d["basis"]["family"] = self.basis.family.value
        return d


def sample_latent(rng: np.random.Generator, n_qubits: int) -> np.ndarray:
    """Latent angles drawn uniformly from [0, pi/2)."""
    return rng.uniform(0.0, LATENT_SCALE, size=n_qubits)


def latent_to_unit(z) -> np.ndarray:
    return np.asarray(z, dtype=float) / LATENT_SCALE


# ---------------------------------------------------------------------------
# circuit pieces
# ---------------------------------------------------------------------------


def initial_state(z) -> StateVector:
    z = np.asarray(z, dtype=float)
    state = zero_state(len(z))
    for j, angle in enumerate(z):
        state = apply_ry(state, j, angle)
    return state


def _product_amplitudes(z: np.ndarray) -> np.ndarray:
    """Real amplitudes of prod_j Ry(z_j)|0>, little-endian."""
    amps = np.ones(1)
    for angle in z:
        # qubit j is more significant than all qubits before it
        amps = np.kron(np.array([np.cos(angle / 2), np.sin(angle / 2)]), amps)
    return amps


def apply_kan_layer(state: StateVector, params: KanActivationParams, layer: int, x_in) -> StateVector:
    angles = layer_angles(params.coefficients[layer], params.config, x_in)
    n_q, depth = angles.shape
    for d in range(depth):
        for j in range(n_q):
            state = apply_ry(state, j, angles[j, d])
        for j in range(n_q - 1):
            state = apply_cz(state, j, j + 1)
    return state


def run_ansatz(amps: np.ndarray, n_qubits: int, angles: np.ndarray) -> np.ndarray:
    """Batched ansatz: ``amps`` (B, 2**n), ``angles`` (B, n_qubits, depth)."""
    signs = cz_chain_signs(n_qubits) if n_qubits > 1 else None
    for d in range(angles.shape[2]):
        for j in range(n_qubits):
            amps = ry_batch(amps, n_qubits, j, angles[:, j, d])
        if signs is not None:
            amps = amps * signs
    return amps


def segment_means(probs: np.ndarray, n_segments: int) -> np.ndarray:
    """Average of ``n_segments`` contiguous (near-)equal slices of ``probs``."""
    return np.array([seg.mean() for seg in np.array_split(probs, n_segments)])


def forward_probs(params: KanActivationParams, config: GeneratorConfig, z) -> np.ndarray:
    return _kan_forward_batch(params.coefficients[None], config, np.asarray(z, dtype=float))[0]


def _kan_forward_batch(coeffs: np.ndarray, config: GeneratorConfig, z: np.ndarray) -> np.ndarray:
    """Final probabilities for a batch of coefficient tensors (B, N_l, N_q, N_d, N_g)."""
    batch = coeffs.shape[0]
    n_q = config.n_qubits
    amps = np.repeat(_product_amplitudes(z)[None, :], batch, axis=0)
    x0 = latent_to_unit(z)
    angles = layer_angles(coeffs[:, 0], config.basis, x0)
    amps = run_ansatz(amps, n_q, angles)
    for n in range(1, config.n_layers):
        probs = amps**2
        angles = np.stack(
            [layer_angles(coeffs[b, n], config.basis, segment_means(probs[b], n_q)) for b in range(batch)]
        )
        amps = run_ansatz(amps, n_q, angles)
    return amps**2


def qgan_forward(theta, depth: int, z) -> np.ndarray:
    """Baseline circuit with free angles; ``theta[k * N_q + j]`` drives qubit j at depth k."""
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n_q = len(z)
    if theta.size != n_q * depth:
        raise ValueError(f"theta needs {n_q * depth} entries for {n_q} qubits at depth {depth}, got {theta.size}")
    angles = theta.reshape(depth, n_q).T[None]
    return run_ansatz(_product_amplitudes(z)[None], n_q, angles)[0] ** 2


# ---------------------------------------------------------------------------
# readout
# ---------------------------------------------------------------------------


def readout_batch(probs: np.ndarray, config: GeneratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Pixels (B, patch_len) in [0, 1] and a per-row flag for failed post-selection."""
    probs = np.atleast_2d(probs)
    flags = np.zeros(len(probs), dtype=bool)
    if config.n_ancilla:
        kept = probs[:, : config.data_dim]
        mass = kept.sum(axis=1, keepdims=True)
        ok = mass > POSTSELECT_FLOOR
        flags = ~ok[:, 0]
        kept = np.where(ok, kept / np.where(ok, mass, 1.0), 0.0)
    else:
        kept = probs
    if config.readout is Readout.MARGINALIZE:
        kept = kept.reshape(len(kept), -1, config.patch_len).sum(axis=1)
    else:
        kept = kept[:, : config.patch_len]
    peak = kept.max(axis=1, keepdims=True)
    pixels = np.where(peak > 0, kept / np.where(peak > 0, peak, 1.0), 0.0)
    return pixels, flags


def readout_vjp(probs: np.ndarray, config: GeneratorConfig, grad_pixels: np.ndarray) -> np.ndarray:
    """Pull a pixel-space gradient back to the full probability vector."""
    n_full = len(probs)
    if config.n_ancilla:
        kept = probs[: config.data_dim]
        mass = kept.sum()
        if mass <= POSTSELECT_FLOOR:
            return np.zeros(n_full)
        q = kept / mass
    else:
        q = probs
    if config.readout is Readout.MARGINALIZE:
        t = q.reshape(-1, config.patch_len).sum(axis=0)
    else:
        t = q[: config.patch_len]
    peak_idx = int(np.argmax(t))
    peak = t[peak_idx]
    if peak <= 0:
        return np.zeros(n_full)
    grad_t = grad_pixels / peak
    grad_t[peak_idx] -= np.dot(grad_pixels, t) / peak**2
    if config.readout is Readout.MARGINALIZE:
        grad_q = np.tile(grad_t, len(q) // config.patch_len)
    else:
        grad_q = np.zeros(len(q))
        grad_q[: config.patch_len] = grad_t
    if config.n_ancilla:
        grad_kept = (grad_q - np.dot(grad_q, q)) / mass
        out = np.zeros(n_full)
        out[: config.data_dim] = grad_kept
        return out
    return grad_q


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


class PatchGenerator:
    """Shared patch/image assembly. Subclasses provide the per-patch circuit."""

    kind = ""
    config: GeneratorConfig

    def parameters(self) -> list[np.ndarray]:
        raise NotImplementedError

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def patch_probs_batch(self, patch: int, params: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Probabilities for a batch of parameter arrays of patch ``patch``."""
        raise NotImplementedError

    def patch_probs(self, patch: int, z) -> np.ndarray:
        return self.patch_probs_batch(patch, self.parameters()[patch][None], np.asarray(z, dtype=float))[0]

    def generate_patch(self, patch: int, z) -> tuple[np.ndarray, bool]:
        pixels, flags = readout_batch(self.patch_probs(patch, z), self.config)
        return pixels[0], bool(flags[0])

    def generate_image(self, z) -> tuple[np.ndarray, bool]:
        """Concatenated patches for one latent; flag is set if any post-selection failed."""
        pieces = [self.generate_patch(p, z) for p in range(self.config.n_patches)]
        return np.concatenate([px for px, _ in pieces]), any(f for _, f in pieces)

    def angle_gradient_terms(self, patch: int, z: np.ndarray):
        """(angles (N_q, N_d), d angle / d params) for the parameter-shift chain."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "patches": [p.tolist() for p in self.parameters()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


class VqkanGenerator(PatchGenerator):
    kind = "vqkan"

    def __init__(self, config: GeneratorConfig, patch_params: list[KanActivationParams] | None = None):
        self.config = config
        if patch_params is None:
            patch_params = [
                KanActivationParams.zeros(config.n_layers, config.n_qubits, config.depth, config.basis)
                for _ in range(config.n_patches)
            ]
        expected = (config.n_layers, config.n_qubits, config.depth, config.basis.n_basis)
        if len(patch_params) != config.n_patches:
            raise ValueError(f"expected {config.n_patches} parameter sets, got {len(patch_params)}")
        for p in patch_params:
            if p.coefficients.shape != expected:
                raise ValueError(f"coefficient shape {p.coefficients.shape} != {expected}")
        self.patch_params = patch_params

    def parameters(self) -> list[np.ndarray]:
        return [p.coefficients for p in self.patch_params]

    def patch_probs_batch(self, patch, params, z):
        return _kan_forward_batch(params, self.config, z)

    def angle_gradient_terms(self, patch, z):
        if self.config.n_layers != 1:
            raise ValueError("parameter-shift gradients support a single KAN layer only")
        coeffs = self.patch_params[patch].coefficients[0]
        x0 = latent_to_unit(z)
        angles = layer_angles(coeffs, self.config.basis, x0)
        dangles = layer_angle_gradients(coeffs, self.config.basis, x0)
        return angles, dangles

    @classmethod
    def from_dict(cls, data: dict) -> "VqkanGenerator":
        config = GeneratorConfig(**data["config"])
        params = [KanActivationParams(np.array(p, dtype=float), config.basis) for p in data["patches"]]
        return cls(config, params)


class QganGenerator(PatchGenerator):
    """Baseline with one free angle per (qubit, depth) slot and patch."""

    kind = "qgan"

    def __init__(self, config: GeneratorConfig, thetas: list[np.ndarray] | None = None, rng=None, spread: float = 1.0):
        self.config = config
        shape = (config.n_qubits, config.depth)
        if thetas is None:
            rng = np.random.default_rng(rng)
            thetas = [spread * rng.random(shape) for _ in range(config.n_patches)]
        thetas = [np.asarray(t, dtype=float).reshape(shape) for t in thetas]
        if len(thetas) != config.n_patches:
            raise ValueError(f"expected {config.n_patches} parameter sets, got {len(thetas)}")
        self.thetas = thetas

    def parameters(self) -> list[np.ndarray]:
        return self.thetas

    def patch_probs_batch(self, patch, params, z):
        amps = np.repeat(_product_amplitudes(z)[None], len(params), axis=0)
        return run_ansatz(amps, self.config.n_qubits, params) ** 2

    def angle_gradient_terms(self, patch, z):
        theta = self.thetas[patch]
        return theta, np.ones(theta.shape + (1,))

    @classmethod
    def from_dict(cls, data: dict) -> "QganGenerator":
        config = GeneratorConfig(**data["config"])
        return cls(config, [np.array(p, dtype=float) for p in data["patches"]])


def generator_from_dict(data: dict) -> PatchGenerator:
    kinds = {"vqkan": VqkanGenerator, "qgan": QganGenerator}
    try:
        return kinds[data["kind"]].from_dict(data)
    except KeyError as exc:
        raise ValueError(f"unknown generator kind {data.get('kind')!r}") from exc


def generator_from_json(text: str) -> PatchGenerator:
    return generator_from_dict(json.loads(text))


def patch_prob_gradients(gen: PatchGenerator, patch: int, z) -> np.ndarray:
    """d P_k / d params for one patch via the parameter-shift rule.

    Returns shape params.shape + (2**N_q,).
    """
    z = np.asarray(z, dtype=float)
    angles, dangles = gen.angle_gradient_terms(patch, z)
    n_q, depth = angles.shape
    n_slots = n_q * depth
    shifted = np.repeat(angles[None], 2 * n_slots, axis=0)
    slot = np.arange(n_slots)
    shifted[2 * slot, slot // depth, slot % depth] += SHIFT
    shifted[2 * slot + 1, slot // depth, slot % depth] -= SHIFT
    amps = np.repeat(_product_amplitudes(z)[None], 2 * n_slots, axis=0)
    probs = run_ansatz(amps, n_q, shifted) ** 2
    dp_dangle = 0.5 * (probs[0::2] - probs[1::2]).reshape(n_q, depth, -1)
    # chain: each parameter only moves its own (j, d) angle
    grads = dangles[..., None] * dp_dangle[:, :, None, :]
    return grads.reshape(gen.parameters()[patch].shape + (-1,))

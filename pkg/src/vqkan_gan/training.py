"""Adversarial training loop.

One iteration sees exactly one real image and one latent. The discriminator
is updated first on binary cross-entropy, then the generator takes a step on
the non-saturating loss ``-log D(G(z))`` against the updated discriminator.
Generator gradients come either from central finite differences of the loss
or from the parameter-shift rule chained through the readout and the
discriminator's input gradient.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .data import Dataset, image_grid, write_pgm
from .discriminator import (
    AdamState,
    DiscriminatorMlp,
    adam_step,
    disc_backward,
    disc_forward,
    disc_init,
    sgd_step,
)
from .generator import (
    GeneratorConfig,
    GradientMode,
    PatchGenerator,
    QganGenerator,
    VqkanGenerator,
    patch_prob_gradients,
    readout_batch,
    readout_vjp,
    sample_latent,
)
from .metrics import kid, mse, sliced_wasserstein

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class Optimizer(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass
class TrainConfig:
    iterations: int = 1000
    lr_disc: float = 0.1
    lr_gen: float = 0.001
    optimizer: Optimizer = Optimizer.SGD
    seed: int = 42
    gradient_mode: GradientMode = GradientMode.FINITE_DIFFERENCE
    fd_step: float = 1e-3
    eval_every: int = 10
    eval_size: int = 8
    swd_projections: int = 50
    metric_seed: int = 0
    shuffle: bool = False
    generator: str = "vqkan"
    qgan_spread: float = 1.0
    generator_config: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        self.optimizer = Optimizer(self.optimizer)
        self.gradient_mode = GradientMode(self.gradient_mode)
        if isinstance(self.generator_config, dict):
            self.generator_config = GeneratorConfig(**self.generator_config)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lr_disc < 0 or self.lr_gen < 0:
            raise ValueError("learning rates must be non-negative")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.eval_every < 1 or self.eval_size < 2:
            raise ValueError("eval_every must be >= 1 and eval_size >= 2")
        if self.generator not in ("vqkan", "qgan"):
            raise ValueError(f"unknown generator {self.generator!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"] = self.optimizer.value
        d["gradient_mode"] = self.gradient_mode.value
        d["generator_config"] = self.generator_config.to_dict()
        return d


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def disc_loss(d_real: float, d_fake: float) -> float:
    return float(-(np.log(_clamp(d_real)) + np.log(1.0 - _clamp(d_fake))))


def gen_loss(d_fake):
    out = -np.log(_clamp(np.asarray(d_fake, dtype=float)))
    return float(out) if out.ndim == 0 else out


def _dlog(p: float) -> float:
    """d/dp of log(clamp(p)); zero on the clamp plateau."""
    return 1.0 / p if PROB_CLAMP < p < 1.0 - PROB_CLAMP else 0.0


# ---------------------------------------------------------------------------
# generator gradients
# ---------------------------------------------------------------------------


def _patch_slice(config: GeneratorConfig, patch: int) -> slice:
    return slice(patch * config.patch_len, (patch + 1) * config.patch_len)


def gen_gradient(
    gen: PatchGenerator,
    disc: DiscriminatorMlp,
    z,
    mode: GradientMode = GradientMode.FINITE_DIFFERENCE,
    fd_step: float = 1e-3,
) -> list[np.ndarray]:
    """d gen_loss / d params, one array per patch."""
    z = np.asarray(z, dtype=float)
    mode = GradientMode(mode)
    if mode is GradientMode.FINITE_DIFFERENCE:
        return _fd_gradient(gen, disc, z, fd_step)
    return _shift_gradient(gen, disc, z)


def _fd_gradient(gen, disc, z, h):
    cfg = gen.config
    image, _ = gen.generate_image(z)
    grads = []
    for p, params in enumerate(gen.parameters()):
        k = params.size
        flat = np.repeat(params.reshape(1, -1), 2 * k, axis=0)
        flat[2 * np.arange(k), np.arange(k)] += h
        flat[2 * np.arange(k) + 1, np.arange(k)] -= h
        probs = gen.patch_probs_batch(p, flat.reshape((2 * k,) + params.shape), z)
        pixels, _ = readout_batch(probs, cfg)
        images = np.repeat(image[None], 2 * k, axis=0)
        images[:, _patch_slice(cfg, p)] = pixels
        losses = gen_loss(disc_forward(disc, images))
        grads.append(((losses[0::2] - losses[1::2]) / (2 * h)).reshape(params.shape))
    return grads


def _shift_gradient(gen, disc, z):
    cfg = gen.config
    image, _ = gen.generate_image(z)
    d_fake = disc_forward(disc, image)
    grad_image = disc_backward(disc, image, -_dlog(d_fake)).x
    grads = []
    for p in range(cfg.n_patches):
        probs = gen.patch_probs(p, z)
        grad_probs = readout_vjp(probs, cfg, grad_image[_patch_slice(cfg, p)])
        grads.append(patch_prob_gradients(gen, p, z) @ grad_probs)
    return grads


# ---------------------------------------------------------------------------
# state and steps
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    generator: PatchGenerator
    discriminator: DiscriminatorMlp
    config: TrainConfig
    gen_opt: AdamState | None = None
    disc_opt: AdamState | None = None
    iteration: int = 0

    def __post_init__(self):
        if self.config.optimizer is Optimizer.ADAM:
            if self.gen_opt is None:
                self.gen_opt = AdamState.zeros_like(self.generator.parameters())
            if self.disc_opt is None:
                self.disc_opt = AdamState.zeros_like(self.discriminator.parameters())


@dataclass
class IterationRecord:
    iteration: int
    loss_d: float
    loss_g: float
    wall_ms: float
    flags: str = ""
    mse: float | None = None
    swd: float | None = None
    kid: float | None = None


def _update(params, grads, lr, opt: AdamState | None):
    if opt is None:
        sgd_step(params, grads, lr)
    else:
        adam_step(opt, params, grads, lr)


def train_step(state: TrainState, real_image, z) -> tuple[TrainState, IterationRecord]:
    """One adversarial iteration; updates ``state`` in place and returns it."""
    start = time.perf_counter()
    cfg = state.config
    real = np.asarray(real_image, dtype=float)
    disc = state.discriminator
    if real.shape != (disc.n_data,):
        raise ValueError(f"real image has {real.size} pixels, discriminator expects {disc.n_data}")
    fake, fallback = state.generator.generate_image(z)

    d_real = disc_forward(disc, real)
    d_fake = disc_forward(disc, fake)
    loss_d = disc_loss(d_real, d_fake)
    grads = disc_backward(disc, real, -_dlog(d_real)) + disc_backward(disc, fake, _dlog(1.0 - d_fake))
    _update(disc.parameters(), grads.parameters(), cfg.lr_disc, state.disc_opt)

    loss_g = gen_loss(disc_forward(disc, fake))
    g_grads = gen_gradient(state.generator, disc, z, cfg.gradient_mode, cfg.fd_step)
    _update(state.generator.parameters(), g_grads, cfg.lr_gen, state.gen_opt)

    state.iteration += 1
    wall_ms = (time.perf_counter() - start) * 1e3
    record = IterationRecord(state.iteration, loss_d, loss_g, wall_ms, "postselect_fallback" if fallback else "")
    return state, record


# ---------------------------------------------------------------------------
# evaluation and logging
# ---------------------------------------------------------------------------


def generate_images(gen: PatchGenerator, latents) -> np.ndarray:
    return np.stack([gen.generate_image(z)[0] for z in latents])


def evaluate(gen: PatchGenerator, latents, real_images, n_projections: int = 50, metric_seed=0) -> dict:
    fake = generate_images(gen, latents)
    real = np.asarray(real_images, dtype=float)
    return {
        "mse": mse(fake, real),
        "swd": sliced_wasserstein(fake, real, n_projections, metric_seed),
        "kid": kid(fake, real),
    }


CSV_COLUMNS = ["iteration", "loss_d", "loss_g", "flags", "mse", "swd", "kid"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class TrainingLog:
    seed: int
    config: dict
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must increase")
        self.records.append(record)

    def eval_records(self) -> list[IterationRecord]:
        return [r for r in self.records if r.swd is not None]

    def series(self, name: str) -> np.ndarray:
        if name in ("mse", "swd", "kid"):
            return np.array([getattr(r, name) for r in self.eval_records()])
        return np.array([getattr(r, name) for r in self.records])

    def eval_iterations(self) -> np.ndarray:
        return np.array([r.iteration for r in self.eval_records()])

    def write_csv(self, path) -> None:
        """Deterministic columns only; wall-clock time goes to ``write_timing_csv``."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.records:
                writer.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "wall_ms"])
            for r in self.records:
                writer.writerow([r.iteration, f"{r.wall_ms:.3f}"])

    @property
    def total_ms(self) -> float:
        return float(sum(r.wall_ms for r in self.records))


@dataclass
class RunArtifacts:
    log: TrainingLog
    state: TrainState
    eval_latents: np.ndarray


def build_generator(config: TrainConfig, rng: np.random.Generator) -> PatchGenerator:
    if config.generator == "qgan":
        return QganGenerator(config.generator_config, rng=rng, spread=config.qgan_spread)
    return VqkanGenerator(config.generator_config)


def init_state(config: TrainConfig) -> tuple[TrainState, np.random.Generator, np.ndarray]:
    """Fresh state, the latent stream and the fixed evaluation latents for ``config.seed``."""
    disc_seq, latent_seq, eval_seq, gen_seq = np.random.SeedSequence(config.seed).spawn(4)
    gcfg = config.generator_config
    disc = disc_init(gcfg.image_len, np.random.default_rng(disc_seq))
    disc.seed = config.seed
    gen = build_generator(config, np.random.default_rng(gen_seq))
    eval_rng = np.random.default_rng(eval_seq)
    eval_latents = np.stack([sample_latent(eval_rng, gcfg.n_qubits) for _ in range(config.eval_size)])
    return TrainState(gen, disc, config), np.random.default_rng(latent_seq), eval_latents


def snapshot_dict(state: TrainState, eval_latents) -> dict:
    return {
        "iteration": state.iteration,
        "generator": state.generator.to_dict(),
        "discriminator": state.discriminator.to_dict(),
        "eval_latents": np.asarray(eval_latents).tolist(),
    }


def train(config: TrainConfig, dataset: Dataset, run_dir=None) -> RunArtifacts:
    """Run ``config.iterations`` single-image steps over ``dataset``.

    With ``run_dir`` set, the log CSVs, PGM grids at evaluation points and a
    final parameter snapshot are written there. The log is flushed even if the
    run aborts.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    gcfg = config.generator_config
    if dataset.images.shape[1] != gcfg.image_len:
        raise ValueError(f"dataset images have {dataset.images.shape[1]} pixels, generator emits {gcfg.image_len}")
    if len(dataset) < config.eval_size:
        raise ValueError(f"dataset needs at least {config.eval_size} images for evaluation")

    state, latent_rng, eval_latents = init_state(config)
    eval_real = dataset.images[: config.eval_size]
    order = np.arange(len(dataset))
    if config.shuffle:
        order = np.random.default_rng(np.random.SeedSequence([config.seed, 1])).permutation(len(dataset))
    tlog = TrainingLog(config.seed, config.to_dict())
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        (run_dir / "images").mkdir(parents=True, exist_ok=True)
        grid, gw, gh = image_grid(eval_real, dataset.width, dataset.height)
        write_pgm(run_dir / "images" / "real.pgm", grid, gw, gh)

    try:
        for it in range(config.iterations):
            z = sample_latent(latent_rng, gcfg.n_qubits)
            _, record = train_step(state, dataset.images[order[it % len(order)]], z)
            if record.iteration % config.eval_every == 0 or record.iteration == config.iterations:
                metrics = evaluate(state.generator, eval_latents, eval_real, config.swd_projections, config.metric_seed)
                record.mse, record.swd, record.kid = metrics["mse"], metrics["swd"], metrics["kid"]
                if run_dir is not None:
                    fake = generate_images(state.generator, eval_latents)
                    grid, gw, gh = image_grid(fake, dataset.width, dataset.height)
                    write_pgm(run_dir / "images" / f"iter_{record.iteration:06d}.pgm", grid, gw, gh)
                log.debug("iter %d swd %.4f kid %.4f", record.iteration, record.swd, record.kid)
            tlog.append(record)
    finally:
        if run_dir is not None:
            tlog.write_csv(run_dir / "training_log.csv")
            tlog.write_timing_csv(run_dir / "timing.csv")
            (run_dir / "snapshot.json").write_text(json.dumps(snapshot_dict(state, eval_latents), sort_keys=True, indent=1))
    return RunArtifacts(tlog, state, eval_latents)

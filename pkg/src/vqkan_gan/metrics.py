"""Image-set metrics and the pairwise seed-comparison test.

KID here is the unbiased squared MMD with the cubic polynomial kernel computed
directly on raw pixel vectors; no Inception features are involved.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import betainc


def as_image_set(images) -> np.ndarray:
    arr = np.asarray(images, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("an image set is a non-empty list of equal-length pixel vectors")
    return arr


def mse(a, b) -> float:
    a, b = as_image_set(a), as_image_set(b)
    if a.shape != b.shape:
        raise ValueError(f"image sets differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def random_directions(dim: int, n_projections: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def sliced_wasserstein(a, b, n_projections: int = 50, seed=0, p: int = 2) -> float:
    """Sliced Wasserstein-p distance between two equally sized sets.

    Averages ``W_p^p`` of the 1-D projections over random unit directions, then
    takes the p-th root.
    """
    a, b = as_image_set(a), as_image_set(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("image sets differ in image length")
    if a.shape[0] != b.shape[0]:
        raise ValueError("sliced Wasserstein here needs equally sized sets")
    dirs = random_directions(a.shape[1], n_projections, seed)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    per_projection = np.mean(np.abs(pa - pb) ** p, axis=0)
    return float(np.mean(per_projection) ** (1.0 / p))


def polynomial_kernel(x: np.ndarray, y: np.ndarray, degree: int = 3) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** degree


def kid(a, b) -> float:
    """Unbiased squared MMD between the two sets under the cubic polynomial kernel."""
    a, b = as_image_set(a), as_image_set(b)
    m, n = len(a), len(b)
    if m < 2 or n < 2:
        raise ValueError("KID needs at least two images per set")
    if a.shape[1] != b.shape[1]:
        raise ValueError("image sets differ in image length")
    k_aa = polynomial_kernel(a, a)
    k_bb = polynomial_kernel(b, b)
    k_ab = polynomial_kernel(a, b)
    term_a = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
    term_b = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * k_ab.mean())


# ---------------------------------------------------------------------------
# seed study
# ---------------------------------------------------------------------------


def student_t_two_sided(t: float, dof: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t."""
    if math.isinf(t):
        return 0.0
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def welch_t(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("Welch's test needs at least two samples per group")
    mx, my = x.mean(), y.mean()
    vx = x.var(ddof=1) / len(x)
    vy = y.var(ddof=1) / len(y)
    se2 = vx + vy
    if se2 == 0.0:
        if mx == my:
            return 0.0, 1.0
        return math.copysign(math.inf, mx - my), 0.0
    t = (mx - my) / math.sqrt(se2)
    dof = se2**2 / (vx**2 / (len(x) - 1) + vy**2 / (len(y) - 1))
    return float(t), student_t_two_sided(t, dof)


@dataclass
class SeedGroup:
    seed: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0:
            raise ValueError(f"seed {self.seed} has an empty series")


@dataclass
class BonferroniResult:
    seeds: list[int]
    t: np.ndarray
    p: np.ndarray
    significant: np.ndarray
    threshold: float


def bonferroni_matrix(groups: list[SeedGroup], alpha: float = 0.05, correction_divisor: float = 240) -> BonferroniResult:
    """Pairwise Welch tests; a pair is significant when p < alpha / correction_divisor."""
    if len(groups) < 2:
        raise ValueError("need at least two seed groups")
    k = len(groups)
    t = np.zeros((k, k))
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            tij, pij = welch_t(groups[i].values, groups[j].values)
            t[i, j], t[j, i] = tij, -tij
            p[i, j] = p[j, i] = pij
    threshold = alpha / correction_divisor
    return BonferroniResult([g.seed for g in groups], t, p, p < threshold, threshold)


def write_matrix_csv(path, labels, matrix, corner: str = "") -> None:
    """Square matrix with ``labels`` as header row and first column."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([corner, *labels])
        for label, row in zip(labels, matrix):
            writer.writerow([label, *(_fmt(v) for v in row)])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "failed"
    return repr(float(v))

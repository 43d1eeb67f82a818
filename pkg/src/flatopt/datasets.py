"""Synthetic classification datasets with bit-reproducible generation.

Generation is keyed by the library's counter-based generator, so the same
``(generator, seed)`` always yields the same bytes. Datasets round-trip
through a plain CSV format with header ``x_0,...,x_{d-1},label``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .rng import STREAM_DATASET, STREAM_SPLIT, philox_generator
from .records import format_float


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (n, d) float64
    targets: np.ndarray  # (n,) int labels in [0, num_classes)
    generator: str
    seed: int

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.targets.max()) + 1

    def batch(self):
        return self.inputs, self.targets


def make_two_moons(n: int, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Two interleaving unit semicircular arcs with optional Gaussian jitter.

    With ``noise = 0`` every point lies exactly on its arc. Class counts are
    ``n // 2`` and ``n - n // 2``.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    gen = philox_generator(seed, STREAM_DATASET)
    n0 = n // 2
    n1 = n - n0
    t0 = gen.uniform(0.0, np.pi, n0)
    t1 = gen.uniform(0.0, np.pi, n1)
    outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    inner = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    inputs = np.concatenate([outer, inner])
    if noise > 0.0:
        inputs = inputs + noise * gen.standard_normal(inputs.shape)
    targets = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return Dataset(inputs, targets, generator="two_moons", seed=seed)


def make_blobs(n: int, k: int = 3, spread: float = 0.5, seed: int = 0) -> Dataset:
    """``k`` isotropic Gaussian clusters, centers drawn uniformly in [-5, 5]^2."""
    if n <= 0 or k <= 0:
        raise ValueError(f"n and k must be positive, got n={n}, k={k}")
    gen = philox_generator(seed, STREAM_DATASET)
    centers = gen.uniform(-5.0, 5.0, (k, 2))
    counts = [n // k + (1 if i < n % k else 0) for i in range(k)]
    inputs = np.concatenate(
        [centers[i] + spread * gen.standard_normal((counts[i], 2)) for i in range(k)]
    )
    targets = np.concatenate([np.full(counts[i], i, dtype=np.int64) for i in range(k)])
    return Dataset(inputs, targets, generator="blobs", seed=seed)


GENERATORS = {"two_moons": make_two_moons, "blobs": make_blobs}


def split_dataset(dataset: Dataset, test_fraction: float, seed: int) -> tuple:
    """Deterministic shuffled train/test split; returns (train, test) Datasets."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    perm = philox_generator(seed, STREAM_SPLIT).permutation(dataset.n)
    n_test = max(1, int(round(dataset.n * test_fraction)))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    make = lambda idx, tag: Dataset(
        dataset.inputs[idx], dataset.targets[idx], f"{dataset.generator}/{tag}", dataset.seed
    )
    return make(train_idx, "train"), make(test_idx, "test")


def export_csv(dataset: Dataset, path) -> None:
    """Write ``x_0,...,x_{d-1},label`` rows with a header; floats keep 17 digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{j}" for j in range(dataset.d)] + ["label"])
        for row, label in zip(dataset.inputs, dataset.targets):
            writer.writerow([format_float(v) for v in row] + [int(label)])


def import_csv(path) -> Dataset:
    """Read a dataset written by :func:`export_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label" or not all(
            name == f"x_{j}" for j, name in enumerate(header[:-1])
        ):
            raise ShapeMismatch(f"unexpected dataset CSV header: {header}")
        inputs, targets = [], []
        for row in reader:
            inputs.append([float(v) for v in row[:-1]])
            targets.append(int(row[-1]))
    return Dataset(
        np.asarray(inputs, dtype=np.float64),
        np.asarray(targets, dtype=np.int64),
        generator="csv",
        seed=0,
    )

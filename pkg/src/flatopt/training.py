"""Deterministic minibatch training loop shared by the estimator and the CLI.

Epoch budgets follow the flops-parity convention when requested: optimizers
that backpropagate once per step (sgd, rsam, mfvi) receive twice the epoch
budget of the twice-backpropagating ones (sam, asam, fsam, vsam), and the
stepwise schedule stretches by the same factor, so every run spends the same
gradient-evaluation budget.
"""

import time
from dataclasses import replace

from .config import config_to_jsonable
from .datasets import make_blobs, make_two_moons, split_dataset
from .objectives import mlp_objective
from .optimizers import ONE_BACKPROP, init_state, make_config, step
from .records import EpochRow, RunRecord
from .rng import STREAM_SHUFFLE, philox_generator


def epoch_budget(optimizer: str, epochs: int, epoch_parity: str) -> tuple:
    """(effective_epochs, stretch_factor) under the configured parity rule."""
    if epoch_parity == "flops" and optimizer in ONE_BACKPROP:
        return 2 * epochs, 2
    return epochs, 1


def build_dataset(cfg: dict):
    if cfg["dataset"] == "two_moons":
        return make_two_moons(cfg["n"], noise=cfg["noise"], seed=cfg["seed"])
    return make_blobs(cfg["n"], k=cfg["k"], spread=cfg["spread"], seed=cfg["seed"])


def train_loop(objective, theta0, train_batch, config, epochs, batch_size, seed, on_epoch=None):
    """Run the optimizer for ``epochs`` passes over shuffled minibatches.

    The shuffle for epoch e is keyed by (seed, shuffle stream, e), so the
    batch sequence is independent of everything else that consumes
    randomness. Returns the final optimizer state.
    """
    inputs, labels = train_batch
    n = inputs.shape[0]
    state = init_state(config, theta0)
    for epoch in range(epochs):
        started = time.perf_counter()
        state = replace(state, epoch=epoch)
        perm = philox_generator(seed, STREAM_SHUFFLE, epoch).permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            state = step(state, objective, (inputs[idx], labels[idx]), config)
        if on_epoch is not None:
            on_epoch(epoch, state, (time.perf_counter() - started) * 1000.0)
    return state


def mean_sigma2_of(state, config) -> float:
    if config.learn_covariance:
        return float(state.sigma2.mean())
    return float(state.last_sigma_mean)


def run_training(cfg: dict) -> RunRecord:
    """Train the configured MLP on the configured synthetic dataset."""
    dataset = build_dataset(cfg)
    train, test = split_dataset(dataset, cfg["test_fraction"], cfg["seed"])
    widths = (dataset.d, *cfg["hidden"], dataset.num_classes)
    objective = mlp_objective(widths, label_smoothing=cfg["label_smoothing"])
    epochs, factor = epoch_budget(cfg["optimizer"], cfg["epochs"], cfg["epoch_parity"])
    config = make_config(
        cfg["optimizer"],
        p=objective.p,
        num_data=train.n,
        rho=cfg["rho"],
        sigma0=cfg["sigma0"],
        lr=cfg["lr"],
        lr_sigma=cfg["lr_sigma"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        schedule=cfg["schedule"].scaled(factor),
        seed=cfg["seed"],
        asam_rule=cfg["asam_rule"],
        fisher_damping=cfg["fisher_damping"],
    )
    theta0 = objective.init_params(cfg["seed"])
    rows = []

    def on_epoch(epoch, state, wall_ms):
        rows.append(
            EpochRow(
                epoch=epoch,
                train_loss=float(objective.value(state.mu, train.batch())),
                train_acc=float(objective.accuracy(state.mu, train.batch())),
                test_loss=float(objective.value(state.mu, test.batch())),
                test_acc=float(objective.accuracy(state.mu, test.batch())),
                mean_sigma2=mean_sigma2_of(state, config),
                wall_ms=wall_ms,
            )
        )

    train_loop(
        objective, theta0, train.batch(), config, epochs, cfg["batch_size"], cfg["seed"], on_epoch
    )
    record = RunRecord(
        config=config_to_jsonable(cfg),
        rows=rows,
        best_test_acc=max(row.test_acc for row in rows),
        seed=cfg["seed"],
    )
    record.validate()
    return record

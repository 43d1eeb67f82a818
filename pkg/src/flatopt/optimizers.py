"""The perturbed-gradient optimizer family.

One stepper, three axes:

* perturbation: ``worst_case`` (gradient ascent direction on the constraint
  ellipsoid), ``gaussian`` (random reparametrized draw), or ``none``;
* covariance: any spec from :mod:`flatopt.covariance`, optionally learned
  (diagonal, log-parameterized so variances stay positive);
* penalty: plain L2, a Gaussian-prior KL (whose mu-part is the same 2*alpha*mu
  pull with alpha = 1/(2*N*sigma0^2)), or none.

The named optimizers are configurations of these axes (``make_config``):
sgd, sam, asam, fsam, rsam (random perturbation, fixed isotropic), mfvi
(learned diagonal, one shared draw for the mu- and sigma-updates), and vsam
(worst-case perturbation with a learned diagonal).

Steps are pure: they take an ``OptimizerState`` and return a new one.
Momentum is heavy-ball on the final descent direction, and the stepwise
learning-rate schedule multiplies both the mu and sigma learning rates.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import CovarianceSpec, Diagonal, Isotropic, resolve_sigma, sigma_half_apply
from .errors import FlatOptError
from .rng import STREAM_OPTIMIZER, sample_eta
from .validation import check_param_vector

DEGENERATE_NORM = 1e-12

# gradient evaluations per step, used by the flops epoch-parity rule
ONE_BACKPROP = ("sgd", "rsam", "mfvi")
TWO_BACKPROP = ("sam", "asam", "fsam", "vsam")
OPTIMIZER_NAMES = ONE_BACKPROP + TWO_BACKPROP


# ---------------------------------------------------------------------------
# penalties


@dataclass(frozen=True)
class L2Penalty:
    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True)
class KLPenalty:
    """Gaussian-prior KL divided by the dataset size."""

    sigma0_sq: float
    num_data: int

    def __post_init__(self):
        if self.sigma0_sq <= 0 or self.num_data < 1:
            raise ValueError(
                f"need sigma0_sq > 0 and num_data >= 1, got {self.sigma0_sq}, {self.num_data}"
            )

    @property
    def alpha(self) -> float:
        return 1.0 / (2.0 * self.num_data * self.sigma0_sq)


@dataclass(frozen=True)
class NoPenalty:
    alpha: float = 0.0


Penalty = L2Penalty | KLPenalty | NoPenalty


def penalty_mu_gradient(penalty: Penalty, mu: np.ndarray) -> np.ndarray:
    return 2.0 * penalty.alpha * mu


def kl_sigma2_gradient(sigma2, penalty: Penalty) -> np.ndarray:
    """d/d(sigma_i^2) of KL/N; zero for non-KL penalties."""
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if not isinstance(penalty, KLPenalty):
        return np.zeros_like(sigma2)
    n, s0 = penalty.num_data, penalty.sigma0_sq
    return (1.0 / s0 - 1.0 / sigma2) / (2.0 * n)


# ---------------------------------------------------------------------------
# config and state


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant learning-rate multipliers keyed by epoch."""

    breakpoints: tuple = ()  # ((epoch, multiplier), ...), epochs strictly increasing

    def __post_init__(self):
        epochs = [e for e, _ in self.breakpoints]
        if any(later <= earlier for earlier, later in zip(epochs, epochs[1:])):
            raise ValueError(f"schedule epochs must be strictly increasing, got {epochs}")

    def scaled(self, factor: int) -> "StepSchedule":
        """Stretch breakpoints by an integer factor (used by epoch parity)."""
        return StepSchedule(tuple((e * factor, m) for e, m in self.breakpoints))


def apply_schedule(schedule: StepSchedule, epoch: int) -> float:
    """Multiplier at ``epoch``: 1 before the first breakpoint, then the last one passed."""
    mult = 1.0
    for breakpoint_epoch, m in schedule.breakpoints:
        if epoch >= breakpoint_epoch:
            mult = m
        else:
            break
    return mult


@dataclass(frozen=True)
class OptimizerConfig:
    perturbation: str = "none"  # none | worst_case | gaussian
    covariance: CovarianceSpec = Isotropic(0.0)
    learn_covariance: bool = False
    penalty: Penalty = NoPenalty()
    lr_mu: float = 0.1
    lr_sigma: float = 0.0
    momentum: float = 0.0
    schedule: StepSchedule = StepSchedule()
    seed: int = 0

    def __post_init__(self):
        if self.perturbation not in ("none", "worst_case", "gaussian"):
            raise ValueError(f"unknown perturbation {self.perturbation!r}")
        if self.lr_mu <= 0:
            raise ValueError(f"lr_mu must be positive, got {self.lr_mu}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.learn_covariance:
            if not isinstance(self.covariance, Diagonal):
                raise ValueError("learned covariance requires a Diagonal spec")
            if self.lr_sigma <= 0:
                raise ValueError("learned covariance requires lr_sigma > 0")


@dataclass(frozen=True)
class OptimizerState:
    mu: np.ndarray
    log_sigma2: np.ndarray | None  # phi with sigma_i^2 = exp(phi_i); None unless learned
    velocity: np.ndarray
    step_count: int = 0
    epoch: int = 0
    last_sigma_mean: float = 0.0  # diagnostic: mean of the last resolved diagonal

    @property
    def sigma2(self) -> np.ndarray | None:
        return None if self.log_sigma2 is None else np.exp(self.log_sigma2)


def init_state(config: OptimizerConfig, mu0) -> OptimizerState:
    mu0 = check_param_vector(mu0, name="mu0")
    log_sigma2 = None
    if config.learn_covariance:
        log_sigma2 = np.log(config.covariance.variances)
        if log_sigma2.size != mu0.size:
            raise FlatOptError(
                f"covariance has {log_sigma2.size} entries for {mu0.size} parameters"
            )
    return OptimizerState(mu=mu0, log_sigma2=log_sigma2, velocity=np.zeros(mu0.size))


# ---------------------------------------------------------------------------
# perturbations


def sam_perturbation(mu, grad, sigma_diag):
    """Worst-case first-order perturbation on the ellipsoid eps' Sigma^-1 eps <= p.

    Computed through the square-root factorization: g~ = Sigma^(1/2) g,
    eta = sqrt(p) g~ / |g~|, eps* = Sigma^(1/2) eta, which lands exactly on
    the constraint boundary (eps*' Sigma^-1 eps* = p). When |g~| falls below
    ``DEGENERATE_NORM`` the perturbation is zero and the degenerate flag is
    set instead of raising: a critical point just means a plain step.
    """
    mu = check_param_vector(mu, name="mu")
    grad = check_param_vector(grad, p=mu.size, name="grad")
    g_tilde = sigma_half_apply(sigma_diag, grad)
    norm = float(np.linalg.norm(g_tilde))
    if norm < DEGENERATE_NORM:
        return np.zeros(mu.size), True
    eta = math.sqrt(mu.size) * g_tilde / norm
    return sigma_half_apply(sigma_diag, eta), False


# ---------------------------------------------------------------------------
# shared step plumbing


def _resolved_sigma(state: OptimizerState, config: OptimizerConfig, per_example_grads=None):
    if config.learn_covariance:
        return np.exp(state.log_sigma2)
    return resolve_sigma(config.covariance, state.mu, per_example_grads)


def _descend(state, config, direction, new_log_sigma2=None, sigma_mean=0.0):
    mult = apply_schedule(config.schedule, state.epoch)
    velocity = config.momentum * state.velocity + direction
    mu = state.mu - config.lr_mu * mult * velocity
    return replace(
        state,
        mu=mu,
        velocity=velocity,
        log_sigma2=state.log_sigma2 if new_log_sigma2 is None else new_log_sigma2,
        step_count=state.step_count + 1,
        last_sigma_mean=sigma_mean,
    )


def _needs_per_example(config) -> bool:
    from .covariance import FisherAdaptive

    return isinstance(config.covariance, FisherAdaptive) and not config.learn_covariance


def _gradient_at_base(objective, state, batch, config):
    """Gradient at mu, plus per-example gradients when the Fisher rule needs them."""
    if _needs_per_example(config):
        per_example = objective.per_example_gradients(state.mu, batch)
        return per_example.mean(axis=0), per_example
    return objective.gradient(state.mu, batch), None


# ---------------------------------------------------------------------------
# the steps


def sgd_step(state, objective, batch, config) -> OptimizerState:
    """Plain (momentum) SGD with the configured penalty; one gradient evaluation."""
    grad = objective.gradient(state.mu, batch)
    return _descend(state, config, grad + penalty_mu_gradient(config.penalty, state.mu))


def sam_step(state, objective, batch, config) -> OptimizerState:
    """Worst-case perturbed step (fixed or adaptive covariance); two gradient evaluations."""
    g1, per_example = _gradient_at_base(objective, state, batch, config)
    sigma_diag = _resolved_sigma(state, config, per_example)
    eps, _degenerate = sam_perturbation(state.mu, g1, sigma_diag)
    g2 = objective.gradient(state.mu + eps, batch)
    direction = g2 + penalty_mu_gradient(config.penalty, state.mu)
    return _descend(state, config, direction, sigma_mean=float(sigma_diag.mean()))


def random_sam_step(state, objective, batch, config) -> OptimizerState:
    """Gaussian perturbed step with fixed covariance; one gradient evaluation."""
    sigma_diag = _resolved_sigma(state, config)
    eta = sample_eta(state.mu.size, config.seed, STREAM_OPTIMIZER, state.step_count)
    perturbed = state.mu + sigma_half_apply(sigma_diag, eta)
    grad = objective.gradient(perturbed, batch)
    direction = grad + penalty_mu_gradient(config.penalty, state.mu)
    return _descend(state, config, direction, sigma_mean=float(sigma_diag.mean()))


def mfvi_mu_sigma_gradients(objective, batch, mu, log_sigma2, eta, penalty):
    """Reparametrized gradients for one shared draw ``eta``.

    Returns ``(mu_direction, phi_gradient)`` where phi is log sigma^2. The
    data part of the phi gradient is the chain rule through
    theta_i = mu_i + exp(phi_i / 2) * eta_i, i.e. 0.5 * g_i * eta_i * sigma_i;
    the penalty part is the closed-form Gaussian KL gradient (per datum).
    """
    sigma2 = np.exp(log_sigma2)
    sigma = np.sqrt(sigma2)
    perturbed_grad = objective.gradient(mu + sigma * eta, batch)
    mu_direction = perturbed_grad + penalty_mu_gradient(penalty, mu)
    phi_data = 0.5 * perturbed_grad * eta * sigma
    phi_penalty = kl_sigma2_gradient(sigma2, penalty) * sigma2
    return mu_direction, phi_data + phi_penalty


def mfvi_step(state, objective, batch, config) -> OptimizerState:
    """Jointly update mu and the learned diagonal from one shared Gaussian draw."""
    eta = sample_eta(state.mu.size, config.seed, STREAM_OPTIMIZER, state.step_count)
    mu_direction, phi_grad = mfvi_mu_sigma_gradients(
        objective, batch, state.mu, state.log_sigma2, eta, config.penalty
    )
    mult = apply_schedule(config.schedule, state.epoch)
    new_phi = state.log_sigma2 - config.lr_sigma * mult * phi_grad
    return _descend(
        state,
        config,
        mu_direction,
        new_log_sigma2=new_phi,
        sigma_mean=float(np.exp(state.log_sigma2).mean()),
    )


def vsam_sigma2_gradient(grad, sigma2, penalty: Penalty) -> np.ndarray:
    """d/d(sigma_i^2) of the learned-geometry surrogate loss.

    Surrogate: sqrt(p)*sqrt(g' Sigma g) plus the KL terms that depend on
    Sigma, with g treated as a constant. When the weighted gradient norm
    vanishes the sqrt term is skipped (its gradient is undefined at zero).
    """
    grad = np.asarray(grad, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    p = grad.size
    weighted = float(np.dot(grad, sigma2 * grad))
    out = kl_sigma2_gradient(sigma2, penalty)
    if math.sqrt(weighted) >= DEGENERATE_NORM:
        out = out + math.sqrt(p) * grad * grad / (2.0 * math.sqrt(weighted))
    return out


def vsam_step(state, objective, batch, config) -> OptimizerState:
    """Worst-case perturbed mu-update plus a gradient step on the learned diagonal."""
    sigma2 = np.exp(state.log_sigma2)
    g1 = objective.gradient(state.mu, batch)
    eps, _degenerate = sam_perturbation(state.mu, g1, sigma2)
    g2 = objective.gradient(state.mu + eps, batch)
    mu_direction = g2 + penalty_mu_gradient(config.penalty, state.mu)
    phi_grad = vsam_sigma2_gradient(g1, sigma2, config.penalty) * sigma2
    mult = apply_schedule(config.schedule, state.epoch)
    new_phi = state.log_sigma2 - config.lr_sigma * mult * phi_grad
    return _descend(
        state, config, mu_direction, new_log_sigma2=new_phi, sigma_mean=float(sigma2.mean())
    )


def step(state, objective, batch, config) -> OptimizerState:
    """Dispatch to the configured step kind."""
    if config.perturbation == "none":
        return sgd_step(state, objective, batch, config)
    if config.perturbation == "worst_case":
        if config.learn_covariance:
            return vsam_step(state, objective, batch, config)
        return sam_step(state, objective, batch, config)
    if config.learn_covariance:
        return mfvi_step(state, objective, batch, config)
    return random_sam_step(state, objective, batch, config)


# ---------------------------------------------------------------------------
# named configurations


def make_config(
    name: str,
    p: int,
    num_data: int,
    rho: float = 0.05,
    sigma0: float = 1.0,
    lr: float = 0.1,
    lr_sigma: float = 0.01,
    momentum: float = 0.9,
    weight_decay: float = 0.0005,
    schedule: StepSchedule = StepSchedule(),
    seed: int = 0,
    asam_rule: str = "table1",
    fisher_damping: float = 1e-8,
) -> OptimizerConfig:
    """Build the configuration for a named optimizer.

    L2-penalized optimizers read ``weight_decay`` (alpha = weight_decay / 2,
    matching the 2*alpha*mu update convention); KL-penalized ones derive
    alpha from ``(sigma0, num_data)``. Learned diagonals start at the
    isotropic value rho^2 / p so every method shares the same initial
    perturbation scale.
    """
    from .covariance import FisherAdaptive, MuAdaptive

    if name not in OPTIMIZER_NAMES:
        raise ValueError(f"unknown optimizer {name!r}; choose one of {OPTIMIZER_NAMES}")
    l2 = L2Penalty(weight_decay / 2.0)
    kl = KLPenalty(sigma0 * sigma0, num_data)
    common = dict(lr_mu=lr, momentum=momentum, schedule=schedule, seed=seed)
    iso = Isotropic(rho)
    learned_init = Diagonal(np.full(p, max(rho, 1e-6) ** 2 / p))
    if name == "sgd":
        return OptimizerConfig(perturbation="none", covariance=Isotropic(0.0), penalty=l2, **common)
    if name == "sam":
        return OptimizerConfig(perturbation="worst_case", covariance=iso, penalty=l2, **common)
    if name == "asam":
        return OptimizerConfig(
            perturbation="worst_case", covariance=MuAdaptive(asam_rule), penalty=l2, **common
        )
    if name == "fsam":
        return OptimizerConfig(
            perturbation="worst_case",
            covariance=FisherAdaptive(damping=fisher_damping),
            penalty=l2,
            **common,
        )
    if name == "rsam":
        return OptimizerConfig(perturbation="gaussian", covariance=iso, penalty=kl, **common)
    if name == "mfvi":
        return OptimizerConfig(
            perturbation="gaussian",
            covariance=learned_init,
            learn_covariance=True,
            penalty=kl,
            lr_sigma=lr_sigma,
            **common,
        )
    # vsam
    return OptimizerConfig(
        perturbation="worst_case",
        covariance=learned_init,
        learn_covariance=True,
        penalty=kl,
        lr_sigma=lr_sigma,
        **common,
    )

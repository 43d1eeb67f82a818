"""Structured perturbation covariances.

All covariances used by the optimizer family are diagonal (or isotropic,
a special case), so a resolved covariance is always a strictly positive
length-p diagonal array. Four structures are supported:

* ``Isotropic(rho)``        -- (rho**2 / p) * I, the fixed Euclidean-ball geometry
* ``Diagonal(variances)``   -- free per-coordinate variances (learnable)
* ``MuAdaptive(...)``       -- parameter-magnitude-adaptive diagonal
* ``FisherAdaptive(...)``   -- empirical-Fisher diagonal from per-example gradients

``MuAdaptive`` follows the |1/mu_i| rule by default; because that rule is
singular at mu_i = 0, resolved entries are clamped into
[``MU_ADAPTIVE_FLOOR``, ``MU_ADAPTIVE_CEILING``]. The alternative
``weight_squared`` rule (mu_i**2, same clamp) is selectable since both
conventions appear in the adaptive-SAM literature.

``FisherAdaptive`` uses the empirical Fisher diagonal (mean of elementwise
squared per-example gradients) plus additive damping; ``mode="inverse"``
resolves to its elementwise inverse instead.
"""

from dataclasses import dataclass

import numpy as np

from .errors import MissingFisherData, NonPositiveVariance
from .validation import check_param_vector, check_sigma_diag

MU_ADAPTIVE_FLOOR = 1e-8
MU_ADAPTIVE_CEILING = 1e8


@dataclass(frozen=True)
class Isotropic:
    """Covariance (rho**2 / p) * I. ``rho = 0`` is allowed and means "no perturbation"."""

    rho: float

    def __post_init__(self):
        if self.rho < 0:
            raise NonPositiveVariance(f"rho must be nonnegative, got {self.rho}")


@dataclass(frozen=True)
class Diagonal:
    """Fixed (or learned) per-coordinate variances."""

    variances: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "variances", check_sigma_diag(self.variances, allow_zero=False)
        )


@dataclass(frozen=True)
class MuAdaptive:
    """Parameter-adaptive diagonal; ``rule`` is 'table1' (|1/mu_i|) or 'weight_squared' (mu_i**2)."""

    rule: str = "table1"

    def __post_init__(self):
        if self.rule not in ("table1", "weight_squared"):
            raise ValueError(f"unknown mu-adaptive rule {self.rule!r}")


@dataclass(frozen=True)
class FisherAdaptive:
    """Empirical-Fisher diagonal with additive damping; ``mode`` is 'fisher' or 'inverse'."""

    damping: float = 0.0
    mode: str = "fisher"

    def __post_init__(self):
        if self.damping < 0:
            raise ValueError(f"damping must be nonnegative, got {self.damping}")
        if self.mode not in ("fisher", "inverse"):
            raise ValueError(f"unknown fisher mode {self.mode!r}")


CovarianceSpec = Isotropic | Diagonal | MuAdaptive | FisherAdaptive


def empirical_fisher_diag(per_example_grads) -> np.ndarray:
    """Mean of elementwise squared per-example gradients, shape (p,)."""
    grads = np.atleast_2d(np.asarray(per_example_grads, dtype=np.float64))
    return np.mean(grads * grads, axis=0)


def resolve_sigma(spec: CovarianceSpec, mu, per_example_grads=None) -> np.ndarray:
    """Bind a covariance spec to a parameter vector, returning the concrete diagonal.

    The result has length p and is strictly positive, except for
    ``Isotropic(0.0)`` which resolves to all zeros (callers treat that as a
    disabled perturbation). Raises ``NonPositiveVariance`` if any resolved
    entry would be nonpositive, and ``MissingFisherData`` if a Fisher rule is
    requested without per-example gradients.
    """
    mu = check_param_vector(mu, name="mu")
    p = mu.size

    if isinstance(spec, Isotropic):
        return np.full(p, spec.rho * spec.rho / p)

    if isinstance(spec, Diagonal):
        return check_sigma_diag(spec.variances, p)

    if isinstance(spec, MuAdaptive):
        if spec.rule == "table1":
            with np.errstate(divide="ignore"):
                raw = np.abs(1.0 / np.where(mu == 0.0, np.inf, mu))
                raw = np.where(mu == 0.0, MU_ADAPTIVE_FLOOR, raw)
        else:
            raw = mu * mu
        return np.clip(raw, MU_ADAPTIVE_FLOOR, MU_ADAPTIVE_CEILING)

    if isinstance(spec, FisherAdaptive):
        if per_example_grads is None or len(per_example_grads) == 0:
            raise MissingFisherData("Fisher-adaptive covariance needs per-example gradients")
        fisher = empirical_fisher_diag(per_example_grads)
        if fisher.size != p:
            raise NonPositiveVariance(
                f"per-example gradients have length {fisher.size}, expected {p}"
            )
        diag = fisher + spec.damping
        if spec.mode == "inverse":
            diag = 1.0 / np.clip(diag, MU_ADAPTIVE_FLOOR, None)
        if np.any(diag <= 0.0):
            raise NonPositiveVariance("empirical Fisher diagonal has a nonpositive entry; add damping")
        return diag

    raise TypeError(f"unknown covariance spec {type(spec).__name__}")


def sigma_half_apply(sigma_diag, v) -> np.ndarray:
    """Apply the diagonal square root: elementwise sqrt(sigma_i) * v_i."""
    sigma_diag = check_sigma_diag(sigma_diag, allow_zero=True)
    v = check_param_vector(v, p=sigma_diag.size, name="v")
    return np.sqrt(sigma_diag) * v

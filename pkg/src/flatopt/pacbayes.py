"""Closed-form Gaussian KL divergence and the generalization bound built on it.

Natural logarithms throughout. The bound's O(p) prior-covering term has no
specified constant, so it is exposed as ``c_cover`` and the bound is
reported both with and without it.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDelta
from .validation import check_param_vector, check_sigma_diag


def gaussian_kl(mu, sigma_diag, sigma0_sq: float) -> float:
    """KL( N(mu, diag(sigma)) || N(0, sigma0^2 I) ), closed form.

    Computed coordinatewise as 0.5 * sum[ r - 1 - ln r ] + |mu|^2 / (2
    sigma0^2) with r = sigma_i^2 / sigma0^2, which is a sum of nonnegative
    terms (zero only at the prior).
    """
    mu = check_param_vector(mu, name="mu")
    sigma_diag = check_sigma_diag(sigma_diag, mu.size)
    if sigma0_sq <= 0:
        raise ValueError(f"sigma0_sq must be positive, got {sigma0_sq}")
    ratio = sigma_diag / sigma0_sq
    kl = 0.5 * float(np.sum(ratio - 1.0 - np.log(ratio))) + float(mu @ mu) / (2.0 * sigma0_sq)
    return max(kl, 0.0)


def gamma_radius(p: int, n: int, form: str = "main") -> float:
    """High-probability norm radius of a standard Gaussian in p dimensions.

    ``main`` is sqrt(p) * (1 + sqrt(ln n / p)); ``appendix`` replaces the
    leading sqrt(p) with p (the two statements of the radius disagree and
    both are available; main is the default since gamma^2 ~ p + 2 sqrt(p ln
    n) is the scale a squared Gaussian norm actually concentrates at).
    """
    if p < 1 or n < 1:
        raise ValueError(f"need p, n >= 1, got p={p}, n={n}")
    if form not in ("main", "appendix"):
        raise ValueError(f"form must be 'main' or 'appendix', got {form!r}")
    lead = math.sqrt(p) if form == "main" else float(p)
    return lead * (1.0 + math.sqrt(math.log(n) / p))


@dataclass(frozen=True)
class BoundInputs:
    p: int
    n: int
    delta: float
    empirical_sam_loss: float
    kl_value: float
    l_max: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got {self.n}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidDelta(f"delta must lie in (0, 1), got {self.delta}")
        if self.kl_value < 0.0 or self.l_max < 0.0:
            raise ValueError("kl_value and l_max must be nonnegative")


def pac_bound(inputs: BoundInputs, c_cover: float = 1.0, include_cover: bool = True) -> float:
    """Evaluate the high-probability generalization bound.

    empirical + L_max / sqrt(n) + sqrt( (KL + ln(n/delta) + c_cover * p) /
    (2 (n-1)) ), where the last numerator term is the O(p) covering cost
    (dropped when ``include_cover`` is false).
    """
    cover = c_cover * inputs.p if include_cover else 0.0
    numerator = inputs.kl_value + math.log(inputs.n / inputs.delta) + cover
    return (
        inputs.empirical_sam_loss
        + inputs.l_max / math.sqrt(inputs.n)
        + math.sqrt(numerator / (2.0 * (inputs.n - 1)))
    )


def bound_report(inputs: BoundInputs, c_cover: float = 1.0, gamma_form: str = "main") -> dict:
    """One-row summary used by the CLI: radius plus both bound variants."""
    return {
        "p": inputs.p,
        "n": inputs.n,
        "delta": inputs.delta,
        "kl": inputs.kl_value,
        "gamma": gamma_radius(inputs.p, inputs.n, gamma_form),
        "bound_with_cover": pac_bound(inputs, c_cover, include_cover=True),
        "bound_without_cover": pac_bound(inputs, include_cover=False),
    }

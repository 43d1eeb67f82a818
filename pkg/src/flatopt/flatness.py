"""Numerical verification of the flatness-seeking structure of the optimizers.

Compares three views of a perturbed loss around a point:

* the exact worst case over the constraint ellipsoid (dense-sweep oracle,
  p <= 3 only: trustworthy beats scalable);
* the Gaussian-smoothed loss (Monte Carlo with a counter-based seed);
* the Taylor surrogates: gradient-norm penalty, Hessian-trace penalty, and
  the squared-trace + gradient-descent-bias corrections that describe the
  discrete dynamics.

Also houses the Hutchinson trace estimator for large models, the
smoothed-vs-worst-case upper-bound check, the basin-selection experiment on
the two-well landscape, and the landscape grid evaluation behind the CLI.
"""

import math
from dataclasses import dataclass

import numpy as np

from .covariance import Isotropic, resolve_sigma
from .errors import DimensionTooLarge
from .objectives import HESSIAN_LIMIT
from .optimizers import NoPenalty, OptimizerConfig, init_state, step
from .records import format_float
from .rng import STREAM_ANALYSIS, philox_generator
from .validation import check_param_vector, check_sigma_diag

_MC_CHUNK = 20_000


def _unit_directions(p: int, n: int) -> np.ndarray:
    """Deterministic quasi-uniform directions on the unit sphere in R^p."""
    if p == 1:
        return np.array([[1.0], [-1.0]])
    if p == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # p == 3: Fibonacci sphere
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + math.sqrt(5.0)) * i
    return np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=1
    )


def worst_case_ball_max(objective, mu, sigma_diag, resolution: int = 1_000_000, batch=None):
    """Max of L over the ellipsoid eps' Sigma^-1 eps <= p by dense sweep.

    Boundary and interior are both covered (directions x radii). Only the
    dimensions where the sweep is actually dense are allowed: p <= 3.
    """
    mu = check_param_vector(mu, name="mu")
    p = mu.size
    if p > 3:
        raise DimensionTooLarge(f"brute-force ball max only supports p <= 3, got {p}")
    sigma_diag = check_sigma_diag(sigma_diag, p, allow_zero=True)
    if np.all(sigma_diag == 0.0):
        return float(objective.value(mu, batch))
    n_radii = max(2, int(round(resolution ** (1.0 / 3.0))) if p > 1 else resolution)
    n_dirs = max(4, resolution // n_radii) if p > 1 else 2
    dirs = _unit_directions(p, n_dirs)
    radii = np.linspace(0.0, 1.0, n_radii)  # includes the exact boundary r = 1
    scale = math.sqrt(p) * np.sqrt(sigma_diag)
    best = -np.inf
    for r in radii:
        points = mu + r * scale * dirs
        best = max(best, float(np.max(objective.value_batch(points, batch))))
    return best


def mc_smoothed_loss(objective, mu, sigma_diag, n_samples: int, seed: int, batch=None):
    """Monte-Carlo mean and standard error of L(mu + Sigma^(1/2) eta)."""
    if n_samples < 2:
        raise ValueError(f"need n_samples >= 2, got {n_samples}")
    mu = check_param_vector(mu, name="mu")
    sigma_diag = check_sigma_diag(sigma_diag, mu.size, allow_zero=True)
    if np.all(sigma_diag == 0.0):
        return float(objective.value(mu, batch)), 0.0
    root = np.sqrt(sigma_diag)
    values = np.empty(n_samples)
    for block_index, start in enumerate(range(0, n_samples, _MC_CHUNK)):
        size = min(_MC_CHUNK, n_samples - start)
        eta = philox_generator(seed, STREAM_ANALYSIS, block_index).standard_normal(
            (size, mu.size)
        )
        values[start : start + size] = objective.value_batch(mu + root * eta, batch)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n_samples))
    return mean, se


def fitted_loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x), ignoring zero residuals."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    mask = (ys > 0.0) & np.isfinite(ys)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[mask]), np.log(ys[mask]), 1)[0])


def prop1_check(
    objective, mu, rho_sequence, base_sigma_diag=None, resolution: int = 1_000_000, batch=None
):
    """Residual of the gradient-norm surrogate against the exact ball max.

    For each radius rho (decreasing), Sigma(rho) = rho^2 * base (base
    defaults to I/p, the isotropic shape) and

        error(rho) = | max_ellipsoid L  -  (L(mu) + sqrt(p) |g|_Sigma) |.

    Returns a dict with the error sequence and the fitted log-log slope;
    the slope is ~2 wherever the second-order Taylor error dominates.
    """
    mu = check_param_vector(mu, name="mu")
    p = mu.size
    rhos = [float(r) for r in rho_sequence]
    base = (
        np.full(p, 1.0 / p)
        if base_sigma_diag is None
        else check_sigma_diag(base_sigma_diag, p)
    )
    value = float(objective.value(mu, batch))
    grad = objective.gradient(mu, batch)
    errors = []
    for rho in rhos:
        sigma = rho * rho * base
        exact = worst_case_ball_max(objective, mu, sigma, resolution, batch)
        surrogate = value + math.sqrt(p) * math.sqrt(float(grad @ (sigma * grad)))
        errors.append(abs(exact - surrogate))
    return {
        "rhos": np.array(rhos),
        "errors": np.array(errors),
        "slope": fitted_loglog_slope(rhos, errors),
    }


def trace_sigma_h(objective, mu, sigma_diag, batch=None) -> float:
    """Tr[Sigma H(mu)] for diagonal Sigma via the exact Hessian."""
    H = objective.hessian(mu, batch)
    return float(np.sum(np.asarray(sigma_diag) * np.diag(H)))


def trace_sigma_h_squared(objective, mu, sigma_diag, batch=None) -> float:
    """Tr[Sigma H(mu)^2] >= 0 for diagonal positive Sigma."""
    H = objective.hessian(mu, batch)
    return float(np.sum(np.asarray(sigma_diag) * np.sum(H * H, axis=1)))


def prop3_check(objective, mu, sigma_diag, n_samples: int = 100_000, seed: int = 0, batch=None):
    """Smoothed loss against L(mu) + Tr[Sigma H]/2; returns (mc, formula, z)."""
    mu = check_param_vector(mu, name="mu")
    mc_mean, se = mc_smoothed_loss(objective, mu, sigma_diag, n_samples, seed, batch)
    formula = float(objective.value(mu, batch)) + 0.5 * trace_sigma_h(
        objective, mu, sigma_diag, batch
    )
    diff = mc_mean - formula
    z = 0.0 if (se == 0.0 and diff == 0.0) else diff / se if se > 0.0 else float("inf")
    return mc_mean, formula, float(z)


def hutchinson_trace(objective, mu, sigma_diag, n_probes: int, seed: int = 0, batch=None):
    """Unbiased Rademacher estimate of Tr[Sigma H] via Hessian-vector products.

    Intended for models past the dense-Hessian limit (p > 64); returns
    (estimate, standard error).
    """
    mu = check_param_vector(mu, name="mu")
    sigma_diag = check_sigma_diag(sigma_diag, mu.size)
    root = np.sqrt(sigma_diag)
    gen = philox_generator(seed, STREAM_ANALYSIS)
    probes = np.empty(n_probes)
    for i in range(n_probes):
        v = gen.integers(0, 2, mu.size) * 2.0 - 1.0
        z = root * v
        probes[i] = float(z @ objective.hvp(mu, z, batch))
    return float(probes.mean()), float(probes.std(ddof=1) / math.sqrt(n_probes))


@dataclass(frozen=True)
class EffectiveLossReport:
    """Term-by-term decomposition of a perturbed effective loss."""

    which_row: str  # 'sam_row' | 'mfvi_row'
    base_loss: float
    grad_norm_penalty: float  # sqrt(p) |g|_Sigma
    trace_penalty: float  # Tr[Sigma H] / 2 (may be negative at saddles)
    trace_sq_penalty: float  # (delta/4) Tr[Sigma H^2] >= 0
    gd_bias: float  # (delta/4) |g|^2
    delta: float
    rho: float = 0.0

    @property
    def total(self) -> float:
        if self.which_row == "sam_row":
            return self.base_loss + self.grad_norm_penalty + self.gd_bias
        return self.base_loss + self.gd_bias + self.trace_sq_penalty

    def csv_row(self) -> str:
        return ",".join(
            [self.which_row]
            + [
                format_float(v)
                for v in (
                    self.base_loss,
                    self.grad_norm_penalty,
                    self.trace_penalty,
                    self.trace_sq_penalty,
                    self.gd_bias,
                    self.delta,
                    self.rho,
                )
            ]
        )


EFFECTIVE_LOSS_CSV_HEADER = "row_kind,L,grad_norm_pen,trace_pen,trace_sq_pen,gd_bias,delta,rho"


def effective_loss_csv(reports) -> str:
    return "\n".join([EFFECTIVE_LOSS_CSV_HEADER] + [r.csv_row() for r in reports]) + "\n"


def modified_loss(kind, objective, mu, sigma_diag, delta, rho: float = 0.0, batch=None):
    """Assemble an effective-loss decomposition at ``mu``.

    ``sam_row`` totals L + sqrt(p)|g|_Sigma + (delta/4)|g|^2; ``mfvi_row``
    totals L + (delta/4)|g|^2 + (delta/4)Tr[Sigma H^2]. The Hessian-trace
    terms require an exact Hessian and are reported as 0 beyond its limit
    (they never enter the sam_row total).
    """
    if kind not in ("sam_row", "mfvi_row"):
        raise ValueError(f"kind must be 'sam_row' or 'mfvi_row', got {kind!r}")
    mu = check_param_vector(mu, name="mu")
    sigma_diag = check_sigma_diag(sigma_diag, mu.size, allow_zero=True)
    value = float(objective.value(mu, batch))
    grad = objective.gradient(mu, batch)
    p = mu.size
    grad_norm_pen = math.sqrt(p) * math.sqrt(float(grad @ (sigma_diag * grad)))
    if objective.p <= HESSIAN_LIMIT:
        trace_pen = 0.5 * trace_sigma_h(objective, mu, sigma_diag, batch)
        trace_sq_pen = 0.25 * delta * trace_sigma_h_squared(objective, mu, sigma_diag, batch)
    else:
        if kind == "mfvi_row":
            raise DimensionTooLarge("mfvi_row needs the exact Hessian (p <= 64)")
        trace_pen = 0.0
        trace_sq_pen = 0.0
    return EffectiveLossReport(
        which_row=kind,
        base_loss=value,
        grad_norm_penalty=grad_norm_pen,
        trace_penalty=trace_pen,
        trace_sq_penalty=trace_sq_pen,
        gd_bias=0.25 * delta * float(grad @ grad),
        delta=float(delta),
        rho=float(rho),
    )


def upper_bound_check(
    objective,
    mu,
    sigma_diag,
    n_samples: int = 50_000,
    seed: int = 0,
    resolution: int = 200_000,
    batch=None,
):
    """Check smoothed loss <= worst-case ball max (within 3 standard errors).

    Returns (mc_mean, ball_max, holds, margin) with margin = ball_max +
    3*SE - mc_mean (negative when the relation fails).
    """
    mc_mean, se = mc_smoothed_loss(objective, mu, sigma_diag, n_samples, seed, batch)
    ball = worst_case_ball_max(objective, mu, sigma_diag, resolution, batch)
    margin = ball + 3.0 * se - mc_mean
    return mc_mean, ball, bool(margin >= 0.0), float(margin)


# ---------------------------------------------------------------------------
# basin-selection experiment (wide-vs-sharp attraction under each optimizer)


def basin_fractions(
    objective,
    rho: float,
    n_inits: int = 500,
    n_steps: int = 400,
    n_cooldown: int = 200,
    lr: float = 0.05,
    bounds=(-4.0, 4.0),
    seed: int = 0,
    optimizers=("sgd", "sam", "rsam"),
):
    """Fraction of uniform random inits that converge to the wide minimum.

    Runs the actual optimizer steps (no penalty, no momentum) from each
    init, then a short plain-gradient cooldown so the endpoint settles into
    whichever basin the perturbed phase selected (the worst-case update has
    spurious rest points a distance rho from any critical point, and the
    Gaussian update jitters forever; the cooldown resolves both to a
    minimum). Endpoints are classified by the nearest polished minimum; the
    wide one is the one with the smaller top curvature. Returns
    {optimizer: (fraction, wide_count)}.
    """
    from dataclasses import replace

    minima = objective.minima()
    curvatures = [np.linalg.eigvalsh(objective.hessian(m)).max() for m in minima]
    wide_min = minima[int(np.argmin(curvatures))]
    sharp_min = minima[int(np.argmax(curvatures))]
    inits = philox_generator(seed, STREAM_ANALYSIS).uniform(
        bounds[0], bounds[1], (n_inits, 2)
    )
    base_configs = {
        "sgd": OptimizerConfig(perturbation="none", penalty=NoPenalty(), lr_mu=lr),
        "sam": OptimizerConfig(
            perturbation="worst_case", covariance=Isotropic(rho), penalty=NoPenalty(), lr_mu=lr
        ),
        "rsam": OptimizerConfig(
            perturbation="gaussian", covariance=Isotropic(rho), penalty=NoPenalty(), lr_mu=lr
        ),
    }
    cooldown_cfg = OptimizerConfig(perturbation="none", penalty=NoPenalty(), lr_mu=lr)
    results = {}
    for name in optimizers:
        wide = 0
        for trajectory_index, mu0 in enumerate(inits):
            cfg = replace(base_configs[name], seed=seed + trajectory_index)
            state = init_state(cfg, mu0)
            for _ in range(n_steps):
                state = step(state, objective, None, cfg)
            for _ in range(n_cooldown):
                state = step(state, objective, None, cooldown_cfg)
            if np.linalg.norm(state.mu - wide_min) < np.linalg.norm(state.mu - sharp_min):
                wide += 1
        results[name] = (wide / n_inits, wide)
    return results


# ---------------------------------------------------------------------------
# landscape grids (the four panels emitted by the CLI)


def landscape_grids(
    objective,
    bounds=(-4.0, 4.0),
    resolution: int = 200,
    rho: float = 8.0,
    mc_samples: int = 200,
    max_points: int = 512,
    seed: int = 0,
):
    """Evaluate the four landscape transformations over one lattice.

    Returns (axis, grids) where grids maps panel name -> (resolution,
    resolution) array: 'original' L, 'smoothed' Monte-Carlo average under
    N(0, (rho^2/2) I) noise (one shared noise set across the lattice),
    'ball_max' the exact worst case within the radius-rho disk, and
    'taylor' the gradient-norm surrogate L + rho*|g|.
    """
    if objective.p != 2:
        raise DimensionTooLarge("landscape grids are only defined for p = 2")
    axis = np.linspace(bounds[0], bounds[1], resolution)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    original = objective.value_batch(grid)
    grids = {"original": original.reshape(resolution, resolution)}
    if rho == 0.0:
        grids["smoothed"] = grids["original"].copy()
        grids["ball_max"] = grids["original"].copy()
        grids["taylor"] = grids["original"].copy()
        return axis, grids

    sigma_scalar = rho / math.sqrt(2.0)  # per-coordinate std of (rho^2/p) I at p = 2
    eta = philox_generator(seed, STREAM_ANALYSIS).standard_normal((mc_samples, 2))
    smoothed = np.zeros(grid.shape[0])
    for offset in sigma_scalar * eta:
        smoothed += objective.value_batch(grid + offset)
    grids["smoothed"] = (smoothed / mc_samples).reshape(resolution, resolution)

    n_radii = max(2, int(math.sqrt(max_points / 8)))
    n_dirs = max(8, max_points // n_radii)
    dirs = _unit_directions(2, n_dirs)
    radii = np.linspace(0.0, rho, n_radii)
    ball = np.full(grid.shape[0], -np.inf)
    for r in radii:
        for d in dirs:
            ball = np.maximum(ball, objective.value_batch(grid + r * d))
    grids["ball_max"] = ball.reshape(resolution, resolution)

    grad_norms = np.linalg.norm(objective.gradient_batch(grid), axis=1)
    grids["taylor"] = (original + rho * grad_norms).reshape(resolution, resolution)
    return axis, grids


def grid_csv(axis, grid) -> str:
    """Serialize one panel as x,y,value rows (x outer, y inner)."""
    lines = ["x,y,value"]
    n = axis.size
    for i in range(n):
        x_text = format_float(axis[i])
        for j in range(n):
            lines.append(f"{x_text},{format_float(axis[j])},{format_float(grid[i, j])}")
    return "\n".join(lines) + "\n"

"""Named verification suites behind the ``verify`` CLI subcommand.

Each suite runs a battery of numerical checks at pinned tolerances and
returns rows of {check, value, tolerance, pass}. Fixed internal seeds make
every suite deterministic. ``all`` fans the suites out across a small
thread pool capped by the FLATOPT_THREADS environment variable.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .backward_error import backward_error_trajectory_check, delta_order_study
from .covariance import Isotropic, resolve_sigma
from .errors import UnknownSuite
from .flatness import prop1_check, prop3_check, upper_bound_check
from .objectives import quadratic_objective, quartic_objective, toy_landscape
from .pacbayes import BoundInputs, gamma_radius, gaussian_kl, pac_bound
from .rng import philox_generator

SLOPE_BAND_SECOND_ORDER = (1.8, 2.2)
SLOPE_BAND_MODIFIED = (1.6, 2.4)
SLOPE_BAND_ORIGINAL = (0.8, 1.2)


def _row(check, value, tolerance, ok):
    return {"check": check, "value": value, "tolerance": tolerance, "pass": bool(ok)}


def _band_row(check, value, band):
    return _row(check, float(value), list(band), band[0] <= value <= band[1])


def suite_prop1():
    rows = []
    result = prop1_check(
        quartic_objective([1.0, 2.0]),
        np.array([1.0, 0.8]),
        [0.1 / 2**k for k in range(5)],
        resolution=300_000,
    )
    rows.append(_band_row("prop1_quartic_slope", result["slope"], SLOPE_BAND_SECOND_ORDER))
    result = prop1_check(
        toy_landscape(), np.array([0.5, 0.7]), [0.2 / 2**k for k in range(5)], resolution=300_000
    )
    rows.append(_band_row("prop1_toy_slope", result["slope"], SLOPE_BAND_SECOND_ORDER))
    linear = quadratic_objective([0.0, 0.0], b=[-1.0, -2.0])
    result = prop1_check(linear, np.zeros(2), [0.1, 0.05], resolution=1_000_000)
    rows.append(_row("prop1_linear_residual", float(result["errors"].max()), 1e-6,
                     result["errors"].max() < 1e-6))
    return rows


def _trajectory_rows(kind, label):
    obj = quadratic_objective([1.0, 3.0])
    mu0 = np.array([1.0, -2.0])
    sigma = np.full(2, 1e-8 / 2)  # rho = 1e-4
    comparison = backward_error_trajectory_check(kind, obj, mu0, 0.01, 100, sigma, seed=1)
    ratio = comparison.deviation_from_original / max(comparison.deviation_from_modified, 1e-300)
    rows = [_row(f"{label}_closer_ratio", float(ratio), 2.0, ratio >= 2.0)]
    study = delta_order_study(kind, obj, mu0, 0.01, 100, sigma, seed=1)
    rows.append(_band_row(f"{label}_slope_modified", study["slope_modified"], SLOPE_BAND_MODIFIED))
    rows.append(_band_row(f"{label}_slope_original", study["slope_original"], SLOPE_BAND_ORIGINAL))
    return rows


def suite_prop2():
    return _trajectory_rows("sam", "prop2_sam")


def suite_prop3():
    gen = philox_generator(77, 0)
    within = 0
    for case in range(20):
        p = int(gen.integers(1, 17))
        obj = quadratic_objective(np.exp(gen.uniform(-1, 1, p)), b=gen.standard_normal(p))
        mu = gen.standard_normal(p)
        sigma = np.exp(gen.uniform(-5, -2, p))
        _, _, z = prop3_check(obj, mu, sigma, n_samples=100_000, seed=1000 + case)
        within += abs(z) < 3.0
    rows = [_row("prop3_z_within_3sigma", float(within), 19.0, within >= 19)]
    _, formula, z = prop3_check(
        quadratic_objective([1.0, 2.0, 3.0]),
        np.zeros(3),
        resolve_sigma(Isotropic(0.3), np.zeros(3)),
        seed=3,
    )
    rows.append(_row("prop3_arithmetic_trace_term", float(formula), 0.09,
                     abs(formula - 0.09) < 1e-12))
    rows.append(_row("prop3_arithmetic_z", float(z), 3.0, abs(z) < 3.0))
    return rows


def suite_prop4():
    return _trajectory_rows("mfvi", "prop4_mfvi")


def suite_upperbound():
    gen = philox_generator(60, 0)
    convex_holds = 0
    for _ in range(10):
        p = int(gen.integers(1, 4))
        obj = quadratic_objective(np.exp(gen.uniform(-1, 1, p)), b=gen.standard_normal(p))
        mu = gen.standard_normal(p)
        sigma = resolve_sigma(Isotropic(float(gen.uniform(0.05, 0.5))), mu)
        _, _, holds, _ = upper_bound_check(
            obj, mu, sigma, n_samples=20_000, resolution=100_000, seed=int(gen.integers(1e6))
        )
        convex_holds += holds
    rows = [_row("upperbound_convex_holds", float(convex_holds), 10.0, convex_holds == 10)]
    toy = toy_landscape()
    gen = philox_generator(7, 0)
    toy_holds = 0
    for i in range(50):
        mu = gen.uniform(-4, 4, 2)
        sigma = resolve_sigma(Isotropic(float(gen.uniform(0.05, 1.0))), mu)
        _, _, holds, _margin = upper_bound_check(
            toy, mu, sigma, n_samples=20_000, resolution=100_000, seed=100 + i
        )
        toy_holds += holds
    rows.append(_row("upperbound_toy_holds_of_50", float(toy_holds), 48.0, toy_holds >= 48))
    return rows


def suite_kl():
    value = gaussian_kl(np.zeros(2), np.full(2, 2.0), 1.0)
    target = 1.0 - math.log(2.0)
    rows = [_row("kl_one_minus_ln2", float(value), 1e-10, abs(value - target) <= 1e-10)]
    from scipy.integrate import quad

    def quadrature(mu, s2, s0):
        def integrand(x):
            log_q = -((x - mu) ** 2) / (2 * s2) - 0.5 * math.log(2 * math.pi * s2)
            log_p = -(x**2) / (2 * s0) - 0.5 * math.log(2 * math.pi * s0)
            return math.exp(log_q) * (log_q - log_p)

        width = 12 * math.sqrt(max(s2, s0))
        return quad(integrand, mu - width, mu + width, limit=200)[0]

    gen = philox_generator(42, 0)
    max_err = 0.0
    for _ in range(100):
        mu = float(gen.uniform(-3, 3))
        s2 = float(np.exp(gen.uniform(-2, 2)))
        s0 = float(np.exp(gen.uniform(-2, 2)))
        err = abs(gaussian_kl(np.array([mu]), np.array([s2]), s0) - quadrature(mu, s2, s0))
        max_err = max(max_err, err)
    rows.append(_row("kl_quadrature_max_err", max_err, 1e-8, max_err <= 1e-8))
    gen = philox_generator(43, 0)
    min_kl = min(
        gaussian_kl(gen.uniform(-2, 2, 3), np.exp(gen.uniform(-1, 1, 3)), 1.0)
        for _ in range(1000)
    )
    rows.append(_row("kl_nonnegative_min", float(min_kl), 0.0, min_kl >= 0.0))
    return rows


def suite_bound():
    gamma = gamma_radius(2, 100)
    rows = [_row("bound_gamma_p2_n100", float(gamma), 1e-3, abs(gamma - 3.5601) <= 1e-3)]
    gen = philox_generator(44, 0)
    violations = 0
    for _ in range(1000):
        n = int(gen.integers(2, 100_000))
        inputs = BoundInputs(
            p=int(gen.integers(0, 100)),
            n=n,
            delta=float(gen.uniform(0.01, 0.99)),
            empirical_sam_loss=float(gen.uniform(0, 1)),
            kl_value=float(gen.uniform(0, 20)),
            l_max=float(gen.uniform(0, 2)),
        )
        base = pac_bound(inputs)
        larger_n = BoundInputs(inputs.p, 2 * n, inputs.delta, inputs.empirical_sam_loss,
                               inputs.kl_value, inputs.l_max)
        more_kl = BoundInputs(inputs.p, n, inputs.delta, inputs.empirical_sam_loss,
                              inputs.kl_value * 2 + 0.1, inputs.l_max)
        tighter_delta = BoundInputs(inputs.p, n, inputs.delta / 2, inputs.empirical_sam_loss,
                                    inputs.kl_value, inputs.l_max)
        violations += pac_bound(larger_n) > base + 1e-12
        violations += pac_bound(more_kl) <= base
        violations += pac_bound(tighter_delta) < base - 1e-12
    rows.append(_row("bound_monotonicity_violations", float(violations), 0.0, violations == 0))
    return rows


SUITES = {
    "prop1": suite_prop1,
    "prop2": suite_prop2,
    "prop3": suite_prop3,
    "prop4": suite_prop4,
    "upperbound": suite_upperbound,
    "kl": suite_kl,
    "bound": suite_bound,
}


def worker_count() -> int:
    env = os.environ.get("FLATOPT_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return min(4, os.cpu_count() or 1)


def run_suite(name: str) -> dict:
    """Run one suite (or 'all'); returns {suite, checks, pass}."""
    if name == "all":
        ordered = list(SUITES)
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            futures = {suite: pool.submit(SUITES[suite]) for suite in ordered}
        checks = []
        for suite in ordered:
            checks.extend(futures[suite].result())
    elif name in SUITES:
        checks = SUITES[name]()
    else:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return {"suite": name, "checks": checks, "pass": all(c["pass"] for c in checks)}

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from flatopt.errors import InvalidDelta, NonPositiveVariance
from flatopt.pacbayes import BoundInputs, bound_report, gamma_radius, gaussian_kl, pac_bound
from flatopt.rng import philox_generator


def kl_quadrature_1d(mu, sigma_sq, sigma0_sq):
    """Oracle: numerical quadrature of the KL integrand for scalar Gaussians."""

    def integrand(x):
        q = math.exp(-((x - mu) ** 2) / (2 * sigma_sq)) / math.sqrt(2 * math.pi * sigma_sq)
        log_q = -((x - mu) ** 2) / (2 * sigma_sq) - 0.5 * math.log(2 * math.pi * sigma_sq)
        log_p = -(x**2) / (2 * sigma0_sq) - 0.5 * math.log(2 * math.pi * sigma0_sq)
        return q * (log_q - log_p)

    center, width = mu, 12 * math.sqrt(max(sigma_sq, sigma0_sq))
    value, _err = quad(integrand, center - width, center + width, limit=200)
    return value


# ---------------------------------------------------------------------------
# gaussian_kl


def test_kl_zero_at_prior():
    assert gaussian_kl(np.zeros(3), np.full(3, 2.0), 2.0) == 0.0


def test_kl_scalar_shift_case():
    # p=1, mu=1, sigma^2 = sigma0^2 = 1 -> 0.5
    assert gaussian_kl(np.array([1.0]), np.array([1.0]), 1.0) == pytest.approx(0.5, abs=1e-12)
    assert gaussian_kl(np.array([1.0]), np.array([1.0]), 1.0) == pytest.approx(
        kl_quadrature_1d(1.0, 1.0, 1.0), abs=1e-8
    )


def test_kl_doubled_variance_case():
    # p=2, mu=0, Sigma = diag(2, 2), sigma0^2 = 1 -> 1 - ln 2
    value = gaussian_kl(np.zeros(2), np.full(2, 2.0), 1.0)
    assert value == pytest.approx(1.0 - math.log(2.0), abs=1e-10)
    oracle = 2 * kl_quadrature_1d(0.0, 2.0, 1.0)
    assert value == pytest.approx(oracle, abs=1e-8)


def test_kl_matches_quadrature_on_random_scalar_cases():
    gen = philox_generator(42, 0)
    for _ in range(100):
        mu = float(gen.uniform(-3.0, 3.0))
        sigma_sq = float(np.exp(gen.uniform(-2.0, 2.0)))
        sigma0_sq = float(np.exp(gen.uniform(-2.0, 2.0)))
        closed = gaussian_kl(np.array([mu]), np.array([sigma_sq]), sigma0_sq)
        assert closed == pytest.approx(kl_quadrature_1d(mu, sigma_sq, sigma0_sq), abs=1e-8)


@settings(deadline=None, max_examples=200)
@given(
    mu=st.lists(st.floats(-10, 10), min_size=1, max_size=6),
    log_sigma=st.lists(st.floats(-4, 4), min_size=1, max_size=6),
    sigma0_sq=st.floats(0.01, 100.0),
)
def test_kl_nonnegative_property(mu, log_sigma, sigma0_sq):
    p = min(len(mu), len(log_sigma))
    value = gaussian_kl(np.array(mu[:p]), np.exp(np.array(log_sigma[:p])), sigma0_sq)
    assert value >= 0.0


def test_kl_zero_only_at_prior():
    gen = philox_generator(43, 0)
    for _ in range(1000):
        mu = gen.uniform(-2, 2, 3)
        sigma = np.exp(gen.uniform(-1, 1, 3))
        value = gaussian_kl(mu, sigma, 1.0)
        at_prior = np.allclose(mu, 0.0, atol=1e-12) and np.allclose(sigma, 1.0, atol=1e-12)
        if not at_prior:
            assert value > 0.0


def test_kl_rejects_bad_variances():
    with pytest.raises(NonPositiveVariance):
        gaussian_kl(np.zeros(2), np.array([1.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        gaussian_kl(np.zeros(2), np.ones(2), 0.0)


# ---------------------------------------------------------------------------
# gamma radius


def test_gamma_main_form_value():
    # sqrt(2) * (1 + sqrt(ln 100 / 2))
    oracle = math.sqrt(2.0) * (1.0 + math.sqrt(math.log(100.0) / 2.0))
    assert gamma_radius(2, 100) == pytest.approx(oracle, abs=1e-12)
    assert gamma_radius(2, 100) == pytest.approx(3.5601, abs=1e-3)


def test_gamma_at_n_equal_one():
    assert gamma_radius(5, 1) == pytest.approx(math.sqrt(5.0), abs=1e-15)


def test_gamma_increasing_in_n():
    values = [gamma_radius(4, n) for n in (10, 100, 1_000, 10_000, 100_000, 1_000_000)]
    assert all(later > earlier for earlier, later in zip(values, values[1:]))


def test_gamma_appendix_form():
    assert gamma_radius(4, 100, form="appendix") == pytest.approx(
        4.0 * (1.0 + math.sqrt(math.log(100.0) / 4.0))
    )
    with pytest.raises(ValueError):
        gamma_radius(2, 100, form="footnote")


# ---------------------------------------------------------------------------
# bound


def test_bound_collapses_to_empirical_loss_for_huge_n():
    inputs = BoundInputs(
        p=10, n=10**9, delta=0.05, empirical_sam_loss=0.31, kl_value=5.0, l_max=1.0
    )
    assert pac_bound(inputs) == pytest.approx(0.31, abs=1e-3)


def test_bound_simple_arithmetic_case():
    # kl=0, no cover, n=101, delta=0.5, L_max=0, empirical=0
    inputs = BoundInputs(p=0, n=101, delta=0.5, empirical_sam_loss=0.0, kl_value=0.0, l_max=0.0)
    oracle = math.sqrt(math.log(101.0 / 0.5) / (2.0 * 100.0))
    assert pac_bound(inputs, include_cover=False) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(0.16291, abs=1e-4)


def test_bound_monotone_in_kl():
    base = dict(p=4, n=500, delta=0.1, empirical_sam_loss=0.2, l_max=2.0)
    values = [pac_bound(BoundInputs(kl_value=kl, **base)) for kl in (0.0, 1.0, 2.0, 4.0, 8.0)]
    assert all(later > earlier for earlier, later in zip(values, values[1:]))


def test_bound_monotonicity_sweep():
    gen = philox_generator(44, 0)
    for _ in range(200):
        n = int(gen.integers(2, 10_000))
        inputs = BoundInputs(
            p=int(gen.integers(0, 50)),
            n=n,
            delta=float(gen.uniform(0.01, 0.99)),
            empirical_sam_loss=float(gen.uniform(0, 1)),
            kl_value=float(gen.uniform(0, 10)),
            l_max=float(gen.uniform(0, 2)),
        )
        b = pac_bound(inputs)
        # nonincreasing in n
        bigger_n = BoundInputs(
            p=inputs.p,
            n=2 * n,
            delta=inputs.delta,
            empirical_sam_loss=inputs.empirical_sam_loss,
            kl_value=inputs.kl_value,
            l_max=inputs.l_max,
        )
        assert pac_bound(bigger_n) <= b + 1e-12
        # smaller delta -> larger bound
        tighter = BoundInputs(
            p=inputs.p,
            n=n,
            delta=inputs.delta / 2,
            empirical_sam_loss=inputs.empirical_sam_loss,
            kl_value=inputs.kl_value,
            l_max=inputs.l_max,
        )
        assert pac_bound(tighter) >= b - 1e-12


def test_bound_input_validation():
    with pytest.raises(InvalidDelta):
        BoundInputs(p=1, n=10, delta=0.0, empirical_sam_loss=0.0, kl_value=0.0, l_max=0.0)
    with pytest.raises(InvalidDelta):
        BoundInputs(p=1, n=10, delta=1.0, empirical_sam_loss=0.0, kl_value=0.0, l_max=0.0)
    with pytest.raises(ValueError):
        BoundInputs(p=1, n=1, delta=0.5, empirical_sam_loss=0.0, kl_value=0.0, l_max=0.0)


def test_bound_report_fields():
    inputs = BoundInputs(p=2, n=100, delta=0.1, empirical_sam_loss=0.4, kl_value=3.0, l_max=1.0)
    report = bound_report(inputs, c_cover=1.0)
    assert set(report) == {"p", "n", "delta", "kl", "gamma", "bound_with_cover", "bound_without_cover"}
    assert report["bound_with_cover"] > report["bound_without_cover"]
    assert report["gamma"] == pytest.approx(gamma_radius(2, 100))

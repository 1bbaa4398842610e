import math

import numpy as np
import pytest
from scipy import special, stats

from posi_bounds.distributions import (
    beta_upper_quantile,
    draw_noise,
    f_upper_quantile,
    f_upper_tail,
    format_dof,
    nct_cdf,
    nct_quantile,
    normal_cdf,
    normal_quantile,
    parse_dof,
    rough_t_quantile_bound,
    sample_chi,
    sample_std_normal_vector,
    t_two_sided_quantile,
    validate_dof,
)
from posi_bounds.errors import DomainError
from posi_bounds.rng import RngStream


def test_dof_parsing():
    assert parse_dof("inf") == math.inf
    assert parse_dof("INF") == math.inf
    assert parse_dof("12") == 12.0
    assert format_dof(math.inf) == "inf"
    assert format_dof(12.0) == 12
    for bad in ("0", "-3", "2.5", "abc", -math.inf):
        with pytest.raises(DomainError):
            parse_dof(bad)
    assert validate_dof(5) == 5.0


def test_normal_quantile():
    assert math.isclose(normal_quantile(0.975), 1.959964, abs_tol=1e-6)
    assert math.isclose(normal_cdf(normal_quantile(0.3)), 0.3, rel_tol=1e-12)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            normal_quantile(bad)


def test_t_two_sided_quantile():
    assert math.isclose(t_two_sided_quantile(10, 0.05), stats.t.ppf(0.975, 10), rel_tol=1e-12)
    assert math.isclose(t_two_sided_quantile(math.inf, 0.05), 1.959964, abs_tol=1e-6)


def test_beta_upper_quantile_matches_scipy():
    for u in (0.9, 0.5, 0.05, 1e-3):
        assert math.isclose(beta_upper_quantile(u, 0.5, 9.5), stats.beta.isf(u, 0.5, 9.5), rel_tol=1e-8)


def test_beta_upper_quantile_endpoints_and_monotonicity():
    levels = np.linspace(0.0, 1.0, 101)
    values = beta_upper_quantile(levels, 0.5, 4.0)
    assert values[0] == pytest.approx(1.0)
    assert values[-1] == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.diff(values) <= 0)


def test_beta_upper_quantile_extreme_levels():
    # log-space accuracy far below machine epsilon
    a, b = 0.5, 19.5
    for log10_u in (-30, -100, -200):
        u = 10.0**log10_u
        t = beta_upper_quantile(u, a, b)
        assert 0 < t < 1
        assert math.isclose(math.log(special.betainc(b, a, 1.0 - t)), math.log(u), rel_tol=1e-4)


def test_beta_upper_quantile_rejects_bad_input():
    with pytest.raises(DomainError):
        beta_upper_quantile(1.5, 0.5, 2.0)
    with pytest.raises(DomainError):
        beta_upper_quantile(0.5, 0.0, 2.0)


def test_f_upper_tail():
    assert math.isclose(f_upper_tail(2.0, 3, 10), stats.f.sf(2.0, 3, 10), rel_tol=1e-12)
    assert math.isclose(f_upper_tail(2.0, 3, math.inf), stats.chi2.sf(6.0, 3), rel_tol=1e-12)
    assert f_upper_tail(0.0, 3, 10) == pytest.approx(1.0)
    assert f_upper_tail(math.inf, 3, 10) == 0.0
    with pytest.raises(DomainError):
        f_upper_tail(-1.0, 3, 10)


def test_f_upper_quantile_inverts_tail():
    for r in (5, 50, math.inf):
        x = f_upper_quantile(0.05, 4, r)
        assert math.isclose(f_upper_tail(x, 4, r), 0.05, rel_tol=1e-9)


def test_nct_cdf_matches_scipy():
    for t, mu, r in [(1.0, 0.0, 5), (3.0, 2.0, 10), (6.0, 4.0, 30), (-0.5, 1.0, 3)]:
        assert math.isclose(nct_cdf(t, mu, r), stats.nct.cdf(t, r, mu), abs_tol=1e-7)


def test_nct_quantile():
    assert math.isclose(nct_quantile(0.0, math.inf, 0.975), 1.959964, abs_tol=1e-6)
    assert math.isclose(nct_quantile(0.0, 10, 0.975), stats.t.ppf(0.975, 10), abs_tol=1e-8)
    assert math.isclose(nct_quantile(3.0, 20, 0.9), stats.nct.ppf(0.9, 20, 3.0), rel_tol=1e-7)
    assert nct_quantile(3.0, 5, 0.975) > nct_quantile(3.0, 50, 0.975) > nct_quantile(3.0, math.inf, 0.975)
    with pytest.raises(DomainError):
        nct_quantile(-1.0, 10, 0.5)


def test_rough_t_quantile_bound():
    assert math.isclose(rough_t_quantile_bound(0.0, math.inf, 0.05), math.sqrt(2 * math.log(40)), rel_tol=1e-12)
    assert math.isclose(rough_t_quantile_bound(0.0, math.inf, 0.05), 2.7162, abs_tol=1e-4)
    assert rough_t_quantile_bound(1.0, 4, 0.05) == math.inf


@pytest.mark.parametrize("mu", [0.0, 1.5, 4.0])
@pytest.mark.parametrize("r", [100, 1000, math.inf])
@pytest.mark.parametrize("eta", [0.05, 0.01])
def test_rough_bound_dominates_quantile(mu, r, eta):
    assert rough_t_quantile_bound(mu, r, eta) >= nct_quantile(mu, r, 1 - eta)


def test_draw_noise_is_reproducible():
    first = draw_noise(RngStream(5, 2).generator(), 10, 4, 7)
    second = draw_noise(RngStream(5, 2).generator(), 10, 4, 7)
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    xi, scale = draw_noise(RngStream(5, 2).generator(), 10, 4, math.inf)
    np.testing.assert_array_equal(xi, first[0])
    np.testing.assert_array_equal(scale, np.ones(10))


def test_samplers():
    assert sample_chi(math.inf, RngStream(1)) == 1.0
    draws = np.array([sample_chi(8, RngStream(1, j)) for j in range(4000)])
    assert abs(np.mean(draws**2) - 1.0) < 0.05
    vector = sample_std_normal_vector(6, RngStream(3))
    np.testing.assert_array_equal(vector, sample_std_normal_vector(6, RngStream(3)))
    assert vector.shape == (6,)


def test_streams_differ():
    a = RngStream(9, 0).generator().standard_normal(5)
    b = RngStream(9, 1).generator().standard_normal(5)
    assert not np.array_equal(a, b)
    with pytest.raises(DomainError):
        RngStream(-1)
    with pytest.raises(DomainError):
        RngStream(0, 2**64)


@pytest.mark.parametrize("r", [3, 10, math.inf])
@pytest.mark.parametrize("u", [0.05, 0.5, 0.975])
def test_nct_quantile_is_nondecreasing_in_noncentrality(r, u):
    quantiles = [nct_quantile(mu, r, u) for mu in (0.0, 0.5, 1.0, 2.5, 5.0, 10.0)]
    assert all(a <= b + 1e-9 for a, b in zip(quantiles, quantiles[1:]))

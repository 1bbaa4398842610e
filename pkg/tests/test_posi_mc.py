import math

import numpy as np
import pytest
from scipy import special

from posi_bounds.bounds import u_bar, u_orth, u_rip, u_sparse
from posi_bounds.design_core import DesignMatrix, ModelFamily, contrast_set, make_equicorr, make_gaussian, make_identity
from posi_bounds.errors import DomainError, TooFewRepsError
from posi_bounds.posi_mc import (
    coverage_sim,
    estimate_gauss_width,
    estimate_K,
    posi_intervals,
    sample_gamma,
    simulate_gamma,
    stream_gamma,
)
from posi_bounds.rip import delta
from posi_bounds.rng import RngStream


def orthogonal_K(p, alpha):
    """Closed-form PoSI constant of an orthogonal design with known variance."""
    return float(special.ndtri((1.0 + (1.0 - alpha) ** (1.0 / p)) / 2.0))


@pytest.fixture(scope="module")
def identity_contrasts():
    return contrast_set(make_identity(10), ModelFamily.sparse(10, 3))


def test_orthogonal_oracle(identity_contrasts):
    estimate = estimate_K(identity_contrasts, 0.05, math.inf, reps=20000, seed=1)
    assert math.isclose(orthogonal_K(10, 0.05), 2.80, abs_tol=0.01)
    assert abs(estimate.k_hat - orthogonal_K(10, 0.05)) < 0.05
    assert estimate.k_ci[0] <= estimate.k_hat <= estimate.k_ci[1]
    assert estimate.k_se > 0


@pytest.mark.slow
def test_orthogonal_oracle_million_reps(identity_contrasts):
    estimate = estimate_K(identity_contrasts, 0.05, math.inf, reps=10**6, seed=1, workers=4)
    assert abs(estimate.k_hat - orthogonal_K(10, 0.05)) < 0.02


def test_heavier_tails_with_finite_r(identity_contrasts):
    known = estimate_K(identity_contrasts, 0.05, math.inf, reps=10000, seed=3)
    studentized = estimate_K(identity_contrasts, 0.05, 5, reps=10000, seed=3)
    assert studentized.k_hat > known.k_hat
    assert studentized.gauss_width_hat == known.gauss_width_hat


def test_worker_count_does_not_change_estimate(identity_contrasts):
    single = estimate_K(identity_contrasts, 0.05, 8, reps=9000, seed=11, workers=1)
    threaded = estimate_K(identity_contrasts, 0.05, 8, reps=9000, seed=11, workers=3)
    assert single == threaded


def test_same_seed_same_estimate(identity_contrasts):
    first = estimate_K(identity_contrasts, 0.1, math.inf, reps=5000, seed=42)
    second = estimate_K(identity_contrasts, 0.1, math.inf, reps=5000, seed=42)
    assert first == second
    assert first != estimate_K(identity_contrasts, 0.1, math.inf, reps=5000, seed=43)


def test_estimate_is_monotone_in_alpha(identity_contrasts):
    draws = simulate_gamma(identity_contrasts, math.inf, reps=8000, seed=5)
    assert draws.estimate(0.01).k_hat >= draws.estimate(0.05).k_hat >= draws.estimate(0.2).k_hat


def test_single_draw_matches_first_replicate(identity_contrasts):
    draws = simulate_gamma(identity_contrasts, 7, reps=1, seed=8)
    assert sample_gamma(identity_contrasts, 7, RngStream(8, 0)) == pytest.approx(draws.gamma_r[0], rel=1e-15)


def test_estimate_rejects_bad_arguments(identity_contrasts):
    with pytest.raises(TooFewRepsError):
        estimate_K(identity_contrasts, 0.05, math.inf, reps=999, seed=0)
    with pytest.raises(DomainError):
        estimate_K(identity_contrasts, 1.5, math.inf, reps=1000, seed=0)
    with pytest.raises(DomainError):
        estimate_K(identity_contrasts, 0.05, 2.5, reps=1000, seed=0)


def test_gauss_width_below_sparsity_bound():
    for seed, (n, p, s) in enumerate([(40, 8, 2), (60, 10, 3), (30, 6, 4)]):
        contrasts = contrast_set(make_gaussian(n, p, seed=seed), ModelFamily.sparse(p, s))
        width = estimate_gauss_width(contrasts, reps=4000, seed=seed)
        assert width.mean <= u_sparse(p, s) + 3 * width.se


def test_gauss_width_on_identity_below_orthogonal_bound(identity_contrasts):
    width = estimate_gauss_width(identity_contrasts, reps=4000, seed=2)
    assert width.mean <= u_orth(10) + 3 * width.se


def test_posi_intervals_on_identity():
    X = make_identity(3)
    Y = np.array([1.0, -2.0, 0.5])
    intervals = posi_intervals(X, Y, ModelFamily.sparse(3, 2), sigma_hat=2.0, K=1.5)
    assert len(intervals.center) == 9
    np.testing.assert_allclose(intervals.half_width, 3.0)
    np.testing.assert_allclose(intervals.center[:3], Y)
    assert intervals.covers(intervals.center)
    assert not intervals.covers(intervals.upper + 1.0)
    with pytest.raises(DomainError):
        posi_intervals(X, Y, ModelFamily.sparse(3, 1), sigma_hat=0.0, K=1.0)


def test_coverage_extremes():
    X = make_identity(4)
    family = ModelFamily.sparse(4, 2)
    mu = np.arange(4.0)
    assert coverage_sim(X, mu, 1.0, family, 0.05, math.inf, 0.0, reps=500, seed=1).coverage == 0.0
    assert coverage_sim(X, mu, 1.0, family, 0.05, math.inf, 50.0, reps=500, seed=1).coverage == 1.0


def test_coverage_at_exact_constant():
    X = make_identity(3)
    reps = 8000
    result = coverage_sim(
        X, np.zeros(3), 1.0, ModelFamily.sparse(3, 3), 0.05, math.inf, orthogonal_K(3, 0.05), reps=reps, seed=4
    )
    assert abs(result.coverage - 0.95) <= 4 * math.sqrt(0.95 * 0.05 / reps)
    assert result.nominal == pytest.approx(0.95)


def test_coverage_is_deterministic_across_workers():
    X = make_gaussian(20, 4, seed=3)
    family = ModelFamily.sparse(4, 2)
    args = (X, np.ones(20), 1.5, family, 0.05, 10, 2.5)
    assert coverage_sim(*args, reps=9000, seed=2, workers=1) == coverage_sim(*args, reps=9000, seed=2, workers=4)


@pytest.mark.slow
def test_coverage_with_estimated_and_bounding_constants():
    X = make_identity(5)
    family = ModelFamily.sparse(5, 5)
    contrasts = contrast_set(X, family)
    k_hat = estimate_K(contrasts, 0.05, math.inf, reps=10**6, seed=21, workers=4).k_hat
    reps = 10000
    se = math.sqrt(0.95 * 0.05 / reps)

    estimated = coverage_sim(X, np.zeros(5), 1.0, family, 0.05, math.inf, k_hat, reps=reps, seed=22)
    assert abs(estimated.coverage - 0.95) <= 3 * se

    bounding = coverage_sim(
        X, np.zeros(5), 1.0, family, 0.05, math.inf, u_bar(u_sparse(5, 5), 0.05, math.inf), reps=reps, seed=23
    )
    assert bounding.coverage >= 0.95 - 3 * se


SUITE = [(40, 8, 2), (60, 10, 3), (30, 6, 4), (100, 12, 4), (50, 12, 2)]


@pytest.mark.slow
@pytest.mark.parametrize("n,p,s", SUITE)
def test_gauss_width_bounds_on_suite(n, p, s):
    X = make_gaussian(n, p, seed=n + p + s)
    width = estimate_gauss_width(contrast_set(X, ModelFamily.sparse(p, s)), reps=10**5, seed=p, workers=4)
    assert width.mean <= u_sparse(p, s) + 3 * width.se
    d = delta(X, s).value
    if d < 1:
        assert width.mean <= u_rip(p, s, d) + 3 * width.se


def test_single_contrast_is_half_normal():
    contrasts = contrast_set(make_identity(3), ModelFamily.explicit(3, [(0,)]))
    draws = simulate_gamma(contrasts, math.inf, reps=10**6, seed=6, workers=2)
    assert abs(draws.gauss_width().mean - math.sqrt(2 / math.pi)) <= 0.003
    assert sample_gamma(contrasts, math.inf, RngStream(6, 0)) == pytest.approx(draws.gamma_inf[0], rel=1e-15)


def test_gamma_concentrates_around_its_mean():
    contrasts = contrast_set(make_gaussian(30, 8, seed=2), ModelFamily.sparse(8, 3))
    draws = simulate_gamma(contrasts, math.inf, reps=20000, seed=9)
    mean = draws.gauss_width().mean
    for t in (1.0, 2.0, 3.0):
        bound = math.exp(-t * t / 2)
        exceed = float(np.mean(draws.gamma_inf > mean + t))
        assert exceed <= bound + 3 * math.sqrt(bound / draws.reps)


def test_stream_gamma_matches_materialized_contrasts(monkeypatch):
    monkeypatch.setattr("posi_bounds.design_core.MODEL_CHUNK", 7)
    X = make_gaussian(30, 6, seed=4)
    family = ModelFamily.sparse(6, 3)
    streamed = stream_gamma(X, family, 8, reps=5000, seed=7, block_size=1024)
    held = simulate_gamma(contrast_set(X, family), 8, reps=5000, seed=7, block_size=1024)
    np.testing.assert_allclose(streamed.draws.gamma_inf, held.gamma_inf, rtol=1e-12)
    np.testing.assert_array_equal(streamed.draws.scale, held.scale)
    assert streamed.contrasts == len(contrast_set(X, family))
    assert streamed.models == 6 + 15 + 20


def test_stream_gamma_is_deterministic_across_workers():
    X = make_equicorr(16, 8, 0.2)
    family = ModelFamily.sparse(16, 3)
    results = [stream_gamma(X, family, math.inf, reps=3000, seed=1, workers=w, block_size=512) for w in (1, 2, 8)]
    for other in results[1:]:
        np.testing.assert_array_equal(other.draws.gamma_inf, results[0].draws.gamma_inf)


def test_stream_gamma_skips_rank_deficient_models():
    X = DesignMatrix(np.hstack([np.eye(4)[:, :3], np.eye(4)[:, :1]]))
    family = ModelFamily.sparse(4, 2)
    streamed = stream_gamma(X, family, math.inf, reps=1000, seed=0, on_rank_deficient="skip")
    assert streamed.skipped == [(0, 3)]
    assert streamed.contrasts == 4 + 2 * 5
    with pytest.raises(TooFewRepsError):
        stream_gamma(X, family, math.inf, reps=0, seed=0, on_rank_deficient="skip")

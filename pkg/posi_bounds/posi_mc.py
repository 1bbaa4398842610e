"""
Monte Carlo estimation of PoSI constants.

Replicates are drawn in fixed-size blocks; block b uses the random stream
(seed, b), so every run with the same seed and replicate count produces the
same draws whatever the number of worker threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np
from scipy import special, stats

from .design_core import (
    DEFAULT_ENUMERATION_CAP,
    ContrastSet,
    DesignMatrix,
    Model,
    ModelFamily,
    contrast_set,
    iter_contrast_chunks,
)
from .distributions import draw_noise, format_dof, validate_dof
from .errors import DomainError, InvalidFamilyError, TooFewRepsError
from .rng import RngStream

logger = logging.getLogger(__name__)

MIN_REPS = 1000
CI_LEVEL = 0.99
DEFAULT_BLOCK_SIZE = 4096
# Upper bound on the entries of one contrast-by-replicate product.
PRODUCT_ENTRIES = 1 << 22


class McMean(NamedTuple):
    mean: float
    se: float


@dataclass(frozen=True)
class PosiEstimate:
    alpha: float
    r: float
    reps: int
    k_hat: float
    k_ci: Tuple[float, float]
    k_se: float
    gauss_width_hat: float
    gauss_width_se: float
    seed: int

    def to_record(self) -> dict:
        return {
            "alpha": self.alpha,
            "r": format_dof(self.r),
            "reps": self.reps,
            "k_hat": self.k_hat,
            "k_ci": list(self.k_ci),
            "k_se": self.k_se,
            "gauss_width_hat": self.gauss_width_hat,
            "gauss_width_se": self.gauss_width_se,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class GammaDraws:
    """
    Per-replicate draws of max |w^t xi| (``gamma_inf``) and of the variance
    divisor N (``scale``). gamma_r = gamma_inf / N.
    """

    gamma_inf: np.ndarray
    scale: np.ndarray
    r: float
    seed: int

    @property
    def reps(self) -> int:
        return len(self.gamma_inf)

    @property
    def gamma_r(self) -> np.ndarray:
        return self.gamma_inf / self.scale

    def gauss_width(self) -> McMean:
        return McMean(
            float(np.mean(self.gamma_inf)),
            float(np.std(self.gamma_inf, ddof=1) / math.sqrt(self.reps)),
        )

    def estimate(self, alpha: float) -> PosiEstimate:
        """
        The empirical 1 - alpha quantile of gamma_r and its 0.99 order-statistic interval.

        The point estimate is the order statistic of rank ceil((1 - alpha) B).
        The interval ranks come from the Binomial(B, 1 - alpha) law of the
        number of draws below the true quantile, so the interval is
        distribution free.
        """
        if not 0 < alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
        reps = self.reps
        if reps < MIN_REPS:
            raise TooFewRepsError(f"need at least {MIN_REPS} replicates, got {reps}")

        ordered = np.sort(self.gamma_r)
        level = 1.0 - alpha
        rank = min(max(math.ceil(level * reps - 1e-9), 1), reps)
        tail = (1.0 - CI_LEVEL) / 2.0
        lo_rank = min(max(int(stats.binom.ppf(tail, reps, level)), 1), rank)
        hi_rank = max(min(int(stats.binom.ppf(1.0 - tail, reps, level)) + 1, reps), rank)

        k_lo, k_hat, k_hi = (float(ordered[j - 1]) for j in (lo_rank, rank, hi_rank))
        width = self.gauss_width()
        return PosiEstimate(
            alpha=alpha,
            r=self.r,
            reps=reps,
            k_hat=k_hat,
            k_ci=(k_lo, k_hi),
            k_se=(k_hi - k_lo) / (2.0 * float(special.ndtri(1.0 - tail))),
            gauss_width_hat=width.mean,
            gauss_width_se=width.se,
            seed=self.seed,
        )


@dataclass(frozen=True)
class PosiIntervals:
    """Simultaneous intervals center +- half_width, one per (model, covariate) pair."""

    models: List[Model]
    model_of: np.ndarray
    covariates: np.ndarray
    ranks: np.ndarray
    center: np.ndarray
    half_width: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    def covers(self, targets) -> bool:
        """True when every target lies in its interval."""
        return bool(np.all(np.abs(np.asarray(targets) - self.center) <= self.half_width))


@dataclass(frozen=True)
class CoverageEstimate:
    coverage: float
    se: float
    reps: int
    nominal: float


# -------------------------------------------------------------------- helpers
def map_blocks(run, reps: int, block_size: int, workers: int):
    sizes = [min(block_size, reps - start) for start in range(0, reps, block_size)]
    tasks = list(enumerate(sizes))
    logger.info("Simulating %s replicates in %s blocks on %s worker(s)", reps, len(tasks), workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda task: run(*task), tasks))
    return [run(*task) for task in tasks]


def _max_abs_projection(w: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """max over rows of |w xi_b| for every replicate b (rows of xi)."""
    rows = max(1, PRODUCT_ENTRIES // max(len(xi), 1))
    best = np.zeros(len(xi))
    for start in range(0, len(w), rows):
        np.maximum(best, np.abs(w[start : start + rows] @ xi.T).max(axis=0), out=best)
    return best


def _check_contrasts(contrasts: ContrastSet):
    if len(contrasts) == 0:
        raise DomainError("the contrast set is empty")


def _check_reps(reps: int):
    if reps < MIN_REPS:
        raise TooFewRepsError(f"need at least {MIN_REPS} replicates, got {reps}")


# ----------------------------------------------------------------- operations
def sample_gamma(contrasts: ContrastSet, r, stream: RngStream) -> float:
    """One draw of gamma_{M,r} = max |w^t xi| / N from the given stream."""
    _check_contrasts(contrasts)
    r = validate_dof(r)
    xi, scale = draw_noise(stream.generator(), 1, contrasts.n, r)
    return float(_max_abs_projection(contrasts.w, xi)[0] / scale[0])


def simulate_gamma(
    contrasts: ContrastSet,
    r,
    reps: int,
    seed: int,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> GammaDraws:
    """
    Draw ``reps`` replicates of (gamma_inf, N).

    The same draws serve every alpha (common random numbers) and both the
    PoSI constant and the Gaussian width.
    """
    _check_contrasts(contrasts)
    r = validate_dof(r)
    if reps < 1:
        raise TooFewRepsError(f"need at least one replicate, got {reps}")

    def run(block, size):
        xi, scale = draw_noise(RngStream(seed, block).generator(), size, contrasts.n, r)
        return _max_abs_projection(contrasts.w, xi), scale

    parts = map_blocks(run, reps, block_size, workers)
    return GammaDraws(
        gamma_inf=np.concatenate([g for g, _ in parts]),
        scale=np.concatenate([s for _, s in parts]),
        r=r,
        seed=seed,
    )


@dataclass(frozen=True)
class StreamedGamma:
    draws: GammaDraws
    models: int
    contrasts: int
    skipped: List[Model]


def stream_gamma(
    X: DesignMatrix,
    family: ModelFamily,
    r,
    reps: int,
    seed: int,
    workers: int = 1,
    on_rank_deficient: str = "raise",
    cap: int = DEFAULT_ENUMERATION_CAP,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> StreamedGamma:
    """
    Same draws as ``simulate_gamma(contrast_set(X, family), ...)`` without
    holding the contrast set in memory.

    The noise of every block is drawn once; the family is then enumerated
    chunk by chunk and each chunk's max |w^t xi| is folded into the running
    per-replicate maximum. Memory is reps * n plus one chunk of contrasts,
    and ``cap`` is not enforced.
    """
    r = validate_dof(r)
    if reps < 1:
        raise TooFewRepsError(f"need at least one replicate, got {reps}")

    def draw(block, size):
        return draw_noise(RngStream(seed, block).generator(), size, X.n, r)

    noise = map_blocks(draw, reps, block_size, workers)
    best = [np.zeros(len(xi)) for xi, _ in noise]
    models, contrasts, skipped = 0, 0, []
    chunks = iter_contrast_chunks(X, family, on_rank_deficient, cap, streaming=True)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for chunk in chunks:
            skipped.extend(chunk.skipped)
            if len(chunk) == 0:
                continue

            def fold(block, w=chunk.w):
                np.maximum(best[block], _max_abs_projection(w, noise[block][0]), out=best[block])

            list(pool.map(fold, range(len(noise))))
            models += len(chunk.models)
            contrasts += len(chunk)
            logger.debug("Folded %s contrasts (%s so far)", len(chunk), contrasts)

    if contrasts == 0:
        raise InvalidFamilyError("family has no full-rank model")
    draws = GammaDraws(
        gamma_inf=np.concatenate(best),
        scale=np.concatenate([scale for _, scale in noise]),
        r=r,
        seed=seed,
    )
    return StreamedGamma(draws, models, contrasts, skipped)


def estimate_K(
    contrasts: ContrastSet, alpha: float, r, reps: int, seed: int, workers: int = 1
) -> PosiEstimate:
    """
    Monte Carlo estimate of the PoSI constant K(X, M, alpha, r).

    Args:
        contrasts (ContrastSet): The contrasts of the family.
        alpha (float): Type I error level in (0, 1).
        r (float): Degrees of freedom of the variance estimate, or inf.
        reps (int): Number of replicates, at least 1000.
        seed (int): Seed of the random streams.
        workers (int): Worker threads; the result does not depend on it.

    Returns:
        PosiEstimate: Point estimate, 0.99 interval and the Gaussian width estimate.
    """
    _check_reps(reps)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return simulate_gamma(contrasts, r, reps, seed, workers).estimate(alpha)


def estimate_gauss_width(contrasts: ContrastSet, reps: int, seed: int, workers: int = 1) -> McMean:
    """Sample mean and standard error of gamma_{M,inf}."""
    _check_reps(reps)
    return simulate_gamma(contrasts, math.inf, reps, seed, workers).gauss_width()


def posi_intervals(
    X: DesignMatrix, Y, family: ModelFamily, sigma_hat: float, K: float
) -> PosiIntervals:
    """
    Intervals (beta_hat_M)_{i.M} +- sigma_hat ||v_{M,i}|| K for every model of the family.
    """
    if not sigma_hat > 0:
        raise DomainError(f"sigma_hat must be positive, got {sigma_hat}")
    if not K >= 0:
        raise DomainError(f"K must be nonnegative, got {K}")
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (X.n,):
        raise DomainError(f"Y must have length {X.n}, got shape {Y.shape}")

    contrasts = contrast_set(X, family)
    return PosiIntervals(
        models=contrasts.models,
        model_of=contrasts.model_of,
        covariates=contrasts.covariates,
        ranks=contrasts.ranks,
        center=contrasts.estimates(Y),
        half_width=sigma_hat * contrasts.v_norm * K,
    )


def coverage_sim(
    X: DesignMatrix,
    mu,
    sigma: float,
    family: ModelFamily,
    alpha: float,
    r,
    K: float,
    reps: int,
    seed: int,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> CoverageEstimate:
    """
    Fraction of replicates in which every target (beta_M)_{i.M} lies in its interval.

    Each replicate draws Y = mu + sigma * eps and, for finite r, an independent
    variance estimate sigma_hat = sigma * N with r N^2 ~ chi2_r.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (X.n,):
        raise DomainError(f"mu must have length {X.n}, got shape {mu.shape}")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not K >= 0:
        raise DomainError(f"K must be nonnegative, got {K}")
    if reps < 1:
        raise TooFewRepsError(f"need at least one replicate, got {reps}")
    r = validate_dof(r)

    contrasts = contrast_set(X, family)
    targets = contrasts.estimates(mu)
    v = contrasts.v

    def run(block, size):
        eps, scale = draw_noise(RngStream(seed, block).generator(), size, X.n, r)
        Y = mu[None, :] + sigma * eps
        sigma_hat = sigma * scale
        covered = np.ones(size, dtype=bool)
        rows = max(1, PRODUCT_ENTRIES // size)
        for start in range(0, len(v), rows):
            stop = start + rows
            centers = v[start:stop] @ Y.T
            half = contrasts.v_norm[start:stop, None] * sigma_hat[None, :] * K
            covered &= np.all(np.abs(centers - targets[start:stop, None]) <= half, axis=0)
        return int(covered.sum())

    hits = sum(map_blocks(run, reps, block_size, workers))
    coverage = hits / reps
    logger.info("Simultaneous coverage %s over %s replicates (K=%s)", coverage, reps, K)
    return CoverageEstimate(
        coverage=coverage,
        se=math.sqrt(max(coverage * (1.0 - coverage), 0.0) / reps),
        reps=reps,
        nominal=1.0 - alpha,
    )

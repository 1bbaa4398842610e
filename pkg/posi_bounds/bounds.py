"""
Closed-form and quantile-based bounds on PoSI constants.

Upper bounds: the orthogonal-design bound, the sparsity bound, the RIP bound
and their quantile-level versions through the noncentral T law, plus the
union bound B_l built on Beta projection laws and the Fisher law of the
studentized noise norm. Lower bounds: the equi-correlated design expression
with its explicit constant A, and a Monte Carlo lower bound that needs no
constant.
"""

import functools
import logging
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize, special

from .design_core import check_equicorr, sparse_counts
from .distributions import (
    beta_upper_quantile,
    f_upper_quantile,
    f_upper_tail,
    format_dof,
    nct_quantile,
    validate_dof,
)
from .errors import DeltaOutOfRangeError, DomainError, NoRootError, QLessThanTwoError, TooFewRepsError
from .posi_mc import DEFAULT_BLOCK_SIZE, PRODUCT_ENTRIES, McMean, map_blocks
from .rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 1000
MIN_GRID_SIZE = 100
BRACKET_LOW = 1e-8
ROOT_XTOL = 1e-10
T_GRID_POINTS = 64
T_LOGIT_RANGE = 7.0
RHO_MODES = ("models", "pairs")


# --------------------------------------------------------------- closed forms
def _check_sparsity(p: int, s: int):
    if not 1 <= s <= p:
        raise DomainError(f"need 1 <= s <= p, got s={s}, p={p}")


def u_orth(p: int) -> float:
    """sqrt(2 log(2p)), the bound for orthogonal designs."""
    if p < 1:
        raise DomainError(f"need p >= 1, got {p}")
    return math.sqrt(2.0 * math.log(2.0 * p))


def u_sparse(p: int, s: int) -> float:
    """sqrt(2 s log(6p/s)), the bound on the Gaussian width of the s-sparse family."""
    _check_sparsity(p, s)
    return math.sqrt(2.0 * s * math.log(6.0 * p / s))


def u_card(p: int, s: int) -> float:
    """sqrt(2 log(2 * #pairs)), the finite-set Gaussian maximum bound; never above `u_sparse`."""
    _check_sparsity(p, s)
    return math.sqrt(2.0 * math.log(2.0 * sparse_counts(p, s)[1]))


def c_factor(delta: float) -> float:
    """c(delta) = sqrt(1 + delta) / (1 - delta)."""
    _check_delta(delta)
    return math.sqrt(1.0 + delta) / (1.0 - delta)


def _check_delta(delta: float):
    if not delta >= 0:
        raise DomainError(f"delta must be nonnegative, got {delta}")
    if delta >= 1:
        raise DeltaOutOfRangeError(f"the RIP bounds need delta < 1, got {delta}")


def u_rip(p: int, s: int, delta: float) -> float:
    """u_orth(p) + 2 delta c(delta) u_sparse(p, s)."""
    _check_sparsity(p, s)
    _check_delta(delta)
    return u_orth(p) + 2.0 * delta * c_factor(delta) * u_sparse(p, s)


def u_bar(mu_bound: float, alpha: float, r) -> float:
    """The 1 - alpha/2 quantile of the noncentral T law with noncentrality ``mu_bound``."""
    if not mu_bound >= 0:
        raise DomainError(f"mu_bound must be nonnegative, got {mu_bound}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return nct_quantile(mu_bound, r, 1.0 - alpha / 2.0)


class FamilyCount(NamedTuple):
    models: int
    pairs: int
    log_models: float
    log_pairs: float


def family_cardinality(p: int, s: int) -> FamilyCount:
    """Exact number of models and of (model, covariate) pairs in the s-sparse family, with logs."""
    _check_sparsity(p, s)
    models, pairs = sparse_counts(p, s)
    return FamilyCount(models, pairs, math.log(models), math.log(pairs))


# ------------------------------------------------------------------------ B_l
@dataclass(frozen=True)
class BellParams:
    """
    Inputs of B_l(q, r, rho). ``rho`` is kept as its logarithm so counts far
    beyond double range stay representable.
    """

    q: int
    r: float
    log_rho: float
    level: float
    grid_size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if self.q < 2:
            raise QLessThanTwoError(f"B_l needs q >= 2, got {self.q}")
        object.__setattr__(self, "r", validate_dof(self.r))
        if not self.log_rho >= 0:
            raise DomainError(f"rho must be >= 1, got log(rho)={self.log_rho}")
        if not 0 < self.level < 1:
            raise DomainError(f"level must lie in (0, 1), got {self.level}")
        if self.grid_size < MIN_GRID_SIZE:
            raise DomainError(f"grid size must be >= {MIN_GRID_SIZE}, got {self.grid_size}")

    @classmethod
    def from_rho(cls, q: int, r, rho, level: float, grid_size: int = DEFAULT_GRID_SIZE):
        """``rho`` may be a Python int of any size or a float such as 1e30."""
        if not rho >= 1:
            raise DomainError(f"rho must be >= 1, got {rho}")
        return cls(q, r, math.log(rho), level, grid_size)


@functools.lru_cache(maxsize=64)
def _beta_grid(q: int, log_rho: float, grid_size: int) -> np.ndarray:
    levels = np.linspace(0.0, math.exp(-log_rho), grid_size)
    grid = np.asarray(beta_upper_quantile(levels, 0.5, (q - 1) / 2.0), dtype=float)
    grid.setflags(write=False)
    return grid


def H_eval(t: float, params: BellParams) -> float:
    """
    H_{q,rho}(t) evaluated on the grid of Beta(1/2, (q-1)/2) upper quantiles
    at equispaced levels in [0, 1/rho]: the mean over the grid of
    P(F(q, r) > t^2 / (v q)).
    """
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    grid = _beta_grid(params.q, params.log_rho, params.grid_size)
    with np.errstate(divide="ignore"):
        statistic = np.where(grid > 0, t * t / (grid * params.q), np.inf)
    return float(np.mean(f_upper_tail(statistic, params.q, params.r)))


def solve_B_ell(params: BellParams) -> float:
    """
    The smallest t with H_{q,rho}(t) <= level.

    The root is bracketed in [1e-8, 2 K_max] with K_max = sqrt(q F^{-1}(level)),
    the bracket is widened once by a factor 4 if needed.

    Raises:
        NoRootError: if H still exceeds the level at the widened upper end.
    """
    level = params.level

    def excess(t):
        return H_eval(t, params) - level

    hi = 2.0 * math.sqrt(params.q * f_upper_quantile(level, params.q, params.r))
    if excess(hi) > 0:
        hi *= 4.0
        if excess(hi) > 0:
            raise NoRootError(f"H stays above {level} on [{BRACKET_LOW}, {hi}] for {params}")
    if excess(BRACKET_LOW) <= 0:
        return BRACKET_LOW

    root = optimize.brentq(excess, BRACKET_LOW, hi, xtol=ROOT_XTOL, maxiter=500)
    logger.debug("B_l(q=%s, r=%s, log rho=%.4g, l=%.4g) = %.10g", params.q, params.r, params.log_rho, level, root)
    return float(root)


class TildeResult(NamedTuple):
    value: float
    argmin_t: float


def _log_rho_for(p: int, s: int, rho_mode: str) -> float:
    if rho_mode not in RHO_MODES:
        raise DomainError(f"rho_mode must be one of {RHO_MODES}, got {rho_mode!r}")
    count = family_cardinality(p, s)
    return count.log_models if rho_mode == "models" else count.log_pairs


def u_tilde_rip(
    p: int,
    s: int,
    n: int,
    delta: float,
    alpha: float,
    r,
    grid_size: int = DEFAULT_GRID_SIZE,
    rho_mode: str = "models",
) -> TildeResult:
    """
    min over t in (0, 1) of B_{t alpha}(q, r, p) + 2 delta c(delta) B_{(1-t) alpha}(q, r, rho_s)
    with q = min(n, p).

    rho_s is the number of models of the s-sparse family, or the number of
    (model, covariate) pairs with ``rho_mode="pairs"``. The minimum is located
    on 64 logit-spaced values of t and refined by a bounded scalar search
    between the neighbours of the best one. For delta = 0 the second term
    vanishes and the result is B_alpha(q, r, p) with t reported as 1.
    """
    _check_sparsity(p, s)
    _check_delta(delta)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    q = min(n, p)
    if q < 2:
        raise QLessThanTwoError(f"u_tilde_rip needs min(n, p) >= 2, got {q}")

    log_p = math.log(p)
    if delta == 0:
        return TildeResult(solve_B_ell(BellParams(q, r, log_p, alpha, grid_size)), 1.0)

    log_rho = _log_rho_for(p, s, rho_mode)
    weight = 2.0 * delta * c_factor(delta)

    def objective(z):
        t = float(special.expit(z))
        first = solve_B_ell(BellParams(q, r, log_p, t * alpha, grid_size))
        second = solve_B_ell(BellParams(q, r, log_rho, (1.0 - t) * alpha, grid_size))
        return first + weight * second

    zs = np.linspace(-T_LOGIT_RANGE, T_LOGIT_RANGE, T_GRID_POINTS)
    values = [objective(z) for z in zs]
    best = int(np.argmin(values))
    best_z, best_value = float(zs[best]), float(values[best])

    lo = zs[max(best - 1, 0)]
    hi = zs[min(best + 1, len(zs) - 1)]
    refined = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
    if refined.success and refined.fun < best_value:
        best_z, best_value = float(refined.x), float(refined.fun)
    return TildeResult(best_value, float(special.expit(best_z)))


# --------------------------------------------------------------- lower bounds
def lower_bound_expr(s: int, k: int, c: float, A: float) -> float:
    """
    A c (s-1) / sqrt(1 - (s-1) c^2) sqrt(log floor(k/s)) - sqrt(2 log 2).

    The log term is zero when floor(k/s) = 1.
    """
    if not 1 <= s <= k:
        raise DomainError(f"need 1 <= s <= k, got s={s}, k={k}")
    if not c * c < 1.0 / k:
        raise DomainError(f"need c^2 < 1/k, got c={c}, k={k}")
    if not A > 0:
        raise DomainError(f"the constant A must be positive, got {A}")
    blocks = k // s
    if blocks < 1:
        return -math.inf
    factor = c * (s - 1) / math.sqrt(1.0 - (s - 1) * c * c)
    return A * factor * math.sqrt(math.log(blocks)) - math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class LowerBoundEstimate:
    """
    ``gauss_width_lower`` lower-bounds E[gamma_{M_s,inf}] on the equi-correlated
    design; ``k_lower`` = gauss_width_lower - sqrt(2 log 2) lower-bounds the
    PoSI constant and is only set for alpha <= 1/2.
    """

    gauss_width_lower: float
    se: float
    k_lower: Optional[float]
    reps: int


def empirical_lower_bound(
    p: int,
    k: int,
    c: float,
    s: int,
    alpha: float,
    reps: int,
    seed: int,
    workers: int = 1,
) -> LowerBoundEstimate:
    """
    Monte Carlo value of c / sqrt(1 - (s-1) c^2) E[sum of the s-1 largest of k normals].

    This equals E[max over models {i_1..i_{s-1}, p}, i_j <= k, of w_{M,p}^t xi]
    (the xi_p term has mean zero and is dropped) and therefore lower-bounds
    the Gaussian width of the s-sparse family on Z^(c,k).
    """
    check_equicorr(p, k, c)
    if not 1 <= s <= k:
        raise DomainError(f"need 1 <= s <= k, got s={s}, k={k}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if reps < 2:
        raise TooFewRepsError(f"need at least 2 replicates, got {reps}")

    top = s - 1
    factor = c / math.sqrt(1.0 - top * c * c)
    if top == 0:
        estimate = McMean(0.0, 0.0)
    else:
        block_size = max(1, min(DEFAULT_BLOCK_SIZE, PRODUCT_ENTRIES // k))

        def run(block, size):
            xi = RngStream(seed, block).generator().standard_normal((size, k))
            return np.partition(xi, k - top, axis=1)[:, k - top :].sum(axis=1)

        sums = factor * np.concatenate(map_blocks(run, reps, block_size, workers))
        estimate = McMean(float(np.mean(sums)), float(np.std(sums, ddof=1) / math.sqrt(reps)))

    k_lower = estimate.mean - math.sqrt(2.0 * math.log(2.0)) if alpha <= 0.5 else None
    return LowerBoundEstimate(estimate.mean, estimate.se, k_lower, reps)


# --------------------------------------------------------- rate diagnostics
def corollary_rates(p: int, s: int, delta: float):
    """
    (delta sqrt(s) sqrt(log(6p/s)), delta sqrt(s) sqrt(log(min(1/delta^2, floor((p-1)/s)))))

    The lower rate is 0 when floor((p-1)/s) < 2.
    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not 1 <= s < p:
        raise DomainError(f"need 1 <= s < p, got s={s}, p={p}")
    scale = delta * math.sqrt(s)
    upper = scale * math.sqrt(math.log(6.0 * p / s))
    blocks = (p - 1) // s
    if blocks < 2:
        return upper, 0.0
    return upper, scale * math.sqrt(math.log(min(1.0 / (delta * delta), blocks)))


def corollary_design(p: int, s: int, delta: float):
    """
    (c, k) of the equi-correlated design whose RIP constant of order s is delta:
    c = delta / sqrt(s-1), k = min(p-1, floor(1/c^2 - 1)).
    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not 2 <= s < p:
        raise DomainError(f"need 2 <= s < p, got s={s}, p={p}")
    c = delta / math.sqrt(s - 1)
    k = min(p - 1, math.floor(1.0 / (c * c) - 1.0))
    return c, k


# ------------------------------------------------------------------ BoundSet
@dataclass(frozen=True)
class BoundSet:
    p: int
    s: int
    n: int
    delta: float
    alpha: float
    r: float
    u_orth: float
    u_sparse: float
    u_card: float
    u_rip: float
    u_bar_sparse: float
    u_bar_rip: float
    u_tilde_rip: Optional[float]
    argmin_t: Optional[float]
    lower_expr: Optional[float]
    family_models: int
    log_family_models: float
    rho_mode: str

    def as_record(self) -> dict:
        record = asdict(self)
        record["r"] = format_dof(self.r)
        record["family_models"] = str(self.family_models)
        return record


def compute_bounds(
    p: int,
    s: int,
    n: int,
    delta: float,
    alpha: float,
    r,
    grid_size: int = DEFAULT_GRID_SIZE,
    rho_mode: str = "models",
    lower: Optional[dict] = None,
) -> BoundSet:
    """
    Every bound of one configuration.

    Args:
        p, s, n (int): Columns, sparsity and rows; the B_l terms use q = min(n, p).
        delta (float): RIP constant (or any upper bound on it), in [0, 1).
        alpha (float): Type I error level.
        r (float): Degrees of freedom, or inf.
        grid_size (int): Grid size of the B_l evaluations.
        rho_mode (str): "models" or "pairs", the count used in the second B_l term.
        lower (dict, optional): ``{"k": ..., "c": ..., "A": ...}`` to evaluate
            the explicit lower bound expression.

    Returns:
        BoundSet: All bounds; ``u_tilde_rip`` is None when min(n, p) < 2.
    """
    r = validate_dof(r)
    rip_value = u_rip(p, s, delta)
    sparse_value = u_sparse(p, s)
    count = family_cardinality(p, s)

    tilde = TildeResult(None, None)
    if min(n, p) >= 2:
        tilde = u_tilde_rip(p, s, n, delta, alpha, r, grid_size=grid_size, rho_mode=rho_mode)
    else:
        logger.warning("Skipping the B_l bound: min(n, p) = %s < 2", min(n, p))

    lower_value = None
    if lower is not None:
        lower_value = lower_bound_expr(s, lower["k"], lower["c"], lower["A"])

    return BoundSet(
        p=p,
        s=s,
        n=n,
        delta=delta,
        alpha=alpha,
        r=r,
        u_orth=u_orth(p),
        u_sparse=sparse_value,
        u_card=u_card(p, s),
        u_rip=rip_value,
        u_bar_sparse=u_bar(sparse_value, alpha, r),
        u_bar_rip=u_bar(rip_value, alpha, r),
        u_tilde_rip=tilde.value,
        argmin_t=tilde.argmin_t,
        lower_expr=lower_value,
        family_models=count.models,
        log_family_models=count.log_models,
        rho_mode=rho_mode,
    )

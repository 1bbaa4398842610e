"""
Special functions, quantile inversions and samplers used by the bounds.

Degrees of freedom ``r`` are plain numbers where ``math.inf`` stands for the
known-variance case; every function below implements that branch explicitly.
"""

import logging
import math

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import DomainError
from .rng import RngStream

logger = logging.getLogger(__name__)

INFINITE = math.inf
NCT_XTOL = 1e-10
BETA_LOG_RTOL = 1e-12


# ------------------------------------------------------------ degrees of freedom
def is_infinite(r) -> bool:
    return math.isinf(r)


def validate_dof(r) -> float:
    """Return r as a float after checking it is a positive integer or infinity."""
    try:
        value = float(r)
    except (TypeError, ValueError) as e:
        raise DomainError(f"degrees of freedom must be a positive integer or inf, got {r!r}") from e
    if math.isinf(value) and value > 0:
        return INFINITE
    if not (value >= 1 and value.is_integer()):
        raise DomainError(f"degrees of freedom must be a positive integer or inf, got {r!r}")
    return value


def parse_dof(text) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity"):
        return INFINITE
    return validate_dof(text)


def format_dof(r):
    """The ``"inf"`` literal for infinity, otherwise the integer."""
    return "inf" if is_infinite(r) else int(r)


def _check_probability(u, closed=False):
    arr = np.asarray(u, dtype=float)
    ok = (arr >= 0) & (arr <= 1) if closed else (arr > 0) & (arr < 1)
    if not np.all(ok):
        interval = "[0, 1]" if closed else "(0, 1)"
        raise DomainError(f"probability must lie in {interval}, got {u!r}")
    return arr


def _as_output(value, like):
    return float(value) if np.ndim(like) == 0 else value


# ----------------------------------------------------------------------- normal
def normal_cdf(x):
    return _as_output(special.ndtr(np.asarray(x, dtype=float)), x)


def normal_quantile(u):
    return _as_output(special.ndtri(_check_probability(u)), u)


def t_two_sided_quantile(r, level: float) -> float:
    """The t with P(|T_r| > t) = level; the normal quantile when r is infinite."""
    _check_probability(level)
    r = validate_dof(r)
    if is_infinite(r):
        return float(special.ndtri(1.0 - level / 2.0))
    return float(stats.t.isf(level / 2.0, r))


# ------------------------------------------------------------------------- beta
def beta_upper_quantile(u, a: float, b: float):
    """
    The t with P(Beta(a, b) > t) = u.

    Works through the complement 1 - Beta(a, b) ~ Beta(b, a), whose lower tail
    at 1 - t equals u, so levels far below machine epsilon keep their relative
    accuracy. Entries whose log-space residual is off are refined by Newton
    steps on log I_y(b, a) with a bisection fallback.

    Args:
        u (float | np.ndarray): Upper-tail probabilities in [0, 1].
        a (float): First shape parameter, > 0.
        b (float): Second shape parameter, > 0.

    Returns:
        float | np.ndarray: Quantiles, nonincreasing in u.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"beta shapes must be positive, got a={a}, b={b}")
    levels = _check_probability(u, closed=True)
    flat = np.atleast_1d(levels).astype(float)
    y = np.atleast_1d(special.betaincinv(b, a, flat)).astype(float)

    interior = (flat > 0) & (flat < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        residual = np.abs(np.log(special.betainc(b, a, y)) - np.log(flat))
    for k in np.flatnonzero(interior & ~(residual <= 1e-10)):
        logger.debug("Refining beta quantile at level %s (a=%s, b=%s)", flat[k], a, b)
        y[k] = _refine_lower_quantile(flat[k], b, a, y[k])

    t = 1.0 - y
    return _as_output(t.reshape(np.shape(levels)), u)


def _refine_lower_quantile(u: float, a: float, b: float, y: float) -> float:
    target = math.log(u)
    lo, hi = 0.0, 1.0
    if not 0.0 < y < 1.0:
        y = 0.5
    for _ in range(200):
        value = special.betainc(a, b, y)
        if value <= 0.0:
            lo = y
            y = 0.5 * (lo + hi)
            continue
        f = math.log(value) - target
        if abs(f) <= BETA_LOG_RTOL:
            break
        if f > 0:
            hi = y
        else:
            lo = y
        slope = math.exp(stats.beta.logpdf(y, a, b) - math.log(value))
        candidate = y - f / slope if slope > 0 else -1.0
        y = candidate if lo < candidate < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-300:
            break
    return y


# ------------------------------------------------------------------------- F
def f_upper_tail(x, q: int, r):
    """
    P(F(q, r) > x); for infinite r the law of chi2_q / q.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("F statistic must be nonnegative")
    if q < 1:
        raise DomainError(f"F numerator degrees of freedom must be >= 1, got {q}")
    r = validate_dof(r)
    finite = np.where(np.isinf(arr), 0.0, arr)
    if is_infinite(r):
        tail = special.chdtrc(q, q * finite)
    else:
        tail = special.fdtrc(q, r, finite)
    tail = np.where(np.isinf(arr), 0.0, tail)
    return _as_output(tail, x)


def f_upper_quantile(u, q: int, r):
    """The x with P(F(q, r) > x) = u."""
    levels = _check_probability(u)
    if q < 1:
        raise DomainError(f"F numerator degrees of freedom must be >= 1, got {q}")
    r = validate_dof(r)
    if is_infinite(r):
        value = stats.chi2.isf(levels, q) / q
    else:
        value = stats.f.isf(levels, q, r)
    return _as_output(value, u)


# ------------------------------------------------------------- noncentral T
def nct_cdf(t: float, mu: float, r) -> float:
    """
    P((mu + zeta) / sqrt(V / r) <= t) for zeta ~ N(0, 1), V ~ chi2_r.

    The expectation over V of Phi(t sqrt(V / r) - mu) is integrated over the
    probability scale of V, which keeps the integration range bounded.
    """
    r = validate_dof(r)
    if is_infinite(r):
        return float(special.ndtr(t - mu))

    def integrand(level):
        v = special.chdtri(r, 1.0 - level)
        return special.ndtr(t * math.sqrt(v / r) - mu)

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return min(max(value, 0.0), 1.0)


def nct_quantile(mu: float, r, u: float) -> float:
    """
    Quantile of the noncentral T law with r degrees of freedom and noncentrality mu.

    Bisection on `nct_cdf`, bracket grown from the normal quantile
    mu + Phi^{-1}(u). For infinite r the normal quantile is exact.
    """
    if not mu >= 0:
        raise DomainError(f"noncentrality must be nonnegative, got {mu}")
    _check_probability(u)
    r = validate_dof(r)
    center = mu + float(special.ndtri(u))
    if is_infinite(r):
        return center

    def excess(t):
        return nct_cdf(t, mu, r) - u

    width = 1.0
    lo, hi = center - width, center + width
    while excess(lo) > 0:
        width *= 2.0
        lo = center - width
    while excess(hi) < 0:
        width *= 2.0
        hi = center + width
    return float(optimize.bisect(excess, lo, hi, xtol=NCT_XTOL, maxiter=500))


def rough_t_quantile_bound(mu: float, r, eta: float) -> float:
    """
    Closed-form upper bound on the 1 - eta quantile of the noncentral T law,
    (mu + sqrt(2 log(2/eta))) / (1 - 2 sqrt(2 log(2/eta) / r))_+.

    Returns +inf when the denominator is not positive.
    """
    if not mu >= 0:
        raise DomainError(f"noncentrality must be nonnegative, got {mu}")
    _check_probability(eta)
    r = validate_dof(r)
    radius = math.sqrt(2.0 * math.log(2.0 / eta))
    denominator = 1.0 if is_infinite(r) else 1.0 - 2.0 * math.sqrt(2.0 * math.log(2.0 / eta) / r)
    if denominator <= 0:
        return math.inf
    return (mu + radius) / denominator


# --------------------------------------------------------------------- samplers
def draw_noise(generator: np.random.Generator, size: int, n: int, r):
    """
    Draw ``size`` replicates of (xi, N): xi standard normal in R^n and
    N = sqrt(chi2_r / r), or N = 1 for infinite r. The normals are drawn first.
    """
    xi = generator.standard_normal((size, n))
    if is_infinite(r):
        scale = np.ones(size)
    else:
        scale = np.sqrt(generator.chisquare(r, size) / r)
    return xi, scale


def sample_chi(r, stream: RngStream) -> float:
    r = validate_dof(r)
    if is_infinite(r):
        return 1.0
    return float(math.sqrt(stream.generator().chisquare(r) / r))


def sample_std_normal_vector(n: int, stream: RngStream) -> np.ndarray:
    return stream.generator().standard_normal(n)

"""
Restricted isometry constants of a design.

kappa(X, s) is the worst spectral deviation of X_M^t X_M from the identity and
delta(X, s) the same quantity for corr(X_M^t X_M), both over all column
subsets of size at most s. Both are computed by exhaustive enumeration; delta
only needs subsets of size exactly s because the spectral deviation of a
principal submatrix never exceeds that of the full matrix.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .design_core import DEFAULT_ENUMERATION_CAP, SYMMETRY_TOLERANCE, DesignMatrix, corr
from .errors import (
    DomainError,
    EnumerationLimitError,
    KappaOutOfRangeError,
    NotSymmetricError,
    ZeroColumnError,
)
from .rng import RngStream

logger = logging.getLogger(__name__)

SUBSET_CHUNK = 1 << 15


@dataclass(frozen=True)
class RipExtremum:
    """
    The maximum deviation over the enumerated subsets and where it is attained.

    ``exhaustive`` is False when the subsets were sampled; ``value`` is then
    only a lower estimate of the constant.
    """

    value: float
    argmax: Tuple[int, ...]
    subsets_examined: int
    exhaustive: bool = True


@dataclass(frozen=True)
class RipReport:
    s: int
    kappa: float
    delta: float
    argmax_kappa: Tuple[int, ...]
    argmax_delta: Tuple[int, ...]
    subsets_examined: int
    exhaustive: bool = True


def op_norm_dev(G) -> float:
    """Spectral norm of G - I for a symmetric matrix G."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {G.shape}")
    if np.abs(G - G.T).max(initial=0.0) > SYMMETRY_TOLERANCE * max(np.abs(G).max(initial=0.0), 1.0):
        raise NotSymmetricError("matrix is not symmetric")
    return float(_deviations(G[None, :, :])[0])


def _deviations(stack: np.ndarray) -> np.ndarray:
    eigenvalues = np.linalg.eigvalsh(stack)
    return np.maximum(np.abs(eigenvalues[:, -1] - 1.0), np.abs(eigenvalues[:, 0] - 1.0))


def _scan_leading(G: np.ndarray, size: int, lead: int) -> Tuple[float, Tuple[int, ...], int]:
    """Best subset among those of the given size whose smallest index is ``lead``."""
    if size == 1:
        return float(_deviations(G[lead : lead + 1, lead : lead + 1][None])[0]), (lead,), 1

    p = G.shape[0]
    rest = itertools.combinations(range(lead + 1, p), size - 1)
    best_value, best_subset, examined = -1.0, (), 0
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(rest, SUBSET_CHUNK)),
            dtype=np.intp,
        )
        if flat.size == 0:
            break
        tails = flat.reshape(-1, size - 1)
        index = np.hstack([np.full((len(tails), 1), lead, dtype=np.intp), tails])
        values = _deviations(G[index[:, :, None], index[:, None, :]])
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_subset = float(values[k]), tuple(int(j) for j in index[k])
        examined += len(index)
    return best_value, best_subset, examined


def _exhaustive_max(G: np.ndarray, sizes: Sequence[int], workers: int) -> RipExtremum:
    tasks = [(size, lead) for size in sizes for lead in range(G.shape[0] - size + 1)]

    def run(task):
        return _scan_leading(G, *task)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    best_value, best_subset, examined = -1.0, (), 0
    for value, subset, count in results:
        examined += count
        if value > best_value:
            best_value, best_subset = value, subset
    return RipExtremum(best_value, best_subset, examined)


def _sampled_max(G: np.ndarray, sizes: Sequence[int], samples: int, seed: int) -> RipExtremum:
    p = G.shape[0]
    generator = RngStream(seed, 0).generator()
    weights = np.array([float(math.comb(p, size)) for size in sizes])
    per_size = generator.multinomial(samples, weights / weights.sum())

    best_value, best_subset = -1.0, ()
    for size, count in zip(sizes, per_size):
        if count == 0:
            continue
        index = np.sort(np.argsort(generator.random((count, p)), axis=1)[:, :size], axis=1)
        values = _deviations(G[index[:, :, None], index[:, None, :]])
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_subset = float(values[k]), tuple(int(j) for j in index[k])
    return RipExtremum(best_value, best_subset, int(samples), exhaustive=False)


def _subset_max(
    G: np.ndarray,
    sizes: Sequence[int],
    cap: int,
    workers: int,
    samples: Optional[int],
    seed: int,
) -> RipExtremum:
    if samples is not None and samples < 1:
        raise DomainError(f"sampled mode needs at least one subset, got samples={samples}")
    p = G.shape[0]
    total = sum(math.comb(p, size) for size in sizes)
    if total <= cap:
        logger.info("Enumerating %s subsets of sizes %s", total, list(sizes))
        return _exhaustive_max(G, sizes, workers)
    if samples is None:
        raise EnumerationLimitError(f"{total} subsets exceed the enumeration cap of {cap}")
    logger.warning(
        "%s subsets exceed the cap of %s; sampling %s subsets for a lower estimate",
        total,
        cap,
        samples,
    )
    return _sampled_max(G, sizes, samples, seed)


def _check_sparsity(X: DesignMatrix, s: int):
    if not 1 <= s <= X.p:
        raise DomainError(f"RIP constants need 1 <= s <= p, got s={s}, p={X.p}")


def kappa(
    X: DesignMatrix,
    s: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
    workers: int = 1,
    samples: Optional[int] = None,
    seed: int = 0,
) -> RipExtremum:
    """
    kappa(X, s) = max over |M| <= s of ||X_M^t X_M - I||_op.

    Every subset size from 1 to s is enumerated: the Gram matrix is not a
    correlation, so small subsets can carry the largest diagonal deviation.

    Args:
        X (DesignMatrix): The design.
        s (int): Sparsity, 1 <= s <= p.
        cap (int): Maximum number of subsets to enumerate.
        workers (int): Threads over leading indices; the result does not depend on it.
        samples (int, optional): Above the cap, sample this many subsets
            instead of failing. The result is then a lower estimate.
        seed (int): Seed of the sampled mode.

    Returns:
        RipExtremum: The constant, its first maximizing subset and the count examined.
    """
    _check_sparsity(X, s)
    return _subset_max(X.gram(), range(1, s + 1), cap, workers, samples, seed)


def delta(
    X: DesignMatrix,
    s: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
    workers: int = 1,
    samples: Optional[int] = None,
    seed: int = 0,
) -> RipExtremum:
    """delta(X, s) = max over |M| <= s of ||corr(X_M^t X_M) - I||_op, see `kappa` for arguments."""
    _check_sparsity(X, s)
    _check_columns(X)
    return _subset_max(corr(X.gram()), (s,), cap, workers, samples, seed)


def _check_columns(X: DesignMatrix):
    zero = np.flatnonzero(X.column_norms == 0)
    if zero.size:
        raise ZeroColumnError(f"columns {[int(j) for j in zero]} have zero norm")


def rip_report(
    X: DesignMatrix,
    s: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
    workers: int = 1,
    samples: Optional[int] = None,
    seed: int = 0,
) -> RipReport:
    k = kappa(X, s, cap=cap, workers=workers, samples=samples, seed=seed)
    d = delta(X, s, cap=cap, workers=workers, samples=samples, seed=seed)
    return RipReport(
        s=s,
        kappa=k.value,
        delta=d.value,
        argmax_kappa=k.argmax,
        argmax_delta=d.argmax,
        subsets_examined=k.subsets_examined + d.subsets_examined,
        exhaustive=k.exhaustive and d.exhaustive,
    )


def delta_full(X: DesignMatrix) -> float:
    """delta(X, p): one eigen-decomposition, an upper bound on delta(X, s) for every s."""
    _check_columns(X)
    return float(_deviations(corr(X.gram())[None, :, :])[0])


def delta_bound_from_kappa(kappa_value: float, allow_vacuous: bool = False) -> float:
    """
    Upper bound 2 kappa / (1 - kappa) on delta(X, s).

    Raises:
        KappaOutOfRangeError: if kappa >= 1, unless ``allow_vacuous`` is set,
            in which case +inf is returned.
    """
    if kappa_value < 0 or math.isnan(kappa_value):
        raise DomainError(f"kappa must be nonnegative, got {kappa_value}")
    if kappa_value >= 1:
        if allow_vacuous:
            return math.inf
        raise KappaOutOfRangeError(f"the bound is vacuous for kappa={kappa_value} >= 1")
    return 2.0 * kappa_value / (1.0 - kappa_value)

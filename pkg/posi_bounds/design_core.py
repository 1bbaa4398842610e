"""
Design matrices, model families and contrast vectors.

Column indices are 0-based throughout the Python API. Files and the command
line use the 1-based convention and convert at the boundary.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigError,
    DesignFileError,
    EnumerationLimitError,
    InvalidCorrelationError,
    InvalidFamilyError,
    InvalidKError,
    ModelRankDeficientError,
    NegativeDiagonalError,
    NotSymmetricError,
)
from .rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 10**7
RANK_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-10
MODEL_CHUNK = 4096

Model = Tuple[int, ...]


# ------------------------------------------------------------------- designs
@dataclass(frozen=True)
class DesignMatrix:
    """
    An n x p fixed design together with a description of where it came from.

    The provenance is the canonical ensemble string (``identity:p=10``,
    ``gauss:n=200,p=40,seed=7``, ``equicorr:p=64,k=32,c=0.1``) or
    ``file:<path>`` for designs read from disk.
    """

    entries: np.ndarray
    provenance: str = "array"

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] < 1 or entries.shape[1] < 1:
            raise ConfigError(f"design must be a non-empty 2-D matrix, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ConfigError("design entries must all be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[1]

    @property
    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.entries, axis=0)

    def gram(self) -> np.ndarray:
        return self.entries.T @ self.entries

    def rescaled(self, scales: Sequence[float]) -> "DesignMatrix":
        """The design XD for the diagonal matrix D = diag(scales)."""
        return DesignMatrix(self.entries * np.asarray(scales, dtype=float), self.provenance)

    @classmethod
    def from_csv(cls, path) -> "DesignMatrix":
        """Read a comma-separated file without header, one row per observation."""
        try:
            entries = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
        except OSError as e:
            raise DesignFileError(f"cannot read design file {path}: {e}") from e
        except ValueError as e:
            raise DesignFileError(f"malformed design file {path}: {e}") from e
        if entries.size == 0 or not np.all(np.isfinite(entries)):
            raise DesignFileError(f"design file {path} is empty or has non-finite entries")
        return cls(entries, provenance=f"file:{path}")

    def to_csv(self, path):
        try:
            np.savetxt(path, self.entries, delimiter=",", fmt="%.17g", newline="\n")
        except OSError as e:
            raise DesignFileError(f"cannot write design file {path}: {e}") from e


def corr(A) -> np.ndarray:
    """
    Rescale a symmetric matrix with nonnegative diagonal to unit diagonal.

    Zero diagonal entries get a zero scale (pseudo-inverse convention), so the
    corresponding rows and columns of the result are zero.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"corr needs a square matrix, got shape {A.shape}")
    scale = np.abs(A).max(initial=0.0)
    asymmetry = np.abs(A - A.T).max(initial=0.0)
    if asymmetry > SYMMETRY_TOLERANCE * scale:
        raise NotSymmetricError(f"matrix asymmetry {asymmetry:.3g} exceeds tolerance")
    diag = np.diag(A).copy()
    if np.any(diag < 0):
        raise NegativeDiagonalError("corr needs a nonnegative diagonal")

    positive = diag > 0
    inv_sqrt = np.zeros_like(diag)
    inv_sqrt[positive] = 1.0 / np.sqrt(diag[positive])
    result = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    result = (result + result.T) / 2.0
    np.fill_diagonal(result, positive.astype(float))
    return result


def make_identity(p: int) -> DesignMatrix:
    if p < 1:
        raise ConfigError(f"identity design needs p >= 1, got {p}")
    return DesignMatrix(np.eye(p), provenance=f"identity:p={p}")


def check_equicorr(p: int, k: int, c: float):
    if not 1 <= k < p:
        raise InvalidKError(f"equicorr needs 1 <= k < p, got k={k}, p={p}")
    if k * c * c >= 1.0:
        raise InvalidCorrelationError(f"equicorr needs k*c^2 < 1, got k={k}, c={c}")


def make_equicorr(p: int, k: int, c: float) -> DesignMatrix:
    """
    The p x p design Z^(c,k): the first p-1 columns are the canonical basis
    vectors and the last column correlates c with the first k of them.

    Args:
        p (int): Number of rows and columns.
        k (int): Number of basis columns the last column correlates with, 1 <= k < p.
        c (float): The common correlation, with k * c**2 < 1.

    Returns:
        DesignMatrix: The equi-correlated design.
    """
    check_equicorr(p, k, c)
    entries = np.eye(p)
    last = np.zeros(p)
    last[:k] = c
    last[p - 1] = math.sqrt(1.0 - k * c * c)
    entries[:, p - 1] = last
    return DesignMatrix(entries, provenance=f"equicorr:p={p},k={k},c={c!r}")


def make_gaussian(n: int, p: int, seed: int) -> DesignMatrix:
    """i.i.d. N(0, 1/n) entries, so the Gram matrix concentrates near the identity."""
    if n < 1 or p < 1:
        raise ConfigError(f"gaussian design needs n, p >= 1, got n={n}, p={p}")
    generator = RngStream(seed, 0).generator()
    entries = generator.standard_normal((n, p)) / math.sqrt(n)
    return DesignMatrix(entries, provenance=f"gauss:n={n},p={p},seed={seed}")


ENSEMBLES = {
    "identity": (make_identity, {"p": int}),
    "gauss": (make_gaussian, {"n": int, "p": int, "seed": int}),
    "equicorr": (make_equicorr, {"p": int, "k": int, "c": float}),
}


def split_ensemble(spec: str) -> Tuple[str, dict]:
    """Parse an ensemble string such as ``gauss:n=200,p=40,seed=7`` into (name, fields)."""
    name, sep, rest = spec.strip().partition(":")
    if name not in ENSEMBLES or not sep:
        raise ConfigError(f"unknown ensemble spec {spec!r}; expected one of {sorted(ENSEMBLES)}")
    fields = ENSEMBLES[name][1]

    kwargs = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or key not in fields or key in kwargs:
            raise ConfigError(f"bad field {item!r} in ensemble spec {spec!r}")
        try:
            kwargs[key] = fields[key](value.strip())
        except ValueError as e:
            raise ConfigError(f"bad value for {key} in ensemble spec {spec!r}") from e
    missing = set(fields) - set(kwargs)
    if missing:
        raise ConfigError(f"ensemble spec {spec!r} is missing {sorted(missing)}")
    return name, kwargs


def parse_ensemble(spec: str) -> DesignMatrix:
    name, kwargs = split_ensemble(spec)
    return ENSEMBLES[name][0](**kwargs)


# ------------------------------------------------------------ model families
def sparse_counts(p: int, s: int) -> Tuple[int, int]:
    """Exact (number of models, number of (model, covariate) pairs) of the s-sparse family."""
    models = sum(math.comb(p, size) for size in range(1, s + 1))
    pairs = sum(size * math.comb(p, size) for size in range(1, s + 1))
    return models, pairs


@dataclass(frozen=True)
class ModelFamily:
    """
    A family of non-empty column subsets: either every subset of size at most
    ``s`` or an explicit list of members.
    """

    p: int
    s: Optional[int] = None
    members: Optional[Tuple[Model, ...]] = None

    def __post_init__(self):
        if self.p < 1:
            raise InvalidFamilyError(f"family needs p >= 1, got {self.p}")
        if (self.s is None) == (self.members is None):
            raise InvalidFamilyError("family is either sparse (s) or explicit (members)")
        if self.s is not None and not 1 <= self.s <= self.p:
            raise InvalidFamilyError(f"sparse family needs 1 <= s <= p, got s={self.s}, p={self.p}")
        if self.members is not None:
            object.__setattr__(self, "members", _normalize_members(self.p, self.members))

    @classmethod
    def sparse(cls, p: int, s: int) -> "ModelFamily":
        return cls(p=p, s=s)

    @classmethod
    def explicit(cls, p: int, members: Iterable[Iterable[int]]) -> "ModelFamily":
        return cls(p=p, members=tuple(tuple(m) for m in members))

    @classmethod
    def from_file(cls, path, p: int) -> "ModelFamily":
        """One model per line, 1-based comma-separated column indices."""
        members = []
        try:
            with open(path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    members.append(tuple(int(tok) - 1 for tok in line.split(",")))
        except OSError as e:
            raise DesignFileError(f"cannot read family file {path}: {e}") from e
        except ValueError as e:
            raise InvalidFamilyError(f"malformed family file {path}: {e}") from e
        return cls.explicit(p, members)

    @property
    def kind(self) -> str:
        return "sparse" if self.s is not None else "explicit"

    def model_count(self) -> int:
        if self.s is not None:
            return sparse_counts(self.p, self.s)[0]
        return len(self.members)

    def pair_count(self) -> int:
        if self.s is not None:
            return sparse_counts(self.p, self.s)[1]
        return sum(len(m) for m in self.members)


def _normalize_members(p: int, members) -> Tuple[Model, ...]:
    normalized = []
    for member in members:
        model = tuple(sorted(int(i) for i in member))
        if not model:
            raise InvalidFamilyError("family members must be non-empty")
        if model[0] < 0 or model[-1] >= p:
            raise InvalidFamilyError(f"model {model} has an index outside 0..{p - 1}")
        if len(set(model)) != len(model):
            raise InvalidFamilyError(f"model {model} repeats an index")
        normalized.append(model)
    if len(set(normalized)) != len(normalized):
        raise InvalidFamilyError("family has duplicate members")
    return tuple(sorted(normalized, key=lambda m: (len(m), m)))


def enumerate_models(
    family: ModelFamily, cap: int = DEFAULT_ENUMERATION_CAP, streaming: bool = False
) -> Iterator[Model]:
    """
    Yield every member once, ordered by size and then lexicographically.

    Raises:
        EnumerationLimitError: if the family has more (model, covariate) pairs
            than ``cap`` and ``streaming`` is not set.
    """
    pairs = family.pair_count()
    if pairs > cap and not streaming:
        raise EnumerationLimitError(
            f"family has {pairs} (model, covariate) pairs, above the cap of {cap}"
        )
    if family.members is not None:
        return iter(family.members)
    return itertools.chain.from_iterable(
        itertools.combinations(range(family.p), size) for size in range(1, family.s + 1)
    )


# ----------------------------------------------------------------- contrasts
@dataclass(frozen=True)
class Contrast:
    model: Model
    covariate: int
    rank_in_model: int
    v: np.ndarray
    w: np.ndarray


def _estimator_rows(blocks: np.ndarray):
    """
    Rows of (X_M^t X_M)^{-1} X_M^t for a stack of column blocks.

    Args:
        blocks (np.ndarray): Shape (B, n, m), one model's columns per entry.

    Returns:
        tuple: (rows of shape (B, m, n), boolean mask of full-rank blocks).
    """
    u, sv, vt = np.linalg.svd(blocks, full_matrices=False)
    largest = sv[:, 0]
    full_rank = (largest > 0) & (sv[:, -1] > RANK_TOLERANCE * largest)
    if blocks.shape[1] < blocks.shape[2]:
        full_rank[:] = False
    inv_sv = np.where(full_rank[:, None], 1.0 / np.where(sv > 0, sv, 1.0), 0.0)
    # pinv(X_M) = V S^{-1} U^t
    rows = np.einsum("bji,bj,bkj->bik", vt, inv_sv, u)
    return rows, full_rank


def contrast(X: DesignMatrix, model: Iterable[int], i: int) -> Contrast:
    """
    The estimator row v_{M,i} and its normalization w_{M,i}.

    Raises:
        ModelRankDeficientError: if X_M is numerically rank deficient.
    """
    model = tuple(sorted(int(j) for j in model))
    if i not in model:
        raise InvalidFamilyError(f"covariate {i} is not in model {model}")
    rows, full_rank = _estimator_rows(X.entries[:, list(model)][None, :, :])
    if not full_rank[0]:
        raise ModelRankDeficientError(f"model {model} is rank deficient", model)
    position = model.index(i)
    v = rows[0, position]
    norm = np.linalg.norm(v)
    w = v / norm if norm > 0 else np.zeros_like(v)
    return Contrast(model, i, position + 1, v, w)


@dataclass
class ContrastSet:
    """
    All contrasts of a family, stored as arrays.

    Row ``k`` belongs to model ``models[model_of[k]]`` and covariate
    ``covariates[k]``; ``w[k]`` is the unit contrast and ``v_norm[k]`` the norm
    of the raw estimator row, so ``v = w * v_norm``.
    """

    n: int
    models: List[Model]
    model_of: np.ndarray
    covariates: np.ndarray
    ranks: np.ndarray
    w: np.ndarray
    v_norm: np.ndarray
    skipped: List[Model] = field(default_factory=list)

    def __len__(self):
        return len(self.covariates)

    def __getitem__(self, k: int) -> Contrast:
        return Contrast(
            self.models[self.model_of[k]],
            int(self.covariates[k]),
            int(self.ranks[k]),
            self.w[k] * self.v_norm[k],
            self.w[k],
        )

    def __iter__(self) -> Iterator[Contrast]:
        return (self[k] for k in range(len(self)))

    @property
    def v(self) -> np.ndarray:
        return self.w * self.v_norm[:, None]

    def estimates(self, Y) -> np.ndarray:
        """Least-squares coefficients (beta_hat_M)_{i.M} = v_{M,i}^t Y for every row."""
        return self.v_norm * (self.w @ np.asarray(Y, dtype=float))


def iter_contrast_chunks(
    X: DesignMatrix,
    family: ModelFamily,
    on_rank_deficient: str = "raise",
    cap: int = DEFAULT_ENUMERATION_CAP,
    streaming: bool = False,
) -> Iterator[ContrastSet]:
    """
    Contrasts of a family, one chunk of at most ``MODEL_CHUNK`` models at a time.

    Each chunk is a ``ContrastSet`` whose ``model_of`` indexes its own
    ``models``; chunks with only rank-deficient models are empty but still
    report them in ``skipped``. With ``streaming`` set the cap is not checked,
    so families far larger than memory can be folded chunk by chunk.
    """
    if family.p != X.p:
        raise InvalidFamilyError(f"family is over {family.p} columns but design has {X.p}")
    if on_rank_deficient not in ("raise", "skip"):
        raise ConfigError(f"on_rank_deficient must be 'raise' or 'skip', got {on_rank_deficient!r}")

    logger.info("Building %s contrasts for a %s family over p=%s", family.pair_count(), family.kind, family.p)
    ordered = enumerate_models(family, cap=cap, streaming=streaming)
    for size, group in itertools.groupby(ordered, key=len):
        while True:
            chunk = list(itertools.islice(group, MODEL_CHUNK))
            if not chunk:
                break
            index = np.array(chunk, dtype=np.intp)
            blocks = np.transpose(X.entries[:, index], (1, 0, 2))
            rows, full_rank = _estimator_rows(blocks)

            skipped: List[Model] = []
            if not np.all(full_rank):
                bad = [chunk[b] for b in np.flatnonzero(~full_rank)]
                if on_rank_deficient == "raise":
                    raise ModelRankDeficientError(f"model {bad[0]} is rank deficient", bad[0])
                logger.warning("Skipping %s rank-deficient models, first %s", len(bad), bad[0])
                skipped = bad

            keep = np.flatnonzero(full_rank)
            kept_rows = rows[keep]
            norms = np.linalg.norm(kept_rows, axis=2)
            safe = np.where(norms > 0, norms, 1.0)
            yield ContrastSet(
                n=X.n,
                models=[chunk[b] for b in keep],
                model_of=np.repeat(np.arange(keep.size), size),
                covariates=index[keep].reshape(-1),
                ranks=np.tile(np.arange(1, size + 1), keep.size),
                w=(kept_rows / safe[:, :, None]).reshape(-1, X.n),
                v_norm=norms.reshape(-1),
                skipped=skipped,
            )


def contrast_set(
    X: DesignMatrix,
    family: ModelFamily,
    on_rank_deficient: str = "raise",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ContrastSet:
    """
    Compute the contrast of every (model, covariate) pair of a family.

    Args:
        X (DesignMatrix): The design; ``family.p`` must equal ``X.p``.
        family (ModelFamily): The models to enumerate.
        on_rank_deficient (str): "raise" (default) to stop at the first
            rank-deficient model, or "skip" to leave it out and report it in
            ``ContrastSet.skipped``.
        cap (int): Maximum number of (model, covariate) pairs.

    Returns:
        ContrastSet: Contrasts ordered by model (size, then indices) and by
        covariate within a model.
    """
    models: List[Model] = []
    skipped: List[Model] = []
    chunks: List[ContrastSet] = []
    owners = []
    for chunk in iter_contrast_chunks(X, family, on_rank_deficient, cap):
        owners.append(chunk.model_of + len(models))
        models.extend(chunk.models)
        skipped.extend(chunk.skipped)
        chunks.append(chunk)

    if not models:
        raise InvalidFamilyError("family has no full-rank model")
    return ContrastSet(
        n=X.n,
        models=models,
        model_of=np.concatenate(owners),
        covariates=np.concatenate([c.covariates for c in chunks]),
        ranks=np.concatenate([c.ranks for c in chunks]),
        w=np.concatenate([c.w for c in chunks]),
        v_norm=np.concatenate([c.v_norm for c in chunks]),
        skipped=skipped,
    )

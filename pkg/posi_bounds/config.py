"""
Validated run configurations.

Every command resolves its arguments into a `RunConfig` (or a `ScanGrid` for
the scan harness) before computing anything, and echoes the resolved values
into its output.
"""

import itertools
import json
import math
from typing import Iterator, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .design_core import (
    DEFAULT_ENUMERATION_CAP,
    DesignMatrix,
    ModelFamily,
    parse_ensemble,
)
from .distributions import format_dof, parse_dof
from .errors import ConfigError, DesignFileError

DEFAULT_REPS = 10000
DEFAULT_GRID_SIZE = 1000


class RunConfig(BaseModel):
    """Resolved settings of one command invocation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    design: Optional[str] = None
    ensemble: Optional[str] = None
    s: Optional[int] = None
    family_file: Optional[str] = None
    alpha: float = 0.05
    r: float = math.inf
    reps: int = DEFAULT_REPS
    seed: int = 0
    format: Literal["json", "csv"] = "json"
    grid_size: int = DEFAULT_GRID_SIZE
    cap: int = DEFAULT_ENUMERATION_CAP
    workers: int = 1

    @field_validator("r", mode="before")
    @classmethod
    def _parse_r(cls, value):
        return parse_dof(value)

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, value):
        if not 0 < value < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return value

    @field_validator("reps", "workers", "cap")
    @classmethod
    def _check_positive(cls, value):
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("seed")
    @classmethod
    def _check_seed(cls, value):
        if not 0 <= value < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        return value

    @field_validator("grid_size")
    @classmethod
    def _check_grid(cls, value):
        if value < 100:
            raise ValueError("grid size must be >= 100")
        return value

    @model_validator(mode="after")
    def _check_sources(self):
        if self.design is not None and self.ensemble is not None:
            raise ValueError("give either a design file or an ensemble spec, not both")
        if self.s is not None and self.family_file is not None:
            raise ValueError("give either a sparsity s or a family file, not both")
        return self

    def load_design(self) -> DesignMatrix:
        if self.design is not None:
            return DesignMatrix.from_csv(self.design)
        if self.ensemble is not None:
            return parse_ensemble(self.ensemble)
        raise ConfigError("a design file (--design) or an ensemble spec (--ensemble) is required")

    def load_family(self, p: int) -> ModelFamily:
        if self.family_file is not None:
            return ModelFamily.from_file(self.family_file, p)
        if self.s is not None:
            return ModelFamily.sparse(p, self.s)
        raise ConfigError("a sparsity (--s) or a family file (--family) is required")

    def resolved(self) -> dict:
        """The configuration echoed into outputs, without the worker count."""
        record = self.model_dump(exclude={"workers"})
        record["r"] = format_dof(self.r)
        return record


def build_run_config(**values) -> RunConfig:
    """Construct a RunConfig, turning validation failures into ConfigError."""
    try:
        return RunConfig(**{k: v for k, v in values.items() if v is not None})
    except ValidationError as e:
        raise ConfigError(_first_error(e)) from e


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first.get("loc", ())) or "config"
    return f"{where}: {first.get('msg', 'invalid value')}"


class ScanGrid(BaseModel):
    """
    A Cartesian grid of configurations.

    ``mode="bounds"`` evaluates every bound per cell, either from explicit
    (p, n, delta) values or from ensembles whose delta is computed
    exhaustively. ``mode="rates"`` evaluates the optimality rate diagnostics
    with delta = p^(-delta_exponent) and s = ceil(p^s_exponent).
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: Literal["bounds", "rates"] = "bounds"
    p: List[int] = []
    n: List[int] = []
    s: List[int] = []
    delta: List[float] = []
    ensemble: List[str] = []
    alpha: List[float] = [0.05]
    r: List[Union[int, str]] = ["inf"]
    reps: int = 0
    seed: int = 0
    grid_size: int = DEFAULT_GRID_SIZE
    rho_mode: Literal["models", "pairs"] = "models"
    delta_exponent: float = 0.25
    s_exponent: float = 1.0 / 3.0

    @field_validator("r")
    @classmethod
    def _parse_r(cls, values):
        return [format_dof(parse_dof(v)) for v in values]

    @field_validator("seed")
    @classmethod
    def _check_seed(cls, value):
        if not 0 <= value < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        return value

    @model_validator(mode="after")
    def _check_axes(self):
        if self.mode == "rates":
            if not self.p:
                raise ValueError("rates mode needs a list of p")
            return self
        if not self.s or not self.alpha or not self.r:
            raise ValueError("bounds mode needs s, alpha and r lists")
        if self.ensemble and (self.p or self.delta or self.n):
            raise ValueError("give either ensembles or explicit p, n, delta lists")
        if not self.ensemble and not (self.p and self.delta):
            raise ValueError("bounds mode needs ensembles or p and delta lists")
        if self.reps and self.reps < 1000:
            raise ValueError("Monte Carlo cells need reps >= 1000 (or 0 to skip)")
        return self

    def cells(self) -> Iterator[dict]:
        """Cells in a fixed Cartesian order; the row index is the position in this order."""
        if self.mode == "rates":
            for p in self.p:
                yield {
                    "p": p,
                    "s": math.ceil(p**self.s_exponent - 1e-12),
                    "delta": p ** (-self.delta_exponent),
                }
            return
        if self.ensemble:
            axes = itertools.product(self.ensemble, self.s, self.alpha, self.r)
            for ensemble, s, alpha, r in axes:
                yield {"ensemble": ensemble, "s": s, "alpha": alpha, "r": parse_dof(r)}
            return
        ns = self.n or [None]
        axes = itertools.product(self.p, ns, self.s, self.delta, self.alpha, self.r)
        for p, n, s, delta, alpha, r in axes:
            yield {"p": p, "n": p if n is None else n, "s": s, "delta": delta, "alpha": alpha, "r": parse_dof(r)}

    @classmethod
    def from_file(cls, path) -> "ScanGrid":
        try:
            with open(path, encoding="utf-8") as f:
                payload = json.load(f)
        except OSError as e:
            raise DesignFileError(f"cannot read grid file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"grid file {path} is not valid JSON: {e}") from e
        try:
            return cls(**payload)
        except ValidationError as e:
            raise ConfigError(_first_error(e)) from e
        except TypeError as e:
            raise ConfigError(f"grid file {path} must hold a JSON object") from e

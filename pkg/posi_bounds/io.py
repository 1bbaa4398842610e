"""
JSON and CSV rendering of command results.

Output is deterministic: no timestamps, fixed key and column order, UTF-8
and LF line endings. Infinite values are written as the ``"inf"`` literal.
"""

import csv
import json
import logging
import math
import sys
from io import StringIO
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .bounds import BoundSet, corollary_rates
from .errors import ConfigError, DesignFileError
from .posi_mc import PosiEstimate

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCAN_COLUMNS = (
    "p",
    "s",
    "n",
    "delta",
    "alpha",
    "r",
    "u_orth",
    "u_sparse",
    "u_rip",
    "u_bar_sparse",
    "u_bar_rip",
    "u_tilde_rip",
    "k_hat",
    "k_lo",
    "k_hi",
    "gw_hat",
    "gw_se",
    "lower_emp",
    "seed",
)
RATE_COLUMNS = ("p", "s", "delta", "upper_rate", "lower_rate", "ratio")


def plain(value):
    """Convert numpy and non-finite values into JSON-safe Python values."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    return value


def document(command: str, config: dict, result: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "config": config,
        "result": result,
    }


def render_json(payload) -> str:
    return json.dumps(plain(payload), indent=2, ensure_ascii=False) + "\n"


def format_cell(value) -> str:
    value = plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value) if not isinstance(value, float) else repr(value)


def render_csv(rows: Iterable[dict], columns: Sequence[str], header: bool = True) -> str:
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if header:
        writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def scan_row(
    bounds: BoundSet,
    estimate: Optional[PosiEstimate] = None,
    lower_emp: Optional[float] = None,
) -> dict:
    """One row of the bounds scan schema; Monte Carlo columns stay empty without an estimate."""
    record = bounds.as_record()
    row = {column: record.get(column) for column in SCAN_COLUMNS}
    if estimate is not None:
        row.update(
            k_hat=estimate.k_hat,
            k_lo=estimate.k_ci[0],
            k_hi=estimate.k_ci[1],
            gw_hat=estimate.gauss_width_hat,
            gw_se=estimate.gauss_width_se,
            seed=estimate.seed,
        )
    if lower_emp is not None:
        row["lower_emp"] = lower_emp
    return row


def rate_row(p: int, s: int, delta: float) -> dict:
    upper, lower = corollary_rates(p, s, delta)
    return {
        "p": p,
        "s": s,
        "delta": delta,
        "upper_rate": upper,
        "lower_rate": lower,
        "ratio": upper / lower if lower > 0 else math.inf,
    }


def sidecar_path(path) -> str:
    return f"{path}.json"


def write_sidecar(command: str, config: dict, columns: Sequence[str], path):
    """
    Next to a CSV file, write the JSON document that CSV rows cannot carry:
    command, version, schema, resolved config and the column list.
    """
    write_text(render_json(document(command, config, {"columns": list(columns)})), sidecar_path(path))


def write_text(text: str, path=None, append: bool = False):
    """Write to ``path`` (LF line endings), or to stdout when no path is given."""
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise DesignFileError(f"cannot write {path}: {e}") from e


def completed_rows(path, columns: Sequence[str]) -> int:
    """
    Number of complete data rows already in a scan file, for resuming.

    A missing or empty file counts as zero rows. A file whose header does not
    match ``columns`` is refused rather than appended to.
    """
    try:
        with open(path, encoding="utf-8", newline="") as f:
            lines: List[str] = f.read().splitlines(keepends=True)
    except FileNotFoundError:
        return 0
    except OSError as e:
        raise DesignFileError(f"cannot read {path}: {e}") from e
    if not lines:
        return 0
    if lines[0].rstrip("\n") != ",".join(columns):
        raise ConfigError(f"{path} has a different header; refusing to resume")
    complete = [line for line in lines[1:] if line.endswith("\n")]
    if len(complete) != len(lines) - 1:
        logger.warning("Dropping a truncated last row of %s", path)
        _rewrite(path, lines[: 1 + len(complete)])
    return len(complete)


def _rewrite(path, lines: List[str]):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(lines)
    except OSError as e:
        raise DesignFileError(f"cannot write {path}: {e}") from e

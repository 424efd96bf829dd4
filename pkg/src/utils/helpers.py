import hashlib
import itertools
import math
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Type

import numpy as np
from joblib import Parallel, delayed

from src.config import settings
from src.errors import ConfigError, DomainViolation, ExpressionSyntaxError, UnknownIdentifier
from src.logger import get_logger
from src.models.reports import ErrorInfo, ResidualReport

logger = get_logger(__name__)

Axis = Tuple[float, float, int]


def build_grid(axes: Mapping[str, Axis]) -> np.ndarray:
    """
    Cartesian grid over named axes.

    Args:
        axes (Mapping[str, Axis]): name -> (low, high, count), in coordinate order.

    Returns:
        np.ndarray: (N, d) array of nodes; the first axis varies slowest.
    """
    ticks = [np.linspace(lo, hi, int(count)) for lo, hi, count in axes.values()]
    if not ticks:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(*ticks)), dtype=float).reshape(-1, len(ticks))


def random_samples(axes: Mapping[str, Axis], count: int, seed: int) -> np.ndarray:
    """
    Uniform samples in the box spanned by ``axes`` from a seeded PCG64 generator.

    Args:
        axes (Mapping[str, Axis]): name -> (low, high, count); counts are ignored.
        count (int): Number of samples.
        seed (int): Generator seed.

    Returns:
        np.ndarray: (count, d) array of samples.
    """
    rng = np.random.default_rng(seed)
    lows = np.array([axis[0] for axis in axes.values()], dtype=float)
    highs = np.array([axis[1] for axis in axes.values()], dtype=float)
    return lows + (highs - lows) * rng.random((int(count), len(lows)))


def map_samples(
    fn: Callable[[np.ndarray], Any],
    samples: Sequence[np.ndarray],
    catch: Tuple[Type[BaseException], ...] = (DomainViolation,),
) -> List[Any]:
    """Apply ``fn`` to every sample, keeping sample order.

    Exceptions listed in ``catch`` are returned in place of the result so the
    caller can count the sample as skipped.
    """

    def guarded(sample: np.ndarray) -> Any:
        try:
            return fn(sample)
        except catch as exc:
            return exc

    if settings.N_JOBS == 1 or len(samples) < 2:
        return [guarded(sample) for sample in samples]
    return Parallel(n_jobs=settings.N_JOBS, prefer="threads")(
        delayed(guarded)(sample) for sample in samples
    )


def summarize(
    op: str,
    samples: Sequence[Sequence[float]],
    values: Sequence[Optional[float]],
    tolerance: float,
    keep_samples: bool = False,
    notes: Optional[List[str]] = None,
) -> ResidualReport:
    """
    Build a residual report from per-sample norms.

    Args:
        op (str): Operation name.
        samples (Sequence): Sample coordinates, in report order.
        values (Sequence[Optional[float]]): Residual norm per sample, None if skipped.
        tolerance (float): Pass/fail threshold.
        keep_samples (bool): Include the per-sample list.
        notes (Optional[List[str]]): Free-form remarks.

    Returns:
        ResidualReport: fail if any evaluated sample exceeds the tolerance,
        otherwise inconclusive when nothing was evaluated or too many samples
        were skipped, otherwise pass.
    """
    notes = list(notes or [])
    cleaned: List[Optional[float]] = []
    for value in values:
        if value is None or not math.isfinite(value):
            cleaned.append(None)
        else:
            cleaned.append(float(value))

    evaluated = [(i, v) for i, v in enumerate(cleaned) if v is not None]
    n_samples = len(cleaned)
    n_skipped = n_samples - len(evaluated)

    max_norm = None
    argmax_sample = None
    if evaluated:
        best, max_norm = max(evaluated, key=lambda item: item[1])
        argmax_sample = [float(x) for x in np.atleast_1d(samples[best])]

    if max_norm is not None and max_norm > tolerance:
        status = "fail"
    elif not evaluated or n_skipped > settings.SKIP_FRACTION_LIMIT * n_samples:
        status = "inconclusive"
        notes.append(f"{n_skipped} of {n_samples} samples skipped")
        logger.warning(f"{op}: inconclusive, {n_skipped}/{n_samples} samples skipped")
    else:
        status = "pass"

    return ResidualReport(
        op=op,
        tolerance=tolerance,
        n_samples=n_samples,
        n_skipped=n_skipped,
        max_norm=max_norm,
        argmax_sample=argmax_sample,
        per_sample=cleaned if keep_samples else None,
        status=status,
        notes=notes,
    )


def max_abs(values: Any) -> float:
    array = np.asarray(values, dtype=float)
    return float(np.max(np.abs(array))) if array.size else 0.0


def config_digest(raw: bytes, overrides: Dict[str, Any]) -> str:
    """sha256 over the config bytes and the CLI overrides (sorted)."""
    digest = hashlib.sha256(raw)
    for key in sorted(overrides):
        digest.update(f"\n{key}={overrides[key]!r}".encode())
    return digest.hexdigest()


def format_error_report(error: Exception) -> ErrorInfo:
    """
    Format an exception for the ``error`` block of a run report.

    Args:
        error (Exception): The exception raised while loading or running.

    Returns:
        ErrorInfo: Type, message and, where known, file/line/offset.
    """
    info = ErrorInfo(type=type(error).__name__, message=str(error))
    if isinstance(error, ConfigError):
        info.path = error.path
        info.line = error.line
        info.message = error.message
        cause = error.__cause__
        if isinstance(cause, (ExpressionSyntaxError, UnknownIdentifier)):
            info.type = type(cause).__name__
            info.position = cause.position
    elif isinstance(error, (ExpressionSyntaxError, UnknownIdentifier)):
        info.position = error.position
    return info


def as_points(samples: Sequence[Sequence[float]]) -> List[np.ndarray]:
    return [np.atleast_1d(np.asarray(s, dtype=float)) for s in samples]


def split_columns(results: Sequence[Any], count: int) -> List[List[Optional[float]]]:
    """Transpose per-sample tuples into per-quantity columns; a sample that
    raised contributes None to every column."""
    columns: List[List[Optional[float]]] = [[] for _ in range(count)]
    for result in results:
        row = [None] * count if isinstance(result, Exception) else result
        for column, value in zip(columns, row):
            column.append(value)
    return columns


def drop_errors(results: Sequence[Any]) -> List[Optional[float]]:
    return [None if isinstance(r, Exception) else r for r in results]

"""Shared numerical policy: Newton iteration, conditioning, FD Jacobians."""

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from src.config import settings
from src.errors import DomainViolation, NewtonDivergence
from src.logger import get_logger

logger = get_logger(__name__)

Vector = np.ndarray
_MAX_HALVINGS = 30


@dataclass(frozen=True)
class NewtonResult:
    x: Vector
    iterations: int
    residual: float


def newton_solve(
    residual: Callable[[Vector], Vector],
    jacobian: Callable[[Vector], np.ndarray],
    x0: Any,
    *,
    index: Any = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> NewtonResult:
    """Solve ``residual(x) = 0`` by Newton's method.

    Convergence means ``max|residual| <= tol * max(1, max|x|)``. A step is
    halved until it lands inside every expression's domain and lowers the
    residual; if no halving lowers it, the longest in-domain step is taken.

    Args:
        residual: Vector function of a vector.
        jacobian: Its Jacobian matrix.
        x0: Initial iterate.
        index: Identifies the solve (step index, sample) in errors and logs.
        tol: Residual tolerance, defaults to ``settings.NEWTON_TOLERANCE``.
        max_iter: Iteration cap, defaults to ``settings.NEWTON_MAX_ITER``.

    Returns:
        NewtonResult: Solution, iterations used and final residual norm.

    Raises:
        NewtonDivergence: When the cap is hit or the Jacobian is singular.
        DomainViolation: When the initial iterate is outside the domain.
    """
    tol = settings.NEWTON_TOLERANCE if tol is None else tol
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter

    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    r = np.atleast_1d(np.asarray(residual(x), dtype=float))
    norm = float(np.max(np.abs(r))) if r.size else 0.0
    for iteration in range(max_iter + 1):
        if norm <= tol * max(1.0, float(np.max(np.abs(x)))):
            return NewtonResult(x, iteration, norm)
        if iteration == max_iter or not np.isfinite(norm):
            break
        try:
            step = np.linalg.solve(np.atleast_2d(jacobian(x)), -r)
        except np.linalg.LinAlgError:
            logger.debug(f"singular Newton Jacobian at {index}")
            raise NewtonDivergence(index, norm)

        scale = 1.0
        fallback = None
        for _ in range(_MAX_HALVINGS):
            trial = x + scale * step
            scale *= 0.5
            try:
                r_trial = np.atleast_1d(np.asarray(residual(trial), dtype=float))
            except DomainViolation:
                continue
            if fallback is None:
                fallback = (trial, r_trial)
            if float(np.max(np.abs(r_trial))) < norm:
                break
        else:
            if fallback is None:
                raise NewtonDivergence(index, norm)
            trial, r_trial = fallback
        x, r = trial, r_trial
        norm = float(np.max(np.abs(r)))

    raise NewtonDivergence(index, norm)


def condition_number(matrix: np.ndarray) -> float:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not np.all(np.isfinite(matrix)):
        return float("inf")
    return float(np.linalg.cond(matrix))


def fd_jacobian(
    fn: Callable[[Vector], Vector], x: Any, step: Optional[float] = None
) -> np.ndarray:
    """Central finite-difference Jacobian; used for verification only."""
    step = settings.FD_STEP if step is None else step
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        columns.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * step))
    return np.stack(columns, axis=-1)


def canonical_matrix(n: int) -> np.ndarray:
    """Matrix of ω = dq^i ∧ dp_i in (q, p) order: ω(u, v) = uᵀ Ω v."""
    identity = np.eye(n)
    zeros = np.zeros((n, n))
    return np.block([[zeros, identity], [-identity, zeros]])

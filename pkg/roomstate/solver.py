"""
State and measurement equation solvers for roomstate

Solves (I - A) q = B x directly or by a truncated Neumann series, evaluates
p = C q + D x, and builds the state-space diagnostics: spectral radius,
Markov parameters, observability and controllability matrices.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgWarning, get_lapack_funcs, lu_factor, lu_solve, svdvals

from .assembly import OperatorSet
from .kernels import LaplacePoint

logger = logging.getLogger(__name__)

NEAR_SINGULAR_CONDITION = 1e12
DIVERGENCE_RUN = 5
DEFAULT_NEUMANN_ORDER = 40
MAX_DIAGNOSTIC_ORDER = 256
RANK_TOLERANCE = 1e-10


class SolveError(Exception):
    """Exception raised when a state equation cannot be solved"""

    pass


class DivergenceError(SolveError):
    """Raised when the Neumann recursion grows instead of converging"""

    def __init__(self, message: str, order: int, spectral_radius: Optional[float]):
        super().__init__(message)
        self.order = order
        self.spectral_radius = spectral_radius


@dataclass
class StateSolution:
    """Boundary state q and receiver pressures p at one Laplace point"""

    s: LaplacePoint
    q: np.ndarray
    p: np.ndarray
    method: str
    residual_norm: float
    condition: Optional[float] = None
    near_singular: bool = False


@dataclass
class ScatteringDecomposition:
    """Receiver pressure split into direct path and per-order boundary terms

    terms[0] is D x and terms[k + 1] is C A^k B x; cumulative[k] is the sum of
    terms[0..k] accumulated in that order.
    """

    terms: List[np.ndarray] = field(default_factory=list)
    cumulative: List[np.ndarray] = field(default_factory=list)

    @property
    def max_order(self) -> int:
        return len(self.terms) - 2

    def append(self, term: np.ndarray) -> None:
        total = term if not self.cumulative else self.cumulative[-1] + term
        self.terms.append(term)
        self.cumulative.append(total)


@dataclass
class SpectralRadius:
    estimate: float
    converged: bool
    iterations: int


@dataclass
class StackedMatrix:
    """Observability or controllability matrix with its rank report"""

    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    order: int


def _residual(ops: OperatorSet, q: np.ndarray, x: complex) -> float:
    forcing = ops.B[:, 0] * x
    scale = np.linalg.norm(forcing)
    if scale == 0:
        return 0.0 if not np.any(q) else float("inf")
    return float(np.linalg.norm(q - ops.A @ q - forcing) / scale)


def solve_direct(ops: OperatorSet, x: complex = 1.0) -> StateSolution:
    """LU solve of (I - A) q = B x with a reciprocal condition estimate

    Near-singular systems are still solved and flagged; that is how modal
    frequencies of rigid rooms show up.
    """
    system = np.eye(ops.N, dtype=complex) - ops.A
    norm = np.linalg.norm(system, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(system, check_finite=True)
    (gecon,) = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, norm, norm="1")
    condition = float("inf") if rcond == 0 else 1.0 / rcond
    if info != 0:
        raise SolveError(f"Condition estimate failed at s={ops.s} (LAPACK info {info})")

    q = lu_solve((lu, piv), ops.B[:, 0] * x)
    if not np.all(np.isfinite(q)):
        raise SolveError(f"(I - A) is singular at s={ops.s}; no finite solution")
    p = ops.C @ q + ops.D[:, 0] * x

    near_singular = condition > NEAR_SINGULAR_CONDITION
    if near_singular:
        logger.warning("(I - A) is near-singular at s=%s (condition %.3g)", ops.s, condition)
    logger.debug("Direct solve at s=%s: condition %.3g", ops.s, condition)
    return StateSolution(
        s=ops.s,
        q=q,
        p=p,
        method="direct",
        residual_norm=_residual(ops, q, x),
        condition=condition,
        near_singular=near_singular,
    )


def solve_neumann(
    ops: OperatorSet,
    x: complex = 1.0,
    order: int = DEFAULT_NEUMANN_ORDER,
    abort_on_divergence: bool = True,
):
    """Truncated Neumann series q = sum_{k<=order} A^k B x

    Uses repeated matrix-vector products. Returns the StateSolution and the
    ScatteringDecomposition whose last cumulative sum is the returned p.
    With abort_on_divergence=False growing terms are summed anyway.
    """
    if order < 0:
        raise ValueError(f"Neumann order must be non-negative, got {order}")
    decomposition = ScatteringDecomposition()
    decomposition.append(ops.D[:, 0] * x)

    v = ops.B
    q = v[:, 0] * x
    decomposition.append((ops.C @ v)[:, 0] * x)
    previous = np.linalg.norm(v)
    rising = 0
    for k in range(1, order + 1):
        v = ops.A @ v
        q = q + v[:, 0] * x
        decomposition.append((ops.C @ v)[:, 0] * x)

        current = np.linalg.norm(v)
        rising = rising + 1 if current > previous else 0
        previous = current
        if abort_on_divergence and rising >= DIVERGENCE_RUN:
            radius = spectral_radius(ops.A)
            raise DivergenceError(
                f"Neumann series diverges at s={ops.s}: |A^k B| grew over "
                f"{DIVERGENCE_RUN} consecutive orders up to k={k} "
                f"(spectral radius estimate {radius.estimate:.4f})",
                order=k,
                spectral_radius=radius.estimate,
            )

    p = decomposition.cumulative[-1]
    solution = StateSolution(
        s=ops.s,
        q=q,
        p=p,
        method=f"neumann({order})",
        residual_norm=_residual(ops, q, x),
    )
    logger.debug("Neumann(%d) at s=%s: residual %.3g", order, ops.s, solution.residual_norm)
    return solution, decomposition


def spectral_radius(
    A: np.ndarray, tol: float = 1e-6, max_iters: int = 500, seed: int = 0
) -> SpectralRadius:
    """Power-iteration estimate of max |eigenvalue| from a random start"""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Spectral radius needs a square matrix, got {A.shape}")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=A.shape[0]) + 1j * rng.normal(size=A.shape[0])
    v /= np.linalg.norm(v)

    estimate = 0.0
    for iteration in range(1, max_iters + 1):
        w = A @ v
        current = float(np.linalg.norm(w))
        if current == 0.0:
            return SpectralRadius(0.0, True, iteration)
        v = w / current
        if iteration > 1 and abs(current - estimate) <= tol * max(current, 1.0):
            return SpectralRadius(current, True, iteration)
        estimate = current

    logger.warning("Power iteration did not converge in %d iterations", max_iters)
    return SpectralRadius(estimate, False, max_iters)


def sigma_min(ops: OperatorSet) -> float:
    """Smallest singular value of (I - A), the modal-detection signal"""
    return float(svdvals(np.eye(ops.N) - ops.A)[-1])


def default_diagnostic_order(ops: OperatorSet) -> int:
    return min(ops.N, MAX_DIAGNOSTIC_ORDER)


def _check_order(order: int) -> None:
    if order < 1:
        raise ValueError(f"Diagnostic order must be at least 1, got {order}")


def _krylov_columns(ops: OperatorSet, order: int) -> List[np.ndarray]:
    columns = [ops.B]
    for _ in range(1, order):
        columns.append(ops.A @ columns[-1])
    return columns


def markov_parameters(ops: OperatorSet, order: Optional[int] = None) -> List[np.ndarray]:
    """[C B, C A B, ..., C A^(order-1) B] as (M, 1) columns"""
    if order is None:
        order = default_diagnostic_order(ops)
    _check_order(order)
    return [ops.C @ v for v in _krylov_columns(ops, order)]


def _rank_report(matrix: np.ndarray, order: int) -> StackedMatrix:
    values = svdvals(matrix)
    threshold = values[0] * RANK_TOLERANCE if len(values) else 0.0
    return StackedMatrix(matrix, values, int(np.sum(values > threshold)), order)


def observability_matrix(ops: OperatorSet, order: Optional[int] = None) -> StackedMatrix:
    """[C; C A; ...; C A^(order-1)] stacked row-wise, shape (order*M, N)"""
    if order is None:
        order = default_diagnostic_order(ops)
    _check_order(order)
    blocks = [ops.C]
    for _ in range(1, order):
        blocks.append(blocks[-1] @ ops.A)
    return _rank_report(np.vstack(blocks), order)


def controllability_matrix(ops: OperatorSet, order: Optional[int] = None) -> StackedMatrix:
    """[B, A B, ..., A^(order-1) B] side by side, shape (N, order)"""
    if order is None:
        order = default_diagnostic_order(ops)
    _check_order(order)
    return _rank_report(np.hstack(_krylov_columns(ops, order)), order)

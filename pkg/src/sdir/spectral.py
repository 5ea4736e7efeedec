"""System matrices of the linearized SDIR dynamics and their spectral radii."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from sdir.model import NetworkModel

DEFAULT_TOL = 1e-10
Q_FLOOR = 1e-6


class MatrixKind(str, enum.Enum):
    M_SIR = "M_SIR"
    M_OF_Q = "M_of_q"
    N = "N"
    BLOCK = "BLOCK"


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    kind: MatrixKind
    entries: np.ndarray
    q: np.ndarray | None = None


def check_q(q, n: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (n,):
        raise ValueError(f"q must have length {n}, got shape {q.shape}")
    if not np.all((q > 0) & (q <= 1)):
        raise ValueError("q entries must lie in (0, 1]")
    return q


def healing_floor(model: NetworkModel, q: np.ndarray) -> np.ndarray:
    """Diagonal of C(q): ``min(delta, delta' + (1 - 1/q) * omega)``."""
    return np.minimum(model.delta, model.delta_prime + (1.0 - 1.0 / q) * model.omega)


def spread_weight(model: NetworkModel, q: np.ndarray) -> np.ndarray:
    """Diagonal of ``A + Q(I - A)``."""
    return model.alpha + q * (1.0 - model.alpha)


def build_system_matrix(model: NetworkModel, kind, q=None) -> SystemMatrix:
    """Build one of the system matrices of the linearized model.

    ``M_SIR = I - D + S(0)B``, ``M(q) = I - C(q) + (A + Q(I-A))S(0)B``,
    ``N = I - D + A S(0)B`` and ``BLOCK``, the 2n x 2n operator mapping
    ``(x(t), y(t))`` to ``(x(t+1), y(t+1))``.  Edge deletions are applied by
    passing a model built with :func:`sdir.model.delete_edges`.
    """
    kind = MatrixKind(kind)
    if (q is not None) != (kind is MatrixKind.M_OF_Q):
        raise ValueError("q must be supplied exactly when kind is M_of_q")
    n = model.n
    eye = np.eye(n)
    SB = model.s0[:, None] * model.B
    if kind is MatrixKind.M_SIR:
        mat = eye - np.diag(model.delta) + SB
    elif kind is MatrixKind.N:
        mat = eye - np.diag(model.delta) + model.alpha[:, None] * SB
    elif kind is MatrixKind.M_OF_Q:
        q = check_q(q, n)
        mat = eye - np.diag(healing_floor(model, q)) + spread_weight(model, q)[:, None] * SB
    else:
        mat = np.empty((2 * n, 2 * n))
        mat[:n, :n] = eye - np.diag(model.delta) + model.alpha[:, None] * SB
        mat[:n, n:] = np.diag(model.omega)
        mat[n:, :n] = (1.0 - model.alpha)[:, None] * SB
        mat[n:, n:] = np.diag(1.0 - model.omega - model.delta_prime)
    mat.setflags(write=False)
    return SystemMatrix(kind, mat, None if q is None else np.array(q))


def spectral_radius(
    mat,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100_000,
    shift: float = 1e-3,
) -> float:
    """Spectral radius of a nonnegative square matrix.

    The matrix is split into strongly connected components; the radius is the
    largest radius of the irreducible diagonal blocks.  Each block is handled
    by power iteration on ``block + shift*I`` with Collatz-Wielandt bounds
    ``min(Av/v) <= rho <= max(Av/v)``, stopping when the bracket is narrower
    than ``tol``.  If ``max_iter`` is reached the block falls back to Gelfand's
    formula evaluated by normalized repeated squaring.
    """
    A = np.asarray(mat, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"spectral_radius needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if np.any(A < 0):
        raise ValueError("matrix has negative entries")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.shape[0]
    if n == 0:
        return 0.0

    ncomp, labels = connected_components(csr_matrix(A), directed=True, connection="strong")
    if ncomp == 1:
        return _irreducible_radius(A, tol, max_iter, shift)

    # singleton components contribute their diagonal entry
    sizes = np.bincount(labels, minlength=ncomp)
    single = sizes[labels] == 1
    best = float(np.diag(A)[single].max()) if single.any() else 0.0

    # cheap row-sum bound lets us skip blocks that cannot beat the current best
    order = np.argsort(labels, kind="stable")
    bounds = np.cumsum(sizes)
    blocks = [order[end - size:end] for size, end in zip(sizes, bounds) if size > 1]
    blocks = [A[np.ix_(idx, idx)] for idx in blocks]
    blocks.sort(key=lambda b: -b.sum(axis=1).max())
    for sub in blocks:
        if sub.sum(axis=1).max() <= best:
            continue
        best = max(best, _irreducible_radius(sub, tol, max_iter, shift))
    return best


def radius_below_one(mat, pivot_tol: float = 1e-12) -> bool:
    """Whether ``rho(mat) < 1`` for a nonnegative matrix.

    ``I - mat`` is a Z-matrix, and it is a nonsingular M-matrix (equivalently
    ``rho(mat) < 1``) exactly when Gaussian elimination without pivoting
    produces only positive pivots.  Elimination is stable for M-matrices, so
    this is an O(n^3) test with no iteration.
    """
    G = np.eye(len(mat)) - np.asarray(mat, dtype=float)
    for k in range(len(G)):
        pivot = G[k, k]
        if not pivot > pivot_tol:
            return False
        G[k + 1:, k + 1:] -= np.outer(G[k + 1:, k] / pivot, G[k, k + 1:])
    return True


def _irreducible_radius(A, tol, max_iter, shift):
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    if not np.any(A):
        return 0.0
    S = A + shift * np.eye(n)
    v = np.ones(n)
    for _ in range(max_iter):
        w = S @ v
        if v.min() <= 0.0:
            # an entry underflowed; the bracket is no longer meaningful
            break
        ratios = w / v
        lo, hi = ratios.min(), ratios.max()
        if hi - lo < tol:
            return max(0.5 * (lo + hi) - shift, 0.0)
        scale = w.max()
        if not np.isfinite(scale) or scale <= 0.0 or w.min() <= 0.0:
            break
        v = w / scale
    warnings.warn("power iteration did not converge; using Gelfand fallback", RuntimeWarning, stacklevel=3)
    return gelfand_radius(A)


def gelfand_radius(A, squarings: int = 60) -> float:
    """``lim ||A^k||^(1/k)`` with ``k = 2**j``, computed in log space."""
    A = np.asarray(A, dtype=float)
    log_norm = 0.0
    X = A
    estimate = np.inf
    for j in range(squarings + 1):
        norm = np.abs(X).sum(axis=1).max()
        if norm == 0.0:
            return 0.0
        estimate = math.exp((log_norm + math.log(norm)) / 2**j)
        # keep X = A^(2^j) / exp(log_norm) well scaled
        X = X / norm
        log_norm = 2.0 * (log_norm + math.log(norm))
        X = X @ X
    return estimate


def select_q(model: NetworkModel, refine: bool = False, floor: float = Q_FLOOR) -> np.ndarray:
    """Choose q making ``rho(M(q)) <= rho(M_SIR)``.

    Node i gets the lower end of ``[omega/(omega + delta' - delta), 1]``
    (floored at ``floor``), or 1 when ``omega + delta' - delta = 0``.  Inside
    that range C(q) equals D and M(q) grows with q, so the lower end is the
    best choice in the range.  ``refine=True`` additionally runs a coordinate
    search over all of (0, 1]^n, accepting only moves that lower rho(M(q)).
    """
    if np.any(model.delta > model.delta_prime + 1e-12):
        bad = np.nonzero(model.delta > model.delta_prime + 1e-12)[0].tolist()
        raise ValueError(f"select_q requires delta <= delta_prime; violated at nodes {bad}")
    W = model.omega
    denom = W + model.delta_prime - model.delta
    q = np.ones(model.n)
    pos = denom > 0
    q[pos] = np.maximum(floor, W[pos] / denom[pos])
    q = np.minimum(q, 1.0)
    if refine:
        q = _refine_q(model, q, floor)
    return q


def _refine_q(model, q, floor, sweeps=3, grid=9):
    def rho(qv):
        return spectral_radius(build_system_matrix(model, MatrixKind.M_OF_Q, qv).entries)

    best = rho(q)
    for _ in range(sweeps):
        improved = False
        for i in range(model.n):
            for value in np.geomspace(floor, 1.0, grid):
                if value == q[i]:
                    continue
                trial = q.copy()
                trial[i] = value
                r = rho(trial)
                if r < best - 1e-10:
                    best, q, improved = r, trial, True
        if not improved:
            break
    return q


@dataclass(frozen=True)
class ConvergenceReport:
    rho_sir: float
    rho_m_q: float
    rho_n: float
    rho_block: float
    q: np.ndarray
    verdict: str

    @property
    def sufficient_condition(self) -> bool:
        return bool(self.rho_m_q < 1.0)

    def to_dict(self) -> dict:
        return {
            "rho_M_SIR": self.rho_sir,
            "rho_M_q": self.rho_m_q,
            "rho_N": self.rho_n,
            "rho_BLOCK": self.rho_block,
            "q": [float(v) for v in self.q],
            "sufficient_condition_met": self.sufficient_condition,
            "verdict": self.verdict,
        }


def analyze(model: NetworkModel, q=None, tol: float = DEFAULT_TOL) -> ConvergenceReport:
    """Radii of all system matrices plus a convergence verdict.

    The verdict is ``"convergent"`` when ``rho(M(q)) < 1`` certifies decay of
    x and y, ``"convergent (block radius)"`` when only the exact block
    operator has radius below one, and ``"divergent"`` otherwise.
    """
    q = select_q(model) if q is None else check_q(q, model.n)
    radius = {
        kind: float(spectral_radius(build_system_matrix(model, kind, q if kind is MatrixKind.M_OF_Q else None).entries, tol))
        for kind in MatrixKind
    }
    if radius[MatrixKind.M_OF_Q] < 1.0:
        verdict = "convergent"
    elif radius[MatrixKind.BLOCK] < 1.0:
        verdict = "convergent (block radius)"
    else:
        verdict = "divergent"
    return ConvergenceReport(
        rho_sir=radius[MatrixKind.M_SIR],
        rho_m_q=radius[MatrixKind.M_OF_Q],
        rho_n=radius[MatrixKind.N],
        rho_block=radius[MatrixKind.BLOCK],
        q=q,
        verdict=verdict,
    )

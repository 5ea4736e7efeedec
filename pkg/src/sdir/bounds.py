"""Supermodular upper and lower bounds on the estimated infection amount.

With ``K = A + Q(I - A)`` and ``M_{-P} = M(q)`` on the reduced graph,

    sigma_U(P) = 1' K^-1 (D (I - M_{-P})^-1 - I) (x0 + Q y0)
    sigma_L(P) = 1' A^-1 (D (I - N_{-P})^-1 - I) (x0 + W (W + D')^-1 y0)

and ``sigma_L(P) <= sigma(P) <= sigma_U(P)`` whenever the relevant radius is
below one.  Both are non-increasing and supermodular in ``P``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from sdir.model import Edge, NetworkModel, as_edge_set, delete_edges
from sdir.spectral import (
    MatrixKind,
    build_system_matrix,
    check_q,
    radius_below_one,
    select_q,
    spectral_radius,
    spread_weight,
)

SINGULAR_THRESHOLD = 1e-12


class BoundKind(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


def _lower_weights(model: NetworkModel) -> np.ndarray:
    wd = model.omega + model.delta_prime
    if np.any(wd <= 0):
        bad = np.nonzero(wd <= 0)[0].tolist()
        raise ValueError(f"lower bound needs omega + delta_prime > 0; zero at nodes {bad}")
    return model.omega / wd


def _setup(model: NetworkModel, kind: BoundKind, q):
    """Return (row scale of S(0)B, start vector, base matrix builder args)."""
    if kind is BoundKind.UPPER:
        q = select_q(model) if q is None else check_q(q, model.n)
        scale = spread_weight(model, q)
        start = model.x0 + q * model.y0
    else:
        q = None
        scale = np.array(model.alpha)
        start = model.x0 + _lower_weights(model) * model.y0
    return q, scale, start


def _base_matrix(model: NetworkModel, kind: BoundKind, q) -> np.ndarray:
    if kind is BoundKind.UPPER:
        return build_system_matrix(model, MatrixKind.M_OF_Q, q).entries
    return build_system_matrix(model, MatrixKind.N).entries


def _bound(model, P, kind, q):
    reduced = delete_edges(model, P)
    q, scale, start = _setup(reduced, kind, q)
    base = _base_matrix(reduced, kind, q)
    if not radius_below_one(base):
        return math.inf
    G = np.eye(model.n) - base
    try:
        lu = scipy.linalg.lu_factor(G, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return math.inf
    if np.min(np.abs(np.diag(lu[0]))) < SINGULAR_THRESHOLD:
        return math.inf
    z = scipy.linalg.lu_solve(lu, start)
    return float(((reduced.delta * z - start) / scale).sum())


def sigma_upper(model: NetworkModel, P=(), q=None) -> float:
    """Upper bound on the infection amount after deleting ``P``.

    ``q`` defaults to :func:`sdir.spectral.select_q` of the model.  Returns
    ``inf`` when ``rho(M_{-P}) >= 1`` or ``I - M_{-P}`` is singular.
    """
    return _bound(model, P, BoundKind.UPPER, q)


def sigma_lower(model: NetworkModel, P=()) -> float:
    """Lower bound on the infection amount after deleting ``P``.

    Returns ``inf`` when ``rho(N_{-P}) >= 1``, which means the bound does not
    apply.  Raises :class:`ValueError` if ``omega + delta_prime`` vanishes at
    some node.
    """
    return _bound(model, P, BoundKind.LOWER, None)


def sigma_upper_walk_form(model: NetworkModel, P=(), q=None) -> float:
    """``1' S(0) B_{-P} (I - M_{-P})^-1 (x0 + Q y0)``, the accumulated-growth form."""
    reduced = delete_edges(model, P)
    q = select_q(reduced) if q is None else check_q(q, model.n)
    M = build_system_matrix(reduced, MatrixKind.M_OF_Q, q).entries
    z = np.linalg.solve(np.eye(model.n) - M, reduced.x0 + q * reduced.y0)
    return float((reduced.s0 * (reduced.B @ z)).sum())


def sigma_lower_walk_form(model: NetworkModel, P=()) -> float:
    """``1' S(0) B_{-P} ((I-N)^-1 x0 + (I-N)^-1 (I-F)^-1 W y0)`` with ``F = I - W - D'``."""
    reduced = delete_edges(model, P)
    N = build_system_matrix(reduced, MatrixKind.N).entries
    G = np.eye(model.n) - N
    F = 1.0 - reduced.omega - reduced.delta_prime
    inner = np.linalg.solve(G, reduced.x0) + np.linalg.solve(G, reduced.omega * reduced.y0 / (1.0 - F))
    return float((reduced.s0 * (reduced.B @ inner)).sum())


def sigma_sir_bound(model: NetworkModel, P=()) -> float:
    """``1' (D (I - M_SIR)^-1 - I)(x0 + y0)``, the bound that ignores the D state."""
    reduced = delete_edges(model, P)
    M = build_system_matrix(reduced, MatrixKind.M_SIR).entries
    if spectral_radius(M) >= 1.0:
        return math.inf
    v = reduced.x0 + reduced.y0
    z = np.linalg.solve(np.eye(model.n) - M, v)
    return float((reduced.delta * z - v).sum())


# ---------------------------------------------------------------------------
# incremental evaluation


@dataclass(frozen=True, eq=False)
class BoundCache:
    """Inverse of ``I - base`` for the current deletion set, updated by rank one.

    Deleting edge ``(j, i)`` lowers ``base[i, j]`` by ``scale[i] * s0[i] *
    B[i, j]``, a rank-one change, so the inverse follows from the
    Sherman-Morrison identity in O(n^2).
    """

    kind: BoundKind
    model: NetworkModel
    base: np.ndarray
    inverse: np.ndarray | None
    deleted: tuple[Edge, ...]
    q: np.ndarray | None
    scale: np.ndarray
    start: np.ndarray
    valid: bool

    @classmethod
    def build(cls, model: NetworkModel, kind, q=None, P=()) -> "BoundCache":
        kind = BoundKind(kind)
        P = as_edge_set(P)
        if kind is BoundKind.UPPER and q is None:
            q = select_q(model)
        reduced = delete_edges(model, P)
        q, scale, start = _setup(reduced, kind, q)
        base = _base_matrix(reduced, kind, q)
        return cls._factor(kind, model, base, P, q, scale, start)

    @classmethod
    def _factor(cls, kind, model, base, P, q, scale, start):
        valid = radius_below_one(base)
        inverse = None
        if valid:
            try:
                inverse = scipy.linalg.inv(np.eye(model.n) - base)
            except np.linalg.LinAlgError:
                valid = False
        return cls(kind, model, base, inverse, P, q, scale, start, valid)

    def _coef(self, edge: Edge) -> float:
        j, i = edge
        return float(self.scale[i] * self.model.s0[i] * self.model.B[i, j])

    def _active(self, edge: Edge) -> bool:
        return edge not in self.deleted and self.model.has_edge(edge)

    def value(self) -> float:
        if not self.valid:
            return math.inf
        z = self.inverse @ self.start
        return float(((self.model.delta * z - self.start) / self.scale).sum())

    def what_if(self, edges) -> np.ndarray:
        """Bound value after additionally deleting each edge, without mutating."""
        edges = list(edges)
        if not self.valid:
            # a single deletion may pull the radius below one
            return np.array([
                _bound(self.model, self.deleted + (e,), self.kind, self.q) if self._active(e) else math.inf
                for e in edges
            ])
        inv = self.inverse
        z = inv @ self.start
        current = float(((self.model.delta * z - self.start) / self.scale).sum())
        w = (self.model.delta / self.scale) @ inv
        out = np.empty(len(edges))
        for k, e in enumerate(edges):
            if not self._active(e):
                out[k] = current
                continue
            j, i = e
            c = self._coef(e)
            denom = 1.0 + c * inv[j, i]
            if abs(denom) < SINGULAR_THRESHOLD:
                out[k] = _bound(self.model, self.deleted + (e,), self.kind, self.q)
            else:
                out[k] = current - c * z[j] * w[i] / denom
        return out

    def residual(self) -> float:
        """Frobenius norm of ``inverse @ (I - base) - I``."""
        if not self.valid:
            return math.inf
        n = self.model.n
        return float(np.linalg.norm(self.inverse @ (np.eye(n) - self.base) - np.eye(n)))


def refresh_cache(cache: BoundCache, edge: Edge) -> BoundCache:
    """Cache for ``P + {edge}``; unchanged if the edge is absent or already deleted."""
    edge = (int(edge[0]), int(edge[1]))
    if not cache._active(edge):
        return cache
    j, i = edge
    c = cache._coef(edge)
    base = np.array(cache.base)
    base[i, j] -= c
    deleted = cache.deleted + (edge,)
    if not cache.valid:
        # deletions only lower the radius, so the bound may become valid
        return BoundCache._factor(cache.kind, cache.model, base, deleted, cache.q, cache.scale, cache.start)
    inv = cache.inverse
    denom = 1.0 + c * inv[j, i]
    if abs(denom) < SINGULAR_THRESHOLD:
        return BoundCache._factor(cache.kind, cache.model, base, deleted, cache.q, cache.scale, cache.start)
    inverse = inv - (c / denom) * np.outer(inv[:, i], inv[j, :])
    return replace(cache, base=base, inverse=inverse, deleted=deleted)

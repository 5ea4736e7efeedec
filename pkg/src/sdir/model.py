"""Network model for SDIR diffusion: parameters, validation, serialization
and synthetic generation.

Edges are written ``(j, i)`` meaning "node j can infect node i", which is the
matrix entry ``B[i, j]``.  This orientation is used everywhere in the package.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

Edge = tuple[int, int]

VECTOR_FIELDS = ("alpha", "omega", "delta", "delta_prime", "x0", "y0", "r0")
DOCUMENT_FIELDS = ("n", "edges") + VECTOR_FIELDS

# slack for floating point comparisons in validation
_EPS = 1e-12


class ModelError(Exception):
    """Base class for model construction and I/O errors."""


class DimensionError(ModelError, ValueError):
    pass


class DocumentError(ModelError, ValueError):
    pass


class MissingFieldError(DocumentError):
    def __init__(self, name):
        super().__init__(f"model document is missing required field {name!r}")
        self.field = name


class ValidationError(ModelError, ValueError):
    """Raised when a model violates the SDIR assumptions; carries the report."""

    def __init__(self, report):
        lines = "; ".join(f"{v.rule}: {v.message}" for v in report.violations[:5])
        more = len(report.violations) - 5
        if more > 0:
            lines += f"; ... {more} more"
        super().__init__(f"invalid model: {lines}")
        self.report = report


class EdgeError(ModelError, ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    rule: str
    index: int | Edge | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def __bool__(self):
        return self.ok


def _frozen_vector(values, n, name):
    arr = np.array(values, dtype=float).reshape(-1) if np.ndim(values) else None
    if arr is None or arr.shape != (n,):
        got = None if arr is None else arr.shape[0]
        raise DimensionError(f"{name} must have length {n}, got {got}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Directed weighted network with per-node SDIR parameters.

    ``B[i, j]`` is the expected probability that an infected node ``j``
    infects a susceptible node ``i``.  ``x0``, ``y0`` and ``r0`` are the
    initial expected I, D and R occupations.  Instances are immutable; the
    arrays are stored read-only.
    """

    B: np.ndarray
    alpha: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    delta_prime: np.ndarray
    x0: np.ndarray
    y0: np.ndarray | None = None
    r0: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] < 1:
            raise DimensionError(f"B must be a non-empty square matrix, got shape {B.shape}")
        n = B.shape[0]
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        for name in VECTOR_FIELDS:
            value = getattr(self, name)
            if value is None:
                value = np.zeros(n)
            object.__setattr__(self, name, _frozen_vector(value, n, name))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @cached_property
    def s0(self) -> np.ndarray:
        """Initial susceptible fraction per node (the diagonal of S(0))."""
        s = 1.0 - self.x0 - self.y0 - self.r0
        s.setflags(write=False)
        return s

    @cached_property
    def edges(self) -> tuple[Edge, ...]:
        """All edges ``(j, i)`` with ``B[i, j] > 0``, sorted lexicographically."""
        targets, sources = np.nonzero(self.B)
        return tuple(sorted((int(j), int(i)) for i, j in zip(targets, sources) if i != j))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, edge: Edge) -> bool:
        j, i = edge
        return 0 <= i < self.n and 0 <= j < self.n and self.B[i, j] > 0

    def replace(self, **changes) -> "NetworkModel":
        values = {name: getattr(self, name) for name in ("B", "metadata") + VECTOR_FIELDS}
        values.update(changes)
        return NetworkModel(**values)

    def __eq__(self, other):
        if not isinstance(other, NetworkModel):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.B, other.B)
            and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in VECTOR_FIELDS)
            and self.metadata == other.metadata
        )

    __hash__ = None


def as_edge_set(edges: Iterable[Sequence[int]]) -> tuple[Edge, ...]:
    """Normalize an iterable of ``(source, target)`` pairs into an edge tuple.

    Order is preserved.  Duplicates and self-loops raise :class:`EdgeError`.
    """
    out = []
    seen = set()
    for pair in edges:
        if len(pair) != 2:
            raise EdgeError(f"edge must be a (source, target) pair, got {pair!r}")
        j, i = int(pair[0]), int(pair[1])
        if i == j:
            raise EdgeError(f"self-loop ({j}, {i}) is not an edge")
        if (j, i) in seen:
            raise EdgeError(f"duplicate edge ({j}, {i})")
        seen.add((j, i))
        out.append((j, i))
    return tuple(out)


def candidate_edges(model: NetworkModel, Q=None) -> tuple[Edge, ...]:
    """Resolve a candidate edge set against ``model``; ``None`` means all edges."""
    if Q is None:
        return model.edges
    Q = as_edge_set(Q)
    for e in Q:
        if not model.has_edge(e):
            raise EdgeError(f"candidate edge {e} is not an edge of the model")
    return Q


def validate_model(model: NetworkModel) -> ValidationReport:
    """Check every SDIR modelling assumption and return all violations.

    Dimension problems are caught when the model is constructed, so this only
    reports value-level violations.
    """
    v = []
    B = model.B

    def add(rule, index, message):
        v.append(Violation(rule, index, message))

    if not np.all(np.isfinite(B)):
        add("finite", None, "B contains non-finite entries")
    for name in VECTOR_FIELDS:
        arr = getattr(model, name)
        if not np.all(np.isfinite(arr)):
            add("finite", None, f"{name} contains non-finite entries")

    bad = np.argwhere((B < 0) | (B >= 1))
    for i, j in bad:
        add("B_range", (int(j), int(i)), f"B[{i},{j}]={B[i, j]:.17g} outside [0, 1)")
    for i in np.nonzero(np.diag(B) != 0)[0]:
        add("B_diagonal", int(i), f"B[{i},{i}]={B[i, i]:.17g} must be 0")
    rows = B.sum(axis=1)
    for i in np.nonzero(rows >= 1)[0]:
        add("row_sum", int(i), f"row {i} of B sums to {rows[i]:.17g}, must be < 1")

    for name in ("omega", "delta", "delta_prime", "x0", "y0", "r0"):
        arr = getattr(model, name)
        for i in np.nonzero((arr < 0) | (arr > 1))[0]:
            add("range", int(i), f"{name}[{i}]={arr[i]:.17g} outside [0, 1]")

    for i in np.nonzero((model.alpha <= 0) | (model.alpha > 1))[0]:
        add("alpha_range", int(i), f"alpha[{i}]={model.alpha[i]:.17g} outside (0, 1]")
    for i in np.nonzero(model.delta > model.delta_prime + _EPS)[0]:
        add(
            "healing_order",
            int(i),
            f"delta[{i}]={model.delta[i]:.17g} exceeds delta_prime[{i}]={model.delta_prime[i]:.17g}",
        )
    for i in np.nonzero(model.omega + model.delta_prime > 1 + _EPS)[0]:
        add(
            "d_state_probability",
            int(i),
            f"omega[{i}] + delta_prime[{i}] = {model.omega[i] + model.delta_prime[i]:.17g} exceeds 1",
        )
    occupied = model.x0 + model.y0 + model.r0
    for i in np.nonzero(occupied > 1 + _EPS)[0]:
        add("initial_state", int(i), f"x0+y0+r0 at node {i} is {occupied[i]:.17g} > 1")

    return ValidationReport(tuple(v))


def delete_edges(model: NetworkModel, P: Iterable[Edge], strict: bool = False) -> NetworkModel:
    """Return a copy of ``model`` with every edge of ``P`` removed.

    Edges not present in the model are skipped with a warning, or raise
    :class:`EdgeError` when ``strict`` is set.
    """
    P = as_edge_set(P)
    if not P:
        return model
    B = np.array(model.B)
    for j, i in P:
        if not (0 <= i < model.n and 0 <= j < model.n):
            raise EdgeError(f"edge ({j}, {i}) references a node outside 0..{model.n - 1}")
        if model.B[i, j] == 0:
            msg = f"edge ({j}, {i}) is not present in the model"
            if strict:
                raise EdgeError(msg)
            warnings.warn(msg, stacklevel=2)
        B[i, j] = 0.0
    return model.replace(B=B)


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model: NetworkModel) -> dict:
    doc = {
        "n": model.n,
        "edges": [[j, i, float(model.B[i, j])] for j, i in model.edges],
    }
    for name in VECTOR_FIELDS:
        doc[name] = [float(a) for a in getattr(model, name)]
    doc["metadata"] = model.metadata
    return doc


def emit_model_document(model: NetworkModel) -> str:
    """Serialize ``model`` to a deterministic JSON document."""
    return json.dumps(model_to_dict(model), indent=2, allow_nan=False) + "\n"


def model_from_dict(doc: dict, validate: bool = True) -> NetworkModel:
    if not isinstance(doc, dict):
        raise DocumentError("model document must be a JSON object")
    for name in DOCUMENT_FIELDS:
        if name not in doc:
            raise MissingFieldError(name)
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise DocumentError(f"n must be a positive integer, got {n!r}")
    B = np.zeros((n, n))
    seen = set()
    for entry in doc["edges"]:
        if not isinstance(entry, (list, tuple)) or len(entry) != 3:
            raise DocumentError(f"edge entries must be [source, target, weight], got {entry!r}")
        j, i, w = entry
        if not (isinstance(j, int) and isinstance(i, int)) or not (0 <= i < n and 0 <= j < n):
            raise DocumentError(f"edge {entry!r} references an invalid node index")
        if (j, i) in seen:
            raise DocumentError(f"duplicate edge ({j}, {i})")
        seen.add((j, i))
        B[i, j] = float(w)
    vectors = {}
    for name in VECTOR_FIELDS:
        value = doc[name]
        if not isinstance(value, list):
            raise DocumentError(f"{name} must be a list")
        if len(value) != n:
            raise DimensionError(f"{name} must have length {n}, got {len(value)}")
        vectors[name] = value
    metadata = doc.get("metadata") or {}
    model = NetworkModel(B=B, metadata=metadata, **vectors)
    if validate:
        report = validate_model(model)
        if not report.ok:
            raise ValidationError(report)
    return model


def parse_model_document(text: str, validate: bool = True) -> NetworkModel:
    """Parse a JSON model document and validate it."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"malformed model document: {exc}") from exc
    return model_from_dict(doc, validate=validate)


def load_model(path, validate: bool = True) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model_document(fh.read(), validate=validate)


def save_model(model: NetworkModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_model_document(model))


def parse_edge_document(text: str) -> tuple[Edge, ...]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"malformed edge-set document: {exc}") from exc
    if not isinstance(doc, list):
        raise DocumentError("edge-set document must be a list of [source, target] pairs")
    return as_edge_set(doc)


def emit_edge_document(edges: Iterable[Edge]) -> str:
    return json.dumps([[j, i] for j, i in edges]) + "\n"


def load_edge_set(path) -> tuple[Edge, ...]:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_document(fh.read())


def save_edge_set(edges: Iterable[Edge], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_edge_document(edges))


# ---------------------------------------------------------------------------
# synthetic networks

TOPOLOGIES = ("erdos_renyi", "star", "path", "complete")


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a random SDIR network.

    Each ``(low, high)`` pair is a uniform sampling range.  ``delta_prime`` is
    drawn at or above the node's ``delta`` and ``omega`` is capped so that
    ``omega + delta_prime <= 1``.
    """

    topology: str = "erdos_renyi"
    n: int = 20
    p: float = 0.1
    direction: str = "outward"
    beta: tuple[float, float] = (0.05, 0.3)
    alpha: tuple[float, float] = (0.3, 1.0)
    omega: tuple[float, float] = (0.0, 0.3)
    delta: tuple[float, float] = (0.2, 0.5)
    delta_prime: tuple[float, float] = (0.4, 0.7)
    seeds: int = 1
    delayed_seeds: int = 0
    max_row_sum: float = 0.95

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorSpec":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise DocumentError(f"unknown generator fields: {sorted(unknown)}")
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            name: list(value) if isinstance(value, tuple) else value
            for name, value in self.__dict__.items()
        }

    def check(self) -> None:
        """Raise :class:`ValueError` if no valid model can be sampled."""
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.topology == "star" and self.direction not in ("outward", "inward"):
            raise ValueError("star direction must be 'outward' or 'inward'")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("edge probability p must lie in [0, 1]")
        for name in ("beta", "alpha", "omega", "delta", "delta_prime"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name} range {lo, hi} must satisfy 0 <= low <= high <= 1")
        if self.beta[1] >= 1.0:
            raise ValueError("beta range must stay below 1")
        if self.alpha[0] <= 0.0:
            raise ValueError("alpha range must exclude 0")
        if not 0.0 < self.max_row_sum < 1.0:
            raise ValueError("max_row_sum must lie in (0, 1)")
        dp_cap = min(self.delta_prime[1], 1.0 - self.omega[0])
        if self.delta[0] > dp_cap:
            raise ValueError(
                f"delta range {self.delta} lies above the admissible delta_prime range "
                f"(max {dp_cap}); delta <= delta_prime cannot hold"
            )
        if self.delta_prime[0] + self.omega[0] > 1.0:
            raise ValueError("omega and delta_prime ranges force omega + delta_prime > 1")
        if not 0 <= self.seeds + self.delayed_seeds <= self.n:
            raise ValueError("seeds + delayed_seeds must lie in 0..n")


def _topology_edges(spec: GeneratorSpec, rng: np.random.Generator) -> list[Edge]:
    n = spec.n
    if spec.topology == "star":
        if spec.direction == "outward":
            return [(0, leaf) for leaf in range(1, n)]
        return [(leaf, 0) for leaf in range(1, n)]
    if spec.topology == "path":
        return [(i, i + 1) for i in range(n - 1)]
    if spec.topology == "complete":
        return [(j, i) for j in range(n) for i in range(n) if i != j]
    # erdos_renyi: each ordered pair independently
    draws = rng.random((n, n))
    return [(j, i) for j in range(n) for i in range(n) if i != j and draws[j, i] < spec.p]


def generate_network(spec: GeneratorSpec, seed: int) -> NetworkModel:
    """Sample a valid SDIR network; deterministic in ``(spec, seed)``."""
    spec.check()
    rng = np.random.default_rng(seed)
    n = spec.n

    edges = _topology_edges(spec, rng)
    B = np.zeros((n, n))
    for j, i in edges:
        B[i, j] = rng.uniform(*spec.beta)
    # B entries sampled at exactly 0 would silently drop edges
    B[(B == 0) & _edge_mask(n, edges)] = np.nextafter(0.0, 1.0)

    rescaled = []
    rows = B.sum(axis=1)
    for i in range(n):
        if rows[i] > spec.max_row_sum:
            B[i] *= spec.max_row_sum / rows[i]
            rescaled.append(i)

    alpha = rng.uniform(*spec.alpha, size=n)
    alpha[alpha <= 0] = spec.alpha[1]
    dp_cap = min(spec.delta_prime[1], 1.0 - spec.omega[0])
    delta = rng.uniform(spec.delta[0], min(spec.delta[1], dp_cap), size=n)
    delta_prime = rng.uniform(np.maximum(spec.delta_prime[0], delta), dp_cap)
    omega = rng.uniform(spec.omega[0], np.minimum(spec.omega[1], 1.0 - delta_prime))

    order = rng.permutation(n)
    x0 = np.zeros(n)
    y0 = np.zeros(n)
    if spec.topology == "star" and spec.direction == "outward" and spec.seeds >= 1:
        # the hub is the natural source of an outward star
        order = np.concatenate(([0], order[order != 0]))
    x0[order[: spec.seeds]] = 1.0
    y0[order[spec.seeds : spec.seeds + spec.delayed_seeds]] = 1.0

    metadata = {
        "generator": spec.to_dict(),
        "seed": int(seed),
        "rescaled_rows": rescaled,
    }
    model = NetworkModel(
        B=B,
        alpha=alpha,
        omega=omega,
        delta=delta,
        delta_prime=delta_prime,
        x0=x0,
        y0=y0,
        r0=np.zeros(n),
        metadata=metadata,
    )
    report = validate_model(model)
    if not report.ok:  # pragma: no cover - guarded by GeneratorSpec.check
        raise ValidationError(report)
    return model


def _edge_mask(n, edges):
    mask = np.zeros((n, n), dtype=bool)
    for j, i in edges:
        mask[i, j] = True
    return mask

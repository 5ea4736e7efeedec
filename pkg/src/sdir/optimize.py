"""Edge-deletion heuristics for minimizing the estimated infection amount."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from sdir.bounds import BoundCache, BoundKind, refresh_cache, sigma_lower, sigma_upper
from sdir.dynamics import estimated_infection
from sdir.model import Edge, NetworkModel, candidate_edges
from sdir.spectral import select_q

OBJECTIVES = ("lower", "upper", "sigma")
BRUTE_FORCE_CAP = 2_000_000


class EnumerationCapError(ValueError):
    def __init__(self, required, cap):
        super().__init__(f"brute force needs {required} evaluations, above the cap of {cap}")
        self.required = required
        self.cap = cap


@dataclass(frozen=True)
class TraceStep:
    edge: Edge
    marginal: float
    value: float


@dataclass
class OptimizationResult:
    chosen: tuple[Edge, ...]
    objective_sigma: float
    method: str
    trace: list[TraceStep] = field(default_factory=list)
    elapsed: float = 0.0
    candidates: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_dict(self, timing: bool = False) -> dict:
        doc = {
            "method": self.method,
            "chosen": [list(e) for e in self.chosen],
            "sigma": _num(self.objective_sigma),
            "trace": [
                {"edge": list(s.edge), "marginal": _num(s.marginal), "value": _num(s.value)}
                for s in self.trace
            ],
            "flags": list(self.flags),
        }
        if self.candidates:
            doc["candidates"] = {
                name: {"chosen": [list(e) for e in c["chosen"]], "sigma": _num(c["sigma"])}
                for name, c in self.candidates.items()
            }
        if timing:
            doc["elapsed_seconds"] = self.elapsed
        return doc


def _num(v):
    return "inf" if v == math.inf else float(v)


def _marginal(before: float, after: float) -> float:
    if before == math.inf:
        return math.inf if after < math.inf else 0.0
    return before - after


def objective_function(objective: str, model: NetworkModel, q=None):
    """Set function ``P -> value`` for one of ``lower``, ``upper``, ``sigma``."""
    if objective == "upper":
        q = select_q(model) if q is None else q
        return lambda P: sigma_upper(model, P, q)
    if objective == "lower":
        return lambda P: sigma_lower(model, P)
    if objective == "sigma":
        return lambda P: estimated_infection(model, P)
    raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")


def greedy(
    objective: str,
    model: NetworkModel,
    Q=None,
    k: int = 1,
    lazy: bool = True,
    incremental: bool = True,
    q=None,
    tie_tol: float = 1e-12,
) -> OptimizationResult:
    """Greedy edge deletion: each round removes the edge with the largest drop.

    Marginals within ``tie_tol`` (relative to the current value) count as
    ties and go to the lexicographically smallest edge.  For the bound
    objectives the drops come from rank-one updates of a cached inverse
    (``incremental``) and stale upper estimates are reused through a
    priority queue (``lazy``), which is sound because the bounds are
    supermodular.  Neither shortcut is used for ``sigma``.
    """
    t0 = time.perf_counter()
    Q = candidate_edges(model, Q)
    if not 0 <= k <= len(Q):
        raise ValueError(f"budget k={k} must lie in 0..{len(Q)}")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    flags = []
    if objective == "sigma":
        lazy = incremental = False
        flags.append("no_guarantee")
    if objective == "upper" and q is None:
        q = select_q(model)

    chosen: list[Edge] = []
    trace: list[TraceStep] = []
    remaining = sorted(Q)

    if incremental:
        cache = BoundCache.build(model, BoundKind(objective), q=q)
        current = cache.value()

        def evaluate(edges):
            return cache.what_if(edges)
    else:
        f = objective_function(objective, model, q)
        current = f(())

        def evaluate(edges):
            return np.array([f(tuple(chosen) + (e,)) for e in edges])

    heap = None
    if lazy:
        values = evaluate(remaining)
        heap = [(-_marginal(current, v), e, 0) for e, v in zip(remaining, values)]
        heapq.heapify(heap)

    for round_ in range(k):
        tol = tie_tol * max(1.0, abs(current)) if current < math.inf else 0.0
        if lazy:
            edge, after = _lazy_pick(heap, current, round_, tol, evaluate)
        else:
            values = evaluate(remaining)
            marg = [_marginal(current, v) for v in values]
            best = max(marg)
            pick = min(idx for idx, m in enumerate(marg) if m >= best - tol)
            edge, after = remaining[pick], float(values[pick])
        remaining.remove(edge)
        chosen.append(edge)
        trace.append(TraceStep(edge, _marginal(current, after), after))
        if incremental:
            cache = refresh_cache(cache, edge)
            after = cache.value()
        current = after

    if objective == "sigma":
        sigma = current
    else:
        sigma = estimated_infection(model, chosen)
    if trace and all(s.value == math.inf for s in trace):
        flags.append("all_infinite")
    return OptimizationResult(
        chosen=tuple(chosen),
        objective_sigma=sigma,
        method=f"greedy-{objective}",
        trace=trace,
        elapsed=time.perf_counter() - t0,
        flags=flags,
    )


def _lazy_pick(heap, current, round_, tol, evaluate):
    # Heap entries are (-marginal, edge, round the marginal was computed in).
    while heap[0][2] != round_:
        _, e, _ = heapq.heappop(heap)
        v = float(evaluate([e])[0])
        heapq.heappush(heap, (-_marginal(current, v), e, round_))
    best = -heap[0][0]
    fresh = []
    # refresh every stale entry whose bound could still tie with the leader
    while heap and -heap[0][0] >= best - tol:
        neg, e, stamp = heapq.heappop(heap)
        if stamp != round_:
            v = float(evaluate([e])[0])
            m = _marginal(current, v)
            best = max(best, m)
            heapq.heappush(heap, (-m, e, round_))
            continue
        fresh.append((-neg, e))
    ties = [e for m, e in fresh if m >= best - tol]
    edge = min(ties)
    for m, e in fresh:
        if e != edge:
            heapq.heappush(heap, (-m, e, round_))
    return edge, float(evaluate([edge])[0])


def random_baseline(model: NetworkModel, Q=None, k: int = 1, seed: int = 0) -> OptimizationResult:
    """Uniformly random ``k``-subset of the candidates, deterministic in ``seed``."""
    t0 = time.perf_counter()
    Q = sorted(candidate_edges(model, Q))
    if not 0 <= k <= len(Q):
        raise ValueError(f"budget k={k} must lie in 0..{len(Q)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(Q), size=k, replace=False) if k else []
    chosen = tuple(Q[i] for i in idx)
    return OptimizationResult(
        chosen=chosen,
        objective_sigma=estimated_infection(model, chosen),
        method="random",
        elapsed=time.perf_counter() - t0,
    )


def brute_force(
    model: NetworkModel,
    Q=None,
    k: int = 1,
    objective: str = "sigma",
    cap: int = BRUTE_FORCE_CAP,
    q=None,
) -> OptimizationResult:
    """Exact minimizer of ``objective`` over all subsets of size at most ``k``.

    Among equal values the lexicographically smallest sorted edge tuple wins.
    """
    t0 = time.perf_counter()
    Q = sorted(candidate_edges(model, Q))
    if not 0 <= k <= len(Q):
        raise ValueError(f"budget k={k} must lie in 0..{len(Q)}")
    required = sum(comb(len(Q), j) for j in range(k + 1))
    if required > cap:
        raise EnumerationCapError(required, cap)
    f = objective_function(objective, model, q)
    best_val, best_set = math.inf, ()
    first = True
    for size in range(k + 1):
        for subset in itertools.combinations(Q, size):
            v = f(subset)
            if first or v < best_val or (v == best_val and subset < best_set):
                best_val, best_set, first = v, subset, False
    sigma = best_val if objective == "sigma" else estimated_infection(model, best_set)
    return OptimizationResult(
        chosen=best_set,
        objective_sigma=sigma,
        method=f"brute-force-{objective}" if objective != "sigma" else "brute-force",
        elapsed=time.perf_counter() - t0,
        candidates={"best": {"chosen": best_set, "sigma": sigma}},
    )


HEURISTICS = ("random", "greedy-sigma")


def sandwich(
    model: NetworkModel,
    Q=None,
    k: int = 1,
    heuristic: str = "random",
    seed: int = 0,
    lazy: bool = True,
    q=None,
) -> OptimizationResult:
    """Best of greedy-on-lower-bound, greedy-on-upper-bound and a heuristic.

    The three sets are compared by the estimated infection amount; ties go
    to the lower-bound set, then the heuristic set, then the upper-bound set.
    """
    t0 = time.perf_counter()
    Q = candidate_edges(model, Q)
    q = select_q(model) if q is None else q
    lower = greedy("lower", model, Q, k, lazy=lazy, q=q)
    upper = greedy("upper", model, Q, k, lazy=lazy, q=q)
    if heuristic == "random":
        base = random_baseline(model, Q, k, seed)
    elif heuristic == "greedy-sigma":
        base = greedy("sigma", model, Q, k)
    else:
        raise ValueError(f"unknown heuristic {heuristic!r}; expected one of {HEURISTICS}")
    options = {
        "P_L": {"chosen": lower.chosen, "sigma": lower.objective_sigma},
        "P_0": {"chosen": base.chosen, "sigma": base.objective_sigma},
        "P_U": {"chosen": upper.chosen, "sigma": upper.objective_sigma},
    }
    name = min(options, key=lambda key: options[key]["sigma"])
    flags = []
    if all(o["sigma"] == math.inf for o in options.values()):
        flags.append("all_infinite")
    flags.append(f"selected:{name}")
    result = OptimizationResult(
        chosen=options[name]["chosen"],
        objective_sigma=options[name]["sigma"],
        method="sandwich",
        trace=[],
        candidates=options,
        flags=flags,
    )
    result.elapsed = time.perf_counter() - t0
    return result


@dataclass(frozen=True)
class SandwichAudit:
    """Constituents of the sandwich approximation guarantee.

    With ``g(P) = sigma_U(empty) - sigma(P)`` the guarantee reads
    ``g(P_sand) >= max(lower_ratio, upper_ratio) * (1 - 1/e - eps) * g(P*)``.
    """

    sigma_upper_empty: float
    sigma_sand: float
    sigma_L_of_PL: float
    sigma_of_PL: float
    sigma_optimal: float
    sigma_upper_of_optimal: float
    lower_ratio: float
    upper_ratio: float
    eps: float

    @property
    def factor(self) -> float:
        return max(self.lower_ratio, self.upper_ratio) * (1.0 - 1.0 / math.e - self.eps)

    @property
    def lhs(self) -> float:
        return self.sigma_upper_empty - self.sigma_sand

    @property
    def rhs(self) -> float:
        return self.factor * (self.sigma_upper_empty - self.sigma_optimal)

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - 1e-9 * max(1.0, abs(self.sigma_upper_empty))

    def to_dict(self) -> dict:
        doc = {name: _num(getattr(self, name)) for name in self.__dataclass_fields__}
        doc.update(factor=self.factor, lhs=_num(self.lhs), rhs=_num(self.rhs), holds=self.holds)
        return doc


def _ratio(num, den):
    if not (math.isfinite(num) and math.isfinite(den)) or den <= 0:
        return 0.0
    return num / den


def sandwich_audit(
    model: NetworkModel,
    result: OptimizationResult,
    optimal: OptimizationResult,
    eps: float = 0.0,
    q=None,
) -> SandwichAudit:
    """Evaluate the sandwich guarantee for ``result`` against an exact optimum."""
    q = select_q(model) if q is None else q
    su0 = sigma_upper(model, (), q)
    PL = result.candidates["P_L"]["chosen"]
    sigma_PL = result.candidates["P_L"]["sigma"]
    sl_PL = sigma_lower(model, PL)
    opt = optimal.chosen
    sigma_opt = optimal.objective_sigma
    su_opt = sigma_upper(model, opt, q)
    return SandwichAudit(
        sigma_upper_empty=su0,
        sigma_sand=result.objective_sigma,
        sigma_L_of_PL=sl_PL,
        sigma_of_PL=sigma_PL,
        sigma_optimal=sigma_opt,
        sigma_upper_of_optimal=su_opt,
        lower_ratio=_ratio(su0 - sigma_PL, su0 - sl_PL),
        upper_ratio=_ratio(su0 - su_opt, su0 - sigma_opt),
        eps=eps,
    )

"""Mean-field and stochastic SDIR dynamics.

The mean-field system is the linear recursion

    x(t+1) = (I - D + A S(0) B) x(t) + W y(t)
    y(t+1) = (I - A) S(0) B x(t) + (I - W - D') y(t)
    r(t+1) = D x(t) + D' y(t) + r(t)

whose accumulated growth ``sigma = ||m* - m(0)||_1`` (with ``m = x + y + r``)
is the estimated infection amount.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from sdir.model import NetworkModel, delete_edges
from sdir.spectral import MatrixKind, build_system_matrix, spectral_radius

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000


class DivergenceWarning(RuntimeWarning):
    """Issued when a quantity is reported as +inf because the dynamics diverge."""


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return self.x + self.y + self.r

    @classmethod
    def initial(cls, model: NetworkModel) -> "MeanFieldState":
        return cls(np.array(model.x0), np.array(model.y0), np.array(model.r0))

    @classmethod
    def zeros(cls, n: int) -> "MeanFieldState":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


@dataclass
class Trajectory:
    states: list[MeanFieldState]
    converged: bool
    m_star: np.ndarray
    iterations: int
    diverged: bool = False
    rho_block: float | None = None

    @property
    def sigma(self) -> float:
        if self.diverged:
            return math.inf
        return float(np.abs(self.m_star - self.states[0].m).sum())

    def to_csv(self) -> str:
        """Rows ``t,node,x,y,r`` for every recorded state."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "node", "x", "y", "r"])
        for t, s in enumerate(self.states):
            for i in range(s.x.size):
                writer.writerow([t, i, repr(float(s.x[i])), repr(float(s.y[i])), repr(float(s.r[i]))])
        return buf.getvalue()


class _Stepper:
    # Precomputed coefficient arrays for repeated mean_field_step calls.
    def __init__(self, model: NetworkModel):
        SB = model.s0[:, None] * model.B
        self.xx = np.eye(model.n) - np.diag(model.delta) + model.alpha[:, None] * SB
        self.yx = (1.0 - model.alpha)[:, None] * SB
        self.w = model.omega
        self.f = 1.0 - model.omega - model.delta_prime
        self.d = model.delta
        self.dp = model.delta_prime

    def __call__(self, s: MeanFieldState) -> MeanFieldState:
        x = self.xx @ s.x + self.w * s.y
        y = self.yx @ s.x + self.f * s.y
        r = self.d * s.x + self.dp * s.y + s.r
        return MeanFieldState(x, y, r)


def mean_field_step(model: NetworkModel, s: MeanFieldState) -> MeanFieldState:
    """One step of the linearized mean-field recursion (no clamping)."""
    return _Stepper(model)(s)


def run_mean_field(
    model: NetworkModel,
    s0: MeanFieldState | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    record: bool = True,
    check_radius: bool = True,
) -> Trajectory:
    """Iterate the mean-field system until ``||x||_1 + ||y||_1 < tol``.

    When ``check_radius`` is set and the block operator has spectral radius
    at least one, no iteration is done and the trajectory is flagged as
    diverged.  Overflow during iteration also sets the flag.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = MeanFieldState.initial(model) if s0 is None else s0
    states = [s]
    rho = None
    if check_radius:
        rho = spectral_radius(build_system_matrix(model, MatrixKind.BLOCK).entries)
        if rho >= 1.0:
            return Trajectory(states, False, s.m, 0, diverged=True, rho_block=rho)
    step = _Stepper(model)
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while np.abs(s.x).sum() + np.abs(s.y).sum() >= tol and it < max_iter:
            s = step(s)
            it += 1
            if record:
                states.append(s)
            if not np.all(np.isfinite(s.m)):
                return Trajectory(states, False, s.m, it, diverged=True, rho_block=rho)
    if not record and it:
        states.append(s)
    converged = np.abs(s.x).sum() + np.abs(s.y).sum() < tol
    return Trajectory(states, bool(converged), s.m, it, rho_block=rho)


def accumulated_infection(model: NetworkModel) -> np.ndarray:
    """``sum_t x(t)`` over the whole trajectory, via one 2n x 2n linear solve.

    Raises :class:`numpy.linalg.LinAlgError` if ``I - BLOCK`` is singular;
    callers are expected to have checked that the block radius is below one.
    """
    n = model.n
    T = build_system_matrix(model, MatrixKind.BLOCK).entries
    rhs = np.concatenate([model.x0, model.y0])
    total = scipy.linalg.solve(np.eye(2 * n) - T, rhs)
    return total[:n]


def estimated_infection(
    model: NetworkModel,
    P=(),
    tol: float = DEFAULT_TOL,
    method: str = "solve",
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """Estimated infection amount ``||m* - m(0)||_1`` after deleting ``P``.

    ``method="solve"`` sums the geometric series of the block operator with a
    linear solve; ``method="iterate"`` runs the recursion to convergence.
    Returns ``inf`` (with a :class:`DivergenceWarning`) when the dynamics on
    the reduced graph do not converge.
    """
    reduced = delete_edges(model, P)
    if method == "iterate":
        traj = run_mean_field(reduced, tol=tol, max_iter=max_iter, record=False)
        if traj.diverged or not traj.converged:
            warnings.warn(
                f"mean-field iteration did not converge (rho_block={traj.rho_block})",
                DivergenceWarning,
                stacklevel=2,
            )
            return math.inf
        return traj.sigma
    if method != "solve":
        raise ValueError(f"unknown method {method!r}")
    rho = spectral_radius(build_system_matrix(reduced, MatrixKind.BLOCK).entries)
    if rho >= 1.0:
        warnings.warn(f"block operator radius {rho:.6g} >= 1; infection amount is unbounded",
                      DivergenceWarning, stacklevel=2)
        return math.inf
    try:
        sx = accumulated_infection(reduced)
    except np.linalg.LinAlgError:
        warnings.warn("I - BLOCK is singular", DivergenceWarning, stacklevel=2)
        return math.inf
    growth = reduced.s0 * (reduced.B @ sx)
    return float(growth.sum())


# ---------------------------------------------------------------------------
# stochastic process


class NodeState(enum.IntEnum):
    S = 0
    D = 1
    I = 2  # noqa: E741
    R = 3


def stochastic_step(model: NetworkModel, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Synchronous update of every node from the time-t snapshot ``states``.

    Exactly ``3n`` uniforms are drawn per call regardless of state, so the
    random stream advances identically for every configuration.
    """
    u_attack, u_branch, u_heal = rng.random((3, model.n))
    return _step(model.B, model.alpha, model.omega, model.delta, model.delta_prime,
                 states, u_attack, u_branch, u_heal)


def _step(B, alpha, omega, delta, delta_prime, states, u_attack, u_branch, u_heal):
    infected = states == NodeState.I
    new = states.copy()

    sus = states == NodeState.S
    if infected.any() and sus.any():
        # probability of escaping all infected in-neighbours
        escape = np.prod(1.0 - B[:, infected], axis=1)
        hit = sus & (u_attack < 1.0 - escape)
        new[hit & (u_branch < alpha)] = NodeState.I
        new[hit & (u_branch >= alpha)] = NodeState.D

    delayed = states == NodeState.D
    if delayed.any():
        new[delayed & (u_branch < omega)] = NodeState.I
        new[delayed & (u_branch >= omega) & (u_branch < omega + delta_prime)] = NodeState.R

    new[infected & (u_heal < delta)] = NodeState.R
    return new


def initial_states(model: NetworkModel, rng: np.random.Generator) -> np.ndarray:
    """Sample node states from the categorical (s0, y0, x0, r0) distribution."""
    probs = np.stack([model.s0, model.y0, model.x0, model.r0], axis=1)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(model.n)
    # deterministic assignment for 0/1 rows: u < 1 always lands in the unit bin
    states = (u[:, None] >= cum[:, :-1]).sum(axis=1)
    return states.astype(np.int8)


@dataclass
class MonteCarloResult:
    mean: float
    stderr: float
    per_node_hit_rates: np.ndarray
    infected_counts: np.ndarray
    absorbed_at: np.ndarray
    truncated: int = 0
    trials: int = 0
    seed: int = 0
    horizon: int = 0
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trial", "infected_count", "absorbed_at"])
        for t, (c, a) in enumerate(zip(self.infected_counts, self.absorbed_at)):
            writer.writerow([t, int(c), int(a)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "trials": self.trials,
            "horizon": self.horizon,
            "seed": self.seed,
            "truncated_trials": self.truncated,
            "per_node_hit_rates": [float(v) for v in self.per_node_hit_rates],
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, derived from (seed, trial)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(trial)]))


def simulate_trial(model: NetworkModel, seed: int, trial: int, horizon: int):
    """Run one trial; returns (left-S indicator per node, absorption step or -1)."""
    rng = trial_rng(seed, trial)
    states = initial_states(model, rng)
    start_s = states == NodeState.S
    n = model.n
    params = (model.B, model.alpha, model.omega, model.delta, model.delta_prime)
    t = 0
    chunk = 64
    absorbed = -1
    while t < horizon:
        active = (states == NodeState.I) | (states == NodeState.D)
        if not active.any():
            absorbed = t
            break
        draws = rng.random((min(chunk, horizon - t), 3, n))
        for u in draws:
            if not ((states == NodeState.I) | (states == NodeState.D)).any():
                break
            states = _step(*params, states, u[0], u[1], u[2])
            t += 1
    else:
        if not ((states == NodeState.I) | (states == NodeState.D)).any():
            absorbed = t
    return start_s & (states != NodeState.S), absorbed


def _run_trials(model, seed, horizon, start, stop):
    hits = []
    absorbed = []
    for trial in range(start, stop):
        h, a = simulate_trial(model, seed, trial, horizon)
        hits.append(h)
        absorbed.append(a)
    return np.array(hits, dtype=bool).reshape(-1, model.n), np.array(absorbed, dtype=np.int64)


def monte_carlo_infection(
    model: NetworkModel,
    trials: int,
    horizon: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> MonteCarloResult:
    """Monte Carlo estimate of the number of nodes that get infected.

    Each trial starts from states sampled per node, runs until no I or D node
    remains (or ``horizon`` steps) and counts the initially susceptible nodes
    that left S.  Trial ``k`` uses a generator seeded by ``(seed, k)``, so the
    result does not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if workers > 1 and trials > 1:
        bounds = np.linspace(0, trials, min(workers, trials) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_trials, [model] * (len(bounds) - 1), [seed] * (len(bounds) - 1),
                                  [horizon] * (len(bounds) - 1), bounds[:-1], bounds[1:]))
        hits = np.concatenate([p[0] for p in parts])
        absorbed = np.concatenate([p[1] for p in parts])
    else:
        hits, absorbed = _run_trials(model, seed, horizon, 0, trials)

    counts = hits.sum(axis=1)
    mean = float(counts.mean())
    stderr = float(counts.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    truncated = int((absorbed < 0).sum())
    if truncated:
        warnings.warn(f"{truncated} trial(s) hit the horizon with active nodes", RuntimeWarning, stacklevel=2)
    return MonteCarloResult(
        mean=mean,
        stderr=stderr,
        per_node_hit_rates=hits.mean(axis=0),
        infected_counts=counts,
        absorbed_at=absorbed,
        truncated=truncated,
        trials=trials,
        seed=seed,
        horizon=horizon,
    )

import math

import numpy as np
import pytest

from sdir.dynamics import (
    DivergenceWarning,
    MeanFieldState,
    NodeState,
    estimated_infection,
    initial_states,
    mean_field_step,
    monte_carlo_infection,
    run_mean_field,
    stochastic_step,
)
from sdir.model import NetworkModel, delete_edges
from sdir.spectral import MatrixKind, build_system_matrix, select_q, spectral_radius

from conftest import chain_model, random_model


def convergent_models(count, n=10, p=0.3, start=0):
    found = []
    seed = start
    while len(found) < count:
        m = random_model(seed, n=n, p=p)
        if spectral_radius(build_system_matrix(m, "M_of_q", select_q(m)).entries) < 1:
            found.append(m)
        seed += 1
    return found


class TestStep:
    def test_zero_state_fixed(self):
        m = random_model(0)
        r = np.linspace(0, 0.5, m.n)
        out = mean_field_step(m, MeanFieldState(np.zeros(m.n), np.zeros(m.n), r))
        assert not out.x.any() and not out.y.any()
        assert np.array_equal(out.r, r)

    def test_scalar(self):
        m = NetworkModel(B=[[0.0]], alpha=[1.0], omega=[0.2], delta=[0.5], delta_prime=[0.6], x0=[1.0])
        out = mean_field_step(m, MeanFieldState.initial(m))
        assert out.x[0] == pytest.approx(0.5)
        assert out.y[0] == 0.0
        assert out.r[0] == pytest.approx(0.5)

    def test_chain(self, chain):
        out = mean_field_step(chain, MeanFieldState.initial(chain))
        assert out.x[1] == pytest.approx(0.3)

    def test_matches_block_matrix(self):
        m = random_model(6, n=9)
        s = MeanFieldState(*np.random.default_rng(0).random((3, m.n)))
        T = build_system_matrix(m, "BLOCK").entries
        out = mean_field_step(m, s)
        assert np.allclose(np.concatenate([out.x, out.y]), T @ np.concatenate([s.x, s.y]))
        assert np.allclose(out.r, s.r + m.delta * s.x + m.delta_prime * s.y)


class TestRun:
    def test_no_edges_no_growth(self):
        m = delete_edges(random_model(2, n=6), random_model(2, n=6).edges)
        traj = run_mean_field(m)
        assert traj.converged
        assert traj.sigma == pytest.approx(0.0, abs=1e-12)

    def test_zero_start(self):
        m = random_model(1)
        traj = run_mean_field(m, MeanFieldState.zeros(m.n))
        assert traj.converged and traj.iterations == 0
        assert not traj.m_star.any()

    def test_random_convergent(self):
        for m in convergent_models(5):
            traj = run_mean_field(m, tol=1e-10)
            assert traj.converged
            last = traj.states[-1]
            assert np.abs(last.x).sum() + np.abs(last.y).sum() < 1e-10

    def test_divergent_flag(self):
        hot = NetworkModel(B=[[0, 0.9], [0.9, 0]], alpha=[1, 1], omega=[0, 0], delta=[0.05, 0.05],
                           delta_prime=[0.05, 0.05], x0=[0.01, 0.01])
        traj = run_mean_field(hot)
        assert traj.diverged and not traj.converged
        assert traj.sigma == math.inf
        # without the radius check, iteration overflows and is flagged too
        traj = run_mean_field(hot, check_radius=False, max_iter=100_000, record=False)
        assert traj.diverged

    def test_trajectory_invariants(self):
        for m in convergent_models(6, n=8, start=100):
            traj = run_mean_field(m, tol=1e-9)
            SB = m.s0[:, None] * m.B
            F = 1 - m.omega - m.delta_prime
            for t, (a, b) in enumerate(zip(traj.states, traj.states[1:])):
                assert np.all(b.x >= 0) and np.all(b.y >= 0) and np.all(b.r >= 0)
                assert np.allclose(b.m - a.m, SB @ a.x, atol=1e-14)
                assert np.all(b.y >= F ** (t + 1) * m.y0 - 1e-15)
            assert np.all(traj.m_star >= traj.states[0].m - 1e-12)

    def test_decay_certificate(self):
        for m in convergent_models(5, start=300):
            q = select_q(m)
            M = build_system_matrix(m, "M_of_q", q).entries
            traj = run_mean_field(m, tol=1e-9)
            z = m.x0 + q * m.y0
            for t, s in enumerate(traj.states[:200]):
                assert np.all(s.x + q * s.y <= np.linalg.matrix_power(M, t) @ z + 1e-12)

    def test_csv(self, chain):
        text = run_mean_field(chain).to_csv()
        lines = text.splitlines()
        assert lines[0] == "t,node,x,y,r"
        assert lines[1].startswith("0,0,1.0,")


class TestEstimatedInfection:
    def test_delete_all(self):
        m = random_model(5, n=10, p=0.4)
        assert estimated_infection(m, m.edges) == 0.0

    def test_chain_closed_form(self, chain):
        # node 0 spends sum 0.5^t = 2 steps infected, each passing 0.3 to node 1
        assert estimated_infection(chain) == pytest.approx(0.6, rel=1e-12)
        assert estimated_infection(chain, method="iterate") == pytest.approx(0.6, rel=1e-9)

    def test_chain_sir_linear_solve(self, chain):
        M = build_system_matrix(chain, "M_SIR").entries
        oracle = (chain.s0 * (chain.B @ np.linalg.solve(np.eye(2) - M, chain.x0))).sum()
        assert estimated_infection(chain) == pytest.approx(oracle, rel=1e-12)

    def test_solve_matches_iteration(self):
        for m in convergent_models(8, start=50):
            a = estimated_infection(m)
            b = estimated_infection(m, method="iterate", tol=1e-13)
            assert a == pytest.approx(b, rel=1e-8, abs=1e-10)

    def test_monotone_in_deletions(self):
        rng = np.random.default_rng(1)
        for m in convergent_models(10, start=20):
            edges = list(m.edges)
            rng.shuffle(edges)
            P = edges[: len(edges) // 2]
            base = estimated_infection(m, P)
            for e in edges[len(edges) // 2:]:
                assert estimated_infection(m, P + [e]) <= base + 1e-12

    def test_divergent_sentinel(self):
        hot = NetworkModel(B=[[0, 0.9], [0.9, 0]], alpha=[1, 1], omega=[0, 0], delta=[0.05, 0.05],
                           delta_prime=[0.05, 0.05], x0=[0.01, 0.01])
        with pytest.warns(DivergenceWarning):
            assert estimated_infection(hot) == math.inf
        with pytest.warns(DivergenceWarning):
            assert estimated_infection(hot, method="iterate") == math.inf
        assert estimated_infection(hot, [(0, 1)]) < math.inf

    def test_unknown_method(self, chain):
        with pytest.raises(ValueError):
            estimated_infection(chain, method="magic")


class TestStochastic:
    def test_all_recovered_absorbing(self):
        m = random_model(0)
        states = np.full(m.n, NodeState.R, dtype=np.int8)
        assert np.array_equal(stochastic_step(m, states, np.random.default_rng(0)), states)

    def test_no_source(self):
        m = random_model(0)
        states = np.array([NodeState.S, NodeState.R] * (m.n // 2), dtype=np.int8)
        assert np.array_equal(stochastic_step(m, states, np.random.default_rng(0)), states)

    def test_certain_healing(self):
        m = NetworkModel(B=[[0.0]], alpha=[1.0], omega=[0.0], delta=[1.0], delta_prime=[1.0], x0=[1.0])
        out = stochastic_step(m, np.array([NodeState.I], dtype=np.int8), np.random.default_rng(5))
        assert out[0] == NodeState.R

    def test_delayed_transition_frequencies(self):
        n = 20_000
        m = NetworkModel(B=[[0.0]], alpha=[1.0], omega=[0.3],
                         delta=[0.1], delta_prime=[0.5], x0=[0.0], y0=[1.0])
        rng = np.random.default_rng(7)
        outs = np.array([stochastic_step(m, np.array([NodeState.D], dtype=np.int8), rng)[0] for _ in range(n)])
        freq = [np.mean(outs == s) for s in (NodeState.I, NodeState.R, NodeState.D)]
        # binomial standard error is at most 0.0036 here
        assert freq == pytest.approx([0.3, 0.5, 0.2], abs=0.015)

    def test_infection_branch_frequencies(self):
        # susceptible node 1 attacked by infected node 0 with weight 0.5; alpha 0.4
        m = NetworkModel(B=[[0, 0], [0.5, 0]], alpha=[1.0, 0.4], omega=[0, 0], delta=[0, 0],
                         delta_prime=[0, 0], x0=[1, 0])
        rng = np.random.default_rng(11)
        start = np.array([NodeState.I, NodeState.S], dtype=np.int8)
        outs = np.array([stochastic_step(m, start, rng)[1] for _ in range(20_000)])
        assert np.mean(outs == NodeState.I) == pytest.approx(0.5 * 0.4, abs=0.015)
        assert np.mean(outs == NodeState.D) == pytest.approx(0.5 * 0.6, abs=0.015)

    def test_conservation_and_recovered_monotone(self):
        m = random_model(3, n=15, p=0.3)
        rng = np.random.default_rng(0)
        states = initial_states(m, rng)
        recovered = 0
        for _ in range(60):
            states = stochastic_step(m, states, rng)
            assert states.shape == (m.n,)
            assert set(np.unique(states)) <= {0, 1, 2, 3}
            now = int((states == NodeState.R).sum())
            assert now >= recovered
            recovered = now

    def test_initial_states_deterministic_for_01(self):
        m = random_model(4, n=10)
        states = initial_states(m, np.random.default_rng(0))
        assert np.array_equal(states == NodeState.I, m.x0 == 1)
        assert np.array_equal(states == NodeState.D, m.y0 == 1)


class TestMonteCarlo:
    def test_no_edges(self):
        m = NetworkModel(B=np.zeros((3, 3)), alpha=[1] * 3, omega=[0] * 3, delta=[0.5] * 3,
                         delta_prime=[0.5] * 3, x0=[1, 0, 0])
        res = monte_carlo_infection(m, trials=50, seed=1)
        assert res.mean == 0 and res.stderr == 0
        assert not res.infected_counts.any()

    def test_forced_absorption(self):
        m = random_model(2, n=10, p=0.3, delta=(1.0, 1.0), delta_prime=(1.0, 1.0), omega=(0.0, 0.0))
        res = monte_carlo_infection(m, trials=100, seed=0)
        assert res.truncated == 0
        assert res.absorbed_at.max() <= 2 * m.n

    def test_deterministic(self):
        m = random_model(7, n=12)
        a = monte_carlo_infection(m, trials=200, seed=99)
        b = monte_carlo_infection(m, trials=200, seed=99)
        assert a.mean == b.mean and np.array_equal(a.infected_counts, b.infected_counts)
        assert a.to_csv() == b.to_csv()

    def test_workers_do_not_change_result(self):
        m = random_model(7, n=12)
        a = monte_carlo_infection(m, trials=60, seed=3)
        b = monte_carlo_infection(m, trials=60, seed=3, workers=3)
        assert np.array_equal(a.infected_counts, b.infected_counts)
        assert np.array_equal(a.absorbed_at, b.absorbed_at)

    def test_chain_exact_probability(self, chain):
        # P(node 1 escapes) = sum_t 0.5^t 0.7^t = 0.35 / 0.65, so P(infected) = 6/13
        res = monte_carlo_infection(chain, trials=10_000, seed=2024)
        assert abs(res.mean - 6 / 13) < 4 * res.stderr
        assert res.mean <= estimated_infection(chain) + 3 * res.stderr

    def test_truncation_flagged(self):
        m = random_model(1, n=5, delta=(0.0, 0.0), delta_prime=(0.0, 0.0), omega=(0.0, 0.0))
        with pytest.warns(RuntimeWarning):
            res = monte_carlo_infection(m, trials=3, horizon=5, seed=0)
        assert res.truncated == 3
        assert (res.absorbed_at == -1).all()

    def test_csv_and_summary(self, chain):
        res = monte_carlo_infection(chain, trials=4, seed=0)
        assert res.to_csv().splitlines()[0] == "trial,infected_count,absorbed_at"
        assert len(res.to_csv().splitlines()) == 5
        assert set(res.summary()) >= {"mean", "stderr", "per_node_hit_rates"}

    def test_bad_arguments(self, chain):
        with pytest.raises(ValueError):
            monte_carlo_infection(chain, trials=0)

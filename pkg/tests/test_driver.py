import itertools
import random

import pytest

import kabar.services.driver as driver
from conftest import random_assignment, random_connected_graph, random_graph
from kabar.errors import ContractViolation
from kabar.models import RefineConfig, RefineMode, StepKind
from kabar.services.driver import (
    KabarRefiner, kabar_refine, portfolio_run, run_trial, seed_partition, trial_seeds,
)
from kabar.services.graph_core import Graph, Partition, block_limit, compute_cut


def optimal_bisection_cut(g: Graph) -> int:
    half = g.n // 2
    best = None
    for chosen in itertools.combinations(range(1, g.n), half - 1):
        side = {0, *chosen}
        assign = [0 if v in side else 1 for v in range(g.n)]
        cut = compute_cut(g, Partition(g, 2, assign))
        best = cut if best is None else min(best, cut)
    return best


class TestSeedPartition:
    def test_single_block(self):
        g = random_graph(12, 20, seed=0)
        p = seed_partition(g, 1, 0.04, random.Random(0))
        assert p.assign == [0] * 12
        assert p.cut == 0

    def test_singletons(self):
        g = random_graph(8, 12, seed=1, max_weight=3)
        p = seed_partition(g, 8, 0.0, random.Random(1))
        assert sorted(p.assign) == list(range(8))
        assert p.cut == g.total_weight()

    @pytest.mark.parametrize("seed", range(5))
    def test_respects_cap(self, seed):
        g = random_graph(50, 90, seed=seed)
        p = seed_partition(g, 4, 0.04, random.Random(seed))
        assert max(p.block_sizes) <= block_limit(50, 4, 0.04)
        assert sum(p.block_sizes) == 50

    def test_disconnected_graph_is_fully_assigned(self, two_cliques):
        p = seed_partition(two_cliques, 3, 0.0, random.Random(2))
        assert max(p.block_sizes) <= 4
        assert -1 not in p.assign

    def test_more_blocks_than_nodes(self):
        g = random_graph(3, 2, seed=0)
        with pytest.raises(ContractViolation):
            seed_partition(g, 4, 0.0, random.Random(0))


class TestKabarRefine:
    @pytest.mark.parametrize("mode", [RefineMode.BASIC, RefineMode.ADVANCED])
    @pytest.mark.parametrize("seed", range(6))
    def test_output_is_perfectly_balanced(self, mode, seed):
        rng = random.Random(seed)
        n = rng.randint(20, 80)
        k = rng.choice([2, 4, 8])
        g = random_connected_graph(n, n, seed=seed) if seed % 2 else random_graph(n, n, seed=seed)
        p0 = seed_partition(g, k, 0.1, rng)
        cfg = RefineConfig(mode=mode, seed=seed, tau=4, mu=3, lambda_=2)
        p = kabar_refine(g, p0, cfg)
        assert max(p.block_sizes) <= -(-n // k)
        assert p.cut == compute_cut(g, p)

    def test_disconnected_overloaded_input(self, two_cliques):
        p0 = Partition(two_cliques, 3, [0] * 5 + [1] * 4 + [2])
        p = kabar_refine(two_cliques, p0, RefineConfig(seed=1, mu=2))
        assert p.is_perfectly_balanced()

    @pytest.mark.parametrize("seed", range(6))
    def test_balanced_input_never_gets_worse(self, seed):
        g = random_graph(40, 80, seed=seed, max_weight=3)
        p0 = Partition(g, 4, random_assignment(40, 4, seed))
        p = kabar_refine(g, p0, RefineConfig(seed=seed, mu=3))
        assert p.cut <= p0.cut
        assert p.is_perfectly_balanced()
        assert p0.cut == compute_cut(g, p0)

    def test_deterministic_for_fixed_seed(self):
        g = random_connected_graph(60, 50, seed=3)
        p0 = seed_partition(g, 4, 0.1, random.Random(3))
        cfg = RefineConfig(seed=42, mu=4)
        assert kabar_refine(g, p0, cfg).assign == kabar_refine(g, p0, cfg).assign

    def test_optimal_cycle_split_is_kept(self):
        g = Graph.from_edges(12, [(v, (v + 1) % 12, 1) for v in range(12)])
        p0 = Partition(g, 2, [0] * 6 + [1] * 6)
        p = kabar_refine(g, p0, RefineConfig(seed=0))
        assert p.cut == 2 == optimal_bisection_cut(g)
        assert p.is_perfectly_balanced()

    def test_balancing_steps_bounded_by_overload(self):
        g = random_connected_graph(40, 40, seed=8)
        p0 = Partition(g, 4, random_assignment(40, 4, 8, sizes=[14, 10, 8, 8]))
        refiner = KabarRefiner(g, RefineConfig(seed=8, mu=3))
        p = refiner.refine(p0)
        balancing = [s for s in refiner.steps if s.kind == StepKind.BALANCE]
        assert len(balancing) <= p0.overload()
        assert p.is_perfectly_balanced()
        assert refiner.steps[-1].overload_after == 0

    def test_steps_account_for_cut_change(self):
        g = random_connected_graph(50, 60, seed=5)
        p0 = Partition(g, 4, random_assignment(50, 4, 5, sizes=[15, 13, 12, 10]))
        refiner = KabarRefiner(g, RefineConfig(seed=5, mu=3))
        p = refiner.refine(p0)
        assert p0.cut + sum(s.cut_delta for s in refiner.steps) == p.cut
        for step in refiner.steps:
            if step.kind == StepKind.NEGATIVE_CYCLE:
                assert step.cut_delta < 0
            if step.kind == StepKind.ZERO_CYCLE:
                assert step.cut_delta == 0

    def test_without_zero_cycles(self):
        g = random_graph(30, 60, seed=6)
        p0 = Partition(g, 3, random_assignment(30, 3, 6))
        refiner = KabarRefiner(g, RefineConfig(seed=6, mode=RefineMode.BASIC, zero_cycle_diversification=False))
        p = refiner.refine(p0)
        assert not [s for s in refiner.steps if s.kind == StepKind.ZERO_CYCLE]
        assert p.cut <= p0.cut

    @pytest.mark.parametrize("seed", range(10))
    def test_small_bisections_never_beat_the_optimum(self, seed):
        g = random_connected_graph(10, 6, seed=seed)
        p0 = Partition(g, 2, random_assignment(10, 2, seed))
        p = kabar_refine(g, p0, RefineConfig(seed=seed))
        assert optimal_bisection_cut(g) <= p.cut <= p0.cut


class TestPortfolio:
    def test_trial_seeds_are_stable(self):
        assert trial_seeds(5, 3) == trial_seeds(5, 3)
        assert len(set(trial_seeds(5, 8))) == 8

    def test_single_trial_matches_pipeline(self):
        g = random_connected_graph(40, 40, seed=2)
        cfg = RefineConfig(seed=9, mu=3, randomize_trial_parameters=False)
        result = portfolio_run(g, 4, 1, 0.04, cfg)
        assign, metrics = run_trial(g, 4, 0, trial_seeds(9, 1)[0], 0.04, cfg)
        assert result.best.assign == assign
        assert result.best_trial == 0
        assert result.trials[0].cut == metrics.cut == result.best.cut

    def test_best_is_minimum_over_trials(self):
        g = random_connected_graph(40, 50, seed=3)
        result = portfolio_run(g, 4, 6, 0.05, RefineConfig(seed=1, mu=3))
        cuts = [m.cut for m in result.trials]
        assert result.best.cut == min(cuts)
        assert result.best_trial == cuts.index(min(cuts))
        assert all(m.perfectly_balanced for m in result.trials)
        assert all(0.005 <= m.epsilon <= 0.05 for m in result.trials)

    def test_parallelism_does_not_change_result(self):
        g = random_connected_graph(30, 30, seed=4)
        cfg = RefineConfig(seed=2, mu=2)
        serial = portfolio_run(g, 3, 3, 0.04, cfg, parallelism=1)
        parallel = portfolio_run(g, 3, 3, 0.04, cfg, parallelism=2)
        assert serial.best.assign == parallel.best.assign
        assert [m.cut for m in serial.trials] == [m.cut for m in parallel.trials]

    def test_refines_given_partition(self):
        g = random_graph(30, 60, seed=7)
        initial = Partition(g, 3, random_assignment(30, 3, 7))
        result = portfolio_run(g, 3, 2, 0.04, RefineConfig(seed=3, mu=2), initial=initial)
        assert all(m.initial_cut == initial.cut for m in result.trials)
        assert result.best.cut <= initial.cut

    def test_needs_a_trial(self):
        g = random_graph(10, 10, seed=0)
        with pytest.raises(ContractViolation):
            portfolio_run(g, 2, 0, 0.04, RefineConfig())


class TestApplicationPaths:
    def test_basic_cycles_go_through_apply_cycle(self, monkeypatch):
        calls = []
        original = driver.apply_cycle

        def recording(g, p, bm, cycle):
            calls.append(cycle.weight)
            return original(g, p, bm, cycle)

        monkeypatch.setattr(driver, "apply_cycle", recording)
        monkeypatch.setattr(driver, "apply_advanced_cycle", None)
        g = random_graph(30, 60, seed=6)
        p0 = Partition(g, 3, random_assignment(30, 3, 6))
        refiner = KabarRefiner(g, RefineConfig(seed=6, mode=RefineMode.BASIC))
        refiner.refine(p0)
        applied = [s.cut_delta for s in refiner.steps if s.kind != StepKind.BALANCE]
        assert calls == applied
        assert calls

    def test_advanced_cycles_go_through_apply_advanced_cycle(self, monkeypatch):
        calls = []
        original = driver.apply_advanced_cycle

        def recording(g, p, moves, delta):
            calls.append(delta)
            return original(g, p, moves, delta)

        monkeypatch.setattr(driver, "apply_advanced_cycle", recording)
        monkeypatch.setattr(driver, "apply_cycle", None)
        g = random_graph(30, 60, seed=6)
        p0 = Partition(g, 3, random_assignment(30, 3, 6))
        refiner = KabarRefiner(g, RefineConfig(seed=6, mu=4))
        refiner.refine(p0)
        assert calls == [s.cut_delta for s in refiner.steps if s.kind != StepKind.BALANCE]
        assert calls

    def test_balancing_uses_cached_connectivity(self, monkeypatch, two_cliques):
        seen = []
        original = driver.balance_step

        def recording(g, p, cfg, rng, connected=None):
            seen.append(connected)
            return original(g, p, cfg, rng, connected=connected)

        monkeypatch.setattr(driver, "balance_step", recording)
        p0 = Partition(two_cliques, 3, [0] * 5 + [1] * 4 + [2])
        refiner = KabarRefiner(two_cliques, RefineConfig(seed=1, mu=2))
        p = refiner.refine(p0)
        assert p.is_perfectly_balanced()
        assert refiner.connected is False
        assert seen and set(seen) == {False}
        balancing = [s for s in refiner.steps if s.kind == StepKind.BALANCE]
        assert len(balancing) == len(seen)


class TestImbalanceTarget:
    @pytest.mark.parametrize("seed", range(5))
    def test_output_respects_target_limit(self, seed):
        g = random_connected_graph(60, 60, seed=seed)
        p0 = Partition(g, 4, random_assignment(60, 4, seed, sizes=[24, 12, 12, 12]))
        p = kabar_refine(g, p0, RefineConfig(seed=seed, mu=3, imbalance=0.1))
        assert p.max_block_size == block_limit(60, 4, 0.1) == 17
        assert max(p.block_sizes) <= 17
        assert p.is_balanced()

    def test_input_within_target_needs_no_balancing(self):
        g = random_connected_graph(40, 40, seed=9)
        p0 = Partition(g, 4, random_assignment(40, 4, 9, sizes=[11, 11, 9, 9]))
        refiner = KabarRefiner(g, RefineConfig(seed=9, mu=3, imbalance=0.1))
        p = refiner.refine(p0)
        assert not [s for s in refiner.steps if s.kind == StepKind.BALANCE]
        assert max(p.block_sizes) <= 11
        assert p.cut <= p0.cut

    def test_default_target_is_perfect_balance(self):
        g = random_connected_graph(40, 40, seed=9)
        p0 = Partition(g, 4, random_assignment(40, 4, 9, sizes=[11, 11, 9, 9]))
        p = kabar_refine(g, p0, RefineConfig(seed=9, mu=3))
        assert p.is_perfectly_balanced()

    def test_portfolio_reports_target(self):
        g = random_connected_graph(40, 50, seed=3)
        result = portfolio_run(g, 4, 3, 0.1, RefineConfig(seed=1, mu=3, imbalance=0.05))
        assert result.best.max_block_size == block_limit(40, 4, 0.05) == 11
        assert all(m.balanced and m.block_limit == 11 for m in result.trials)
        assert result.best.cut == min(m.cut for m in result.trials)

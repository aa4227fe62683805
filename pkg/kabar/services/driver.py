import logging
import random
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from kabar.errors import ContractViolation, InvariantViolation
from kabar.models import RefineConfig, RefineMode, StepKind, StepRecord, TrialMetrics
from kabar.services.advanced_refine import (
    CycleSolution, apply_advanced_cycle, build_advanced_model, solve_advanced, solve_advanced_zero,
)
from kabar.services.balancer import balance_step
from kabar.services.basic_refine import BasicModel, apply_cycle, build_basic_model
from kabar.services.directed_search import pack_searches
from kabar.services.graph_core import (
    EligibilityState, Graph, Partition, block_limit, quotient_graph,
)

logger = logging.getLogger(__name__)


class KabarRefiner:
    """Negative-cycle refinement rounds with zero-cycle diversification and balancing.

    Each iteration rebuilds the model and applies negative cycles until none is
    left, trying a zero-weight cycle whenever the model has no negative cycle.
    After `lambda_` iterations without a cut improvement one balancing step is
    made if the partition is overloaded; otherwise refinement stops. Block
    limits follow `cfg.imbalance`, so the default target is perfect balance.
    """

    def __init__(self, graph: Graph, cfg: RefineConfig):
        self.graph = graph
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.steps: List[StepRecord] = []
        self.connected = True

    def refine(self, p0: Partition) -> Partition:
        cfg = self.cfg
        p = p0.copy().retarget(cfg.imbalance)
        self.steps = []
        self.connected = self.graph.is_connected()
        logger.debug(
            f"Refining k={p.k} cut={p.cut} overload={p.overload()} limit={p.max_block_size} "
            f"connected={self.connected} mode={cfg.mode.value}"
        )

        unsuccessful = 0
        while True:
            if self._iterate(p):
                unsuccessful = 0
                continue
            unsuccessful += 1
            if unsuccessful < cfg.lambda_:
                continue
            if p.overload() == 0:
                break
            self._balance(p)
            unsuccessful = 0

        if not p.is_balanced():
            raise InvariantViolation(f"refinement ended with block sizes {p.block_sizes}")
        p.debug_verify()
        return p

    def _iterate(self, p: Partition) -> bool:
        """One build/solve pass; True when the cut improved."""
        improved = False
        zero_budget = self.cfg.max_zero_cycles_per_solve if self.cfg.zero_cycle_diversification else 0
        while True:
            model = self._build_model(p)
            solution = solve_advanced(self.graph, p, model, self.rng)
            if solution is not None:
                self._apply(p, model, solution, StepKind.NEGATIVE_CYCLE)
                improved = True
                continue
            if zero_budget > 0:
                solution = solve_advanced_zero(self.graph, p, model, self.rng)
                if solution is not None:
                    self._apply(p, model, solution, StepKind.ZERO_CYCLE)
                    zero_budget -= 1
                    continue
            return improved

    def _build_model(self, p: Partition):
        g, cfg = self.graph, self.cfg
        if cfg.mode == RefineMode.BASIC:
            return build_basic_model(g, p, self.rng)
        tau = cfg.tau_for(p.k)
        elig = EligibilityState(g)
        packed = pack_searches(
            g, p, quotient_graph(g, p), tau, cfg.mu, elig, self.rng, mark_queued=cfg.mark_queued_nodes
        )
        return build_advanced_model(g, p, packed, tau, conflict_free=cfg.conflict_free_mode)

    def _apply(self, p: Partition, model, solution: CycleSolution, kind: StepKind) -> None:
        if isinstance(model, BasicModel):
            apply_cycle(self.graph, p, model, solution.cycle)
        else:
            apply_advanced_cycle(self.graph, p, solution.moves, solution.delta)
        self.steps.append(StepRecord(
            kind=kind, cut_delta=solution.delta, moved_nodes=len(solution.moves), overload_after=p.overload()
        ))
        logger.debug(f"{kind.value}: {len(solution.moves)} moves, cut {p.cut}")

    def _balance(self, p: Partition) -> None:
        before_cut = p.cut
        before_assign = list(p.assign)
        balance_step(self.graph, p, self.cfg, self.rng, connected=self.connected)
        moved = sum(1 for a, b in zip(before_assign, p.assign) if a != b)
        self.steps.append(StepRecord(
            kind=StepKind.BALANCE, cut_delta=p.cut - before_cut, moved_nodes=moved, overload_after=p.overload(),
        ))
        logger.debug(f"Balancing step: cut {p.cut}, overload {p.overload()}")


def kabar_refine(g: Graph, p0: Partition, cfg: RefineConfig) -> Partition:
    return KabarRefiner(g, cfg).refine(p0)


def seed_partition(g: Graph, k: int, epsilon: float, rng) -> Partition:
    """BFS region growing from k random seeds, capped at L_max."""
    n = g.n
    if k > n:
        raise ContractViolation(f"cannot split {n} nodes into {k} non-empty blocks")
    cap = block_limit(n, k, epsilon)
    assign = [-1] * n
    sizes = [0] * k
    frontiers = []
    for block, seed in enumerate(rng.sample(range(n), k)):
        assign[seed] = block
        sizes[block] = 1
        frontiers.append(deque(u for u, _ in g.neighbors(seed)))

    growing = True
    while growing:
        growing = False
        for block in range(k):
            frontier = frontiers[block]
            while frontier and sizes[block] < cap:
                v = frontier.popleft()
                if assign[v] != -1:
                    continue
                assign[v] = block
                sizes[block] += 1
                frontier.extend(u for u, _ in g.neighbors(v) if assign[u] == -1)
                growing = True
                break

    for v in range(n):
        if assign[v] != -1:
            continue
        adjacent = {assign[u] for u, _ in g.neighbors(v) if assign[u] != -1 and sizes[assign[u]] < cap}
        candidates = adjacent or [b for b in range(k) if sizes[b] < cap]
        block = min(candidates, key=lambda b: (sizes[b], b))
        assign[v] = block
        sizes[block] += 1

    return Partition(g, k, assign)


@dataclass
class PortfolioResult:
    best: Partition
    best_trial: int
    trials: List[TrialMetrics] = field(default_factory=list)
    wall_time_s: float = 0.0


def trial_seeds(seed: int, trials: int) -> List[int]:
    children = np.random.SeedSequence(seed).spawn(trials)
    return [int(child.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for child in children]


def run_trial(
    g: Graph, k: int, index: int, seed: int, epsilon_max: float, cfg: RefineConfig,
    initial: Optional[List[int]] = None,
) -> tuple:
    """Seed (or copy) a partition and refine it; returns (assignment, metrics)."""
    started = time.perf_counter()
    rng = random.Random(seed)
    if cfg.randomize_trial_parameters:
        epsilon = rng.uniform(min(0.005, epsilon_max), epsilon_max)
        trial_cfg = cfg.model_copy(update={
            "tau": rng.randint(1, 30), "mu": rng.randint(1, 20), "lambda_": rng.randint(1, 10), "seed": seed,
        })
    else:
        epsilon = epsilon_max
        trial_cfg = cfg.model_copy(update={"seed": seed})

    if initial is None:
        p0 = seed_partition(g, k, epsilon, rng)
    else:
        p0 = Partition(g, k, initial)

    refiner = KabarRefiner(g, trial_cfg)
    result = refiner.refine(p0)
    metrics = TrialMetrics(
        trial=index,
        seed=seed,
        epsilon=epsilon,
        tau=trial_cfg.tau_for(k),
        mu=trial_cfg.mu,
        lambda_=trial_cfg.lambda_,
        initial_cut=p0.cut,
        initial_max_block_size=max(p0.block_sizes),
        cut=result.cut,
        max_block_size=max(result.block_sizes),
        block_limit=result.max_block_size,
        balanced=result.is_balanced(),
        perfectly_balanced=result.is_perfectly_balanced(),
        steps=refiner.steps,
        wall_time_s=time.perf_counter() - started,
    )
    logger.info(f"Trial {index}: cut {p0.cut} -> {result.cut}, max block {metrics.max_block_size}")
    return result.assign, metrics


def portfolio_run(
    g: Graph,
    k: int,
    trials: int,
    epsilon_max: float,
    cfg: RefineConfig,
    parallelism: int = 1,
    initial: Optional[Union[Partition, List[int]]] = None,
) -> PortfolioResult:
    """Independent seeded pipelines; the best cut within the target limit wins.

    Ties go to the lowest trial index, so the result does not depend on
    `parallelism`.
    """
    if trials < 1:
        raise ContractViolation("at least one trial is required")
    started = time.perf_counter()
    seeds = trial_seeds(cfg.seed, trials)
    assign0 = initial.assign if isinstance(initial, Partition) else initial
    args = [(g, k, i, seeds[i], epsilon_max, cfg, assign0) for i in range(trials)]

    if parallelism > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run_trial, *zip(*args)))
    else:
        outcomes = [run_trial(*a) for a in args]

    metrics = [m for _, m in outcomes]
    best_index = min(
        (i for i, m in enumerate(metrics) if m.balanced),
        key=lambda i: (metrics[i].cut, i),
    )
    best = Partition(g, k, outcomes[best_index][0], imbalance=cfg.imbalance)
    elapsed = time.perf_counter() - started
    logger.info(f"Portfolio of {trials} trials: best cut {best.cut} from trial {best_index}")
    return PortfolioResult(best=best, best_trial=best_index, trials=metrics, wall_time_s=elapsed)

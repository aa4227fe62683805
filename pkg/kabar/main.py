import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from kabar.config import settings
from kabar.errors import ContractViolation, InvariantViolation, KabarError, NegativeCycleError, StaleModelError
from kabar.models import RefineConfig, RefineMode, RunSummary
from kabar.services.driver import PortfolioResult, portfolio_run
from kabar.services.graph_io import emit_partition, read_graph, read_partition, write_partition

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kabar",
        description="Refine a k-way graph partition to perfect balance with negative-cycle moves.",
    )
    parser.add_argument("--graph", required=True, type=Path, help="METIS graph file")
    parser.add_argument("--k", required=True, type=int, help="number of blocks")
    parser.add_argument("--input-partition", type=Path, help="partition to refine (default: seed partition)")
    parser.add_argument("--epsilon", type=float, default=settings.epsilon, help="imbalance of seed partitions")
    parser.add_argument(
        "--imbalance", type=float, default=settings.imbalance,
        help="target imbalance of the result (default: perfect balance)",
    )
    parser.add_argument("--mode", choices=[m.value for m in RefineMode], default=settings.mode)
    parser.add_argument("--tau", type=int, help="maximum moves per directed search")
    parser.add_argument("--mu", type=int, help="packing rounds")
    parser.add_argument("--lambda", dest="lambda_", type=int, help="unsuccessful iterations before balancing")
    parser.add_argument("--trials", type=int, default=settings.trials)
    parser.add_argument("--threads", type=int, default=settings.threads)
    parser.add_argument("--seed", type=int, help="base seed (falls back to KABAR_SEED)")
    parser.add_argument("--out", type=Path, help="output partition file (default: stdout)")
    parser.add_argument("--metrics", type=Path, help="JSON lines metrics file")
    parser.add_argument("--no-zero-cycles", action="store_true", help="disable zero-weight cycle diversification")
    parser.add_argument("--conflict-free", action="store_true", help="build models without backward edges")
    parser.add_argument("--log-level", default=settings.log_level)
    return parser


def refine_config(args: argparse.Namespace) -> RefineConfig:
    seed = args.seed if args.seed is not None else settings.seed
    explicit = {name: getattr(args, name) for name in ("tau", "mu", "lambda_") if getattr(args, name) is not None}
    return RefineConfig(
        mode=args.mode,
        seed=seed if seed is not None else 0,
        zero_cycle_diversification=not args.no_zero_cycles,
        conflict_free_mode=args.conflict_free,
        imbalance=args.imbalance,
        # explicit parameters pin every trial to them
        randomize_trial_parameters=args.trials > 1 and not explicit,
        **explicit,
    )


def write_metrics(path: Path, result: PortfolioResult, summary: RunSummary) -> None:
    lines = [m.model_dump_json(by_alias=True) for m in result.trials]
    lines.append(summary.model_dump_json(by_alias=True))
    path.write_text("\n".join(lines) + "\n")


def run(args: argparse.Namespace) -> int:
    if args.epsilon < 0:
        raise ContractViolation(f"epsilon must be non-negative, got {args.epsilon}")
    if args.threads < 1:
        raise ContractViolation(f"threads must be positive, got {args.threads}")
    cfg = refine_config(args)
    graph = read_graph(args.graph)
    if not 1 <= args.k <= graph.n:
        raise ContractViolation(f"k={args.k} must lie in [1, {graph.n}]")

    initial = None
    if args.input_partition is not None:
        initial = read_partition(args.input_partition, graph, args.k)
        logger.info(f"Input partition: cut {initial.cut}, max block {max(initial.block_sizes)}")

    logger.info(
        f"Refining {args.graph} (n={graph.n}, m={graph.m}) into {args.k} blocks, "
        f"{args.trials} trial(s) on {args.threads} worker(s), mode {cfg.mode.value}"
    )
    result = portfolio_run(
        graph, args.k, args.trials, args.epsilon, cfg, parallelism=args.threads, initial=initial
    )
    best = result.best
    summary = RunSummary(
        best_trial=result.best_trial,
        cut=best.cut,
        max_block_size=max(best.block_sizes),
        block_limit=best.max_block_size,
        k=args.k,
        n=graph.n,
        trials=args.trials,
        wall_time_s=result.wall_time_s,
    )

    if args.out is not None:
        write_partition(best, args.out)
    else:
        sys.stdout.write(emit_partition(best))
    if args.metrics is not None:
        write_metrics(args.metrics, result, summary)
    logger.info(f"Final cut {best.cut}, max block {summary.max_block_size} (limit {summary.block_limit})")
    return EXIT_OK


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse has printed usage; --help exits with 0
        return EXIT_INPUT if exc.code else EXIT_OK

    try:
        logging.basicConfig(
            level=args.log_level.upper(),
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"kabar: error: {exc}\n")
        return EXIT_INPUT

    try:
        return run(args)
    except (InvariantViolation, StaleModelError, NegativeCycleError) as exc:
        logger.error(f"Internal invariant failed: {exc}")
        return EXIT_INTERNAL
    except (KabarError, ValidationError) as exc:
        logger.error(f"Invalid input: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(cli_main())

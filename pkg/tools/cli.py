import sys
import os
import argparse

# Add the project root to sys.path so we can import src
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.config import DEFAULT_CONFIG_PATH, ExperimentConfig
from src.core.exceptions import ConfigError, EventDeliveryError, InvalidGraph, ScenarioError
from src.core.experiment import cmd_ablate, cmd_report, cmd_run, cmd_sweep, cmd_validate
from src.utils.logger import logger

EXIT_OK = 0
EXIT_EPISODE_FAILURES = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="HECG CLI - plan execution experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=DEFAULT_CONFIG_PATH, help="Experiment YAML")
    common.add_argument("--scenario", action="append", default=None,
                        help="Scenario name or JSON path (repeatable; default: the world's suite)")
    common.add_argument("--seed", type=int, default=None, help="Run a single repetition with this seed")
    common.add_argument("--jobs", type=int, default=None, help="Parallel episodes")
    common.add_argument("--fallback-stub", action="store_true", help="Fall back to stub backends on LLM failure")
    common.add_argument("--planner", choices=["stub", "llm"], default=None, help="Planner backend")
    common.add_argument("--scorer", choices=["stub", "llm"], default=None, help="Semantic scorer backend")
    common.add_argument("--memory-in", type=str, default=None, help="Trajectory memory to load")
    common.add_argument("--memory-out", type=str, default=None, help="Where to save trajectory memory")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="Run scenarios and write metrics")
    run.add_argument("--variant", type=str, default=None, help="Ablation variant for this run")
    ablate = sub.add_parser("ablate", parents=[common], help="Compare ablation variants")
    ablate.add_argument("--variants", nargs="+", default=None, help="Variants to compare (at least two)")
    sweep = sub.add_parser("sweep", parents=[common], help="Threshold sensitivity sweep")
    sweep.add_argument("--scales", nargs="+", type=float, default=None, help="Epsilon scales (at least two)")
    report = sub.add_parser("report", parents=[common], help="Recompute metrics from a finished run")
    report.add_argument("run_dir", type=str, help="Run directory holding episodes.jsonl")
    sub.add_parser("validate", parents=[common], help="Check scenarios and their graphs")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_yaml(args.config)
    seeds = [args.seed] if args.seed is not None else None
    config = config.with_overrides(
        scenarios=args.scenario,
        seeds=seeds,
        repetitions=1 if seeds else None,
        jobs=args.jobs,
        fallback_stub=True if args.fallback_stub else None,
        planner=args.planner,
        scorer=args.scorer,
        memory_load=args.memory_in,
        memory_save=args.memory_out,
        output_dir=args.out,
        log_level="DEBUG" if args.verbose else None,
        ablation=getattr(args, "variant", None),
        variants=getattr(args, "variants", None),
        epsilon_scales=getattr(args, "scales", None)
    )
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        config = load_config(args)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "ablate":
            return cmd_ablate(config)
        if args.command == "sweep":
            return cmd_sweep(config)
        if args.command == "report":
            return cmd_report(args.run_dir, args.out, config)
        return cmd_validate(config)
    except (ConfigError, ScenarioError, InvalidGraph) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EventDeliveryError as e:
        logger.error(f"{args.command} aborted: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EPISODE_FAILURES
    except KeyboardInterrupt:
        print("\nInterrupted.")
        return EXIT_EPISODE_FAILURES


if __name__ == "__main__":
    sys.exit(main())

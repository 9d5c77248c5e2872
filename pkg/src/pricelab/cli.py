"""Command-line entry points: run an experiment, or re-report an output dir."""

import argparse

from .harness import load_config, report, run_trials


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pricelab",
        description="Contextual dynamic pricing simulator and regret benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="execute trials from a TOML config file")
    run_parser.add_argument("--config", required=True, help="path to the config file")
    report_parser = sub.add_parser(
        "report", help="recompute aggregates and diagnostics from trial CSVs"
    )
    report_parser.add_argument(
        "--input", required=True, help="output directory of a previous run"
    )
    args = parser.parse_args(argv)

    if args.command == "run":
        config = load_config(args.config)
        stats = run_trials(config)
        print(
            f"{config.policy} on {config.environment}: {config.trials} trial(s), "
            f"horizon {int(stats.t[-1])}"
        )
        print(f"final regret (mean) = {stats.final_regret:.6g}")
        print(f"averaged regret     = {stats.ave_reg:.6g}")
        if stats.ave_reg_commit is not None:
            print(f"commitment average  = {stats.ave_reg_commit:.6g}")
        print(f"outputs under {config.out_dir}/")
    else:
        stats = report(args.input)
        print(f"recomputed aggregates for {stats.trials} trial(s)")
        print(f"final regret (mean) = {stats.final_regret:.6g}")
        print(f"outputs refreshed under {args.input}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

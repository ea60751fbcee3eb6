#!/usr/bin/env python3
"""Compare single-task fine-tuning against round-robin multitask training.

Trains one encoder per task and one shared encoder over all three task
streams on synthetic corpora, then prints dev metrics side by side.
"""
import argparse

from simcse_forge.evaluation import emit_report
from simcse_forge.experiments import (add_experiment_args,
                                      experiment_config_from_args,
                                      run_single_vs_multitask)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    add_experiment_args(parser)
    parser.add_argument("--out", help="also write the report as TSV")
    args = parser.parse_args()
    reports = run_single_vs_multitask(experiment_config_from_args(args))
    print(emit_report(reports, format="pretty"), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit_report(reports))


if __name__ == "__main__":
    main()

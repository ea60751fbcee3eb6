#!/usr/bin/env python3
"""Compare standard, curriculum, and adaptive dropout on multitask training.

Runs the same multitask setup three times, once per dropout schedule, and
prints dev metrics for each variant.
"""
import argparse

from simcse_forge.evaluation import emit_report
from simcse_forge.experiments import (add_experiment_args,
                                      experiment_config_from_args,
                                      run_dropout_comparison)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    add_experiment_args(parser)
    parser.add_argument("--out", help="also write the report as TSV")
    args = parser.parse_args()
    reports = run_dropout_comparison(experiment_config_from_args(args))
    print(emit_report(reports, format="pretty"), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit_report(reports))


if __name__ == "__main__":
    main()

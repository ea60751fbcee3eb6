#!/usr/bin/env python3
"""Ablate contrastive pre-training ahead of task fine-tuning.

Fine-tunes each classification task from scratch and from an encoder first
trained with the unsupervised contrastive objective, then prints both dev
metrics so the transfer gap is visible.
"""
import argparse

from simcse_forge.evaluation import emit_report
from simcse_forge.experiments import (add_experiment_args,
                                      experiment_config_from_args,
                                      run_transfer_ablation)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    add_experiment_args(parser)
    parser.add_argument("--out", help="also write the report as TSV")
    args = parser.parse_args()
    reports = run_transfer_ablation(experiment_config_from_args(args))
    print(emit_report(reports, format="pretty"), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit_report(reports))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Run the staged pipeline and report the STS dev score after every stage.

Stage 1 fine-tunes on scored sentence pairs, stage 2 applies unsupervised
contrastive training over the pooled sentences, and stage 3 applies the
supervised triplet objective.
"""
import argparse

from simcse_forge.evaluation import emit_report
from simcse_forge.experiments import (add_experiment_args,
                                      experiment_config_from_args,
                                      run_two_tier_stages)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    add_experiment_args(parser)
    parser.add_argument("--out", help="also write the report as TSV")
    args = parser.parse_args()
    reports = run_two_tier_stages(experiment_config_from_args(args))
    print(emit_report(reports, format="pretty"), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit_report(reports))


if __name__ == "__main__":
    main()

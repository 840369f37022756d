"""Command-line entry points: ``embed`` produces wire-format embeddings
from raw text; ``train-toy`` executes an update recipe on the toy model."""
from __future__ import annotations

import argparse
import json
import sys

from compass.core import CompassError

from .embed import EmbedJobSpec, embed_texts
from .trainer import ToyTrainerSpec, train_ecda_toy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlbridge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_embed = sub.add_parser("embed", help="embed record texts into the binary format")
    p_embed.add_argument("--records", required=True)
    p_embed.add_argument("--model", default="hash-v1:256", help="opaque model identifier")
    p_embed.add_argument("--batch-size", type=int, default=64)
    p_embed.add_argument("--out", required=True)

    p_train = sub.add_parser("train-toy", help="run an update recipe on the toy classifier")
    p_train.add_argument("--recipe", required=True)
    p_train.add_argument("--old-records", required=True)
    p_train.add_argument("--old-embeddings", required=True)
    p_train.add_argument("--new-records", required=True)
    p_train.add_argument("--new-embeddings", required=True)
    p_train.add_argument("--report", help="write the metrics report here (JSON)")
    p_train.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "embed":
            out = embed_texts(EmbedJobSpec(
                records_path=args.records, model_id=args.model,
                batch_size=args.batch_size, output_path=args.out,
            ))
            print(f"wrote {out}")
            return 0
        report = train_ecda_toy(ToyTrainerSpec(
            recipe_path=args.recipe,
            old_records=args.old_records, old_embeddings=args.old_embeddings,
            new_records=args.new_records, new_embeddings=args.new_embeddings,
            seed=args.seed,
        ))
        summary = {
            mode: {k: report[mode][k] for k in ("old_acc_before", "old_acc_after", "new_acc_after")}
            for mode in ("ecda", "naive")
        }
        print(json.dumps(summary, indent=2, sort_keys=True))
        if args.report:
            from compass import dataio

            dataio.write_json(report, args.report)
        return 0
    except (CompassError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

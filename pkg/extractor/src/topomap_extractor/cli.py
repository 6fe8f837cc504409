"""CLI: extract feature streams from posed images; export the classifier head."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import ExtractionJob, export_head, extract_stream


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topomap-extract",
        description="Convert posed image directories into feature streams.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="images + poses -> feature stream artifact")
    p.add_argument("--images", required=True, help="image directory")
    p.add_argument("--poses", required=True, help="pose table: frame_id x y per row")
    p.add_argument("--labels", help="optional label table: frame_id label per row")
    p.add_argument("--weights", default="pretrained",
                   help="pretrained | random:<seed> | state-dict path")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--sequence-id", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("export-head", help="write the classification layer artifact")
    p.add_argument("--weights", default="pretrained")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_head)
    return parser


def cmd_extract(args) -> int:
    job = ExtractionJob(
        image_dir=args.images,
        pose_file=args.poses,
        out_path=args.out,
        label_file=args.labels,
        weights=args.weights,
        batch_size=args.batch_size,
        sequence_id=args.sequence_id,
    )
    result = extract_stream(job)
    print(result.out_path)
    if result.skipped:
        print(f"skipped {len(result.skipped)} undecodable frame(s)", file=sys.stderr)
    return 0


def cmd_export_head(args) -> int:
    print(export_head(args.out, weights=args.weights))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        category = "io" if isinstance(exc, OSError) else "usage"
        print(f"error[{category}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

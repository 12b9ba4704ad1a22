"""Command line entry points: export a table, or validate an existing one."""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderUnavailableError
from .export import export_embeddings
from .ppte import validate_table
from .taxonomy import read_class_names
from .template import DEFAULT_PATTERN, PromptTemplate


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Class-name text embeddings in the PPTE table format")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="encode class names and write a table")
    exp.add_argument("--taxonomy", required=True,
                     help="taxonomy file providing the ordered class names")
    exp.add_argument("--out", required=True)
    exp.add_argument("--encoder", default="lexicon:v1",
                     help="lexicon:v1 or clip:<model> (default lexicon:v1)")
    exp.add_argument("--template", default=DEFAULT_PATTERN)

    val = sub.add_parser("validate", help="check a table against a taxonomy")
    val.add_argument("path")
    val.add_argument("--taxonomy", required=True)

    args = parser.parse_args(argv)
    try:
        names = read_class_names(args.taxonomy)
        if args.command == "export":
            template = PromptTemplate(args.template)
            rows = export_embeddings(names, template, args.encoder, args.out)
            print(f"wrote {rows.shape[0]} x {rows.shape[1]} table to {args.out}")
            return 0
        report = validate_table(args.path, names)
        if report:
            for item in report:
                print(f"FAIL: {item}", file=sys.stderr)
            return 1
        print(f"{args.path}: ok ({len(names)} rows)")
        return 0
    except (EncoderUnavailableError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: export embeddings, verify them against a corpus.

Exit codes: 0 success, 1 verification mismatch, 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .dqem import FormatError
from .export import AlignmentError, export_corpus, verify


def cmd_export(args) -> int:
    count = export_corpus(args.corpus, args.model, args.out, pooling=args.pooling,
                          expected_dim=args.dim, strict=args.strict)
    print(f"wrote embeddings for {count} dialogues to {args.out}")
    return 0


def cmd_verify(args) -> int:
    problems = verify(args.corpus, args.embeddings, expected_dim=args.dim)
    if problems:
        for problem in problems:
            print(problem)
        return 1
    print("OK: embedding file matches the corpus")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dqembed",
        description="Frozen contextual embedding export for the dialogue grid scorer")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a corpus into a DQEM file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True,
                   help="pretrained model name or local path")
    p.add_argument("--out", required=True)
    p.add_argument("--pooling", choices=("mean", "max", "first"), default="mean")
    p.add_argument("--dim", type=int, default=None,
                   help="fail unless the model hidden size matches")
    p.add_argument("--strict", action="store_true",
                   help="error out on unalignable tokens instead of using the "
                        "unknown-token vector")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("verify", help="cross-check a DQEM file against a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dim", type=int, default=None)
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.fn(args)
    except (FileNotFoundError, IsADirectoryError, FormatError, AlignmentError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

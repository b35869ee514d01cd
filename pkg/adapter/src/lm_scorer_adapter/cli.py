"""Command-line entry point for the external-scorer adapter."""

import argparse
import sys
from pathlib import Path

from .adapter import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_MAX_LENGTH,
    AdapterConfig,
    AdapterError,
    serve_request,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lm-scorer-adapter",
        description=(
            "Score a multi-FASTA request with a masked protein language model "
            "and write per-position log-probability response blocks."
        ),
    )
    parser.add_argument("request", type=Path, help="multi-FASTA request file")
    parser.add_argument("response", type=Path, help="response file to write")
    parser.add_argument(
        "--model", required=True, help="model identifier or checkpoint directory"
    )
    parser.add_argument("--device", default="cpu", help="torch device (default cpu)")
    parser.add_argument(
        "--batch-size", type=int, default=DEFAULT_BATCH_SIZE, help="sequences per forward pass"
    )
    parser.add_argument(
        "--max-length",
        type=int,
        default=DEFAULT_MAX_LENGTH,
        help="longest accepted sequence in residues",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(
            model=args.model,
            device=args.device,
            batch_size=args.batch_size,
            max_length=args.max_length,
        )
        return serve_request(args.request, args.response, config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_status


def run() -> None:
    sys.exit(main())

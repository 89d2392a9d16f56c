"""Command line front end: `vsem-adapter serve` and `vsem-adapter embed-file`."""

import argparse
import sys

from .encoders import AdapterConfig, AdapterError
from .manifest import batch_embed_file
from .protocol import serve_stdio


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    defaults = AdapterConfig()
    parser.add_argument("--text-model", default=defaults.text_model)
    parser.add_argument("--image-model", default=defaults.image_model)
    parser.add_argument("--device", default=defaults.device)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)


def _config(args: argparse.Namespace) -> AdapterConfig:
    return AdapterConfig(
        text_model=args.text_model,
        image_model=args.image_model,
        device=args.device,
        batch_size=args.batch_size,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vsem-adapter",
        description="Serve embeddings over stdio or embed a manifest into a vector file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="answer JSON-lines requests on stdin")
    _add_model_flags(serve)

    embed = sub.add_parser("embed-file", help="embed a JSONL manifest into a vector file")
    embed.add_argument("manifest")
    embed.add_argument("output")
    _add_model_flags(embed)

    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return serve_stdio(_config(args))
        result = batch_embed_file(args.manifest, args.output, _config(args))
        sys.stderr.write(
            f"wrote {result.written} vectors (dim {result.dim}), "
            f"{result.errored} rows errored\n"
        )
        return 0
    except (AdapterError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

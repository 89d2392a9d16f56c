"""Command-line surface: build, stats, split, index, query, eval, serve.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 provider
error. Provider specs are either ``hash:DIM`` for the built-in
deterministic provider or a shell command line for an external stdio
provider process.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import json
import os
import shlex
import sys

from . import corpus, embed, retrieval, service
from .embed import EmbeddingProvider, ExternalProvider, HashProvider
from .errors import EmbeddingError, VsemError
from .kg import LANGUAGES
from .pipeline import ConstantScorer, PipelineConfig, QualityScorer, TableScorer, expand
from .sources import FileSource

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def make_provider(spec: str) -> EmbeddingProvider:
    """``hash:DIM`` for the built-in provider, else an external command."""
    if spec.startswith("hash:"):
        try:
            dim = int(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad provider spec {spec!r}: expected hash:DIM") from None
        if dim <= 0:
            raise UsageError(f"bad provider spec {spec!r}: dim must be positive")
        return HashProvider(dim)
    parts = shlex.split(spec)
    if not parts:
        raise UsageError("provider spec is empty")
    return ExternalProvider(parts)


def make_scorer(obj) -> QualityScorer:
    if obj is None:
        return ConstantScorer(1.0)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("scorer config must be an object with a 'kind' key")
    kind = obj["kind"]
    if kind == "constant":
        return ConstantScorer(float(obj.get("value", 1.0)))
    if kind == "table":
        scores = obj.get("scores", {})
        if not isinstance(scores, dict):
            raise ValueError("scorer 'scores' must be an object")
        return TableScorer(
            {str(k): float(v) for k, v in scores.items()},
            default=float(obj.get("default", 1.0)),
        )
    raise ValueError(f"unknown scorer kind: {kind!r}")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc.msg}") from exc


def _read_seeds(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise ValueError(f"{path}: file not found") from None
    seeds = [line.strip() for line in lines]
    return [s for s in seeds if s and not s.startswith("#")]


def _parse_languages(raw: str | None) -> frozenset[str]:
    if raw is None or raw == "all":
        return frozenset(LANGUAGES)
    langs = frozenset(part.strip() for part in raw.split(",") if part.strip())
    if not langs:
        raise UsageError("--languages lists no codes")
    unknown = langs - LANGUAGES
    if unknown:
        raise UsageError(f"unknown language codes: {','.join(sorted(unknown))}")
    return langs


def _print_json(obj) -> None:
    print(json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":")))


# --- subcommands -----------------------------------------------------------


def cmd_build(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ValueError(f"{args.config}: config must be a JSON object")
    provider_spec = raw.pop("embedder", "hash:64")
    scorer = make_scorer(raw.pop("scorer", None))
    config = PipelineConfig(**raw)

    seeds = _read_seeds(args.seeds)
    source = FileSource(args.source)
    with make_provider(provider_spec) as provider:
        graph, report = expand(seeds, source, scorer, provider, config)
    corpus.write_graph(graph, args.out)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    print(f"built {len(graph)} nodes, {graph.fact_count} facts -> {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    graph = corpus.read_graph(args.graph)
    report = corpus.compute_stats(graph)
    if args.json:
        _print_json(report.to_json())
    else:
        print(report.render_text())
    return EXIT_OK


def cmd_split(args) -> int:
    raw = _load_json(args.spec) if args.spec else {}
    if not isinstance(raw, dict):
        raise ValueError(f"{args.spec}: spec must be a JSON object")
    spec = corpus.SplitSpec(**raw)
    graph = corpus.read_graph(args.graph)
    manifest = corpus.make_splits(graph, spec)
    corpus.write_splits(manifest, args.out)
    counts = ", ".join(
        f"{category} {'/'.join(str(len(getattr(manifest, category)[name])) for name in corpus.SPLIT_NAMES)}"
        for category in ("glosses", "images", "facts")
    )
    print(f"splits (train/valid/test): {counts} -> {args.out}")
    return EXIT_OK


def cmd_index(args) -> int:
    graph = corpus.read_graph(args.graph)
    languages = _parse_languages(args.languages)
    glosses = list(graph.all_glosses())

    if args.vectors:
        store = embed.read_vectors(args.vectors)
        identified = retrieval.gloss_ids([g for g in glosses if g.lang in languages])
        mapping = {gid: gloss.node for gid, gloss in identified}
        missing = sorted(set(mapping) - set(store.ids()))
        extra = sorted(set(store.ids()) - set(mapping))
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"{len(missing)} gloss ids missing (first: {missing[0]})")
            if extra:
                parts.append(f"{len(extra)} unknown ids (first: {extra[0]})")
            raise ValueError(f"{args.vectors}: vectors do not match graph glosses: " + "; ".join(parts))
        index = retrieval.GlossIndex(
            store=store, gloss_to_node=mapping, languages=languages, provider=None
        )
        retrieval.write_index(index, args.out, provider_spec=None)
    else:
        with make_provider(args.provider) as provider:
            index = retrieval.build_index(glosses, provider, languages)
            retrieval.write_index(index, args.out, provider_spec=args.provider)
    print(f"indexed {len(index)} glosses over {len(index.node_ids)} nodes -> {args.out}")
    return EXIT_OK


def _provider_for_index(args) -> EmbeddingProvider:
    spec = getattr(args, "provider", None) or retrieval.stored_provider_spec(args.index)
    if spec is None:
        raise UsageError(
            "index records no provider; pass --provider (hash:DIM or an external command)"
        )
    return make_provider(spec)


def cmd_query(args) -> int:
    if (args.text is None) == (args.image is None):
        raise UsageError("exactly one of --text or --image is required")
    with _provider_for_index(args) as provider:
        index = retrieval.read_index(args.index, provider)
        if args.text is not None:
            result = retrieval.retrieve_by_sentence(index, args.text, args.lang, args.k)
        else:
            try:
                with open(args.image, "rb") as fh:
                    data = fh.read()
            except FileNotFoundError:
                raise ValueError(f"{args.image}: file not found") from None
            result = retrieval.retrieve_by_image(index, data, args.k)
    _print_json(result.to_json())
    return EXIT_OK


def _read_queries(path: str) -> list[tuple]:
    queries: list[tuple] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise ValueError(f"{path}: file not found") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(row, dict) or "gold" not in row:
                raise ValueError(f"{path}:{lineno}: row needs a 'gold' key")
            gold = row["gold"]
            if "text" in row:
                queries.append((row["text"], gold, row.get("lang")))
            elif "image_b64" in row:
                try:
                    data = base64.b64decode(row["image_b64"], validate=True)
                except (binascii.Error, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad base64: {exc}") from exc
                queries.append((data, gold))
            else:
                raise ValueError(f"{path}:{lineno}: row needs 'text' or 'image_b64'")
    return queries


def cmd_eval(args) -> int:
    queries = _read_queries(args.queries)
    with _provider_for_index(args) as provider:
        index = retrieval.read_index(args.index, provider)
        report = retrieval.evaluate(index, queries)
    payload = report.to_json()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    _print_json(payload)
    return EXIT_OK


def cmd_serve(args) -> int:
    addr = args.addr or os.environ.get("VSEM_ADDR") or "127.0.0.1:8591"
    host, sep, port_text = addr.rpartition(":")
    if not sep or not host:
        raise UsageError(f"bad --addr {addr!r}: expected HOST:PORT")
    try:
        port = int(port_text)
    except ValueError:
        raise UsageError(f"bad --addr {addr!r}: port is not an integer") from None

    with _provider_for_index(args) as provider:
        index = retrieval.read_index(args.index, provider)
        image_index = None
        if args.image_index:
            image_index = retrieval.read_index(args.image_index, provider)
        graph = corpus.read_graph(args.graph) if args.graph else None
        app = service.build_app(
            index,
            graph=graph,
            image_index=image_index,
            config=service.ServiceConfig(addr=addr),
        )
        import uvicorn

        uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="vsem", description="Multilingual multimodal knowledge-graph toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("build", help="expand a graph from seed nodes")
    p.add_argument("--seeds", required=True, help="text file, one seed node id per line")
    p.add_argument("--source", required=True, help="knowledge source directory (JSONL)")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="output graph directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="dataset statistics for a graph directory")
    p.add_argument("--graph", required=True)
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="deterministic train/valid/test splits")
    p.add_argument("--graph", required=True)
    p.add_argument("--spec", help="split spec JSON")
    p.add_argument("--out", required=True, help="output split directory")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("index", help="build a gloss embedding index")
    p.add_argument("--graph", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--provider", help="hash:DIM or external provider command")
    group.add_argument("--vectors", help="precomputed gloss vector file")
    p.add_argument("--languages", help="comma-separated codes, or 'all'", default="all")
    p.add_argument("--out", required=True, help="output index path")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="retrieve nodes for a sentence or image")
    p.add_argument("--index", required=True)
    p.add_argument("--text", help="sentence query")
    p.add_argument("--lang", help="language code of the sentence")
    p.add_argument("--image", help="image file query")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--provider", help="override the provider recorded with the index")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="run retrieval evaluation from a query file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="JSONL query rows with gold nodes")
    p.add_argument("--out", required=True, help="where to write the report JSON")
    p.add_argument("--provider", help="override the provider recorded with the index")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP retrieval service")
    p.add_argument("--index", required=True)
    p.add_argument("--addr", help="HOST:PORT (or env VSEM_ADDR)")
    p.add_argument("--graph", help="graph directory for /node lookups")
    p.add_argument("--image-index", help="English-only index for /retrieve/image")
    p.add_argument("--provider", help="override the provider recorded with the index")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmbeddingError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (VsemError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

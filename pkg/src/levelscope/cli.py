"""Command-line entry point.

Every subcommand runs the same pipeline functions the service uses. ``predict
--server URL`` sends the request to a running service instead of loading
artifacts locally. Failures print a JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_FAILURE = 1


def _print(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _fail(kind: str, detail: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "detail": detail}, sort_keys=True) + "\n")
    return code


def _cfg(args):
    from .pipeline import corpus_config

    return corpus_config(args.corpus, args.config)


def cmd_ingest(args) -> int:
    from .config import load_config
    from .pipeline import ingest

    _print(ingest(args.repo, args.out, load_config(args.config)))
    return 0


def cmd_cluster(args) -> int:
    from .pipeline import cluster

    parts = cluster(args.corpus, args.mode, _cfg(args))
    _print({m: {"n_clusters": p.n_clusters, "coverage": p.quality.coverage,
                "modularity": p.quality.modularity, "silhouette": p.quality.silhouette}
            for m, p in parts.items()})
    return 0


def cmd_index(args) -> int:
    from .pipeline import index

    idx = index(args.corpus, _cfg(args))
    _print({"modes": idx.modes, "pool": len(idx.pool), "corpus_hash": idx.bindings["corpus_hash"]})
    return 0


def _predict_remote(args) -> int:
    import httpx

    body = {k: v for k, v in {"file": args.file, "line": args.line, "message": args.message,
                               "context": args.context, "mode": args.mode, "k": args.k}.items()
            if v is not None}
    url = args.server.rstrip("/") + "/predict"
    resp = httpx.post(url, json=body, params={"fallback": str(not args.no_fallback).lower()}, timeout=60)
    if resp.status_code != 200:
        try:
            err = resp.json()
        except ValueError:
            err = {"error": "http", "detail": resp.text}
        return _fail(err.get("error", "http"), f"{resp.status_code}: {err.get('detail')}", EXIT_FAILURE)
    _print(resp.json())
    return 0


def cmd_predict(args) -> int:
    if args.server:
        return _predict_remote(args)
    from .pipeline import Engine

    eng = Engine.load(args.corpus, _cfg(args))
    _print(eng.predict(args.file, args.line, args.message, args.context, args.mode, args.k,
                       allow_fallback=not args.no_fallback))
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation.experiment import ExperimentPlan
    from .pipeline import evaluate

    plan = ExperimentPlan()
    if args.plan:
        plan = ExperimentPlan.from_dict(json.loads(Path(args.plan).read_text(encoding="utf-8")))
    path = evaluate(args.corpus, plan, _cfg(args), args.out)
    _print({"report": str(path)})
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    cfg = _cfg(args)
    app = create_app(args.corpus, cfg)
    uvicorn.run(app, host=args.host or cfg.service.host, port=args.port or cfg.service.port, log_level="info")
    return 0


def cmd_stability(args) -> int:
    from .pipeline import stability

    _print(stability(args.corpus, _cfg(args), args.window_months, args.windows).to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levelscope", description="Cluster-aligned example retrieval for log level prediction.")
    p.add_argument("--version", action="version", version=f"levelscope {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_corpus(sp):
        sp.add_argument("--corpus", required=True, help="corpus directory written by ingest")
        sp.add_argument("--config", help="YAML or JSON config (default: the one saved at ingest)")
        return sp

    sp = sub.add_parser("ingest", help="scan a git repository into a corpus directory")
    sp.add_argument("--repo", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_ingest)

    sp = with_corpus(sub.add_parser("cluster", help="build partitions"))
    sp.add_argument("--mode", default="all", choices=["semantic", "ownership", "multiplex", "all"])
    sp.set_defaults(func=cmd_cluster)

    sp = with_corpus(sub.add_parser("index", help="build the retrieval index"))
    sp.set_defaults(func=cmd_index)

    sp = sub.add_parser("predict", help="predict the level of one statement")
    sp.add_argument("--corpus", help="corpus directory (required without --server)")
    sp.add_argument("--config")
    sp.add_argument("--server", help="base URL of a running service")
    sp.add_argument("--file", required=True)
    sp.add_argument("--line", type=int)
    sp.add_argument("--message")
    sp.add_argument("--context", help="code snippet around the statement")
    sp.add_argument("--mode")
    sp.add_argument("--k", type=int)
    sp.add_argument("--no-fallback", action="store_true", help="fail on files unknown to the corpus")
    sp.set_defaults(func=cmd_predict)

    sp = with_corpus(sub.add_parser("evaluate", help="run the evaluation protocol"))
    sp.add_argument("--plan", help="JSON experiment plan")
    sp.add_argument("--out", help="output directory (default: <corpus>/eval)")
    sp.set_defaults(func=cmd_evaluate)

    sp = with_corpus(sub.add_parser("serve", help="run the HTTP service"))
    sp.add_argument("--port", type=int)
    sp.add_argument("--host")
    sp.set_defaults(func=cmd_serve)

    sp = with_corpus(sub.add_parser("stability", help="temporal stability of ownership clusters"))
    sp.add_argument("--window-months", type=float, default=2)
    sp.add_argument("--windows", type=int, default=15)
    sp.set_defaults(func=cmd_stability)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "predict" and not args.server and not args.corpus:
        return _fail("usage", "predict needs --corpus or --server", EXIT_USAGE)
    from .corpus.git import NotAGitRepo
    from .corpus.store import CorpusError
    from .pipeline import BadRequest, MissingArtifact, UnknownFile
    from .retrieval import IndexBuildError

    try:
        return args.func(args)
    except MissingArtifact as exc:
        return _fail("missing_artifact", str(exc), EXIT_MISSING)
    except (BadRequest, UnknownFile, NotAGitRepo, IndexBuildError, CorpusError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    except Exception as exc:  # last resort: still machine-readable
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())

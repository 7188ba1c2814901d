"""Command-line entry point: train, eval, predict, gradcheck, export-raster.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import difflib
import os
import sys

import numpy as np

from . import checkpoint as ckpt_io
from . import gradcheck
from .config import ConfigError, build_model, build_store, load_config
from .evaluation import evaluate
from .model import SilentNetworkError
from .sgnn import NoInboundEvidence
from .training import TrainingDiverged, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for runtime failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(args) -> int:
    if args.threads is not None:
        value = args.threads
    else:
        raw = os.environ.get("SKG_THREADS", "1")
        try:
            value = int(raw)
        except ValueError:
            raise UsageError(f"SKG_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("thread count must be >= 1")
    return value


def _load_checkpoint(path):
    if not os.path.isfile(path):
        raise UsageError(f"checkpoint not found: {path}")
    return ckpt_io.load(path)


def _store_for(ck, dataset_override=None):
    cfg = ck.config
    if dataset_override:
        cfg.dataset = dataset_override
    store = build_store(cfg)
    if store.vocab != ck.vocab:
        raise UsageError(f"dataset {cfg.dataset} does not match the checkpoint vocabulary")
    return store


# ------------------------------------------------------------------ commands
def cmd_train(args) -> int:
    cfg = load_config(args.config)
    store = build_store(cfg)
    model = build_model(cfg, store)
    schedule = cfg.schedule(threads=_threads(args))
    out = sys.stdout
    with open(cfg.metrics, "w", newline="") as metrics:
        metrics.write("epoch,loss,valid_mrr\n")
        out.write("epoch,loss,valid_mrr\n")

        def on_epoch(rec):
            line = rec.csv() + "\n"
            metrics.write(line)
            metrics.flush()
            out.write(line)
            out.flush()

        train(model, store, schedule, on_epoch=on_epoch)
    ckpt_io.save(cfg.checkpoint, model, cfg, store.vocab)
    print(f"checkpoint written to {cfg.checkpoint}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = _load_checkpoint(args.ckpt)
    store = _store_for(ck, args.dataset)
    model = ck.build()
    report = evaluate(model.scorer(), store, args.split, args.mode, threads=_threads(args))
    print(f"split = {args.split}")
    print(report.to_text())
    if args.csv:
        report.write_csv(args.csv, store)
    return EXIT_OK


def _resolve(token: str, labels: list[str], kind: str) -> int:
    if token in labels:
        return labels.index(token)
    if token.lstrip("-").isdigit():
        idx = int(token)
        if 0 <= idx < len(labels):
            return idx
        raise UsageError(f"{kind} id {idx} out of range [0, {len(labels)})")
    near = difflib.get_close_matches(token, labels, n=5, cutoff=0.5)
    hint = f"; did you mean: {', '.join(near)}" if near else ""
    raise UsageError(f"unknown {kind} {token!r}{hint}")


def parse_query(text: str, vocab):
    """``"s p ?"`` or ``"? p o"`` with labels or integer ids -> (s, p, o, slot)."""
    parts = text.split()
    if len(parts) != 3 or [parts[0], parts[2]].count("?") != 1:
        raise UsageError(f"query must look like 's p ?' or '? p o', got {text!r}")
    p = _resolve(parts[1], vocab.relations, "relation")
    if parts[2] == "?":
        return _resolve(parts[0], vocab.entities, "entity"), p, None, "object"
    return None, p, _resolve(parts[2], vocab.entities, "entity"), "subject"


def cmd_predict(args) -> int:
    ck = _load_checkpoint(args.ckpt)
    s, p, o, slot = parse_query(args.query, ck.vocab)
    if args.top < 1:
        raise UsageError("--top must be >= 1")
    model = ck.build()
    cand = np.arange(ck.vocab.num_entities)
    scores = model.scorer()(cand, p, o) if slot == "subject" else model.scorer()(s, p, cand)
    order = np.argsort(scores, kind="stable")[: args.top]
    for rank, e in enumerate(order, start=1):
        print(f"{rank}\t{ck.vocab.entities[e]}\t{scores[e]:.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    if args.inject_fault:
        with gradcheck.injected_fault():
            results = gradcheck.run_all(args.seed, args.instances)
    else:
        results = gradcheck.run_all(args.seed, args.instances)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("gradcheck", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_export_raster(args) -> int:
    ck = _load_checkpoint(args.ckpt)
    model = ck.build()
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "raster.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entity_id", "layer", "neuron", "time"])
        for n, layer, i, t in model.raster_rows():
            w.writerow([int(n), layer, int(i), repr(float(t))])
    print(f"raster written to {path}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikekg", description="Knowledge-graph embeddings with spiking neurons.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_threads(p):
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: $SKG_THREADS or 1)")

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    add_threads(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank a split with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--mode", default="filtered", choices=["filtered", "raw"])
    p.add_argument("--dataset", default=None, help="override the dataset stored in the checkpoint")
    p.add_argument("--csv", default=None, help="write per-query ranks to this CSV")
    add_threads(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="complete a partial triple")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--query", required=True, help="'s p ?' or '? p o' (labels or ids)")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of all analytic gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-raster", help="write every spike time to CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_raster)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ckpt_io.CheckpointError, TrainingDiverged, SilentNetworkError, NoInboundEvidence,
            FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: ingest, motifs, split, train, eval, gradcheck.

Every successful command prints one summary line of ``key=value`` fields
(``eval`` prints a CSV header and row). Exit codes: 0 success, 1 usage
error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import autodiff as ad
from .graph import BIPARTITE, DIRECTED, SplitPlan, ingest, load_graph, save_graph, split
from .motifs import build_edge_features, load_catalog, load_features, save_features, save_features_csv
from .training import EvalReport, load_config, load_model, train, evaluate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("%s: %s" % (self.prog, message))


def _summary(command: str, **fields) -> str:
    return " ".join([command] + ["%s=%s" % kv for kv in fields.items()])


def cmd_ingest(args) -> str:
    graph = ingest(args.input, args.format, BIPARTITE if args.bipartite else DIRECTED,
                   args.drop_self_loops)
    save_graph(graph, args.output)
    return _summary("ingest", nodes=graph.num_nodes, edges=graph.num_edges,
                    feature_dim=graph.feature_dim, output=args.output)


def cmd_motifs(args) -> str:
    if not args.delta > 0:
        raise UsageError("--delta must be positive")
    graph = load_graph(args.graph)
    catalog = load_catalog(args.catalog, delta=args.delta)
    table = build_edge_features(graph, catalog, causal=args.causal, n_jobs=args.jobs)
    if args.csv:
        save_features_csv(table, args.output, catalog)
    else:
        save_features(table, args.output)
    return _summary("motifs", edges=table.shape[0], width=table.shape[1], motifs=len(catalog),
                    delta=args.delta, output=args.output)


def cmd_split(args) -> str:
    graph = load_graph(args.graph)
    plan = split(graph, args.train_frac, args.val_frac,
                 "inductive" if args.inductive else "transductive", args.mask_frac, args.seed)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(plan.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    return _summary("split", mode=plan.mode, train_end=plan.train_end, val_end=plan.val_end,
                    edges=graph.num_edges, masked=len(plan.masked_nodes), output=args.output)


def _load_split(path: str) -> SplitPlan:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return SplitPlan.from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError("%s: not a split file (%s)" % (path, exc)) from None


def _path(args, extras: dict, key: str, required: bool = True):
    value = getattr(args, key, None) or extras.get(key)
    if value is None and required:
        raise UsageError("missing %s: pass --%s or set '%s = ...' in the config"
                         % (key, key.replace("_", "-"), key))
    return value


def cmd_train(args) -> str:
    cfg, extras = load_config(args.config)
    graph_path = _path(args, extras, "graph")
    features_path = _path(args, extras, "features")
    split_path = _path(args, extras, "split_file")
    checkpoint = _path(args, extras, "checkpoint")
    log_path = _path(args, extras, "log", required=False) or checkpoint + ".log.csv"
    graph = load_graph(graph_path)
    table = load_features(features_path)
    plan = _load_split(split_path)
    result = train(graph, table, cfg, plan)
    tensors, meta = result.checkpoint()
    meta["paths"] = {"graph": os.path.abspath(graph_path),
                     "features": os.path.abspath(features_path),
                     "split_file": os.path.abspath(split_path)}
    ad.save_checkpoint(checkpoint, tensors, meta)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(result.log_text())
    return _summary("train", epochs=len(result.log), best_epoch=result.best_epoch,
                    best_val_ap="%.6f" % result.best_val_ap, checkpoint=checkpoint, log=log_path)


def cmd_eval(args) -> str:
    tensors, meta = ad.load_checkpoint(args.checkpoint)
    model, cfg, _ = load_model(tensors, meta)
    paths = meta.get("paths", {})
    graph = load_graph(args.graph or paths.get("graph") or _missing("graph"))
    table = load_features(args.features or paths.get("features") or _missing("features"))
    plan = _load_split(args.split_file or paths.get("split_file") or _missing("split-file"))
    report = evaluate(model, graph, table, plan, args.split, cfg, int(meta.get("best_epoch", 0)),
                      seed=args.seed)
    return EvalReport.csv_header() + "\n" + report.csv_row()


def _missing(flag: str):
    raise UsageError("checkpoint does not record a %s path; pass --%s" % (flag, flag))


def cmd_gradcheck(args) -> str:
    from .gradcheck import TOLERANCE, run_suite

    reports = run_suite(range(args.seeds))
    for r in reports:
        print(_summary("gradcheck-layer", layer=r.layer, max_rel_error="%.3e" % r.max_rel_error,
                       seeds=r.seeds, passed=str(r.passed).lower()))
    worst = max(r.max_rel_error for r in reports)
    line = _summary("gradcheck", layers=len(reports), max_rel_error="%.3e" % worst,
                    tolerance="%.0e" % TOLERANCE)
    if worst > TOLERANCE:
        raise FloatingPointError("gradient check failed: " + line)
    return line


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="motiftgn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse an interaction file into a graph container")
    s.add_argument("input")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--format", choices=("plain", "jodie"), default="plain")
    s.add_argument("--bipartite", action="store_true", help="user/item graph")
    s.add_argument("--drop-self-loops", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("motifs", help="compute per-edge temporal motif features")
    s.add_argument("graph")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--delta", type=float, required=True, help="window in seconds")
    s.add_argument("--catalog", default="directed_default",
                   help="catalog file or a shipped default name")
    s.add_argument("--causal", action="store_true",
                   help="count only instances completed by the edge's own time")
    s.add_argument("--csv", action="store_true", help="write CSV instead of the binary table")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_motifs)

    s = sub.add_parser("split", help="write chronological split boundaries")
    s.add_argument("graph")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--train-frac", type=float, default=0.70)
    s.add_argument("--val-frac", type=float, default=0.15)
    s.add_argument("--inductive", action="store_true")
    s.add_argument("--mask-frac", type=float, default=0.10)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train a model from a key = value config")
    s.add_argument("--config", required=True)
    s.add_argument("--graph")
    s.add_argument("--features")
    s.add_argument("--split-file")
    s.add_argument("--checkpoint")
    s.add_argument("--log")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a split with a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=("val", "test"), default="test")
    s.add_argument("--graph")
    s.add_argument("--features")
    s.add_argument("--split-file")
    s.add_argument("--seed", type=int, default=None, help="negative-sampling seed")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    s.add_argument("--seeds", type=int, default=20)
    s.set_defaults(func=cmd_gradcheck)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        print(args.func(args))
        return EXIT_OK
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, ArithmeticError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())

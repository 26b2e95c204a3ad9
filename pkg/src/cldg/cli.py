"""Command-line front end.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numeric error. Text outputs start with a ``#`` line naming the tool
version and a hash of the resolved configuration.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, NumericError
from .diffusion import DiffusionConfig
from .sampler import STRATEGIES, SamplerConfig, sample_views
from .temporal_graph import ingest_edge_list, load_graph, save_graph

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DIFFUSION_FLAGS = ("diffusion", "alpha", "t", "topk")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _header(cfg: dict) -> str:
    from .trainer import config_hash
    return f"# cldg {__version__} config={config_hash(cfg)}\n"


def _node_token(g, i: int) -> str:
    return g.node_names[i] if g.node_names is not None else str(i)


def _fmt(x: float) -> str:
    return repr(float(x))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS thread limit; 1 is the bit-reproducible reference (default 1)")
    common.add_argument("--verbose", action="store_true", help="log per-epoch progress")

    p = _Parser(prog="cldg", description="Contrastive learning on continuous-time dynamic graphs.")
    p.add_argument("--version", action="version", version=f"cldg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("ingest", parents=[common], help="edge list (+features, labels) -> TGV1 container")
    c.add_argument("--edges", required=True, help="text file of 'src dst ts' lines")
    c.add_argument("--features", help="CSV, row i = node i (first-seen order)")
    c.add_argument("--labels", help="'node<TAB>class' lines")
    c.add_argument("--out", required=True, help="output .bin path")

    def add_sampler(c, default_strategy="sequential"):
        c.add_argument("--strategy", choices=STRATEGIES, default=default_strategy,
                       help=f"timespan view sampling strategy (default {default_strategy})")
        c.add_argument("--s", type=int, default=4, help="view timespan factor: window = span/s (default 4)")
        c.add_argument("--v", type=int, default=2, help="views per epoch (default 2)")

    c = sub.add_parser("sample-views", parents=[common], help="dump sampled windows as TSV")
    c.add_argument("--graph", required=True)
    add_sampler(c)
    c.add_argument("--epoch", type=int, default=0)
    c.add_argument("--out", help="TSV path (default stdout)")

    c = sub.add_parser("train", parents=[common], help="train encoders, write CLD1 checkpoint")
    c.add_argument("--graph", required=True)
    c.add_argument("--mode", choices=("cldg", "cldgpp"), default="cldg",
                   help="cldg: local-local contrast only; cldgpp: adds diffusion views (default cldg)")
    add_sampler(c)
    c.add_argument("--epochs", type=int, default=200, help="default 200")
    c.add_argument("--batch-size", type=int, default=256, help="default 256")
    c.add_argument("--lr", type=float, default=4e-3, help="Adam learning rate (default 4e-3)")
    c.add_argument("--weight-decay", type=float, default=5e-4, help="default 5e-4")
    c.add_argument("--tau", type=float, default=0.2, help="InfoNCE temperature (default 0.2)")
    c.add_argument("--hidden", type=int, default=128, help="hidden dimension (default 128)")
    c.add_argument("--out-dim", type=int, default=64, help="embedding dimension (default 64)")
    c.add_argument("--feature-dim", type=int, default=32,
                   help="degree-bucket feature width for graphs without features (default 32)")
    c.add_argument("--diffusion", choices=("ppr", "heat"), default=None, help="cldgpp only (default ppr)")
    c.add_argument("--alpha", type=float, default=None, help="PPR teleport probability (default 0.15)")
    c.add_argument("--t", type=float, default=None, help="heat kernel diffusion time (default 5)")
    c.add_argument("--topk", type=int, default=None, help="entries kept per diffusion row (default 128)")
    c.add_argument("--out", required=True, help="checkpoint path")
    c.add_argument("--metrics", help="per-epoch TSV: epoch, loss, step_ms")

    c = sub.add_parser("embed", parents=[common], help="write node embeddings as TSV")
    c.add_argument("--graph", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--s", type=int, default=4, help="sequential windows averaged (default 4)")
    c.add_argument("--out", required=True)

    c = sub.add_parser("classify", parents=[common], help="1:1:8 linear probe on frozen embeddings")
    c.add_argument("--graph", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--s", type=int, default=4)
    c.add_argument("--probe-epochs", type=int, default=300)
    c.add_argument("--out", help="per-node test predictions TSV")

    c = sub.add_parser("inject-anomalies", parents=[common], help="add clique and attribute anomalies")
    c.add_argument("--graph", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--cliques", type=int, default=10, help="number of structural cliques (default 10)")
    c.add_argument("--clique-size", type=int, default=15, help="default 15")
    c.add_argument("--attributes", type=int, default=50, help="attribute anomalies (default 50)")
    c.add_argument("--k", type=int, default=50, help="candidates per attribute anomaly (default 50)")
    c.add_argument("--s", type=int, default=4, help="windows for per-span feature swaps (default 4)")
    c.add_argument("--truth", help="write 'node<TAB>flag' truth file here")

    c = sub.add_parser("detect", parents=[common], help="temporal-consistency anomaly scores")
    c.add_argument("--graph", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--v", type=int, default=4, help="sequential inference windows (default 4)")
    c.add_argument("--truth", help="truth file; defaults to 0/1 graph labels if present")
    c.add_argument("--out", help="scores TSV (default stdout)")
    return p


@contextlib.contextmanager
def _open_out(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


# --
# Commands


def cmd_ingest(a, cfg):
    g = ingest_edge_list(a.edges, a.features, a.labels)
    save_graph(g, a.out)
    print(f"nodes\t{g.num_nodes}\nedges\t{g.num_edges}\nspan\t{_fmt(g.span)}")


def cmd_sample_views(a, cfg):
    g = load_graph(a.graph)
    vs = sample_views(g, SamplerConfig(a.strategy, a.s, a.v, a.seed), a.epoch)
    with _open_out(a.out) as fh:
        fh.write(_header(cfg))
        fh.write("center\tlo\thi\tnodes\tedges\n")
        for v in vs.views:
            lo, hi = v.window
            fh.write(f"{_fmt(v.center)}\t{_fmt(lo)}\t{_fmt(hi)}\t{v.num_active}\t{v.num_edges}\n")


def _train_config(a):
    from .trainer import TrainConfig
    if a.mode == "cldg":
        given = [f"--{f}" for f in DIFFUSION_FLAGS if getattr(a, f) is not None]
        if given:
            raise UsageError(f"{', '.join(given)}: diffusion flags are only valid with --mode cldgpp")
    dcfg = DiffusionConfig()
    dcfg = DiffusionConfig(
        kind=a.diffusion or dcfg.kind,
        alpha=dcfg.alpha if a.alpha is None else a.alpha,
        t=dcfg.t if a.t is None else a.t,
        topk=dcfg.topk if a.topk is None else a.topk,
    )
    return TrainConfig(
        epochs=a.epochs, batch_size=a.batch_size, lr=a.lr, weight_decay=a.weight_decay,
        tau=a.tau, mode=a.mode, sampler=SamplerConfig(a.strategy, a.s, a.v, a.seed),
        diffusion=dcfg, seed=a.seed, d_hidden=a.hidden, d_out=a.out_dim, feature_dim=a.feature_dim,
    )


def cmd_train(a, cfg):
    from .trainer import save_checkpoint, train
    tcfg = _train_config(a)
    tcfg.validate()
    g = load_graph(a.graph)
    params, history = train(g, tcfg)
    save_checkpoint(a.out, params, tcfg.to_dict())
    if a.metrics:
        with open(a.metrics, "w", encoding="utf-8") as fh:
            fh.write(_header(cfg))
            fh.write("epoch\tloss\tstep_ms\n")
            for row in history:
                fh.write(f"{row['epoch']}\t{_fmt(row['loss'])}\t{row['step_ms']:.3f}\n")
    final = history[-1]["loss"] if history else float("nan")
    print(f"params\t{params.num_parameters()}\nfinal_loss\t{_fmt(final)}")


def _model_inputs(a):
    from .trainer import load_checkpoint, node_features
    g = load_graph(a.graph)
    params, tcfg = load_checkpoint(a.model)
    X = node_features(g, tcfg.get("feature_dim", params.d_in))
    if X.shape[1] != params.d_in:
        raise DataError(f"{a.graph}: feature width {X.shape[1]} does not match model input {params.d_in}")
    return g, params, X


def cmd_embed(a, cfg):
    from .evaluation import final_embeddings
    g, params, X = _model_inputs(a)
    emb, flagged = final_embeddings(g, params, X, a.s)
    with open(a.out, "w", encoding="utf-8") as fh:
        fh.write(_header(cfg))
        for i in range(g.num_nodes):
            fh.write(_node_token(g, i) + "\t" + "\t".join(_fmt(x) for x in emb[i]) + "\n")
    if flagged.any():
        logging.getLogger(__name__).warning("%d nodes never active; zero embeddings written", flagged.sum())


def cmd_classify(a, cfg):
    from .evaluation import SplitSpec, final_embeddings, linear_probe
    g, params, X = _model_inputs(a)
    if g.labels is None:
        raise DataError(f"{a.graph}: graph has no labels")
    emb, _ = final_embeddings(g, params, X, a.s)
    (acc, wf1), (test, pred) = linear_probe(emb, g.labels, SplitSpec(seed=a.seed), epochs=a.probe_epochs,
                                            return_predictions=True)
    print(f"{_fmt(acc)}\t{_fmt(wf1)}")
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(_header(cfg))
            fh.write("node\tpredicted\ttrue\n")
            for i, p in zip(test, pred):
                fh.write(f"{_node_token(g, i)}\t{p}\t{g.labels[i]}\n")


def _write_truth(g, truth, path, cfg):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header(cfg))
        for i in range(g.num_nodes):
            fh.write(f"{_node_token(g, i)}\t{int(truth[i])}\n")


def _read_truth(g, path) -> np.ndarray:
    ids = {_node_token(g, i): i for i in range(g.num_nodes)}
    truth = np.zeros(g.num_nodes, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) < 2 or parts[0] not in ids:
                raise DataError(f"{path}: line {lineno}: bad truth entry {line!r}")
            truth[ids[parts[0]]] = int(parts[1])
    return truth


def cmd_inject(a, cfg):
    from .anomaly import InjectionConfig, inject_anomalies
    from .errors import PreconditionError
    g = load_graph(a.graph)
    icfg = InjectionConfig(a.cliques, a.clique_size, a.attributes, a.k, a.seed)
    try:
        icfg.validate()
    except PreconditionError as exc:
        raise UsageError(str(exc)) from None
    if g.features is None and a.attributes:
        from .temporal_graph import default_features
        g = g.replace(features=default_features(g, 32))
    g2, truth = inject_anomalies(g, icfg, a.s)
    save_graph(g2, a.out)
    if a.truth:
        _write_truth(g2, truth, a.truth, cfg)
    print(f"anomalies\t{int(truth.sum())}\nedges\t{g2.num_edges}")


def cmd_detect(a, cfg):
    from .anomaly import anomaly_scores, auc
    g, params, X = _model_inputs(a)
    table = anomaly_scores(g, params, a.v, X)
    truth = None
    if a.truth:
        truth = _read_truth(g, a.truth)
    elif g.labels is not None and set(np.unique(g.labels)) <= {0, 1}:
        truth = g.labels
    with _open_out(a.out) as fh:
        fh.write(_header(cfg))
        for i in range(g.num_nodes):
            flag = "inactive" if table.inactive[i] else "ok"
            fh.write(f"{_node_token(g, i)}\t{_fmt(table.scores[i])}\t{flag}\n")
    if truth is not None and 0 < truth.sum() < len(truth):
        print(f"auc\t{_fmt(auc(table.scores, truth))}")


COMMANDS = {
    "ingest": cmd_ingest,
    "sample-views": cmd_sample_views,
    "train": cmd_train,
    "embed": cmd_embed,
    "classify": cmd_classify,
    "inject-anomalies": cmd_inject,
    "detect": cmd_detect,
}


def run(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    print("config " + json.dumps(vars(a), sort_keys=True), file=sys.stderr)
    # the header hash covers what determines the results, not where they are written
    skip = {"threads", "verbose", "out", "metrics"}
    if a.command == "inject-anomalies":
        skip.add("truth")
    cfg = {k: v for k, v in sorted(vars(a).items()) if k not in skip}
    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=max(1, a.threads)):
            COMMANDS[a.command](a, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())

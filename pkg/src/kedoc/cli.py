"""Single-binary command line surface.

Subcommands cover the whole workflow: corpus synthesis, graph-embedding
training, model training, evaluation, vector export, ranking queries, and
the gradient audit. Every run resolves its configuration from defaults,
an optional JSON config file, `--set` overrides, and `--seed`, then writes
the resolved config next to its outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, load_sidecar, save_checkpoint, \
    save_sidecar
from .data import DataError, SynthConfig, load_corpus, synth_corpus, \
    write_corpus
from .kg import EmbeddingTables, GraphError, TransEConfig, \
    export_embeddings, hits_at_k, import_embeddings, load_triples, \
    train_transe
from .layers import VocabularyError
from .metrics import MetricUndefined, write_report, write_summary
from .model import DocumentModel, ModelConfig
from .pipeline import ALL_TASKS, cls_report, doc_labels, \
    fit_graph_embeddings, grad_audit, run_experiment, split_docs, \
    split_per_user, u2i_report
from .training import NumericError, TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

GRAD_TOLERANCE = 1e-4


class UsageError(ValueError):
    """Bad flags, missing config keys, or inconsistent requests."""


def _coerce(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _resolve_config(args):
    """defaults < config file < --set overrides; --seed wins for seeds."""
    cfg = {}
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    for pair in args.set or []:
        if "=" not in pair:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set path {key!r} crosses a non-section")
        node[parts[-1]] = _coerce(value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _section(cfg, name, cls, **extra):
    """Build a config dataclass from a config section plus overrides."""
    section = dict(cfg.get(name, {}))
    if not isinstance(section, dict):
        raise UsageError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise UsageError(
            f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    section.setdefault("seed", cfg["seed"])
    section.update(extra)
    return cls(**section)


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_resolved(out, command, cfg):
    save_sidecar(os.path.join(out, f"{command}-config.json"),
                 command=command, resolved=cfg)


def _load_tables(run_dir):
    _, ent = import_embeddings(os.path.join(run_dir, "entities.tsv"))
    _, rel = import_embeddings(os.path.join(run_dir, "relations.tsv"))
    return EmbeddingTables(ent, rel)


def _save_tables(out, graph, tables):
    export_embeddings(tables, graph.entities,
                      os.path.join(out, "entities.tsv"))
    export_embeddings(EmbeddingTables(tables.relation_emb,
                                      tables.relation_emb),
                      graph.relations, os.path.join(out, "relations.tsv"))


def _load_run(cfg):
    """Rebuild a trained model from a train run directory."""
    run = cfg.get("run")
    if not run:
        raise UsageError("config key `run` (train output dir) is required")
    side = load_sidecar(os.path.join(run, "train-config.json"))
    resolved = side["resolved"]
    data_dir = resolved.get("data")
    if not data_dir:
        raise UsageError("train sidecar lacks the corpus path")
    model_cfg = ModelConfig(**resolved["model_resolved"])
    corpus = load_corpus(data_dir, n_dv=model_cfg.dv_dim)
    tables = _load_tables(run)
    model = DocumentModel(model_cfg, corpus.graph, tables)
    load_checkpoint(os.path.join(run, "checkpoint.npz"), model.params)
    return model, corpus, resolved


def cmd_synth_data(args, cfg):
    out = _out_dir(args)
    scfg = _section(cfg, "synth", SynthConfig)
    corpus = synth_corpus(scfg)
    write_corpus(corpus, out)
    cfg["synth_resolved"] = dataclasses.asdict(scfg)
    _write_resolved(out, "synth-data", cfg)
    print(f"wrote {len(corpus.docs)} docs, "
          f"{len(corpus.graph.triples)} triples to {out}")
    return EXIT_OK


def cmd_train_kg(args, cfg):
    out = _out_dir(args)
    triples = cfg.get("triples")
    if not triples:
        raise UsageError("config key `triples` (TSV path) is required")
    graph = load_triples(triples)
    kcfg = _section(cfg, "kg", TransEConfig)
    tables = train_transe(graph, kcfg)
    _save_tables(out, graph, tables)
    cfg["kg_resolved"] = dataclasses.asdict(kcfg)
    _write_resolved(out, "train-kg", cfg)
    held = graph.triples[: max(1, len(graph.triples) // 10)]
    print(f"trained {len(graph.entities)} entity embeddings, "
          f"hits@3 on {len(held)} triples: "
          f"{hits_at_k(tables, graph, held, 3, kcfg.norm):.3f}")
    return EXIT_OK


def cmd_train(args, cfg):
    out = _out_dir(args)
    data_dir = cfg.get("data")
    if not data_dir:
        raise UsageError("config key `data` (corpus dir) is required")
    tasks = cfg.get("tasks")
    if not tasks:
        raise UsageError("config key `tasks` must list at least one task")
    unknown = set(tasks) - set(ALL_TASKS)
    if unknown:
        raise UsageError(f"unknown task(s): {sorted(unknown)}")
    target = cfg.get("target", tasks[0])
    if target not in tasks:
        raise UsageError(f"target {target!r} is not among tasks {tasks}")

    model_section = dict(cfg.get("model", {}))
    corpus = load_corpus(data_dir, n_dv=model_section.get("dv_dim", 64))
    model_section.setdefault("n_categories", len(corpus.category_vocab))
    model_section.setdefault("n_types", len(corpus.type_vocab))
    cfg["model"] = model_section
    model_cfg = _section(cfg, "model", ModelConfig)
    train_cfg = _section(cfg, "train", TrainConfig)

    emb_dir = cfg.get("embeddings")
    if emb_dir:
        tables = _load_tables(emb_dir)
    else:
        kg_cfg = _section(cfg, "kg", TransEConfig,
                          dim=model_cfg.entity_dim)
        tables = train_transe(corpus.graph, kg_cfg)
        cfg["kg_resolved"] = dataclasses.asdict(kg_cfg)

    log_lines = []
    exp = run_experiment(corpus, tables, model_cfg, train_cfg, list(tasks),
                         target, log_fn=log_lines.append)
    save_checkpoint(os.path.join(out, "checkpoint.npz"), exp.model.params)
    _save_tables(out, corpus.graph, tables)
    with open(os.path.join(out, "train-log.tsv"), "w",
              encoding="utf-8") as fh:
        fh.write("epoch\ttask\tloss\tval_metric\twall_ms\n")
        for line in log_lines:
            fh.write(line + "\n")
    cfg["model_resolved"] = dataclasses.asdict(model_cfg)
    cfg["train_resolved"] = dataclasses.asdict(train_cfg)
    cfg["best_valid"] = exp.best_valid
    _write_resolved(out, "train", cfg)
    print(f"best validation metric on {target}: {exp.best_valid:.4f}")
    return EXIT_OK


def _evaluation_rows(model, corpus, resolved):
    docs_by_id = {d.doc_id: d for d in corpus.docs}
    seed = resolved["train_resolved"]["seed"]
    rows = []
    tasks = resolved["tasks"]
    if "user2item" in tasks:
        from .data import filter_users
        _, _, imp_test = split_per_user(filter_users(corpus.impressions))
        rows += u2i_report(model, docs_by_id, imp_test)
    doc_ids = sorted(docs_by_id)
    _, _, d_test = split_docs(doc_ids, seed)
    for task in tasks:
        if task in ("user2item", "item2item"):
            continue
        labels = doc_labels(corpus.docs, task)
        ids = [d for d in d_test if d in labels]
        if ids:
            rows += cls_report(model, docs_by_id, task, ids, labels)
    return rows


def cmd_evaluate(args, cfg):
    out = _out_dir(args)
    model, corpus, resolved = _load_run(cfg)
    rows = _evaluation_rows(model, corpus, resolved)
    if not rows:
        raise DataError("nothing to evaluate for the trained tasks")
    write_report(os.path.join(out, "report.tsv"), rows)
    write_summary(os.path.join(out, "summary.json"), rows)
    _write_resolved(out, "evaluate", cfg)
    for metric, task, split, value in rows:
        print(f"{task}\t{split}\t{metric}\t{value:.4f}")
    return EXIT_OK


def cmd_embed(args, cfg):
    out = _out_dir(args)
    model, corpus, _ = _load_run(cfg)
    path = os.path.join(out, "kdv.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus.docs:
            vec = model.kdv(d).data
            fh.write(d.doc_id + "\t"
                     + " ".join(repr(float(v)) for v in vec) + "\n")
    _write_resolved(out, "embed", cfg)
    print(f"wrote {len(corpus.docs)} vectors to {path}")
    return EXIT_OK


def cmd_recommend(args, cfg):
    out = _out_dir(args)
    user = cfg.get("user")
    if not user:
        raise UsageError("config key `user` is required (--set user=ID)")
    k = int(cfg.get("k", 10))
    model, corpus, _ = _load_run(cfg)
    history = []
    for imp in corpus.impressions:
        if imp.user_id == user:
            history = imp.history
            break
    if not history:
        raise DataError(f"user {user!r} has no impressions in the corpus")
    docs_by_id = {d.doc_id: d for d in corpus.docs}
    cache = {}
    u = model.user_vector([docs_by_id[d] for d in history], cache=cache)
    scored = []
    for doc_id, doc in docs_by_id.items():
        if doc_id in history:
            continue
        s = model.score_user_item(u, model.kdv(doc, cache=cache)).item()
        scored.append((doc_id, s))
    scored.sort(key=lambda x: (-x[1], x[0]))
    path = os.path.join(out, f"recommend-{user}.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, s in scored[:k]:
            fh.write(f"{doc_id}\t{s:.6f}\n")
    _write_resolved(out, "recommend", cfg)
    print(f"wrote top-{min(k, len(scored))} recommendations to {path}")
    return EXIT_OK


def cmd_similar(args, cfg):
    out = _out_dir(args)
    anchor = cfg.get("doc")
    if not anchor:
        raise UsageError("config key `doc` is required (--set doc=ID)")
    k = int(cfg.get("k", 10))
    model, corpus, _ = _load_run(cfg)
    docs_by_id = {d.doc_id: d for d in corpus.docs}
    if anchor not in docs_by_id:
        raise DataError(f"document {anchor!r} not in the corpus")
    cache = {}
    a = model.kdv(docs_by_id[anchor], cache=cache)
    scored = []
    for doc_id, doc in docs_by_id.items():
        if doc_id == anchor:
            continue
        s = model.item_similarity(a, model.kdv(doc, cache=cache)).item()
        scored.append((doc_id, s))
    scored.sort(key=lambda x: (-x[1], x[0]))
    path = os.path.join(out, f"similar-{anchor}.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, s in scored[:k]:
            fh.write(f"{doc_id}\t{s:.6f}\n")
    _write_resolved(out, "similar", cfg)
    print(f"wrote top-{min(k, len(scored))} similar items to {path}")
    return EXIT_OK


def cmd_grad_check(args, cfg):
    err = grad_audit(cfg["seed"])
    print(f"max relative gradient error: {err:.3e} "
          f"(tolerance {GRAD_TOLERANCE:.0e})")
    if args.out:
        out = _out_dir(args)
        cfg["max_relative_error"] = err
        _write_resolved(out, "grad-check", cfg)
    if err >= GRAD_TOLERANCE:
        raise NumericError(f"gradient audit failed: {err:.3e}")
    return EXIT_OK


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train-kg": cmd_train_kg,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "embed": cmd_embed,
    "recommend": cmd_recommend,
    "similar": cmd_similar,
    "grad-check": cmd_grad_check,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits 2 by default; the contract reserves 2 for data
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="kedoc",
                     description="knowledge-enhanced document toolkit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="root random seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted keys allowed)")
        p.add_argument("--out", help="output directory (default: cwd)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GraphError, VocabularyError, MetricUndefined,
            FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Glue between corpus data, task construction, training, and evaluation."""

from dataclasses import dataclass

import numpy as np

from . import metrics
from .util import stable_seed
from .data import build_i2i_pairs, build_popularity_labels, filter_users
from .kg import TransEConfig, train_transe
from .model import DocumentModel, ModelConfig
from .training import TaskData, TrainConfig, Trainer, sample_negatives

ALL_TASKS = ("user2item", "item2item", "popularity", "category", "local")


def split_per_user(impressions, ratios=(0.8, 0.1, 0.1)):
    """Split each user's impressions by timestamp order into three lists."""
    by_user = {}
    for im in impressions:
        by_user.setdefault(im.user_id, []).append(im)
    train, valid, test = [], [], []
    for user in sorted(by_user):
        ims = sorted(by_user[user], key=lambda im: im.timestamp)
        n = len(ims)
        n_train = int(n * ratios[0])
        n_valid = int(n * ratios[1])
        train.extend(ims[:n_train])
        valid.extend(ims[n_train:n_train + n_valid])
        test.extend(ims[n_train + n_valid:])
    return train, valid, test


def u2i_groups(impressions):
    """Per-user (history, [(candidate, label), ...]) evaluation groups."""
    by_user = {}
    for im in impressions:
        key = im.user_id
        if key not in by_user:
            by_user[key] = (tuple(im.history), [])
        by_user[key][1].append((im.candidate, im.label))
    return [by_user[u] for u in sorted(by_user)]


def build_u2i_task(train_imps, valid_imps):
    train = [(tuple(im.history), im.candidate)
             for im in train_imps if im.label == 1]
    return TaskData("user2item", train, u2i_groups(valid_imps))


def build_i2i_task(impressions, doc_ids, threshold, seed, valid_negatives=20):
    """Co-click pair task; validation groups carry sampled negatives."""
    train_pairs, valid_pairs, _ = build_i2i_pairs(
        impressions, threshold=threshold, seed=seed)
    train = [(a, b) for a, b in train_pairs]
    valid = []
    for i, (a, b) in enumerate(valid_pairs):
        pool = [d for d in doc_ids if d not in (a, b)]
        negs = sample_negatives(b, pool, min(valid_negatives, len(pool)),
                                stable_seed(seed, "i2i-valid", i))
        valid.append((a, [(b, 1)] + [(d, 0) for d in negs]))
    return TaskData("item2item", train, valid)


def split_docs(doc_ids, seed, ratios=(0.8, 0.1, 0.1)):
    rng = np.random.default_rng(stable_seed(seed, "docsplit"))
    order = rng.permutation(len(doc_ids))
    n_train = int(len(doc_ids) * ratios[0])
    n_valid = int(len(doc_ids) * ratios[1])
    ids = [doc_ids[i] for i in order]
    return ids[:n_train], ids[n_train:n_train + n_valid], ids[n_train + n_valid:]


def build_cls_task(name, labels, train_ids, valid_ids):
    train = [(d, labels[d]) for d in train_ids if d in labels]
    valid = [(d, labels[d]) for d in valid_ids if d in labels]
    return TaskData(name, train, valid)


def doc_labels(docs, task):
    if task == "category":
        return {d.doc_id: d.category for d in docs}
    if task == "local":
        return {d.doc_id: d.local for d in docs}
    if task == "popularity":
        return build_popularity_labels(docs)
    raise ValueError(f"unknown classification task {task}")


@dataclass
class Experiment:
    model: DocumentModel
    trainer: Trainer
    best_valid: float
    splits: dict


def run_experiment(corpus, tables, model_cfg, train_cfg, tasks, target,
                   i2i_threshold=2, doc_ratios=(0.8, 0.1, 0.1), log_fn=None):
    """Train the document model on the given tasks and return the bundle."""
    docs_by_id = {d.doc_id: d for d in corpus.docs}
    doc_ids = sorted(docs_by_id)
    impressions = filter_users(corpus.impressions)
    imp_train, imp_valid, imp_test = split_per_user(impressions)
    d_train, d_valid, d_test = split_docs(doc_ids, train_cfg.seed, doc_ratios)

    task_data = []
    for name in tasks:
        if name == "user2item":
            task_data.append(build_u2i_task(imp_train, imp_valid))
        elif name == "item2item":
            task_data.append(build_i2i_task(
                impressions, doc_ids, i2i_threshold, train_cfg.seed))
        else:
            task_data.append(build_cls_task(
                name, doc_labels(corpus.docs, name), d_train, d_valid))

    model = DocumentModel(model_cfg, corpus.graph, tables)
    trainer = Trainer(model, train_cfg, task_data, target, docs_by_id,
                      log_fn=log_fn)
    best = trainer.train()
    return Experiment(model=model, trainer=trainer, best_valid=best,
                      splits={"imp_train": imp_train, "imp_valid": imp_valid,
                              "imp_test": imp_test, "doc_train": d_train,
                              "doc_valid": d_valid, "doc_test": d_test})


def fit_graph_embeddings(graph, dim, seed, epochs=60, lr=0.02, batch=256,
                         margin=1.0, norm="L2"):
    cfg = TransEConfig(dim=dim, margin=margin, norm=norm, lr=lr,
                       epochs=epochs, batch=batch, seed=seed)
    return train_transe(graph, cfg)


def score_impression_groups(model, docs_by_id, impressions):
    cache = {}
    groups = []
    for history, cands in u2i_groups(impressions):
        u = model.user_vector([docs_by_id[d] for d in history], cache=cache)
        scores = [model.score_user_item(
            u, model.kdv(docs_by_id[d], cache=cache)).item()
            for d, _ in cands]
        labels = [lab for _, lab in cands]
        groups.append((scores, labels))
    return groups


def u2i_report(model, docs_by_id, impressions, split="test"):
    groups = score_impression_groups(model, docs_by_id, impressions)
    auc, _, _ = metrics.grouped_metric(groups, metrics.auc)
    ndcg, _, _ = metrics.grouped_metric(groups, metrics.ndcg_at_k, k=10)
    return [("auc", "user2item", split, auc),
            ("ndcg@10", "user2item", split, ndcg)]


def cls_report(model, docs_by_id, task, labeled_ids, labels, split="test"):
    cache = {}
    preds, labs, pos_scores = [], [], []
    for d in labeled_ids:
        probs = model.classify(model.kdv(docs_by_id[d], cache=cache), task)
        preds.append(int(np.argmax(probs.data)))
        labs.append(labels[d])
        if task == "local":
            pos_scores.append(float(probs.data[1]))
    n_classes = probs.data.shape[0]
    rows = [("accuracy", task, split, metrics.accuracy(preds, labs)),
            ("macro_f1", task, split,
             metrics.macro_f1(preds, labs, n_classes))]
    if task == "local" and len(set(labs)) == 2:
        rows.append(("auc", task, split, metrics.auc(pos_scores, labs)))
    return rows


def _audit_setup(seed):
    from .data import DocumentRecord, EntityMention
    from .kg import EmbeddingTables, KnowledgeGraph
    from .layers import POSITION_BODY, POSITION_TITLE

    rng = np.random.default_rng(stable_seed(seed, "audit"))
    n_e, dim, n_dv = 6, 5, 4
    entities = [f"e{i}" for i in range(n_e)]
    triples = [(i, i % 2, (i + 1) % n_e) for i in range(n_e)]
    triples += [(i, 1, (i + 2) % n_e) for i in range(0, n_e, 2)]
    graph = KnowledgeGraph(entities, ["r0", "r1"], triples)
    tables = EmbeddingTables(rng.normal(0.0, 0.5, (n_e, dim)),
                             rng.normal(0.0, 0.5, (2, dim)))
    docs = []
    for j in range(4):
        mentions = [
            EntityMention(entity_id=f"e{(2 * j) % n_e}",
                          position=POSITION_TITLE,
                          frequency=int(rng.integers(1, 25)), category=j % 2),
            EntityMention(entity_id=f"e{(2 * j + 1) % n_e}",
                          position=POSITION_BODY,
                          frequency=int(rng.integers(1, 4)),
                          category=(j + 1) % 2),
        ]
        docs.append(DocumentRecord(
            doc_id=f"d{j}", category=j % 3, local=j % 2, click_count=j,
            base_dv=rng.normal(0.0, 0.5, n_dv), mentions=mentions,
            title="", body=""))
    cfg = ModelConfig(entity_dim=dim, dv_dim=n_dv, hidden=6, proj_dim=6,
                      n_categories=3, n_types=2, finetune_entities=True,
                      seed=seed)
    return DocumentModel(cfg, graph, tables), docs


def grad_audit(seed, eps=1e-5, resolution=1e-4):
    """Analytic-vs-numeric gradient check through the whole model.

    One scalar objective touches every path: the aggregation, context, and
    distillation layers, all heads, both loss shapes, and the L2 penalty.
    Returns the max relative error over every trainable parameter entry.
    """
    from . import autodiff as ad
    from .training import ce_loss, l2_penalty, ranking_loss

    model, docs = _audit_setup(seed)

    def objective():
        cache = {}
        u = model.user_vector(docs[:2], cache=cache)
        scores = ad.stack([model.score_user_item(
            u, model.kdv(d, cache=cache)) for d in docs[1:]])
        loss = ranking_loss(scores, 1, 10.0)
        a, b, c = (model.kdv(d, cache=cache) for d in docs[:3])
        sims = ad.stack([model.item_similarity(a, b),
                         model.item_similarity(a, c)])
        loss = ad.add(loss, ranking_loss(sims, 0, 10.0))
        for task in ("popularity", "category", "local"):
            probs = model.classify(model.kdv(docs[0], cache=cache), task)
            loss = ad.add(loss, ce_loss(probs, 1))
        return ad.add(loss, l2_penalty(model.params, 1e-3))

    return ad.grad_check(objective, model.params, eps=eps,
                         resolution=resolution)

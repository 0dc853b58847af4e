"""Knowledge graph storage and translation-based embedding training.

Entity and relation vectors are trained with a margin ranking objective so
that head + relation is close to tail for true triples, then frozen and
served as features to the aggregation layer.
"""

from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    pass


@dataclass
class KnowledgeGraph:
    entities: list
    relations: list
    triples: list  # (head_id, rel_id, tail_id) integer indices

    def __post_init__(self):
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}
        if len(self.entity_index) != len(self.entities):
            raise GraphError("duplicate entity names")
        if len(self.relation_index) != len(self.relations):
            raise GraphError("duplicate relation names")
        seen = set()
        self.head_index = {}
        for h, r, t in self.triples:
            if not (0 <= h < len(self.entities) and 0 <= t < len(self.entities)):
                raise GraphError(f"triple entity out of vocabulary: {(h, r, t)}")
            if not 0 <= r < len(self.relations):
                raise GraphError(f"triple relation out of vocabulary: {(h, r, t)}")
            if (h, r, t) in seen:
                raise GraphError(f"duplicate triple: {(h, r, t)}")
            seen.add((h, r, t))
            self.head_index.setdefault(h, []).append((r, t))

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_relations(self):
        return len(self.relations)


def load_triples(path):
    """Read a TSV of head<TAB>relation<TAB>tail lines into a graph."""
    entities, relations = [], []
    e_idx, r_idx = {}, {}
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            h, r, t = parts
            for name in (h, t):
                if name not in e_idx:
                    e_idx[name] = len(entities)
                    entities.append(name)
            if r not in r_idx:
                r_idx[r] = len(relations)
                relations.append(r)
            triples.append((e_idx[h], r_idx[r], e_idx[t]))
    return KnowledgeGraph(entities, relations, triples)


def save_triples(graph, path):
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in graph.triples:
            fh.write(f"{graph.entities[h]}\t{graph.relations[r]}\t{graph.entities[t]}\n")


@dataclass
class TransEConfig:
    dim: int = 90
    margin: float = 1.0
    norm: str = "L2"
    lr: float = 0.01
    epochs: int = 100
    batch: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0:
            raise GraphError(f"embedding dim must be positive, got {self.dim}")
        if self.margin <= 0:
            raise GraphError(f"margin must be positive, got {self.margin}")
        if self.norm not in ("L1", "L2"):
            raise GraphError(f"norm must be L1 or L2, got {self.norm}")


@dataclass
class EmbeddingTables:
    entity_emb: np.ndarray  # |E| x d
    relation_emb: np.ndarray  # |R| x d

    @property
    def dim(self):
        return self.entity_emb.shape[1]


def dissimilarity(h, r, t, norm="L2"):
    """Distance between translated head (h + r) and tail t."""
    h, r, t = (np.asarray(v, dtype=np.float64) for v in (h, r, t))
    if not (h.shape == r.shape == t.shape):
        raise GraphError(f"dimension mismatch: {h.shape}, {r.shape}, {t.shape}")
    diff = h + r - t
    if norm == "L1":
        return float(np.abs(diff).sum())
    return float(np.sqrt((diff * diff).sum()))


def margin_loss(f_pos, f_neg, margin):
    """Hinge on the gap between a true triple's score and a corrupted one."""
    return max(0.0, f_pos + margin - f_neg)


def neighbors(graph, head, max_n, seed=0):
    """Outgoing (relation, tail) edges of `head`, capped at max_n.

    Oversized neighborhoods are subsampled uniformly; the seed makes the
    draw reproducible and lets callers resample per epoch. Out-of-graph
    heads yield an empty list so such documents degrade gracefully.
    """
    if max_n < 0:
        raise GraphError(f"max_n must be >= 0, got {max_n}")
    if isinstance(head, str):
        head = graph.entity_index.get(head, -1)
    edges = graph.head_index.get(head, [])
    if len(edges) <= max_n:
        return list(edges)
    rng = np.random.default_rng((seed, head))
    pick = rng.choice(len(edges), size=max_n, replace=False)
    return [edges[i] for i in sorted(pick)]


def _batch_dissim(diff, norm):
    if norm == "L1":
        return np.abs(diff).sum(axis=1)
    return np.sqrt((diff * diff).sum(axis=1))


def train_transe(graph, cfg):
    """Margin-ranking SGD over the triple set, deterministic under seed.

    Each epoch shuffles triples, corrupts head or tail uniformly with an
    in-vocabulary entity (resampling collisions with real triples), takes
    a hinge-loss gradient step, and re-normalizes entity rows to unit L2.
    """
    if not graph.triples:
        raise GraphError("cannot train on an empty graph")
    rng = np.random.default_rng(cfg.seed)
    bound = 6.0 / np.sqrt(cfg.dim)
    ent = rng.uniform(-bound, bound, size=(graph.n_entities, cfg.dim))
    rel = rng.uniform(-bound, bound, size=(graph.n_relations, cfg.dim))
    rel /= np.maximum(np.linalg.norm(rel, axis=1, keepdims=True), 1e-12)
    triple_set = set(graph.triples)
    triples = np.array(graph.triples, dtype=np.int64)

    for _ in range(cfg.epochs):
        ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)
        order = rng.permutation(len(triples))
        for start in range(0, len(order), cfg.batch):
            idx = order[start:start + cfg.batch]
            h, r, t = triples[idx, 0], triples[idx, 1], triples[idx, 2]
            ch, ct = h.copy(), t.copy()
            corrupt_head = rng.random(len(idx)) < 0.5
            repl = rng.integers(0, graph.n_entities, size=len(idx))
            ch[corrupt_head] = repl[corrupt_head]
            ct[~corrupt_head] = repl[~corrupt_head]
            for k in range(len(idx)):
                while (ch[k], r[k], ct[k]) in triple_set:
                    e = int(rng.integers(0, graph.n_entities))
                    if corrupt_head[k]:
                        ch[k] = e
                    else:
                        ct[k] = e

            d_pos = ent[h] + rel[r] - ent[t]
            d_neg = ent[ch] + rel[r] - ent[ct]
            f_pos = _batch_dissim(d_pos, cfg.norm)
            f_neg = _batch_dissim(d_neg, cfg.norm)
            active = f_pos + cfg.margin - f_neg > 0
            if not active.any():
                continue
            if cfg.norm == "L1":
                g_pos = np.sign(d_pos)
                g_neg = np.sign(d_neg)
            else:
                g_pos = d_pos / np.maximum(f_pos, 1e-12)[:, None]
                g_neg = d_neg / np.maximum(f_neg, 1e-12)[:, None]
            g_pos[~active] = 0.0
            g_neg[~active] = 0.0
            step = cfg.lr
            np.add.at(ent, h, -step * g_pos)
            np.add.at(ent, t, step * g_pos)
            np.add.at(rel, r, -step * (g_pos - g_neg))
            np.add.at(ent, ch, step * g_neg)
            np.add.at(ent, ct, -step * g_neg)
    ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)
    return EmbeddingTables(entity_emb=ent, relation_emb=rel)


def rank_candidates(tables, graph, triple, norm="L2"):
    """Rank a true triple against all single-side corruptions.

    Candidates are the triple itself plus every head corruption and every
    tail corruption; returns the 1-based rank of the true triple (ties
    counted pessimistically).
    """
    h, r, t = triple
    ent, rel = tables.entity_emb, tables.relation_emb
    true_f = dissimilarity(ent[h], rel[r], ent[t], norm)
    cand = []
    for e in range(graph.n_entities):
        if e != h:
            cand.append(dissimilarity(ent[e], rel[r], ent[t], norm))
        if e != t:
            cand.append(dissimilarity(ent[h], rel[r], ent[e], norm))
    cand = np.array(cand)
    return 1 + int((cand <= true_f).sum())


def hits_at_k(tables, graph, triples, k, norm="L2"):
    if not triples:
        return 0.0
    hits = sum(rank_candidates(tables, graph, tr, norm) <= k for tr in triples)
    return hits / len(triples)


def export_embeddings(tables, names, path):
    """Write `id<TAB>f1 f2 ... fd` rows at full repr precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, row in zip(names, tables.entity_emb):
            fh.write(name + "\t" + " ".join(repr(float(v)) for v in row)
                     + "\n")


def import_embeddings(path):
    names, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            name, vec = line.split("\t")
            names.append(name)
            rows.append([float(v) for v in vec.split(" ")])
    return names, np.array(rows, dtype=np.float64)

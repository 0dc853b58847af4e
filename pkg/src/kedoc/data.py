"""Corpus ingestion, dataset-construction rules, and the synthetic corpus.

The synthetic generator plants the click signal exclusively in the entity /
knowledge-graph structure: base document vectors are hashed from random
words, so an entity-blind model cannot beat chance while the knowledge path
recovers the signal.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .kg import KnowledgeGraph
from .layers import POSITION_BODY, POSITION_TITLE, VocabularyError


class DataError(ValueError):
    pass


@dataclass
class EntityMention:
    entity_id: str
    position: int  # 1 = title, 2 = body
    frequency: int
    category: int  # entity type id


@dataclass
class DocumentRecord:
    doc_id: str
    category: int
    local: int
    click_count: int
    base_dv: np.ndarray
    mentions: list
    title: str = ""
    body: str = ""


@dataclass
class ImpressionRecord:
    user_id: str
    history: list
    candidate: str
    label: int
    timestamp: int = 0


CONFIDENCE_FLOOR = 0.9  # entities at or below this linking confidence are dropped


def hash_dv(text, n_dv):
    """Feature-hashed bag of words, L2-normalized, platform-stable."""
    vec = np.zeros(n_dv, dtype=np.float64)
    for token in text.lower().split():
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(h, "little") % n_dv] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def load_type_vocab(path):
    """TSV `type_name<TAB>integer_id`."""
    vocab = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns")
            vocab[parts[0]] = int(parts[1])
    return vocab


def _parse_mentions(entities_json, type_vocab, lineno, path):
    try:
        raw = json.loads(entities_json) if entities_json else []
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{lineno}: bad entities json: {e}") from e
    merged = {}
    for ent in raw:
        if ent["confidence"] <= CONFIDENCE_FLOOR:
            continue
        tname = ent["type"]
        if tname not in type_vocab:
            raise VocabularyError(f"{path}:{lineno}: unknown entity type {tname!r}")
        eid = ent["entity_id"]
        prev = merged.get(eid)
        in_title = bool(ent.get("in_title", False))
        count = int(ent.get("count", 1))
        if prev is None:
            merged[eid] = EntityMention(
                entity_id=eid,
                position=POSITION_TITLE if in_title else POSITION_BODY,
                frequency=count,
                category=type_vocab[tname],
            )
        else:
            prev.frequency += count
            if in_title:
                prev.position = POSITION_TITLE
    return list(merged.values())


def ingest_news(path, type_vocab, category_vocab, n_dv=64, dv_fn=None):
    """Parse the news TSV into document records.

    Columns: doc_id, category, local_flag, title, body, entities_json.
    Entities whose linking confidence is not strictly above 0.9 are dropped;
    mentions are deduplicated per entity with title position winning ties
    and frequencies summed over title + body.
    """
    dv_fn = dv_fn or (lambda text: hash_dv(text, n_dv))
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(
                    f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            doc_id, category, local_flag, title, body, entities_json = parts
            if category not in category_vocab:
                raise VocabularyError(
                    f"{path}:{lineno}: unknown category {category!r}")
            mentions = _parse_mentions(entities_json, type_vocab, lineno, path)
            docs.append(DocumentRecord(
                doc_id=doc_id,
                category=category_vocab[category],
                local=int(local_flag),
                click_count=0,
                base_dv=dv_fn(title + " " + body),
                mentions=mentions,
                title=title,
                body=body,
            ))
    return docs


def ingest_behaviors(path):
    """MIND-style behaviors TSV -> one impression record per candidate."""
    impressions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(
                    f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            _, user_id, time_str, history_str, cand_str = parts
            history = history_str.split() if history_str else []
            for token in cand_str.split():
                doc_id, _, label = token.rpartition("-")
                if label not in ("0", "1") or not doc_id:
                    raise DataError(f"{path}:{lineno}: bad candidate {token!r}")
                impressions.append(ImpressionRecord(
                    user_id=user_id, history=list(history), candidate=doc_id,
                    label=int(label), timestamp=int(time_str)))
    return impressions


def filter_users(impressions, min_clicks=5):
    """Drop impressions of users with fewer than min_clicks history clicks."""
    return [im for im in impressions if len(im.history) >= min_clicks]


def build_popularity_labels(docs):
    """Quartile popularity group per document, ties broken by doc id."""
    order = sorted(docs, key=lambda d: (d.click_count, d.doc_id))
    n = len(order)
    labels = {}
    for i, doc in enumerate(order):
        labels[doc.doc_id] = i * 4 // n
    return labels


def click_sets(impressions):
    """doc_id -> set of users who clicked it (history plus positive candidates)."""
    clicks = {}
    for im in impressions:
        for d in im.history:
            clicks.setdefault(d, set()).add(im.user_id)
        if im.label == 1:
            clicks.setdefault(im.candidate, set()).add(im.user_id)
    return clicks


def build_i2i_pairs(impressions, threshold=100, seed=0, ratios=(0.8, 0.1, 0.1)):
    """Co-click positive pairs split deterministically into train/valid/test.

    A pair qualifies when strictly more than `threshold` users clicked both
    documents.
    """
    clicks = click_sets(impressions)
    doc_ids = sorted(clicks)
    pairs = []
    for i, a in enumerate(doc_ids):
        for b in doc_ids[i + 1:]:
            if len(clicks[a] & clicks[b]) > threshold:
                pairs.append((a, b))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    n_train = int(len(pairs) * ratios[0])
    n_valid = int(len(pairs) * ratios[1])
    train = [pairs[i] for i in order[:n_train]]
    valid = [pairs[i] for i in order[n_train:n_train + n_valid]]
    test = [pairs[i] for i in order[n_train + n_valid:]]
    return train, valid, test


@dataclass
class SynthConfig:
    n_communities: int = 5
    hubs_per_community: int = 5
    satellites_per_community: int = 60
    n_types: int = 5
    n_docs: int = 200
    n_users: int = 48
    history_len: int = 6
    impressions_per_user: int = 40
    title_entities: int = 3
    body_entities: int = 2
    noise_entities: int = 40
    noise_edges: int = 4
    n_dv: int = 24
    local_ratio: float = 0.12
    label_noise: float = 0.0
    vocab_words: int = 400
    body_words: int = 40
    seed: int = 0


@dataclass
class SynthCorpus:
    graph: KnowledgeGraph
    docs: list
    impressions: list
    type_vocab: dict
    category_vocab: dict
    doc_community: dict = field(default_factory=dict)
    user_community: dict = field(default_factory=dict)


def synth_corpus(cfg):
    """Generate a community-structured graph, documents, and impressions.

    Each community has hub entities wired in a ring plus satellite entities
    linked to hubs. A document's title mentions satellites of its community;
    body mentions are distractor satellites from other communities. Users
    prefer one community and click candidates whose title entities belong to
    it. Base document vectors hash random words, independent of communities.
    """
    rng = np.random.default_rng(cfg.seed)
    nc = cfg.n_communities
    if nc < 2 or cfg.n_docs < nc or cfg.n_users < 1:
        raise DataError("inconsistent synthetic corpus counts")

    entities, triples = [], []
    hubs = [[] for _ in range(nc)]
    sats = [[] for _ in range(nc)]
    for c in range(nc):
        for i in range(cfg.hubs_per_community):
            hubs[c].append(len(entities))
            entities.append(f"hub_{c}_{i}")
        for i in range(cfg.satellites_per_community):
            sats[c].append(len(entities))
            entities.append(f"sat_{c}_{i}")
    # community-agnostic junk entities shared by all satellites: they blur
    # the satellites' own embeddings while the hub edges stay informative,
    # so neighborhood attention has something real to filter by relation
    junk = []
    for i in range(cfg.noise_entities):
        junk.append(len(entities))
        entities.append(f"junk_{i}")
    relations = ["related_to", "about", "tagged_with"]
    seen = set()

    def add_triple(h, r, t):
        if h != t and (h, r, t) not in seen:
            seen.add((h, r, t))
            triples.append((h, r, t))

    for c in range(nc):
        ring = hubs[c]
        for i, h in enumerate(ring):
            add_triple(h, 0, ring[(i + 1) % len(ring)])
            add_triple(h, 0, ring[(i + 2) % len(ring)])
        for s in sats[c]:
            for h in rng.choice(ring, size=2, replace=False):
                add_triple(s, 1, int(h))
            if junk and cfg.noise_edges > 0:
                for j in rng.choice(junk, size=min(cfg.noise_edges, len(junk)),
                                    replace=False):
                    add_triple(s, 2, int(j))
    graph = KnowledgeGraph(entities, relations, triples)

    type_vocab = {f"type_{i}": i for i in range(cfg.n_types)}
    entity_type = {e: int(rng.integers(0, cfg.n_types)) for e in entities}
    category_vocab = {f"cat_{c}": c for c in range(nc)}
    words = [f"w{i}" for i in range(cfg.vocab_words)]

    n_local = int(round(cfg.local_ratio * cfg.n_docs))
    doc_comm = {}
    docs = []
    local_pool = [i for i in range(cfg.n_docs) if i % nc == 0]
    local_ids = set(rng.choice(local_pool, size=min(n_local, len(local_pool)),
                               replace=False).tolist())
    for i in range(cfg.n_docs):
        c = i % nc
        doc_id = f"d{i:04d}"
        doc_comm[doc_id] = c
        title_sats = rng.choice(sats[c], size=cfg.title_entities, replace=False)
        # distractors come from one wrong community so that title position
        # is what disambiguates the document's own community
        c_wrong = int((c + 1 + rng.integers(0, nc - 1)) % nc)
        body_sats = rng.choice(sats[c_wrong], size=cfg.body_entities,
                               replace=False)
        mentions = []
        for s in title_sats:
            mentions.append(EntityMention(
                entity_id=entities[int(s)], position=POSITION_TITLE,
                frequency=int(rng.integers(1, 4)),
                category=entity_type[entities[int(s)]]))
        for s in body_sats:
            mentions.append(EntityMention(
                entity_id=entities[int(s)], position=POSITION_BODY,
                frequency=int(rng.integers(1, 3)),
                category=entity_type[entities[int(s)]]))
        title = " ".join(rng.choice(words, size=6))
        body = " ".join(rng.choice(words, size=cfg.body_words))
        docs.append(DocumentRecord(
            doc_id=doc_id, category=c, local=int(i in local_ids),
            click_count=0, base_dv=hash_dv(title + " " + body, cfg.n_dv),
            mentions=mentions, title=title, body=body))

    by_comm = [[d.doc_id for d in docs if doc_comm[d.doc_id] == c]
               for c in range(nc)]
    user_comm = {}
    impressions = []
    for u in range(cfg.n_users):
        c = u % nc
        user_id = f"u{u:03d}"
        user_comm[user_id] = c
        history = [str(x) for x in rng.choice(
            by_comm[c], size=min(cfg.history_len, len(by_comm[c])),
            replace=False)]
        pool_pos = [d for d in by_comm[c] if d not in history]
        pool_neg = [d for cc in range(nc) if cc != c for d in by_comm[cc]]
        n_pos = cfg.impressions_per_user // 2
        n_neg = cfg.impressions_per_user - n_pos
        cand_pos = rng.choice(pool_pos, size=min(n_pos, len(pool_pos)),
                              replace=False)
        cand_neg = rng.choice(pool_neg, size=min(n_neg, len(pool_neg)),
                              replace=False)
        cands = [(str(d), 1) for d in cand_pos] + [(str(d), 0) for d in cand_neg]
        order = rng.permutation(len(cands))
        for k, j in enumerate(order):
            d, label = cands[j]
            if cfg.label_noise > 0 and rng.random() < cfg.label_noise:
                label = 1 - label
            impressions.append(ImpressionRecord(
                user_id=user_id, history=list(history), candidate=d,
                label=label, timestamp=k))

    counts = {}
    for im in impressions:
        for d in im.history:
            counts[d] = counts.get(d, 0) + 1
        if im.label == 1:
            counts[im.candidate] = counts.get(im.candidate, 0) + 1
    for d in docs:
        # popularity correlated with community via a community-rank boost
        d.click_count = counts.get(d.doc_id, 0) + 3 * doc_comm[d.doc_id]

    return SynthCorpus(graph=graph, docs=docs, impressions=impressions,
                       type_vocab=type_vocab, category_vocab=category_vocab,
                       doc_community=doc_comm, user_community=user_comm)


def write_corpus(corpus, out_dir):
    """Serialize a corpus to the TSV formats the loaders consume."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    inv_type = {v: k for k, v in corpus.type_vocab.items()}
    inv_cat = {v: k for k, v in corpus.category_vocab.items()}
    with open(os.path.join(out_dir, "triples.tsv"), "w", encoding="utf-8") as fh:
        g = corpus.graph
        for h, r, t in g.triples:
            fh.write(f"{g.entities[h]}\t{g.relations[r]}\t{g.entities[t]}\n")
    with open(os.path.join(out_dir, "types.tsv"), "w", encoding="utf-8") as fh:
        for name, i in sorted(corpus.type_vocab.items(), key=lambda kv: kv[1]):
            fh.write(f"{name}\t{i}\n")
    with open(os.path.join(out_dir, "news.tsv"), "w", encoding="utf-8") as fh:
        for d in corpus.docs:
            ents = [{
                "entity_id": m.entity_id,
                "confidence": 1.0,
                "in_title": m.position == POSITION_TITLE,
                "count": m.frequency,
                "type": inv_type[m.category],
            } for m in d.mentions]
            fh.write("\t".join([
                d.doc_id, inv_cat[d.category], str(d.local), d.title, d.body,
                json.dumps(ents, sort_keys=True),
            ]) + "\n")
    grouped = {}
    for im in corpus.impressions:
        grouped.setdefault(im.user_id, []).append(im)
    with open(os.path.join(out_dir, "behaviors.tsv"), "w", encoding="utf-8") as fh:
        for n, (user_id, ims) in enumerate(sorted(grouped.items()), 1):
            history = " ".join(ims[0].history)
            cands = " ".join(f"{im.candidate}-{im.label}" for im in ims)
            fh.write(f"{n}\t{user_id}\t0\t{history}\t{cands}\n")


def load_corpus(out_dir, n_dv):
    """Load a corpus previously written by write_corpus."""
    import os

    from .kg import load_triples

    graph = load_triples(os.path.join(out_dir, "triples.tsv"))
    type_vocab = load_type_vocab(os.path.join(out_dir, "types.tsv"))
    category_vocab = {}
    with open(os.path.join(out_dir, "news.tsv"), encoding="utf-8") as fh:
        for line in fh:
            cat = line.split("\t")[1]
            if cat not in category_vocab:
                category_vocab[cat] = len(category_vocab)
    docs = ingest_news(os.path.join(out_dir, "news.tsv"), type_vocab,
                       category_vocab, n_dv=n_dv)
    impressions = ingest_behaviors(os.path.join(out_dir, "behaviors.tsv"))
    clicks = click_sets(impressions)
    for d in docs:
        d.click_count = len(clicks.get(d.doc_id, ()))
    return SynthCorpus(graph=graph, docs=docs, impressions=impressions,
                       type_vocab=type_vocab, category_vocab=category_vocab)

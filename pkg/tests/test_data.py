"""Ingestion rules, derived labels, and the synthetic corpus generator."""

import hashlib
import json

import numpy as np
import pytest

from kedoc import data
from kedoc.data import (DataError, DocumentRecord, ImpressionRecord,
                        SynthConfig, VocabularyError, build_i2i_pairs,
                        build_popularity_labels, click_sets, filter_users,
                        hash_dv, ingest_behaviors, ingest_news, synth_corpus,
                        write_corpus)

TYPE_VOCAB = {"person": 0, "place": 1}
CAT_VOCAB = {"news": 0, "sports": 1}


def _write_news(tmp_path, rows):
    path = tmp_path / "news.tsv"
    path.write_text("\n".join("\t".join(r) for r in rows) + "\n",
                    encoding="utf-8")
    return str(path)


def _ent(eid, conf, etype="person", in_title=False, count=1):
    return {"entity_id": eid, "confidence": conf, "type": etype,
            "in_title": in_title, "count": count}


def test_low_confidence_mentions_dropped(tmp_path):
    ents = json.dumps([_ent("E1", 0.85), _ent("E2", 0.9), _ent("E3", 0.95)])
    path = _write_news(tmp_path, [("d1", "news", "0", "t", "b", ents)])
    docs = ingest_news(path, TYPE_VOCAB, CAT_VOCAB, n_dv=8)
    kept = [m.entity_id for m in docs[0].mentions]
    # the floor is strict: exactly 0.9 is still dropped
    assert kept == ["E3"]


def test_duplicate_mentions_merge_frequency_and_title_wins(tmp_path):
    ents = json.dumps([
        _ent("E1", 0.99, in_title=False, count=2),
        _ent("E1", 0.99, in_title=True, count=3),
    ])
    path = _write_news(tmp_path, [("d1", "news", "0", "t", "b", ents)])
    docs = ingest_news(path, TYPE_VOCAB, CAT_VOCAB, n_dv=8)
    assert len(docs[0].mentions) == 1
    m = docs[0].mentions[0]
    assert m.frequency == 5
    assert m.position == data.POSITION_TITLE


def test_unknown_category_and_type_raise(tmp_path):
    path = _write_news(tmp_path, [("d1", "finance", "0", "t", "b", "[]")])
    with pytest.raises(VocabularyError):
        ingest_news(path, TYPE_VOCAB, CAT_VOCAB, n_dv=8)
    ents = json.dumps([_ent("E1", 0.99, etype="animal")])
    path = _write_news(tmp_path, [("d1", "news", "0", "t", "b", ents)])
    with pytest.raises(VocabularyError):
        ingest_news(path, TYPE_VOCAB, CAT_VOCAB, n_dv=8)


def test_bad_column_count_raises(tmp_path):
    path = _write_news(tmp_path, [("d1", "news", "0", "t")])
    with pytest.raises(DataError):
        ingest_news(path, TYPE_VOCAB, CAT_VOCAB, n_dv=8)


def test_hash_dv_matches_manual_oracle():
    n_dv = 16
    vec = np.zeros(n_dv)
    for token in "apple banana apple".lower().split():
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(h, "little") % n_dv] += 1.0
    vec /= np.linalg.norm(vec)
    assert np.allclose(hash_dv("Apple banana APPLE", n_dv), vec)
    assert np.isclose(np.linalg.norm(hash_dv("some words here", n_dv)), 1.0)
    assert np.all(hash_dv("", n_dv) == 0.0)


def test_behaviors_parsing_and_filtering(tmp_path):
    path = tmp_path / "behaviors.tsv"
    path.write_text("1\tu1\t100\td1 d2 d3 d4 d5\td6-1 d7-0\n"
                    "2\tu2\t200\td1\td8-1\n", encoding="utf-8")
    imps = ingest_behaviors(str(path))
    assert len(imps) == 3
    assert imps[0].user_id == "u1" and imps[0].candidate == "d6"
    assert imps[0].label == 1 and imps[1].label == 0
    kept = filter_users(imps, min_clicks=5)
    assert {im.user_id for im in kept} == {"u1"}


def test_behaviors_bad_label_raises(tmp_path):
    path = tmp_path / "behaviors.tsv"
    path.write_text("1\tu1\t100\td1\td2-3\n", encoding="utf-8")
    with pytest.raises(DataError):
        ingest_behaviors(str(path))


def test_popularity_quartiles_match_rank_oracle():
    rng = np.random.default_rng(0)
    docs = [DocumentRecord(doc_id=f"d{i:03d}", category=0, local=0,
                           click_count=int(rng.integers(0, 50)),
                           base_dv=np.zeros(4), mentions=[])
            for i in range(40)]
    labels = build_popularity_labels(docs)
    order = sorted(docs, key=lambda d: (d.click_count, d.doc_id))
    for rank, doc in enumerate(order):
        assert labels[doc.doc_id] == rank * 4 // len(order)
    counts = np.bincount(list(labels.values()), minlength=4)
    assert np.all(counts == 10)


def test_i2i_pairs_match_brute_force_cooccurrence():
    rng = np.random.default_rng(1)
    imps = []
    for u in range(30):
        hist = [f"d{i}" for i in sorted(rng.choice(12, size=5, replace=False))]
        imps.append(ImpressionRecord(user_id=f"u{u}", history=hist,
                                     candidate="d0", label=int(u % 2)))
    threshold = 8
    train, valid, test = build_i2i_pairs(imps, threshold=threshold, seed=0)
    got = set(train) | set(valid) | set(test)
    clicks = click_sets(imps)
    ids = sorted(clicks)
    want = {(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]
            if len(clicks[a] & clicks[b]) > threshold}
    assert got == want
    assert len(got) == len(train) + len(valid) + len(test)


def test_synth_corpus_deterministic_bytes(tmp_path):
    cfg = SynthConfig(n_docs=40, n_users=10, impressions_per_user=8, seed=5)
    for d in ("a", "b"):
        write_corpus(synth_corpus(cfg), str(tmp_path / d))
    for name in ("news.tsv", "behaviors.tsv", "triples.tsv", "types.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes(), name


def test_synth_local_rate_near_target():
    corpus = synth_corpus(SynthConfig(seed=3))
    rate = np.mean([d.local for d in corpus.docs])
    assert 0.05 <= rate <= 0.20


def test_synth_corpus_structurally_valid():
    cfg = SynthConfig(n_docs=60, n_users=12, impressions_per_user=10, seed=2)
    corpus = synth_corpus(cfg)
    assert len(corpus.docs) == cfg.n_docs
    doc_ids = {d.doc_id for d in corpus.docs}
    ents = {corpus.graph.entities[e] for h, _, t in corpus.graph.triples
            for e in (h, t)}
    for d in corpus.docs:
        for m in d.mentions:
            assert m.entity_id in ents
    for im in corpus.impressions:
        assert im.candidate in doc_ids
        assert all(h in doc_ids for h in im.history)
        assert im.label in (0, 1)

"""Layer-level oracles: aggregation, context, distillation, fusion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kedoc import autodiff as ad
from kedoc import layers
from kedoc.autodiff import ParamStore, Tensor
from kedoc.data import DocumentRecord, EntityMention
from kedoc.kg import EmbeddingTables, KnowledgeGraph
from kedoc.layers import POSITION_BODY, POSITION_TITLE

DIM, DV, HID, NTYPES = 5, 4, 6, 3


def setup(seed=0, n_entities=6):
    rng = np.random.default_rng(seed)
    tables = EmbeddingTables(rng.normal(0.0, 0.7, (n_entities, DIM)),
                             rng.normal(0.0, 0.7, (2, DIM)))
    params = ParamStore()
    layers.init_model_params(params, rng, DIM, DV, HID, NTYPES)
    return tables, params


def numpy_entity_repr(entity_id, edges, tables, params):
    """Independent numpy re-computation of the aggregation layer."""
    e_h = tables.entity_emb[entity_id]
    W1 = params["agg.W1"].data
    w2, b1 = params["agg.w2"].data, params["agg.b1"].data
    b2 = params["agg.b2"].data[0]
    if edges:
        logits, tails = [], []
        for r, t in edges:
            x = np.concatenate([e_h, tables.relation_emb[r],
                                tables.entity_emb[t]])
            hidden = np.maximum(W1 @ x + b1, 0.0)
            logits.append(w2 @ hidden + b2)
            tails.append(tables.entity_emb[t])
        logits = np.array(logits)
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        pooled = w @ np.array(tails)
    else:
        pooled = np.zeros(DIM)
    return np.maximum(params["agg.W0"].data @ np.concatenate([e_h, pooled]),
                      0.0)


def test_entity_repr_matches_numpy_oracle():
    tables, params = setup(1)
    edges = [(0, 1), (1, 2), (0, 3)]
    out, weights = layers.entity_repr(0, edges, tables, params)
    want = numpy_entity_repr(0, edges, tables, params)
    assert np.allclose(out.data, want, atol=1e-12)
    assert abs(weights.data.sum() - 1.0) < 1e-12


def test_single_neighbor_weight_is_one():
    tables, params = setup(2)
    _, weights = layers.entity_repr(1, [(0, 2)], tables, params)
    assert weights.data.shape == (1,)
    assert weights.data[0] == pytest.approx(1.0, abs=1e-12)


def test_identical_neighbors_split_evenly():
    tables, params = setup(3)
    _, weights = layers.entity_repr(0, [(1, 4), (1, 4)], tables, params)
    assert np.allclose(weights.data, [0.5, 0.5], atol=1e-12)


def test_empty_neighborhood_pools_zero():
    tables, params = setup(4)
    out, weights = layers.entity_repr(2, [], tables, params)
    assert weights is None
    e_h = tables.entity_emb[2]
    want = np.maximum(
        params["agg.W0"].data @ np.concatenate([e_h, np.zeros(DIM)]), 0.0)
    assert np.allclose(out.data, want, atol=1e-12)


def test_unknown_entity_raises():
    tables, params = setup(5)
    with pytest.raises(layers.VocabularyError):
        layers.entity_repr(99, [], tables, params)


def test_contextualize_is_additive():
    tables, params = setup(6)
    rng = np.random.default_rng(0)
    params["ctx.position"].data[:] = rng.normal(size=(2, DIM))
    params["ctx.frequency"].data[:] = rng.normal(size=(layers.FREQ_CAP, DIM))
    params["ctx.category"].data[:] = rng.normal(size=(NTYPES, DIM))
    base = Tensor(rng.normal(size=DIM))
    m = EntityMention(entity_id="x", position=POSITION_BODY, frequency=7,
                      category=2)
    out = layers.contextualize(base, m, params).data
    want = (base.data + params["ctx.position"].data[1]
            + params["ctx.frequency"].data[6]
            + params["ctx.category"].data[2])
    assert np.allclose(out, want, atol=1e-12)


def test_frequency_clamped_at_cap():
    tables, params = setup(7)
    params["ctx.frequency"].data[:] = np.random.default_rng(1).normal(
        size=(layers.FREQ_CAP, DIM))
    base = Tensor(np.zeros(DIM))
    at_cap = layers.contextualize(base, EntityMention(
        entity_id="x", position=POSITION_TITLE, frequency=20, category=0),
        params).data
    beyond = layers.contextualize(base, EntityMention(
        entity_id="x", position=POSITION_TITLE, frequency=500, category=0),
        params).data
    assert np.array_equal(at_cap, beyond)


def test_context_tables_start_at_zero():
    _, params = setup(8)
    for name in ("ctx.position", "ctx.frequency", "ctx.category"):
        assert np.count_nonzero(params[name].data) == 0


def test_distill_weights_sum_to_one_and_oracle():
    tables, params = setup(9)
    rng = np.random.default_rng(2)
    vecs = [Tensor(rng.normal(size=DIM)) for _ in range(4)]
    v_d = Tensor(rng.normal(size=DV))
    weights, pooled = layers.distill_attention(vecs, v_d, params)
    assert abs(weights.data.sum() - 1.0) < 1e-12
    W1, b1 = params["distill.W1"].data, params["distill.b1"].data
    w2, b2 = params["distill.w2"].data, params["distill.b2"].data[0]
    logits = []
    for v in vecs:
        hidden = np.maximum(W1 @ np.concatenate([v.data, v_d.data]) + b1, 0.0)
        logits.append(w2 @ hidden + b2)
    e = np.exp(logits - np.max(logits))
    want_w = e / e.sum()
    assert np.allclose(weights.data, want_w, atol=1e-12)
    assert np.allclose(pooled.data,
                       want_w @ np.array([v.data for v in vecs]), atol=1e-12)


def test_fuse_matches_numpy():
    tables, params = setup(10)
    rng = np.random.default_rng(3)
    e_o, v_d = Tensor(rng.normal(size=DIM)), Tensor(rng.normal(size=DV))
    out = layers.fuse(e_o, v_d, params).data
    want = np.tanh(params["distill.W3"].data
                   @ np.concatenate([e_o.data, v_d.data])
                   + params["distill.b3"].data)
    assert np.allclose(out, want, atol=1e-12)


def _doc(mentions, dv):
    return DocumentRecord(doc_id="d", category=0, local=0, click_count=0,
                          base_dv=dv, mentions=mentions, title="", body="")


def _graph(n=6):
    ents = [f"e{i}" for i in range(n)]
    triples = [(i, 0, (i + 1) % n) for i in range(n)]
    return KnowledgeGraph(ents, ["r0", "r1"], triples)


def test_kdv_without_entities_reduces_to_fused_dv():
    tables, params = setup(11)
    graph = _graph()
    dv = np.random.default_rng(4).normal(size=DV)
    doc = _doc([], dv)
    out = layers.make_kdv(doc, graph, tables, params)
    want = np.tanh(params["distill.W3"].data
                   @ np.concatenate([np.zeros(DIM), dv])
                   + params["distill.b3"].data)
    assert np.allclose(out.data, want, atol=1e-12)


def test_kdv_identity_fusion_recovers_tanh_dv():
    tables, params = setup(12)
    graph = _graph()
    params["distill.W3"].data[:] = np.concatenate(
        [np.zeros((DV, DIM)), np.eye(DV)], axis=1)
    params["distill.b3"].data[:] = 0.0
    dv = np.random.default_rng(5).normal(size=DV)
    out = layers.make_kdv(_doc([], dv), graph, tables, params)
    assert np.allclose(out.data, np.tanh(dv), atol=1e-12)


def test_kdv_skips_out_of_graph_mentions():
    tables, params = setup(13)
    graph = _graph()
    dv = np.random.default_rng(6).normal(size=DV)
    m = EntityMention(entity_id="unknown", position=POSITION_TITLE,
                      frequency=1, category=0)
    out_u = layers.make_kdv(_doc([m], dv), graph, tables, params)
    out_0 = layers.make_kdv(_doc([], dv), graph, tables, params)
    assert np.array_equal(out_u.data, out_0.data)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_kdv_invariant_under_mention_permutation(seed):
    tables, params = setup(14)
    graph = _graph()
    rng = np.random.default_rng(seed)
    dv = rng.normal(size=DV)
    mentions = [EntityMention(entity_id=f"e{i}",
                              position=POSITION_TITLE if i % 2 else
                              POSITION_BODY,
                              frequency=int(rng.integers(1, 9)),
                              category=int(rng.integers(0, NTYPES)))
                for i in range(4)]
    perm = list(rng.permutation(4))
    a = layers.make_kdv(_doc(mentions, dv), graph, tables, params)
    b = layers.make_kdv(_doc([mentions[i] for i in perm], dv), graph,
                        tables, params)
    assert np.allclose(a.data, b.data, atol=1e-12)


def test_ablation_flags_change_output():
    tables, params = setup(15)
    graph = _graph()
    rng = np.random.default_rng(7)
    params["ctx.position"].data[:] = rng.normal(size=(2, DIM))
    dv = rng.normal(size=DV)
    mentions = [EntityMention(entity_id="e0", position=POSITION_TITLE,
                              frequency=2, category=1),
                EntityMention(entity_id="e3", position=POSITION_BODY,
                              frequency=1, category=0)]
    doc = _doc(mentions, dv)
    full = layers.make_kdv(doc, graph, tables, params).data
    for flag in ("use_entities", "use_aggregation", "use_context",
                 "use_attention"):
        ablated = layers.make_kdv(doc, graph, tables, params,
                                  **{flag: False}).data
        assert not np.allclose(full, ablated)

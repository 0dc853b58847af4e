"""The three document-enhancement layers.

An entity is first represented by attending over its one-hop graph
neighborhood, then shifted by additive position/frequency/category context
vectors, and finally all entity vectors of a document are attention-pooled
under the guidance of the base document vector and fused into an enhanced
document vector of the same dimension.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kg import neighbors as kg_neighbors

FREQ_CAP = 20  # occurrence counts clamp here; rows index min(f, 20) - 1
POSITION_TITLE = 1
POSITION_BODY = 2


class VocabularyError(KeyError):
    pass


def init_model_params(params, rng, entity_dim, dv_dim, hidden, n_types,
                      entity_emb=None, finetune_entities=False):
    """Register every trainable tensor of the document model.

    Context tables start at zero so training begins from the pure graph
    representation. Entity embeddings are frozen features by default;
    `finetune_entities` registers them as trainable for experimentation.
    """
    d, n_dv, h = entity_dim, dv_dim, hidden

    def w(shape, fan_in):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    # near-residual start: the aggregated entity begins life as a blend of
    # its own embedding and the pooled neighborhood instead of a random
    # projection, which keeps the frozen-feature signal intact at step 0
    eye = np.eye(d)
    params.add("agg.W0", np.concatenate([0.7 * eye, 0.3 * eye], axis=1)
               + w((d, 2 * d), 2 * d) * 0.05)
    params.add("agg.W1", w((h, 3 * d), 3 * d))
    params.add("agg.w2", w((h,), h))
    params.add("agg.b1", np.zeros(h))
    params.add("agg.b2", np.zeros(1))
    params.add("ctx.position", np.zeros((2, d)))
    params.add("ctx.frequency", np.zeros((FREQ_CAP, d)))
    params.add("ctx.category", np.zeros((n_types, d)))
    params.add("distill.W1", w((h, d + n_dv), d + n_dv))
    params.add("distill.w2", w((h,), h))
    params.add("distill.b1", np.zeros(h))
    params.add("distill.b2", np.zeros(1))
    params.add("distill.W3", w((n_dv, d + n_dv), d + n_dv))
    params.add("distill.b3", np.zeros(n_dv))
    if finetune_entities:
        if entity_emb is None:
            raise ValueError("finetune_entities requires entity embeddings")
        params.add("entity_emb", entity_emb)


def attention_logit(h_vec, r_vec, t_vec, params):
    """Two-layer scorer for one (head, relation, tail) edge -> scalar."""
    x = ad.concat(ad.concat(h_vec, r_vec), t_vec)
    hidden = ad.relu(ad.add(ad.matmul(params["agg.W1"], x), params["agg.b1"]))
    return ad.add(ad.dot(params["agg.w2"], hidden), ad.take(params["agg.b2"], 0))


def _entity_vec(entity_id, tables, params):
    if "entity_emb" in params:
        return ad.take_row(params["entity_emb"], entity_id)
    return Tensor(tables.entity_emb[entity_id])


def entity_repr(entity_id, neighbor_edges, tables, params):
    """Neighborhood-attentive entity representation.

    Softmax weights over the neighbor edges pool the tail embeddings, the
    pooled vector is concatenated with the entity's own embedding, and a
    ReLU-projected affine map produces the output. Entities with no edges
    pool to the zero vector.
    """
    if entity_id >= tables.entity_emb.shape[0] or entity_id < 0:
        raise VocabularyError(f"unknown entity id {entity_id}")
    d = tables.entity_emb.shape[1]
    e_h = _entity_vec(entity_id, tables, params)
    frozen = "entity_emb" not in params
    if neighbor_edges:
        if frozen:
            # embeddings are constants here, so the n x 3d edge matrix and
            # the tail matrix can be assembled outside the tape
            r_mat = tables.relation_emb[[r for r, _ in neighbor_edges]]
            t_mat = tables.entity_emb[[t for _, t in neighbor_edges]]
            h_mat = np.broadcast_to(e_h.data, t_mat.shape)
            x = Tensor(np.concatenate([h_mat, r_mat, t_mat], axis=1))
            tails = Tensor(t_mat)
        else:
            rows = []
            tail_vecs = []
            for r, t in neighbor_edges:
                r_vec = Tensor(tables.relation_emb[r])
                t_vec = _entity_vec(t, tables, params)
                rows.append(ad.concat(ad.concat(e_h, r_vec), t_vec))
                tail_vecs.append(t_vec)
            x = ad.stack(rows)  # n x 3d
            tails = ad.stack(tail_vecs)
        hidden = ad.relu(ad.add(ad.matmul(x, transpose(params["agg.W1"])),
                                params["agg.b1"]))
        logits = ad.add(ad.matmul(hidden, params["agg.w2"]),
                        ad.take(params["agg.b2"], 0))
        weights = ad.softmax(logits)
        pooled = ad.matmul(weights, tails)
    else:
        weights = None
        pooled = Tensor(np.zeros(d))
    out = ad.relu(ad.matmul(params["agg.W0"], ad.concat(e_h, pooled)))
    return out, weights


def transpose(t):
    """Transpose view as an autodiff op."""
    out = Tensor(t.data.T)
    if t._parents or t.requires_grad:
        out._parents = (t,)

        def backward(g):
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad += g.T

        out._backward = backward
    return out


def contextualize(e_n, mention, params):
    """Add position, clamped-frequency, and category context vectors."""
    if mention.position not in (POSITION_TITLE, POSITION_BODY):
        raise ValueError(f"bad position {mention.position}")
    if mention.frequency < 1:
        raise ValueError(f"frequency must be >= 1, got {mention.frequency}")
    n_types = params["ctx.category"].data.shape[0]
    if not 0 <= mention.category < n_types:
        raise VocabularyError(f"unknown category id {mention.category}")
    f_row = min(mention.frequency, FREQ_CAP) - 1
    out = ad.add(e_n, ad.take_row(params["ctx.position"], mention.position - 1))
    out = ad.add(out, ad.take_row(params["ctx.frequency"], f_row))
    out = ad.add(out, ad.take_row(params["ctx.category"], mention.category))
    return out


def distill_attention(entity_vecs, v_d, params):
    """Pool entity vectors with document-vector-guided attention.

    The base document vector is the query; each contextualized entity
    vector is both key and value. Returns (weights, pooled vector).
    """
    if not entity_vecs:
        raise ValueError("distill_attention requires at least one entity")
    e_mat = ad.stack(entity_vecs)  # n x d
    x = ad.concat(e_mat, ad.stack([v_d] * len(entity_vecs)))
    hidden = ad.relu(ad.add(ad.matmul(x, transpose(params["distill.W1"])),
                            params["distill.b1"]))
    logits = ad.add(ad.matmul(hidden, params["distill.w2"]),
                    ad.take(params["distill.b2"], 0))
    weights = ad.softmax(logits)
    pooled = ad.matmul(weights, e_mat)
    return weights, pooled


def fuse(e_o, v_d, params):
    """Final fusion: tanh affine over pooled-entities (+) document vector."""
    x = ad.concat(e_o, v_d)
    w3 = params["distill.W3"]
    if w3.data.shape[1] != x.data.shape[0]:
        raise ValueError(
            f"fusion shape mismatch: W3 {w3.data.shape} vs input {x.data.shape}")
    return ad.tanh(ad.add(ad.matmul(w3, x), params["distill.b3"]))


def make_kdv(doc, graph, tables, params, max_neighbors=20, neighbor_seed=0,
             use_entities=True, use_aggregation=True, use_context=True,
             use_attention=True, entity_cache=None):
    """Enhanced document vector for one document.

    The `use_*` flags implement the ablation axes: raw embeddings instead
    of neighborhood aggregation, no context vectors, mean pooling instead
    of guided attention, or an entity-blind document (empty entity list).
    `entity_cache` may share pre-context entity representations between
    documents scored under the same parameters (one mini-batch or one
    frozen evaluation pass); the same entity always yields the same node.
    """
    d = tables.entity_emb.shape[1]
    v_d = Tensor(doc.base_dv)
    mentions = doc.mentions if use_entities else []
    entity_vecs = []
    for m in mentions:
        eid = m.entity_id
        if isinstance(eid, str):
            eid = graph.entity_index.get(eid, -1)
        if eid < 0 or eid >= tables.entity_emb.shape[0]:
            continue  # out-of-graph mention
        if entity_cache is not None and eid in entity_cache:
            vec = entity_cache[eid]
        else:
            if use_aggregation:
                edges = kg_neighbors(graph, eid, max_neighbors, neighbor_seed)
                vec, _ = entity_repr(eid, edges, tables, params)
            else:
                vec = _entity_vec(eid, tables, params)
            if entity_cache is not None:
                entity_cache[eid] = vec
        if use_context:
            vec = contextualize(vec, m, params)
        entity_vecs.append(vec)
    if not entity_vecs:
        e_o = Tensor(np.zeros(d))
    elif use_attention:
        _, e_o = distill_attention(entity_vecs, v_d, params)
    else:
        e_o = ad.scale(ad.matmul(Tensor(np.ones(len(entity_vecs))),
                                 ad.stack(entity_vecs)), 1.0 / len(entity_vecs))
    return fuse(e_o, v_d, params)

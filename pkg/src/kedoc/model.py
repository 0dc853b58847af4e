"""Shared document-enhancement backbone plus task heads in one bundle."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import heads, layers
from .autodiff import ParamStore


@dataclass
class ModelConfig:
    entity_dim: int = 90
    dv_dim: int = 64
    hidden: int = 128
    max_neighbors: int = 20
    n_categories: int = 15
    n_types: int = 5
    proj_dim: int = 128
    finetune_entities: bool = False
    # ablation switches
    use_entities: bool = True
    use_aggregation: bool = True
    use_context: bool = True
    use_attention: bool = True
    seed: int = 0


class DocumentModel:
    """Backbone + heads over a frozen knowledge-graph embedding table."""

    def __init__(self, cfg, graph, tables):
        if tables.dim != cfg.entity_dim:
            raise ValueError(
                f"entity table dim {tables.dim} != configured {cfg.entity_dim}")
        self.cfg = cfg
        self.graph = graph
        self.tables = tables
        self.params = ParamStore()
        rng = np.random.default_rng(cfg.seed)
        layers.init_model_params(
            self.params, rng, cfg.entity_dim, cfg.dv_dim, cfg.hidden,
            cfg.n_types, entity_emb=tables.entity_emb,
            finetune_entities=cfg.finetune_entities)
        heads.init_head_params(self.params, rng, cfg.dv_dim,
                               n_categories=cfg.n_categories,
                               proj_dim=cfg.proj_dim)

    def kdv(self, doc, neighbor_seed=0, cache=None):
        if cache is not None and doc.doc_id in cache:
            return cache[doc.doc_id]
        ent_cache = None
        if cache is not None:
            ent_cache = cache.setdefault("__entities__", {})
        out = layers.make_kdv(
            doc, self.graph, self.tables, self.params,
            max_neighbors=self.cfg.max_neighbors, neighbor_seed=neighbor_seed,
            use_entities=self.cfg.use_entities,
            use_aggregation=self.cfg.use_aggregation,
            use_context=self.cfg.use_context,
            use_attention=self.cfg.use_attention, entity_cache=ent_cache)
        if cache is not None:
            cache[doc.doc_id] = out
        return out

    def user_vector(self, history_docs, neighbor_seed=0, cache=None):
        kdvs = [self.kdv(d, neighbor_seed, cache) for d in history_docs]
        return heads.user_vector(kdvs, self.params)

    def score_user_item(self, u, v):
        return heads.score_user_item(u, v, self.params)

    def item_similarity(self, a, b):
        return heads.item_similarity(a, b, self.params)

    def classify(self, v, task):
        return heads.classify(v, task, self.params)

    def kdv_matrix(self, docs, neighbor_seed=0):
        """Inference-time enhanced vectors as a plain array."""
        return np.stack([self.kdv(d, neighbor_seed).data for d in docs])

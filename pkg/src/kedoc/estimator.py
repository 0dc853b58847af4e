"""Scikit-learn style front door for the document encoder.

The heavy lifting lives in `pipeline.run_experiment`; this wraps it in the
familiar fit/transform shape so the encoder can sit inside sklearn
pipelines and grid searches. `fit` consumes a corpus bundle (graph, docs,
impressions), `transform` maps documents to their enhanced vectors.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import DataError
from .model import ModelConfig
from .pipeline import fit_graph_embeddings, run_experiment
from .training import TrainConfig


class KnowledgeDocumentEncoder(BaseEstimator, TransformerMixin):
    """Learn knowledge-enhanced document vectors from a corpus.

    Parameters mirror ModelConfig/TrainConfig; anything not exposed here
    keeps its library default. The training tasks shape the representation;
    the default single ranking task is the cheapest one that forces the
    encoder to use the knowledge graph.
    """

    def __init__(self, entity_dim=16, dv_dim=24, hidden=24, proj_dim=24,
                 max_neighbors=20, tasks=("user2item",), target="user2item",
                 lr=0.002, batch=32, stage1_epochs=18, stage2_epochs=0,
                 patience=10, kg_epochs=12, seed=0):
        self.entity_dim = entity_dim
        self.dv_dim = dv_dim
        self.hidden = hidden
        self.proj_dim = proj_dim
        self.max_neighbors = max_neighbors
        self.tasks = tasks
        self.target = target
        self.lr = lr
        self.batch = batch
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.patience = patience
        self.kg_epochs = kg_epochs
        self.seed = seed

    def fit(self, corpus, y=None):
        """Train graph embeddings and the document model on `corpus`."""
        for attr in ("graph", "docs", "impressions"):
            if not hasattr(corpus, attr):
                raise DataError(f"corpus bundle is missing `{attr}`")
        if not corpus.docs:
            raise DataError("corpus has no documents")
        n_dv = len(corpus.docs[0].base_dv)
        if n_dv != self.dv_dim:
            raise DataError(
                f"dv_dim {self.dv_dim} != corpus vector size {n_dv}")
        n_types = max((m.category for d in corpus.docs for m in d.mentions),
                      default=0) + 1
        n_categories = max(d.category for d in corpus.docs) + 1
        self.tables_ = fit_graph_embeddings(
            corpus.graph, dim=self.entity_dim, seed=self.seed,
            epochs=self.kg_epochs)
        model_cfg = ModelConfig(
            entity_dim=self.entity_dim, dv_dim=self.dv_dim,
            hidden=self.hidden, proj_dim=self.proj_dim,
            max_neighbors=self.max_neighbors, n_categories=n_categories,
            n_types=n_types, seed=self.seed)
        train_cfg = TrainConfig(
            lr=self.lr, batch=self.batch, stage1_epochs=self.stage1_epochs,
            stage2_epochs=self.stage2_epochs, patience=self.patience,
            seed=self.seed)
        exp = run_experiment(corpus, self.tables_, model_cfg, train_cfg,
                             list(self.tasks), self.target)
        self.model_ = exp.model
        self.best_valid_ = exp.best_valid
        return self

    def transform(self, docs):
        """Map documents to their enhanced vectors, one row each."""
        if not hasattr(self, "model_"):
            raise RuntimeError("encoder is not fitted")
        docs = list(docs)
        if not docs:
            return np.zeros((0, self.dv_dim))
        return np.array([self.model_.kdv(d).data for d in docs])

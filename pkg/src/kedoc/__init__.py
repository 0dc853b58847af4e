"""Knowledge-enhanced document representations.

Builds dense document vectors that merge a base text embedding with the
entities the document mentions, using a trained knowledge-graph embedding,
one-hop neighborhood aggregation, mention context features, and an
attention layer that distills the entity set into a single vector. The
resulting representation feeds recommendation, similarity, and document
classification heads trained jointly.
"""

from .autodiff import Tensor, ParamStore, grad_check
from .data import SynthConfig, synth_corpus, write_corpus, load_corpus
from .estimator import KnowledgeDocumentEncoder
from .kg import KnowledgeGraph, TransEConfig, train_transe, load_triples
from .model import DocumentModel, ModelConfig
from .training import TrainConfig, Trainer
from .pipeline import run_experiment, fit_graph_embeddings

__version__ = "0.1.0"

__all__ = [
    "Tensor", "ParamStore", "grad_check",
    "SynthConfig", "synth_corpus", "write_corpus", "load_corpus",
    "KnowledgeDocumentEncoder",
    "KnowledgeGraph", "TransEConfig", "train_transe", "load_triples",
    "DocumentModel", "ModelConfig",
    "TrainConfig", "Trainer",
    "run_experiment", "fit_graph_embeddings",
    "__version__",
]

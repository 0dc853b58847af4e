"""Task-specific predictors on top of shared enhanced document vectors."""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CLS_TASKS = {"popularity": 4, "category": 15, "local": 2}


def init_head_params(params, rng, dv_dim, n_categories=15, proj_dim=128):
    def w(shape, fan_in):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    params.add("user_attn.w", w((dv_dim,), dv_dim))
    params.add("user_attn.b", np.zeros(1))
    # a purely affine scorer would make the user half a constant shift,
    # invisible to the shift-invariant ranking loss; one hidden layer is
    # the minimum that lets user and item interact. Paired rows start the
    # hidden layer as ReLU(u_i + v_i) and ReLU(-u_i - v_i), so with unit
    # output weights the score begins as the alignment kernel sum |u + v|
    # instead of a flat surface that gives the ranking loss no foothold
    W1 = w((proj_dim, 2 * dv_dim), 2 * dv_dim) * 0.1
    w2 = np.zeros(proj_dim)
    k = min(proj_dim // 2, dv_dim)
    eye = np.eye(k)
    W1[:k, :k] += eye
    W1[:k, dv_dim:dv_dim + k] += eye
    W1[k:2 * k, :k] -= eye
    W1[k:2 * k, dv_dim:dv_dim + k] -= eye
    w2[:2 * k] = 1.0 / k
    params.add("u2i.W1", W1)
    params.add("u2i.b1", np.zeros(proj_dim))
    params.add("u2i.w2", w2 + w((proj_dim,), proj_dim) * 0.1)
    params.add("u2i.b2", np.zeros(1))
    params.add("i2i.W", w((proj_dim, dv_dim), dv_dim))
    params.add("i2i.b", np.zeros(proj_dim))
    for task, m in CLS_TASKS.items():
        if task == "category":
            m = n_categories
        params.add(f"cls.{task}.W", w((m, dv_dim), dv_dim))
        params.add(f"cls.{task}.b", np.zeros(m))


def user_vector(history_kdvs, params):
    """Attention-weighted merge of a user's clicked-document vectors."""
    if not history_kdvs:
        raise ValueError("empty click history: cold-start users must be filtered")
    h_mat = ad.stack(history_kdvs)
    logits = ad.add(ad.matmul(h_mat, params["user_attn.w"]),
                    ad.take(params["user_attn.b"], 0))
    weights = ad.softmax(logits)
    return ad.matmul(weights, h_mat)


def score_user_item(u, v, params):
    """One-hidden-layer scorer over the concatenated user and item vectors."""
    if u.data.shape != v.data.shape:
        raise ValueError(f"dim mismatch: {u.data.shape} vs {v.data.shape}")
    x = ad.concat(u, v)
    hidden = ad.relu(ad.add(ad.matmul(params["u2i.W1"], x), params["u2i.b1"]))
    return ad.add(ad.dot(params["u2i.w2"], hidden), ad.take(params["u2i.b2"], 0))


def project_item(v, params):
    """128-dim tanh projection used by the item similarity head."""
    return ad.tanh(ad.add(ad.matmul(params["i2i.W"], v), params["i2i.b"]))


def item_similarity(a, b, params):
    """Cosine similarity of the projected vectors, 0 for a zero projection."""
    pa = project_item(a, params)
    pb = project_item(b, params)
    na = ad.sumsq(pa)
    nb = ad.sumsq(pb)
    if float(na.data) == 0.0 or float(nb.data) == 0.0:
        return Tensor(0.0)
    denom = ad.powc(ad.mul(na, nb), -0.5)
    return ad.mul(ad.dot(pa, pb), denom)


def classify_logits(v, task, params):
    if task not in CLS_TASKS:
        raise ValueError(f"unknown classification task: {task}")
    return ad.add(ad.matmul(params[f"cls.{task}.W"], v),
                  params[f"cls.{task}.b"])


def classify(v, task, params):
    """Class-probability vector for a document-level task."""
    return ad.softmax(classify_logits(v, task, params))

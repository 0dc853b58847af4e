"""Task head behavior: user attention, scoring, similarity, classification."""

import numpy as np
import pytest

from kedoc import autodiff as ad
from kedoc.autodiff import ParamStore, Tensor
from kedoc import heads

DV = 6
PROJ = 8


@pytest.fixture
def params():
    p = ParamStore()
    heads.init_head_params(p, np.random.default_rng(0), DV,
                           n_categories=4, proj_dim=PROJ)
    return p


def test_user_vector_single_history_is_identity(params):
    v = Tensor(np.random.default_rng(1).normal(size=DV))
    out = heads.user_vector([v], params)
    assert np.allclose(out.data, v.data)


def test_user_vector_identical_history_is_identity(params):
    v = Tensor(np.random.default_rng(2).normal(size=DV))
    out = heads.user_vector([v, Tensor(v.data.copy()), Tensor(v.data.copy())],
                            params)
    assert np.allclose(out.data, v.data)


def test_user_vector_is_convex_combination(params):
    rng = np.random.default_rng(3)
    hist = [Tensor(rng.normal(size=DV)) for _ in range(4)]
    out = heads.user_vector(hist, params)
    h_mat = np.stack([h.data for h in hist])
    logits = h_mat @ params["user_attn.w"].data + params["user_attn.b"].data[0]
    w = np.exp(logits - logits.max())
    w /= w.sum()
    assert np.allclose(out.data, w @ h_mat)
    assert np.all(w > 0) and np.isclose(w.sum(), 1.0)


def test_user_vector_empty_history_raises(params):
    with pytest.raises(ValueError):
        heads.user_vector([], params)


def test_score_matches_numpy_oracle(params):
    rng = np.random.default_rng(4)
    u, v = Tensor(rng.normal(size=DV)), Tensor(rng.normal(size=DV))
    s = heads.score_user_item(u, v, params)
    x = np.concatenate([u.data, v.data])
    hid = np.maximum(params["u2i.W1"].data @ x + params["u2i.b1"].data, 0.0)
    want = params["u2i.w2"].data @ hid + params["u2i.b2"].data[0]
    assert np.isclose(s.item(), want)


def test_score_dim_mismatch_raises(params):
    with pytest.raises(ValueError):
        heads.score_user_item(Tensor(np.zeros(DV)), Tensor(np.zeros(DV + 1)),
                              params)


def test_initial_score_tracks_alignment():
    # the paired-row init makes the fresh scorer approximate sum(|u + v|),
    # so an item aligned with the user outscores its negation at step 0
    p = ParamStore()
    heads.init_head_params(p, np.random.default_rng(5), DV,
                           proj_dim=4 * DV)
    rng = np.random.default_rng(6)
    wins = 0
    for _ in range(20):
        u = Tensor(rng.normal(size=DV))
        aligned = heads.score_user_item(u, Tensor(u.data.copy()), p).item()
        opposed = heads.score_user_item(u, Tensor(-u.data), p).item()
        wins += aligned > opposed
    assert wins >= 18


def test_item_similarity_self_is_one(params):
    v = Tensor(np.random.default_rng(7).normal(size=DV))
    assert np.isclose(heads.item_similarity(v, v, params).item(), 1.0)


def test_item_similarity_symmetric_and_bounded(params):
    rng = np.random.default_rng(8)
    a, b = Tensor(rng.normal(size=DV)), Tensor(rng.normal(size=DV))
    s_ab = heads.item_similarity(a, b, params).item()
    s_ba = heads.item_similarity(b, a, params).item()
    assert np.isclose(s_ab, s_ba)
    assert -1.0 - 1e-9 <= s_ab <= 1.0 + 1e-9


def test_item_similarity_matches_cosine_oracle(params):
    rng = np.random.default_rng(9)
    a, b = Tensor(rng.normal(size=DV)), Tensor(rng.normal(size=DV))
    pa = np.tanh(params["i2i.W"].data @ a.data + params["i2i.b"].data)
    pb = np.tanh(params["i2i.W"].data @ b.data + params["i2i.b"].data)
    want = pa @ pb / (np.linalg.norm(pa) * np.linalg.norm(pb))
    assert np.isclose(heads.item_similarity(a, b, params).item(), want)


def test_classify_probabilities_sum_to_one(params):
    v = Tensor(np.random.default_rng(10).normal(size=DV))
    for task in ("popularity", "category", "local"):
        probs = heads.classify(v, task, params)
        assert np.isclose(probs.data.sum(), 1.0)
        assert np.all(probs.data > 0)


def test_classify_logits_oracle(params):
    v = Tensor(np.random.default_rng(11).normal(size=DV))
    out = heads.classify_logits(v, "local", params)
    want = params["cls.local.W"].data @ v.data + params["cls.local.b"].data
    assert np.allclose(out.data, want)


def test_classify_unknown_task_raises(params):
    with pytest.raises(ValueError):
        heads.classify(Tensor(np.zeros(DV)), "sentiment", params)


def test_category_head_respects_configured_class_count(params):
    probs = heads.classify(Tensor(np.zeros(DV)), "category", params)
    assert probs.data.shape == (4,)

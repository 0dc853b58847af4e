"""Checkpoint serialization round trips and sidecar config files."""

import numpy as np
import pytest

from kedoc.autodiff import ParamStore
from kedoc.checkpoint import (FORMAT_VERSION, load_checkpoint, load_sidecar,
                              save_checkpoint, save_sidecar)
from kedoc.model import ModelConfig


def _store(seed):
    rng = np.random.default_rng(seed)
    p = ParamStore()
    p.add("w", rng.normal(size=(7, 3)))
    p.add("b", rng.normal(size=5))
    p.add("scalar", rng.normal(size=1))
    return p


def test_roundtrip_is_bit_exact(tmp_path):
    src = _store(0)
    path = str(tmp_path / "ck.npz")
    save_checkpoint(path, src)
    dst = _store(1)
    load_checkpoint(path, dst)
    for name in src.names():
        assert dst[name].data.tobytes() == src[name].data.tobytes(), name


def test_missing_parameter_rejected(tmp_path):
    path = str(tmp_path / "ck.npz")
    save_checkpoint(path, _store(0))
    dst = _store(1)
    dst.add("extra", np.zeros(2))
    with pytest.raises(KeyError):
        load_checkpoint(path, dst)


def test_shape_mismatch_rejected(tmp_path):
    path = str(tmp_path / "ck.npz")
    save_checkpoint(path, _store(0))
    dst = ParamStore()
    dst.add("w", np.zeros((7, 4)))
    dst.add("b", np.zeros(5))
    dst.add("scalar", np.zeros(1))
    with pytest.raises(ValueError):
        load_checkpoint(path, dst)


def test_version_mismatch_rejected(tmp_path):
    path = str(tmp_path / "ck.npz")
    np.savez(path, __format_version__=np.array(FORMAT_VERSION + 1),
             w=np.zeros(2))
    with pytest.raises(ValueError):
        load_checkpoint(path, _store(0))


def test_sidecar_records_config_and_conventions(tmp_path):
    path = str(tmp_path / "run.json")
    save_sidecar(path, model=ModelConfig(entity_dim=8, dv_dim=12),
                 seed=7, extra={"note": "x"})
    payload = load_sidecar(path)
    assert payload["format_version"] == FORMAT_VERSION
    assert payload["seed"] == 7
    assert payload["model"]["entity_dim"] == 8
    assert payload["model"]["dv_dim"] == 12
    assert "min(frequency, 20) - 1" in payload["frequency_indexing"]

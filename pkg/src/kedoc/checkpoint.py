"""Versioned parameter container with a textual config sidecar."""

import dataclasses
import json

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, params, config=None):
    """Write (name, shape, float64 payload) records; bit-exact round trip."""
    arrays = {name: t.data for name, t in params.items()}
    np.savez(path, __format_version__=np.array(FORMAT_VERSION), **arrays)


def load_checkpoint(path, params):
    with np.load(path) as data:
        version = int(data["__format_version__"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        for name in params.names():
            if name not in data:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            if data[name].shape != params[name].data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: "
                    f"{data[name].shape} vs {params[name].data.shape}")
            params[name].data[...] = data[name]


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _to_jsonable(v)
                for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def save_sidecar(path, **sections):
    """Resolved configuration next to every output, JSON text.

    Records the format version, the seed, and every hyperparameter section
    passed in, including conventions like frequency rows indexing
    min(f, 20) - 1.
    """
    payload = {"format_version": FORMAT_VERSION,
               "frequency_indexing": "row = min(frequency, 20) - 1"}
    payload.update({k: _to_jsonable(v) for k, v in sections.items()})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sidecar(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

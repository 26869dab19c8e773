"""Deterministic on-disk containers for model state and posterior samples.

Both containers are plain .npz archives whose members are fixed-order numpy
arrays plus one JSON metadata blob, so identical in-memory contents always
produce identical bytes.  The state container carries the version tag
``dirbn-state-v1``.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .network import DirBNConfig, DirBNState

__all__ = [
    "STATE_VERSION",
    "SnapshotError",
    "save_state",
    "load_state",
    "save_samples",
    "load_samples",
]

STATE_VERSION = "dirbn-state-v1"


class SnapshotError(RuntimeError):
    """A snapshot file is missing, corrupt, or from an unknown version."""


def _meta_array(meta: dict) -> np.ndarray:
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(blob, dtype=np.uint8)


def _read_meta(archive) -> dict:
    return json.loads(bytes(archive["meta"].tobytes()).decode("utf-8"))


def save_state(
    path,
    state: DirBNState,
    sweep_index: int,
    master_seed: int,
    layer_masses: list[np.ndarray] | None = None,
) -> None:
    """Write the full state plus bookkeeping scalars to ``path``.

    ``layer_masses`` (normalised latent mass per topic from the final sweep)
    rides along so downstream exports stay pure functions of the snapshot.
    """
    cfg = state.config
    meta = {
        "version": STATE_VERSION,
        "config": dataclasses.asdict(cfg),
        "sweep_index": int(sweep_index),
        "master_seed": int(master_seed),
        "eta": float(state.eta),
        "link_rate": [float(v) for v in state.link_rate],
        "shape_budget": [float(v) for v in state.shape_budget],
        "budget_rate": [float(v) for v in state.budget_rate],
    }
    arrays = {"meta": _meta_array(meta)}
    for t, p in enumerate(state.phi):
        arrays[f"phi_{t}"] = np.ascontiguousarray(p, dtype=np.float64)
    for t, b in enumerate(state.link_weights):
        arrays[f"link_weights_{t}"] = np.ascontiguousarray(b, dtype=np.float64)
    for t, g in enumerate(state.link_shape):
        arrays[f"link_shape_{t}"] = np.ascontiguousarray(g, dtype=np.float64)
    if layer_masses is not None:
        for t, m in enumerate(layer_masses):
            arrays[f"mass_{t}"] = np.ascontiguousarray(m, dtype=np.float64)
    np.savez(path, **arrays)


def load_state(path) -> tuple[DirBNState, int, int, list[np.ndarray] | None]:
    """Read a state snapshot; returns (state, sweep_index, master_seed, masses)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"snapshot not found: {path}")
    with np.load(path) as archive:
        meta = _read_meta(archive)
        if meta.get("version") != STATE_VERSION:
            raise SnapshotError(f"unsupported snapshot version {meta.get('version')!r}")
        cfg_kwargs = dict(meta["config"])
        cfg_kwargs["layer_widths"] = tuple(cfg_kwargs["layer_widths"])
        cfg = DirBNConfig(**cfg_kwargs)
        T = cfg.num_layers
        state = DirBNState(
            config=cfg,
            phi=[archive[f"phi_{t}"] for t in range(T)],
            link_weights=[archive[f"link_weights_{t}"] for t in range(T - 1)],
            link_shape=[archive[f"link_shape_{t}"] for t in range(T - 1)],
            link_rate=list(meta["link_rate"]),
            shape_budget=list(meta["shape_budget"]),
            budget_rate=list(meta["budget_rate"]),
            eta=float(meta["eta"]),
        )
        masses = None
        if f"mass_0" in archive:
            masses = [archive[f"mass_{t}"] for t in range(T)]
    return state, int(meta["sweep_index"]), int(meta["master_seed"]), masses


def save_samples(path, theta_samples: np.ndarray, phi1_samples: np.ndarray, meta: dict | None = None) -> None:
    payload = {"kind": "dirbn-samples-v1"}
    if meta:
        payload.update(meta)
    np.savez(
        path,
        meta=_meta_array(payload),
        theta=np.ascontiguousarray(theta_samples, dtype=np.float64),
        phi1=np.ascontiguousarray(phi1_samples, dtype=np.float64),
    )


def load_samples(path) -> tuple[np.ndarray, np.ndarray, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"samples file not found: {path}")
    with np.load(path) as archive:
        meta = _read_meta(archive)
        return archive["theta"], archive["phi1"], meta

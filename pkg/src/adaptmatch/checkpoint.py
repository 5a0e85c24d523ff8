"""Checkpointing: every piece of mutable training state in one npz file.

Arrays (parameters, optimizer velocity, parameter shadow) are stored raw
as float64, so a save/load round trip reproduces them bit for bit.  The
JSON sidecar inside the archive carries the config snapshot, the layer
plan, the threshold state (including its count window), the exact
generator state, and the number of completed iterations - enough to
resume and produce the same numbers an unbroken run would have.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig, config_from_dict, config_to_dict
from .network import Architecture, EmaShadow, Network, SgdMomentum
from .thresholds import ThresholdState

FORMAT_VERSION = 1


def _split_like(vec: np.ndarray, params: list[np.ndarray]) -> list[np.ndarray]:
    out, offset = [], 0
    for p in params:
        out.append(vec[offset : offset + p.size].reshape(p.shape).copy())
        offset += p.size
    if offset != vec.size:
        raise ValueError(f"state vector has {vec.size} entries, expected {offset}")
    return out


def save_checkpoint(
    path,
    *,
    config: TrainConfig,
    arch: Architecture,
    iteration: int,
    network: Network,
    optimizer: SgdMomentum,
    shadow: EmaShadow,
    threshold_state: ThresholdState | None,
    rng: np.random.Generator,
) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "iteration": int(iteration),
        "config": config_to_dict(config),
        "arch": {
            "input_dim": arch.input_dim,
            "hidden": list(arch.hidden),
            "embed_dim": arch.embed_dim,
            "num_classes": arch.num_classes,
            "activation": arch.activation,
            "leaky_slope": arch.leaky_slope,
        },
        "thresholds": None if threshold_state is None else threshold_state.to_dict(),
        "rng_state": rng.bit_generator.state,
    }
    np.savez(
        path,
        params=np.concatenate([p.ravel() for p in network.params]),
        velocity=np.concatenate([v.ravel() for v in optimizer.velocity]),
        shadow=np.concatenate([s.ravel() for s in shadow.shadow]),
        meta=np.asarray(json.dumps(meta, sort_keys=True)),
    )


@dataclass
class LoadedCheckpoint:
    config: TrainConfig
    arch: Architecture
    iteration: int
    params_vec: np.ndarray
    velocity_vec: np.ndarray
    shadow_vec: np.ndarray
    thresholds_payload: dict | None
    rng_state: dict

    def restore(self):
        """Rebuild live training state: (network, optimizer, shadow,
        threshold_state, rng)."""
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = self.rng_state
        net = Network.from_params(self.arch, _shapes_like(self.arch))
        net.set_param_vector(self.params_vec)
        optimizer = SgdMomentum(net.params, lr=self.config.optimizer.lr,
                                momentum=self.config.optimizer.momentum)
        optimizer.velocity = _split_like(self.velocity_vec, net.params)
        shadow = EmaShadow(net.params, decay=self.config.optimizer.shadow_decay)
        shadow.shadow = _split_like(self.shadow_vec, net.params)
        thresholds = (
            None
            if self.thresholds_payload is None
            else ThresholdState.from_dict(self.thresholds_payload)
        )
        return net, optimizer, shadow, thresholds, rng


def _shapes_like(arch: Architecture) -> list[np.ndarray]:
    dims = (*arch.encoder_dims, arch.num_classes)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        params.append(np.zeros((fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def _normalize_rng_state(state):
    """JSON turns the PCG64 state ints into ints already; just validate."""
    if state.get("bit_generator") != "PCG64":
        raise ValueError(f"unsupported generator {state.get('bit_generator')!r}")
    return state


def load_checkpoint(path) -> LoadedCheckpoint:
    with np.load(path, allow_pickle=False) as payload:
        meta = json.loads(str(payload["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        arch_meta = meta["arch"]
        return LoadedCheckpoint(
            config=config_from_dict(meta["config"]),
            arch=Architecture(
                input_dim=arch_meta["input_dim"],
                hidden=tuple(arch_meta["hidden"]),
                embed_dim=arch_meta["embed_dim"],
                num_classes=arch_meta["num_classes"],
                activation=arch_meta["activation"],
                leaky_slope=arch_meta["leaky_slope"],
            ),
            iteration=int(meta["iteration"]),
            params_vec=payload["params"].copy(),
            velocity_vec=payload["velocity"].copy(),
            shadow_vec=payload["shadow"].copy(),
            thresholds_payload=meta["thresholds"],
            rng_state=_normalize_rng_state(meta["rng_state"]),
        )

"""
Versioned JSON checkpoints.

Floats are written with Python's shortest round-trip repr and read back with
``float``, so a save/load cycle reproduces every parameter bit for bit.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from ..core.exceptions import CheckpointError, CheckpointVersionError, ModelSpecMismatchError
from ..core.logging import get_logger
from ..models.checkpoint_models import (
    CHECKPOINT_VERSION,
    AdamStateDocument,
    ChannelStatsDocument,
    CheckpointDocument,
    ParamEntry,
)
from ..models.config_models import ModelSpec
from .datasets import ChannelStats
from .network import HARNetwork
from .training import AdamState

logger = get_logger(__name__)


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: Dict[str, np.ndarray]
    epoch: int
    seed: int
    adam_state: Optional[AdamState] = None
    channel_stats: Optional[ChannelStats] = None
    class_names: List[str] = field(default_factory=list)
    dataset: str = ""
    selection: str = "final"

    @classmethod
    def from_model(cls, model: HARNetwork, epoch: int, **extra) -> "Checkpoint":
        return cls(spec=model.spec, params=model.state_dict(), epoch=epoch, seed=model.seed, **extra)


def _entries(arrays: Dict[str, np.ndarray]) -> List[ParamEntry]:
    return [
        ParamEntry(name=name, shape=list(values.shape), data=values.reshape(-1).tolist())
        for name, values in arrays.items()
    ]


def _arrays(entries: List[ParamEntry]) -> Dict[str, np.ndarray]:
    return {e.name: np.asarray(e.data, dtype=np.float64).reshape(e.shape) for e in entries}


def to_document(ckpt: Checkpoint) -> CheckpointDocument:
    adam = None
    if ckpt.adam_state is not None:
        adam = AdamStateDocument(step=ckpt.adam_state.step, m=_entries(ckpt.adam_state.m), v=_entries(ckpt.adam_state.v))
    stats = None
    if ckpt.channel_stats is not None:
        stats = ChannelStatsDocument(**ckpt.channel_stats.to_dict())
    return CheckpointDocument(
        version=CHECKPOINT_VERSION,
        model_spec=ckpt.spec,
        params=_entries(ckpt.params),
        adam_state=adam,
        epoch=ckpt.epoch,
        seed=ckpt.seed,
        selection=ckpt.selection,
        dataset=ckpt.dataset,
        class_names=ckpt.class_names,
        channel_stats=stats,
    )


def from_document(document: CheckpointDocument) -> Checkpoint:
    adam = None
    if document.adam_state is not None:
        adam = AdamState(step=document.adam_state.step, m=_arrays(document.adam_state.m), v=_arrays(document.adam_state.v))
    stats = None
    if document.channel_stats is not None:
        stats = ChannelStats(mean=document.channel_stats.mean, std=document.channel_stats.std)
    return Checkpoint(
        spec=document.model_spec,
        params=_arrays(document.params),
        epoch=document.epoch,
        seed=document.seed,
        adam_state=adam,
        channel_stats=stats,
        class_names=list(document.class_names),
        dataset=document.dataset,
        selection=document.selection,
    )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = to_document(ckpt).model_dump(mode="json")
    path.write_text(json.dumps(payload, allow_nan=False) + "\n", encoding="utf-8")
    logger.info("Checkpoint saved", path=str(path), epoch=ckpt.epoch, selection=ckpt.selection)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}", "checkpoint_missing")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}", "checkpoint_corrupt")
    if not isinstance(raw, dict):
        raise CheckpointError(f"corrupt checkpoint {path}: top level is not an object", "checkpoint_corrupt")
    if raw.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(raw.get("version"), CHECKPOINT_VERSION)
    try:
        document = CheckpointDocument.model_validate(raw)
    except ValidationError as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e.error_count()} invalid fields", "checkpoint_corrupt")
    return from_document(document)


def restore_model(ckpt: Checkpoint, expected_spec: Optional[ModelSpec] = None) -> HARNetwork:
    """Rebuild the network and load the stored parameters."""
    if expected_spec is not None and expected_spec != ckpt.spec:
        raise ModelSpecMismatchError(
            f"checkpoint holds {ckpt.spec.shorthand()} ({ckpt.spec.variant.value}, "
            f"{ckpt.spec.input_channels}x{ckpt.spec.input_len}), expected "
            f"{expected_spec.shorthand()} ({expected_spec.variant.value}, "
            f"{expected_spec.input_channels}x{expected_spec.input_len})"
        )
    model = HARNetwork(ckpt.spec, seed=ckpt.seed)
    model.load_state_dict(ckpt.params, strict=True)
    return model

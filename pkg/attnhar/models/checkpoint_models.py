from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from .config_models import ModelSpec

CHECKPOINT_VERSION = 1


class ParamEntry(BaseModel):
    """One named array stored as a flat row-major list of decimals."""

    name: str
    shape: List[int]
    data: List[float]

    @model_validator(mode="after")
    def check_size(self):
        size = 1
        for extent in self.shape:
            if extent < 1:
                raise ValueError(f"{self.name}: extents must be positive, got {self.shape}")
            size *= extent
        if size != len(self.data):
            raise ValueError(f"{self.name}: shape {self.shape} needs {size} values, found {len(self.data)}")
        return self


class AdamStateDocument(BaseModel):
    step: int = Field(..., ge=0)
    m: List[ParamEntry] = Field(default=[])
    v: List[ParamEntry] = Field(default=[])


class ChannelStatsDocument(BaseModel):
    mean: List[float]
    std: List[float]


class CheckpointDocument(BaseModel):
    """On-disk checkpoint: spec, parameters, optimizer moments and run provenance."""

    version: int = Field(default=CHECKPOINT_VERSION)
    model_spec: ModelSpec
    params: List[ParamEntry]
    adam_state: Optional[AdamStateDocument] = None
    epoch: int = Field(..., ge=0)
    seed: int
    selection: str = Field(default="final", description="final, or best when chosen on validation accuracy")
    dataset: str = Field(default="")
    class_names: List[str] = Field(default=[])
    channel_stats: Optional[ChannelStatsDocument] = None

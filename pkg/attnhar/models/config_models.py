from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from ..core.config import settings

# Foreground classes of the weakly labeled sequences and their share of the collection
WEAK_CLASS_NAMES = ["going_upstairs", "going_downstairs", "jumping", "jogging"]
WEAK_CLASS_PROPORTIONS = (0.265, 0.244, 0.185, 0.306)


class LayerKind(str, Enum):
    """Layer kinds of the fundamental CNN shorthand."""

    CONV1D = "conv1d"
    MAXPOOL1D = "maxpool1d"
    RELU = "relu"
    DENSE = "dense"
    FLATTEN = "flatten"


class CompatMode(str, Enum):
    """How local features are matched against the global feature."""

    DOT = "dot"
    PC = "pc"


class NormMode(str, Enum):
    """How compatibility scores are turned into attention weights."""

    SOFTMAX = "softmax"
    TANH = "tanh"

    @classmethod
    def parse(cls, value: "str | NormMode") -> "NormMode":
        if isinstance(value, NormMode):
            return value
        return cls.SOFTMAX if value.lower() in ("sm", "softmax") else cls(value.lower())


class Variant(str, Enum):
    """Attention variants: none is the plain CNN, attN attends at the last N levels."""

    NONE = "none"
    ATT = "att"
    ATT2 = "att2"
    ATT3 = "att3"

    @property
    def levels(self) -> int:
        return {"none": 0, "att": 1, "att2": 2, "att3": 3}[self.value]

    @classmethod
    def from_levels(cls, levels: int) -> "Variant":
        return [cls.NONE, cls.ATT, cls.ATT2, cls.ATT3][levels]


class DatasetKind(str, Enum):
    UCIHAR = "ucihar"
    SYNTHETIC = "synthetic"


class LayerSpec(BaseModel):
    """One token of the C(·)-P-FC(·) shorthand."""

    kind: LayerKind
    channels_out: int = Field(default=0, ge=0, description="Output channels (conv) or units (dense)")
    kernel_len: int = Field(default=1, ge=1)
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    tap: bool = Field(default=False, description="Expose this layer's output as a local feature map")

    @model_validator(mode="after")
    def check_width(self):
        if self.kind in (LayerKind.CONV1D, LayerKind.DENSE) and self.channels_out < 1:
            raise ValueError(f"{self.kind.value} layer needs channels_out >= 1")
        return self

    def short_name(self) -> str:
        if self.kind == LayerKind.CONV1D:
            return f"C({self.channels_out})"
        if self.kind == LayerKind.MAXPOOL1D:
            return "P"
        if self.kind == LayerKind.DENSE:
            return f"FC({self.channels_out})"
        return ""


def default_layers(kernel_len: Optional[int] = None, pool_window: Optional[int] = None) -> List[LayerSpec]:
    """C(32)-C(64)-C(128)-P-C(128)-P-C(128)-P-FC(128), ReLU after every conv and FC.

    Convolutions use "same" padding; taps sit on the ReLU output of each C(128)
    before its pooling layer.
    """
    k = kernel_len or settings.CONV_KERNEL_LEN
    p = pool_window or settings.POOL_WINDOW
    pad = (k - 1) // 2

    def conv(width: int) -> LayerSpec:
        return LayerSpec(kind=LayerKind.CONV1D, channels_out=width, kernel_len=k, stride=1, padding=pad)

    def relu(tap: bool = False) -> LayerSpec:
        return LayerSpec(kind=LayerKind.RELU, tap=tap)

    def pool() -> LayerSpec:
        return LayerSpec(kind=LayerKind.MAXPOOL1D, kernel_len=p, stride=p)

    return [
        conv(32), relu(),
        conv(64), relu(),
        conv(128), relu(tap=True), pool(),
        conv(128), relu(tap=True), pool(),
        conv(128), relu(tap=True), pool(),
        LayerSpec(kind=LayerKind.FLATTEN),
        LayerSpec(kind=LayerKind.DENSE, channels_out=128), relu(),
    ]


class ModelSpec(BaseModel):
    """Network layout plus attention configuration."""

    input_len: int = Field(..., ge=1, description="Samples per window")
    input_channels: int = Field(..., ge=1, description="Sensor axes")
    layers: List[LayerSpec]
    attention_levels: int = Field(default=0, ge=0, le=3)
    compat_mode: CompatMode = CompatMode.PC
    norm_mode: NormMode = NormMode.TANH
    num_classes: int = Field(..., ge=2)

    @field_validator("norm_mode", mode="before")
    @classmethod
    def parse_norm_mode(cls, v):
        return NormMode.parse(v) if isinstance(v, str) else v

    @model_validator(mode="after")
    def check_attention_widths(self):
        if self.attention_levels == 0:
            return self
        taps = self.tap_widths()
        if self.attention_levels > len(taps):
            raise ValueError(
                f"attention_levels={self.attention_levels} exceeds the {len(taps)} available taps"
            )
        global_width = self.global_width()
        for width in taps[-self.attention_levels:]:
            if width != global_width:
                raise ValueError(
                    f"tap width {width} differs from global feature width {global_width}"
                )
        return self

    @classmethod
    def default_layout(
        cls,
        input_len: int,
        input_channels: int,
        num_classes: int,
        attention_levels: int = 0,
        compat_mode: CompatMode = CompatMode.PC,
        norm_mode: NormMode = NormMode.TANH,
    ) -> "ModelSpec":
        return cls(
            input_len=input_len,
            input_channels=input_channels,
            layers=default_layers(),
            attention_levels=attention_levels,
            compat_mode=compat_mode,
            norm_mode=norm_mode,
            num_classes=num_classes,
        )

    def tap_widths(self) -> List[int]:
        widths, channels = [], self.input_channels
        for layer in self.layers:
            if layer.kind in (LayerKind.CONV1D, LayerKind.DENSE):
                channels = layer.channels_out
            if layer.tap:
                widths.append(channels)
        return widths

    def global_width(self) -> int:
        dense = [layer for layer in self.layers if layer.kind == LayerKind.DENSE]
        if not dense:
            raise ValueError("layer list has no dense layer producing the global feature")
        return dense[-1].channels_out

    def shorthand(self) -> str:
        tokens = [layer.short_name() for layer in self.layers if layer.short_name()]
        return "-".join(tokens + ["softmax"])

    @property
    def variant(self) -> Variant:
        return Variant.from_levels(self.attention_levels)

    def display_name(self) -> str:
        """CNN, or Net-att2-pc-tanh style names for attention variants."""
        if self.attention_levels == 0:
            return "CNN"
        norm = "sm" if self.norm_mode == NormMode.SOFTMAX else "tanh"
        return f"Net-{self.variant.value}-{self.compat_mode.value}-{norm}"


class TrainConfig(BaseModel):
    """Optimization hyperparameters."""

    epochs: int = Field(default_factory=lambda: settings.TRAIN_EPOCHS, ge=1)
    batch_size: int = Field(default_factory=lambda: settings.TRAIN_BATCH_SIZE, ge=1)
    learning_rate: float = Field(default_factory=lambda: settings.TRAIN_LEARNING_RATE, gt=0)
    beta1: float = Field(default_factory=lambda: settings.ADAM_BETA1, ge=0, lt=1)
    beta2: float = Field(default_factory=lambda: settings.ADAM_BETA2, ge=0, lt=1)
    epsilon: float = Field(default_factory=lambda: settings.ADAM_EPSILON, gt=0)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    shuffle: bool = True


class SynthConfig(BaseModel):
    """Generator parameters for weakly labeled walking-background sequences."""

    num_sequences: int = Field(default_factory=lambda: settings.SYNTH_NUM_SEQUENCES, ge=1)
    seq_len: int = Field(default=2048, ge=8)
    channels: int = Field(default=3, ge=1)
    sample_rate_hz: float = Field(default=50.0, gt=0)
    class_proportions: Tuple[float, float, float, float] = WEAK_CLASS_PROPORTIONS
    segment_len_min: int = Field(default=256, ge=1)
    segment_len_max: int = Field(default=1024, ge=1)
    background_freq_hz: float = Field(default=2.0, gt=0)
    background_amplitude: float = Field(default=1.0, ge=0)
    noise_std: float = Field(default=0.1, ge=0)
    foreground_freqs_hz: Tuple[float, float, float, float] = (1.2, 2.6, 3.6, 3.0)
    foreground_amplitudes: Tuple[float, float, float, float] = (1.2, 1.4, 2.5, 1.8)
    burst_classes: Tuple[int, ...] = (2,)
    burst_rate_hz: float = Field(default=0.5, gt=0)

    @field_validator("class_proportions")
    @classmethod
    def validate_proportions(cls, v):
        if any(p < 0 for p in v):
            raise ValueError("class proportions must be non-negative")
        if abs(sum(v) - 1.0) > 1e-6:
            raise ValueError(f"class proportions must sum to 1, got {sum(v):.6f}")
        return v

    @field_validator("foreground_freqs_hz")
    @classmethod
    def validate_freqs(cls, v):
        if any(f <= 0 for f in v):
            raise ValueError("foreground frequencies must be positive")
        return v

    @field_validator("burst_classes")
    @classmethod
    def validate_burst_classes(cls, v):
        if any(c not in range(len(WEAK_CLASS_NAMES)) for c in v):
            raise ValueError(f"burst classes must lie in 0..{len(WEAK_CLASS_NAMES) - 1}")
        return v

    @model_validator(mode="after")
    def check_segment_range(self):
        if self.segment_len_min > self.segment_len_max:
            raise ValueError("segment_len_min must not exceed segment_len_max")
        if self.segment_len_max > self.seq_len:
            raise ValueError("segment_len_max must not exceed seq_len")
        nyquist = self.sample_rate_hz / 2
        if max(self.foreground_freqs_hz + (self.background_freq_hz,)) * 2 >= nyquist:
            raise ValueError("signal harmonics must stay below the Nyquist frequency")
        return self


class DatasetSpec(BaseModel):
    """Which data a run reads."""

    kind: DatasetKind = DatasetKind.SYNTHETIC
    data_dir: Path = Field(default_factory=lambda: settings.DATA_DIR)
    split: str = Field(default="test", description="Split used by eval/locate")
    subset: Optional[int] = Field(default=None, ge=1, description="Keep only the first N windows of each split")
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @field_validator("split")
    @classmethod
    def validate_split(cls, v):
        if v not in ("train", "val", "test"):
            raise ValueError("split must be one of train, val, test")
        return v


class ModelChoice(BaseModel):
    """Attention variant selected on the command line."""

    variant: Variant = Variant.NONE
    compat_mode: CompatMode = CompatMode.PC
    norm_mode: NormMode = NormMode.TANH

    @field_validator("norm_mode", mode="before")
    @classmethod
    def parse_norm_mode(cls, v):
        return NormMode.parse(v) if isinstance(v, str) else v


class RunConfig(BaseModel):
    """Everything one CLI command needs."""

    command: str
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    model: ModelChoice = Field(default_factory=ModelChoice)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output_dir: Path = Field(default_factory=lambda: settings.OUTPUT_DIR)
    checkpoint: Optional[Path] = None
    density_window: int = Field(default_factory=lambda: settings.DENSITY_WINDOW)
    locate_limit: int = Field(default_factory=lambda: settings.LOCATE_LIMIT, ge=1)
    locate_indices: Optional[List[int]] = None

    @field_validator("density_window")
    @classmethod
    def validate_density_window(cls, v):
        if v < 2 or v % 2:
            raise ValueError("density window w must be an even number >= 2")
        return v

    @model_validator(mode="after")
    def check_command_inputs(self):
        if self.command in ("eval", "locate") and self.checkpoint is None:
            raise ValueError(f"{self.command} requires a checkpoint")
        return self

    @property
    def seed(self) -> int:
        return self.train.seed

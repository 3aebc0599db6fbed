"""
The fundamental CNN C(32)-C(64)-C(128)-P-C(128)-P-C(128)-P-FC(128)-softmax and
its attention variants.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np

from ..core.config import settings
from ..core.exceptions import ModelSpecMismatchError, ShapeError
from ..core.logging import get_logger
from ..models.config_models import LayerKind, ModelSpec
from . import layers
from .attention import AttentionHead, CompatibilityProfile, PooledDescriptor
from .tensor import Tensor, no_grad, parameter

logger = get_logger(__name__)


@dataclass
class ForwardOutput:
    """Everything one forward pass exposes."""

    logits: Tensor
    global_feature: Tensor
    taps: List[Tensor]
    attention: Optional[PooledDescriptor] = None

    def profiles(self, row: int, norm_mode) -> List[CompatibilityProfile]:
        if self.attention is None:
            return []
        return self.attention.profiles(row, norm_mode)


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class HARNetwork:
    """Layer stack from a ModelSpec plus either a G-classifier or an attention head."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._params: Dict[str, Tensor] = {}
        self._plan = []  # (layer spec, param-name prefix or None)
        self.tap_lengths: List[int] = []
        self.tap_strides: List[int] = []

        channels, length, stride_to_raw = spec.input_channels, spec.input_len, 1
        flat_width = None
        counters = {LayerKind.CONV1D: 0, LayerKind.DENSE: 0}
        for index, layer in enumerate(spec.layers):
            prefix = None
            if layer.kind == LayerKind.CONV1D:
                if flat_width is not None:
                    raise ShapeError(f"layer {index}: conv1d after flatten")
                counters[layer.kind] += 1
                prefix = f"conv{counters[layer.kind]}"
                fan_in = channels * layer.kernel_len
                self._add(f"{prefix}.weight", _he_uniform(rng, (layer.channels_out, channels, layer.kernel_len), fan_in))
                self._add(f"{prefix}.bias", np.zeros(layer.channels_out))
                padded = length + 2 * layer.padding
                if padded < layer.kernel_len:
                    raise ShapeError(f"layer {index}: input too short for conv kernel", "L", layer.kernel_len, padded)
                length = (padded - layer.kernel_len) // layer.stride + 1
                stride_to_raw *= layer.stride
                channels = layer.channels_out
            elif layer.kind == LayerKind.MAXPOOL1D:
                if length < layer.kernel_len:
                    raise ShapeError(f"layer {index}: input too short for pooling", "L", layer.kernel_len, length)
                if (length - layer.kernel_len) % layer.stride:
                    raise ShapeError(
                        f"layer {index}: length {length} does not tile pooling {layer.kernel_len}/{layer.stride}",
                        "L",
                        length + layer.stride - (length - layer.kernel_len) % layer.stride,
                        length,
                    )
                length = (length - layer.kernel_len) // layer.stride + 1
                stride_to_raw *= layer.stride
            elif layer.kind == LayerKind.FLATTEN:
                flat_width = channels * length
                channels = flat_width
            elif layer.kind == LayerKind.DENSE:
                if flat_width is None:
                    raise ShapeError(f"layer {index}: dense layer before flatten")
                counters[layer.kind] += 1
                prefix = f"fc{counters[layer.kind]}"
                self._add(f"{prefix}.weight", _he_uniform(rng, (layer.channels_out, channels), channels))
                self._add(f"{prefix}.bias", np.zeros(layer.channels_out))
                channels = layer.channels_out
                flat_width = channels
            if layer.tap:
                self.tap_lengths.append(length)
                self.tap_strides.append(stride_to_raw)
            self._plan.append((layer, prefix))

        self.global_width = channels
        self.head: Optional[AttentionHead] = None
        if spec.attention_levels > 0:
            self.head = AttentionHead(spec.attention_levels, spec.compat_mode, spec.norm_mode, self.global_width)
            for name, tensor in self.head.parameters().items():
                self._params[name] = tensor
            self.classifier_input_width = self.global_width * spec.attention_levels
        else:
            self.classifier_input_width = self.global_width
        self._add(
            "classifier.weight",
            _he_uniform(rng, (spec.num_classes, self.classifier_input_width), self.classifier_input_width),
        )
        self._add("classifier.bias", np.zeros(spec.num_classes))

        logger.debug(
            "Network built",
            shorthand=spec.shorthand(),
            variant=spec.variant.value,
            parameters=self.parameter_count(),
            tap_lengths=self.tap_lengths,
        )

    def _add(self, name: str, values: np.ndarray) -> None:
        self._params[name] = parameter(values, name)

    # ------------------------------------------------------------ parameters
    def parameters(self) -> Dict[str, Tensor]:
        return self._params

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """Copy arrays into the parameters; shapes must match exactly."""
        unknown = sorted(set(state) - set(self._params))
        missing = sorted(set(self._params) - set(state))
        if unknown or (strict and missing):
            raise ModelSpecMismatchError(
                f"Parameter names do not match the model: unknown={unknown}, missing={missing if strict else []}"
            )
        for name, values in state.items():
            values = np.asarray(values, dtype=np.float64)
            target = self._params[name]
            if values.shape != target.shape:
                raise ModelSpecMismatchError(
                    f"Parameter {name} has shape {values.shape}, model expects {target.shape}"
                )
            target.data[...] = values

    @property
    def attention_strides(self) -> List[int]:
        """Cumulative raw-sample stride of each attention level, level 1 first."""
        levels = self.spec.attention_levels
        return self.tap_strides[-levels:] if levels else []

    # --------------------------------------------------------------- forward
    def forward(self, inputs: Union[Tensor, np.ndarray]) -> ForwardOutput:
        x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
        expected = (self.spec.input_channels, self.spec.input_len)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ShapeError(
                f"network expects input [B, {expected[0]}, {expected[1]}], got {x.shape}"
            )
        params = self._params
        taps: List[Tensor] = []
        for layer, prefix in self._plan:
            if layer.kind == LayerKind.CONV1D:
                x = layers.conv1d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], layer.stride, layer.padding)
            elif layer.kind == LayerKind.MAXPOOL1D:
                x = layers.maxpool1d(x, layer.kernel_len, layer.stride)
            elif layer.kind == LayerKind.RELU:
                x = layers.relu(x)
            elif layer.kind == LayerKind.FLATTEN:
                x = layers.flatten(x)
            elif layer.kind == LayerKind.DENSE:
                x = layers.dense(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])
            if layer.tap:
                taps.append(x)

        global_feature = x
        descriptor = None
        if self.head is not None:
            descriptor = self.head(taps[-self.spec.attention_levels:], global_feature)
            features = descriptor.concatenated
        else:
            features = global_feature
        logits = layers.dense(features, params["classifier.weight"], params["classifier.bias"])
        return ForwardOutput(logits=logits, global_feature=global_feature, taps=taps, attention=descriptor)

    __call__ = forward

    def predict_logits(self, windows: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
        """Logits for a [N, C, L] array without recording a graph."""
        batch_size = batch_size or settings.EVAL_BATCH_SIZE
        chunks = []
        with no_grad():
            for start in range(0, windows.shape[0], batch_size):
                chunks.append(self.forward(windows[start:start + batch_size]).logits.data)
        return np.concatenate(chunks, axis=0)


def build_fundamental_cnn(input_len: int, input_channels: int, num_classes: int, seed: int = 0) -> HARNetwork:
    """The plain CNN; taps sit at the three C(128) outputs before pooling."""
    if input_len % 8:
        raise ShapeError(
            "input_len must be divisible by 8 (three stride-2 pools)", "input_len", (input_len // 8 + 1) * 8, input_len
        )
    spec = ModelSpec.default_layout(input_len=input_len, input_channels=input_channels, num_classes=num_classes)
    return HARNetwork(spec, seed=seed)


def build_model(spec: ModelSpec, seed: int = 0) -> HARNetwork:
    """Trunk from ``spec.layers``, then the requested attention variant."""
    base = HARNetwork(spec.model_copy(update={"attention_levels": 0}), seed=seed)
    if spec.attention_levels == 0:
        return base
    from .attention import assemble_attention_model

    return assemble_attention_model(base, spec.attention_levels, spec.compat_mode, spec.norm_mode)

"""
Attention submodule: compatibility scoring, normalization and attention pooling.

Local feature maps L are [B, C, n] tensors (column i is l_i), the global
feature G is [B, C]. Scores and weights are [B, n].
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from ..core.exceptions import ModelSpecMismatchError, NonFiniteError, ShapeError
from ..core.logging import get_logger
from ..models.config_models import CompatMode, NormMode
from .tensor import Tensor, concat, parameter

logger = get_logger(__name__)

TANH_BOUND = np.nextafter(1.0, 0.0)


def _check_local_global(local: Tensor, global_feature: Tensor, op: str) -> None:
    if local.ndim != 3 or global_feature.ndim != 2:
        raise ShapeError(f"{op} expects L [B, C, n] and G [B, C], got {local.shape} and {global_feature.shape}")
    if local.shape[0] != global_feature.shape[0]:
        raise ShapeError(f"{op} batch mismatch", "B", local.shape[0], global_feature.shape[0])
    if local.shape[1] != global_feature.shape[1]:
        raise ShapeError(f"{op} local channels differ from |G|", "C", global_feature.shape[1], local.shape[1])


def compat_dot(local: Tensor, global_feature: Tensor) -> Tensor:
    """c_i = <l_i, G>."""
    _check_local_global(local, global_feature, "compat_dot")
    scores = np.einsum("bcn,bc->bn", local.data, global_feature.data)

    def backward(out: Tensor) -> None:
        grad = out.grad
        if local.requires_grad:
            local.accumulate_grad(global_feature.data[:, :, None] * grad[:, None, :])
        if global_feature.requires_grad:
            global_feature.accumulate_grad(np.einsum("bcn,bn->bc", local.data, grad))

    return Tensor.from_op(scores, (local, global_feature), "compat_dot", backward)


def compat_pc(local: Tensor, global_feature: Tensor, u: Tensor) -> Tensor:
    """c_i = <u, l_i + G> with a learned weight vector u."""
    _check_local_global(local, global_feature, "compat_pc")
    if u.shape != (local.shape[1],):
        raise ShapeError("compat_pc weight vector length differs from C", "C", local.shape[1], u.shape[0])
    scores = np.einsum("c,bcn->bn", u.data, local.data) + (global_feature.data @ u.data)[:, None]

    def backward(out: Tensor) -> None:
        grad = out.grad
        grad_total = grad.sum(axis=1)
        if u.requires_grad:
            u.accumulate_grad(
                np.einsum("bcn,bn->c", local.data, grad) + global_feature.data.T @ grad_total
            )
        if local.requires_grad:
            local.accumulate_grad(u.data[None, :, None] * grad[:, None, :])
        if global_feature.requires_grad:
            global_feature.accumulate_grad(u.data[None, :] * grad_total[:, None])

    return Tensor.from_op(scores, (local, global_feature, u), "compat_pc", backward)


def normalize_softmax(scores: Tensor) -> Tensor:
    """a_i = exp(c_i) / sum_j exp(c_j) along the location axis."""
    if not np.isfinite(scores.data).all():
        raise NonFiniteError("normalize_softmax received non-finite scores", parameter="scores")
    shifted = scores.data - scores.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    weights = exp / exp.sum(axis=-1, keepdims=True)

    def backward(out: Tensor) -> None:
        grad = out.grad
        inner = (grad * weights).sum(axis=-1, keepdims=True)
        scores.accumulate_grad(weights * (grad - inner))

    return Tensor.from_op(weights, (scores,), "normalize_softmax", backward)


def normalize_tanh(scores: Tensor) -> Tensor:
    """a_i = tanh(c_i), pointwise and not jointly normalized.

    tanh rounds to exactly +-1.0 in float64 once |c_i| exceeds about 19, so the
    weights are clipped to the largest doubles inside (-1, 1).
    """
    if not np.isfinite(scores.data).all():
        raise NonFiniteError("normalize_tanh received non-finite scores", parameter="scores")
    weights = np.clip(np.tanh(scores.data), -TANH_BOUND, TANH_BOUND)

    def backward(out: Tensor) -> None:
        scores.accumulate_grad(out.grad * (1.0 - weights * weights))

    return Tensor.from_op(weights, (scores,), "normalize_tanh", backward)


def attend_pool(local: Tensor, weights: Tensor) -> Tensor:
    """g = sum_i a_i * l_i, giving [B, C]."""
    if local.ndim != 3 or weights.ndim != 2:
        raise ShapeError(f"attend_pool expects L [B, C, n] and a [B, n], got {local.shape} and {weights.shape}")
    if local.shape[0] != weights.shape[0]:
        raise ShapeError("attend_pool batch mismatch", "B", local.shape[0], weights.shape[0])
    if local.shape[2] != weights.shape[1]:
        raise ShapeError("attend_pool location count mismatch", "n", local.shape[2], weights.shape[1])
    pooled = np.einsum("bcn,bn->bc", local.data, weights.data)

    def backward(out: Tensor) -> None:
        grad = out.grad
        if local.requires_grad:
            local.accumulate_grad(grad[:, :, None] * weights.data[:, None, :])
        if weights.requires_grad:
            weights.accumulate_grad(np.einsum("bcn,bc->bn", local.data, grad))

    return Tensor.from_op(pooled, (local, weights), "attend_pool", backward)


@dataclass
class CompatibilityProfile:
    """Scores and normalized weights of one attention level for one sequence."""

    level: int
    scores: np.ndarray
    weights: np.ndarray
    norm_mode: NormMode

    def __post_init__(self):
        if self.scores.shape != self.weights.shape or self.scores.ndim != 1:
            raise ShapeError(
                f"profile scores {self.scores.shape} and weights {self.weights.shape} must be equal-length vectors"
            )

    @property
    def n(self) -> int:
        return int(self.scores.shape[0])

    def rows(self) -> List[Tuple[int, int, float, float]]:
        """CSV rows (level, index, score, weight)."""
        return [
            (self.level, i, float(score), float(weight))
            for i, (score, weight) in enumerate(zip(self.scores, self.weights))
        ]


@dataclass
class AttentionLevel:
    """Batched tensors produced at one attention level."""

    level: int
    scores: Tensor
    weights: Tensor
    pooled: Tensor


@dataclass
class PooledDescriptor:
    """Per-level g^s vectors and their concatenation g = [g^1 ... g^S]."""

    per_level: List[AttentionLevel]
    concatenated: Tensor

    def profiles(self, row: int, norm_mode: NormMode) -> List[CompatibilityProfile]:
        return [
            CompatibilityProfile(
                level=level.level,
                scores=level.scores.data[row].copy(),
                weights=level.weights.data[row].copy(),
                norm_mode=norm_mode,
            )
            for level in self.per_level
        ]


class AttentionHead:
    """Compatibility + normalization + pooling over the last S tapped feature maps."""

    def __init__(self, levels: int, compat_mode: CompatMode, norm_mode: NormMode, width: int):
        self.levels = levels
        self.compat_mode = compat_mode
        self.norm_mode = norm_mode
        self.width = width
        # One u per level, zero-initialized.
        self.u: List[Tensor] = []
        if compat_mode == CompatMode.PC:
            self.u = [parameter(np.zeros(width), f"attention.u{s}") for s in range(1, levels + 1)]

    def parameters(self) -> Dict[str, Tensor]:
        return {tensor.name: tensor for tensor in self.u}

    def __call__(self, taps: List[Tensor], global_feature: Tensor) -> PooledDescriptor:
        if len(taps) != self.levels:
            raise ShapeError("attention head received the wrong number of taps", "S", self.levels, len(taps))
        per_level = []
        for s, local in enumerate(taps, start=1):
            if self.compat_mode == CompatMode.PC:
                scores = compat_pc(local, global_feature, self.u[s - 1])
            else:
                scores = compat_dot(local, global_feature)
            if self.norm_mode == NormMode.SOFTMAX:
                weights = normalize_softmax(scores)
            else:
                weights = normalize_tanh(scores)
            per_level.append(AttentionLevel(s, scores, weights, attend_pool(local, weights)))
        return PooledDescriptor(per_level, concat([lvl.pooled for lvl in per_level], axis=1))


def assemble_attention_model(base, levels: int, compat_mode: CompatMode, norm_mode: NormMode, seed: Optional[int] = None):
    """Turn a fundamental CNN into Net-att / Net-att2 / Net-att3.

    The convolutional trunk and FC(128) weights are carried over; the classifier
    on G is replaced by one reading the concatenated descriptor g.
    """
    from .network import HARNetwork

    spec = base.spec
    taps = spec.tap_widths()
    if levels > len(taps):
        raise ShapeError("attention levels exceed available taps", "S", len(taps), levels)
    new_spec = spec.model_copy(
        update={"attention_levels": levels, "compat_mode": compat_mode, "norm_mode": norm_mode}
    )
    # Re-run validation on the updated spec (tap widths vs. |G|).
    try:
        new_spec = type(spec).model_validate(new_spec.model_dump())
    except ValidationError as e:
        raise ModelSpecMismatchError(f"cannot attach {levels} attention levels: {e.errors()[0]['msg']}")
    model = HARNetwork(new_spec, seed=base.seed if seed is None else seed)
    trunk = {name: value for name, value in base.state_dict().items() if not name.startswith("classifier.")}
    model.load_state_dict(trunk, strict=False)
    logger.info(
        "Attention model assembled",
        variant=new_spec.variant.value,
        compat_mode=compat_mode.value,
        norm_mode=norm_mode.value,
        classifier_input=model.classifier_input_width,
    )
    return model

"""
Differentiable layer operations on [batch, channels, length] tensors.
"""
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.exceptions import ShapeError
from .tensor import Tensor

_branch_log: ContextVar[Optional[List[np.ndarray]]] = ContextVar("branch_log", default=None)


@contextmanager
def record_branches() -> Iterator[List[np.ndarray]]:
    """Collect the ReLU masks and max-pool argmax choices made inside the block."""
    log: List[np.ndarray] = []
    token = _branch_log.set(log)
    try:
        yield log
    finally:
        _branch_log.reset(token)


def _note_branch(choice: np.ndarray) -> None:
    log = _branch_log.get()
    if log is not None:
        log.append(choice)


def _require_ndim(tensor: Tensor, ndim: int, op: str, layout: str) -> None:
    if tensor.ndim != ndim:
        raise ShapeError(f"{op} expects a {ndim}-d tensor {layout}, got shape {tensor.shape}")


def conv1d(input: Tensor, weights: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [B, C_in, L] with [C_out, C_in, K] kernels plus per-channel bias."""
    _require_ndim(input, 3, "conv1d", "[B, C_in, L]")
    _require_ndim(weights, 3, "conv1d", "[C_out, C_in, K]")
    batch, c_in, length = input.shape
    c_out, w_in, kernel = weights.shape
    if w_in != c_in:
        raise ShapeError("conv1d input channels do not match kernel", "C_in", w_in, c_in)
    if bias.shape != (c_out,):
        raise ShapeError("conv1d bias does not match output channels", "C_out", c_out, bias.shape[0])
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv1d needs stride >= 1 and padding >= 0, got {stride}/{padding}")
    padded_len = length + 2 * padding
    if padded_len < kernel:
        raise ShapeError("conv1d kernel longer than padded input", "L", kernel, padded_len)

    xp = np.pad(input.data, ((0, 0), (0, 0), (padding, padding))) if padding else input.data
    # [B, C_in, L_out, K]
    windows = sliding_window_view(xp, kernel, axis=2)[:, :, ::stride, :]
    out_len = windows.shape[2]
    out = np.tensordot(windows, weights.data, axes=([1, 3], [1, 2]))  # [B, L_out, C_out]
    out = np.ascontiguousarray(out.transpose(0, 2, 1)) + bias.data[None, :, None]

    def backward(result: Tensor) -> None:
        grad = result.grad
        if weights.requires_grad:
            weights.accumulate_grad(np.tensordot(grad, windows, axes=([0, 2], [0, 2])))
        if bias.requires_grad:
            bias.accumulate_grad(grad.sum(axis=(0, 2)))
        if input.requires_grad:
            # [B, L_out, C_in, K] -> [B, C_in, L_out, K]
            grad_windows = np.tensordot(grad, weights.data, axes=([1], [0])).transpose(0, 2, 1, 3)
            grad_padded = np.zeros((batch, c_in, padded_len))
            span = stride * (out_len - 1) + 1
            for k in range(kernel):
                grad_padded[:, :, k:k + span:stride] += grad_windows[:, :, :, k]
            input.accumulate_grad(grad_padded[:, :, padding:padding + length])

    return Tensor.from_op(out, (input, weights, bias), "conv1d", backward)


def maxpool1d(input: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """Max over sliding windows; the gradient goes to the first maximal position."""
    _require_ndim(input, 3, "maxpool1d", "[B, C, L]")
    batch, channels, length = input.shape
    if window < 1 or stride < 1:
        raise ShapeError(f"maxpool1d needs window >= 1 and stride >= 1, got {window}/{stride}")
    if length < window:
        raise ShapeError("maxpool1d input shorter than window", "L", window, length)

    windows = sliding_window_view(input.data, window, axis=2)[:, :, ::stride, :]
    argmax = windows.argmax(axis=-1)  # first occurrence on ties
    _note_branch(argmax)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    positions = np.arange(out.shape[2])[None, None, :] * stride + argmax

    def backward(result: Tensor) -> None:
        grad_input = np.zeros((batch, channels, length))
        if window <= stride:
            np.put_along_axis(grad_input, positions, result.grad, axis=2)
        else:
            rows = np.arange(batch)[:, None, None]
            cols = np.arange(channels)[None, :, None]
            np.add.at(grad_input, (rows, cols, positions), result.grad)
        input.accumulate_grad(grad_input)

    return Tensor.from_op(np.ascontiguousarray(out), (input,), "maxpool1d", backward)


def relu(input: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    mask = input.data > 0
    _note_branch(mask)

    def backward(result: Tensor) -> None:
        input.accumulate_grad(result.grad * mask)

    return Tensor.from_op(np.where(mask, input.data, 0.0), (input,), "relu", backward)


def dense(input: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map [B, N] x [M, N]^T + [M]."""
    _require_ndim(input, 2, "dense", "[B, N]")
    _require_ndim(weights, 2, "dense", "[M, N]")
    if weights.shape[1] != input.shape[1]:
        raise ShapeError("dense input width does not match weights", "N", weights.shape[1], input.shape[1])
    if bias.shape != (weights.shape[0],):
        raise ShapeError("dense bias does not match output width", "M", weights.shape[0], bias.shape[0])

    def backward(result: Tensor) -> None:
        grad = result.grad
        if input.requires_grad:
            input.accumulate_grad(grad @ weights.data)
        if weights.requires_grad:
            weights.accumulate_grad(grad.T @ input.data)
        if bias.requires_grad:
            bias.accumulate_grad(grad.sum(axis=0))

    return Tensor.from_op(input.data @ weights.data.T + bias.data, (input, weights, bias), "dense", backward)


def flatten(input: Tensor) -> Tensor:
    """[B, ...] -> [B, prod(...)]."""
    return input.reshape(input.shape[0], -1)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    _require_ndim(logits, 2, "softmax_cross_entropy", "[B, K]")
    batch, num_classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch,):
        raise ShapeError("labels do not match logits batch", "B", batch, labels.shape[0] if labels.ndim else 0)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ShapeError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    loss = np.mean(log_norm - shifted[rows, labels])

    def backward(result: Tensor) -> None:
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        logits.accumulate_grad(probs * (result.grad / batch))

    return Tensor.from_op(np.array(loss), (logits,), "softmax_cross_entropy", backward)


def softmax(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax on a plain array."""
    shifted = values - values.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)

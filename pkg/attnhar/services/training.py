"""
Adam optimization, the mini-batch training loop and classification metrics.
"""
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..core.config import settings
from ..core.exceptions import DatasetError, ModelSpecMismatchError, NonFiniteError, NonFiniteLossError, ShapeError
from ..core.logging import get_logger
from ..models.config_models import TrainConfig
from ..models.result_models import EpochRecord, EvaluationReport, TrainHistory
from .datasets import SequenceDataset
from .layers import softmax_cross_entropy
from .network import HARNetwork
from .tensor import Tensor

logger = get_logger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates per parameter name."""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(
            step=self.step,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    if set(params) != set(grads):
        raise ShapeError(f"gradients given for {sorted(grads)} but parameters are {sorted(params)}")
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"gradient of {name} has shape {grad.shape}, parameter has {value.shape}")
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        if m.shape != value.shape or v.shape != value.shape:
            raise ShapeError(f"optimizer moments of {name} do not match shape {value.shape}")
        m = config.beta1 * m + (1 - config.beta1) * grad
        v = config.beta2 * v + (1 - config.beta2) * grad * grad
        m_hat = m / (1 - config.beta1 ** step)
        v_hat = v / (1 - config.beta2 ** step)
        new_params[name] = value - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(step=step, m=new_m, v=new_v)


class Adam:
    """Applies ``adam_step`` to a model's parameter tensors in place."""

    def __init__(self, params: Dict[str, Tensor], config: TrainConfig, state: Optional[AdamState] = None):
        self.params = params
        self.config = config
        self.state = state or AdamState()

    def step(self) -> None:
        values = {name: t.data for name, t in self.params.items()}
        grads = {name: t.grad if t.grad is not None else np.zeros_like(t.data) for name, t in self.params.items()}
        updated, self.state = adam_step(values, grads, self.state, self.config)
        for name, tensor in self.params.items():
            tensor.data[...] = updated[name]


@dataclass
class TrainResult:
    history: TrainHistory
    final_state: Dict[str, np.ndarray]
    optimizer_state: AdamState
    best_state: Optional[Dict[str, np.ndarray]] = None
    best_epoch: Optional[int] = None
    seconds: float = 0.0

    @property
    def epochs_completed(self) -> int:
        return len(self.history)

    @property
    def selected_state(self) -> Dict[str, np.ndarray]:
        """Best-validation weights when a validation split was used, final weights otherwise."""
        return self.best_state if self.best_state is not None else self.final_state

    @property
    def selected_epoch(self) -> int:
        return self.best_epoch if self.best_epoch is not None else self.epochs_completed


def check_compatible(model: HARNetwork, dataset: SequenceDataset) -> None:
    spec = model.spec
    if dataset.num_channels != spec.input_channels or dataset.seq_len != spec.input_len:
        raise ModelSpecMismatchError(
            f"dataset windows are [{dataset.num_channels}, {dataset.seq_len}], "
            f"model expects [{spec.input_channels}, {spec.input_len}]"
        )
    if dataset.num_classes != spec.num_classes:
        raise ModelSpecMismatchError(
            f"dataset has {dataset.num_classes} classes, model predicts {spec.num_classes}"
        )


def accuracy(model: HARNetwork, dataset: SequenceDataset, batch_size: Optional[int] = None) -> float:
    predictions = model.predict_logits(dataset.windows, batch_size).argmax(axis=1)
    return float((predictions == dataset.labels).mean())


def train(
    model: HARNetwork,
    train_set: SequenceDataset,
    val_set: Optional[SequenceDataset],
    config: TrainConfig,
    optimizer_state: Optional[AdamState] = None,
) -> TrainResult:
    """Minimize mean cross-entropy over shuffled mini-batches, keeping the last partial batch."""
    if len(train_set) == 0:
        raise DatasetError("training split is empty")
    check_compatible(model, train_set)
    if val_set is not None and len(val_set) == 0:
        val_set = None
    if val_set is not None:
        check_compatible(model, val_set)

    optimizer = Adam(model.parameters(), config, optimizer_state)
    history = TrainHistory()
    best_acc, best_state, best_epoch = -1.0, None, None
    total = len(train_set)
    started = time.perf_counter()

    logger.info(
        "Training started",
        model=model.spec.shorthand(),
        variant=model.spec.variant.value,
        windows=total,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        seed=config.seed,
    )
    for epoch in range(1, config.epochs + 1):
        epoch_start = time.perf_counter()
        order = np.random.default_rng([config.seed, epoch]).permutation(total) if config.shuffle else np.arange(total)
        loss_sum, correct = 0.0, 0
        batches = range(0, total, config.batch_size)
        progress = tqdm(
            batches,
            desc=f"epoch {epoch}/{config.epochs}",
            unit="batch",
            leave=False,
            disable=not settings.SHOW_PROGRESS,
        )
        for batch_index, start in enumerate(progress):
            idx = order[start:start + config.batch_size]
            labels = train_set.labels[idx]
            model.zero_grad()
            try:
                output = model(train_set.windows[idx])
                loss = softmax_cross_entropy(output.logits, labels)
                loss.backward()
            except NonFiniteError as e:
                raise NonFiniteLossError(epoch, batch_index, float("nan")) from e
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLossError(epoch, batch_index, value)
            optimizer.step()
            loss_sum += value * len(idx)
            correct += int((output.logits.data.argmax(axis=1) == labels).sum())
            progress.set_postfix(loss=f"{value:.4f}")

        val_acc = accuracy(model, val_set) if val_set is not None else None
        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / total,
            train_acc=correct / total,
            val_acc=val_acc,
            seconds=time.perf_counter() - epoch_start,
        )
        history.append(record)
        logger.info(
            "Epoch completed",
            epoch=epoch,
            loss=round(record.loss, 6),
            train_acc=round(record.train_acc, 4),
            val_acc=None if val_acc is None else round(val_acc, 4),
            seconds=round(record.seconds, 2),
        )
        if val_acc is not None and val_acc > best_acc:
            best_acc, best_state, best_epoch = val_acc, model.state_dict(), epoch
            logger.info("New best validation accuracy", epoch=epoch, val_acc=round(val_acc, 4))

    return TrainResult(
        history=history,
        final_state=model.state_dict(),
        optimizer_state=optimizer.state.copy(),
        best_state=best_state,
        best_epoch=best_epoch,
        seconds=time.perf_counter() - started,
    )


def evaluate(model: HARNetwork, dataset: SequenceDataset, batch_size: Optional[int] = None) -> EvaluationReport:
    """Accuracy, per-class accuracy, confusion matrix and forward-pass throughput."""
    if len(dataset) == 0:
        raise DatasetError("cannot evaluate on an empty dataset")
    check_compatible(model, dataset)
    batch_size = batch_size or settings.EVAL_BATCH_SIZE

    chunks, forward_seconds = [], 0.0
    for start in range(0, len(dataset), batch_size):
        batch = dataset.windows[start:start + batch_size]
        tick = time.perf_counter()
        chunks.append(model.predict_logits(batch, batch_size))
        forward_seconds += time.perf_counter() - tick
    predictions = np.concatenate(chunks).argmax(axis=1)

    k = dataset.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (dataset.labels, predictions), 1)
    row_sums = confusion.sum(axis=1)
    per_class = {
        name: (float(confusion[i, i] / row_sums[i]) if row_sums[i] else None)
        for i, name in enumerate(dataset.class_names)
    }
    report = EvaluationReport(
        num_sequences=len(dataset),
        accuracy=float(np.trace(confusion) / len(dataset)),
        per_class_accuracy=per_class,
        confusion_matrix=confusion.tolist(),
        class_names=list(dataset.class_names),
        throughput_seqs_per_s=len(dataset) / max(forward_seconds, 1e-9),
        forward_seconds=forward_seconds,
    )
    logger.info(
        "Evaluation finished",
        dataset=dataset.name,
        windows=len(dataset),
        accuracy=round(report.accuracy, 4),
        throughput=round(report.throughput_seqs_per_s, 1),
    )
    return report

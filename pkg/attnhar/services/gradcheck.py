"""
Central finite-difference verification of every differentiable operation.

Each suite case builds, from a seeded generator, a scalar loss closure and the
tensors it differentiates with respect to. ``grad_check`` compares the
backward pass against (f(x+h) - f(x-h)) / 2h on a sample of elements of every
tensor. An element whose perturbation flips a ReLU mask or a max-pool choice
sits on a kink of the loss and is skipped.
"""
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..core.config import settings
from ..core.exceptions import ConfigurationError, HARError, NonFiniteError
from ..core.logging import get_logger
from ..models.config_models import CompatMode, ModelSpec, NormMode
from ..models.result_models import GradCheckResult
from . import attention, layers
from .network import build_fundamental_cnn, build_model
from .tensor import Tensor, concat, no_grad, parameter

logger = get_logger(__name__)

LossClosure = Callable[[], Tensor]
GradCheckCase = Callable[[np.random.Generator], Tuple[LossClosure, Dict[str, Tensor]]]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def element_error(analytic: float, numeric: float, floor: float) -> float:
    """Relative error, or the absolute difference in units of ``floor`` when both values lie below it."""
    if max(abs(analytic), abs(numeric)) < floor:
        return abs(analytic - numeric) / floor
    return relative_error(analytic, numeric)


def _evaluate(loss_fn: LossClosure) -> Tuple[float, List[np.ndarray]]:
    with no_grad(), layers.record_branches() as branches:
        value = loss_fn().item()
    return value, branches


def _same_branches(first: List[np.ndarray], second: List[np.ndarray]) -> bool:
    return len(first) == len(second) and all(np.array_equal(a, b) for a, b in zip(first, second))


def grad_check(
    loss_fn: LossClosure,
    params: Dict[str, Tensor],
    seed: int = 0,
    step: Optional[float] = None,
    max_elements: Optional[int] = None,
    floor: Optional[float] = None,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Central differences carry roundoff of about eps * |loss| / step, so entries
    whose gradients are both smaller than ``floor`` are compared absolutely.
    """
    step = step or settings.GRADCHECK_STEP
    max_elements = max_elements or settings.GRADCHECK_MAX_ELEMENTS
    floor = settings.GRADCHECK_ABS_FLOOR if floor is None else floor
    rng = np.random.default_rng(seed)

    for tensor in params.values():
        tensor.grad = None
    loss = loss_fn()
    loss.backward()

    worst, skipped = 0.0, 0
    for name, tensor in params.items():
        analytic_grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.isfinite(analytic_grad).all():
            raise NonFiniteError(f"analytic gradient of {name} is not finite", parameter=name)
        analytic_flat = analytic_grad.reshape(-1)
        count = min(tensor.data.size, max_elements)
        for index in rng.choice(tensor.data.size, size=count, replace=False):
            position = np.unravel_index(index, tensor.shape)
            original = tensor.data[position]
            tensor.data[position] = original + step
            plus, plus_branches = _evaluate(loss_fn)
            tensor.data[position] = original - step
            minus, minus_branches = _evaluate(loss_fn)
            tensor.data[position] = original
            if not np.isfinite(plus) or not np.isfinite(minus):
                raise NonFiniteError(f"loss is not finite when perturbing {name}", parameter=name)
            if not _same_branches(plus_branches, minus_branches):
                skipped += 1
                continue
            numeric = (plus - minus) / (2 * step)
            worst = max(worst, element_error(float(analytic_flat[index]), numeric, floor))

    if skipped:
        logger.debug("Kink elements skipped", seed=seed, skipped=skipped)
    return worst


# ---------------------------------------------------------------- suite cases
def _case_conv1d(rng):
    batch, c_in, c_out = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)
    kernel, stride, padding = rng.integers(1, 6), rng.integers(1, 4), rng.integers(0, 3)
    length = int(rng.integers(max(1, kernel - 2 * padding), 13))
    x = parameter(rng.standard_normal((batch, c_in, length)), "input")
    w = parameter(rng.standard_normal((c_out, c_in, kernel)), "weights")
    b = parameter(rng.standard_normal(c_out), "bias")
    probe = rng.standard_normal(layers.conv1d(x, w, b, int(stride), int(padding)).shape)
    return lambda: (layers.conv1d(x, w, b, int(stride), int(padding)) * probe).sum(), {"input": x, "weights": w, "bias": b}


def _case_dense(rng):
    batch, n_in, n_out = rng.integers(1, 5), rng.integers(1, 8), rng.integers(1, 8)
    x = parameter(rng.standard_normal((batch, n_in)), "input")
    w = parameter(rng.standard_normal((n_out, n_in)), "weights")
    b = parameter(rng.standard_normal(n_out), "bias")
    probe = rng.standard_normal((batch, n_out))
    return lambda: (layers.dense(x, w, b) * probe).sum(), {"input": x, "weights": w, "bias": b}


def _case_relu(rng):
    shape = tuple(rng.integers(1, 5, size=3))
    magnitude = rng.uniform(0.1, 1.0, size=shape)
    x = parameter(np.where(rng.random(shape) < 0.5, -magnitude, magnitude), "input")
    probe = rng.standard_normal(shape)
    return lambda: (layers.relu(x) * probe).sum(), {"input": x}


def _case_maxpool1d(rng):
    window, stride = [(2, 2), (3, 2), (2, 1), (3, 3)][rng.integers(0, 4)]
    batch, channels = rng.integers(1, 3), rng.integers(1, 4)
    length = int(rng.integers(window, 12))
    # Distinct values spaced far apart relative to the step keep every argmax stable.
    values = rng.permutation(batch * channels * length).reshape(batch, channels, length) * 0.1
    x = parameter(values + rng.uniform(0, 0.01, size=values.shape), "input")
    probe = rng.standard_normal(layers.maxpool1d(x, window, stride).shape)
    return lambda: (layers.maxpool1d(x, window, stride) * probe).sum(), {"input": x}


def _case_softmax_cross_entropy(rng):
    batch, classes = rng.integers(1, 6), rng.integers(2, 7)
    logits = parameter(rng.standard_normal((batch, classes)) * 2, "logits")
    labels = rng.integers(0, classes, size=batch)
    return lambda: layers.softmax_cross_entropy(logits, labels), {"logits": logits}


def _local_global(rng):
    batch, channels, n = rng.integers(1, 4), rng.integers(1, 7), rng.integers(1, 9)
    local = parameter(rng.standard_normal((batch, channels, n)), "local")
    global_feature = parameter(rng.standard_normal((batch, channels)), "global")
    return local, global_feature


def _case_compat_dot(rng):
    local, global_feature = _local_global(rng)
    probe = rng.standard_normal((local.shape[0], local.shape[2]))
    return lambda: (attention.compat_dot(local, global_feature) * probe).sum(), {
        "local": local,
        "global": global_feature,
    }


def _case_compat_pc(rng):
    local, global_feature = _local_global(rng)
    u = parameter(rng.standard_normal(local.shape[1]), "u")
    probe = rng.standard_normal((local.shape[0], local.shape[2]))
    return lambda: (attention.compat_pc(local, global_feature, u) * probe).sum(), {
        "local": local,
        "global": global_feature,
        "u": u,
    }


def _case_normalize_softmax(rng):
    scores = parameter(rng.standard_normal((rng.integers(1, 4), rng.integers(1, 10))) * 2, "scores")
    probe = rng.standard_normal(scores.shape)
    return lambda: (attention.normalize_softmax(scores) * probe).sum(), {"scores": scores}


def _case_normalize_tanh(rng):
    scores = parameter(rng.standard_normal((rng.integers(1, 4), rng.integers(1, 10))) * 1.5, "scores")
    probe = rng.standard_normal(scores.shape)
    return lambda: (attention.normalize_tanh(scores) * probe).sum(), {"scores": scores}


def _case_attend_pool(rng):
    local, _ = _local_global(rng)
    weights = parameter(rng.standard_normal((local.shape[0], local.shape[2])), "weights")
    probe = rng.standard_normal(local.shape[:2])
    return lambda: (attention.attend_pool(local, weights) * probe).sum(), {"local": local, "weights": weights}


def _case_attention_pipeline(rng):
    """Compatibility, normalization and pooling over two levels, concatenated."""
    compat = [CompatMode.PC, CompatMode.DOT][rng.integers(0, 2)]
    norm = [NormMode.SOFTMAX, NormMode.TANH][rng.integers(0, 2)]
    batch, channels = int(rng.integers(1, 4)), int(rng.integers(2, 7))
    head = attention.AttentionHead(2, compat, norm, channels)
    for u in head.u:
        u.data[...] = rng.standard_normal(channels) * 0.5
    taps = [
        parameter(rng.standard_normal((batch, channels, int(n))) * 0.5, f"local{s}")
        for s, n in enumerate(rng.integers(1, 9, size=2), start=1)
    ]
    global_feature = parameter(rng.standard_normal((batch, channels)) * 0.5, "global")
    probe = rng.standard_normal((batch, 2 * channels))

    def loss():
        return (head(taps, global_feature).concatenated * probe).sum()

    params = {t.name: t for t in taps}
    params.update({"global": global_feature, **head.parameters()})
    return loss, params


def _network_case(model, rng, input_scale: float = 1.0):
    spec = model.spec
    batch = 2
    x = rng.standard_normal((batch, spec.input_channels, spec.input_len)) * input_scale
    labels = rng.integers(0, spec.num_classes, size=batch)
    return lambda: layers.softmax_cross_entropy(model(x).logits, labels), model.parameters()


def _case_fundamental_cnn(rng):
    return _network_case(build_fundamental_cnn(16, 3, 4, seed=int(rng.integers(0, 2**31))), rng)


def _attention_network(rng, compat: CompatMode, norm: NormMode):
    spec = ModelSpec.default_layout(16, 3, 4, attention_levels=3, compat_mode=compat, norm_mode=norm)
    model = build_model(spec, seed=int(rng.integers(0, 2**31)))
    for u in model.head.u:
        u.data[...] = rng.standard_normal(u.shape) * 0.05
    return model


def _case_net_att3_pc_tanh(rng):
    return _network_case(_attention_network(rng, CompatMode.PC, NormMode.TANH), rng)


def _case_net_att3_dot_softmax(rng):
    # Small inputs keep dot-product scores out of softmax saturation.
    return _network_case(_attention_network(rng, CompatMode.DOT, NormMode.SOFTMAX), rng, input_scale=0.1)


def _case_concat(rng):
    parts = [parameter(rng.standard_normal((2, int(rng.integers(1, 5)))), f"part{i}") for i in range(3)]
    probe = rng.standard_normal((2, sum(p.shape[1] for p in parts)))
    return lambda: (concat(parts, axis=1) * probe).sum(), {p.name: p for p in parts}


GRADCHECK_SUITE: Dict[str, GradCheckCase] = {
    "conv1d": _case_conv1d,
    "dense": _case_dense,
    "relu": _case_relu,
    "maxpool1d": _case_maxpool1d,
    "softmax_cross_entropy": _case_softmax_cross_entropy,
    "concat": _case_concat,
    "compat_dot": _case_compat_dot,
    "compat_pc": _case_compat_pc,
    "normalize_softmax": _case_normalize_softmax,
    "normalize_tanh": _case_normalize_tanh,
    "attend_pool": _case_attend_pool,
    "attention_pipeline": _case_attention_pipeline,
    "fundamental_cnn": _case_fundamental_cnn,
    "net_att3_pc_tanh": _case_net_att3_pc_tanh,
    "net_att3_dot_softmax": _case_net_att3_dot_softmax,
}


def check_case(name: str, case: GradCheckCase, seeds: int, tolerance: float) -> GradCheckResult:
    """Run one case over ``seeds`` seeds and keep the worst error."""
    worst, worst_seed = 0.0, None
    try:
        for seed in range(seeds):
            rng = np.random.default_rng([seed, 0x6C])
            loss_fn, params = case(rng)
            error = grad_check(loss_fn, params, seed=seed)
            if worst_seed is None or error > worst:
                worst, worst_seed = error, seed
    except HARError as e:
        logger.error("Gradient check aborted", op=name, error=e.message, error_type=type(e).__name__)
        return GradCheckResult(
            op=name, seeds=seeds, max_rel_error=None, worst_seed=None, tolerance=tolerance, passed=False, error=e.message
        )
    return GradCheckResult(
        op=name, seeds=seeds, max_rel_error=worst, worst_seed=worst_seed, tolerance=tolerance, passed=worst <= tolerance
    )


def run_gradcheck_suite(
    seeds: Optional[int] = None,
    tolerance: Optional[float] = None,
    suite: Optional[Dict[str, GradCheckCase]] = None,
) -> List[GradCheckResult]:
    """Check every operation in ``suite`` (the full suite by default)."""
    seeds = settings.GRADCHECK_SEEDS if seeds is None else seeds
    tolerance = settings.GRADCHECK_TOLERANCE if tolerance is None else tolerance
    if seeds < 1:
        raise ConfigurationError(f"gradient check needs at least one seed, got {seeds}")
    suite = GRADCHECK_SUITE if suite is None else suite

    results = []
    for name, case in suite.items():
        start = time.perf_counter()
        result = check_case(name, case, seeds, tolerance)
        logger.info(
            "Gradient check",
            op=name,
            max_rel_error=result.max_rel_error,
            passed=result.passed,
            seconds=round(time.perf_counter() - start, 3),
        )
        results.append(result)
    return results

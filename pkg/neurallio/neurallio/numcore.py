"""Differentiable numerics used by every other module.

Tensors are ``torch.Tensor`` in 64-bit floats and gradients come from torch's
reverse-mode autograd graph. On top of that this module provides the pieces
the transport operator and the evaluation suite need with fixed, documented
semantics: a scaling-and-squaring matrix exponential, a central-difference
gradient checker, an Adam state with an explicit step counter, Euclidean
k-nearest neighbours with index tie-breaking, and Gram-matrix PCA.

All randomness is derived from one integer seed through :func:`derive_seed`.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch

from .errors import DimensionError, NumericError, UsageError

DTYPE = torch.float64
TAYLOR_TERMS = 12

ADAM_LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

log = logging.getLogger(__name__)


def as_tensor(data: object, *, requires_grad: bool = False) -> torch.Tensor:
    """Convert array-like data to a float64 tensor."""
    tensor = torch.as_tensor(data, dtype=DTYPE)
    if requires_grad:
        tensor = tensor.detach().clone().requires_grad_(True)
    return tensor


def derive_seed(seed: int, *labels: str | int) -> int:
    """Derive an independent child seed from ``seed`` and a label path."""
    if seed < 0:
        raise UsageError("seeds must be non-negative", context={"seed": seed})
    entropy = [int(seed)] + [zlib.crc32(str(label).encode("utf-8")) for label in labels]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))


def make_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def numpy_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def ensure_finite(tensor: torch.Tensor, name: str) -> torch.Tensor:
    """Return ``tensor`` unchanged, or raise :class:`NumericError` on NaN/Inf."""
    if not bool(torch.isfinite(tensor).all()):
        raise NumericError(f"non-finite values in {name}", context={"component": name})
    return tensor


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() != 2 or b.dim() != 2:
        raise DimensionError(
            "matmul expects two matrices",
            context={"left": tuple(a.shape), "right": tuple(b.shape)},
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"inner dimensions differ: {a.shape[1]} vs {b.shape[0]}",
            context={"left": tuple(a.shape), "right": tuple(b.shape)},
        )
    return a @ b


def squaring_count(norms: torch.Tensor) -> torch.Tensor:
    """Number of squarings per matrix: ``max(0, ceil(log2(norm)) + 1)``, 0 for a zero matrix."""
    positive = norms > 0
    safe = torch.where(positive, norms, torch.ones_like(norms))
    counts = (torch.ceil(torch.log2(safe)) + 1).clamp(min=0)
    return torch.where(positive, counts, torch.zeros_like(counts)).to(torch.int64)


def matrix_exp(matrix: torch.Tensor) -> torch.Tensor:
    """Matrix exponential of a square matrix or a batch ``(..., m, m)``.

    Each matrix is scaled by ``2**-s`` with ``s`` from its 1-norm, expanded
    with a fixed 12-term Taylor series, and squared ``s`` times. Squaring is
    masked per matrix, so a batch gives the same result as separate calls.
    The computation is a finite chain of products and sums, so autograd
    differentiates straight through it.
    """
    if matrix.dim() < 2 or matrix.shape[-1] != matrix.shape[-2]:
        raise DimensionError(
            "matrix_exp expects square matrices",
            context={"shape": tuple(matrix.shape)},
        )
    ensure_finite(matrix, "matrix_exp input")

    squarings = squaring_count(torch.linalg.matrix_norm(matrix.detach(), ord=1))
    scale = torch.exp2(-squarings.to(matrix.dtype))
    result = _taylor(matrix * scale[..., None, None])
    for step in range(int(squarings.max())):
        squared = result @ result
        result = torch.where((squarings > step)[..., None, None], squared, result)
    return result


def _taylor(matrix: torch.Tensor) -> torch.Tensor:
    identity = torch.eye(matrix.shape[-1], dtype=matrix.dtype).expand_as(matrix)
    term = identity
    result = identity
    for order in range(1, TAYLOR_TERMS):
        term = term @ matrix / order
        result = result + term
    return result


def grad_check(
    fn: Callable[..., torch.Tensor],
    point: Sequence[torch.Tensor],
    eps: float = 1e-5,
) -> float:
    """Compare autograd against central differences at ``point``.

    Returns the maximum over every input coordinate of
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    inputs = [as_tensor(p, requires_grad=True) for p in point]
    value = fn(*inputs)
    if value.numel() != 1:
        raise DimensionError("grad_check needs a scalar function", context={"shape": tuple(value.shape)})
    ensure_finite(value, "grad_check value")
    if value.requires_grad:
        raw = torch.autograd.grad(value, inputs, allow_unused=True)
    else:
        raw = (None,) * len(inputs)
    analytic = [torch.zeros_like(x) if g is None else g.detach() for g, x in zip(raw, inputs)]

    perturbed = [x.detach().clone() for x in inputs]
    worst = 0.0
    with torch.no_grad():
        for tensor, grad in zip(perturbed, analytic):
            flat = tensor.view(-1)
            flat_grad = grad.reshape(-1)
            for index in range(flat.numel()):
                original = flat[index].item()
                flat[index] = original + eps
                upper = ensure_finite(fn(*perturbed), "grad_check perturbation")
                flat[index] = original - eps
                lower = ensure_finite(fn(*perturbed), "grad_check perturbation")
                flat[index] = original
                numeric = (upper - lower).item() / (2.0 * eps)
                error = abs(flat_grad[index].item() - numeric) / max(1.0, abs(numeric))
                worst = max(worst, error)
    return worst


@dataclass
class AdamState:
    """Adam moments and step counter for a fixed list of parameters.

    The moment accumulators live inside a ``torch.optim.Adam`` instance; the
    step counter is tracked here so callers can observe it.
    """

    params: tuple[torch.Tensor, ...]
    optimizer: torch.optim.Adam
    step_count: int = 0
    _index: dict[int, int] = field(default_factory=dict, repr=False)

    @classmethod
    def create(
        cls,
        params: Sequence[torch.Tensor],
        *,
        learning_rate: float = ADAM_LEARNING_RATE,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        epsilon: float = ADAM_EPSILON,
    ) -> "AdamState":
        params = tuple(params)
        optimizer = torch.optim.Adam(
            params, lr=learning_rate, betas=(beta1, beta2), eps=epsilon, foreach=False
        )
        return cls(params=params, optimizer=optimizer, _index={id(p): i for i, p in enumerate(params)})

    @property
    def learning_rate(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    @property
    def beta1(self) -> float:
        return float(self.optimizer.param_groups[0]["betas"][0])

    @property
    def beta2(self) -> float:
        return float(self.optimizer.param_groups[0]["betas"][1])

    @property
    def epsilon(self) -> float:
        return float(self.optimizer.param_groups[0]["eps"])

    def moments(self, param: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """First and second moment accumulators for ``param`` (zeros before its first update)."""
        state = self.optimizer.state.get(param)
        if not state:
            zeros = torch.zeros_like(param)
            return zeros, zeros.clone()
        return state["exp_avg"], state["exp_avg_sq"]


def adam_step(
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor | None],
    state: AdamState,
) -> list[torch.Tensor]:
    """Apply one bias-corrected Adam update in place and return ``params``.

    A ``None`` gradient leaves its parameter and moments untouched.
    """
    if len(params) != len(grads) or len(params) != len(state.params):
        raise DimensionError(
            "params, grads and optimizer state must have the same length",
            context={"params": len(params), "grads": len(grads), "state": len(state.params)},
        )
    for position, (param, grad) in enumerate(zip(params, grads)):
        if state._index.get(id(param)) != position:
            raise UsageError("parameter list does not match the optimizer state", context={"position": position})
        if grad is not None and grad.shape != param.shape:
            raise DimensionError(
                "gradient shape does not match its parameter",
                context={"position": position, "param": tuple(param.shape), "grad": tuple(grad.shape)},
            )
        param.grad = None if grad is None else grad.detach().clone()
    state.optimizer.step()
    state.step_count += 1
    for param in params:
        param.grad = None
    return list(params)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform_(tensor: torch.Tensor, fan_in: int, fan_out: int, generator: torch.Generator) -> torch.Tensor:
    """Fill ``tensor`` in place from ``U(-b, b)`` with ``b = sqrt(6 / (fan_in + fan_out))``."""
    bound = glorot_bound(fan_in, fan_out)
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=generator)
    return tensor


def init_linear_(layer: torch.nn.Linear, generator: torch.Generator, *, zero: bool = False) -> torch.nn.Linear:
    """Glorot-uniform weights and zero bias, or all zeros when ``zero`` is set."""
    with torch.no_grad():
        if zero:
            layer.weight.zero_()
        else:
            glorot_uniform_(layer.weight, layer.in_features, layer.out_features, generator)
        if layer.bias is not None:
            layer.bias.zero_()
    return layer


def pairwise_distances(queries: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """Exact Euclidean distances between the rows of ``queries`` and ``points``."""
    return torch.cdist(
        as_tensor(queries), as_tensor(points), p=2.0, compute_mode="donot_use_mm_for_euclid_dist"
    )


def knn(query: torch.Tensor, points: torch.Tensor, k: int) -> list[int]:
    """Indices of the ``k`` nearest rows of ``points``, ascending by distance, ties to the lower index."""
    points = as_tensor(points)
    query = as_tensor(query)
    if points.dim() != 2 or query.shape != points.shape[1:]:
        raise DimensionError(
            "query and points disagree on dimension",
            context={"query": tuple(query.shape), "points": tuple(points.shape)},
        )
    if not 1 <= k <= points.shape[0]:
        raise UsageError(
            f"k={k} is outside 1..{points.shape[0]}",
            context={"k": k, "points": points.shape[0]},
        )
    distances = pairwise_distances(query.unsqueeze(0), points)[0]
    order = torch.sort(distances, stable=True).indices
    return order[:k].tolist()


class PCAProjection(NamedTuple):
    components: torch.Tensor
    projected: torch.Tensor
    explained_variance_ratio: torch.Tensor


def pca_project(data: torch.Tensor, k: int) -> PCAProjection:
    """Top-``k`` principal components of the mean-centred rows of ``data``.

    Works through the ``n x n`` Gram matrix, which is the cheap route when
    there are far fewer samples than dimensions. Each component's sign is fixed
    so its largest-magnitude loading is positive.
    """
    data = as_tensor(data)
    if data.dim() != 2:
        raise DimensionError("pca_project expects a matrix", context={"shape": tuple(data.shape)})
    n, dim = data.shape
    if not 1 <= k <= min(n, dim):
        raise UsageError(f"k={k} is outside 1..{min(n, dim)}", context={"k": k, "n": n, "dim": dim})

    centered = data - data.mean(dim=0)
    gram = centered @ centered.T
    eigenvalues, eigenvectors = torch.linalg.eigh(gram)
    order = torch.argsort(eigenvalues, descending=True)[:k]
    directions = centered.T @ eigenvectors[:, order]
    norms = torch.linalg.vector_norm(directions, dim=0)
    # Through the Gram matrix singular values resolve only to about sqrt(eps) * sigma_max.
    tolerance = math.sqrt(max(n, dim) * torch.finfo(DTYPE).eps) * math.sqrt(max(float(eigenvalues.max()), 0.0))
    if bool((norms <= tolerance).any()):
        raise NumericError(
            "requested more components than the data has variance for",
            context={"k": k, "smallest_singular_value": float(norms.min()), "tolerance": tolerance},
        )
    components = (directions / norms).T

    pivots = components.abs().argmax(dim=1)
    signs = torch.sign(components.gather(1, pivots.unsqueeze(1)))
    components = components * signs

    total = gram.trace()
    ratio = eigenvalues[order].clamp(min=0) / total if total > 0 else torch.zeros(k, dtype=DTYPE)
    return PCAProjection(components=components, projected=centered @ components.T, explained_variance_ratio=ratio)


__all__ = (
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPSILON",
    "ADAM_LEARNING_RATE",
    "AdamState",
    "DTYPE",
    "PCAProjection",
    "TAYLOR_TERMS",
    "adam_step",
    "as_tensor",
    "derive_seed",
    "ensure_finite",
    "glorot_bound",
    "glorot_uniform_",
    "grad_check",
    "init_linear_",
    "knn",
    "make_generator",
    "matmul",
    "matrix_exp",
    "numpy_rng",
    "pairwise_distances",
    "pca_project",
    "squaring_count",
)

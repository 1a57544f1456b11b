"""Per-domain predictor ``g(x; theta)`` and the store of trainable thetas.

The predictor is a ReLU MLP whose parameters live in one flat vector.
Layers are laid out input side first; each layer contributes its weight
matrix of shape ``(in, out)`` in row-major order followed by its bias.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence

import torch
import torch.nn.functional as F

from .errors import DimensionError, StateError, UsageError
from .numcore import DTYPE, as_tensor, glorot_uniform_

log = logging.getLogger(__name__)

DEFAULT_WIDTHS: tuple[int, ...] = (2, 50, 50, 2)
REDUCTIONS = ("mean", "domain")


@dataclass(frozen=True)
class PredictorArch:
    widths: tuple[int, ...] = DEFAULT_WIDTHS

    def __post_init__(self) -> None:
        if len(self.widths) < 2 or any(int(w) < 1 for w in self.widths):
            raise UsageError(
                "predictor widths need an input and an output layer of positive size",
                context={"widths": list(self.widths)},
            )
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.widths[:-1], self.widths[1:]))

    @property
    def param_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes)

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def num_classes(self) -> int:
        return self.widths[-1]

    def to_dict(self) -> dict[str, Any]:
        return {"widths": list(self.widths), "param_count": self.param_count}

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "PredictorArch":
        arch = cls(tuple(payload["widths"]))
        expected = payload.get("param_count")
        if expected is not None and int(expected) != arch.param_count:
            raise DimensionError(
                "stored param_count does not match the widths",
                context={"stored": expected, "computed": arch.param_count},
            )
        return arch


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flattened predictor parameters, optionally tied to a domain id."""

    theta: torch.Tensor
    domain_id: int | None = None

    def __len__(self) -> int:
        return int(self.theta.shape[-1])


Layers = list[tuple[torch.Tensor, torch.Tensor]]


def flatten(layers: Iterable[tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
    """Concatenate ``(weight, bias)`` pairs into the flat layout; a leading batch axis is kept."""
    parts: list[torch.Tensor] = []
    for weight, bias in layers:
        parts.append(weight.reshape(*weight.shape[:-2], -1))
        parts.append(bias)
    if not parts:
        raise UsageError("flatten needs at least one layer")
    return torch.cat(parts, dim=-1)


def unflatten(arch: PredictorArch, theta: torch.Tensor | ParamVector) -> Layers:
    """Split a flat vector (or a batch ``(..., D)``) back into ``(weight, bias)`` views."""
    theta = theta.theta if isinstance(theta, ParamVector) else theta
    _check_length(arch, theta)
    batch = theta.shape[:-1]
    layers: Layers = []
    offset = 0
    for fan_in, fan_out in arch.layer_shapes:
        weight = theta[..., offset : offset + fan_in * fan_out].reshape(*batch, fan_in, fan_out)
        offset += fan_in * fan_out
        bias = theta[..., offset : offset + fan_out]
        offset += fan_out
        layers.append((weight, bias))
    return layers


def _check_length(arch: PredictorArch, theta: torch.Tensor) -> None:
    if theta.dim() < 1 or theta.shape[-1] != arch.param_count:
        raise DimensionError(
            f"theta has length {theta.shape[-1] if theta.dim() else 0}, expected {arch.param_count}",
            context={"shape": tuple(theta.shape), "param_count": arch.param_count},
        )


def predict(arch: PredictorArch, theta: torch.Tensor | ParamVector, inputs: torch.Tensor) -> torch.Tensor:
    """Logits for ``inputs``; batched thetas ``(B, D)`` broadcast against ``(B, n, in)`` inputs."""
    inputs = as_tensor(inputs) if not torch.is_tensor(inputs) else inputs
    if inputs.shape[-1] != arch.input_dim:
        raise DimensionError(
            f"inputs have width {inputs.shape[-1]}, expected {arch.input_dim}",
            context={"inputs": tuple(inputs.shape), "input_dim": arch.input_dim},
        )
    layers = unflatten(arch, theta)
    hidden = inputs
    last = len(layers) - 1
    for index, (weight, bias) in enumerate(layers):
        hidden = torch.matmul(hidden, weight) + bias.unsqueeze(-2)
        if index < last:
            hidden = torch.relu(hidden)
    return hidden


def _check_labels(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.int64)
    if logits.shape[:-1] != labels.shape:
        raise DimensionError(
            "logits and labels disagree on sample count",
            context={"logits": tuple(logits.shape), "labels": tuple(labels.shape)},
        )
    classes = logits.shape[-1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= classes):
        raise UsageError(
            f"labels must lie in 0..{classes - 1}",
            context={"min": int(labels.min()), "max": int(labels.max()), "classes": classes},
        )
    return labels


def loss_pred(logits: torch.Tensor, labels: torch.Tensor | Sequence[int], *, reduction: str = "mean") -> torch.Tensor:
    """Mean softmax cross-entropy; ``reduction="domain"`` keeps one value per leading batch entry."""
    if reduction not in REDUCTIONS:
        raise UsageError(f"unknown reduction '{reduction}'", context={"reduction": reduction})
    labels = _check_labels(logits, labels)
    classes = logits.shape[-1]
    if reduction == "mean":
        return F.cross_entropy(logits.reshape(-1, classes), labels.reshape(-1))
    per_sample = F.cross_entropy(logits.reshape(-1, classes), labels.reshape(-1), reduction="none")
    return per_sample.reshape(labels.shape).mean(dim=-1)


def error_rate(logits: torch.Tensor, labels: torch.Tensor | Sequence[int]) -> float:
    """Percentage of samples whose argmax differs from the label; ties go to the lower class."""
    labels = _check_labels(logits, labels)
    if labels.numel() == 0:
        return 0.0
    wrong = logits.argmax(dim=-1) != labels
    return 100.0 * float(wrong.to(DTYPE).mean())


def domain_error_rates(logits: torch.Tensor, labels: torch.Tensor) -> list[float]:
    """:func:`error_rate` for each entry of a ``(B, n, C)`` batch."""
    labels = _check_labels(logits, labels)
    wrong = (logits.argmax(dim=-1) != labels).to(DTYPE)
    return [100.0 * float(v) for v in wrong.mean(dim=-1)]


def init_shared_theta(arch: PredictorArch, generator: torch.Generator) -> torch.Tensor:
    """One Glorot-uniform parameter draw with zero biases."""
    layers: Layers = []
    for fan_in, fan_out in arch.layer_shapes:
        weight = glorot_uniform_(torch.empty(fan_in, fan_out, dtype=DTYPE), fan_in, fan_out, generator)
        layers.append((weight, torch.zeros(fan_out, dtype=DTYPE)))
    return flatten(layers)


class ParamStore:
    """Trainable thetas for the training domains, one row per domain id.

    All rows live in a single ``(N, D)`` parameter so the optimizer and the
    trainer can index them as a batch.
    """

    def __init__(self, arch: PredictorArch, domain_ids: Sequence[int], thetas: torch.Tensor) -> None:
        ids = [int(i) for i in domain_ids]
        if len(set(ids)) != len(ids):
            raise UsageError("duplicate domain ids in parameter store", context={"ids": ids})
        if thetas.dim() != 2 or thetas.shape[0] != len(ids):
            raise DimensionError(
                "one theta row is needed per domain id",
                context={"thetas": tuple(thetas.shape), "ids": len(ids)},
            )
        _check_length(arch, thetas)
        self.arch = arch
        self._ids = tuple(ids)
        self._rows = {domain_id: row for row, domain_id in enumerate(ids)}
        self.thetas = torch.nn.Parameter(thetas.detach().clone().to(DTYPE))

    @classmethod
    def create(cls, arch: PredictorArch, domain_ids: Sequence[int], generator: torch.Generator) -> "ParamStore":
        shared = init_shared_theta(arch, generator)
        return cls(arch, domain_ids, shared.unsqueeze(0).repeat(len(domain_ids), 1))

    @property
    def ids(self) -> tuple[int, ...]:
        return self._ids

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, domain_id: object) -> bool:
        return domain_id in self._rows

    def row_of(self, domain_id: int) -> int:
        try:
            return self._rows[int(domain_id)]
        except KeyError:
            raise StateError(
                f"no parameters stored for domain {domain_id}",
                code="ERR_EMPTY_STORE" if not self._rows else None,
                context={"domain_id": domain_id},
            ) from None

    def get(self, domain_id: int) -> ParamVector:
        return ParamVector(self.thetas[self.row_of(domain_id)], int(domain_id))

    def __iter__(self) -> Iterator[ParamVector]:
        return (ParamVector(self.thetas[row], domain_id) for row, domain_id in enumerate(self._ids))

    def detached(self) -> torch.Tensor:
        return self.thetas.detach().clone()


__all__ = (
    "DEFAULT_WIDTHS",
    "ParamStore",
    "ParamVector",
    "PredictorArch",
    "domain_error_rates",
    "error_rate",
    "flatten",
    "init_shared_theta",
    "loss_pred",
    "predict",
    "unflatten",
)

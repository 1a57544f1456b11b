"""Reference models that share the trained model's evaluation interface.

``erm`` pools every training domain into one predictor. ``erm_d`` also feeds
the predictor a learned encoding of the descriptor. ``nda`` fine-tunes the
pooled predictor on each training domain and serves a test descriptor with
the nearest domain's fine-tuned parameters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import torch
from torch import nn

from .datagen import Domain
from .numcore import DTYPE, AdamState, adam_step, as_tensor, derive_seed, init_linear_, make_generator
from .predictor import PredictorArch, init_shared_theta, loss_pred, predict
from .trainer import ArchConfig, TrainConfig, nearest_training, stack_domains

log = logging.getLogger(__name__)

DESCRIPTOR_FEATURES = 16

ERM = "erm"
ERM_D = "erm_d"
NDA = "nda"
BASELINES = (ERM, ERM_D, NDA)


def _fit(
    params: Sequence[torch.Tensor],
    loss_fn: Callable[[torch.Tensor], torch.Tensor],
    count: int,
    config: TrainConfig,
    *,
    epochs: int,
    label: str,
) -> list[float]:
    """Minibatch Adam over domain indices; returns the mean loss per epoch."""
    adam = AdamState.create(params, learning_rate=config.learning_rate)
    order_gen = make_generator(derive_seed(config.seed, label, "order"))
    batch = min(config.minibatch_domains, count)
    history: list[float] = []
    for epoch in range(epochs):
        order = torch.randperm(count, generator=order_gen)
        losses = []
        for start in range(0, count, batch):
            loss = loss_fn(order[start : start + batch])
            grads = torch.autograd.grad(loss, params, allow_unused=True)
            adam_step(params, grads, adam)
            losses.append(float(loss.detach()))
        history.append(sum(losses) / len(losses))
        log.debug("baseline epoch finished", extra={"baseline": label, "epoch": epoch, "loss": history[-1]})
    return history


@dataclass(eq=False)
class ErmModel:
    arch: PredictorArch
    theta: torch.Tensor
    history: list[float]

    def logits(self, descriptors: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return predict(self.arch, self.theta, as_tensor(inputs))


class ErmDModel(nn.Module):
    """Predictor on ``[x, h(z)]`` where ``h`` is a two-layer descriptor encoder."""

    def __init__(self, arch: PredictorArch, descriptor_dim: int, generator: torch.Generator) -> None:
        super().__init__()
        self.arch = arch
        self.encoder = nn.Sequential(
            nn.Linear(descriptor_dim, DESCRIPTOR_FEATURES, dtype=DTYPE),
            nn.ReLU(),
            nn.Linear(DESCRIPTOR_FEATURES, DESCRIPTOR_FEATURES, dtype=DTYPE),
            nn.ReLU(),
        )
        for module in self.encoder:
            if isinstance(module, nn.Linear):
                init_linear_(module, generator)
        self.theta = nn.Parameter(init_shared_theta(arch, generator))
        self.history: list[float] = []

    def forward(self, descriptors: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        features = self.encoder(descriptors).unsqueeze(-2).expand(*inputs.shape[:-1], DESCRIPTOR_FEATURES)
        return predict(self.arch, self.theta, torch.cat([inputs, features], dim=-1))

    def logits(self, descriptors: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self(as_tensor(descriptors), as_tensor(inputs))


@dataclass(eq=False)
class NdaModel:
    arch: PredictorArch
    thetas: torch.Tensor
    train_descriptors: torch.Tensor
    history: list[float]

    def logits(self, descriptors: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        sources = [nearest_training(z, self.train_descriptors) for z in as_tensor(descriptors)]
        with torch.no_grad():
            return predict(self.arch, self.thetas[torch.tensor(sources, dtype=torch.int64)], as_tensor(inputs))


def fit_erm(domains: Sequence[Domain], config: TrainConfig, *, arch: ArchConfig | None = None) -> ErmModel:
    """One predictor trained on the pooled data of every training domain."""
    predictor = (arch or ArchConfig()).predictor()
    _, inputs, labels = stack_domains(domains)
    theta = init_shared_theta(predictor, make_generator(derive_seed(config.seed, ERM, "init"))).requires_grad_(True)

    def loss_fn(batch: torch.Tensor) -> torch.Tensor:
        return loss_pred(predict(predictor, theta, inputs[batch]), labels[batch])

    history = _fit([theta], loss_fn, len(domains), config, epochs=config.epochs, label=ERM)
    return ErmModel(predictor, theta.detach(), history)


def fit_erm_d(domains: Sequence[Domain], config: TrainConfig, *, arch: ArchConfig | None = None) -> ErmDModel:
    """ERM with the encoded descriptor concatenated to every input."""
    widths = (arch or ArchConfig()).predictor_widths
    predictor = PredictorArch((widths[0] + DESCRIPTOR_FEATURES, *widths[1:]))
    descriptors, inputs, labels = stack_domains(domains)
    model = ErmDModel(predictor, descriptors.shape[1], make_generator(derive_seed(config.seed, ERM_D, "init")))
    params = list(model.parameters())

    def loss_fn(batch: torch.Tensor) -> torch.Tensor:
        return loss_pred(model(descriptors[batch], inputs[batch]), labels[batch])

    model.history = _fit(params, loss_fn, len(domains), config, epochs=config.epochs, label=ERM_D)
    return model


def fit_nda(
    domains: Sequence[Domain],
    config: TrainConfig,
    *,
    arch: ArchConfig | None = None,
    finetune_epochs: int | None = None,
) -> NdaModel:
    """Pooled ERM, then a short fine-tune per training domain."""
    base = fit_erm(domains, config, arch=arch)
    descriptors, inputs, labels = stack_domains(domains)
    steps = finetune_epochs if finetune_epochs is not None else max(1, config.epochs // 10)
    thetas = base.theta.unsqueeze(0).repeat(len(domains), 1).requires_grad_(True)
    adam = AdamState.create([thetas], learning_rate=config.learning_rate)
    history: list[float] = []
    for _ in range(steps):
        # Domain losses are independent, so one summed step fine-tunes every row separately.
        per_domain = loss_pred(predict(base.arch, thetas, inputs), labels, reduction="domain")
        loss = per_domain.sum()
        (grad,) = torch.autograd.grad(loss, [thetas])
        adam_step([thetas], [grad], adam)
        history.append(float(per_domain.mean().detach()))
    return NdaModel(base.arch, thetas.detach(), descriptors.clone(), base.history + history)


FITTERS = {ERM: fit_erm, ERM_D: fit_erm_d, NDA: fit_nda}


__all__ = (
    "BASELINES",
    "DESCRIPTOR_FEATURES",
    "ERM",
    "ERM_D",
    "ErmDModel",
    "ErmModel",
    "FITTERS",
    "NDA",
    "NdaModel",
    "fit_erm",
    "fit_erm_d",
    "fit_nda",
)

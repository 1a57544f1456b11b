"""Joint training of per-domain parameters and the transport operator.

Each optimizer step takes a minibatch of source domains. For every source
``i`` the predictor loss and the autoencoder reconstruction are computed; for
every chart neighbour ``j`` of ``i`` the encoding of ``theta_i`` is transported
to ``z_j``, decoded and scored on domain ``j``'s data, compared against
``theta_j`` and against the encoding of ``theta_j``. One Adam step then
updates every module at once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

import torch

from .datagen import Domain
from .errors import DimensionError, NumericError, StateError, UsageError
from .numcore import AdamState, adam_step, as_tensor, derive_seed, ensure_finite, knn, make_generator
from .predictor import ParamStore, ParamVector, PredictorArch, loss_pred, predict
from .transport import (
    DEFAULT_ENCODER_WIDTHS,
    MODE_EQ6,
    MODE_LIE,
    MODE_NO_LIE,
    MODE_PLAIN,
    ChartIndex,
    TransportConfig,
    TransportOperator,
    build_charts,
)

log = logging.getLogger(__name__)

ERR_NON_FINITE_LOSS = "ERR_NON_FINITE_LOSS"
ERR_CONFLICTING_FLAGS = "ERR_CONFLICTING_FLAGS"

COMPONENTS = ("pred_self", "recon", "pred_cross", "consist", "embed")
ABLATIONS = ("plain", "no_lie", "no_gate", "no_chart")


@dataclass(frozen=True)
class LossWeights:
    pred_self: float = 1.0
    recon: float = 1.0
    pred_cross: float = 1.0
    consist: float = 1.0
    embed: float = 1.0

    def __post_init__(self) -> None:
        for name in COMPONENTS:
            if getattr(self, name) < 0:
                raise UsageError(f"loss weight {name} must be non-negative", context={name: getattr(self, name)})


@dataclass(frozen=True)
class AblationFlags:
    plain: bool = False
    no_lie: bool = False
    no_gate: bool = False
    no_chart: bool = False

    def __post_init__(self) -> None:
        if self.plain and self.no_lie:
            raise UsageError(
                "plain and no_lie replace the same transport core and cannot be combined",
                code=ERR_CONFLICTING_FLAGS,
                context={"flags": self.names()},
            )

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "AblationFlags":
        selected = {name.strip().lower().replace("-", "_") for name in names if name.strip()}
        unknown = selected - set(ABLATIONS)
        if unknown:
            raise UsageError(
                f"unknown ablation flag(s): {', '.join(sorted(unknown))}",
                context={"unknown": sorted(unknown), "supported": ABLATIONS},
            )
        return cls(**{name: True for name in selected})

    def names(self) -> list[str]:
        return [name for name in ABLATIONS if getattr(self, name)]

    @property
    def label(self) -> str:
        return "+".join(self.names()) or "full"


@dataclass(frozen=True)
class ArchConfig:
    """Widths of the predictor and of the transport operator."""

    predictor_widths: tuple[int, ...] = (2, 50, 50, 2)
    encoder_widths: tuple[int, ...] = DEFAULT_ENCODER_WIDTHS
    num_bases: int = 2
    field_hidden: int = 32
    plain_hidden: int = 128
    eq6: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "predictor_widths", tuple(int(w) for w in self.predictor_widths))
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        PredictorArch(self.predictor_widths)

    @property
    def latent_dim(self) -> int:
        return self.encoder_widths[-1]

    def predictor(self) -> PredictorArch:
        return PredictorArch(self.predictor_widths)

    def with_latent_dim(self, latent_dim: int) -> "ArchConfig":
        return replace(self, encoder_widths=(*self.encoder_widths[:-1], int(latent_dim)))

    def transport_config(self, descriptor_dim: int, flags: AblationFlags) -> TransportConfig:
        if flags.plain:
            mode = MODE_PLAIN
        elif flags.no_lie:
            mode = MODE_NO_LIE
        elif self.eq6:
            mode = MODE_EQ6
        else:
            mode = MODE_LIE
        return TransportConfig(
            param_dim=self.predictor().param_count,
            descriptor_dim=descriptor_dim,
            encoder_widths=self.encoder_widths,
            num_bases=self.num_bases,
            field_hidden=self.field_hidden,
            plain_hidden=self.plain_hidden,
            mode=mode,
            gated=not flags.no_gate,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    minibatch_domains: int = 10
    learning_rate: float = 1e-3
    k: int = 5
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    ablation: AblationFlags = field(default_factory=AblationFlags)
    track_every: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise UsageError("epochs must be non-negative", context={"epochs": self.epochs})
        if self.minibatch_domains < 1:
            raise UsageError(
                "minibatch_domains must be positive", context={"minibatch_domains": self.minibatch_domains}
            )
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive", context={"learning_rate": self.learning_rate})
        if self.k < 1:
            raise UsageError("chart size k must be positive", context={"k": self.k})
        if self.track_every < 0:
            raise UsageError("track_every must be non-negative", context={"track_every": self.track_every})


@dataclass(frozen=True)
class LossBreakdown:
    pred_self: float
    recon: float
    pred_cross: float
    consist: float
    embed: float
    total: float

    @classmethod
    def from_components(cls, components: Mapping[str, float], weights: LossWeights) -> "LossBreakdown":
        values = {name: float(components[name]) for name in COMPONENTS}
        total = sum(getattr(weights, name) * values[name] for name in COMPONENTS)
        return cls(total=total, **values)

    @classmethod
    def mean(cls, breakdowns: Sequence["LossBreakdown"], weights: LossWeights) -> "LossBreakdown":
        if not breakdowns:
            raise UsageError("cannot average an empty list of losses")
        averaged = {
            name: sum(getattr(b, name) for b in breakdowns) / len(breakdowns) for name in COMPONENTS
        }
        return cls.from_components(averaged, weights)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    step: int
    sources: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]
    loss: LossBreakdown


@dataclass(eq=False)
class TrainedState:
    """Everything inference needs, plus the training history."""

    arch: ArchConfig
    operator: TransportOperator
    store: ParamStore
    charts: ChartIndex
    train_descriptors: torch.Tensor
    config: TrainConfig
    history: list[LossBreakdown] = field(default_factory=list)
    tracked: list[tuple[int, float]] = field(default_factory=list)
    trained: bool = False
    epochs_completed: int = 0

    @property
    def predictor(self) -> PredictorArch:
        return self.store.arch

    def infer(self, descriptor: torch.Tensor) -> ParamVector:
        return infer(descriptor, self.store, self.operator, self.train_descriptors)

    def logits(self, descriptors: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        """Logits ``(B, n, C)`` for each descriptor row on its own inputs."""
        thetas = infer_many(descriptors, self)
        with torch.no_grad():
            return predict(self.predictor, thetas, inputs)


Observer = Callable[[StepRecord], None]
Tracker = Callable[[TrainedState], float]


def make_ablation_operator(
    flags: AblationFlags,
    arch: ArchConfig,
    descriptor_dim: int,
    generator: torch.Generator,
) -> TransportOperator:
    """Build the operator variant selected by ``flags``; ``no_chart`` only affects the neighbourhoods."""
    return TransportOperator(arch.transport_config(descriptor_dim, flags), generator)


def stack_domains(domains: Sequence[Domain]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    dims = {d.descriptor.shape[0] for d in domains}
    if len(dims) != 1:
        raise DimensionError("training descriptors differ in dimension", context={"dims": sorted(dims)})
    sizes = {d.size for d in domains}
    if len(sizes) != 1:
        raise DimensionError("training domains differ in sample count", context={"sizes": sorted(sizes)})
    descriptors = torch.stack([as_tensor(d.descriptor) for d in domains])
    inputs = torch.stack([as_tensor(d.inputs) for d in domains])
    labels = torch.stack([torch.as_tensor(d.labels, dtype=torch.int64) for d in domains])
    return descriptors, inputs, labels


def _mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-row mean squared difference."""
    return (a - b).pow(2).mean(dim=-1)


def _minibatch_loss(
    state: TrainedState,
    sources: Sequence[int],
    descriptors: torch.Tensor,
    inputs: torch.Tensor,
    labels: torch.Tensor,
) -> tuple[torch.Tensor, dict[str, float], list[tuple[int, int]]]:
    op, arch, thetas = state.operator, state.predictor, state.store.thetas
    weights = state.config.weights
    batch = len(sources)
    src = torch.tensor(sources, dtype=torch.int64)

    theta_src = thetas[src]
    pred_self = loss_pred(predict(arch, theta_src, inputs[src]), labels[src], reduction="domain").sum() / batch
    latent_src = op.encode(theta_src)
    recon = _mse(op.decode(latent_src), theta_src).sum() / batch

    pairs = state.charts.pairs(sources)
    position = {domain: row for row, domain in enumerate(sources)}
    rows = torch.tensor([position[i] for i, _ in pairs], dtype=torch.int64)
    pi = torch.tensor([i for i, _ in pairs], dtype=torch.int64)
    pj = torch.tensor([j for _, j in pairs], dtype=torch.int64)

    latent_hat = op.transport_embedding(latent_src[rows], descriptors[pi], descriptors[pj])
    theta_hat = op.decode(latent_hat)
    pred_cross = loss_pred(predict(arch, theta_hat, inputs[pj]), labels[pj], reduction="domain").sum() / batch
    consist = _mse(theta_hat, thetas[pj]).sum() / batch
    embed = _mse(latent_hat, op.encode(thetas[pj])).sum() / batch

    terms = {"pred_self": pred_self, "recon": recon, "pred_cross": pred_cross, "consist": consist, "embed": embed}
    for name in COMPONENTS:
        ensure_finite(terms[name], name)
    total = sum(getattr(weights, name) * terms[name] for name in COMPONENTS)
    return total, {name: float(terms[name].detach()) for name in COMPONENTS}, pairs


def train(
    domains: Sequence[Domain],
    config: TrainConfig,
    *,
    arch: ArchConfig | None = None,
    observer: Observer | None = None,
    tracker: Tracker | None = None,
) -> TrainedState:
    """Train per-domain thetas and the transport operator jointly.

    ``observer`` sees every optimizer step. ``tracker`` is called every
    ``config.track_every`` epochs with the in-progress state and its return
    value is recorded in ``TrainedState.tracked``.
    """
    arch = arch or ArchConfig()
    flags = config.ablation
    count = len(domains)
    needed = 2 if flags.no_chart else config.k + 1
    if count < needed:
        raise UsageError(
            f"training needs at least {needed} domains, got {count}",
            context={"domains": count, "k": config.k},
        )
    if config.minibatch_domains > count:
        raise UsageError(
            "minibatch_domains exceeds the number of training domains",
            context={"minibatch_domains": config.minibatch_domains, "domains": count},
        )
    ids = [d.id for d in domains]
    predictor = arch.predictor()
    descriptors, inputs, labels = stack_domains(domains)
    if inputs.shape[-1] != predictor.input_dim:
        raise DimensionError(
            "domain inputs do not match the predictor input width",
            context={"inputs": inputs.shape[-1], "input_dim": predictor.input_dim},
        )

    init_gen = make_generator(derive_seed(config.seed, "init"))
    store = ParamStore.create(predictor, ids, init_gen)
    operator = make_ablation_operator(flags, arch, descriptors.shape[1], init_gen)
    charts = ChartIndex.full(count) if flags.no_chart else build_charts(descriptors, config.k)
    state = TrainedState(
        arch=arch,
        operator=operator,
        store=store,
        charts=charts,
        train_descriptors=descriptors.clone(),
        config=config,
    )

    params = [store.thetas, *operator.parameters()]
    adam = AdamState.create(params, learning_rate=config.learning_rate)
    order_gen = make_generator(derive_seed(config.seed, "order"))
    log.info(
        "training started",
        extra={"domains": count, "epochs": config.epochs, "ablation": flags.label, "mode": operator.mode},
    )

    for epoch in range(config.epochs):
        order = torch.randperm(count, generator=order_gen).tolist()
        steps: list[LossBreakdown] = []
        sources: list[int] = []
        for step, start in enumerate(range(0, count, config.minibatch_domains)):
            sources = order[start : start + config.minibatch_domains]
            try:
                total, components, pairs = _minibatch_loss(state, sources, descriptors, inputs, labels)
            except NumericError as exc:
                component = exc.context.get("component", "unknown")
                raise NumericError(
                    f"non-finite {component} loss at epoch {epoch}, step {step}",
                    code=ERR_NON_FINITE_LOSS,
                    context={"component": component, "epoch": epoch, "step": step},
                ) from exc
            grads = torch.autograd.grad(total, params, allow_unused=True)
            adam_step(params, grads, adam)
            breakdown = LossBreakdown.from_components(components, config.weights)
            steps.append(breakdown)
            if observer is not None:
                observer(StepRecord(epoch, step, tuple(sources), tuple(pairs), breakdown))

        epoch_loss = LossBreakdown.mean(steps, config.weights)
        state.history.append(epoch_loss)
        state.epochs_completed = epoch + 1
        log.info("epoch finished", extra={"epoch": epoch, **epoch_loss.as_dict()})
        if log.isEnabledFor(logging.DEBUG):
            spectral = operator.field_spectral_norm(descriptors[torch.tensor(sources)])
            log.debug("field spectral norm", extra={"epoch": epoch, "spectral_norm": spectral})
        if tracker is not None and config.track_every and (epoch + 1) % config.track_every == 0:
            state.tracked.append((epoch + 1, float(tracker(state))))

    state.trained = state.epochs_completed > 0
    return state


def nearest_training(descriptor: torch.Tensor, train_descriptors: torch.Tensor) -> int:
    return knn(as_tensor(descriptor), train_descriptors, 1)[0]


def infer(
    descriptor: torch.Tensor,
    store: ParamStore,
    op: TransportOperator,
    train_descriptors: torch.Tensor,
) -> ParamVector:
    """Transport the nearest training domain's theta to ``descriptor``."""
    if len(store) == 0:
        raise StateError("the parameter store is empty", code="ERR_EMPTY_STORE")
    descriptor = as_tensor(descriptor)
    source = nearest_training(descriptor, train_descriptors)
    with torch.no_grad():
        theta = op(store.thetas[source], train_descriptors[source], descriptor)
    return ParamVector(theta.detach(), None)


def infer_many(descriptors: torch.Tensor, state: TrainedState) -> torch.Tensor:
    """Inferred thetas ``(B, D)`` for each descriptor row."""
    if len(state.store) == 0:
        raise StateError("the parameter store is empty", code="ERR_EMPTY_STORE")
    descriptors = as_tensor(descriptors)
    sources = torch.tensor([nearest_training(z, state.train_descriptors) for z in descriptors], dtype=torch.int64)
    with torch.no_grad():
        return state.operator(state.store.thetas[sources], state.train_descriptors[sources], descriptors).detach()


def require_trained(state: TrainedState | None) -> TrainedState:
    if state is None or not state.trained:
        raise StateError("a trained state is required", context={"trained": False})
    return state


def snapshot(module: torch.nn.Module) -> dict[str, Any]:
    """Detached copy of a module's tensors, for before/after comparisons."""
    return {name: tensor.detach().clone() for name, tensor in module.state_dict().items()}


__all__ = (
    "ABLATIONS",
    "AblationFlags",
    "ArchConfig",
    "COMPONENTS",
    "LossBreakdown",
    "LossWeights",
    "StepRecord",
    "TrainConfig",
    "TrainedState",
    "infer",
    "infer_many",
    "make_ablation_operator",
    "nearest_training",
    "require_trained",
    "snapshot",
    "stack_domains",
    "train",
)

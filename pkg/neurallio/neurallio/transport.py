"""The Lie transport operator and the chart index that restricts it.

Parameters ``theta`` are encoded to a latent ``e``, descriptors are gated by
the source gate ``m(z_i)``, and the latent is moved by a product of matrix
exponentials ``exp(c_B V_B) ... exp(c_1 V_1)``, where the basis matrices
``V_b`` come from field networks evaluated at the gated source descriptor and
the coefficients ``c`` from a bias-free linear map of the gated descriptor
difference. The result is decoded back to parameter space.

Field output layers start at zero, so every factor is the identity until
training moves them, and ``c(0) = 0`` holds for any weights.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import torch
from torch import nn

from .errors import ChartError, DimensionError, UsageError
from .numcore import DTYPE, as_tensor, ensure_finite, init_linear_, knn, matrix_exp

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PRODUCT_ORDER = "ascending-left"

MODE_LIE = "lie"
MODE_EQ6 = "eq6"
MODE_PLAIN = "plain"
MODE_NO_LIE = "no_lie"
MODES = (MODE_LIE, MODE_EQ6, MODE_PLAIN, MODE_NO_LIE)

DEFAULT_ENCODER_WIDTHS: tuple[int, ...] = (1024, 512, 128, 32)
GATE_INIT_SCALE = 2.0


@dataclass(frozen=True)
class TransportConfig:
    """Shape and variant of a :class:`TransportOperator`.

    ``latent_dim`` is the last encoder width. In ``eq6`` mode there is one
    field per descriptor coordinate and the coefficients are the raw gated
    descriptor differences.
    """

    param_dim: int
    descriptor_dim: int
    encoder_widths: tuple[int, ...] = DEFAULT_ENCODER_WIDTHS
    num_bases: int = 2
    field_hidden: int = 32
    plain_hidden: int = 128
    mode: str = MODE_LIE
    gated: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        if self.mode not in MODES:
            raise UsageError(f"unknown transport mode '{self.mode}'", context={"mode": self.mode, "supported": MODES})
        sizes = {
            "param_dim": self.param_dim,
            "descriptor_dim": self.descriptor_dim,
            "num_bases": self.num_bases,
            "field_hidden": self.field_hidden,
            "plain_hidden": self.plain_hidden,
        }
        for name, value in sizes.items():
            if int(value) < 1:
                raise UsageError(f"{name} must be positive", context={name: value})
        if not self.encoder_widths or min(self.encoder_widths) < 1:
            raise UsageError("encoder widths must be positive", context={"encoder_widths": list(self.encoder_widths)})

    @property
    def latent_dim(self) -> int:
        return self.encoder_widths[-1]

    @property
    def bases(self) -> int:
        return self.descriptor_dim if self.mode == MODE_EQ6 else self.num_bases

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["encoder_widths"] = list(self.encoder_widths)
        return payload

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "TransportConfig":
        data = dict(payload)
        data["encoder_widths"] = tuple(data.get("encoder_widths", DEFAULT_ENCODER_WIDTHS))
        return cls(**data)


def _linear(fan_in: int, fan_out: int, *, bias: bool = True) -> nn.Linear:
    return nn.Linear(fan_in, fan_out, bias=bias, dtype=DTYPE)


def _mlp(widths: Sequence[int]) -> nn.Sequential:
    """Linear layers with ReLU between them and none after the last."""
    layers: list[nn.Module] = []
    for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if index:
            layers.append(nn.ReLU())
        layers.append(_linear(fan_in, fan_out))
    return nn.Sequential(*layers)


class ParamAutoencoder(nn.Module):
    """``f_e: R^D -> R^m`` and its mirrored decoder ``f_d``."""

    def __init__(self, param_dim: int, encoder_widths: Sequence[int]) -> None:
        super().__init__()
        widths = [param_dim, *encoder_widths]
        self.encoder = _mlp(widths)
        self.decoder = _mlp(widths[::-1])

    def encode(self, theta: torch.Tensor) -> torch.Tensor:
        return self.encoder(theta)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        return self.decoder(latent)


class DescriptorGate(nn.Module):
    """``m(z) = Sigmoid(W z) * w``; both descriptors of a pair use the source gate."""

    def __init__(self, descriptor_dim: int, *, enabled: bool = True) -> None:
        super().__init__()
        self.enabled = enabled
        self.weight = nn.Parameter(torch.zeros(descriptor_dim, descriptor_dim, dtype=DTYPE))
        self.scale = nn.Parameter(torch.full((descriptor_dim,), GATE_INIT_SCALE, dtype=DTYPE))

    def mask(self, z: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return torch.ones_like(z)
        return torch.sigmoid(z @ self.weight.T) * self.scale

    def forward(self, z_i: torch.Tensor, z_j: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        m = self.mask(z_i)
        return z_i * m, z_j * m


class LieFieldBank(nn.Module):
    """Basis field networks ``f_v^b`` and the coefficient network ``f_c``."""

    def __init__(
        self,
        descriptor_dim: int,
        latent_dim: int,
        num_bases: int,
        hidden: int,
        *,
        coefficient_net: bool = True,
    ) -> None:
        super().__init__()
        self.latent_dim = latent_dim
        self.num_bases = num_bases
        self.fields = nn.ModuleList(
            _mlp([descriptor_dim, hidden, latent_dim * latent_dim]) for _ in range(num_bases)
        )
        self.coefficient = _linear(descriptor_dim, num_bases, bias=False) if coefficient_net else None

    def basis(self, z_source: torch.Tensor) -> torch.Tensor:
        """Basis matrices ``(..., B, m, m)`` at the gated source descriptor."""
        m = self.latent_dim
        return torch.stack([f(z_source).reshape(*z_source.shape[:-1], m, m) for f in self.fields], dim=-3)

    def coefficients(self, delta: torch.Tensor) -> torch.Tensor:
        if self.coefficient is None:
            if delta.shape[-1] != self.num_bases:
                raise DimensionError(
                    "raw coefficients need one field per descriptor coordinate",
                    context={"descriptor_dim": delta.shape[-1], "num_bases": self.num_bases},
                )
            return delta
        return self.coefficient(delta)


class PlainTransport(nn.Module):
    """Direct network on ``(z_i, z_j, e_i)``; no group structure."""

    def __init__(self, descriptor_dim: int, latent_dim: int, hidden: int) -> None:
        super().__init__()
        self.net = _mlp([2 * descriptor_dim + latent_dim, hidden, hidden, latent_dim])

    def forward(self, latent: torch.Tensor, z_i: torch.Tensor, z_j: torch.Tensor) -> torch.Tensor:
        z_i, z_j = torch.broadcast_tensors(z_i, z_j)
        batch = torch.broadcast_shapes(latent.shape[:-1], z_i.shape[:-1])
        stacked = torch.cat(
            [
                z_i.expand(*batch, z_i.shape[-1]),
                z_j.expand(*batch, z_j.shape[-1]),
                latent.expand(*batch, latent.shape[-1]),
            ],
            dim=-1,
        )
        return self.net(stacked)


def gate_descriptors(
    z_i: torch.Tensor, z_j: torch.Tensor, gate: DescriptorGate
) -> tuple[torch.Tensor, torch.Tensor]:
    """Modulate both descriptors by the source gate ``m(z_i)``."""
    if z_i.shape[-1] != z_j.shape[-1] or z_i.shape[-1] != gate.weight.shape[0]:
        raise DimensionError(
            "descriptor dimensions disagree",
            context={"z_i": tuple(z_i.shape), "z_j": tuple(z_j.shape), "gate": gate.weight.shape[0]},
        )
    return gate(z_i, z_j)


def transport_latent(
    latent: torch.Tensor,
    gated_source: torch.Tensor,
    gated_target: torch.Tensor,
    bank: LieFieldBank,
    *,
    exponentiate: bool = True,
) -> torch.Tensor:
    """Apply ``exp(c_B V_B) ... exp(c_1 V_1)`` to ``latent``.

    With ``exponentiate=False`` the linear map ``sum_b c_b V_b`` is applied
    instead, with no identity term.
    """
    if latent.shape[-1] != bank.latent_dim:
        raise DimensionError(
            f"latent has width {latent.shape[-1]}, expected {bank.latent_dim}",
            context={"latent": tuple(latent.shape)},
        )
    coefficients = bank.coefficients(gated_target - gated_source)
    basis = bank.basis(gated_source)
    scaled = coefficients[..., None, None] * basis
    ensure_finite(scaled, "transport generators")
    if exponentiate:
        factors = matrix_exp(scaled)
        group = factors[..., 0, :, :]
        for b in range(1, bank.num_bases):
            group = factors[..., b, :, :] @ group
    else:
        group = scaled.sum(dim=-3)
    moved = (group @ latent.unsqueeze(-1)).squeeze(-1)
    return ensure_finite(moved, "transported latent")


@dataclass(frozen=True)
class ChartIndex:
    """Directed neighbour lists over the training descriptors."""

    neighbors: tuple[tuple[int, ...], ...]
    k: int
    complete: bool = field(default=False)

    @classmethod
    def full(cls, count: int) -> "ChartIndex":
        """Every other domain is a neighbour."""
        neighbors = tuple(tuple(j for j in range(count) if j != i) for i in range(count))
        return cls(neighbors=neighbors, k=max(count - 1, 0), complete=True)

    def __len__(self) -> int:
        return len(self.neighbors)

    def contains(self, source: int, target: int) -> bool:
        return 0 <= source < len(self.neighbors) and target in self.neighbors[source]

    def check(self, source: int, target: int) -> None:
        if not self.contains(source, target):
            raise ChartError(
                f"domain {target} is outside the chart of domain {source}",
                context={"source": source, "target": target, "k": self.k},
            )

    def pairs(self, sources: Sequence[int]) -> list[tuple[int, int]]:
        return [(i, j) for i in sources for j in self.neighbors[i]]

    def to_dict(self) -> dict[str, Any]:
        return {"k": self.k, "complete": self.complete, "neighbors": [list(n) for n in self.neighbors]}

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "ChartIndex":
        return cls(
            neighbors=tuple(tuple(int(j) for j in n) for n in payload["neighbors"]),
            k=int(payload["k"]),
            complete=bool(payload.get("complete", False)),
        )


def build_charts(descriptors: torch.Tensor, k: int) -> ChartIndex:
    """k nearest other descriptors per row; ties go to the lower index."""
    points = as_tensor(descriptors)
    count = points.shape[0]
    if not 1 <= k < count:
        raise UsageError(
            f"chart size k={k} needs 1 <= k < {count}",
            context={"k": k, "descriptors": count},
        )
    neighbors = []
    for i in range(count):
        ranked = knn(points[i], points, k + 1)
        neighbors.append(tuple(j for j in ranked if j != i)[:k])
    return ChartIndex(neighbors=tuple(neighbors), k=k)


class TransportOperator(nn.Module):
    """Encoder, decoder, gate and transport core, trained jointly."""

    def __init__(self, config: TransportConfig, generator: torch.Generator) -> None:
        super().__init__()
        self.config = config
        m, d = config.latent_dim, config.descriptor_dim
        self.autoencoder = ParamAutoencoder(config.param_dim, config.encoder_widths)
        self.gate = DescriptorGate(d, enabled=config.gated)
        self.bank: LieFieldBank | None = None
        self.plain: PlainTransport | None = None
        if config.mode == MODE_PLAIN:
            self.plain = PlainTransport(d, m, config.plain_hidden)
        else:
            self.bank = LieFieldBank(
                d, m, config.bases, config.field_hidden, coefficient_net=config.mode != MODE_EQ6
            )
        self._initialize(generator)

    def _initialize(self, generator: torch.Generator) -> None:
        field_outputs = set()
        if self.bank is not None:
            field_outputs = {id(f[-1]) for f in self.bank.fields}
        for module in self.modules():
            if isinstance(module, nn.Linear):
                init_linear_(module, generator, zero=id(module) in field_outputs)

    @property
    def mode(self) -> str:
        return self.config.mode

    def encode(self, theta: torch.Tensor) -> torch.Tensor:
        return self.autoencoder.encode(theta)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        return self.autoencoder.decode(latent)

    def gate_descriptors(self, z_i: torch.Tensor, z_j: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return gate_descriptors(z_i, z_j, self.gate)

    def transport_embedding(self, latent: torch.Tensor, z_i: torch.Tensor, z_j: torch.Tensor) -> torch.Tensor:
        """Gate the descriptor pair with the source gate and move ``latent`` from ``z_i`` to ``z_j``."""
        gated_i, gated_j = self.gate_descriptors(z_i, z_j)
        if self.plain is not None:
            return ensure_finite(self.plain(latent, gated_i, gated_j), "transported latent")
        assert self.bank is not None
        return transport_latent(
            latent, gated_i, gated_j, self.bank, exponentiate=self.config.mode != MODE_NO_LIE
        )

    def forward(self, theta: torch.Tensor, z_i: torch.Tensor, z_j: torch.Tensor) -> torch.Tensor:
        return self.decode(self.transport_embedding(self.encode(theta), z_i, z_j))

    def field_spectral_norm(self, z_source: torch.Tensor) -> float:
        """Largest spectral norm over the basis matrices at ``z_source``; 0 without a field bank."""
        if self.bank is None:
            return 0.0
        with torch.no_grad():
            gated, _ = self.gate_descriptors(z_source, z_source)
            basis = self.bank.basis(gated)
            return float(torch.linalg.matrix_norm(basis, ord=2).max())

    def describe(self) -> dict[str, Any]:
        """Manifest describing the checkpointed tensors and how to interpret them."""
        return {
            "format_version": FORMAT_VERSION,
            "product_order": PRODUCT_ORDER,
            "config": self.config.to_dict(),
            "latent_dim": self.config.latent_dim,
            "num_bases": self.config.bases,
            "parameters": [
                {"name": name, "shape": list(tensor.shape)} for name, tensor in self.state_dict().items()
            ],
        }


def transport_params(
    theta: torch.Tensor,
    z_i: torch.Tensor,
    z_j: torch.Tensor,
    op: TransportOperator,
    *,
    chart: ChartIndex | None = None,
    pair: tuple[int, int] | None = None,
) -> torch.Tensor:
    """Decode the transported encoding of ``theta`` from ``z_i`` to ``z_j``.

    Passing ``chart`` enables strict mode: ``pair`` names the (source, target)
    training indices and must be a chart edge.
    """
    if theta.shape[-1] != op.config.param_dim:
        raise DimensionError(
            f"theta has length {theta.shape[-1]}, expected {op.config.param_dim}",
            context={"shape": tuple(theta.shape)},
        )
    if chart is not None:
        if pair is None:
            raise UsageError("strict chart mode needs the (source, target) indices")
        chart.check(*pair)
    return op(theta, z_i, z_j)


__all__ = (
    "ChartIndex",
    "DescriptorGate",
    "FORMAT_VERSION",
    "LieFieldBank",
    "MODES",
    "MODE_EQ6",
    "MODE_LIE",
    "MODE_NO_LIE",
    "MODE_PLAIN",
    "PRODUCT_ORDER",
    "ParamAutoencoder",
    "PlainTransport",
    "TransportConfig",
    "TransportOperator",
    "build_charts",
    "gate_descriptors",
    "transport_latent",
    "transport_params",
)

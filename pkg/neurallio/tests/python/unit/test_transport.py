"""Unit tests for the transport operator and the chart index."""
from __future__ import annotations

import pytest
import torch
from torch.func import functional_call

from neurallio import numcore, transport
from neurallio.errors import ChartError, DimensionError, UsageError
from neurallio.numcore import DTYPE, as_tensor, make_generator
from neurallio.transport import ChartIndex, TransportConfig, TransportOperator


def _operator(mode: str = transport.MODE_LIE, *, gated: bool = True, descriptor_dim: int = 2) -> TransportOperator:
    config = TransportConfig(
        param_dim=6,
        descriptor_dim=descriptor_dim,
        encoder_widths=(5, 3),
        num_bases=2,
        field_hidden=4,
        plain_hidden=8,
        mode=mode,
        gated=gated,
    )
    return TransportOperator(config, make_generator(0))


def _randomize_fields(op: TransportOperator) -> None:
    assert op.bank is not None
    generator = make_generator(11)
    with torch.no_grad():
        for field_net in op.bank.fields:
            last = field_net[-1]
            last.weight.copy_(torch.randn(last.weight.shape, dtype=DTYPE, generator=generator) * 0.3)
            last.bias.copy_(torch.randn(last.bias.shape, dtype=DTYPE, generator=generator) * 0.3)


def test_fresh_operator_transports_as_identity() -> None:
    op = _operator()
    latent = torch.randn(4, 3, dtype=DTYPE, generator=make_generator(1))

    moved = op.transport_embedding(latent, as_tensor([1.0, 2.0]), as_tensor([4.0, -3.0]))

    assert torch.allclose(moved, latent, atol=1e-14)
    assert op.field_spectral_norm(as_tensor([1.0, 2.0])) == 0.0


def test_zero_displacement_is_identity_for_any_fields() -> None:
    op = _operator()
    _randomize_fields(op)
    latent = torch.randn(3, dtype=DTYPE, generator=make_generator(2))
    z = as_tensor([3.0, 7.0])

    assert torch.allclose(op.transport_embedding(latent, z, z), latent, atol=1e-14)
    assert op.field_spectral_norm(z) > 0.0


def test_same_source_displacements_compose_additively() -> None:
    bank = transport.LieFieldBank(2, 3, 1, 4)
    generator = make_generator(6)
    with torch.no_grad():
        for param in bank.parameters():
            param.copy_(torch.randn(param.shape, dtype=DTYPE, generator=generator) * 0.5)
    latent = torch.randn(3, dtype=DTYPE, generator=generator)
    source, step = as_tensor([1.0, -0.5]), as_tensor([0.3, 0.2])

    twice = transport.transport_latent(
        transport.transport_latent(latent, source, source + step, bank), source, source + step, bank
    )

    assert torch.allclose(twice, transport.transport_latent(latent, source, source + 2 * step, bank), atol=1e-8)


def test_basis_products_apply_in_ascending_left_order() -> None:
    config = TransportConfig(
        param_dim=3, descriptor_dim=2, encoder_widths=(4, 2), num_bases=2, field_hidden=3, gated=False
    )
    op = TransportOperator(config, make_generator(0))
    assert op.bank is not None and op.bank.coefficient is not None
    with torch.no_grad():
        op.bank.fields[0][-1].bias.copy_(as_tensor([0.0, 1.0, 0.0, 0.0]))
        op.bank.fields[1][-1].bias.copy_(as_tensor([0.0, 0.0, 1.0, 0.0]))
        op.bank.coefficient.weight.copy_(torch.eye(2, dtype=DTYPE))
    a, b = 0.5, -1.5
    latent = as_tensor([1.0, 2.0])

    moved = op.transport_embedding(latent, as_tensor([0.0, 0.0]), as_tensor([a, b]))

    # exp(b V2) exp(a V1) = [[1, a], [b, a b + 1]] for these nilpotent generators.
    expected = as_tensor([[1.0, a], [b, a * b + 1.0]]) @ latent
    assert torch.allclose(moved, expected, atol=1e-12)


def test_no_lie_mode_applies_the_raw_generator_sum() -> None:
    op = _operator(transport.MODE_NO_LIE)
    latent = as_tensor([1.0, -1.0, 2.0])

    moved = op.transport_embedding(latent, as_tensor([0.0, 0.0]), as_tensor([1.0, 1.0]))

    assert torch.equal(moved, torch.zeros(3, dtype=DTYPE))


def test_eq6_mode_uses_one_field_per_descriptor_coordinate() -> None:
    op = _operator(transport.MODE_EQ6, descriptor_dim=3)

    assert op.config.bases == 3
    assert op.bank is not None and op.bank.coefficient is None
    delta = as_tensor([1.0, 2.0, 3.0])
    assert torch.equal(op.bank.coefficients(delta), delta)


def test_plain_mode_has_no_field_bank() -> None:
    op = _operator(transport.MODE_PLAIN)
    theta = torch.randn(5, 6, dtype=DTYPE, generator=make_generator(3))

    moved = op(theta, as_tensor([0.0, 1.0]), as_tensor([2.0, 3.0]))

    assert op.bank is None
    assert moved.shape == (5, 6)
    assert op.field_spectral_norm(as_tensor([0.0, 1.0])) == 0.0


def test_gate_starts_as_unit_mask() -> None:
    gate = transport.DescriptorGate(3)
    z_i, z_j = as_tensor([1.0, -4.0, 2.0]), as_tensor([0.5, 0.5, 0.5])

    gated_i, gated_j = transport.gate_descriptors(z_i, z_j, gate)

    assert torch.allclose(gated_i, z_i)
    assert torch.allclose(gated_j, z_j)


def test_gate_masks_both_descriptors_with_the_source_gate() -> None:
    gate = transport.DescriptorGate(2)
    with torch.no_grad():
        gate.weight.copy_(as_tensor([[1.0, 0.0], [0.0, -1.0]]))
    z_i, z_j = as_tensor([2.0, 3.0]), as_tensor([5.0, 7.0])

    gated_i, gated_j = gate(z_i, z_j)

    mask = torch.sigmoid(as_tensor([2.0, -3.0])) * 2.0
    assert torch.allclose(gated_i, z_i * mask)
    assert torch.allclose(gated_j, z_j * mask)


@pytest.mark.parametrize("seed", range(10))
def test_gate_gradient_matches_finite_differences(seed: int) -> None:
    gate = transport.DescriptorGate(3)
    generator = make_generator(seed)
    weight = torch.randn(3, 3, dtype=DTYPE, generator=generator)
    scale = torch.randn(3, dtype=DTYPE, generator=generator)
    z_i = torch.randn(3, dtype=DTYPE, generator=generator)
    z_j = torch.randn(3, dtype=DTYPE, generator=generator)

    def objective(w: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        gated_i, gated_j = functional_call(gate, {"weight": w, "scale": s}, (z_i, z_j))
        return (gated_i + 2.0 * gated_j).pow(2).sum()

    assert numcore.grad_check(objective, [weight, scale]) < 1e-4


def test_disabled_gate_passes_descriptors_through() -> None:
    gate = transport.DescriptorGate(2, enabled=False)
    with torch.no_grad():
        gate.weight.fill_(5.0)

    assert torch.equal(gate.mask(as_tensor([1.0, 2.0])), torch.ones(2, dtype=DTYPE))


def test_gate_rejects_mismatched_descriptor_dims() -> None:
    with pytest.raises(DimensionError):
        transport.gate_descriptors(as_tensor([1.0, 2.0]), as_tensor([1.0, 2.0, 3.0]), transport.DescriptorGate(2))


def test_transport_params_round_trips_theta_shape_and_checks_length() -> None:
    op = _operator()
    theta = torch.zeros(6, dtype=DTYPE)

    assert transport.transport_params(theta, as_tensor([0.0, 0.0]), as_tensor([1.0, 1.0]), op).shape == (6,)
    with pytest.raises(DimensionError):
        transport.transport_params(torch.zeros(5, dtype=DTYPE), as_tensor([0.0, 0.0]), as_tensor([1.0, 1.0]), op)


def test_strict_chart_mode_rejects_pairs_outside_the_chart() -> None:
    op = _operator()
    chart = transport.build_charts(as_tensor([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]]), k=1)
    theta = torch.zeros(6, dtype=DTYPE)
    z = as_tensor([0.0, 0.0])

    transport.transport_params(theta, z, z, op, chart=chart, pair=(0, 1))
    with pytest.raises(ChartError) as excinfo:
        transport.transport_params(theta, z, z, op, chart=chart, pair=(0, 2))
    assert excinfo.value.code == "ERR_CHART_VIOLATION"
    with pytest.raises(UsageError):
        transport.transport_params(theta, z, z, op, chart=chart)


def test_build_charts_excludes_self_and_breaks_ties_low() -> None:
    points = as_tensor([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])

    chart = transport.build_charts(points, k=2)

    assert chart.neighbors[0] == (1, 2)
    assert chart.neighbors[3] == (0, 1)
    assert chart.k == 2
    assert chart.contains(1, 0)
    assert not chart.contains(3, 2)
    assert chart.pairs([0]) == [(0, 1), (0, 2)]


def test_build_charts_validates_k() -> None:
    points = as_tensor([[0.0, 0.0], [1.0, 0.0]])

    with pytest.raises(UsageError):
        transport.build_charts(points, k=2)
    with pytest.raises(UsageError):
        transport.build_charts(points, k=0)


def test_full_chart_links_every_pair() -> None:
    chart = ChartIndex.full(3)

    assert chart.neighbors == ((1, 2), (0, 2), (0, 1))
    assert chart.complete
    assert ChartIndex.from_dict(chart.to_dict()) == chart


def test_describe_lists_parameters_in_state_dict_order() -> None:
    op = _operator()

    manifest = op.describe()

    assert manifest["product_order"] == transport.PRODUCT_ORDER
    assert manifest["num_bases"] == 2
    assert manifest["latent_dim"] == 3
    assert [entry["name"] for entry in manifest["parameters"]] == list(op.state_dict())
    assert TransportConfig.from_dict(manifest["config"]) == op.config


def test_gradients_reach_every_lie_submodule() -> None:
    op = _operator()
    _randomize_fields(op)
    theta = torch.randn(2, 6, dtype=DTYPE, generator=make_generator(5))
    z_i = as_tensor([[1.0, 2.0], [3.0, 1.0]])
    z_j = as_tensor([[2.0, 0.0], [1.0, 1.0]])

    op(theta, z_i, z_j).pow(2).sum().backward()

    assert op.bank is not None and op.bank.coefficient is not None
    assert op.bank.coefficient.weight.grad is not None
    assert op.gate.weight.grad is not None
    assert op.autoencoder.encoder[0].weight.grad is not None


def test_config_rejects_unknown_mode_and_bad_sizes() -> None:
    with pytest.raises(UsageError):
        TransportConfig(param_dim=4, descriptor_dim=2, mode="affine")
    with pytest.raises(UsageError):
        TransportConfig(param_dim=4, descriptor_dim=0)
    with pytest.raises(UsageError):
        TransportConfig(param_dim=4, descriptor_dim=2, encoder_widths=())

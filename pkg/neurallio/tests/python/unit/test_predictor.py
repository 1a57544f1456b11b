"""Unit tests for the functional predictor and the parameter store."""
from __future__ import annotations

import math
import random

import pytest
import torch

from neurallio import numcore, predictor
from neurallio.errors import DimensionError, StateError, UsageError
from neurallio.numcore import DTYPE, as_tensor, make_generator
from neurallio.predictor import ParamStore, PredictorArch


def test_default_arch_has_2802_parameters() -> None:
    assert PredictorArch().param_count == 2802
    assert PredictorArch((2, 4, 2)).param_count == 2 * 4 + 4 + 4 * 2 + 2


def test_arch_round_trips_through_dict_and_checks_count() -> None:
    arch = PredictorArch((2, 3, 2))

    assert PredictorArch.from_dict(arch.to_dict()) == arch
    with pytest.raises(DimensionError):
        PredictorArch.from_dict({"widths": [2, 3, 2], "param_count": 5})


def test_arch_rejects_degenerate_widths() -> None:
    with pytest.raises(UsageError):
        PredictorArch((2,))
    with pytest.raises(UsageError):
        PredictorArch((2, 0, 2))


def test_flatten_layout_is_weights_then_bias_per_layer() -> None:
    arch = PredictorArch((2, 3, 2))
    theta = torch.arange(arch.param_count, dtype=DTYPE)

    (w1, b1), (w2, b2) = predictor.unflatten(arch, theta)

    assert w1.tolist() == [[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]
    assert b1.tolist() == [6.0, 7.0, 8.0]
    assert w2.shape == (3, 2)
    assert b2.tolist() == [15.0, 16.0]
    assert torch.equal(predictor.flatten([(w1, b1), (w2, b2)]), theta)


def test_flatten_inverts_unflatten_for_random_architectures() -> None:
    rng = random.Random(0)
    generator = make_generator(0)
    for _ in range(100):
        arch = PredictorArch(tuple(rng.randint(1, 6) for _ in range(rng.randint(2, 4) + 1)))
        theta = torch.randn(arch.param_count, dtype=DTYPE, generator=generator)

        assert torch.equal(predictor.flatten(predictor.unflatten(arch, theta)), theta)


def test_unflatten_rejects_wrong_length() -> None:
    with pytest.raises(DimensionError):
        predictor.unflatten(PredictorArch((2, 3, 2)), torch.zeros(10, dtype=DTYPE))


def test_predict_applies_relu_between_layers_only() -> None:
    arch = PredictorArch((1, 1, 1))
    # w1=-1, b1=0, w2=1, b2=-2: relu kills the hidden unit for positive input.
    theta = as_tensor([-1.0, 0.0, 1.0, -2.0])

    logits = predictor.predict(arch, theta, as_tensor([[3.0], [-3.0]]))

    assert logits.tolist() == [[-2.0], [1.0]]


def test_predict_broadcasts_batched_thetas() -> None:
    arch = PredictorArch((2, 3, 2))
    generator = make_generator(0)
    thetas = torch.stack([predictor.init_shared_theta(arch, generator) for _ in range(4)])
    inputs = torch.randn(4, 7, 2, dtype=DTYPE, generator=make_generator(1))

    batched = predictor.predict(arch, thetas, inputs)

    assert batched.shape == (4, 7, 2)
    for index in range(4):
        assert torch.allclose(batched[index], predictor.predict(arch, thetas[index], inputs[index]))


def test_predict_commutes_with_sample_permutation() -> None:
    arch = PredictorArch((2, 5, 2))
    generator = make_generator(2)
    theta = torch.randn(arch.param_count, dtype=DTYPE, generator=generator)
    inputs = torch.randn(12, 2, dtype=DTYPE, generator=generator)
    order = torch.randperm(12, generator=generator)

    permuted = predictor.predict(arch, theta, inputs[order])

    assert torch.allclose(permuted, predictor.predict(arch, theta, inputs)[order], rtol=0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_prediction_loss_gradient_matches_finite_differences(seed: int) -> None:
    arch = PredictorArch((2, 4, 2))
    generator = make_generator(seed)
    theta = torch.randn(arch.param_count, dtype=DTYPE, generator=generator)
    inputs = torch.randn(6, 2, dtype=DTYPE, generator=generator)
    labels = torch.randint(0, 2, (6,), generator=generator)

    error = numcore.grad_check(
        lambda t, x: predictor.loss_pred(predictor.predict(arch, t, x), labels), [theta, inputs]
    )

    assert error < 1e-4


def test_predict_checks_input_width() -> None:
    arch = PredictorArch((2, 3, 2))

    with pytest.raises(DimensionError):
        predictor.predict(arch, torch.zeros(arch.param_count, dtype=DTYPE), torch.zeros(5, 3, dtype=DTYPE))


def test_loss_pred_of_uniform_logits_is_log_two() -> None:
    loss = predictor.loss_pred(torch.zeros(6, 2, dtype=DTYPE), [0, 1, 0, 1, 1, 0])

    assert float(loss) == pytest.approx(math.log(2.0))


def test_loss_pred_per_domain_reduction() -> None:
    logits = torch.zeros(3, 4, 2, dtype=DTYPE)
    logits[1, :, 0] = 50.0
    labels = torch.zeros(3, 4, dtype=torch.int64)

    per_domain = predictor.loss_pred(logits, labels, reduction="domain")

    assert per_domain.shape == (3,)
    assert float(per_domain[1]) == pytest.approx(0.0, abs=1e-12)
    assert float(per_domain[0]) == pytest.approx(math.log(2.0))


def test_loss_pred_rejects_out_of_range_labels() -> None:
    with pytest.raises(UsageError):
        predictor.loss_pred(torch.zeros(2, 2, dtype=DTYPE), [0, 2])
    with pytest.raises(DimensionError):
        predictor.loss_pred(torch.zeros(2, 2, dtype=DTYPE), [0, 1, 1])
    with pytest.raises(UsageError):
        predictor.loss_pred(torch.zeros(2, 2, dtype=DTYPE), [0, 1], reduction="sum")


def test_error_rate_breaks_ties_to_the_lower_class() -> None:
    logits = as_tensor([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])

    assert predictor.error_rate(logits, [0, 1, 1, 1]) == pytest.approx(50.0)
    assert predictor.error_rate(torch.zeros(0, 2, dtype=DTYPE), []) == 0.0


def test_error_rate_complements_under_negated_logits_or_flipped_labels() -> None:
    generator = make_generator(3)
    logits = torch.randn(40, 2, dtype=DTYPE, generator=generator)
    labels = torch.randint(0, 2, (40,), generator=generator)

    error = predictor.error_rate(logits, labels)

    assert error + predictor.error_rate(-logits, labels) == pytest.approx(100.0)
    assert error + predictor.error_rate(logits, 1 - labels) == pytest.approx(100.0)


def test_domain_error_rates_per_batch_entry() -> None:
    logits = torch.zeros(2, 4, 2, dtype=DTYPE)
    labels = torch.tensor([[0, 0, 0, 0], [1, 1, 0, 0]])

    assert predictor.domain_error_rates(logits, labels) == [0.0, 50.0]


def test_init_shared_theta_has_zero_biases() -> None:
    arch = PredictorArch((2, 3, 2))

    (_, b1), (_, b2) = predictor.unflatten(arch, predictor.init_shared_theta(arch, make_generator(0)))

    assert not b1.any() and not b2.any()


def test_param_store_starts_from_one_shared_draw() -> None:
    arch = PredictorArch((2, 3, 2))

    store = ParamStore.create(arch, [7, 3, 9], make_generator(0))

    assert store.ids == (7, 3, 9)
    assert len(store) == 3
    assert 3 in store and 4 not in store
    assert torch.equal(store.thetas[0], store.thetas[2])
    assert store.get(9).domain_id == 9
    assert [vector.domain_id for vector in store] == [7, 3, 9]
    assert len(store.get(7)) == arch.param_count


def test_param_store_unknown_id_is_a_state_error() -> None:
    store = ParamStore.create(PredictorArch((2, 3, 2)), [1], make_generator(0))

    with pytest.raises(StateError) as excinfo:
        store.get(2)
    assert excinfo.value.code == "ERR_UNTRAINED_STATE"


def test_empty_param_store_uses_empty_store_code() -> None:
    arch = PredictorArch((2, 3, 2))
    store = ParamStore(arch, [], torch.empty(0, arch.param_count, dtype=DTYPE))

    with pytest.raises(StateError) as excinfo:
        store.get(0)
    assert excinfo.value.code == "ERR_EMPTY_STORE"


def test_param_store_rejects_duplicates_and_bad_shapes() -> None:
    arch = PredictorArch((2, 3, 2))

    with pytest.raises(UsageError):
        ParamStore(arch, [1, 1], torch.zeros(2, arch.param_count, dtype=DTYPE))
    with pytest.raises(DimensionError):
        ParamStore(arch, [1, 2], torch.zeros(3, arch.param_count, dtype=DTYPE))

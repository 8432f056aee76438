import numpy as np
import pytest

from config.config import VARIANTS
from src.core.gradcheck import check_gradients, relative_error, worst_block
from src.core.network import DIDANetwork, init_params
from tests.conftest import random_prepared, random_table

D_G, D, D_H, TABLE_SIZE = 5, 7, 3, 12


def _network(variant: str, seed: int = 0) -> DIDANetwork:
    rng = np.random.default_rng(seed)
    params = init_params(D_G, D, D_H, seed)
    # non-zero biases so every gate path is exercised
    for name in params.names:
        if name.split("_")[1] == "b":
            params[name][:] = rng.normal(scale=0.3, size=params[name].shape)
    return DIDANetwork(params, random_table(rng, TABLE_SIZE, D_G), VARIANTS[variant])


def _items(seed: int = 1):
    rng = np.random.default_rng(seed)
    first = random_prepared(rng, TABLE_SIZE, D, 4, [4, 2, 3], label=1, record_id="a")
    second = random_prepared(rng, TABLE_SIZE, D, 3, [1, 4, 2], label=0, record_id="b")
    return [(first, 1, 0.5), (second, 0, 0.5)]


@pytest.mark.parametrize("variant", ["dida", "dida_t", "dual_emotion"])
def test_analytic_gradients_match_central_differences(variant):
    network = _network(variant)
    results = check_gradients(network, _items(), l2=0.01)

    assert {r.name for r in results} == set(network.params.names)
    worst = worst_block(results)
    assert worst.max_rel_error <= 1e-4, f"{worst.name}: {worst.max_rel_error:.2e}"


def test_gradients_without_comments():
    network = _network("dida")
    rng = np.random.default_rng(3)
    lonely = random_prepared(rng, TABLE_SIZE, D, 4, [], label=1)
    results = check_gradients(network, [(lonely, 1, 1.0)])

    assert worst_block(results).max_rel_error <= 1e-4
    _, grads = network.loss_and_gradients([(lonely, 1, 1.0)])
    np.testing.assert_array_equal(grads["tmp_W_f"], 0.0)


def test_pseudo_target_weights_enter_gradients():
    network = _network("dida")
    rec = _items()[0][0]
    _, one = network.loss_and_gradients([(rec, 1, 1.0)])
    _, half = network.loss_and_gradients([(rec, 1, 0.5)])
    for name in one:
        np.testing.assert_allclose(half[name], 0.5 * one[name])


def test_parameters_are_restored_after_check():
    network = _network("dida")
    before = network.params.copy()
    check_gradients(network, _items(), max_entries=3)
    assert network.params.equals(before)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert relative_error(1.0, 1.0 + 1e-6) < 1e-6

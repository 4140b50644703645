from typing import Any, Sequence

import numpy as np
import pytest

from smmcts.annotations import NodePath
from smmcts.common import (
    InvalidGameFile,
    InvalidParameter,
    MissingStrategy,
    derive_seed,
    final_decade,
    format_path,
    log_spaced_checkpoints,
    map_cells,
    sample_action,
    uniform,
    validate_checkpoints,
    validate_gamma,
    validate_probability_vector,
)

from .conftest import assert_expected_value_or_exception, assert_vector_close


@pytest.mark.parametrize(
    ["path", "expected"],
    [
        [(), "root"],
        [((0, 1),), "root[0][1]"],
        [((0, 1), (1, 0)), "root[0][1][1][0]"],
    ],
    ids=["root", "child", "grandchild"],
)
def test_format_path(path: NodePath, expected: str):
    assert format_path(path) == expected


def test_exception_messages():
    assert str(InvalidGameFile("root.children[1][0]", "missing key")) == (
        "Invalid game file at root.children[1][0]. Reason: missing key"
    )
    error = MissingStrategy(((1, 0),), 2)
    assert str(error) == "Missing strategy of player 2 at state root[1][0]"
    assert error.path == ((1, 0),) and error.player == 2
    assert isinstance(InvalidParameter("x"), ValueError)


@pytest.mark.parametrize(
    ["gamma", "low_inclusive", "high_inclusive", "expected"],
    [
        [0.05, False, False, 0.05],
        [0, True, False, 0.0],
        [1, False, True, 1.0],
        [0, False, False, InvalidParameter("gamma must lie in (0, 1), got 0")],
        [1.0, False, False, InvalidParameter("gamma must lie in (0, 1), got 1.0")],
        [-0.1, True, True, InvalidParameter("gamma must lie in [0, 1], got -0.1")],
    ],
    ids=["open", "zero-allowed", "one-allowed", "zero-rejected", "one-rejected", "negative"],
)
def test_validate_gamma(gamma: float, low_inclusive: bool, high_inclusive: bool, expected: Any):
    assert_expected_value_or_exception(lambda: validate_gamma(gamma, low_inclusive, high_inclusive), expected)


@pytest.mark.parametrize(
    ["probs", "valid"],
    [
        [[0.5, 0.5], True],
        [[1.0], True],
        [[0.5, 0.6], False],
        [[1.5, -0.5], False],
        [[], False],
        [[[0.5, 0.5]], False],
    ],
    ids=["uniform", "single", "sum-above-one", "negative", "empty", "matrix"],
)
def test_validate_probability_vector(probs: Sequence, valid: bool):
    if valid:
        assert_vector_close(validate_probability_vector(probs), probs)
    else:
        with pytest.raises(InvalidParameter):
            validate_probability_vector(probs)


def test_uniform():
    assert_vector_close(uniform(4), [0.25] * 4)


@pytest.mark.parametrize(
    ["probs", "expected"],
    [
        [[0.0, 1.0, 0.0], 1],
        [[1.0, 0.0], 0],
        [[0.0, 0.0, 1.0], 2],
    ],
    ids=["middle", "first", "last"],
)
def test_sample_action_degenerate(probs: Sequence[float], expected: int):
    rng = np.random.default_rng(7)
    assert {sample_action(np.array(probs), rng) for _ in range(100)} == {expected}


def test_sample_action_frequencies():
    rng = np.random.default_rng(3)
    samples = [sample_action(np.array([0.2, 0.3, 0.5]), rng) for _ in range(20000)]
    assert_vector_close(np.bincount(samples, minlength=3) / len(samples), [0.2, 0.3, 0.5], atol=0.02)


def test_sample_action_consumes_one_draw():
    rng, reference = np.random.default_rng(11), np.random.default_rng(11)
    sample_action(np.array([0.1, 0.2, 0.3, 0.4]), rng)
    reference.random()
    assert rng.random() == reference.random()


def test_derive_seed():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({derive_seed(0, index) for index in range(100)}) == 100
    assert derive_seed(1, 2) != derive_seed(2, 1)


@pytest.mark.parametrize(
    ["total", "expected"],
    [
        [1, [1]],
        [50, [1, 2, 3, 6, 10, 18, 32, 50]],
        [1000, [1, 2, 3, 6, 10, 18, 32, 56, 100, 178, 316, 562, 1000]],
        [0, InvalidParameter("total must be at least 1, got 0")],
    ],
    ids=["one", "off-grid-total", "thousand", "zero"],
)
def test_log_spaced_checkpoints(total: int, expected: Any):
    assert_expected_value_or_exception(lambda: log_spaced_checkpoints(total), expected)


@pytest.mark.parametrize(
    ["checkpoints", "expected"],
    [
        [(1, 10, 100), [1, 10, 100]],
        [[5], [5]],
        [[], InvalidParameter("checkpoints must be a non-empty sequence of positive integers")],
        [[0, 10], InvalidParameter("checkpoints must be a non-empty sequence of positive integers")],
        [[3, 2], InvalidParameter("checkpoints must be strictly increasing, got 3 then 2")],
        [[3, 3], InvalidParameter("checkpoints must be strictly increasing, got 3 then 3")],
    ],
    ids=["increasing", "single", "empty", "zero", "decreasing", "repeated"],
)
def test_validate_checkpoints(checkpoints: Sequence[int], expected: Any):
    assert_expected_value_or_exception(lambda: validate_checkpoints(checkpoints), expected)


def test_final_decade():
    assert final_decade(log_spaced_checkpoints(1000)) == [100, 178, 316, 562, 1000]
    assert final_decade([7]) == [7]


@pytest.mark.parametrize("threads", [1, 2], ids=["inline", "processes"])
def test_map_cells_keeps_order(threads: int):
    assert map_cells(abs, [-3, 1, -2, 5], threads) == [3, 1, 2, 5]


def test_map_cells_rejects_zero_threads():
    assert_expected_value_or_exception(
        lambda: map_cells(abs, [1], 0), InvalidParameter("threads must be at least 1, got 0")
    )

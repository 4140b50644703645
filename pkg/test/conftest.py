from typing import Any, Callable

import numpy as np
import pytest

from smmcts.games import GameSpec, MatrixGame, build_uniform_game, matrix_game_as_game


# Row 1 is dominated: player 1 gains 0.2 by switching from (1, 0) against column 1
SADDLE_MATRIX = [[0.4, 0.5], [0.6, 0.5]]
MATCHING_PENNIES = [[1.0, 0.0], [0.0, 1.0]]
ROCK_PAPER_SCISSORS = [[0.5, 0.0, 1.0], [1.0, 0.5, 0.0], [0.0, 1.0, 0.5]]

# Depth 2, branching 2; every subgame is a 2x2 matrix game with an easy solution
DESK_UTILITIES = [1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.3, 0.3, 0.9, 0.9, 1.0, 0.0, 1.0, 0.0]


def assert_expected_value_or_exception(callback: Callable, expected: Any):
    if isinstance(expected, Exception):
        with pytest.raises(expected.__class__) as exception:
            callback()
        assert str(exception.value) == str(expected)
    else:
        assert callback() == expected


def assert_vector_close(actual, expected, atol: float = 1e-9):
    np.testing.assert_allclose(np.asarray(actual, dtype=float), np.asarray(expected, dtype=float), atol=atol)


def matrix_tree(payoff) -> GameSpec:
    return matrix_game_as_game(MatrixGame(payoff))


@pytest.fixture
def saddle_game() -> GameSpec:
    return matrix_tree(SADDLE_MATRIX)


@pytest.fixture
def desk_game() -> GameSpec:
    return build_uniform_game(2, 2, DESK_UTILITIES)

import itertools
from typing import Any, Sequence

import numpy as np
import pytest

from smmcts.bandits import play_repeated
from smmcts.common import InvalidParameter
from smmcts.games import MatrixGame
from smmcts.policies import (
    Exp3Learner,
    Exp3State,
    Exploration,
    FixedLearner,
    GuaranteedExplorationLearner,
    Learner,
    PolicyConfig,
    PolicyKind,
    RegretMatchingLearner,
    RegretMatchingState,
    ScheduledExplorationLearner,
    average_strategy,
    exp3_strategy,
    exp3_update,
    make_learner,
    mix_exploration,
    power_schedule,
    rm_strategy,
    rm_update,
    wrap_guaranteed_exploration,
    wrap_scheduled_exploration,
)

from .conftest import assert_expected_value_or_exception, assert_vector_close


@pytest.mark.parametrize(
    ["regrets", "expected"],
    [
        [[1.0, 3.0, -2.0], [0.25, 0.75, 0.0]],
        [[0.0, 0.0], [0.5, 0.5]],
        [[-1.0, -4.0, 0.0, -2.0], [0.25, 0.25, 0.25, 0.25]],
    ],
    ids=["positive-part", "zero", "all-negative"],
)
def test_rm_strategy(regrets: Sequence[float], expected: Sequence[float]):
    assert_vector_close(rm_strategy(RegretMatchingState(len(regrets), regrets=regrets)), expected)


def test_rm_update():
    state = rm_update(RegretMatchingState(2), [0.6, 0.4], 0.4)
    assert_vector_close(state.regrets, [0.2, 0.0])
    assert_vector_close(state.strategy_sum, [0.5, 0.5])
    assert state.iterations == 1
    assert_vector_close(rm_strategy(state), [1.0, 0.0])
    rm_update(state, [0.6, 0.4], 0.6, strategy=[0.9, 0.1])
    assert_vector_close(state.regrets, [0.2, -0.2])
    assert_vector_close(average_strategy(state), [0.7, 0.3])


def test_rm_update_length_mismatch():
    assert_expected_value_or_exception(
        lambda: rm_update(RegretMatchingState(2), [0.1, 0.2, 0.3], 0.1),
        InvalidParameter("alternative values has 3 entries, expected 2"),
    )


def test_state_needs_an_action():
    assert_expected_value_or_exception(
        lambda: Exp3State(0), InvalidParameter("a decision point needs at least one action, got 0")
    )


@pytest.mark.parametrize(
    ["reward_sums", "gamma"],
    [[[10.0, 0.0], 0.2], [[3.0, 1.0, 2.0], 0.05], [[0.0, 0.0, 0.0], 0.5]],
    ids=["two-arms", "three-arms", "no-rewards"],
)
def test_exp3_strategy(reward_sums: Sequence[float], gamma: float):
    rewards = np.array(reward_sums)
    weights = np.exp(gamma / rewards.size * rewards)
    expected = (1.0 - gamma) * weights / weights.sum() + gamma / rewards.size
    assert_vector_close(exp3_strategy(Exp3State(rewards.size, reward_sums=rewards), gamma), expected)


def test_exp3_strategy_large_rewards_stay_finite():
    probs = exp3_strategy(Exp3State(2, reward_sums=[1e6, 0.0]), 0.1)
    assert np.all(np.isfinite(probs))
    assert_vector_close(probs, [0.95, 0.05])


def test_exp3_strategy_full_exploration_is_uniform():
    assert_vector_close(exp3_strategy(Exp3State(4, reward_sums=[5.0, 1.0, 0.0, 2.0]), 1.0), [0.25] * 4)


def test_exp3_update():
    state = exp3_update(Exp3State(2), 1, 0.5, 0.25, np.array([0.75, 0.25]))
    assert_vector_close(state.reward_sums, [0.0, 2.0])
    assert state.visit_counts.tolist() == [0, 1]
    assert state.iterations == 1


@pytest.mark.parametrize(
    ["chosen", "prob_used", "expected"],
    [
        [0, 0.0, InvalidParameter("the probability of the played action must be positive, got 0.0")],
        [2, 0.5, InvalidParameter("action 2 is out of range for 2 actions")],
    ],
    ids=["zero-probability", "out-of-range"],
)
def test_exp3_update_errors(chosen: int, prob_used: float, expected: Exception):
    assert_expected_value_or_exception(
        lambda: exp3_update(Exp3State(2), chosen, 0.5, prob_used, np.array([0.5, 0.5])), expected
    )


@pytest.mark.parametrize(
    ["base", "gamma", "expected"],
    [
        [[1.0, 0.0], 0.2, [0.9, 0.1]],
        [[0.2, 0.3, 0.5], 0.0, [0.2, 0.3, 0.5]],
        [[1.0, 0.0, 0.0, 0.0], 1.0, [0.25] * 4],
        [[1.0, 0.0], 1.5, InvalidParameter("gamma must lie in [0, 1], got 1.5")],
    ],
    ids=["mixed", "no-exploration", "full-exploration", "invalid"],
)
def test_mix_exploration(base: Sequence[float], gamma: float, expected: Any):
    if isinstance(expected, Exception):
        assert_expected_value_or_exception(lambda: mix_exploration(base, gamma), expected)
    else:
        assert_vector_close(mix_exploration(base, gamma), expected)


def test_average_strategy_before_first_iteration():
    assert_expected_value_or_exception(
        lambda: average_strategy(RegretMatchingState(2)),
        InvalidParameter("the average strategy is undefined before the first iteration"),
    )


def test_policy_config():
    assert PolicyConfig("exp3", 0.1).kind == PolicyKind.EXP3
    for gamma in (0.0, 1.0):
        with pytest.raises(InvalidParameter):
            PolicyConfig(PolicyKind.RM, gamma)


@pytest.mark.parametrize(
    ["kind", "expected"],
    [[PolicyKind.RM, RegretMatchingLearner], [PolicyKind.EXP3, Exp3Learner]],
    ids=["rm", "exp3"],
)
def test_make_learner(kind: PolicyKind, expected: type):
    learner = make_learner(PolicyConfig(kind, 0.05), 3)
    assert isinstance(learner, expected)
    assert learner.k == 3
    assert learner.full_information == (kind == PolicyKind.RM)


def test_regret_matching_learns_best_response():
    # Matching pennies against a column player fixed at (0.7, 0.3): row 0 earns 0.7, row 1 earns 0.3
    payoff = np.array([[1.0, 0.0], [0.0, 1.0]])
    opponent = np.array([0.7, 0.3])
    learner = RegretMatchingLearner(2, 0.05)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        action = learner.select(rng)
        assert_vector_close(learner.emitted, learner.strategy())
        learner.update(action, float(payoff[action] @ opponent), payoff @ opponent)
        assert learner.emitted is None
    assert_vector_close(learner.strategy(), [0.975, 0.025])
    assert learner.average_strategy()[0] > 0.95


def test_regret_matching_needs_alternatives():
    learner = RegretMatchingLearner(2, 0.05)
    with pytest.raises(InvalidParameter):
        learner.update(0, 0.5)


def test_exp3_learns_from_bandit_feedback():
    payoffs = [0.2, 0.8, 0.5]
    learner = Exp3Learner(3, 0.1)
    rng = np.random.default_rng(1)
    for _ in range(3000):
        action = learner.select(rng)
        learner.update(action, payoffs[action])
    average = learner.average_strategy()
    assert int(np.argmax(average)) == 1
    assert average[1] > 0.6
    assert learner.state.visit_counts.sum() == 3000


def test_fixed_learner():
    learner = FixedLearner([0.25, 0.75])
    rng = np.random.default_rng(2)
    for _ in range(10):
        learner.update(learner.select(rng), 0.5)
    assert_vector_close(learner.average_strategy(), [0.25, 0.75])
    with pytest.raises(InvalidParameter):
        FixedLearner([0.5, 0.6])


def test_guaranteed_exploration_skips_inner_updates():
    inner = FixedLearner([1.0, 0.0])
    learner = wrap_guaranteed_exploration(inner, 0.5)
    assert isinstance(learner, GuaranteedExplorationLearner)
    assert_vector_close(learner.strategy(), [0.75, 0.25])
    rng = np.random.default_rng(3)
    for _ in range(1000):
        learner.update(learner.select(rng), 0.5)
    assert 400 <= inner.record.iterations <= 600
    assert learner.record.iterations == 1000
    assert_vector_close(learner.average_strategy(), [0.75, 0.25])


def test_guaranteed_exploration_keeps_information_model():
    assert wrap_guaranteed_exploration(RegretMatchingLearner(2, 0.0), 0.1).full_information
    assert not wrap_guaranteed_exploration(Exp3Learner(2, 0.1), 0.1).full_information


def test_power_schedule():
    assert list(itertools.islice(power_schedule(), 4)) == [2, 4, 8, 16]
    assert list(itertools.islice(power_schedule(3), 3)) == [3, 9, 27]


@pytest.mark.parametrize(
    "schedule", [[2, 4, 8], power_schedule()], ids=["list", "generator"]
)
def test_scheduled_exploration(schedule):
    inner = FixedLearner([1.0, 0.0])
    learner = wrap_scheduled_exploration(inner, schedule)
    assert isinstance(learner, ScheduledExplorationLearner)
    rng = np.random.default_rng(4)
    explored = []
    for step in range(1, 11):
        explored.append(list(learner.strategy()) == [0.5, 0.5])
        action = learner.select(rng)
        learner.update(action, 0.5)
    assert [step for step, flag in enumerate(explored, start=1) if flag] == [2, 4, 8]
    assert inner.record.iterations == 7
    assert_vector_close(learner.average_strategy(), [0.85, 0.15])


def test_scheduled_exploration_rejects_non_increasing_schedules():
    assert_expected_value_or_exception(
        lambda: ScheduledExplorationLearner(FixedLearner([1.0, 0.0]), [2, 2]),
        InvalidParameter("exploration schedule must be strictly increasing, got 2 then 2"),
    )
    learner = ScheduledExplorationLearner(FixedLearner([1.0, 0.0]), iter([1, 1]))
    rng = np.random.default_rng(5)
    with pytest.raises(InvalidParameter):
        learner.update(learner.select(rng), 0.5)


@pytest.mark.parametrize("shift", [5.0, -3.0, 1e6], ids=["positive", "negative", "large"])
def test_exp3_strategy_ignores_common_shifts(shift: float):
    reward_sums = np.array([0.4, 2.0, 1.1])
    shifted = exp3_strategy(Exp3State(3, reward_sums=reward_sums + shift), 0.2)
    assert_vector_close(shifted, exp3_strategy(Exp3State(3, reward_sums=reward_sums), 0.2), atol=1e-9)


def test_exp3_reward_estimates_are_unbiased():
    # Column player fixed at (0.7, 0.3): the expected payoff of every row is payoff @ opponent
    payoff = np.array([[0.9, 0.1], [0.2, 0.6], [0.5, 0.5]])
    opponent = np.array([0.7, 0.3])
    k, gamma, steps = 3, 0.3, 20000
    learner = Exp3Learner(k, gamma)
    rng = np.random.default_rng(6)
    for _ in range(steps):
        action = learner.select(rng)
        learner.update(action, float(payoff[action, rng.choice(2, p=opponent)]))
    # Every probability stays above gamma / k, which bounds the variance of each importance weighted term by k / gamma
    standard_error = np.sqrt(k / gamma / steps)
    assert np.all(np.abs(learner.state.reward_sums / steps - payoff @ opponent) <= 3 * standard_error)


@pytest.mark.parametrize("exploration", list(Exploration), ids=["none", "guaranteed", "scheduled"])
@pytest.mark.parametrize("kind", [PolicyKind.RM, PolicyKind.EXP3], ids=["rm", "exp3"])
def test_emitted_strategies_keep_the_exploration_floor(kind: PolicyKind, exploration: Exploration):
    gamma = 0.1
    config = PolicyConfig(kind, gamma, exploration)
    matrix = MatrixGame(np.random.default_rng(7).random((3, 4)))
    trace = play_repeated(matrix, make_learner(config, 3), make_learner(config, 4), 2000, np.random.default_rng(8))
    assert trace.strategies_p1.min() >= gamma / 3 - 1e-12
    assert trace.strategies_p2.min() >= gamma / 4 - 1e-12


def test_make_learner_wraps_exploration():
    guaranteed = make_learner(PolicyConfig(PolicyKind.EXP3, 0.1, "guaranteed"), 2)
    assert isinstance(guaranteed, GuaranteedExplorationLearner) and isinstance(guaranteed.inner, Exp3Learner)
    scheduled = make_learner(PolicyConfig(PolicyKind.RM, 0.1, Exploration.SCHEDULED), 2)
    assert isinstance(scheduled, ScheduledExplorationLearner) and isinstance(scheduled.inner, RegretMatchingLearner)


def test_guaranteed_exploration_leaves_inner_regrets_untouched():
    payoff = np.array([[1.0, 0.0], [0.0, 1.0]])
    opponent = np.array([0.7, 0.3])
    inner = RegretMatchingLearner(2, 0.05)
    learner = wrap_guaranteed_exploration(inner, 0.3)
    rng = np.random.default_rng(9)
    explorations = 0
    for _ in range(500):
        regrets, iterations = inner.state.regrets.copy(), inner.state.iterations
        action = learner.select(rng)
        explored = learner.explored
        learner.update(action, float(payoff[action] @ opponent), payoff @ opponent)
        if explored:
            explorations += 1
            assert np.array_equal(inner.state.regrets, regrets)
            assert inner.state.iterations == iterations
        else:
            assert inner.state.iterations == iterations + 1
        assert learner.explored is None
    assert 100 <= explorations <= 200


def _regret_against_fixed_opponent(learner: Learner, matrix: MatrixGame, opponent: Sequence[float], seed: int) -> float:
    trace = play_repeated(matrix, learner, FixedLearner(opponent), 20000, np.random.default_rng(seed))
    return trace.average_regret(player=1)


@pytest.mark.parametrize("seed", range(5), ids=[f"seed-{seed}" for seed in range(5)])
def test_guaranteed_exploration_costs_at_most_gamma(seed: int):
    gamma = 0.05
    rng = np.random.default_rng(seed)
    matrix = MatrixGame(rng.random((3, 3)))
    opponent = rng.dirichlet(np.ones(3))
    plain = _regret_against_fixed_opponent(RegretMatchingLearner(3, 0.0), matrix, opponent, seed)
    wrapped = _regret_against_fixed_opponent(
        wrap_guaranteed_exploration(RegretMatchingLearner(3, 0.0), gamma), matrix, opponent, seed
    )
    assert wrapped <= plain + gamma + 0.02


@pytest.mark.parametrize("kind", [PolicyKind.RM, PolicyKind.EXP3], ids=["rm", "exp3"])
def test_empty_schedule_changes_nothing(kind: PolicyKind):
    config = PolicyConfig(kind, 0.1)
    payoff = np.array([[0.8, 0.1], [0.3, 0.6]])
    sequences = []
    for learner in (make_learner(config, 2), wrap_scheduled_exploration(make_learner(config, 2), [])):
        rng = np.random.default_rng(10)
        actions = []
        for step in range(300):
            action = learner.select(rng)
            actions.append(action)
            learner.update(action, float(payoff[action, step % 2]), payoff[:, step % 2])
        sequences.append(actions)
    assert sequences[0] == sequences[1]

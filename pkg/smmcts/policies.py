import abc
import enum
import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .annotations import Vector
from .common import InvalidParameter, sample_action, uniform, validate_gamma, validate_probability_vector

LOGGER = logging.getLogger(__name__)


class PolicyKind(str, enum.Enum):
    RM = "rm"
    EXP3 = "exp3"


class Exploration(str, enum.Enum):
    NONE = "none"
    GUARANTEED = "guaranteed"
    SCHEDULED = "scheduled"


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    gamma: float
    # Optional wrapper around the learner; guaranteed exploration reuses gamma
    exploration: Exploration = Exploration.NONE

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        object.__setattr__(self, "exploration", Exploration(self.exploration))
        validate_gamma(self.gamma)


@dataclass
class RegretMatchingState:
    k: int
    regrets: Vector = None
    strategy_sum: Vector = None
    iterations: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidParameter(f"a decision point needs at least one action, got {self.k}")
        self.regrets = np.zeros(self.k) if self.regrets is None else np.array(self.regrets, dtype=float)
        self.strategy_sum = np.zeros(self.k) if self.strategy_sum is None else np.array(self.strategy_sum, dtype=float)


@dataclass
class Exp3State:
    k: int
    reward_sums: Vector = None
    visit_counts: Vector = None
    strategy_sum: Vector = None
    iterations: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidParameter(f"a decision point needs at least one action, got {self.k}")
        self.reward_sums = np.zeros(self.k) if self.reward_sums is None else np.array(self.reward_sums, dtype=float)
        self.visit_counts = (
            np.zeros(self.k, dtype=np.int64) if self.visit_counts is None else np.array(self.visit_counts)
        )
        self.strategy_sum = np.zeros(self.k) if self.strategy_sum is None else np.array(self.strategy_sum, dtype=float)


def rm_strategy(state: RegretMatchingState) -> Vector:
    positive = np.maximum(state.regrets, 0.0)
    total = positive.sum()
    if total > 0.0:
        return positive / total
    return uniform(state.k)


def _check_length(state, vector: Vector, name: str) -> Vector:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (state.k,):
        raise InvalidParameter(f"{name} has {vector.size} entries, expected {state.k}")
    return vector


def rm_update(
    state: RegretMatchingState, alternative_values: Vector, realized: float, strategy: Optional[Vector] = None
) -> RegretMatchingState:
    """Accumulate the regret of every action against the realized payoff.

    ``strategy`` is the distribution actually played this iteration; it defaults to the current unmixed strategy.
    """
    alternative_values = _check_length(state, alternative_values, "alternative values")
    strategy = rm_strategy(state) if strategy is None else _check_length(state, strategy, "strategy")
    state.regrets += alternative_values - realized
    state.strategy_sum += strategy
    state.iterations += 1
    return state


def exp3_strategy(state: Exp3State, gamma: float) -> Vector:
    validate_gamma(gamma, high_inclusive=True)
    eta = gamma / state.k
    # Shifting by the maximum keeps every exponent <= 0 and leaves the distribution unchanged
    weights = np.exp(eta * (state.reward_sums - state.reward_sums.max()))
    return (1.0 - gamma) * weights / weights.sum() + gamma / state.k


def exp3_update(state: Exp3State, chosen: int, payoff: float, prob_used: float, strategy: Vector) -> Exp3State:
    if prob_used <= 0.0:
        raise InvalidParameter(f"the probability of the played action must be positive, got {prob_used}")
    if not 0 <= chosen < state.k:
        raise InvalidParameter(f"action {chosen} is out of range for {state.k} actions")
    state.reward_sums[chosen] += payoff / prob_used
    state.visit_counts[chosen] += 1
    state.strategy_sum += _check_length(state, strategy, "strategy")
    state.iterations += 1
    return state


def mix_exploration(base: Vector, gamma: float) -> Vector:
    validate_gamma(gamma, low_inclusive=True, high_inclusive=True)
    base = np.asarray(base, dtype=float)
    return gamma / base.size + (1.0 - gamma) * base


def average_strategy(state) -> Vector:
    if state.iterations < 1:
        raise InvalidParameter("the average strategy is undefined before the first iteration")
    average = state.strategy_sum / state.iterations
    return average / average.sum()


class Learner(abc.ABC):
    # Whether update() reads the payoffs of the alternative actions
    full_information = False

    def __init__(self, k: int):
        if k < 1:
            raise InvalidParameter(f"a decision point needs at least one action, got {k}")
        self.k = k
        self._pending: Optional[Vector] = None

    @abc.abstractmethod
    def strategy(self) -> Vector:
        """The sampling distribution of the current step."""

    @abc.abstractmethod
    def update(self, action: int, payoff: float, alternative_values: Optional[Vector] = None):
        """``payoff`` is the learner's own payoff; full-information learners also read ``alternative_values``."""

    @abc.abstractmethod
    def average_strategy(self) -> Vector:
        pass

    @property
    def emitted(self) -> Optional[Vector]:
        """The distribution the last select() sampled from, until the matching update()."""
        return self._pending

    def select(self, rng: np.random.Generator) -> int:
        self._pending = self.strategy()
        return sample_action(self._pending, rng)

    def _played_strategy(self) -> Vector:
        played = self.strategy() if self._pending is None else self._pending
        self._pending = None
        return played


class RegretMatchingLearner(Learner):
    """Regret Matching sampled with gamma-on-policy exploration mixed in."""

    full_information = True

    def __init__(self, k: int, gamma: float):
        super().__init__(k)
        self.gamma = validate_gamma(gamma, low_inclusive=True)
        self.state = RegretMatchingState(k)

    def strategy(self) -> Vector:
        return mix_exploration(rm_strategy(self.state), self.gamma)

    def update(self, action: int, payoff: float, alternative_values: Optional[Vector] = None):
        if alternative_values is None:
            raise InvalidParameter("Regret Matching needs the payoff of every alternative action")
        rm_update(self.state, alternative_values, payoff, self._played_strategy())

    def average_strategy(self) -> Vector:
        return average_strategy(self.state)


class Exp3Learner(Learner):
    def __init__(self, k: int, gamma: float):
        super().__init__(k)
        self.gamma = validate_gamma(gamma, high_inclusive=True)
        self.state = Exp3State(k)

    def strategy(self) -> Vector:
        return exp3_strategy(self.state, self.gamma)

    def update(self, action: int, payoff: float, alternative_values: Optional[Vector] = None):
        played = self._played_strategy()
        exp3_update(self.state, action, payoff, played[action], played)

    def average_strategy(self) -> Vector:
        return average_strategy(self.state)


@dataclass
class _StrategyRecord:
    strategy_sum: Vector
    iterations: int = 0


class FixedLearner(Learner):
    """Plays a fixed mixed strategy and never learns."""

    def __init__(self, probs: Vector):
        probs = validate_probability_vector(probs)
        super().__init__(probs.size)
        self.probs = probs
        self.record = _StrategyRecord(np.zeros(self.k))

    def strategy(self) -> Vector:
        return self.probs

    def update(self, action: int, payoff: float, alternative_values: Optional[Vector] = None):
        self.record.strategy_sum += self._played_strategy()
        self.record.iterations += 1

    def average_strategy(self) -> Vector:
        return average_strategy(self.record)


class _ExplorationWrapper(Learner):
    def __init__(self, inner: Learner):
        super().__init__(inner.k)
        self.inner = inner
        self.record = _StrategyRecord(np.zeros(self.k))
        self._explored: Optional[bool] = None

    @property
    def full_information(self) -> bool:
        return self.inner.full_information

    def _record(self, played: Vector):
        self.record.strategy_sum += played
        self.record.iterations += 1

    def average_strategy(self) -> Vector:
        return average_strategy(self.record)


class GuaranteedExplorationLearner(_ExplorationWrapper):
    """With probability gamma act uniformly without touching the inner learner, otherwise delegate to it."""

    def __init__(self, inner: Learner, gamma: float):
        super().__init__(inner)
        self.gamma = validate_gamma(gamma)

    def strategy(self) -> Vector:
        return mix_exploration(self.inner.strategy(), self.gamma)

    @property
    def explored(self) -> Optional[bool]:
        """Whether the step between select() and update() explores; None outside it."""
        return self._explored

    def select(self, rng: np.random.Generator) -> int:
        self._pending = self.strategy()
        self._explored = bool(rng.random() < self.gamma)
        if self._explored:
            return int(rng.integers(self.k))
        return self.inner.select(rng)

    def update(self, action: int, payoff: float, alternative_values: Optional[Vector] = None):
        explored = bool(self._explored)
        self._explored = None
        self._record(self._played_strategy())
        if not explored:
            self.inner.update(action, payoff, alternative_values)


def validate_schedule(schedule: Sequence[int]):
    for previous, current in zip(schedule, schedule[1:]):
        if current <= previous:
            raise InvalidParameter(f"exploration schedule must be strictly increasing, got {previous} then {current}")


def power_schedule(base: int = 2) -> Iterator[int]:
    """Exploration times base ** n for n = 1, 2, ..."""
    return (base ** n for n in itertools.count(1))


class ScheduledExplorationLearner(_ExplorationWrapper):
    """Explores uniformly exactly at the scheduled (1-based) steps, delegating at every other step."""

    def __init__(self, inner: Learner, schedule: Iterable[int]):
        super().__init__(inner)
        if isinstance(schedule, Sequence):
            validate_schedule(schedule)
        self._schedule = iter(schedule)
        self._next_time: Optional[int] = None
        self._advance(0)

    def _advance(self, after: int):
        self._next_time = next(self._schedule, None)
        if self._next_time is not None and self._next_time <= after:
            raise InvalidParameter(
                f"exploration schedule must be strictly increasing, got {after} then {self._next_time}"
            )

    @property
    def step(self) -> int:
        return self.record.iterations + 1

    def _is_exploration_step(self) -> bool:
        return self._next_time == self.step

    def strategy(self) -> Vector:
        if self._is_exploration_step():
            return uniform(self.k)
        return self.inner.strategy()

    def select(self, rng: np.random.Generator) -> int:
        if self._is_exploration_step():
            self._pending = uniform(self.k)
            return int(rng.integers(self.k))
        action = self.inner.select(rng)
        self._pending = self.inner._pending
        return action

    def update(self, action: int, payoff: float, alternative_values: Optional[Vector] = None):
        explored = self._is_exploration_step()
        self._record(self._played_strategy())
        if explored:
            self._advance(self.record.iterations)
        else:
            self.inner.update(action, payoff, alternative_values)


def wrap_guaranteed_exploration(policy: Learner, gamma: float) -> Learner:
    return GuaranteedExplorationLearner(policy, gamma)


def wrap_scheduled_exploration(policy: Learner, schedule: Iterable[int]) -> Learner:
    return ScheduledExplorationLearner(policy, schedule)


def make_learner(config: PolicyConfig, k: int) -> Learner:
    if config.kind == PolicyKind.RM:
        learner: Learner = RegretMatchingLearner(k, config.gamma)
    else:
        learner = Exp3Learner(k, config.gamma)
    if config.exploration == Exploration.GUARANTEED:
        return wrap_guaranteed_exploration(learner, config.gamma)
    if config.exploration == Exploration.SCHEDULED:
        return wrap_scheduled_exploration(learner, power_schedule())
    return learner

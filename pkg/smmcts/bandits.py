import csv
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .annotations import Matrix, TraceRow, Vector
from .common import (
    ErrorBoundViolation,
    InvalidParameter,
    TraceInvariantError,
    derive_seed,
    final_decade,
    log_spaced_checkpoints,
    map_cells,
    validate_checkpoints,
)
from .games import MatrixGame
from .policies import Learner, PolicyConfig, make_learner
from .solver import solve_matrix

LOGGER = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-9
MATCHING_PENNIES = MatrixGame([[1.0, 0.0], [0.0, 1.0]])


class Perturbation(str, enum.Enum):
    UNIFORM = "uniform"
    SQUARE = "square"


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """A repeated game whose payoffs stay within eta of ``base`` from step ``onset`` on.

    ``uniform`` adds noise drawn from [-w(t), w(t)] with w(t) = 0.999 * eta * (1 + onset / t) / 2, which is larger
    than eta early on and below eta from the onset. ``square`` shifts every payoff by +-0.999 * eta, flipping the
    sign every ``period`` steps. Payoffs are clipped to [0, 1].
    """

    base: MatrixGame
    eta: float
    onset: int = 1
    perturbation: Perturbation = Perturbation.UNIFORM
    period: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "perturbation", Perturbation(self.perturbation))
        if not 0.0 <= self.eta < 1.0:
            raise InvalidParameter(f"eta must lie in [0, 1), got {self.eta}")
        if self.onset < 1 or self.period < 1:
            raise InvalidParameter(f"onset and period must be at least 1, got {self.onset} and {self.period}")

    def payoffs(
        self, t: int, rows_history: Sequence[int], cols_history: Sequence[int], rng: np.random.Generator
    ) -> Matrix:
        """Payoff matrix a_ij(t) of step t (1-based); the built-in families ignore the action histories."""
        base = self.base.payoff
        if self.perturbation == Perturbation.UNIFORM:
            width = 0.999 * self.eta * (1.0 + self.onset / t) / 2.0
            shift = rng.uniform(-width, width, size=base.shape)
        else:
            sign = 1.0 if (t - 1) // self.period % 2 == 0 else -1.0
            shift = np.full(base.shape, sign * 0.999 * self.eta)
        return np.clip(base + shift, 0.0, 1.0)

    def check(self, t: int, payoffs: Matrix):
        if t < self.onset:
            return
        error = float(np.max(np.abs(payoffs - self.base.payoff)))
        if error > 0.0 and error >= self.eta:
            raise ErrorBoundViolation(f"payoff error {error} at step {t} is not below eta = {self.eta}")


@dataclass(eq=False)
class RepeatedGameTrace:
    """Per-step record of a repeated game; every accessor takes the horizon t (default: the whole trace).

    ``column_payoffs[s]`` is the observed column a_{., j_s}(s) and ``row_payoffs[s]`` the observed row
    a_{i_s, .}(s); ``exact=True`` evaluates the same quantities on the error-free base matrix.
    ``error_free`` marks traces whose observed payoffs are the base matrix itself.
    """

    base: Matrix
    rows: np.ndarray
    cols: np.ndarray
    payoffs: Vector
    column_payoffs: Matrix
    row_payoffs: Matrix
    strategies_p1: Matrix
    strategies_p2: Matrix
    error_free: bool = True

    @property
    def horizon(self) -> int:
        return len(self.rows)

    def _t(self, t: Optional[int]) -> int:
        t = self.horizon if t is None else t
        if not 1 <= t <= self.horizon:
            raise InvalidParameter(f"t must lie in [1, {self.horizon}], got {t}")
        return t

    def cumulative_payoff(self, t: Optional[int] = None, exact: bool = False) -> float:
        t = self._t(t)
        if exact:
            return float(self.base[self.rows[:t], self.cols[:t]].sum())
        return float(self.payoffs[:t].sum())

    def average_payoff(self, t: Optional[int] = None, exact: bool = False) -> float:
        t = self._t(t)
        return self.cumulative_payoff(t, exact) / t

    def max_cumulative_payoff(self, t: Optional[int] = None, exact: bool = False) -> float:
        t = self._t(t)
        if exact:
            return float(np.max(self.base @ self.action_counts(t)[1]))
        return float(np.max(self.column_payoffs[:t].sum(axis=0)))

    def max_average_payoff(self, t: Optional[int] = None, exact: bool = False) -> float:
        t = self._t(t)
        return self.max_cumulative_payoff(t, exact) / t

    def regret(self, t: Optional[int] = None, player: int = 1, exact: bool = False) -> float:
        """Cumulative regret R(t) of ``player`` against its best fixed action in hindsight."""
        t = self._t(t)
        if player == 1:
            return self.max_cumulative_payoff(t, exact) - self.cumulative_payoff(t, exact)
        if exact:
            worst_column = float(np.min(self.action_counts(t)[0] @ self.base))
        else:
            worst_column = float(np.min(self.row_payoffs[:t].sum(axis=0)))
        return self.cumulative_payoff(t, exact) - worst_column

    def average_regret(self, t: Optional[int] = None, player: int = 1, exact: bool = False) -> float:
        t = self._t(t)
        return self.regret(t, player, exact) / t

    def action_counts(self, t: Optional[int] = None) -> Tuple[Vector, Vector]:
        t = self._t(t)
        m, n = self.base.shape
        return np.bincount(self.rows[:t], minlength=m), np.bincount(self.cols[:t], minlength=n)

    def joint_counts(self, t: Optional[int] = None) -> Matrix:
        t = self._t(t)
        m, n = self.base.shape
        return np.bincount(self.rows[:t] * n + self.cols[:t], minlength=m * n).reshape(m, n)

    def empirical_frequencies(self, t: Optional[int] = None) -> Tuple[Vector, Vector]:
        t = self._t(t)
        counts_p1, counts_p2 = self.action_counts(t)
        return counts_p1 / t, counts_p2 / t

    def average_strategies(self, t: Optional[int] = None) -> Tuple[Vector, Vector]:
        t = self._t(t)
        return self.strategies_p1[:t].mean(axis=0), self.strategies_p2[:t].mean(axis=0)


PayoffSource = Callable[[int, np.ndarray, np.ndarray], Matrix]


def _play(
    base: Matrix,
    payoff_source: PayoffSource,
    policy1: Learner,
    policy2: Learner,
    horizon: int,
    rng: np.random.Generator,
    error_free: bool = True,
) -> RepeatedGameTrace:
    m, n = base.shape
    if policy1.k != m or policy2.k != n:
        raise InvalidParameter(f"policies sized ({policy1.k}, {policy2.k}) cannot play a {m}x{n} game")
    if horizon < 1:
        raise InvalidParameter(f"horizon must be at least 1, got {horizon}")
    trace = RepeatedGameTrace(
        base=base,
        rows=np.zeros(horizon, dtype=np.int64),
        cols=np.zeros(horizon, dtype=np.int64),
        payoffs=np.zeros(horizon),
        column_payoffs=np.zeros((horizon, m)),
        row_payoffs=np.zeros((horizon, n)),
        strategies_p1=np.zeros((horizon, m)),
        strategies_p2=np.zeros((horizon, n)),
        error_free=error_free,
    )
    for s in range(horizon):
        i = policy1.select(rng)
        j = policy2.select(rng)
        trace.strategies_p1[s] = policy1.emitted
        trace.strategies_p2[s] = policy2.emitted
        matrix = payoff_source(s + 1, trace.rows[:s], trace.cols[:s])
        payoff = float(matrix[i, j])
        trace.rows[s], trace.cols[s], trace.payoffs[s] = i, j, payoff
        trace.column_payoffs[s] = matrix[:, j]
        trace.row_payoffs[s] = matrix[i, :]
        policy1.update(i, payoff, matrix[:, j])
        policy2.update(j, 1.0 - payoff, 1.0 - matrix[i, :])
    return trace


def play_repeated(
    matrix: MatrixGame, policy1: Learner, policy2: Learner, horizon: int, rng: np.random.Generator
) -> RepeatedGameTrace:
    return _play(matrix.payoff, lambda t, rows, cols: matrix.payoff, policy1, policy2, horizon, rng)


def play_with_error(
    model: ErrorModel, policy1: Learner, policy2: Learner, horizon: int, rng: np.random.Generator
) -> RepeatedGameTrace:
    """Play against the model's perturbed payoffs; the perturbation draws from its own seeded stream."""
    noise = np.random.default_rng(model.seed)

    def _payoffs(t: int, rows: np.ndarray, cols: np.ndarray) -> Matrix:
        payoffs = model.payoffs(t, rows, cols, noise)
        model.check(t, payoffs)
        return payoffs

    return _play(model.base.payoff, _payoffs, policy1, policy2, horizon, rng, error_free=model.eta == 0.0)


def equilibrium_gap(
    trace: RepeatedGameTrace, matrix: MatrixGame, t: Optional[int] = None, value: Optional[float] = None
) -> Tuple[float, float]:
    """u(br, sigma2_hat(t)) - v and v - u(sigma1_hat(t), br) for the empirical frequencies."""
    value = solve_matrix(matrix).value if value is None else value
    sigma1, sigma2 = trace.empirical_frequencies(t)
    best_p1 = float(np.max(matrix.payoff @ sigma2))
    # Error-free traces are checked against the payoffs they recorded
    g_max = trace.max_average_payoff(t, exact=not trace.error_free)
    if abs(best_p1 - g_max) > IDENTITY_TOLERANCE:
        raise TraceInvariantError(f"u(br, sigma2_hat) = {best_p1} differs from g_max = {g_max}")
    return best_p1 - value, value - float(np.min(sigma1 @ matrix.payoff))


def nash_gaps(trace: RepeatedGameTrace, matrix: MatrixGame, t: Optional[int] = None) -> Tuple[float, float]:
    """Equilibrium gaps of the empirical-frequency profile: u(br, s2) - u(s1, s2) and u(s1, s2) - u(s1, br)."""
    sigma1, sigma2 = trace.empirical_frequencies(t)
    value = float(sigma1 @ matrix.payoff @ sigma2)
    return float(np.max(matrix.payoff @ sigma2)) - value, value - float(np.min(sigma1 @ matrix.payoff))


def strategy_distance(trace: RepeatedGameTrace, t: Optional[int] = None) -> float:
    frequencies = trace.empirical_frequencies(t)
    averages = trace.average_strategies(t)
    return max(float(np.max(np.abs(hat - bar))) for hat, bar in zip(frequencies, averages))


def check_eps_equilibrium_onset(
    trace: RepeatedGameTrace,
    matrix: MatrixGame,
    eps: float,
    delta: float,
    checkpoints: Optional[Sequence[int]] = None,
    error_ratio: Optional[float] = None,
) -> Optional[int]:
    """Earliest checkpoint from which the empirical frequencies stay a (4(c + 1) eps + delta)-equilibrium.

    ``error_ratio`` is c for games with error c * eps; without it the bound is 4 eps + delta.
    """
    if eps <= 0.0 or delta <= 0.0:
        raise InvalidParameter(f"eps and delta must be positive, got {eps} and {delta}")
    bound = 4.0 * ((error_ratio or 0.0) + 1.0) * eps + delta
    checkpoints = log_spaced_checkpoints(trace.horizon) if checkpoints is None else validate_checkpoints(checkpoints)
    onset = None
    for checkpoint in reversed(checkpoints):
        if max(nash_gaps(trace, matrix, checkpoint)) > bound:
            break
        onset = checkpoint
    return onset


def trace_rows(trace: RepeatedGameTrace, matrix: MatrixGame, checkpoints: Sequence[int]) -> List[Dict[str, float]]:
    value = solve_matrix(matrix).value
    rows = []
    for step in validate_checkpoints(checkpoints):
        gap1, gap2 = equilibrium_gap(trace, matrix, step, value)
        rows.append(
            {
                "step": step,
                "i": int(trace.rows[step - 1]),
                "j": int(trace.cols[step - 1]),
                "payoff": float(trace.payoffs[step - 1]),
                "g": trace.average_payoff(step),
                "gmax": trace.max_average_payoff(step),
                "r": trace.average_regret(step),
                "gap1": gap1,
                "gap2": gap2,
            }
        )
    return rows


def write_trace_csv(rows: Sequence[TraceRow], path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(TraceRow.__annotations__))
        writer.writeheader()
        writer.writerows(rows)


def random_matrix_game(seed: int, min_size: int = 2, max_size: int = 5) -> MatrixGame:
    rng = np.random.default_rng(seed)
    rows, cols = (int(size) for size in rng.integers(min_size, max_size + 1, size=2))
    return MatrixGame(rng.random((rows, cols)))


@dataclass(frozen=True)
class SeedResult:
    index: int
    seed: int
    value: float
    regret_p1: float
    regret_p2: float
    distance: float
    max_gap: float
    max_payoff_deviation: float
    onset: Optional[int]
    rows: Tuple[Dict[str, float], ...] = ()


@dataclass(frozen=True)
class BatteryTask:
    index: int
    matrix: MatrixGame
    policy: PolicyConfig
    horizon: int
    seed: int
    epsilon: float
    delta: float
    eta: float = 0.0
    perturbation: Optional[Perturbation] = None
    onset: int = 1
    period: int = 1000


def run_battery_task(task: BatteryTask) -> SeedResult:
    rng = np.random.default_rng(task.seed)
    policy1 = make_learner(task.policy, task.matrix.rows)
    policy2 = make_learner(task.policy, task.matrix.cols)
    if task.perturbation is None:
        trace = play_repeated(task.matrix, policy1, policy2, task.horizon, rng)
    else:
        model = ErrorModel(
            base=task.matrix,
            eta=task.eta,
            onset=task.onset,
            perturbation=task.perturbation,
            period=task.period,
            seed=derive_seed(task.seed, 1),
        )
        trace = play_with_error(model, policy1, policy2, task.horizon, rng)
    value = solve_matrix(task.matrix).value
    checkpoints = log_spaced_checkpoints(task.horizon)
    decade = final_decade(checkpoints)
    error_ratio = task.eta / task.epsilon
    return SeedResult(
        index=task.index,
        seed=task.seed,
        value=value,
        regret_p1=trace.average_regret(player=1),
        regret_p2=trace.average_regret(player=2),
        distance=strategy_distance(trace),
        max_gap=max(max(equilibrium_gap(trace, task.matrix, t, value)) for t in decade),
        max_payoff_deviation=max(abs(trace.average_payoff(t) - value) for t in decade),
        onset=check_eps_equilibrium_onset(trace, task.matrix, task.epsilon, task.delta, checkpoints, error_ratio),
        rows=tuple(trace_rows(trace, task.matrix, checkpoints)),
    )


@dataclass
class BatteryReport:
    policy: PolicyConfig
    epsilon: float
    results: List[SeedResult] = field(default_factory=list)
    properties: Dict[str, bool] = field(default_factory=dict)

    @property
    def epsilon_hat(self) -> float:
        """Measured regret bound: the largest final average regret of either player over the battery."""
        return max(max(result.regret_p1, result.regret_p2) for result in self.results)

    @property
    def passed(self) -> bool:
        return all(self.properties.values())


def run_battery(
    matrices: Sequence[MatrixGame],
    policy: PolicyConfig,
    horizon: int,
    seed: int = 0,
    slack: float = 0.05,
    delta: float = 0.05,
    distance_bound: float = 0.01,
    eta: float = 0.0,
    perturbation: Optional[Perturbation] = None,
    onset: int = 1,
    period: int = 1000,
    threads: int = 1,
) -> BatteryReport:
    """Self-play ``policy`` on every matrix and check the repeated-game properties with eps = gamma + slack.

    A property holds for the battery when it fails on at most one seed in twenty.
    """
    if not matrices:
        raise InvalidParameter("a battery needs at least one matrix game")
    epsilon = policy.gamma + slack
    tasks = [
        BatteryTask(
            index=index,
            matrix=matrix,
            policy=policy,
            horizon=horizon,
            seed=derive_seed(seed, index),
            epsilon=epsilon,
            delta=delta,
            eta=eta,
            perturbation=perturbation,
            onset=onset,
            period=period,
        )
        for index, matrix in enumerate(matrices)
    ]
    LOGGER.info(f"Running {len(tasks)} repeated games of {horizon} steps with {policy.kind.value}")
    report = BatteryReport(policy=policy, epsilon=epsilon, results=map_cells(run_battery_task, tasks, threads))
    allowed = len(tasks) // 20
    checks = {
        "hannan_consistency": lambda result: max(result.regret_p1, result.regret_p2) <= epsilon,
        "strategy_distance": lambda result: result.distance <= distance_bound,
        "equilibrium_gap": lambda result: result.max_gap <= 2.0 * (eta + epsilon),
        "payoff_band": lambda result: result.max_payoff_deviation <= eta + epsilon,
        "equilibrium_onset": lambda result: result.onset is not None,
    }
    for name, check in checks.items():
        failures = sum(not check(result) for result in report.results)
        report.properties[name] = failures <= allowed
        LOGGER.info(f"Property {name}: {failures} of {len(tasks)} seeds failed")
    return report


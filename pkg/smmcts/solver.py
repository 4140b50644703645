import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from .annotations import Matrix, NodePath, Vector
from .common import (
    CERTIFICATE_TOLERANCE,
    InvalidParameter,
    MissingStrategy,
    SolverCertificationError,
    format_path,
)
from .games import BehavioralStrategyProfile, GameNode, GameSpec, MatrixGame, expected_utility

LOGGER = logging.getLogger(__name__)

HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
ENUMERATION_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class MatrixSolution:
    value: float
    strategy_p1: Vector
    strategy_p2: Vector

    def gaps(self, payoff: Matrix) -> Tuple[float, float]:
        """Equilibrium gaps of the solution: u1(br, sigma2) - v and v - u1(sigma1, br)."""
        best_p1 = float(np.max(payoff @ self.strategy_p2))
        best_p2 = float(np.min(self.strategy_p1 @ payoff))
        return best_p1 - self.value, self.value - best_p2


def _as_payoff(matrix: Union[MatrixGame, Matrix]) -> Matrix:
    if isinstance(matrix, MatrixGame):
        return matrix.payoff
    payoff = np.asarray(matrix, dtype=float)
    if payoff.ndim != 2 or payoff.size == 0 or not np.all(np.isfinite(payoff)):
        raise InvalidParameter("expected a finite, non-empty 2-dimensional payoff matrix")
    return payoff


def _normalize(probs: Vector) -> Vector:
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _certified(payoff: Matrix, strategy_p1: Vector, strategy_p2: Vector) -> Optional[MatrixSolution]:
    lower = float(np.min(strategy_p1 @ payoff))
    upper = float(np.max(payoff @ strategy_p2))
    value = (lower + upper) / 2.0
    if upper - value > CERTIFICATE_TOLERANCE or value - lower > CERTIFICATE_TOLERANCE:
        return None
    return MatrixSolution(value=value, strategy_p1=strategy_p1, strategy_p2=strategy_p2)


def _maximin_strategy(payoff: Matrix) -> Optional[Vector]:
    """Row player's maximin strategy: maximize v subject to x^T M >= v, x in the simplex."""
    rows, cols = payoff.shape
    result = linprog(
        c=np.concatenate([np.zeros(rows), [-1.0]]),
        A_ub=np.hstack([-payoff.T, np.ones((cols, 1))]),
        b_ub=np.zeros(cols),
        A_eq=np.concatenate([np.ones(rows), [0.0]]).reshape(1, -1),
        b_eq=np.ones(1),
        bounds=[(0.0, None)] * rows + [(None, None)],
        method="highs",
        options=HIGHS_OPTIONS,
    )
    if result.status != 0:
        LOGGER.warning(f"Linear program failed with status {result.status}: {result.message}")
        return None
    return _normalize(result.x[:rows])


def solve_matrix_by_support_enumeration(matrix: Union[MatrixGame, Matrix]) -> MatrixSolution:
    """Enumerate square support pairs and solve their indifference systems.

    A zero-sum matrix game always has an extreme equilibrium supported on a square non-singular kernel, so the
    enumeration over equal-size supports is complete.
    """
    payoff = _as_payoff(matrix)
    rows, cols = payoff.shape
    for size in range(1, min(rows, cols) + 1):
        bordered = np.zeros((size + 1, size + 1))
        bordered[:size, size] = -1.0
        bordered[size, :size] = 1.0
        rhs = np.zeros(size + 1)
        rhs[size] = 1.0
        for row_support in itertools.combinations(range(rows), size):
            for col_support in itertools.combinations(range(cols), size):
                kernel = payoff[np.ix_(row_support, col_support)]
                try:
                    bordered[:size, :size] = kernel.T
                    x = np.linalg.solve(bordered, rhs)[:size]
                    bordered[:size, :size] = kernel
                    y = np.linalg.solve(bordered, rhs)[:size]
                except np.linalg.LinAlgError:
                    continue
                if np.any(x < -ENUMERATION_TOLERANCE) or np.any(y < -ENUMERATION_TOLERANCE):
                    continue
                strategy_p1, strategy_p2 = np.zeros(rows), np.zeros(cols)
                strategy_p1[list(row_support)] = x
                strategy_p2[list(col_support)] = y
                solution = _certified(payoff, _normalize(strategy_p1), _normalize(strategy_p2))
                if solution is not None:
                    return solution
    raise SolverCertificationError(f"support enumeration found no certified equilibrium of a {rows}x{cols} matrix")


def solve_matrix(matrix: Union[MatrixGame, Matrix]) -> MatrixSolution:
    payoff = _as_payoff(matrix)
    strategy_p1 = _maximin_strategy(payoff)
    strategy_p2 = _maximin_strategy(-payoff.T)
    if strategy_p1 is not None and strategy_p2 is not None:
        solution = _certified(payoff, strategy_p1, strategy_p2)
        if solution is not None:
            return solution
    LOGGER.info(f"Linear program solution of a {payoff.shape[0]}x{payoff.shape[1]} matrix not certified, enumerating")
    return solve_matrix_by_support_enumeration(payoff)


@dataclass
class ValueTree:
    """Subgame values of every state (terminals included) and the matrix solution at every inner state."""

    values: Dict[NodePath, float] = field(default_factory=dict)
    solutions: Dict[NodePath, MatrixSolution] = field(default_factory=dict)

    @property
    def root_value(self) -> float:
        return self.values[()]

    def child_matrix(self, path: NodePath, node: GameNode) -> Matrix:
        return np.array(
            [[self.values[path + ((i, j),)] for j in range(node.cols)] for i in range(node.rows)], dtype=float
        )


def backward_induction(game: GameSpec) -> ValueTree:
    tree = ValueTree()

    def _solve(path: NodePath, node: GameNode) -> float:
        if node.is_terminal:
            tree.values[path] = node.utility
            return node.utility
        for i in range(node.rows):
            for j in range(node.cols):
                _solve(path + ((i, j),), node.children[i][j])
        solution = solve_matrix(tree.child_matrix(path, node))
        tree.solutions[path] = solution
        tree.values[path] = solution.value
        return solution.value

    _solve((), game.root)
    return tree


def equilibrium_profile(value_tree: ValueTree) -> BehavioralStrategyProfile:
    return BehavioralStrategyProfile(
        p1={path: solution.strategy_p1 for path, solution in value_tree.solutions.items()},
        p2={path: solution.strategy_p2 for path, solution in value_tree.solutions.items()},
    )


def best_response(
    game: GameSpec, fixed_player: int, profile: BehavioralStrategyProfile
) -> Tuple[float, BehavioralStrategyProfile]:
    """Value of the best response against ``fixed_player``'s behavioral strategy, and the pure responder profile.

    Player 1 responds by maximizing, player 2 by minimizing player 1's utility; ties go to the lowest action index.
    """
    if fixed_player not in (1, 2):
        raise InvalidParameter(f"player must be 1 or 2, got {fixed_player}")
    fixed = profile.strategy(fixed_player)
    response = BehavioralStrategyProfile()
    responses = response.strategy(3 - fixed_player)

    def _respond(path: NodePath, node: GameNode) -> float:
        if node.is_terminal:
            return node.utility
        if path not in fixed:
            raise MissingStrategy(path, fixed_player)
        sigma = np.asarray(fixed[path], dtype=float)
        size = node.rows if fixed_player == 1 else node.cols
        if sigma.shape != (size,):
            raise InvalidParameter(f"strategy at {format_path(path)} has {sigma.size} entries, expected {size}")
        values = np.array(
            [[_respond(path + ((i, j),), node.children[i][j]) for j in range(node.cols)] for i in range(node.rows)]
        )
        if fixed_player == 1:
            expected = sigma @ values
            action = int(np.argmin(expected))
        else:
            expected = values @ sigma
            action = int(np.argmax(expected))
        pure = np.zeros(expected.size)
        pure[action] = 1.0
        responses[path] = pure
        return float(expected[action])

    return _respond((), game.root), response


def exploitability(
    game: GameSpec, profile: BehavioralStrategyProfile, root_value: Optional[float] = None
) -> float:
    """v^{h0} - u(sigma1, br): how much a best-responding player 2 gains against player 1's strategy."""
    if root_value is None:
        root_value = backward_induction(game).root_value
    value, _ = best_response(game, 1, profile)
    return root_value - value


@dataclass(frozen=True)
class EpsilonNashReport:
    is_equilibrium: bool
    epsilon: float
    value: float
    gap1: float
    gap2: float


def check_eps_ne(game: GameSpec, profile: BehavioralStrategyProfile, eps: float) -> EpsilonNashReport:
    value = expected_utility(game, profile)
    best_p1, _ = best_response(game, 2, profile)
    best_p2, _ = best_response(game, 1, profile)
    gap1, gap2 = best_p1 - value, value - best_p2
    return EpsilonNashReport(
        is_equilibrium=gap1 <= eps and gap2 <= eps, epsilon=eps, value=value, gap1=gap1, gap2=gap2
    )


@dataclass(frozen=True)
class BandEntry:
    path: NodePath
    depth: int
    mean: float
    value: float
    half_width: float

    @property
    def excess(self) -> float:
        return abs(self.mean - self.value) - self.half_width

    @property
    def inside(self) -> bool:
        return self.excess < 0.0


@dataclass
class BandAudit:
    entries: List[BandEntry] = field(default_factory=list)
    unvisited: List[NodePath] = field(default_factory=list)

    @property
    def violations(self) -> List[BandEntry]:
        return [entry for entry in self.entries if not entry.inside]

    @property
    def worst(self) -> Optional[BandEntry]:
        return max(self.entries, key=lambda entry: entry.excess, default=None)

    def occupancy(self) -> Dict[int, Tuple[int, int]]:
        """Per depth: (nodes inside their band, nodes audited)."""
        counts: Dict[int, Tuple[int, int]] = {}
        for entry in self.entries:
            inside, audited = counts.get(entry.depth, (0, 0))
            counts[entry.depth] = (inside + int(entry.inside), audited + 1)
        return dict(sorted(counts.items()))


def audit_payoff_bands(
    game: GameSpec,
    statistics: Mapping[NodePath, Tuple[float, int]],
    value_tree: ValueTree,
    eps: float,
    delta: float,
) -> BandAudit:
    """Check every visited inner state's mean payoff X/n against v^h +- ((1 + D - d) * eps + delta).

    ``statistics`` maps state paths to the search tree's (X_h, n_h); the root has depth d = 1.
    """
    if eps < 0.0 or delta < 0.0:
        raise InvalidParameter(f"eps and delta must be non-negative, got {eps} and {delta}")
    audit = BandAudit()
    for path, _ in game.inner_states():
        reward_sum, visits = statistics.get(path, (0.0, 0))
        if visits == 0:
            audit.unvisited.append(path)
            continue
        depth = len(path) + 1
        audit.entries.append(
            BandEntry(
                path=path,
                depth=depth,
                mean=reward_sum / visits,
                value=value_tree.values[path],
                half_width=(1 + game.depth - depth) * eps + delta,
            )
        )
    worst = audit.worst
    if worst is not None and not worst.inside:
        LOGGER.info(f"Worst band violation at {format_path(worst.path)}: excess {worst.excess:.6f}")
    return audit

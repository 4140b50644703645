import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .annotations import FileNode, GameFile, JointAction, Matrix, NodePath, PlayerStrategy, Vector
from .common import (
    InvalidGameFile,
    InvalidParameter,
    MissingStrategy,
    format_path,
    uniform,
    validate_gamma,
    validate_probability_vector,
)

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class GameNode:
    """A state of the game: a terminal with player 1's utility, or an inner state with an m x n child matrix."""

    utility: Optional[float] = None
    children: Tuple[Tuple["GameNode", ...], ...] = ()

    @property
    def is_terminal(self) -> bool:
        return self.utility is not None

    @property
    def rows(self) -> int:
        return len(self.children)

    @property
    def cols(self) -> int:
        return len(self.children[0]) if self.children else 0

    def child(self, action: JointAction) -> "GameNode":
        return self.children[action[0]][action[1]]

    def height(self) -> int:
        if self.is_terminal:
            return 0
        return 1 + max(child.height() for row in self.children for child in row)


@dataclass(frozen=True)
class GameSpec:
    root: GameNode
    depth: int

    def __post_init__(self):
        if self.root.is_terminal:
            raise InvalidParameter("the root of a game must be an inner state")
        if self.root.height() != self.depth:
            raise InvalidParameter(f"declared depth {self.depth} does not match the tree height {self.root.height()}")

    def node(self, path: NodePath) -> GameNode:
        node = self.root
        for action in path:
            node = node.child(action)
        return node

    def inner_states(self) -> Iterator[Tuple[NodePath, GameNode]]:
        """Pre-order walk over inner states, children in row-major order."""
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for i in reversed(range(node.rows)):
                for j in reversed(range(node.cols)):
                    child = node.children[i][j]
                    if not child.is_terminal:
                        stack.append((path + ((i, j),), child))

    def terminal_utilities(self) -> Vector:
        utilities = []

        def _collect(node: GameNode):
            if node.is_terminal:
                utilities.append(node.utility)
            else:
                for row in node.children:
                    for child in row:
                        _collect(child)

        _collect(self.root)
        return np.array(utilities)


@dataclass(frozen=True, eq=False)
class MatrixGame:
    payoff: Matrix

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        if payoff.ndim != 2 or payoff.size == 0:
            raise InvalidParameter("a matrix game needs a non-empty 2-dimensional payoff matrix")
        if np.any(~np.isfinite(payoff)) or np.any(payoff < 0.0) or np.any(payoff > 1.0):
            raise InvalidParameter("matrix game payoffs must be finite and lie in [0, 1]")
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)

    @property
    def rows(self) -> int:
        return self.payoff.shape[0]

    @property
    def cols(self) -> int:
        return self.payoff.shape[1]


@dataclass
class BehavioralStrategyProfile:
    p1: PlayerStrategy = field(default_factory=dict)
    p2: PlayerStrategy = field(default_factory=dict)
    uniform_filled: Tuple[NodePath, ...] = ()

    def strategy(self, player: int) -> PlayerStrategy:
        return self.p1 if player == 1 else self.p2

    def validate(self, game: GameSpec, players: Sequence[int] = (1, 2)):
        for path, node in game.inner_states():
            for player in players:
                strategies = self.strategy(player)
                if path not in strategies:
                    raise MissingStrategy(path, player)
                size = node.rows if player == 1 else node.cols
                probs = validate_probability_vector(strategies[path], f"strategy at {format_path(path)}")
                if probs.size != size:
                    raise InvalidParameter(
                        f"strategy of player {player} at {format_path(path)} has {probs.size} entries, expected {size}"
                    )


@dataclass(frozen=True)
class RandomGameParams:
    depth: int
    branching: int
    seed: int = 0
    utility_set: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.depth < 1 or self.branching < 1:
            raise InvalidParameter(f"depth and branching must be at least 1, got {self.depth} and {self.branching}")
        if self.utility_set is not None:
            if not self.utility_set:
                raise InvalidParameter("utility set must not be empty")
            _check_utilities(self.utility_set)


def _check_utilities(utilities: Sequence[float]):
    for utility in utilities:
        if not 0.0 <= utility <= 1.0:
            raise InvalidParameter(f"utilities must lie in [0, 1], got {utility}")


def uniform_tree_size(depth: int, branching: int) -> Tuple[int, int]:
    """Number of inner states and of terminals of the complete uniform tree."""
    joint = branching * branching
    inner = sum(joint ** level for level in range(depth))
    return inner, joint ** depth


def build_uniform_game(depth: int, branching: int, utilities: Sequence[float]) -> GameSpec:
    """Build the complete uniform tree; terminals take ``utilities`` in row-major, depth-first order."""
    _, terminals = uniform_tree_size(depth, branching)
    if len(utilities) != terminals:
        raise InvalidParameter(f"expected {terminals} utilities, got {len(utilities)}")
    _check_utilities(utilities)
    values = iter(float(utility) for utility in utilities)

    def _build(level: int) -> GameNode:
        if level == depth:
            return GameNode(utility=next(values))
        return GameNode(
            children=tuple(tuple(_build(level + 1) for _ in range(branching)) for _ in range(branching))
        )

    return GameSpec(root=_build(0), depth=depth)


def generate_random_game(params: RandomGameParams) -> GameSpec:
    _, terminals = uniform_tree_size(params.depth, params.branching)
    rng = np.random.default_rng(params.seed)
    if params.utility_set is None:
        utilities = rng.random(terminals)
    else:
        utilities = rng.choice(np.array(params.utility_set, dtype=float), size=terminals)
    return build_uniform_game(params.depth, params.branching, utilities.tolist())


def matrix_game_as_game(matrix: MatrixGame) -> GameSpec:
    return GameSpec(
        root=GameNode(
            children=tuple(tuple(GameNode(utility=float(value)) for value in row) for row in matrix.payoff)
        ),
        depth=1,
    )


def _decode_assignment(index: int, base: int, length: int) -> Tuple[int, ...]:
    digits = []
    for _ in range(length):
        index, digit = divmod(index, base)
        digits.append(digit)
    return tuple(reversed(digits))


def enumerate_small_games(
    depth: int,
    branching: int,
    utilities: Sequence[float],
    budget: Optional[int] = None,
    seed: int = 0,
) -> Iterator[GameSpec]:
    """Stream every assignment of ``utilities`` to the terminals, or a seeded subsample of ``budget`` of them."""
    values = tuple(float(utility) for utility in utilities)
    if not values:
        raise InvalidParameter("utility set must not be empty")
    _check_utilities(values)
    if budget is not None and budget < 1:
        raise InvalidParameter(f"budget must be at least 1, got {budget}")
    _, terminals = uniform_tree_size(depth, branching)
    total = len(values) ** terminals
    if budget is None or budget >= total:
        LOGGER.info(f"Enumerating all {total} games of depth {depth} and branching {branching}")
        for assignment in itertools.product(values, repeat=terminals):
            yield build_uniform_game(depth, branching, assignment)
        return
    LOGGER.info(f"Sampling {budget} of {total} games of depth {depth} and branching {branching}")
    rng = np.random.default_rng(seed)
    if total < 2 ** 63:
        for index in rng.choice(total, size=budget, replace=False):
            digits = _decode_assignment(int(index), len(values), terminals)
            yield build_uniform_game(depth, branching, [values[digit] for digit in digits])
    else:
        # Distinct draws are not enforced; collisions are negligible in a space this large
        for _ in range(budget):
            digits = rng.integers(0, len(values), size=terminals)
            yield build_uniform_game(depth, branching, [values[digit] for digit in digits])


def expected_utility(game: GameSpec, profile: BehavioralStrategyProfile) -> float:
    def _value(path: NodePath, node: GameNode) -> float:
        if node.is_terminal:
            return node.utility
        if path not in profile.p1:
            raise MissingStrategy(path, 1)
        if path not in profile.p2:
            raise MissingStrategy(path, 2)
        sigma1, sigma2 = profile.p1[path], profile.p2[path]
        total = 0.0
        for i in range(node.rows):
            if sigma1[i] == 0.0:
                continue
            for j in range(node.cols):
                if sigma2[j] == 0.0:
                    continue
                total += sigma1[i] * sigma2[j] * _value(path + ((i, j),), node.children[i][j])
        return total

    return _value((), game.root)


def sample_outcome(game: GameSpec, profile: BehavioralStrategyProfile, rng: np.random.Generator) -> float:
    path, node = (), game.root
    while not node.is_terminal:
        i = int(rng.choice(node.rows, p=profile.p1[path]))
        j = int(rng.choice(node.cols, p=profile.p2[path]))
        path, node = path + ((i, j),), node.children[i][j]
    return node.utility


def uniform_profile(game: GameSpec) -> BehavioralStrategyProfile:
    profile = BehavioralStrategyProfile()
    for path, node in game.inner_states():
        profile.p1[path] = uniform(node.rows)
        profile.p2[path] = uniform(node.cols)
    return profile


def mix_profile(
    profile: BehavioralStrategyProfile, gamma: float, players: Sequence[int] = (1, 2)
) -> BehavioralStrategyProfile:
    """Mix uniform exploration into every state: gamma / k + (1 - gamma) * sigma."""
    validate_gamma(gamma, low_inclusive=True, high_inclusive=True)

    def _mix(strategies: PlayerStrategy, player: int) -> PlayerStrategy:
        if player not in players:
            return dict(strategies)
        return {path: gamma / len(probs) + (1.0 - gamma) * probs for path, probs in strategies.items()}

    return BehavioralStrategyProfile(
        p1=_mix(profile.p1, 1), p2=_mix(profile.p2, 2), uniform_filled=profile.uniform_filled
    )


def _node_to_file(node: GameNode) -> FileNode:
    if node.is_terminal:
        return {"terminal": node.utility}
    return {
        "rows": node.rows,
        "cols": node.cols,
        "children": [[_node_to_file(child) for child in row] for row in node.children],
    }


def game_to_document(game: GameSpec) -> GameFile:
    return {"depth": game.depth, "root": _node_to_file(game.root)}


def _node_from_file(document: FileNode, location: str) -> GameNode:
    if not isinstance(document, dict):
        raise InvalidGameFile(location, "a node must be a JSON object")
    if "terminal" in document:
        utility = document["terminal"]
        if isinstance(utility, bool) or not isinstance(utility, (int, float)) or not math.isfinite(utility):
            raise InvalidGameFile(location, f"terminal utility must be a finite number, got {utility!r}")
        if not 0.0 <= utility <= 1.0:
            raise InvalidGameFile(location, f"terminal utility {utility} lies outside [0, 1]")
        return GameNode(utility=float(utility))
    for key in ("rows", "cols", "children"):
        if key not in document:
            raise InvalidGameFile(location, f"inner node is missing '{key}'")
    rows, cols, children = document["rows"], document["cols"], document["children"]
    if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
        raise InvalidGameFile(location, f"rows and cols must be positive integers, got {rows!r} and {cols!r}")
    if not isinstance(children, list) or len(children) != rows:
        raise InvalidGameFile(location, f"expected {rows} rows of children")
    built = []
    for i, row in enumerate(children):
        if not isinstance(row, list) or len(row) != cols:
            raise InvalidGameFile(f"{location}.children[{i}]", f"expected {cols} children")
        built.append(tuple(_node_from_file(child, f"{location}.children[{i}][{j}]") for j, child in enumerate(row)))
    return GameNode(children=tuple(built))


def game_from_document(document: GameFile) -> GameSpec:
    if not isinstance(document, dict) or "root" not in document or "depth" not in document:
        raise InvalidGameFile("document", "expected an object with 'depth' and 'root'")
    root = _node_from_file(document["root"], "root")
    if root.is_terminal:
        raise InvalidGameFile("root", "the root must be an inner node")
    if document["depth"] != root.height():
        raise InvalidGameFile("depth", f"declared depth {document['depth']} but the tree has depth {root.height()}")
    return GameSpec(root=root, depth=root.height())


def save_game(game: GameSpec, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(game_to_document(game), f)


def load_game(path: str) -> GameSpec:
    LOGGER.info(f"Loading game {path} ...")
    with open(path, encoding="utf-8") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as error:
            raise InvalidGameFile("document", f"not valid JSON ({error})") from error
    return game_from_document(document)

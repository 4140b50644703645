import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .annotations import Diagnostics, JointAction, NodePath, Vector
from .common import InvalidParameter, format_path, uniform, validate_checkpoints
from .games import BehavioralStrategyProfile, GameNode, GameSpec
from .policies import FixedLearner, Learner, PolicyConfig, make_learner

LOGGER = logging.getLogger(__name__)


class RetVal(str, enum.Enum):
    SAMPLE = "sample"
    MEAN = "mean"


class ChildValue(str, enum.Enum):
    MEAN = "mean"
    SUM = "sum"


class ProfileKind(str, enum.Enum):
    EMPIRICAL_FREQUENCIES = "empirical"
    AVERAGE_STRATEGY = "average"


@dataclass(frozen=True, eq=False)
class EngineConfig:
    policy_p1: PolicyConfig
    policy_p2: PolicyConfig
    retval: RetVal = RetVal.SAMPLE
    seed: int = 0
    child_value: ChildValue = ChildValue.MEAN
    # Replaces every learner by one playing the given profile
    fixed_profile: Optional[BehavioralStrategyProfile] = None

    def __post_init__(self):
        object.__setattr__(self, "retval", RetVal(self.retval))
        object.__setattr__(self, "child_value", ChildValue(self.child_value))


@dataclass(eq=False)
class TreeNode:
    game_node: GameNode
    path: NodePath
    rng: Optional[np.random.Generator] = None
    reward_sum: float = 0.0
    visits: int = 0
    arrivals: int = 0
    expansions: int = 0
    children: List[List[Optional["TreeNode"]]] = field(default_factory=list)
    unexpanded: List[JointAction] = field(default_factory=list)
    learner_p1: Optional[Learner] = None
    learner_p2: Optional[Learner] = None
    counts_p1: Optional[Vector] = None
    counts_p2: Optional[Vector] = None
    joint_counts: Optional[np.ndarray] = None

    @property
    def is_terminal(self) -> bool:
        return self.game_node.is_terminal

    @property
    def depth(self) -> int:
        return len(self.path) + 1

    @property
    def mean(self) -> float:
        return self.reward_sum / self.visits

    @property
    def updates(self) -> int:
        return int(self.joint_counts.sum())

    def iter_nodes(self) -> Iterator["TreeNode"]:
        yield self
        for row in self.children:
            for child in row:
                if child is not None:
                    yield from child.iter_nodes()


def _node_rng(seed: int, path: NodePath) -> np.random.Generator:
    spawn_key = tuple(action for joint_action in path for action in joint_action)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=spawn_key))


def create_node(game_node: GameNode, path: NodePath, config: EngineConfig) -> TreeNode:
    node = TreeNode(game_node=game_node, path=path)
    if game_node.is_terminal:
        return node
    rows, cols = game_node.rows, game_node.cols
    node.rng = _node_rng(config.seed, path)
    node.children = [[None] * cols for _ in range(rows)]
    node.unexpanded = [(i, j) for i in range(rows) for j in range(cols)]
    if config.fixed_profile is not None:
        node.learner_p1 = FixedLearner(config.fixed_profile.p1[path])
        node.learner_p2 = FixedLearner(config.fixed_profile.p2[path])
    else:
        node.learner_p1 = make_learner(config.policy_p1, rows)
        node.learner_p2 = make_learner(config.policy_p2, cols)
    node.counts_p1 = np.zeros(rows, dtype=np.int64)
    node.counts_p2 = np.zeros(cols, dtype=np.int64)
    node.joint_counts = np.zeros((rows, cols), dtype=np.int64)
    return node


def retval(u1: float, reward_sum: float, visits: int, variant: RetVal) -> float:
    if visits < 1:
        raise InvalidParameter("the returned value needs at least one update of the node")
    if RetVal(variant) == RetVal.MEAN:
        return reward_sum / visits
    return u1


def rollout(game_node: GameNode, rng: np.random.Generator) -> float:
    """Play uniformly random joint actions down to a terminal and return its utility."""
    node = game_node
    while not node.is_terminal:
        node = node.children[int(rng.integers(node.rows))][int(rng.integers(node.cols))]
    return node.utility


def counterfactual_vector(
    node: TreeNode,
    opponent_action: int,
    realized: float,
    selected: int,
    player: int = 1,
    child_value: ChildValue = ChildValue.MEAN,
) -> Vector:
    """Payoffs of every own action against the opponent's sampled action, from ``player``'s point of view.

    The selected action gets the realized utility; any other action gets its child's statistic, or the realized
    utility while that child has no statistics yet.
    """
    size = node.game_node.rows if player == 1 else node.game_node.cols
    values = np.full(size, float(realized))
    for action in range(size):
        if action == selected:
            continue
        child = node.children[action][opponent_action] if player == 1 else node.children[opponent_action][action]
        if child is not None and child.visits > 0:
            values[action] = child.mean if child_value == ChildValue.MEAN else child.reward_sum
    if player == 2:
        return 1.0 - values
    return values


def _update(node: TreeNode, i: int, j: int, u1: float, config: EngineConfig):
    node.counts_p1[i] += 1
    node.counts_p2[j] += 1
    node.joint_counts[i, j] += 1
    alternatives_p1 = alternatives_p2 = None
    if node.learner_p1.full_information:
        alternatives_p1 = counterfactual_vector(node, j, u1, i, 1, config.child_value)
    if node.learner_p2.full_information:
        alternatives_p2 = counterfactual_vector(node, i, u1, j, 2, config.child_value)
    node.learner_p1.update(i, u1, alternatives_p1)
    node.learner_p2.update(j, 1.0 - u1, alternatives_p2)


@dataclass(frozen=True)
class SimulationOutcome:
    u1: float
    expanded: bool = False


def run_simulation(node: TreeNode, config: EngineConfig) -> SimulationOutcome:
    node.arrivals += 1
    if node.is_terminal:
        return SimulationOutcome(node.game_node.utility)
    if node.unexpanded:
        i, j = node.unexpanded.pop(int(node.rng.integers(len(node.unexpanded))))
        child = create_node(node.game_node.children[i][j], node.path + ((i, j),), config)
        node.children[i][j] = child
        node.expansions += 1
        child.arrivals += 1
        u1 = rollout(child.game_node, node.rng)
        child.reward_sum += u1
        child.visits += 1
        _update(node, i, j, u1, config)
        return SimulationOutcome(retval(u1, child.reward_sum, child.visits, config.retval), expanded=True)
    i = node.learner_p1.select(node.rng)
    j = node.learner_p2.select(node.rng)
    outcome = run_simulation(node.children[i][j], config)
    node.reward_sum += outcome.u1
    node.visits += 1
    _update(node, i, j, outcome.u1, config)
    return SimulationOutcome(retval(outcome.u1, node.reward_sum, node.visits, config.retval), outcome.expanded)


def find_node(root: TreeNode, path: NodePath) -> Optional[TreeNode]:
    node = root
    for i, j in path:
        if node.is_terminal or node.children[i][j] is None:
            return None
        node = node.children[i][j]
    return node


def extract_profile(root: TreeNode, game: GameSpec, kind: ProfileKind) -> BehavioralStrategyProfile:
    """Per-state empirical frequencies t_i / t or average strategies; never-updated states get uniform strategies."""
    kind = ProfileKind(kind)
    profile = BehavioralStrategyProfile()
    filled = []
    for path, game_node in game.inner_states():
        node = find_node(root, path)
        if node is None or node.updates == 0:
            filled.append(path)
            profile.p1[path] = uniform(game_node.rows)
            profile.p2[path] = uniform(game_node.cols)
        elif kind == ProfileKind.EMPIRICAL_FREQUENCIES:
            profile.p1[path] = node.counts_p1 / node.updates
            profile.p2[path] = node.counts_p2 / node.updates
        else:
            profile.p1[path] = node.learner_p1.average_strategy()
            profile.p2[path] = node.learner_p2.average_strategy()
    profile.uniform_filled = tuple(filled)
    return profile


def node_statistics(root: TreeNode) -> Dict[NodePath, tuple]:
    """(X_h, n_h) of every inner state in the tree."""
    return {node.path: (node.reward_sum, node.visits) for node in root.iter_nodes() if not node.is_terminal}


def check_conservation(root: TreeNode) -> List[str]:
    """Bookkeeping identities of the tree; returns a description of every violation."""
    violations = []
    for node in root.iter_nodes():
        where = format_path(node.path)
        created = 0 if node is root else 1
        if node.visits > 0 and not 0.0 <= node.mean <= 1.0:
            violations.append(f"{where}: mean {node.mean} outside [0, 1]")
        if node.is_terminal:
            if node.visits != created:
                violations.append(f"{where}: terminal updated {node.visits} times")
            continue
        updates = node.updates
        if updates != node.arrivals - created:
            violations.append(f"{where}: {updates} updates for {node.arrivals} arrivals")
        if node.visits != updates - node.expansions + created:
            violations.append(f"{where}: n_h = {node.visits} but {updates} updates and {node.expansions} expansions")
        if node.counts_p1.sum() != updates or node.counts_p2.sum() != updates:
            violations.append(f"{where}: marginal action counts do not sum to {updates}")
        expanded = 0
        for i, row in enumerate(node.children):
            for j, child in enumerate(row):
                if child is None:
                    if node.joint_counts[i, j]:
                        violations.append(f"{where}: joint action {(i, j)} counted but never expanded")
                    continue
                expanded += 1
                if child.arrivals != node.joint_counts[i, j]:
                    violations.append(
                        f"{where}: child {(i, j)} reached {child.arrivals} times, counted {node.joint_counts[i, j]}"
                    )
        if expanded != node.expansions or len(node.unexpanded) + expanded != node.joint_counts.size:
            violations.append(f"{where}: {expanded} children for {node.expansions} expansions")
    return violations


@dataclass(eq=False)
class SearchTree:
    game: GameSpec
    config: EngineConfig
    root: TreeNode
    iterations: int = 0
    size: int = 1
    last_expansion: int = 0

    @classmethod
    def create(cls, game: GameSpec, config: EngineConfig) -> "SearchTree":
        return cls(game=game, config=config, root=create_node(game.root, (), config))

    def simulate(self) -> SimulationOutcome:
        outcome = run_simulation(self.root, self.config)
        self.iterations += 1
        if outcome.expanded:
            self.size += 1
            self.last_expansion = self.iterations
        return outcome

    def profile(self, kind: ProfileKind = ProfileKind.EMPIRICAL_FREQUENCIES) -> BehavioralStrategyProfile:
        return extract_profile(self.root, self.game, kind)

    def diagnostics(self) -> Diagnostics:
        statistics = node_statistics(self.root)
        return {
            "iterations": self.iterations,
            "root_value": self.root.mean if self.root.visits else float("nan"),
            "tree_size": self.size,
            "last_expansion": self.last_expansion,
            "node_visits": {path: visits for path, (_, visits) in statistics.items()},
            "unvisited": [path for path, _ in self.game.inner_states() if path not in statistics],
        }


def iterate_checkpoints(tree: SearchTree, checkpoints: Sequence[int]) -> Iterator[int]:
    """Simulate up to every checkpoint in turn, yielding the iteration count each time one is reached."""
    for checkpoint in validate_checkpoints(checkpoints):
        while tree.iterations < checkpoint:
            tree.simulate()
        LOGGER.debug(f"Reached iteration {checkpoint}, tree size {tree.size}")
        yield checkpoint


@dataclass(eq=False)
class RunResult:
    tree: SearchTree
    profile: BehavioralStrategyProfile
    diagnostics: Diagnostics


def run(
    game: GameSpec,
    config: EngineConfig,
    iterations: int,
    kind: ProfileKind = ProfileKind.EMPIRICAL_FREQUENCIES,
) -> RunResult:
    if iterations < 1:
        raise InvalidParameter(f"iterations must be at least 1, got {iterations}")
    tree = SearchTree.create(game, config)
    for _ in iterate_checkpoints(tree, [iterations]):
        pass
    LOGGER.info(f"Search finished after {iterations} iterations with {tree.size} nodes")
    return RunResult(tree=tree, profile=tree.profile(kind), diagnostics=tree.diagnostics())

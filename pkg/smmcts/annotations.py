from typing import Dict, List, Tuple, TypedDict, Union

import numpy as np


JointAction = Tuple[int, int]
NodePath = Tuple[JointAction, ...]

Vector = np.ndarray
Matrix = np.ndarray

PlayerStrategy = Dict[NodePath, Vector]


class TerminalFileNode(TypedDict):
    terminal: float


class InnerFileNode(TypedDict):
    rows: int
    cols: int
    children: List[List[Union["TerminalFileNode", "InnerFileNode"]]]


FileNode = Union[TerminalFileNode, InnerFileNode]


class GameFile(TypedDict):
    depth: int
    root: FileNode


class Diagnostics(TypedDict):
    iterations: int
    root_value: float
    tree_size: int
    last_expansion: int
    node_visits: Dict[NodePath, int]
    unvisited: List[NodePath]


class SweepRow(TypedDict):
    policy: str
    gamma: float
    depth: int
    bf: int
    game_id: int
    run_id: int
    iteration: int
    exploitability: float


class TraceRow(TypedDict):
    policy: str
    gamma: float
    game_id: int
    seed: int
    step: int
    i: int
    j: int
    payoff: float
    g: float
    gmax: float
    r: float
    gap1: float
    gap2: float

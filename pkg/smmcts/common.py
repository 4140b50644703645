from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

from .annotations import NodePath, Vector

Cell = TypeVar("Cell")
Result = TypeVar("Result")

PROBABILITY_TOLERANCE = 1e-9
CERTIFICATE_TOLERANCE = 1e-8


class SmmctsError(Exception):
    pass


class InvalidParameter(SmmctsError, ValueError):
    pass


class InvalidGameFile(SmmctsError):
    def __init__(self, location: str, error: str):
        self.location = location
        super().__init__(f"Invalid game file at {location}. Reason: {error}")


class MissingStrategy(SmmctsError):
    def __init__(self, path: NodePath, player: int):
        self.path = path
        self.player = player
        super().__init__(f"Missing strategy of player {player} at state {format_path(path)}")


class ErrorBoundViolation(SmmctsError):
    pass


class TraceInvariantError(SmmctsError):
    pass


class SolverCertificationError(SmmctsError):
    pass


def format_path(path: NodePath) -> str:
    if not path:
        return "root"
    return "root" + "".join(f"[{i}][{j}]" for i, j in path)


def uniform(k: int) -> Vector:
    return np.full(k, 1.0 / k)


def validate_probability_vector(probs: Vector, name: str = "strategy") -> Vector:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise InvalidParameter(f"{name} must be a non-empty vector")
    if np.any(probs < -PROBABILITY_TOLERANCE) or abs(probs.sum() - 1.0) > PROBABILITY_TOLERANCE:
        raise InvalidParameter(f"{name} must be non-negative and sum to 1, got {probs.tolist()}")
    return probs


def validate_gamma(gamma: float, low_inclusive: bool = False, high_inclusive: bool = False) -> float:
    low_ok = gamma >= 0.0 if low_inclusive else gamma > 0.0
    high_ok = gamma <= 1.0 if high_inclusive else gamma < 1.0
    if not (low_ok and high_ok):
        low = "[" if low_inclusive else "("
        high = "]" if high_inclusive else ")"
        raise InvalidParameter(f"gamma must lie in {low}0, 1{high}, got {gamma}")
    return float(gamma)


def sample_action(probs: Vector, rng: np.random.Generator) -> int:
    # One uniform draw per sample keeps the stream consumption independent of k
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(index, len(probs) - 1)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(key) for key in keys]).generate_state(1, dtype=np.uint64)[0])


def log_spaced_checkpoints(total: int, per_decade: int = 4, start: int = 1) -> List[int]:
    if total < 1:
        raise InvalidParameter(f"total must be at least 1, got {total}")
    exponents = np.arange(0, np.log10(total) * per_decade + 1) / per_decade
    points = {int(round(10 ** exponent)) for exponent in exponents}
    points.add(total)
    return sorted(point for point in points if start <= point <= total)


def validate_checkpoints(checkpoints: Sequence[int]) -> List[int]:
    checkpoints = [int(checkpoint) for checkpoint in checkpoints]
    if not checkpoints or checkpoints[0] < 1:
        raise InvalidParameter("checkpoints must be a non-empty sequence of positive integers")
    for previous, current in zip(checkpoints, checkpoints[1:]):
        if current <= previous:
            raise InvalidParameter(f"checkpoints must be strictly increasing, got {previous} then {current}")
    return checkpoints


def final_decade(checkpoints: Sequence[int]) -> List[int]:
    last = checkpoints[-1]
    return [checkpoint for checkpoint in checkpoints if checkpoint * 10 >= last]


def map_cells(function: Callable[[Cell], Result], cells: Sequence[Cell], threads: int = 1) -> List[Result]:
    """Apply ``function`` to every cell, in worker processes when ``threads`` > 1; results keep the cell order."""
    if threads < 1:
        raise InvalidParameter(f"threads must be at least 1, got {threads}")
    if threads == 1 or len(cells) < 2:
        return [function(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(function, cells))

import argparse
import csv
import enum
import itertools
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import __version__
from .annotations import SweepRow
from .bandits import MATCHING_PENNIES, Perturbation, random_matrix_game, run_battery, write_trace_csv
from .common import (
    InvalidParameter,
    SmmctsError,
    derive_seed,
    final_decade,
    format_path,
    log_spaced_checkpoints,
    map_cells,
    validate_checkpoints,
    validate_gamma,
)
from .engine import EngineConfig, RetVal, SearchTree, iterate_checkpoints, node_statistics
from .games import (
    GameSpec,
    RandomGameParams,
    enumerate_small_games,
    generate_random_game,
    load_game,
    mix_profile,
    save_game,
)
from .policies import Exploration, PolicyConfig, PolicyKind
from .solver import audit_payoff_bands, backward_induction, equilibrium_profile, exploitability

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PROPERTY_FAILURE = 2
WORSTCASE_CHUNK = 256


class Variant(str, enum.Enum):
    """Selection policy plus the value a node hands its parent: the ``m`` variants propagate means."""

    RM = "rm"
    RMM = "rmm"
    EXP3 = "exp3"
    EXP3M = "exp3m"

    @property
    def kind(self) -> PolicyKind:
        return PolicyKind.RM if self in (Variant.RM, Variant.RMM) else PolicyKind.EXP3

    @property
    def retval(self) -> RetVal:
        return RetVal.MEAN if self in (Variant.RMM, Variant.EXP3M) else RetVal.SAMPLE

    def engine_config(self, gamma: float, seed: int, **kwargs) -> EngineConfig:
        policy = PolicyConfig(self.kind, gamma)
        return EngineConfig(policy_p1=policy, policy_p2=policy, retval=self.retval, seed=seed, **kwargs)


@dataclass(frozen=True)
class ExperimentConfig:
    depths: Tuple[int, ...] = (2,)
    branchings: Tuple[int, ...] = (2,)
    gammas: Tuple[float, ...] = (0.05,)
    variants: Tuple[Variant, ...] = (Variant.RM,)
    games: int = 1
    runs: int = 1
    iterations: int = 1000
    # Empty means log-spaced checkpoints up to ``iterations``
    checkpoints: Tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(Variant(variant) for variant in self.variants))
        counts = {"games": self.games, "runs": self.runs, "iterations": self.iterations}
        counts.update({"depth": min(self.depths, default=0), "branching factor": min(self.branchings, default=0)})
        for name, count in counts.items():
            if count < 1:
                raise InvalidParameter(f"{name} must be at least 1, got {count}")
        if not self.gammas or not self.variants:
            raise InvalidParameter("at least one gamma and one policy are required")
        for gamma in self.gammas:
            validate_gamma(gamma)
        if self.checkpoints:
            checkpoints = validate_checkpoints(self.checkpoints)
            if checkpoints[-1] > self.iterations:
                raise InvalidParameter(f"checkpoint {checkpoints[-1]} exceeds {self.iterations} iterations")

    def checkpoint_schedule(self) -> List[int]:
        if self.checkpoints:
            return list(self.checkpoints)
        return log_spaced_checkpoints(self.iterations)


@dataclass(frozen=True)
class SweepCell:
    variant: Variant
    gamma: float
    depth: int
    branching: int
    game_id: int
    run_id: int
    game_seed: int
    run_seed: int
    checkpoints: Tuple[int, ...]


def run_sweep_cell(cell: SweepCell) -> List[SweepRow]:
    game = generate_random_game(RandomGameParams(cell.depth, cell.branching, cell.game_seed))
    value = backward_induction(game).root_value
    tree = SearchTree.create(game, cell.variant.engine_config(cell.gamma, cell.run_seed))
    rows = []
    for iteration in iterate_checkpoints(tree, cell.checkpoints):
        rows.append(
            {
                "policy": cell.variant.value,
                "gamma": cell.gamma,
                "depth": cell.depth,
                "bf": cell.branching,
                "game_id": cell.game_id,
                "run_id": cell.run_id,
                "iteration": iteration,
                "exploitability": exploitability(game, tree.profile(), value),
            }
        )
    return rows


def sweep_cells(config: ExperimentConfig) -> List[SweepCell]:
    """Cells in canonical order; every variant and gamma sees the same games and run seeds."""
    checkpoints = tuple(config.checkpoint_schedule())
    return [
        SweepCell(
            variant=variant,
            gamma=gamma,
            depth=depth,
            branching=branching,
            game_id=game_id,
            run_id=run_id,
            game_seed=derive_seed(config.seed, depth, branching, game_id),
            run_seed=derive_seed(config.seed, depth, branching, game_id, run_id),
            checkpoints=checkpoints,
        )
        for variant, gamma, depth, branching, game_id, run_id in itertools.product(
            config.variants, config.gammas, config.depths, config.branchings, range(config.games), range(config.runs)
        )
    ]


def run_sweep(config: ExperimentConfig, threads: int = 1) -> List[SweepRow]:
    cells = sweep_cells(config)
    LOGGER.info(f"Running {len(cells)} sweep cells on {threads} worker(s)")
    return [row for rows in map_cells(run_sweep_cell, cells, threads) for row in rows]


def mean_exploitability(rows: Iterable[SweepRow]) -> Dict[Tuple, float]:
    """Mean exploitability per (policy, gamma, depth, bf, iteration), in first-seen order."""
    groups: Dict[Tuple, List[float]] = {}
    for row in rows:
        key = (row["policy"], row["gamma"], row["depth"], row["bf"], row["iteration"])
        groups.setdefault(key, []).append(row["exploitability"])
    return {key: float(np.mean(values)) for key, values in groups.items()}


def write_sweep_csv(rows: Sequence[SweepRow], stream: TextIO):
    writer = csv.DictWriter(stream, fieldnames=list(SweepRow.__annotations__), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


@dataclass(frozen=True)
class WorstcaseCell:
    game_id: int
    game: GameSpec
    variants: Tuple[Variant, ...]
    gamma: float
    iterations: int
    runs: int
    seed: int


def run_worstcase_cell(cell: WorstcaseCell) -> Dict[Variant, float]:
    """Mean exploitability of every variant over ``runs`` runs of ``iterations`` iterations."""
    value = backward_induction(cell.game).root_value
    means = {}
    for variant in cell.variants:
        scores = []
        for run_id in range(cell.runs):
            config = variant.engine_config(cell.gamma, derive_seed(cell.seed, cell.game_id, run_id))
            tree = SearchTree.create(cell.game, config)
            for _ in iterate_checkpoints(tree, [cell.iterations]):
                pass
            scores.append(exploitability(cell.game, tree.profile(), value))
        means[variant] = float(np.mean(scores))
    return means


def mixed_equilibrium_floor(game: GameSpec, gamma: float) -> Tuple[float, float]:
    """Game value and the exploitability of its equilibrium profile mixed with gamma-uniform exploration."""
    value_tree = backward_induction(game)
    mixed = mix_profile(equilibrium_profile(value_tree), gamma)
    return value_tree.root_value, exploitability(game, mixed, value_tree.root_value)


def _parse_utilities(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(value) for value in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")


def _parse_checkpoints(text: str) -> Tuple[int, ...]:
    if text == "log":
        return ()
    try:
        return tuple(int(value) for value in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'log' or a comma separated list of iterations, got {text!r}")


def _open_output(path: Optional[str]) -> TextIO:
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", newline="", encoding="utf-8")


def cmd_solve(args: argparse.Namespace) -> int:
    game = load_game(args.game)
    value_tree = backward_induction(game)
    print(f"value {value_tree.root_value:.12g}")
    for path, _ in game.inner_states():
        print(f"{format_path(path)} {value_tree.values[path]:.12g}")
    if args.profile:
        profile = equilibrium_profile(value_tree)
        document = {
            format_path(path): {"p1": profile.p1[path].tolist(), "p2": profile.p2[path].tolist()}
            for path, _ in game.inner_states()
        }
        stream = _open_output(args.out)
        try:
            json.dump(document, stream, indent=2)
            stream.write("\n")
        finally:
            if stream is not sys.stdout:
                stream.close()
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = ExperimentConfig(
        depths=tuple(args.depth or [2]),
        branchings=tuple(args.bf or [2]),
        gammas=tuple(args.gamma or [0.05]),
        variants=tuple(args.policy or [Variant.RM]),
        games=args.games,
        runs=args.runs,
        iterations=args.iters,
        checkpoints=args.checkpoints,
        seed=args.seed,
    )
    rows = run_sweep(config, args.threads)
    summary = sys.stdout
    if args.out is None or args.out == "-":
        write_sweep_csv(rows, sys.stdout)
        summary = sys.stderr
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            write_sweep_csv(rows, f)
    for (policy, gamma, depth, bf, iteration), mean in mean_exploitability(rows).items():
        print(f"{policy} gamma={gamma} depth={depth} bf={bf} iteration={iteration} mean={mean:.6f}", file=summary)
    return EXIT_OK


def cmd_worstcase(args: argparse.Namespace) -> int:
    if not args.full and args.budget is None:
        raise InvalidParameter("either --budget or --full is required")
    variants = tuple(args.policy or [Variant.RM, Variant.RMM])
    validate_gamma(args.gamma)
    for name, count in {"eval-iters": args.eval_iters, "eval-runs": args.eval_runs}.items():
        if count < 1:
            raise InvalidParameter(f"{name} must be at least 1, got {count}")
    games = enumerate_small_games(args.depth, args.bf, args.utilities, None if args.full else args.budget, args.seed)
    out = args.out or "worstcase"
    os.makedirs(out, exist_ok=True)
    worst: Dict[Variant, Tuple[float, int, GameSpec]] = {}
    with open(os.path.join(out, "candidates.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["game_id", "policy", "exploitability"])
        numbered = enumerate(games)
        while True:
            chunk = [
                WorstcaseCell(game_id, game, variants, args.gamma, args.eval_iters, args.eval_runs, args.seed)
                for game_id, game in itertools.islice(numbered, WORSTCASE_CHUNK)
            ]
            if not chunk:
                break
            LOGGER.info(f"Evaluating candidate games {chunk[0].game_id} to {chunk[-1].game_id}")
            for cell, means in zip(chunk, map_cells(run_worstcase_cell, chunk, args.threads)):
                for variant in variants:
                    writer.writerow([cell.game_id, variant.value, means[variant]])
                    # Strict comparison keeps the first game found on ties
                    if variant not in worst or means[variant] > worst[variant][0]:
                        worst[variant] = (means[variant], cell.game_id, cell.game)
    for variant in variants:
        score, game_id, game = worst[variant]
        save_game(game, os.path.join(out, f"worst_{variant.value}.json"))
        value, floor = mixed_equilibrium_floor(game, args.gamma)
        print(f"{variant.value} worst_game={game_id} exploitability={score:.6f} value={value:.6f} floor={floor:.6f}")
    return EXIT_OK


def cmd_bandit(args: argparse.Namespace) -> int:
    if args.matrix == "matching-pennies":
        matrices = [MATCHING_PENNIES] * args.games
    else:
        matrices = [random_matrix_game(derive_seed(args.seed, game_id)) for game_id in range(args.games)]
    perturbation = args.perturbation
    if perturbation is None and args.eta > 0.0:
        perturbation = Perturbation.UNIFORM
    rows = []
    passed = True
    for kind in args.policy or [PolicyKind.RM, PolicyKind.EXP3]:
        policy = PolicyConfig(kind, args.gamma, args.explore)
        report = run_battery(
            matrices,
            policy,
            args.horizon,
            seed=args.seed,
            slack=args.slack,
            delta=args.delta,
            eta=args.eta,
            perturbation=perturbation,
            onset=args.onset,
            period=args.period,
            threads=args.threads,
        )
        for result in report.results:
            labels = {"policy": policy.kind.value, "gamma": policy.gamma, "game_id": result.index, "seed": result.seed}
            rows.extend({**labels, **row} for row in result.rows)
        properties = " ".join(f"{name}={'pass' if ok else 'FAIL'}" for name, ok in report.properties.items())
        print(f"{policy.kind.value} eps_hat={report.epsilon_hat:.6f} eps={report.epsilon:.6f} {properties}")
        passed = passed and report.passed
    if args.out is not None:
        write_trace_csv(rows, args.out)
    return EXIT_OK if passed else EXIT_PROPERTY_FAILURE


def cmd_audit(args: argparse.Namespace) -> int:
    game = load_game(args.game)
    value_tree = backward_induction(game)
    fixed_profile = equilibrium_profile(value_tree) if args.scripted else None
    config = args.policy.engine_config(args.gamma, args.seed, fixed_profile=fixed_profile)
    eps = args.gamma + 0.05 if args.eps is None else args.eps
    tree = SearchTree.create(game, config)
    checkpoints = log_spaced_checkpoints(args.iters)
    decade = set(final_decade(checkpoints))
    violations = 0
    audit = None
    for iteration in iterate_checkpoints(tree, checkpoints):
        if iteration not in decade:
            continue
        audit = audit_payoff_bands(game, node_statistics(tree.root), value_tree, eps, args.delta)
        violations += len(audit.violations)
        LOGGER.info(f"Iteration {iteration}: {len(audit.violations)} band violations")
    for depth, (inside, audited) in audit.occupancy().items():
        print(f"depth {depth}: {inside}/{audited} states inside their band")
    print(f"band violations in the final decade: {violations}")
    score = exploitability(game, tree.profile(), value_tree.root_value)
    bound = 2 * game.depth ** 2 * eps + args.delta
    holds = score <= bound
    print(f"exploitability {score:.6f} bound {bound:.6f} {'holds' if holds else 'VIOLATED'}")
    return EXIT_OK if holds and violations == 0 else EXIT_PROPERTY_FAILURE


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_INVALID; exit code 2 belongs to failed property checks."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _shared_arguments() -> argparse.ArgumentParser:
    parser = ArgumentParser(add_help=False)
    parser.add_argument("--seed", type=int, default=0, help="root seed of every random stream")
    parser.add_argument("--out", default=None, help="output path ('-' or absent for stdout)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for independent cells")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_arguments()
    parser = ArgumentParser(prog="smmcts", description="Simultaneous-move Monte Carlo tree search lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", parents=[shared], help="exact values of a game file")
    solve.add_argument("game", help="JSON game file")
    solve.add_argument("--profile", action="store_true", help="dump the equilibrium profile as JSON to --out")
    solve.set_defaults(handler=cmd_solve)

    sweep = commands.add_parser("sweep", parents=[shared], help="exploitability curves on random games")
    sweep.add_argument("--depth", type=int, action="append")
    sweep.add_argument("--bf", type=int, action="append")
    sweep.add_argument("--gamma", type=float, action="append")
    sweep.add_argument("--policy", type=Variant, action="append", choices=list(Variant))
    sweep.add_argument("--games", type=int, default=1)
    sweep.add_argument("--runs", type=int, default=1)
    sweep.add_argument("--iters", type=int, default=1000)
    sweep.add_argument("--checkpoints", type=_parse_checkpoints, default=(), help="'log' or a list like 10,100")
    sweep.set_defaults(handler=cmd_sweep)

    worstcase = commands.add_parser("worstcase", parents=[shared], help="search small games for the worst case")
    worstcase.add_argument("--utilities", type=_parse_utilities, default=(0.0, 0.5, 1.0))
    scope = worstcase.add_mutually_exclusive_group()
    scope.add_argument("--budget", type=int, help="number of games sampled without replacement")
    scope.add_argument("--full", action="store_true", help="enumerate every game")
    worstcase.add_argument("--depth", type=int, default=2)
    worstcase.add_argument("--bf", type=int, default=2)
    worstcase.add_argument("--gamma", type=float, default=0.05)
    worstcase.add_argument("--policy", type=Variant, action="append", choices=list(Variant))
    worstcase.add_argument("--eval-iters", type=int, default=1000)
    worstcase.add_argument("--eval-runs", type=int, default=100)
    worstcase.set_defaults(handler=cmd_worstcase)

    bandit = commands.add_parser("bandit", parents=[shared], help="repeated matrix game property battery")
    bandit.add_argument("--policy", type=PolicyKind, action="append", choices=list(PolicyKind))
    bandit.add_argument("--gamma", type=float, default=0.05)
    bandit.add_argument(
        "--explore", type=Exploration, choices=list(Exploration), default=Exploration.NONE, help="exploration wrapper"
    )
    bandit.add_argument("--horizon", type=int, default=100000)
    bandit.add_argument("--games", type=int, default=20)
    bandit.add_argument("--matrix", choices=["random", "matching-pennies"], default="random")
    bandit.add_argument("--eta", type=float, default=0.0, help="payoff error bound after the onset")
    bandit.add_argument("--perturbation", type=Perturbation, choices=list(Perturbation))
    bandit.add_argument("--onset", type=int, default=1)
    bandit.add_argument("--period", type=int, default=1000, help="half period of the square wave")
    bandit.add_argument("--slack", type=float, default=0.05)
    bandit.add_argument("--delta", type=float, default=0.05)
    bandit.set_defaults(handler=cmd_bandit)

    audit = commands.add_parser("audit", parents=[shared], help="payoff band audit of one search run")
    audit.add_argument("game", help="JSON game file")
    audit.add_argument("--policy", type=Variant, choices=list(Variant), default=Variant.RM)
    audit.add_argument("--gamma", type=float, default=0.05)
    audit.add_argument("--iters", type=int, default=100000)
    audit.add_argument("--eps", type=float, default=None, help="regret bound (default: gamma + 0.05)")
    audit.add_argument("--delta", type=float, default=0.05)
    audit.add_argument("--scripted", action="store_true", help="play the exact equilibrium at every state")
    audit.set_defaults(handler=cmd_audit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # --help and --version exit with 0, usage errors with EXIT_INVALID
        return EXIT_OK if e.code is None else int(e.code)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (SmmctsError, OSError) as e:
        print(f"smmcts: error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Self-play game generation and training-set construction.

A game record keeps, for every searched move, the root position, the visit
distribution, and the root value from the mover's perspective (the game's
value trace).  Dataset construction labels every searched position with the
final result z from that position's mover perspective, then doubles the set
with q-labeled entries: heavily-visited interior tree nodes, taken globally
in descending visit order until they match the z-labeled count, so the
visit threshold is realized as a rank cutoff.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import board
from .board import Outcome, Position
from .net import NetEvaluator, NetParams, load_checkpoint, save_checkpoint
from .search import HarvestEntry, MctsAgent, SearchConfig, harvest_visited, select_move


class InsufficientSampleError(ValueError):
    """Too few fully played-out games to calibrate resignation."""


@dataclass(frozen=True)
class ResignConfig:
    """`v_resign` of -1 disables resignation (a root value is never < -1)."""

    v_resign: float = -1.0
    playout_fraction: float = 0.1

    def __post_init__(self):
        if not -1.0 <= self.v_resign < 0.0:
            raise ValueError("v_resign must lie in [-1, 0)")
        if self.playout_fraction < 0.1:
            raise ValueError("playout_fraction must be >= 0.1")


@dataclass
class PlayedMove:
    position: Position
    move: int
    pi: np.ndarray
    q: float


@dataclass
class GameRecord:
    generation: int
    opening: list[int]
    moves: list[PlayedMove] = field(default_factory=list)
    harvested: list[list[HarvestEntry]] = field(default_factory=list)
    resigned: bool = False
    resigner: int | None = None
    outcome: Outcome | None = None
    always_playout: bool = False

    def transcript(self) -> list[int]:
        return list(self.opening) + [m.move for m in self.moves]

    def transcript_text(self) -> str:
        return board.format_transcript(self.transcript())

    def value_trace(self) -> list[float]:
        return [m.q for m in self.moves]

    def winner(self) -> int | None:
        if self.resigned:
            assert self.resigner is not None
            return board.WHITE if self.resigner == board.BLACK else board.BLACK
        if self.outcome is not None:
            return self.outcome.winner()
        return None

    def played_out(self) -> bool:
        return not self.resigned and self.outcome is not None


def play_game(
    agent: MctsAgent,
    resign: ResignConfig,
    rng: np.random.Generator,
    opening: list[int] | None = None,
    generation: int = 0,
    harvest_min_visits: int = 4,
) -> GameRecord:
    """One self-play game with root noise on; both sides share the agent.

    The opening moves, if given, are forced without search.  Resignation
    triggers when the mover's root value falls below the threshold, except in
    the always-playout sample drawn at `playout_fraction`.
    """
    agent.reset()
    record = GameRecord(
        generation=generation,
        opening=list(opening or []),
        always_playout=bool(rng.random() < resign.playout_fraction),
    )
    p = board.initial_position()
    for move in record.opening:
        p = board.apply_move(p, move)
    move_number = len(record.opening)
    while not board.is_terminal(p):
        move_number += 1
        result = agent.search_position(p, noise=True)
        if (
            not record.always_playout
            and result.q_root < resign.v_resign
        ):
            record.resigned = True
            record.resigner = p.to_move
            return record
        move = select_move(result, move_number, agent.cfg, rng)
        record.moves.append(PlayedMove(position=p, move=move, pi=result.pi, q=result.q_root))
        record.harvested.append(harvest_visited(result, harvest_min_visits))
        agent.commit_move(move)
        p = board.apply_move(p, move)
    record.outcome = board.outcome(p)
    return record


def calibrate_resign(records: list[GameRecord], rate: float = 0.05, min_games: int = 50) -> float:
    """Largest threshold under which fewer than `rate` of played-out games
    would have seen their eventual winner resign (trigger is strictly-below,
    so a winner whose worst value equals the threshold survives)."""
    played_out = [r for r in records if r.played_out()]
    if len(played_out) < min_games:
        raise InsufficientSampleError(
            f"need at least {min_games} played-out games, have {len(played_out)}"
        )
    minima = []
    for r in played_out:
        winner = r.winner()
        values = [m.q for m in r.moves if m.position.to_move == winner] if winner is not None else []
        minima.append(min(values) if values else np.inf)
    minima = np.asarray(minima)
    candidates = sorted({float(v) for v in minima if -1.0 <= v < 0.0} | {-1.0}, reverse=True)
    for t in candidates:
        if float(np.mean(minima < t)) < rate:
            return t
    return -1.0


@dataclass
class DatasetEntry:
    """One training pair; the 8x8x2 input planes derive from the position."""

    position: Position
    pi: np.ndarray
    omega: float
    label_kind: str  # "z" or "q"
    generation: int
    source: str  # "played" or "harvested"

    def planes(self) -> np.ndarray:
        return board.encode_planes(self.position)


def _validate_entry(entry: DatasetEntry) -> None:
    legal = board.legal_moves(entry.position)
    support = np.nonzero(entry.pi > 0)[0]
    for move in support:
        if int(move) not in legal:
            raise ValueError(
                f"pi target supports illegal move {board.format_move(int(move))}"
            )
    if entry.label_kind == "z" and entry.omega not in (-1.0, 0.0, 1.0):
        raise ValueError(f"z label must be -1/0/+1, got {entry.omega}")
    if not -1.0 <= entry.omega <= 1.0:
        raise ValueError(f"omega out of range: {entry.omega}")


def build_dataset(
    records: list[GameRecord], validate: bool = True
) -> list[DatasetEntry]:
    """z-label every searched position, then add q-labeled harvested nodes,
    most-visited first, until the counts match (rank-cutoff threshold).

    Harvested nodes equal to a position actually played in the same game are
    skipped so one game never carries two conflicting labels for one state.
    Ties at the cutoff resolve to the earliest game, then earliest move.
    """
    if not records:
        raise ValueError("no game records")
    entries: list[DatasetEntry] = []
    candidates = []
    for game_index, record in enumerate(records):
        winner = record.winner()
        played_keys = {m.position.key() for m in record.moves}
        for move_index, played in enumerate(record.moves):
            if winner is None:
                omega = 0.0
            else:
                omega = 1.0 if played.position.to_move == winner else -1.0
            entries.append(
                DatasetEntry(
                    position=played.position,
                    pi=played.pi,
                    omega=omega,
                    label_kind="z",
                    generation=record.generation,
                    source="played",
                )
            )
        for move_index, harvest in enumerate(record.harvested):
            for order, node in enumerate(harvest):
                if node.position.key() in played_keys:
                    continue
                candidates.append((-node.n, game_index, move_index, order, node, record.generation))
    z_count = len(entries)
    candidates.sort(key=lambda c: c[:4])
    if len(candidates) < z_count:
        warnings.warn(
            f"harvest supply {len(candidates)} below played-position count {z_count}; "
            "dataset will be smaller than twice the played set",
            stacklevel=2,
        )
    for _, _, _, _, node, generation in candidates[:z_count]:
        entries.append(
            DatasetEntry(
                position=node.position,
                pi=node.pi,
                omega=float(node.q),
                label_kind="q",
                generation=generation,
                source="harvested",
            )
        )
    if validate:
        for entry in entries:
            _validate_entry(entry)
    return entries


# ---------------------------------------------------------------------------
# Parallel game generation
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _worker_init(checkpoint_blob: bytes) -> None:
    params, _ = load_checkpoint(checkpoint_blob)
    _WORKER_STATE["oracle"] = NetEvaluator(params)


def _worker_play(args) -> GameRecord:
    (seed, opening, generation, scfg_kwargs, resign_kwargs, harvest_min_visits) = args
    oracle = _WORKER_STATE["oracle"]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    agent = MctsAgent(oracle, SearchConfig(**scfg_kwargs), rng)
    return play_game(
        agent,
        ResignConfig(**resign_kwargs),
        rng,
        opening=opening,
        generation=generation,
        harvest_min_visits=harvest_min_visits,
    )


def game_seed(root_seed: int, generation: int, phase: str, index: int) -> int:
    """Deterministic per-game seed, independent of worker scheduling."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(generation, hash(phase) & 0xFFFF, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_games(
    params: NetParams,
    count: int,
    scfg: SearchConfig,
    resign: ResignConfig,
    root_seed: int,
    generation: int,
    openings: list[list[int]] | None = None,
    workers: int = 1,
    harvest_min_visits: int = 4,
    phase: str = "selfplay",
) -> list[GameRecord]:
    """Play `count` games; embarrassingly parallel across processes.

    Game i draws its seed from (root_seed, generation, phase, i), so results
    do not depend on worker count or scheduling order.
    """
    specs = []
    scfg_kwargs = {k: getattr(scfg, k) for k in scfg.__dataclass_fields__}
    resign_kwargs = {k: getattr(resign, k) for k in resign.__dataclass_fields__}
    for i in range(count):
        opening = openings[i % len(openings)] if openings else None
        specs.append(
            (game_seed(root_seed, generation, phase, i), opening, generation,
             scfg_kwargs, resign_kwargs, harvest_min_visits)
        )
    if workers <= 1:
        _worker_init(save_checkpoint(params))
        return [_worker_play(spec) for spec in specs]
    blob = save_checkpoint(params)
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init, initargs=(blob,)) as pool:
        return list(pool.map(_worker_play, specs, chunksize=max(1, count // (workers * 4))))

"""Engine-vs-engine match play with opening schedules and series bookkeeping.

Engines are addressed by handles: internal handles pin a checkpoint (by
content hash) plus a search configuration; external handles name a process
command speaking the line protocol over stdio.  One driver runs the games,
validating every reply against the rules, recording per-move searched-node
counts, and forfeiting a game to the opponent on an illegal move, protocol
violation, or timeout.
"""

from __future__ import annotations

import hashlib
import subprocess
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from queue import Empty, Queue

import numpy as np

from . import board
from .board import Outcome
from .net import NetEvaluator, load_checkpoint
from .protocol import ProtocolSession
from .search import MctsAgent, SearchConfig
from .selfplay import game_seed


class EngineError(RuntimeError):
    """Timeout or protocol violation; the offending engine forfeits."""


@dataclass(frozen=True)
class InternalEngine:
    """A checkpoint-backed engine; identity pins the checkpoint content."""

    checkpoint_path: str
    search: SearchConfig = SearchConfig(simulations=400)
    seed: int = 0
    name: str | None = None

    @property
    def identity(self) -> str:
        digest = hashlib.sha256(Path(self.checkpoint_path).read_bytes()).hexdigest()[:12]
        label = self.name or Path(self.checkpoint_path).stem
        return f"internal:{label}:{digest}"


@dataclass(frozen=True)
class ExternalEngine:
    """A process endpoint speaking the line protocol on stdio."""

    argv: tuple[str, ...]
    name: str
    timeout: float = 60.0

    @property
    def identity(self) -> str:
        return f"external:{self.name}"


EngineHandle = InternalEngine | ExternalEngine


class _InternalSession:
    def __init__(self, handle: InternalEngine):
        params, _ = load_checkpoint(Path(handle.checkpoint_path).read_bytes())
        self.session = ProtocolSession(NetEvaluator(params), handle.search, seed=handle.seed)

    def ask(self, command: str) -> str:
        return self.session.handle(command)

    def close(self) -> None:
        pass


class _ExternalSession:
    def __init__(self, handle: ExternalEngine):
        self.timeout = handle.timeout
        self.proc = subprocess.Popen(
            list(handle.argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self.lines: Queue = Queue()
        self.reader = threading.Thread(target=self._pump, daemon=True)
        self.reader.start()

    def _pump(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self.lines.put(line.rstrip("\n"))

    def ask(self, command: str) -> str:
        if self.proc.poll() is not None:
            raise EngineError("engine process exited")
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(command + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EngineError(f"engine pipe broken: {exc}") from None
        try:
            return self.lines.get(timeout=self.timeout)
        except Empty:
            raise EngineError(f"engine timed out after {self.timeout}s") from None

    def close(self) -> None:
        try:
            if self.proc.poll() is None:
                self.ask("quit")
        except EngineError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


def _open_session(handle: EngineHandle):
    if isinstance(handle, InternalEngine):
        return _InternalSession(handle)
    return _ExternalSession(handle)


@dataclass
class GameResult:
    opening: list[int]
    black_identity: str
    white_identity: str
    transcript: list[int] = field(default_factory=list)
    outcome: Outcome | None = None
    forfeited_by: int | None = None
    forfeit_reason: str | None = None
    move_nodes: list[tuple[int, int | None]] = field(default_factory=list)

    def winner_color(self) -> int | None:
        if self.forfeited_by is not None:
            return 1 - self.forfeited_by
        if self.outcome is not None:
            return self.outcome.winner()
        return None

    def score_for_black(self) -> float:
        winner = self.winner_color()
        if winner is None:
            return 0.5
        return 1.0 if winner == board.BLACK else 0.0


def _expect_ok(session, command: str) -> None:
    reply = session.ask(command)
    if reply != "ok":
        raise EngineError(f"{command!r} answered {reply!r}")


def play_engine_game(
    black,
    white,
    opening: list[int],
    budget: int,
    black_identity: str = "black",
    white_identity: str = "white",
) -> GameResult:
    """Drive one game between two protocol sessions, both starting from the
    given opening; every reply is validated against the rules."""
    result = GameResult(list(opening), black_identity, white_identity)
    sessions = {board.BLACK: black, board.WHITE: white}
    for color, session in sessions.items():
        try:
            _expect_ok(session, "newgame")
        except EngineError as exc:
            result.forfeited_by = color
            result.forfeit_reason = str(exc)
            return result
    position, _ = board.replay(opening)
    moves = list(opening)
    while not board.is_terminal(position):
        color = position.to_move
        session = sessions[color]
        try:
            _expect_ok(session, "position " + (board.format_transcript(moves) or ""))
            reply = session.ask(f"go sims {budget}")
            if not reply.startswith("bestmove "):
                raise EngineError(f"'go' answered {reply!r}")
            move = board.parse_move(reply.split(" ", 1)[1])
            nodes_reply = session.ask("nodes")
            nodes = int(nodes_reply.split()[1]) if nodes_reply.startswith("nodes ") else None
            position = board.apply_move(position, move)
        except (EngineError, board.TranscriptError, board.IllegalMoveError) as exc:
            result.transcript = moves
            result.forfeited_by = color
            result.forfeit_reason = str(exc)
            return result
        moves.append(move)
        result.move_nodes.append((color, nodes))
    result.transcript = moves
    result.outcome = board.outcome(position)
    return result


@dataclass
class SeriesResult:
    identity_a: str
    identity_b: str
    games: list[GameResult]
    budget: int

    def points_for_a(self) -> float:
        total = 0.0
        for index, game in enumerate(self.games):
            a_is_black = index % 2 == 0
            score_black = game.score_for_black()
            total += score_black if a_is_black else 1.0 - score_black
        return total

    def tally_for_a(self) -> tuple[int, int, int]:
        wins = draws = losses = 0
        for index, game in enumerate(self.games):
            a_is_black = index % 2 == 0
            winner = game.winner_color()
            if winner is None:
                draws += 1
            elif (winner == board.BLACK) == a_is_black:
                wins += 1
            else:
                losses += 1
        return wins, draws, losses


def _schedule_openings(
    openings: list[list[int]],
    games: int,
    rng: np.random.Generator,
    paired: bool,
) -> list[list[int]]:
    if paired:
        if 2 * len(openings) < games:
            raise ValueError(f"need {games // 2} openings for {games} paired games")
        return [openings[i // 2] for i in range(games)]
    # Random draws, distinct while supply lasts so deterministic engines do
    # not repeat one game over and over.
    order = list(rng.permutation(len(openings)))
    schedule = []
    for i in range(games):
        if not order:
            order = list(rng.permutation(len(openings)))
        schedule.append(openings[int(order.pop(0))])
    return schedule


def _play_single(args):
    (black_handle, white_handle, opening, budget, black_id, white_id) = args
    black = _open_session(black_handle)
    white = _open_session(white_handle)
    try:
        return play_engine_game(black, white, opening, budget, black_id, white_id)
    finally:
        black.close()
        white.close()


def play_series(
    a: EngineHandle,
    b: EngineHandle,
    openings: list[list[int]],
    games_per_series: int = 20,
    budget: int = 400,
    rng: np.random.Generator | None = None,
    paired_openings: bool = False,
    workers: int = 1,
) -> SeriesResult:
    """A series between two engines: colors alternate strictly (engine `a`
    is black in even-numbered games), openings are drawn randomly without
    repeats (or paired two games per opening when `paired_openings`), and
    per-move searched-node counts are recorded when engines report them.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not openings:
        raise ValueError("need at least one opening")
    for opening in openings:
        board.replay(opening)  # raises on an illegal opening
    schedule = _schedule_openings(openings, games_per_series, rng, paired_openings)
    id_a, id_b = a.identity, b.identity
    specs = []
    for index in range(games_per_series):
        a_black = index % 2 == 0
        specs.append((
            a if a_black else b,
            b if a_black else a,
            schedule[index],
            budget,
            id_a if a_black else id_b,
            id_b if a_black else id_a,
        ))
    parallel_ok = (
        workers > 1
        and isinstance(a, InternalEngine)
        and isinstance(b, InternalEngine)
    )
    if parallel_ok:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            games = list(pool.map(_play_single, specs))
    else:
        games = [_play_single(spec) for spec in specs]
    return SeriesResult(identity_a=id_a, identity_b=id_b, games=games, budget=budget)

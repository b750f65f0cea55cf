"""Session-based HTTP/JSON service for live human-vs-engine games.

Every state transition is validated by the rules module; the server never
plays or accepts an illegal move.  Engine replies are computed synchronously
inside the move request (desk budgets keep this to a few seconds), and the
per-search root values accumulate into the session's confidence trace, from
the engine's perspective: -1 a sure defeat, +1 a sure victory.

Endpoints (JSON bodies; errors come back as `{"detail": ...}`):

    POST /api/sessions                {human_color, sims?, checkpoint?}
    GET  /api/sessions/{id}
    POST /api/sessions/{id}/move      {move: "C4" | "PA"}
    POST /api/sessions/{id}/analyze   -> {pi: {move: prob}, q: float}
    POST /api/sessions/{id}/resign
    POST /api/replay                  {transcript} -> final board + score
    GET  /api/checkpoints             -> {checkpoints: [...], default: ...}

A forced human pass appears as the only legal move and is never auto-played;
the client must submit it.  Sessions serialize their own requests and share
checkpoints read-only, so concurrent sessions never interact.

Budgets well beyond ~1000 simulations per move would hold the move request
open too long; the intended extension for that regime is a polling variant
(the move request returns immediately with a "thinking" status and the
client polls GET /api/sessions/{id} until the engine's reply lands).  At
desk budgets the synchronous form below is simpler and sufficient.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import board
from .net import NetEvaluator, NetParams, load_checkpoint_file
from .search import MctsAgent, SearchConfig, search

DEFAULT_SIMS = 1000
MAX_SIMS = 20_000


class CreateSessionRequest(BaseModel):
    human_color: str = "black"
    sims: int = DEFAULT_SIMS
    checkpoint: str | None = None


class MoveRequest(BaseModel):
    move: str


class ReplayRequest(BaseModel):
    transcript: str
    auto_pass: bool = False


@dataclass
class Session:
    id: str
    human_color: int
    sims: int
    checkpoint: str
    oracle: NetEvaluator
    position: board.Position = field(default_factory=board.initial_position)
    history: list[int] = field(default_factory=list)
    value_trace: list[float] = field(default_factory=list)
    resigned_by_human: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def engine_color(self) -> int:
        return board.WHITE if self.human_color == board.BLACK else board.BLACK

    @property
    def finished(self) -> bool:
        return self.resigned_by_human or board.is_terminal(self.position)

    def search_config(self) -> SearchConfig:
        return SearchConfig(simulations=self.sims, temperature_moves=0, eval_batch=8)


def _board_text(p: board.Position) -> str:
    cells = []
    for sq in range(64):
        bit = 1 << sq
        cells.append("b" if p.black & bit else "w" if p.white & bit else ".")
    return "".join(cells)


def _color_name(color: int) -> str:
    return "black" if color == board.BLACK else "white"


def session_view(s: Session) -> dict:
    finished = s.finished
    outcome = None
    winner = None
    if s.resigned_by_human:
        winner = _color_name(s.engine_color)
    elif board.is_terminal(s.position):
        out = board.outcome(s.position)
        adjusted_black, adjusted_white = out.adjusted_counts()
        outcome = {
            "black": out.black_count,
            "white": out.white_count,
            "score_text": out.score_text(),
            "adjusted_black": adjusted_black,
            "adjusted_white": adjusted_white,
        }
        winner = None if out.winner() is None else _color_name(out.winner())
    legal = sorted(board.legal_moves(s.position)) if not finished else []
    return {
        "id": s.id,
        "board": _board_text(s.position),
        "to_move": _color_name(s.position.to_move) if not finished else None,
        "human_color": _color_name(s.human_color),
        "engine_color": _color_name(s.engine_color),
        "legal_moves": [board.format_move(m) for m in legal],
        "history": board.format_transcript(s.history),
        "value_trace": s.value_trace,
        "status": "finished" if finished else "ongoing",
        "winner": winner,
        "outcome": outcome,
        "resigned": s.resigned_by_human,
        "sims": s.sims,
        "checkpoint": s.checkpoint,
    }


def _engine_reply(s: Session) -> None:
    while not s.finished and s.position.to_move == s.engine_color:
        agent = MctsAgent(s.oracle, s.search_config(), np.random.default_rng(len(s.history)))
        result = agent.search_position(s.position, noise=False)
        s.value_trace.append(float(result.q_root))
        move = int(np.argmax(result.pi))
        s.position = board.apply_move(s.position, move)
        s.history.append(move)


def create_app(
    checkpoints: dict[str, str] | None = None,
    default_params: NetParams | None = None,
    static_dir: str | Path | None = None,
    default_sims: int = DEFAULT_SIMS,
) -> FastAPI:
    """Build the service.

    `checkpoints` maps display names to checkpoint paths; `default_params`
    (used when no checkpoint is named) lets tests inject in-memory weights.
    """
    app = FastAPI(title="flipzero")
    sessions: dict[str, Session] = {}
    registry = dict(checkpoints or {})
    oracle_cache: dict[str, NetEvaluator] = {}
    registry_lock = threading.Lock()

    if default_params is not None:
        oracle_cache["__default__"] = NetEvaluator(default_params)
        default_name = "__default__"
    elif registry:
        default_name = sorted(registry)[0]
    else:
        raise ValueError("need default_params or at least one checkpoint")

    def oracle_for(name: str | None) -> tuple[str, NetEvaluator]:
        key = name or default_name
        with registry_lock:
            if key in oracle_cache:
                return key, oracle_cache[key]
            if key not in registry:
                raise HTTPException(status_code=404, detail=f"unknown checkpoint {key!r}")
            params, _ = load_checkpoint_file(registry[key])
            oracle_cache[key] = NetEvaluator(params)
            return key, oracle_cache[key]

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return s

    @app.get("/api/checkpoints")
    def list_checkpoints():
        names = sorted(registry)
        return {"checkpoints": names, "default": None if default_name == "__default__" else default_name}

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest):
        if req.human_color not in ("black", "white"):
            raise HTTPException(status_code=400, detail="human_color must be black or white")
        if not 1 <= req.sims <= MAX_SIMS:
            raise HTTPException(status_code=400, detail=f"sims must be in 1..{MAX_SIMS}")
        name, oracle = oracle_for(req.checkpoint)
        s = Session(
            id=uuid.uuid4().hex[:12],
            human_color=board.BLACK if req.human_color == "black" else board.WHITE,
            sims=req.sims,
            checkpoint=name,
            oracle=oracle,
        )
        with s.lock:
            _engine_reply(s)  # engine opens when the human takes white
            sessions[s.id] = s
            return session_view(s)

    @app.get("/api/sessions/{session_id}")
    def get_state(session_id: str):
        s = get_session(session_id)
        with s.lock:
            return session_view(s)

    @app.post("/api/sessions/{session_id}/move")
    def submit_move(session_id: str, req: MoveRequest):
        s = get_session(session_id)
        with s.lock:
            if s.finished:
                raise HTTPException(status_code=409, detail="session is finished")
            if s.position.to_move != s.human_color:
                raise HTTPException(status_code=409, detail="not your turn")
            try:
                move = board.parse_move(req.move)
            except board.TranscriptError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            try:
                next_position = board.apply_move(s.position, move)
            except board.IllegalMoveError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            s.position = next_position
            s.history.append(move)
            _engine_reply(s)
            return session_view(s)

    @app.post("/api/sessions/{session_id}/analyze")
    def analyze(session_id: str):
        s = get_session(session_id)
        with s.lock:
            if s.finished:
                raise HTTPException(status_code=409, detail="session is finished")
            result = search(
                s.position,
                s.oracle,
                s.search_config(),
                noise=False,
                rng=np.random.default_rng(0),
            )
            pi = {
                board.format_move(m): float(result.pi[m])
                for m in range(65)
                if result.pi[m] > 0
            }
            return {"pi": pi, "q": float(result.q_root), "sims": s.sims}

    @app.post("/api/sessions/{session_id}/resign")
    def resign(session_id: str):
        s = get_session(session_id)
        with s.lock:
            if s.finished:
                raise HTTPException(status_code=409, detail="session is finished")
            s.resigned_by_human = True
            return session_view(s)

    @app.post("/api/replay")
    def replay_transcript(req: ReplayRequest):
        try:
            moves = board.parse_transcript(req.transcript)
            position, outcome = board.replay(moves, auto_pass=req.auto_pass)
        except (board.TranscriptError, board.IllegalMoveError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        view = {
            "board": _board_text(position),
            "to_move": _color_name(position.to_move),
            "terminal": outcome is not None,
            "outcome": None,
        }
        if outcome is not None:
            view["outcome"] = {
                "black": outcome.black_count,
                "white": outcome.white_count,
                "score_text": outcome.score_text(),
            }
        return view

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app

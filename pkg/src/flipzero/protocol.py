"""Line-based engine protocol for engine-vs-engine play.

Grammar (UTF-8, one command per line, one reply line per command):

    newgame                  -> ok
    position                 -> ok                (initial position)
    position <TRANSCRIPT>    -> ok | error <msg>  (absolute, from the start)
    go [sims <N>]            -> bestmove <SQ|PA> | error <msg>
    value                    -> value <(-)D.DDDDDD> | error <msg>
    nodes                    -> nodes <N> | error <msg>
    quit                     -> ok                (session ends)
    <anything else>          -> error unknown command <word>

Transcripts use the two-character move tokens (`C4`, `PA`).  `go` searches
the current position and reports the move; it does not advance the position,
so a match driver re-sends the full transcript each turn.  `value` and
`nodes` report the root value and the tree nodes created by the most recent
`go`.  Malformed input is answered in-band and never corrupts session state.
"""

from __future__ import annotations

import numpy as np

from . import board
from .search import MctsAgent, SearchConfig, SearchResult


class ProtocolSession:
    """One engine session: parses commands, owns position and search state."""

    def __init__(self, oracle, search_config: SearchConfig, seed: int = 0):
        self.oracle = oracle
        self.base_config = search_config
        self.seed = seed
        self.position: board.Position | None = None
        self.last_result: SearchResult | None = None
        self.closed = False

    def handle(self, line: str) -> str:
        words = line.strip().split()
        if not words:
            return "error empty command"
        command, args = words[0], words[1:]
        handler = getattr(self, f"_cmd_{command}", None)
        if handler is None:
            return f"error unknown command {command}"
        return handler(args)

    def _cmd_newgame(self, args) -> str:
        self.position = None
        self.last_result = None
        return "ok"

    def _cmd_position(self, args) -> str:
        if len(args) > 1:
            return "error position takes one transcript"
        try:
            moves = board.parse_transcript(args[0]) if args else []
            position, _ = board.replay(moves)
        except (board.TranscriptError, board.IllegalMoveError) as exc:
            return f"error {exc}"
        self.position = position
        self.last_result = None
        return "ok"

    def _cmd_go(self, args) -> str:
        sims = self.base_config.simulations
        if args:
            if len(args) != 2 or args[0] != "sims":
                return "error usage: go [sims <N>]"
            try:
                sims = int(args[1])
            except ValueError:
                return f"error sims must be an integer, got {args[1]}"
            if sims < 1:
                return "error sims must be >= 1"
        if self.position is None:
            return "error no position"
        if board.is_terminal(self.position):
            return "error terminal position"
        cfg = SearchConfig(
            simulations=sims,
            c_puct=self.base_config.c_puct,
            dirichlet_epsilon=self.base_config.dirichlet_epsilon,
            temperature_moves=0,
            virtual_loss=self.base_config.virtual_loss,
            workers=self.base_config.workers,
            eval_batch=self.base_config.eval_batch,
            reuse_tree=False,
        )
        agent = MctsAgent(self.oracle, cfg, np.random.default_rng(self.seed))
        result = agent.search_position(self.position, noise=False)
        self.last_result = result
        move = int(np.argmax(result.pi))
        return f"bestmove {board.format_move(move)}"

    def _cmd_value(self, args) -> str:
        if self.last_result is None:
            return "error no search yet"
        return f"value {self.last_result.q_root:.6f}"

    def _cmd_nodes(self, args) -> str:
        if self.last_result is None:
            return "error no search yet"
        return f"nodes {self.last_result.nodes_created}"

    def _cmd_quit(self, args) -> str:
        self.closed = True
        return "ok"


def serve(oracle, search_config: SearchConfig, stdin, stdout, seed: int = 0) -> None:
    """Serve the protocol over text streams until `quit` or EOF."""
    session = ProtocolSession(oracle, search_config, seed=seed)
    for line in stdin:
        reply = session.handle(line)
        stdout.write(reply + "\n")
        stdout.flush()
        if session.closed:
            return

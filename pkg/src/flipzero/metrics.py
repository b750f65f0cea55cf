"""In-game value diagnostics: the loser's worst single-step value drop and
where on the board those collapses happen.

The loser's value trace is the subsequence of root values recorded on its
own turns.  The largest drop between two consecutive such readings marks the
game's crucial moment; the move charged with it is the last non-pass move
played before the reading that revealed the collapse (normally the winner's
reply the loser failed to foresee).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .board import PASS
from .selfplay import GameRecord


class TraceTooShortError(ValueError):
    """Fewer than two value readings for the losing side."""


@dataclass(frozen=True)
class ValueDrop:
    magnitude: float
    move_index: int  # index into the record's searched moves (the reading)
    square: int | None  # crucial move's square; None if the game had no one to blame


def largest_drop(trace: list[float]) -> tuple[float, int]:
    """(largest single-step decrease, index of the lower reading).

    A constant trace gives magnitude 0; a rising trace gives the least
    increase as a negative magnitude.  First occurrence wins ties.
    """
    if len(trace) < 2:
        raise TraceTooShortError(f"need >= 2 readings, have {len(trace)}")
    best = -np.inf
    best_index = 1
    for i in range(1, len(trace)):
        drop = trace[i - 1] - trace[i]
        if drop > best:
            best = drop
            best_index = i
    return float(best), best_index


def max_value_drop(record: GameRecord) -> ValueDrop:
    """The losing side's largest value drop in one game.

    Raises TraceTooShortError when the loser searched fewer than two moves,
    and ValueError for drawn or unfinished-without-resigner games.
    """
    loser = _loser(record)
    readings = [
        (index, played.q)
        for index, played in enumerate(record.moves)
        if played.position.to_move == loser
    ]
    if len(readings) < 2:
        raise TraceTooShortError(
            f"loser searched {len(readings)} moves; need >= 2"
        )
    magnitude, k = largest_drop([q for _, q in readings])
    reading_index = readings[k][0]
    square = None
    for j in range(reading_index - 1, -1, -1):
        if record.moves[j].move != PASS:
            square = record.moves[j].move
            break
    return ValueDrop(magnitude=magnitude, move_index=reading_index, square=square)


def _loser(record: GameRecord) -> int:
    winner = record.winner()
    if winner is None:
        raise ValueError("drawn or unfinished game has no loser")
    return 1 - winner


def crucial_move_heatmap(records: list[GameRecord]) -> np.ndarray:
    """8x8 counts of crucial-move squares over the games that produced one.

    Games without a drop (draws, resignations the loser never evaluated
    twice, pass-only blame chains) contribute nothing; an empty record list
    is an error.
    """
    if not records:
        raise ValueError("no game records")
    heatmap = np.zeros((8, 8), dtype=np.int64)
    for record in records:
        try:
            drop = max_value_drop(record)
        except (TraceTooShortError, ValueError):
            continue
        if drop.square is None:
            continue
        heatmap[drop.square >> 3, drop.square & 7] += 1
    return heatmap


def drop_statistics(records: list[GameRecord]) -> dict:
    """Mean/std/count of per-game largest drops, for trend reporting."""
    drops = []
    for record in records:
        try:
            drops.append(max_value_drop(record).magnitude)
        except (TraceTooShortError, ValueError):
            continue
    if not drops:
        return {"count": 0, "mean": None, "std": None}
    arr = np.asarray(drops)
    return {"count": len(drops), "mean": float(arr.mean()), "std": float(arr.std())}

"""Bitboard Othello rules, transcripts, opening lists, and network input encoding.

Square indexing is row-major with a1 = 0 and h8 = 63: ``index = row * 8 + col``
where col 0..7 maps to files a..h and row 0..7 maps to ranks 1..8.  A move is
an int in 0..64; index 64 is the distinguished PASS, which is legal exactly
when the side to move has no capturing move but the opponent still has one.
The game is over as soon as neither side has a capturing move.

Positions are immutable values; every operation here is a pure function, so
they can be shared freely across threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

BLACK = 0
WHITE = 1

BOARD_SQUARES = 64
PASS = 64
POLICY_SIZE = 65

_U64 = 0xFFFFFFFFFFFFFFFF
_NOT_FILE_A = 0xFEFEFEFEFEFEFEFE
_NOT_FILE_H = 0x7F7F7F7F7F7F7F7F

# (row delta, col delta) for the 8 capture directions.
_DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


class IllegalMoveError(ValueError):
    """A move that does not capture, replays an occupied square, or a bad PASS."""


class NonTerminalError(ValueError):
    """Raised when a final-outcome query is made on a live position."""


class TranscriptError(ValueError):
    """Malformed or illegal transcript text.

    Attributes:
        offset: character offset of the offending token, or None.
        line: 1-based line number for file-level parsing, or None.
    """

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        super().__init__(message)
        self.offset = offset
        self.line = line


def _shift(mask: int, d_row: int, d_col: int) -> int:
    if d_col == 1:
        mask &= _NOT_FILE_H
    elif d_col == -1:
        mask &= _NOT_FILE_A
    step = d_row * 8 + d_col
    if step >= 0:
        return (mask << step) & _U64
    return mask >> -step


def _capture_mask(own: int, opp: int) -> int:
    """Squares where `own` to move captures at least one `opp` disc."""
    empty = ~(own | opp) & _U64
    moves = 0
    for d_row, d_col in _DIRECTIONS:
        t = _shift(own, d_row, d_col) & opp
        for _ in range(5):
            t |= _shift(t, d_row, d_col) & opp
        moves |= _shift(t, d_row, d_col) & empty
    return moves


def _flips_for(own: int, opp: int, square: int) -> int:
    """Discs flipped when `own` plays `square`; 0 if the move captures nothing."""
    bit = 1 << square
    if (own | opp) & bit:
        return 0
    flips = 0
    for d_row, d_col in _DIRECTIONS:
        run = 0
        cur = _shift(bit, d_row, d_col)
        while cur & opp:
            run |= cur
            cur = _shift(cur, d_row, d_col)
        if run and (cur & own):
            flips |= run
    return flips


@dataclass(frozen=True, slots=True)
class Position:
    """Immutable game state: two disc masks plus the side to move."""

    black: int
    white: int
    to_move: int

    def own_opp(self) -> tuple[int, int]:
        if self.to_move == BLACK:
            return self.black, self.white
        return self.white, self.black

    def disc_count(self) -> int:
        return (self.black | self.white).bit_count()

    def key(self) -> tuple[int, int, int]:
        return (self.black, self.white, self.to_move)


def initial_position() -> Position:
    """Standard start: white on d4/e5, black on d5/e4, black to move."""
    white = (1 << _square("D4")) | (1 << _square("E5"))
    black = (1 << _square("D5")) | (1 << _square("E4"))
    return Position(black=black, white=white, to_move=BLACK)


def legal_mask(p: Position) -> int:
    own, opp = p.own_opp()
    return _capture_mask(own, opp)


def legal_moves(p: Position) -> set[int]:
    """Capturing squares; {PASS} when only the mover is stuck; {} when terminal."""
    own, opp = p.own_opp()
    mask = _capture_mask(own, opp)
    if mask:
        return set(_bits(mask))
    if _capture_mask(opp, own):
        return {PASS}
    return set()


def is_terminal(p: Position) -> bool:
    own, opp = p.own_opp()
    return _capture_mask(own, opp) == 0 and _capture_mask(opp, own) == 0


def apply_move(p: Position, move: int) -> Position:
    """Play `move` (a square or PASS), flipping every bracketed run.

    Raises IllegalMoveError unless ``move in legal_moves(p)``.
    """
    own, opp = p.own_opp()
    other = WHITE if p.to_move == BLACK else BLACK
    if move == PASS:
        if _capture_mask(own, opp):
            raise IllegalMoveError("cannot pass while a capturing move exists")
        if _capture_mask(opp, own) == 0:
            raise IllegalMoveError("cannot pass a finished game")
        if p.to_move == BLACK:
            return Position(p.black, p.white, other)
        return Position(p.black, p.white, other)
    if not 0 <= move < BOARD_SQUARES:
        raise IllegalMoveError(f"move index {move} out of range")
    flips = _flips_for(own, opp, move)
    if flips == 0:
        raise IllegalMoveError(f"move {format_move(move)} captures nothing")
    own = own | flips | (1 << move)
    opp = opp & ~flips
    if p.to_move == BLACK:
        return Position(black=own, white=opp, to_move=other)
    return Position(black=opp, white=own, to_move=other)


@dataclass(frozen=True, slots=True)
class Outcome:
    """Final disc counts; the game result is the sign of the difference."""

    black_count: int
    white_count: int

    def z_for(self, color: int) -> int:
        own = self.black_count if color == BLACK else self.white_count
        opp = self.white_count if color == BLACK else self.black_count
        return (own > opp) - (own < opp)

    def winner(self) -> int | None:
        z = self.z_for(BLACK)
        if z == 0:
            return None
        return BLACK if z > 0 else WHITE

    def adjusted_counts(self) -> tuple[int, int]:
        """Tournament scoring: empty squares go to the winner (split on a draw)."""
        empties = 64 - self.black_count - self.white_count
        z = self.z_for(BLACK)
        if z > 0:
            return self.black_count + empties, self.white_count
        if z < 0:
            return self.black_count, self.white_count + empties
        return self.black_count + empties // 2, self.white_count + empties // 2

    def score_text(self) -> str:
        black, white = self.adjusted_counts()
        return f"{black}-{white}"


def outcome(p: Position) -> Outcome:
    if not is_terminal(p):
        raise NonTerminalError("position is not terminal")
    return Outcome(p.black.bit_count(), p.white.bit_count())


def encode_planes(p: Position) -> np.ndarray:
    """Network input: float32 (2, 8, 8); plane 0 mover's discs, plane 1 opponent's.

    Normalizing to the mover's perspective makes the encoding color-blind:
    a position and its color-mirror with the turn toggled encode identically,
    so no turn plane is needed.
    """
    own, opp = p.own_opp()
    planes = np.zeros((2, 8, 8), dtype=np.float32)
    for sq in _bits(own):
        planes[0, sq >> 3, sq & 7] = 1.0
    for sq in _bits(opp):
        planes[1, sq >> 3, sq & 7] = 1.0
    return planes


def mirror_colors(p: Position) -> Position:
    """Swap disc colors and the turn; encodes identically to `p`."""
    return Position(black=p.white, white=p.black, to_move=WHITE if p.to_move == BLACK else BLACK)


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _square(token: str) -> int:
    col = ord(token[0].upper()) - ord("A")
    row = int(token[1]) - 1
    return row * 8 + col


# ---------------------------------------------------------------------------
# Transcripts
# ---------------------------------------------------------------------------

def format_move(move: int) -> str:
    """Canonical token: uppercase file + rank, or `PA` for a pass."""
    if move == PASS:
        return "PA"
    if not 0 <= move < BOARD_SQUARES:
        raise ValueError(f"move index {move} out of range")
    return f"{chr(ord('A') + (move & 7))}{(move >> 3) + 1}"


def format_transcript(moves: Iterable[int]) -> str:
    return "".join(format_move(m) for m in moves)


def parse_move(token: str) -> int:
    token = token.upper()
    if token == "PA":
        return PASS
    if len(token) != 2 or not ("A" <= token[0] <= "H") or not ("1" <= token[1] <= "8"):
        raise TranscriptError(f"malformed move token {token!r}")
    return _square(token)


def parse_transcript(text: str) -> list[int]:
    """Parse concatenated two-character tokens, case-insensitive.

    Raises TranscriptError with the character offset of the first bad token.
    """
    text = text.strip()
    if len(text) % 2:
        raise TranscriptError(f"odd transcript length {len(text)}", offset=len(text) - 1)
    moves = []
    for offset in range(0, len(text), 2):
        token = text[offset : offset + 2]
        try:
            moves.append(parse_move(token))
        except TranscriptError as exc:
            raise TranscriptError(f"{exc} at offset {offset}", offset=offset) from None
    return moves


def replay(
    moves: Iterable[int], start: Position | None = None, auto_pass: bool = False
) -> tuple[Position, Outcome | None]:
    """Apply `moves` from the start position; the Outcome is None if still live.

    Raises IllegalMoveError naming the first offending token and its index.
    With `auto_pass`, forced passes that a record leaves unnotated are
    inserted silently; published transcripts are inconsistent about them.
    """
    p = initial_position() if start is None else start
    for index, move in enumerate(moves):
        if auto_pass and move != PASS and legal_moves(p) == {PASS}:
            p = apply_move(p, PASS)
        try:
            p = apply_move(p, move)
        except IllegalMoveError as exc:
            raise IllegalMoveError(
                f"illegal move {format_move(move)} at index {index}: {exc}"
            ) from None
    return p, (outcome(p) if is_terminal(p) else None)


def perft(p: Position, depth: int) -> int:
    """Count move sequences of length `depth`; PASS counts as a move."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return 1
    own, opp = p.own_opp()
    mask = _capture_mask(own, opp)
    if mask == 0:
        if _capture_mask(opp, own) == 0:
            return 0
        return perft(apply_move(p, PASS), depth - 1)
    total = 0
    other = WHITE if p.to_move == BLACK else BLACK
    for sq in _bits(mask):
        flips = _flips_for(own, opp, sq)
        new_own = own | flips | (1 << sq)
        new_opp = opp & ~flips
        if p.to_move == BLACK:
            child = Position(new_own, new_opp, other)
        else:
            child = Position(new_opp, new_own, other)
        total += perft(child, depth - 1)
    return total


# ---------------------------------------------------------------------------
# Opening lists (XOT-style files)
# ---------------------------------------------------------------------------

def load_xot(stream: Iterable[str] | bytes | str, plies: int = 8) -> list[list[int]]:
    """Load an opening list: one transcript per line, `#` comments ignored.

    Every entry must parse, contain exactly `plies` moves, and replay legally
    from the initial position.  Errors cite the 1-based line number.
    """
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8").splitlines()
    elif isinstance(stream, str):
        stream = stream.splitlines()
    openings = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            moves = parse_transcript(line)
        except TranscriptError as exc:
            raise TranscriptError(f"line {lineno}: {exc}", line=lineno) from None
        if len(moves) != plies:
            raise TranscriptError(
                f"line {lineno}: expected {plies} moves, got {len(moves)}", line=lineno
            )
        try:
            replay(moves)
        except IllegalMoveError as exc:
            raise TranscriptError(f"line {lineno}: {exc}", line=lineno) from None
        openings.append(moves)
    return openings


def random_openings(
    count: int, plies: int, rng: np.random.Generator, distinct: bool = True
) -> list[list[int]]:
    """Uniformly random legal opening lines, optionally pairwise distinct."""
    openings: list[list[int]] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    while len(openings) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise ValueError(f"cannot draw {count} distinct {plies}-move openings")
        p = initial_position()
        line = []
        ok = True
        for _ in range(plies):
            moves = sorted(legal_moves(p))
            if not moves:
                ok = False
                break
            move = moves[int(rng.integers(len(moves)))]
            line.append(move)
            p = apply_move(p, move)
        if not ok:
            continue
        if distinct:
            key = tuple(line)
            if key in seen:
                continue
            seen.add(key)
        openings.append(line)
    return openings


# ---------------------------------------------------------------------------
# Dihedral board symmetries (utility; training augmentation defaults off)
# ---------------------------------------------------------------------------

def _symmetry_square_map(sym: int) -> list[int]:
    table = []
    for sq in range(BOARD_SQUARES):
        row, col = sq >> 3, sq & 7
        if sym & 4:
            row, col = col, row
        if sym & 1:
            col = 7 - col
        if sym & 2:
            row = 7 - row
        table.append(row * 8 + col)
    return table


SYMMETRIES = tuple(range(8))
_SQUARE_MAPS = tuple(_symmetry_square_map(s) for s in SYMMETRIES)


def transform_square(sq: int, sym: int) -> int:
    if sq == PASS:
        return PASS
    return _SQUARE_MAPS[sym][sq]


def transform_mask(mask: int, sym: int) -> int:
    out = 0
    for sq in _bits(mask):
        out |= 1 << _SQUARE_MAPS[sym][sq]
    return out


def transform_position(p: Position, sym: int) -> Position:
    return Position(transform_mask(p.black, sym), transform_mask(p.white, sym), p.to_move)


def transform_policy(pi: np.ndarray, sym: int) -> np.ndarray:
    """Permute a 65-vector with the board; the PASS slot stays put."""
    out = np.empty_like(pi)
    table = _SQUARE_MAPS[sym]
    for sq in range(BOARD_SQUARES):
        out[table[sq]] = pi[sq]
    out[PASS] = pi[PASS]
    return out


def transform_planes(planes: np.ndarray, sym: int) -> np.ndarray:
    out = planes
    if sym & 4:
        out = np.swapaxes(out, -1, -2)
    if sym & 1:
        out = out[..., ::-1]
    if sym & 2:
        out = out[..., ::-1, :]
    return np.ascontiguousarray(out)

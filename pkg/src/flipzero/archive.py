"""Append-only per-generation archives of dataset entries, plus windowed
minibatch sampling over recent generations.

File layout mirrors the checkpoint container: 4-byte magic, u32 format
version, u32 header length, JSON header describing the fixed record layout,
then fixed-size binary records.  Appending is a plain file append, so one
generation's games can stream in from many workers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .board import POLICY_SIZE, Position
from .selfplay import DatasetEntry

MAGIC = b"FZDS"
FORMAT_VERSION = 1

_RECORD = struct.Struct(f"<QQBBBf{POLICY_SIZE}f")
_LABEL_CODE = {"z": 0, "q": 1}
_LABEL_NAME = {v: k for k, v in _LABEL_CODE.items()}
_SOURCE_CODE = {"played": 0, "harvested": 1}
_SOURCE_NAME = {v: k for k, v in _SOURCE_CODE.items()}


class ArchiveError(ValueError):
    """Corrupt or incompatible archive file."""


def _header_bytes(generation: int, meta: dict) -> bytes:
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "generation": generation,
            "record_struct": _RECORD.format,
            "fields": [
                "black_mask", "white_mask", "to_move", "label_kind", "source",
                "omega", "pi[65]",
            ],
            "meta": meta,
        }
    ).encode("utf-8")
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header


def _pack(entry: DatasetEntry) -> bytes:
    p = entry.position
    return _RECORD.pack(
        p.black,
        p.white,
        p.to_move,
        _LABEL_CODE[entry.label_kind],
        _SOURCE_CODE[entry.source],
        entry.omega,
        *np.asarray(entry.pi, dtype=np.float32),
    )


class ArchiveStore:
    """Directory of `gen-<i>.fzds` files, one per generation."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, generation: int) -> Path:
        return self.root / f"gen-{generation:04d}.fzds"

    def write_generation(
        self, generation: int, entries: list[DatasetEntry], meta: dict | None = None
    ) -> Path:
        path = self.path(generation)
        with open(path, "wb") as fh:
            fh.write(_header_bytes(generation, meta or {}))
            for entry in entries:
                fh.write(_pack(entry))
        return path

    def append(self, generation: int, entries: list[DatasetEntry]) -> None:
        path = self.path(generation)
        if not path.exists():
            self.write_generation(generation, entries)
            return
        with open(path, "ab") as fh:
            for entry in entries:
                fh.write(_pack(entry))

    def read_generation(self, generation: int) -> tuple[dict, list[DatasetEntry]]:
        data = self.path(generation).read_bytes()
        if len(data) < 12 or data[:4] != MAGIC:
            raise ArchiveError(f"not an archive file: {self.path(generation)}")
        version, header_len = struct.unpack("<II", data[4:12])
        if version != FORMAT_VERSION:
            raise ArchiveError(f"unsupported archive version {version}")
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
        if header["generation"] != generation:
            raise ArchiveError(
                f"file {self.path(generation)} holds generation {header['generation']}"
            )
        body = data[12 + header_len :]
        if len(body) % _RECORD.size:
            raise ArchiveError(f"truncated archive record in {self.path(generation)}")
        entries = []
        for offset in range(0, len(body), _RECORD.size):
            fields = _RECORD.unpack_from(body, offset)
            black, white, to_move, label, source, omega = fields[:6]
            pi = np.asarray(fields[6:], dtype=np.float32)
            entries.append(
                DatasetEntry(
                    position=Position(black, white, to_move),
                    pi=pi,
                    omega=float(omega),
                    label_kind=_LABEL_NAME[label],
                    source=_SOURCE_NAME[source],
                    generation=generation,
                )
            )
        return header["meta"], entries

    def available_generations(self) -> list[int]:
        gens = []
        for path in sorted(self.root.glob("gen-*.fzds")):
            try:
                gens.append(int(path.stem.split("-")[1]))
            except (IndexError, ValueError):
                continue
        return gens


@dataclass(frozen=True)
class WindowRule:
    """Training-window ramp: start at `initial` recent generations and widen
    by one every `growth_interval` generations up to `final`."""

    initial: int = 2
    final: int = 5
    growth_interval: int = 2

    def size(self, generation: int) -> int:
        if generation < 1:
            raise ValueError("generation must be >= 1")
        return min(self.final, self.initial + max(0, (generation - 1) // self.growth_interval))


def window_generations(current_gen: int, rule: WindowRule | None = None) -> list[int]:
    rule = rule or WindowRule()
    size = rule.size(current_gen)
    first = max(1, current_gen - size + 1)
    return list(range(first, current_gen + 1))


def load_window_entries(
    store: ArchiveStore, generations: list[int]
) -> list[DatasetEntry]:
    available = set(store.available_generations())
    missing = [g for g in generations if g not in available]
    if missing:
        raise ArchiveError(f"archive missing generations {missing}")
    entries: list[DatasetEntry] = []
    for gen in generations:
        entries.extend(store.read_generation(gen)[1])
    return entries


def sample_training_window(
    store: ArchiveStore,
    current_gen: int,
    sample_size: int,
    minibatch: int,
    rng: np.random.Generator,
    rule: WindowRule | None = None,
):
    """Yield `sample_size // minibatch` batches of (planes, pi, omega),
    sampled uniformly with replacement over the window generations."""
    if not store.available_generations():
        raise ArchiveError("archive holds no generations")
    gens = window_generations(current_gen, rule)
    entries = load_window_entries(store, gens)
    if not entries:
        raise ArchiveError(f"window generations {gens} hold no entries")
    for _ in range(sample_size // minibatch):
        picks = rng.integers(0, len(entries), size=minibatch)
        batch = [entries[int(i)] for i in picks]
        planes = np.stack([b.planes() for b in batch])
        pi = np.stack([np.asarray(b.pi, dtype=np.float32) for b in batch])
        omega = np.asarray([b.omega for b in batch], dtype=np.float32)
        yield planes, pi, omega

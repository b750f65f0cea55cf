"""The generation loop: self-play, dataset build, training, gating, promotion.

One generation is one successful replacement of the champion.  The champion
plays the self-play games; the dataset doubles them with harvested q-labeled
nodes; a challenger trains on a window of recent generations and must take a
super-majority of a fixed evaluation match (paired openings, colors split
evenly, noise off) to be promoted.  A failed gate re-trains on fresh window
samples up to a retry cap, then the run halts with all state persisted.

Every random draw derives from (run seed, generation, phase, index), so a
halted run resumes bit-compatibly: re-running a generation from persisted
state reproduces the original stream.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import manifest as manifest_io
from .archive import ArchiveStore, WindowRule, sample_training_window, window_generations
from .arena import InternalEngine, play_series
from .board import random_openings
from .elo import elo_estimate
from .metrics import crucial_move_heatmap, drop_statistics
from .net import (
    NetConfig,
    NetParams,
    compute_gradients,
    init_params,
    load_checkpoint_file,
    save_checkpoint_file,
    sgd_step,
)
from .search import SearchConfig
from .selfplay import ResignConfig, build_dataset, calibrate_resign, generate_games


class RetryCapExceededError(RuntimeError):
    """Gate kept failing; the run halted with full state persisted."""


@dataclass(frozen=True)
class Schedule:
    """Generation-indexed step schedules; each list maps (from_generation,
    value) with strictly increasing boundaries."""

    sims_steps: tuple[tuple[int, int], ...] = ((1, 64), (2, 128), (3, 256))
    lr_steps: tuple[tuple[int, float], ...] = ((1, 0.003), (4, 0.001), (11, 0.0001))
    window: WindowRule = WindowRule()
    playout_start: float = 0.10
    playout_end: float = 1.00

    def __post_init__(self):
        for steps in (self.sims_steps, self.lr_steps):
            bounds = [g for g, _ in steps]
            if bounds != sorted(set(bounds)) or not bounds or bounds[0] != 1:
                raise ValueError(f"schedule boundaries must start at 1 and increase: {steps}")

    @staticmethod
    def _step(steps, generation):
        value = steps[0][1]
        for bound, v in steps:
            if generation >= bound:
                value = v
        return value

    def sims_for(self, generation: int) -> int:
        return int(self._step(self.sims_steps, generation))

    def lr_for(self, generation: int) -> float:
        return float(self._step(self.lr_steps, generation))

    def playout_fraction_for(self, generation: int, total_generations: int) -> float:
        if total_generations <= 1:
            return self.playout_end
        t = (generation - 1) / (total_generations - 1)
        return min(1.0, self.playout_start + (self.playout_end - self.playout_start) * t)

    @classmethod
    def paper_scale(cls) -> "Schedule":
        return cls(sims_steps=((1, 100), (5, 200), (12, 400)))


@dataclass(frozen=True)
class PipelineConfig:
    net: NetConfig = NetConfig(residual_blocks=2, filters=32)
    schedule: Schedule = Schedule()
    games_per_generation: int = 100
    sample_size: int = 262_144
    minibatch: int = 256
    momentum: float = 0.9
    gate_games: int = 40
    promotion_threshold: float = 0.55
    gate_retry_cap: int = 3
    gate_opening_plies: int = 4
    total_generations: int = 3
    harvest_min_visits: int = 4
    eval_batch: int = 8
    workers: int = 1
    seed: int = 0
    training_epochs_logged: int = 4

    @classmethod
    def desk_scale(cls, **overrides) -> "PipelineConfig":
        return cls(**overrides)

    @classmethod
    def paper_scale(cls, **overrides) -> "PipelineConfig":
        base = dict(
            net=NetConfig(residual_blocks=10, filters=256),
            schedule=Schedule.paper_scale(),
            games_per_generation=2500,
            sample_size=16_384_000,
            minibatch=1024,
            total_generations=20,
        )
        base.update(overrides)
        return cls(**base)

    def flatten(self) -> dict:
        out = {
            "net.residual_blocks": self.net.residual_blocks,
            "net.filters": self.net.filters,
            "net.value_hidden": self.net.value_hidden,
            "net.l2_coefficient": self.net.l2_coefficient,
            "net.bn_momentum": self.net.bn_momentum,
            "schedule.sims": ",".join(f"{g}:{v}" for g, v in self.schedule.sims_steps),
            "schedule.lr": ",".join(f"{g}:{v}" for g, v in self.schedule.lr_steps),
            "schedule.window.initial": self.schedule.window.initial,
            "schedule.window.final": self.schedule.window.final,
            "schedule.window.growth_interval": self.schedule.window.growth_interval,
            "schedule.playout_start": self.schedule.playout_start,
            "schedule.playout_end": self.schedule.playout_end,
            "games_per_generation": self.games_per_generation,
            "sample_size": self.sample_size,
            "minibatch": self.minibatch,
            "momentum": self.momentum,
            "gate_games": self.gate_games,
            "promotion_threshold": self.promotion_threshold,
            "gate_retry_cap": self.gate_retry_cap,
            "gate_opening_plies": self.gate_opening_plies,
            "total_generations": self.total_generations,
            "harvest_min_visits": self.harvest_min_visits,
            "eval_batch": self.eval_batch,
            "workers": self.workers,
            "seed": self.seed,
            "training_epochs_logged": self.training_epochs_logged,
            "rng_derivation": "seed-sequence(seed, generation, phase, index)",
        }
        return out


@dataclass
class GenerationRecord:
    index: int
    games: int
    sims: int
    lr: float
    window: list[int]
    gate_wins: int
    gate_draws: int
    gate_losses: int
    gate_points: float
    promoted: bool
    attempts: int
    mean_loss: float
    elo: dict
    drop_stats: dict
    heatmap: list
    resign_threshold: float
    new_resign_threshold: float
    playout_fraction: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__)

    @classmethod
    def from_json(cls, text: str) -> "GenerationRecord":
        return cls(**json.loads(text))


def _phase_seed(root: int, generation: int, phase: str, index: int = 0) -> int:
    ss = np.random.SeedSequence(
        entropy=root, spawn_key=(generation, hash(phase) & 0xFFFF, index)
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Pipeline:
    """Owns a run directory: manifest, checkpoints, archives, records, logs."""

    def __init__(self, config: PipelineConfig, run_dir: str | Path):
        self.config = config
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "checkpoints").mkdir(exist_ok=True)
        self.store = ArchiveStore(self.run_dir / "archive")
        self.records: list[GenerationRecord] = []
        self._load_records()
        manifest_path = self.run_dir / "manifest.txt"
        if not manifest_path.exists():
            manifest_io.write_manifest(manifest_path, config.flatten())
        if not self.checkpoint_path(0).exists():
            params = init_params(config.net, seed=_phase_seed(config.seed, 0, "init"))
            save_checkpoint_file(self.checkpoint_path(0), params, {"generation": 0})

    # -- persistence ------------------------------------------------------

    def checkpoint_path(self, generation: int) -> Path:
        return self.run_dir / "checkpoints" / f"gen-{generation:04d}.fzck"

    @property
    def records_path(self) -> Path:
        return self.run_dir / "generations.jsonl"

    @property
    def training_log_path(self) -> Path:
        return self.run_dir / "training_log.jsonl"

    def _load_records(self) -> None:
        if self.records_path.exists():
            with open(self.records_path) as fh:
                self.records = [GenerationRecord.from_json(line) for line in fh if line.strip()]

    def _append_record(self, record: GenerationRecord) -> None:
        with open(self.records_path, "a") as fh:
            fh.write(record.to_json() + "\n")
        self.records.append(record)

    def _log_training(self, entry: dict) -> None:
        with open(self.training_log_path, "a") as fh:
            fh.write(json.dumps(entry) + "\n")

    @property
    def next_generation(self) -> int:
        promoted = [r.index for r in self.records if r.promoted]
        return (max(promoted) + 1) if promoted else 1

    @property
    def resign_threshold(self) -> float:
        for record in reversed(self.records):
            if record.promoted:
                return record.new_resign_threshold
        return -1.0

    def gate_results_so_far(self) -> list[tuple[str, str, float]]:
        triples = []
        for record in self.records:
            if not record.promoted:
                continue
            prev, new = f"gen{record.index - 1}", f"gen{record.index}"
            triples += [(new, prev, 1.0)] * record.gate_wins
            triples += [(new, prev, 0.5)] * record.gate_draws
            triples += [(new, prev, 0.0)] * record.gate_losses
        return triples

    # -- phases ------------------------------------------------------------

    def _search_config(self, sims: int) -> SearchConfig:
        return SearchConfig(
            simulations=sims, eval_batch=self.config.eval_batch, temperature_moves=20
        )

    def _self_play(self, generation: int, champion: NetParams):
        cfg = self.config
        playout = cfg.schedule.playout_fraction_for(generation, cfg.total_generations)
        resign = ResignConfig(v_resign=self.resign_threshold, playout_fraction=playout)
        sims = cfg.schedule.sims_for(generation)
        records = generate_games(
            champion,
            cfg.games_per_generation,
            self._search_config(sims),
            resign,
            root_seed=cfg.seed,
            generation=generation,
            workers=cfg.workers,
            harvest_min_visits=cfg.harvest_min_visits,
            phase="selfplay",
        )
        return records, resign, playout

    def _train_challenger(self, generation: int, champion: NetParams, attempt: int):
        cfg = self.config
        challenger = champion.copy()
        rng = np.random.default_rng(_phase_seed(cfg.seed, generation, "train", attempt))
        lr = cfg.schedule.lr_for(generation)
        window = window_generations(generation, cfg.schedule.window)
        window = [g for g in window if g in set(self.store.available_generations())]
        steps_total = cfg.sample_size // cfg.minibatch
        epoch_len = max(1, steps_total // max(1, cfg.training_epochs_logged))
        velocity = None
        losses: list[float] = []
        epoch_losses: list[float] = []
        epoch_index = 0
        for step, (planes, pi, omega) in enumerate(
            sample_training_window(
                self.store, generation, cfg.sample_size, cfg.minibatch, rng, cfg.schedule.window
            )
        ):
            grads, parts = compute_gradients(challenger, planes, pi, omega, update_stats=True)
            velocity = sgd_step(challenger, grads, lr, cfg.momentum, velocity)
            losses.append(parts.total)
            epoch_losses.append(parts.total)
            if len(epoch_losses) >= epoch_len:
                self._log_training(
                    {
                        "generation": generation,
                        "attempt": attempt,
                        "epoch": epoch_index,
                        "steps": len(epoch_losses),
                        "mean_loss": float(np.mean(epoch_losses)),
                        "window": window,
                        "lr": lr,
                    }
                )
                epoch_losses = []
                epoch_index += 1
        if epoch_losses:
            self._log_training(
                {
                    "generation": generation,
                    "attempt": attempt,
                    "epoch": epoch_index,
                    "steps": len(epoch_losses),
                    "mean_loss": float(np.mean(epoch_losses)),
                    "window": window,
                    "lr": lr,
                }
            )
        return challenger, float(np.mean(losses)), window

    def _gate(self, generation: int, attempt: int, challenger: NetParams):
        cfg = self.config
        sims = cfg.schedule.sims_for(generation)
        rng = np.random.default_rng(_phase_seed(cfg.seed, generation, "gate", attempt))
        openings = random_openings(cfg.gate_games // 2, cfg.gate_opening_plies, rng)
        cand_path = self.run_dir / "checkpoints" / f"cand-{generation:04d}-{attempt}.fzck"
        save_checkpoint_file(cand_path, challenger, {"generation": generation, "attempt": attempt})
        challenger_handle = InternalEngine(
            str(cand_path), self._search_config(sims), name=f"cand{generation}"
        )
        champion_handle = InternalEngine(
            str(self.checkpoint_path(generation - 1)),
            self._search_config(sims),
            name=f"gen{generation - 1}",
        )
        series = play_series(
            challenger_handle,
            champion_handle,
            openings,
            games_per_series=cfg.gate_games,
            budget=sims,
            rng=rng,
            paired_openings=True,
            workers=cfg.workers,
        )
        wins, draws, losses = series.tally_for_a()
        points = series.points_for_a()
        promoted = points >= cfg.promotion_threshold * cfg.gate_games
        with open(self.run_dir / "gates.jsonl", "a") as fh:
            fh.write(
                json.dumps(
                    {
                        "generation": generation,
                        "attempt": attempt,
                        "wins": wins,
                        "draws": draws,
                        "losses": losses,
                        "points": points,
                        "needed": cfg.promotion_threshold * cfg.gate_games,
                        "promoted": promoted,
                    }
                )
                + "\n"
            )
        return promoted, wins, draws, losses, points

    def run_generation(self) -> GenerationRecord:
        cfg = self.config
        generation = self.next_generation
        start = time.time()
        champion, _ = load_checkpoint_file(self.checkpoint_path(generation - 1))

        game_records, resign, playout = self._self_play(generation, champion)
        entries = build_dataset(game_records)
        self.store.write_generation(
            generation,
            entries,
            {"games": len(game_records), "sims": cfg.schedule.sims_for(generation)},
        )

        played_out = [r for r in game_records if r.played_out()]
        if len(played_out) >= 50:
            new_threshold = calibrate_resign(game_records)
        else:
            new_threshold = self.resign_threshold

        last_error: str | None = None
        for attempt in range(cfg.gate_retry_cap + 1):
            challenger, mean_loss, window = self._train_challenger(generation, champion, attempt)
            promoted, wins, draws, losses, points = self._gate(generation, attempt, challenger)
            if promoted:
                save_checkpoint_file(
                    self.checkpoint_path(generation), challenger, {"generation": generation}
                )
                record = GenerationRecord(
                    index=generation,
                    games=len(game_records),
                    sims=cfg.schedule.sims_for(generation),
                    lr=cfg.schedule.lr_for(generation),
                    window=window,
                    gate_wins=wins,
                    gate_draws=draws,
                    gate_losses=losses,
                    gate_points=points,
                    promoted=True,
                    attempts=attempt + 1,
                    mean_loss=mean_loss,
                    elo={},
                    drop_stats=drop_statistics(game_records),
                    heatmap=crucial_move_heatmap(game_records).tolist(),
                    resign_threshold=resign.v_resign,
                    new_resign_threshold=new_threshold,
                    playout_fraction=playout,
                    seconds=round(time.time() - start, 1),
                )
                triples = self.gate_results_so_far()
                triples += [(f"gen{generation}", f"gen{generation - 1}", 1.0)] * wins
                triples += [(f"gen{generation}", f"gen{generation - 1}", 0.5)] * draws
                triples += [(f"gen{generation}", f"gen{generation - 1}", 0.0)] * losses
                record.elo = {
                    k: round(v, 2)
                    for k, v in elo_estimate(triples, anchor="gen0", virtual_draws=1.0).items()
                }
                self._append_record(record)
                return record
            last_error = (
                f"gate attempt {attempt + 1}/{cfg.gate_retry_cap + 1}: "
                f"{points}/{cfg.gate_games} points, needed "
                f"{cfg.promotion_threshold * cfg.gate_games}"
            )
        record = GenerationRecord(
            index=generation,
            games=len(game_records),
            sims=cfg.schedule.sims_for(generation),
            lr=cfg.schedule.lr_for(generation),
            window=window,
            gate_wins=wins,
            gate_draws=draws,
            gate_losses=losses,
            gate_points=points,
            promoted=False,
            attempts=cfg.gate_retry_cap + 1,
            mean_loss=mean_loss,
            elo={},
            drop_stats=drop_statistics(game_records),
            heatmap=crucial_move_heatmap(game_records).tolist(),
            resign_threshold=resign.v_resign,
            new_resign_threshold=new_threshold,
            playout_fraction=playout,
            seconds=round(time.time() - start, 1),
        )
        self._append_record(record)
        raise RetryCapExceededError(last_error or "gate never passed")

    def run(self, generations: int) -> list[GenerationRecord]:
        out = []
        while self.next_generation <= generations:
            out.append(self.run_generation())
        return out


def export_metrics(run_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Plot-ready CSVs: loss curve, ratings by generation, value-drop trend,
    and one crucial-move heatmap grid per generation."""
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    log_path = run_dir / "training_log.jsonl"
    if log_path.exists():
        rows = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
        path = out_dir / "loss.csv"
        with open(path, "w") as fh:
            fh.write("generation,attempt,epoch,steps,mean_loss,lr,window\n")
            for r in rows:
                window = " ".join(map(str, r["window"]))
                fh.write(
                    f"{r['generation']},{r['attempt']},{r['epoch']},{r['steps']},"
                    f"{r['mean_loss']:.6f},{r['lr']},{window}\n"
                )
        written.append(path)

    records_path = run_dir / "generations.jsonl"
    if records_path.exists():
        records = [
            GenerationRecord.from_json(line)
            for line in records_path.read_text().splitlines()
            if line.strip()
        ]
        path = out_dir / "elo.csv"
        with open(path, "w") as fh:
            fh.write("generation,rating\n")
            if records:
                final = next((r.elo for r in reversed(records) if r.elo), {})
                for name in sorted(final, key=lambda n: int(n.removeprefix("gen"))):
                    fh.write(f"{int(name.removeprefix('gen'))},{final[name]}\n")
        written.append(path)

        path = out_dir / "value_drops.csv"
        with open(path, "w") as fh:
            fh.write("generation,count,mean,std\n")
            for r in records:
                stats = r.drop_stats
                fh.write(
                    f"{r.index},{stats['count']},"
                    f"{'' if stats['mean'] is None else round(stats['mean'], 6)},"
                    f"{'' if stats['std'] is None else round(stats['std'], 6)}\n"
                )
        written.append(path)

        for r in records:
            path = out_dir / f"heatmap-gen-{r.index:04d}.csv"
            with open(path, "w") as fh:
                for row in r.heatmap:
                    fh.write(",".join(str(int(v)) for v in row) + "\n")
            written.append(path)
    return written

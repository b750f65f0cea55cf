import json

import numpy as np
import pytest

from flipzero import board, manifest as manifest_io
from flipzero.archive import WindowRule
from flipzero.board import BLACK, WHITE
from flipzero.elo import DisconnectedResultsError, elo_estimate, expected_score
from flipzero.metrics import (
    TraceTooShortError,
    crucial_move_heatmap,
    drop_statistics,
    largest_drop,
    max_value_drop,
)
from flipzero.net import NetConfig
from flipzero.pipeline import (
    GenerationRecord,
    Pipeline,
    PipelineConfig,
    RetryCapExceededError,
    Schedule,
    export_metrics,
)
from flipzero.selfplay import GameRecord, PlayedMove

from test_selfplay import synthetic_record


class TestSchedule:
    def test_stepwise_lookup(self):
        s = Schedule()
        assert [s.sims_for(g) for g in (1, 2, 3, 9)] == [64, 128, 256, 256]
        assert s.lr_for(1) == 0.003
        assert s.lr_for(3) == 0.003
        assert s.lr_for(4) == 0.001
        assert s.lr_for(11) == 0.0001
        assert s.lr_for(30) == 0.0001

    def test_paper_scale_sims(self):
        s = Schedule.paper_scale()
        assert s.sims_for(4) == 100
        assert s.sims_for(5) == 200
        assert s.sims_for(11) == 200
        assert s.sims_for(12) == 400

    def test_validation(self):
        with pytest.raises(ValueError):
            Schedule(sims_steps=((1, 64), (1, 128)))
        with pytest.raises(ValueError):
            Schedule(sims_steps=((2, 64),))

    def test_playout_ramp(self):
        s = Schedule()
        assert s.playout_fraction_for(1, 10) == pytest.approx(0.10)
        assert s.playout_fraction_for(10, 10) == pytest.approx(1.00)
        mid = s.playout_fraction_for(5, 10)
        assert 0.1 < mid < 1.0
        assert s.playout_fraction_for(3, 1) == 1.0


class TestElo:
    def test_symmetric_head_to_head_equal(self):
        results = [("a", "b", 1.0)] * 20 + [("a", "b", 0.0)] * 20
        ratings = elo_estimate(results, anchor="a")
        assert ratings["a"] == 0.0
        assert abs(ratings["b"]) < 1e-6

    def test_30_10_gap_about_191(self):
        results = [("a", "b", 1.0)] * 30 + [("a", "b", 0.0)] * 10
        ratings = elo_estimate(results, anchor="b")
        gap = ratings["a"] - ratings["b"]
        assert abs(gap - 191) <= 1.0
        assert expected_score(gap) == pytest.approx(0.75, abs=1e-3)

    def test_cyclic_symmetry_all_equal(self):
        results = []
        for x, y in (("a", "b"), ("b", "c"), ("c", "a")):
            results += [(x, y, 1.0), (x, y, 0.0)]
        ratings = elo_estimate(results, anchor="a")
        assert all(abs(r) < 1e-6 for r in ratings.values())

    def test_anchor_fixed_at_zero(self):
        results = [("x", "y", 1.0)] * 3 + [("x", "y", 0.0)] * 1
        assert elo_estimate(results, anchor="x")["x"] == 0.0
        assert elo_estimate(results, anchor="y")["y"] == 0.0

    def test_relabeling_invariance(self):
        games = [("a", "b", 1.0)] * 3 + [("b", "c", 1.0)] * 2 + [("c", "a", 1.0)] * 2
        games += [("a", "b", 0.0), ("b", "c", 0.0), ("c", "a", 0.0)]
        base = elo_estimate(games, anchor="a")
        swapped = [(x.upper(), y.upper(), s) for x, y, s in games]
        renamed = elo_estimate(swapped, anchor="A")
        for p in ("a", "b", "c"):
            assert base[p] == pytest.approx(renamed[p.upper()], abs=1e-6)

    def test_disconnected_components_named(self):
        results = [("a", "b", 0.5), ("c", "d", 0.5)]
        with pytest.raises(DisconnectedResultsError) as err:
            elo_estimate(results)
        components = {frozenset(c) for c in err.value.components}
        assert components == {frozenset(("a", "b")), frozenset(("c", "d"))}

    def test_sweep_needs_virtual_draws(self):
        sweep = [("a", "b", 1.0)] * 10
        with pytest.raises(ValueError, match="all-loss or all-win"):
            elo_estimate(sweep)
        ratings = elo_estimate(sweep, anchor="b", virtual_draws=1.0)
        assert ratings["a"] > 300

    def test_input_validation(self):
        with pytest.raises(ValueError):
            elo_estimate([])
        with pytest.raises(ValueError):
            elo_estimate([("a", "a", 0.5)])
        with pytest.raises(ValueError):
            elo_estimate([("a", "b", 1.5)])


class TestLargestDrop:
    def test_example_trace(self):
        assert largest_drop([0.1, 0.2, -0.6, -0.8]) == (pytest.approx(0.8), 2)

    def test_constant_trace(self):
        magnitude, index = largest_drop([0.4, 0.4, 0.4])
        assert magnitude == 0.0
        assert index == 1

    def test_monotone_steepest_step(self):
        magnitude, index = largest_drop([0.9, 0.7, 0.1, -0.1])
        assert magnitude == pytest.approx(0.6)
        assert index == 2

    def test_too_short(self):
        with pytest.raises(TraceTooShortError):
            largest_drop([0.5])


class TestMaxValueDrop:
    def test_loser_trace_and_blamed_square(self):
        # Winner black; loser white has readings 0.2 then -0.7: the drop is
        # observed at white's second move, blamed on black's move before it.
        record = synthetic_record([0.5, 0.6, 0.7], [0.2, -0.7], winner=BLACK)
        drop = max_value_drop(record)
        assert drop.magnitude == pytest.approx(0.9)
        observed = record.moves[drop.move_index]
        assert observed.position.to_move == WHITE
        assert record.moves[drop.move_index - 1].move == drop.square

    def test_drawn_game_has_no_loser(self):
        record = synthetic_record([0.1, 0.2], [0.0, 0.1], draw=True)
        with pytest.raises(ValueError):
            max_value_drop(record)

    def test_short_loser_trace(self):
        record = synthetic_record([0.1, 0.2], [0.0], winner=BLACK)
        with pytest.raises(TraceTooShortError):
            max_value_drop(record)


class TestHeatmap:
    def test_counts_games_with_drops(self):
        records = [
            synthetic_record([0.5, 0.6], [0.2, -0.5], winner=BLACK),
            synthetic_record([0.4, 0.5], [0.1, -0.3], winner=BLACK),
            synthetic_record([0.1, 0.2], [0.0, 0.1], draw=True),
        ]
        heatmap = crucial_move_heatmap(records)
        assert heatmap.shape == (8, 8)
        assert heatmap.sum() == 2  # the draw contributes nothing
        assert (heatmap >= 0).all()

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            crucial_move_heatmap([])

    def test_drop_statistics(self):
        records = [synthetic_record([0.5, 0.6], [0.2, -0.5], winner=BLACK)]
        stats = drop_statistics(records)
        assert stats["count"] == 1
        assert stats["mean"] == pytest.approx(0.7)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        entries = {"seed": 7, "schedule.sims": "1:64,2:128", "net.filters": 32}
        path = tmp_path / "manifest.txt"
        manifest_io.write_manifest(path, entries)
        loaded = manifest_io.read_manifest(path)
        assert loaded == {k: str(v) for k, v in entries.items()}

    def test_comments_and_blanks(self):
        text = "# comment\n\nseed = 3\n"
        assert manifest_io.loads(text) == {"seed": "3"}

    def test_malformed_line(self):
        with pytest.raises(ValueError, match="line 1"):
            manifest_io.loads("not a pair\n")


def tiny_config(**overrides):
    defaults = dict(
        net=NetConfig(residual_blocks=1, filters=4, value_hidden=8),
        schedule=Schedule(sims_steps=((1, 4),), lr_steps=((1, 0.01),)),
        games_per_generation=4,
        sample_size=256,
        minibatch=32,
        gate_games=4,
        promotion_threshold=0.25,
        gate_retry_cap=1,
        gate_opening_plies=2,
        total_generations=2,
        harvest_min_visits=2,
        eval_batch=4,
        workers=1,
        seed=11,
        training_epochs_logged=2,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


class TestPipeline:
    def test_tiny_run_promotes_and_persists(self, tmp_path):
        pipeline = Pipeline(tiny_config(), tmp_path / "run")
        record = pipeline.run_generation()
        assert record.index == 1
        assert record.promoted
        assert record.gate_wins + record.gate_draws + record.gate_losses == 4
        assert pipeline.checkpoint_path(1).exists()
        assert pipeline.store.available_generations() == [1]
        assert record.elo["gen0"] == 0.0
        assert len(record.heatmap) == 8 and len(record.heatmap[0]) == 8
        # Training log schema: per-epoch loss entries carrying the window.
        log = [
            json.loads(line)
            for line in pipeline.training_log_path.read_text().splitlines()
        ]
        assert log
        for entry in log:
            assert set(entry) >= {"generation", "attempt", "epoch", "mean_loss", "window", "lr"}
        assert log[0]["window"] == [1]

    def test_resume_is_bit_compatible(self, tmp_path):
        config = tiny_config()
        full = Pipeline(config, tmp_path / "full")
        full.run(2)

        halted = Pipeline(config, tmp_path / "halted")
        halted.run_generation()
        resumed = Pipeline(config, tmp_path / "halted")  # fresh process state
        assert resumed.next_generation == 2
        resumed.run_generation()

        a = [r for r in Pipeline(config, tmp_path / "full").records]
        b = [r for r in Pipeline(config, tmp_path / "halted").records]
        assert len(a) == len(b) == 2
        for ra, rb in zip(a, b):
            da, db = dict(ra.__dict__), dict(rb.__dict__)
            da.pop("seconds"), db.pop("seconds")
            assert da == db
        for gen in (1, 2):
            assert (
                (tmp_path / "full" / "checkpoints" / f"gen-{gen:04d}.fzck").read_bytes()
                == (tmp_path / "halted" / "checkpoints" / f"gen-{gen:04d}.fzck").read_bytes()
            )

    def test_retry_cap_halts_with_state(self, tmp_path):
        config = tiny_config(promotion_threshold=1.5, gate_retry_cap=0)
        pipeline = Pipeline(config, tmp_path / "run")
        with pytest.raises(RetryCapExceededError):
            pipeline.run_generation()
        assert pipeline.records_path.exists()
        records = [
            GenerationRecord.from_json(line)
            for line in pipeline.records_path.read_text().splitlines()
        ]
        assert len(records) == 1
        assert not records[0].promoted
        assert records[0].attempts == 1
        assert pipeline.store.available_generations() == [1]

    def test_manifest_written_with_knobs(self, tmp_path):
        config = tiny_config()
        Pipeline(config, tmp_path / "run")
        manifest = manifest_io.read_manifest(tmp_path / "run" / "manifest.txt")
        assert manifest["seed"] == "11"
        assert manifest["schedule.sims"] == "1:4"
        assert manifest["games_per_generation"] == "4"
        assert "rng_derivation" in manifest

    def test_export_metrics(self, tmp_path):
        pipeline = Pipeline(tiny_config(), tmp_path / "run")
        pipeline.run_generation()
        written = export_metrics(tmp_path / "run", tmp_path / "csv")
        names = {p.name for p in written}
        assert "loss.csv" in names
        assert "elo.csv" in names
        assert "value_drops.csv" in names
        assert "heatmap-gen-0001.csv" in names
        loss_lines = (tmp_path / "csv" / "loss.csv").read_text().splitlines()
        assert loss_lines[0] == "generation,attempt,epoch,steps,mean_loss,lr,window"
        assert len(loss_lines) > 1
        heat = (tmp_path / "csv" / "heatmap-gen-0001.csv").read_text().splitlines()
        assert len(heat) == 8

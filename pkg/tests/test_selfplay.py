import numpy as np
import pytest

from flipzero import board, net
from flipzero.archive import (
    ArchiveError,
    ArchiveStore,
    WindowRule,
    load_window_entries,
    sample_training_window,
    window_generations,
)
from flipzero.board import BLACK, WHITE, initial_position
from flipzero.search import HarvestEntry, MctsAgent, SearchConfig
from flipzero.selfplay import (
    DatasetEntry,
    GameRecord,
    InsufficientSampleError,
    PlayedMove,
    ResignConfig,
    build_dataset,
    calibrate_resign,
    game_seed,
    generate_games,
    play_game,
)


def uniform_oracle(planes):
    n = planes.shape[0]
    return np.full((n, 65), 1.0 / 65), np.zeros(n)


def parity_oracle(planes):
    """Negative value whenever the mover is black (even total discs early
    in the game), so black wants to resign immediately."""
    n = planes.shape[0]
    values = np.array([-0.95 if planes[i].sum() % 2 == 0 else 0.95 for i in range(n)])
    return np.full((n, 65), 1.0 / 65), values


def fast_agent(oracle=uniform_oracle, sims=12, seed=0):
    return MctsAgent(oracle, SearchConfig(simulations=sims), np.random.default_rng(seed))


NO_RESIGN = ResignConfig(v_resign=-1.0, playout_fraction=0.1)


class TestPlayGame:
    def test_disabled_resign_always_terminal(self):
        for seed in range(3):
            record = play_game(fast_agent(seed=seed), NO_RESIGN, np.random.default_rng(seed))
            assert record.played_out()
            assert record.outcome is not None
            assert not record.resigned
            # Every searched move got a value-trace entry.
            assert len(record.value_trace()) == len(record.moves)

    def test_transcript_replays_legally(self):
        record = play_game(fast_agent(seed=5), NO_RESIGN, np.random.default_rng(5))
        pos, out = board.replay(record.transcript())
        assert out is not None
        assert out == record.outcome

    def test_forced_opening_prefix(self):
        opening = board.random_openings(1, 8, np.random.default_rng(3))[0]
        record = play_game(
            fast_agent(seed=7), NO_RESIGN, np.random.default_rng(7), opening=opening
        )
        assert record.transcript()[:8] == opening
        # Opening moves are forced, not searched: no targets recorded for them.
        assert record.moves[0].position.disc_count() == 4 + 8

    def test_playout_fraction_flags(self):
        rng = np.random.default_rng(11)
        flags = []
        for seed in range(300):
            game_rng = np.random.default_rng(seed)
            flags.append(bool(game_rng.random() < 0.1))
        # play_game draws the flag from its rng exactly once, first thing.
        record = play_game(
            fast_agent(seed=1), ResignConfig(-1.0, 0.999999), np.random.default_rng(1)
        )
        assert record.always_playout
        assert abs(np.mean(flags) - 0.1) < 0.05

    def test_resignation_triggers_and_scores(self):
        # Find a seed whose always-playout draw is False.
        seed = next(s for s in range(50) if not np.random.default_rng(s).random() < 0.1)
        record = play_game(
            fast_agent(parity_oracle, sims=16, seed=seed),
            ResignConfig(v_resign=-0.5, playout_fraction=0.1),
            np.random.default_rng(seed),
        )
        assert record.resigned
        assert record.resigner == BLACK
        assert record.winner() == WHITE
        assert record.outcome is None
        assert not record.played_out()

    def test_resign_config_validation(self):
        with pytest.raises(ValueError):
            ResignConfig(v_resign=0.0)
        with pytest.raises(ValueError):
            ResignConfig(v_resign=-0.5, playout_fraction=0.05)


def synthetic_record(winner_trace, loser_trace, winner=BLACK, draw=False, generation=1):
    """Record with alternating movers and prescribed per-side value traces."""
    record = GameRecord(generation=generation, opening=[])
    rng = np.random.default_rng(0)
    p = initial_position()
    wi = li = 0
    while wi < len(winner_trace) or li < len(loser_trace):
        moves = sorted(board.legal_moves(p))
        move = moves[rng.integers(len(moves))]
        pi = np.zeros(65)
        pi[move] = 1.0
        if p.to_move == winner:
            if wi >= len(winner_trace):
                break
            q = winner_trace[wi]
            wi += 1
        else:
            if li >= len(loser_trace):
                break
            q = loser_trace[li]
            li += 1
        record.moves.append(PlayedMove(p, move, pi, q))
        record.harvested.append([])
        p = board.apply_move(p, move)
    if draw:
        record.outcome = board.Outcome(32, 32)
    elif winner == BLACK:
        record.outcome = board.Outcome(40, 24)
    else:
        record.outcome = board.Outcome(24, 40)
    return record


class TestCalibrateResign:
    def brute_force(self, records, rate=0.05, grid=2000):
        # Independent oracle: scan a dense threshold grid for the largest
        # admissible value.
        minima = []
        for r in records:
            winner = r.winner()
            vals = [m.q for m in r.moves if m.position.to_move == winner]
            minima.append(min(vals) if vals else np.inf)
        minima = np.asarray(minima)
        best = -1.0
        for k in range(1, grid):
            t = -k / grid
            if np.mean(minima < t) < rate:
                best = max(best, t)
        return best

    def make_records(self, n=100):
        records = []
        for i in range(n):
            if i < 4:  # 4%: winner dips to -0.95
                records.append(synthetic_record([0.2, -0.95, 0.4], [-0.2, -0.6]))
            elif i < 10:  # next 6%: winner dips to -0.85
                records.append(synthetic_record([0.1, -0.85, 0.3], [-0.1, -0.5]))
            else:
                records.append(synthetic_record([0.3, -0.5, 0.6], [-0.3, -0.7]))
        return records

    def test_picks_largest_admissible_threshold(self):
        records = self.make_records()
        got = calibrate_resign(records)
        assert got == pytest.approx(-0.85)
        oracle = self.brute_force(records)
        # The grid oracle sits within one grid step of the data-exact answer.
        assert abs(got - oracle) <= 1 / 2000 + 1e-9

    def test_false_resign_rate_below_bound_on_own_set(self):
        records = self.make_records()
        t = calibrate_resign(records)
        false = 0
        for r in records:
            winner = r.winner()
            vals = [m.q for m in r.moves if m.position.to_move == winner]
            if vals and min(vals) < t:
                false += 1
        assert false / len(records) < 0.05

    def test_no_dips_allows_high_threshold(self):
        records = [synthetic_record([0.3, -0.4], [-0.2, -0.6]) for _ in range(60)]
        assert calibrate_resign(records) >= -0.95

    def test_insufficient_sample(self):
        records = [synthetic_record([0.1], [-0.1]) for _ in range(49)]
        with pytest.raises(InsufficientSampleError):
            calibrate_resign(records)

    def test_resigned_games_not_counted(self):
        records = [synthetic_record([0.1, -0.3], [-0.1, -0.4]) for _ in range(50)]
        resigned = GameRecord(generation=1, opening=[], resigned=True, resigner=WHITE)
        records.append(resigned)
        assert calibrate_resign(records) is not None


class TestBuildDataset:
    def play_batch(self, n=4, sims=48):
        records = []
        for seed in range(n):
            agent = MctsAgent(uniform_oracle, SearchConfig(simulations=sims),
                              np.random.default_rng(seed))
            records.append(
                play_game(agent, NO_RESIGN, np.random.default_rng(seed),
                          generation=1, harvest_min_visits=2)
            )
        return records

    def test_counts_match_with_ample_supply(self):
        records = self.play_batch()
        entries = build_dataset(records)
        z = [e for e in entries if e.label_kind == "z"]
        q = [e for e in entries if e.label_kind == "q"]
        assert len(z) == sum(len(r.moves) for r in records)
        assert len(q) == len(z)
        assert all(e.source == "played" for e in z)
        assert all(e.source == "harvested" for e in q)

    def test_pi_targets_legal_and_labels_in_range(self):
        entries = build_dataset(self.play_batch(2))
        for e in entries:
            legal = board.legal_moves(e.position)
            for move in np.nonzero(e.pi > 0)[0]:
                assert int(move) in legal
            if e.label_kind == "z":
                assert e.omega in (-1.0, 0.0, 1.0)
            else:
                assert -1.0 <= e.omega <= 1.0

    def test_z_labels_alternate_with_mover(self):
        records = self.play_batch(3)
        entries = build_dataset(records)
        # z entries are appended in record order, then move order.
        z_entries = iter(e for e in entries if e.label_kind == "z")
        for r in records:
            winner = r.winner()
            for m in r.moves:
                e = next(z_entries)
                assert e.position == m.position
                if winner is None:
                    assert e.omega == 0.0
                else:
                    assert e.omega == (1.0 if m.position.to_move == winner else -1.0)

    def test_drawn_game_all_zero(self):
        record = synthetic_record([0.1, 0.2, 0.3], [-0.1, -0.2], draw=True)
        entries = build_dataset([record])
        assert all(e.omega == 0.0 for e in entries if e.label_kind == "z")

    def test_harvested_exclude_played_positions(self):
        records = self.play_batch(2)
        entries = build_dataset(records)
        played = set()
        for r in records:
            played |= {m.position.key() for m in r.moves}
        # A harvested entry may equal a position played in a *different*
        # game, so compare per game of origin instead of globally: rebuild
        # with a single game to make the check exact.
        single = build_dataset([records[0]])
        played0 = {m.position.key() for m in records[0].moves}
        for e in single:
            if e.label_kind == "q":
                assert e.position.key() not in played0

    def test_short_supply_warns_and_shrinks(self):
        record = synthetic_record([0.1, 0.2], [-0.1, -0.2])  # no harvest lists
        with pytest.warns(UserWarning, match="harvest supply"):
            entries = build_dataset([record])
        assert all(e.label_kind == "z" for e in entries)

    def test_rank_cutoff_tie_break(self):
        g0 = synthetic_record([0.1], [])  # exactly one searched move each
        g1 = synthetic_record([0.2], [])
        p = initial_position()
        children = [board.apply_move(p, m) for m in sorted(board.legal_moves(p))]

        def harvest_for(pos):
            legal = sorted(board.legal_moves(pos))
            pi = np.zeros(65)
            pi[legal[0]] = 1.0
            return HarvestEntry(position=pos, pi=pi, q=0.0, n=5)

        g0.harvested = [[harvest_for(children[0])]]
        g1.harvested = [[harvest_for(children[1]), harvest_for(children[2])]]
        entries = build_dataset([g0, g1])
        q_entries = [e for e in entries if e.label_kind == "q"]
        # Two z entries -> two q slots; equal visit counts resolve to the
        # earliest game, then earliest-listed node.
        assert len(q_entries) == 2
        assert q_entries[0].position == children[0]
        assert q_entries[1].position == children[1]

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            build_dataset([])


class TestParallelGeneration:
    def test_seed_schedule_is_scheduling_independent(self):
        assert game_seed(1, 2, "selfplay", 3) == game_seed(1, 2, "selfplay", 3)
        assert game_seed(1, 2, "selfplay", 3) != game_seed(1, 2, "selfplay", 4)
        assert game_seed(1, 2, "selfplay", 3) != game_seed(1, 3, "selfplay", 3)

    def test_workers_do_not_change_results(self):
        cfg = net.NetConfig(residual_blocks=1, filters=4, value_hidden=8)
        params = net.init_params(cfg, seed=1)
        scfg = SearchConfig(simulations=6)
        kwargs = dict(
            count=4, scfg=scfg, resign=NO_RESIGN, root_seed=9, generation=1,
        )
        serial = generate_games(params, workers=1, **kwargs)
        parallel = generate_games(params, workers=2, **kwargs)
        assert [r.transcript_text() for r in serial] == [
            r.transcript_text() for r in parallel
        ]


class TestArchive:
    def make_entries(self, generation=1, n=6):
        entries = []
        agent = fast_agent(seed=generation)
        record = play_game(agent, NO_RESIGN, np.random.default_rng(generation),
                           generation=generation, harvest_min_visits=2)
        return build_dataset([record])[:n]

    def test_roundtrip(self, tmp_path):
        store = ArchiveStore(tmp_path)
        entries = self.make_entries()
        store.write_generation(1, entries, {"games": 1})
        meta, loaded = store.read_generation(1)
        assert meta == {"games": 1}
        assert len(loaded) == len(entries)
        for a, b in zip(entries, loaded):
            assert a.position == b.position
            assert np.allclose(a.pi, b.pi, atol=1e-7)
            assert a.omega == pytest.approx(b.omega, abs=1e-7)
            assert (a.label_kind, a.source) == (b.label_kind, b.source)

    def test_append(self, tmp_path):
        store = ArchiveStore(tmp_path)
        entries = self.make_entries()
        store.append(1, entries[:2])
        store.append(1, entries[2:4])
        _, loaded = store.read_generation(1)
        assert len(loaded) == 4

    def test_missing_generation(self, tmp_path):
        store = ArchiveStore(tmp_path)
        store.write_generation(1, self.make_entries())
        with pytest.raises(ArchiveError, match="missing generations"):
            load_window_entries(store, [1, 2])

    def test_available_generations(self, tmp_path):
        store = ArchiveStore(tmp_path)
        for gen in (3, 1, 2):
            store.write_generation(gen, self.make_entries(gen))
        assert store.available_generations() == [1, 2, 3]

    def test_corrupt_file(self, tmp_path):
        store = ArchiveStore(tmp_path)
        store.path(1).write_bytes(b"garbage")
        with pytest.raises(ArchiveError):
            store.read_generation(1)


class TestWindow:
    def test_ramp(self):
        assert window_generations(1) == [1]
        assert window_generations(2) == [1, 2]
        assert window_generations(3) == [1, 2, 3]
        assert window_generations(4) == [2, 3, 4]
        assert window_generations(12) == [8, 9, 10, 11, 12]

    def test_custom_rule(self):
        rule = WindowRule(initial=1, final=3, growth_interval=1)
        assert window_generations(1, rule) == [1]
        assert window_generations(4, rule) == [2, 3, 4]

    def test_sampler_batch_count_and_provenance(self, tmp_path):
        store = ArchiveStore(tmp_path)
        p = initial_position()
        legal = sorted(board.legal_moves(p))
        for gen in (1, 2, 3):
            pi = np.zeros(65)
            pi[legal[0]] = 1.0
            entries = [
                DatasetEntry(p, pi, gen / 10.0, "q", gen, "harvested") for _ in range(30)
            ]
            store.write_generation(gen, entries)
        rng = np.random.default_rng(0)
        batches = list(sample_training_window(store, 3, sample_size=256, minibatch=32, rng=rng))
        assert len(batches) == 8
        window = window_generations(3)
        allowed = {gen / 10.0 for gen in window}
        for planes, pi, omega in batches:
            assert planes.shape == (32, 2, 8, 8)
            assert pi.shape == (32, 65)
            assert {round(float(x), 6) for x in omega} <= allowed

    def test_empty_store_rejected(self, tmp_path):
        store = ArchiveStore(tmp_path)
        with pytest.raises(ArchiveError):
            list(sample_training_window(store, 1, 64, 32, np.random.default_rng(0)))

"""Operator command line: train, selfplay, gate, arena, serve, replay,
perft, export-metrics, and an `engine` mode speaking the match protocol on
stdio so this engine can be driven as an external process.

Configuration precedence for `train`: profile defaults, then a manifest
file, then flags; the effective configuration is echoed into the run
directory's manifest.  Every command that draws randomness takes --seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import board, manifest as manifest_io
from .archive import ArchiveStore, WindowRule
from .arena import ExternalEngine, InternalEngine, play_series
from .net import NetConfig, init_params, load_checkpoint_file, save_checkpoint_file
from .pipeline import Pipeline, PipelineConfig, RetryCapExceededError, Schedule, export_metrics
from .search import SearchConfig
from .selfplay import ResignConfig, build_dataset, generate_games


def _parse_steps(text: str, cast=int):
    steps = []
    for part in text.split(","):
        generation, value = part.split(":")
        steps.append((int(generation), cast(value)))
    return tuple(steps)


def _build_train_config(args) -> PipelineConfig:
    base = PipelineConfig.desk_scale() if args.desk_scale else PipelineConfig.paper_scale()
    values = {key: str(value) for key, value in base.flatten().items()}
    if args.manifest:
        values.update(manifest_io.read_manifest(args.manifest))
    flag_map = {
        "games_per_generation": args.games,
        "sample_size": args.sample_size,
        "minibatch": args.minibatch,
        "gate_games": args.gate_games,
        "workers": args.workers,
        "seed": args.seed,
        "total_generations": args.generations,
        "schedule.sims": args.sims,
        "schedule.lr": args.lr,
        "net.residual_blocks": args.blocks,
        "net.filters": args.filters,
    }
    for key, value in flag_map.items():
        if value is not None:
            values[key] = str(value)
    schedule = Schedule(
        sims_steps=_parse_steps(values["schedule.sims"], int),
        lr_steps=_parse_steps(values["schedule.lr"], float),
        window=WindowRule(
            initial=int(values["schedule.window.initial"]),
            final=int(values["schedule.window.final"]),
            growth_interval=int(values["schedule.window.growth_interval"]),
        ),
        playout_start=float(values["schedule.playout_start"]),
        playout_end=float(values["schedule.playout_end"]),
    )
    net = NetConfig(
        residual_blocks=int(values["net.residual_blocks"]),
        filters=int(values["net.filters"]),
        value_hidden=int(values["net.value_hidden"]),
        l2_coefficient=float(values["net.l2_coefficient"]),
        bn_momentum=float(values["net.bn_momentum"]),
    )
    return PipelineConfig(
        net=net,
        schedule=schedule,
        games_per_generation=int(values["games_per_generation"]),
        sample_size=int(values["sample_size"]),
        minibatch=int(values["minibatch"]),
        momentum=float(values["momentum"]),
        gate_games=int(values["gate_games"]),
        promotion_threshold=float(values["promotion_threshold"]),
        gate_retry_cap=int(values["gate_retry_cap"]),
        gate_opening_plies=int(values["gate_opening_plies"]),
        total_generations=int(values["total_generations"]),
        harvest_min_visits=int(values["harvest_min_visits"]),
        eval_batch=int(values["eval_batch"]),
        workers=int(values["workers"]),
        seed=int(values["seed"]),
        training_epochs_logged=int(values["training_epochs_logged"]),
    )


def cmd_train(args) -> int:
    config = _build_train_config(args)
    pipeline = Pipeline(config, args.run_dir)
    target = config.total_generations
    print(f"run dir: {pipeline.run_dir}; next generation: {pipeline.next_generation}")
    try:
        while pipeline.next_generation <= target:
            record = pipeline.run_generation()
            print(
                f"generation {record.index}: promoted after {record.attempts} attempt(s), "
                f"gate {record.gate_wins}-{record.gate_draws}-{record.gate_losses}, "
                f"loss {record.mean_loss:.4f}, {record.seconds}s"
            )
    except RetryCapExceededError as exc:
        print(f"halted: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_selfplay(args) -> int:
    params, _ = load_checkpoint_file(args.checkpoint)
    scfg = SearchConfig(simulations=args.sims, eval_batch=8)
    records = generate_games(
        params,
        args.games,
        scfg,
        ResignConfig(v_resign=args.v_resign, playout_fraction=args.playout_fraction),
        root_seed=args.seed,
        generation=args.generation,
        workers=args.workers,
    )
    entries = build_dataset(records)
    store = ArchiveStore(Path(args.out))
    store.write_generation(args.generation, entries, {"games": len(records)})
    played_out = sum(1 for r in records if r.played_out())
    print(
        f"{len(records)} games ({played_out} played out), {len(entries)} dataset entries "
        f"-> {store.path(args.generation)}"
    )
    return 0


def cmd_gate(args) -> int:
    rng = np.random.default_rng(args.seed)
    openings = board.random_openings(args.games // 2, args.opening_plies, rng)
    scfg = SearchConfig(simulations=args.sims, eval_batch=8, temperature_moves=0)
    challenger = InternalEngine(args.challenger, scfg, name="challenger")
    champion = InternalEngine(args.champion, scfg, name="champion")
    series = play_series(
        challenger, champion, openings, games_per_series=args.games,
        budget=args.sims, rng=rng, paired_openings=True, workers=args.workers,
    )
    wins, draws, losses = series.tally_for_a()
    points = series.points_for_a()
    needed = args.threshold * args.games
    promoted = points >= needed
    print(
        f"challenger {wins}-{draws}-{losses} = {points}/{args.games} points "
        f"(needs {needed}); {'PROMOTED' if promoted else 'rejected'}"
    )
    return 0 if promoted else 1


def _engine_from_spec(spec: str, sims: int, name: str) -> InternalEngine | ExternalEngine:
    if spec.startswith("external:"):
        return ExternalEngine(argv=tuple(spec[len("external:"):].split()), name=name)
    path = spec[len("internal:"):] if spec.startswith("internal:") else spec
    return InternalEngine(path, SearchConfig(simulations=sims, eval_batch=8), name=name)


def cmd_arena(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.openings:
        openings = board.load_xot(Path(args.openings).read_text(), plies=args.opening_plies)
    else:
        openings = board.random_openings(
            max(1, args.games), args.opening_plies, rng
        )
    a = _engine_from_spec(args.a, args.budget, "A")
    b = _engine_from_spec(args.b, args.budget, "B")
    series = play_series(
        a, b, openings, games_per_series=args.games, budget=args.budget, rng=rng,
        workers=args.workers,
    )
    wins, draws, losses = series.tally_for_a()
    print(f"{series.identity_a} vs {series.identity_b}: {wins}-{draws}-{losses} "
          f"({series.points_for_a()}/{args.games} points) at {args.budget} sims/move")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "series.csv", "w") as fh:
            fh.write("game,black,white,score,forfeit,reason,transcript\n")
            for i, game in enumerate(series.games):
                outcome = game.outcome.score_text() if game.outcome else ""
                reason = (game.forfeit_reason or "").replace(",", ";")
                fh.write(
                    f"{i},{game.black_identity},{game.white_identity},{outcome},"
                    f"{'' if game.forfeited_by is None else game.forfeited_by},{reason},"
                    f"{board.format_transcript(game.transcript)}\n"
                )
        with open(out / "move_nodes.csv", "w") as fh:
            fh.write("game,move_index,color,nodes\n")
            for i, game in enumerate(series.games):
                for j, (color, nodes) in enumerate(game.move_nodes):
                    fh.write(f"{i},{j},{color},{'' if nodes is None else nodes}\n")
        print(f"series exported to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    checkpoints = {}
    for spec in args.checkpoint or []:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = Path(spec).stem, spec
        checkpoints[name] = path
    default_params = None
    if not checkpoints:
        print("no checkpoint given; serving a freshly initialized network", file=sys.stderr)
        default_params = init_params(NetConfig(), seed=args.seed)
    static = args.static_dir
    if static is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        static = str(bundled) if bundled.exists() else None
    app = create_app(
        checkpoints=checkpoints,
        default_params=default_params,
        static_dir=static,
        default_sims=args.sims,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    lines: list[str] = []
    if args.file:
        lines = [
            line.strip()
            for line in Path(args.file).read_text().splitlines()
            if line.strip() and not line.strip().startswith("#")
        ]
    if args.transcript:
        lines.append(args.transcript)
    if not lines:
        print("nothing to replay (pass --file or a transcript)", file=sys.stderr)
        return 1
    failures = 0
    for index, line in enumerate(lines):
        parts = line.split()
        transcript = parts[0]
        expected = parts[1] if len(parts) > 1 else None
        first_color = parts[2].upper() if len(parts) > 2 else "B"
        try:
            moves = board.parse_transcript(transcript)
            position, outcome = board.replay(moves, auto_pass=not args.strict)
        except (board.TranscriptError, board.IllegalMoveError) as exc:
            print(f"game {index + 1}: FAIL {exc}")
            failures += 1
            continue
        if outcome is None:
            print(f"game {index + 1}: non-terminal after {len(moves)} moves")
            if expected:
                failures += 1
            continue
        black, white = outcome.adjusted_counts()
        printed = f"{black}-{white}" if first_color == "B" else f"{white}-{black}"
        status = ""
        if expected:
            status = "OK" if printed == expected else f"MISMATCH (expected {expected})"
            if printed != expected:
                failures += 1
        print(f"game {index + 1}: {printed} {status}".rstrip())
    return 1 if failures else 0


# A deliberately plain array-based move generator: the built-in oracle for
# `perft --verify`, sharing no code with the bitboard engine.
def _naive_legal(cells: list[int], mover: int) -> list[int]:
    other = 1 - mover
    moves = []
    for sq in range(64):
        if cells[sq] != -1:
            continue
        row, col = divmod(sq, 8)
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            r, c = row + dr, col + dc
            seen_other = False
            while 0 <= r < 8 and 0 <= c < 8 and cells[r * 8 + c] == other:
                seen_other = True
                r += dr
                c += dc
            if seen_other and 0 <= r < 8 and 0 <= c < 8 and cells[r * 8 + c] == mover:
                moves.append(sq)
                break
    return moves


def _naive_play(cells: list[int], mover: int, sq: int) -> list[int]:
    other = 1 - mover
    out = list(cells)
    out[sq] = mover
    row, col = divmod(sq, 8)
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)):
        r, c = row + dr, col + dc
        run = []
        while 0 <= r < 8 and 0 <= c < 8 and cells[r * 8 + c] == other:
            run.append(r * 8 + c)
            r += dr
            c += dc
        if run and 0 <= r < 8 and 0 <= c < 8 and cells[r * 8 + c] == mover:
            for flip in run:
                out[flip] = mover
    return out


def _naive_perft(cells: list[int], mover: int, depth: int) -> int:
    if depth == 0:
        return 1
    moves = _naive_legal(cells, mover)
    if not moves:
        if not _naive_legal(cells, 1 - mover):
            return 0
        return _naive_perft(cells, 1 - mover, depth - 1)
    total = 0
    for sq in moves:
        total += _naive_perft(_naive_play(cells, mover, sq), 1 - mover, depth - 1)
    return total


def cmd_perft(args) -> int:
    p = board.initial_position()
    if args.transcript:
        p, _ = board.replay(board.parse_transcript(args.transcript))
    cells = [-1] * 64
    for sq in range(64):
        bit = 1 << sq
        if p.black & bit:
            cells[sq] = 0
        elif p.white & bit:
            cells[sq] = 1
    mover = 0 if p.to_move == board.BLACK else 1
    status = 0
    for depth in range(1, args.depth + 1):
        fast = board.perft(p, depth)
        line = f"perft({depth}) = {fast}"
        if args.verify:
            slow = _naive_perft(cells, mover, depth)
            line += f"  oracle = {slow}  {'OK' if fast == slow else 'MISMATCH'}"
            if fast != slow:
                status = 1
        print(line)
    return status


def cmd_export_metrics(args) -> int:
    written = export_metrics(args.run_dir, args.out)
    for path in written:
        print(path)
    return 0


def cmd_engine(args) -> int:
    from .net import NetEvaluator
    from .protocol import serve

    if args.checkpoint:
        params, _ = load_checkpoint_file(args.checkpoint)
    else:
        params = init_params(NetConfig(), seed=args.seed, zero_logits=args.zero_logit)
    serve(
        NetEvaluator(params),
        SearchConfig(simulations=args.sims, eval_batch=8),
        sys.stdin,
        sys.stdout,
        seed=args.seed,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flipzero", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "train",
        help="run the self-play training pipeline (full-scale defaults; "
        "--desk-scale for the commodity-hardware profile)",
    )
    p.add_argument("--run-dir", required=True)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--desk-scale", action="store_true", default=False)
    p.add_argument("--manifest", default=None, help="key=value config file")
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--sims", default=None, help="e.g. 1:64,2:128,3:256")
    p.add_argument("--lr", default=None, help="e.g. 1:0.003,4:0.001,11:0.0001")
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--minibatch", type=int, default=None)
    p.add_argument("--gate-games", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--filters", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("selfplay", help="generate games and a dataset archive")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--games", type=int, default=100)
    p.add_argument("--sims", type=int, default=64)
    p.add_argument("--out", required=True, help="archive directory")
    p.add_argument("--generation", type=int, default=1)
    p.add_argument("--v-resign", type=float, default=-1.0)
    p.add_argument("--playout-fraction", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfplay)

    p = sub.add_parser("gate", help="evaluate a challenger against a champion")
    p.add_argument("--challenger", required=True)
    p.add_argument("--champion", required=True)
    p.add_argument("--games", type=int, default=40)
    p.add_argument("--sims", type=int, default=64)
    p.add_argument("--threshold", type=float, default=0.55)
    p.add_argument("--opening-plies", type=int, default=4)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("arena", help="play a series between two engines")
    p.add_argument("--a", required=True, help="internal:CKPT or external:CMD...")
    p.add_argument("--b", required=True)
    p.add_argument("--games", type=int, default=20)
    p.add_argument("--budget", type=int, default=400, help="simulations per move")
    p.add_argument("--openings", default=None, help="opening list file (one per line)")
    p.add_argument("--opening-plies", type=int, default=8)
    p.add_argument("--out", default=None, help="directory for CSV + transcripts")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_arena)

    p = sub.add_parser("serve", help="serve the HTTP API and web UI")
    p.add_argument("--checkpoint", action="append", help="NAME=PATH (repeatable)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--sims", type=int, default=1000)
    p.add_argument("--static-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="verify transcripts and print scores")
    p.add_argument("transcript", nargs="?", default=None)
    p.add_argument("--file", default=None, help="lines: TRANSCRIPT [SCORE [B|W]]")
    p.add_argument("--strict", action="store_true", help="do not auto-insert forced passes")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("perft", help="count move sequences; --verify cross-checks")
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--transcript", default=None, help="start position, as a transcript")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_perft)

    p = sub.add_parser("export-metrics", help="write plot-ready CSVs from a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_metrics)

    p = sub.add_parser("engine", help="speak the match protocol on stdio")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--zero-logit", action="store_true")
    p.add_argument("--sims", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_engine)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

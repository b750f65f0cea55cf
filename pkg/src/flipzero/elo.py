"""Pairwise-strength ratings from game results.

Maximum-likelihood Bradley-Terry fit (minorize-maximize iteration) mapped to
the logistic rating scale with 400 / ln 10 scaling, so a rating gap d gives
an expected score of 1 / (1 + 10^(-d/400)).  Draws count as half a win for
each side.  Ratings are reported relative to an anchor player fixed at 0.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Hashable, Sequence

RATING_SCALE = 400.0 / math.log(10.0)


class DisconnectedResultsError(ValueError):
    """The result graph splits into disjoint groups that never met."""

    def __init__(self, components: list[list]):
        self.components = components
        super().__init__(
            "result graph is disconnected; components: "
            + "; ".join("{" + ", ".join(map(str, c)) + "}" for c in components)
        )


def expected_score(rating_gap: float) -> float:
    return 1.0 / (1.0 + 10.0 ** (-rating_gap / 400.0))


def _components(players: list, games: dict) -> list[list]:
    parent = {p: p for p in players}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in games:
        parent[find(a)] = find(b)
    groups: dict = defaultdict(list)
    for p in players:
        groups[find(p)].append(p)
    return list(groups.values())


def elo_estimate(
    results: Sequence[tuple[Hashable, Hashable, float]],
    anchor: Hashable | None = None,
    virtual_draws: float = 0.0,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> dict:
    """Fit ratings from (player_a, player_b, score_for_a) game results.

    `score_for_a` is the points player_a took from that game (1 win, 0.5
    draw, 0 loss); fractional aggregates over several games also work if the
    triple is repeated per game.  `virtual_draws` adds that many drawn games
    to every pair that actually met, which keeps one-sided sweeps finite.
    The `anchor` player (default: first seen) is fixed at rating 0.
    """
    if not results:
        raise ValueError("no results")
    players: list = []
    seen = set()
    points: dict = defaultdict(float)  # points[(i, j)] = total score of i vs j
    games: dict = defaultdict(float)
    for a, b, score in results:
        if a == b:
            raise ValueError(f"self-play result for {a!r} is meaningless for rating")
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {score}")
        for p in (a, b):
            if p not in seen:
                seen.add(p)
                players.append(p)
        points[(a, b)] += score
        points[(b, a)] += 1.0 - score
        games[frozenset((a, b))] += 1.0
    if anchor is None:
        anchor = players[0]
    elif anchor not in seen:
        raise ValueError(f"anchor {anchor!r} played no games")

    components = _components(players, {tuple(k): v for k, v in games.items() if len(k) == 2})
    if len(components) > 1:
        raise DisconnectedResultsError(components)

    if virtual_draws:
        for pair in list(games):
            a, b = tuple(pair)
            points[(a, b)] += virtual_draws / 2.0
            points[(b, a)] += virtual_draws / 2.0
            games[pair] += virtual_draws

    wins = {p: 0.0 for p in players}
    opponents: dict = defaultdict(list)
    for pair, n in games.items():
        a, b = tuple(pair)
        opponents[a].append(b)
        opponents[b].append(a)
    for (a, b), w in points.items():
        wins[a] += w
    for p in players:
        if wins[p] <= 0.0 or wins[p] >= sum(games[frozenset((p, o))] for o in opponents[p]):
            raise ValueError(
                f"player {p!r} has an all-loss or all-win record; the maximum-"
                "likelihood rating diverges (pass virtual_draws > 0)"
            )

    strength = {p: 1.0 for p in players}
    for _ in range(max_iter):
        new = {}
        for p in players:
            denom = 0.0
            for o in opponents[p]:
                denom += games[frozenset((p, o))] / (strength[p] + strength[o])
            new[p] = wins[p] / denom
        scale = new[anchor]
        new = {p: v / scale for p, v in new.items()}
        shift = max(
            abs(RATING_SCALE * (math.log(new[p]) - math.log(strength[p] / strength[anchor])))
            for p in players
        )
        strength = new
        if shift < tol:
            break
    else:
        raise RuntimeError("rating fit did not converge")
    return {p: RATING_SCALE * math.log(strength[p]) for p in players}

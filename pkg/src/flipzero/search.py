"""PUCT Monte-Carlo tree search guided by a policy-value oracle.

One search owns one tree.  Each simulation selects by
``argmax(Q + c_puct * P * sqrt(N_parent) / (1 + N_child))`` down to a leaf,
expands it with oracle priors re-normalized over legal moves, and backs the
leaf value up the path with a sign flip per ply; terminal leaves back up the
exact game outcome instead of calling the oracle.  Dirichlet noise is mixed
into the root priors only, and never written back into the tree, so reused
subtrees stay clean.

Parallelism: worker threads (or the single-threaded leaf-batching collector)
coordinate through virtual losses — a temporary pseudo-loss on every node of
an in-flight path — and retire them before the real backup, so retired trees
carry exactly the statistics a serial search would account for.  The oracle
is only ever read, so one parameter set can serve many concurrent searches.

When a tree is reused between moves of one game, inherited statistics only
warm-start selection: reported root distributions, root values, and harvested
node statistics all come from the per-search deltas, so one search's output
always accounts for exactly ``simulations`` fresh simulations.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import board
from .board import PASS, POLICY_SIZE, Position


class TerminalRootError(ValueError):
    """Search was asked to pick a move in a finished game."""


def dirichlet_alpha(legal_count: int) -> float:
    """Concentration for root noise: min(1, 10 / branching factor)."""
    if legal_count < 1:
        raise ValueError("need at least one legal move")
    return min(1.0, 10.0 / legal_count)


@dataclass(frozen=True)
class SearchConfig:
    simulations: int = 100
    c_puct: float = 1.5
    dirichlet_epsilon: float = 0.25
    temperature_moves: int = 20
    virtual_loss: int = 1
    workers: int = 1
    eval_batch: int = 1
    reuse_tree: bool = True

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if not 0.0 <= self.dirichlet_epsilon <= 1.0:
            raise ValueError("dirichlet_epsilon must be in [0, 1]")


class Node:
    """Tree node; `n`/`w` are real visits and node-perspective value sums,
    `vn` the active virtual-loss weight, `n0`/`w0` the pre-search baseline
    used to report per-search deltas under tree reuse."""

    __slots__ = ("position", "moves", "terminal_z", "priors", "children",
                 "n", "w", "vn", "n0", "w0")

    def __init__(self, position: Position):
        self.position = position
        self.moves = sorted(board.legal_moves(position))
        self.terminal_z: float | None = None
        if not self.moves:
            self.terminal_z = float(board.outcome(position).z_for(position.to_move))
        self.priors: np.ndarray | None = None
        self.children: list[Node | None] | None = None
        self.n = 0
        self.w = 0.0
        self.vn = 0
        self.n0 = 0
        self.w0 = 0.0

    @property
    def expanded(self) -> bool:
        return self.priors is not None

    def fresh_n(self) -> int:
        return self.n - self.n0

    def fresh_q(self) -> float:
        dn = self.n - self.n0
        return (self.w - self.w0) / dn if dn else 0.0


@dataclass
class HarvestEntry:
    """A heavily-visited non-root node: its position, visit distribution over
    65 moves, mean value (mover's perspective), and fresh visit count."""

    position: Position
    pi: np.ndarray
    q: float
    n: int


@dataclass
class SearchResult:
    position: Position
    pi: np.ndarray
    q_root: float
    simulations: int
    nodes_created: int
    max_depth: int
    root: Node = field(repr=False)

    def child_visits(self) -> dict[int, int]:
        root = self.root
        out = {}
        for i, move in enumerate(root.moves):
            child = root.children[i] if root.children else None
            out[move] = (child.n - child.n0) if child is not None else 0
        return out


def _expand(node: Node, priors65: np.ndarray) -> None:
    pri = np.asarray(priors65, dtype=np.float64)[node.moves]
    total = pri.sum()
    if total > 1e-9:
        pri = pri / total
    else:
        pri = np.full(len(node.moves), 1.0 / len(node.moves))
    node.priors = pri
    node.children = [None] * len(node.moves)


def _select_child(node: Node, c_puct: float, root_priors: np.ndarray | None) -> tuple[int, Node]:
    """Index and node of the PUCT argmax child; creates the child lazily.

    Ties break toward the lowest move index (children are move-sorted and the
    scan keeps the first maximum)."""
    priors = root_priors if root_priors is not None else node.priors
    sqrt_total = np.sqrt(node.n + node.vn)
    best_i = 0
    best_score = -np.inf
    children = node.children
    for i in range(len(node.moves)):
        child = children[i]
        if child is None:
            q = 0.0
            visits = 0
        else:
            visits = child.n + child.vn
            q = -(child.w + child.vn) / visits if visits else 0.0
        score = q + c_puct * priors[i] * sqrt_total / (1.0 + visits)
        if score > best_score:
            best_score = score
            best_i = i
    child = children[best_i]
    if child is None:
        child = Node(board.apply_move(node.position, node.moves[best_i]))
        children[best_i] = child
    return best_i, child


def _backup(path: list[Node], leaf_value: float) -> None:
    v = leaf_value
    for node in reversed(path):
        node.n += 1
        node.w += v
        v = -v


def _apply_virtual(path: list[Node], amount: int) -> None:
    for node in path:
        node.vn += amount


def _snapshot_baselines(root: Node) -> None:
    stack = [root]
    while stack:
        node = stack.pop()
        node.n0 = node.n
        node.w0 = node.w
        if node.children:
            stack.extend(c for c in node.children if c is not None)


def search(
    root_position: Position,
    oracle,
    cfg: SearchConfig,
    noise: bool = False,
    rng: np.random.Generator | None = None,
    tree: Node | None = None,
) -> SearchResult:
    """Run exactly ``cfg.simulations`` simulations from ``root_position``.

    `oracle` maps a planes batch (N, 2, 8, 8) to (priors (N, 65), values (N,)).
    `tree` optionally warm-starts from a previous search's subtree for the
    same position.  Returns the fresh visit distribution over 65 moves, the
    fresh root value (mover's perspective), and the retained tree.
    """
    if board.is_terminal(root_position):
        raise TerminalRootError("cannot search a terminal position")
    if rng is None:
        rng = np.random.default_rng()

    counters = {"created": 0, "max_depth": 0, "done": 0}

    def evaluate(nodes: list[Node]) -> np.ndarray:
        planes = np.stack([board.encode_planes(n.position) for n in nodes])
        priors, values = oracle(planes)
        for node, p in zip(nodes, priors):
            if not node.expanded:
                _expand(node, p)
                counters["created"] += 1
        return values

    if tree is not None and tree.position == root_position:
        root = tree
        _snapshot_baselines(root)
    else:
        root = Node(root_position)
    if not root.expanded:
        values = evaluate([root])
        root.n = 1
        root.w = float(values[0])
        root.n0 = 0
        root.w0 = 0.0

    root_priors = None
    if noise and cfg.dirichlet_epsilon > 0.0:
        alpha = dirichlet_alpha(len(root.moves))
        x = rng.dirichlet(np.full(len(root.moves), alpha))
        eps = cfg.dirichlet_epsilon
        root_priors = (1.0 - eps) * root.priors + eps * x

    lock = threading.Lock()

    def descend() -> list[Node]:
        path = [root]
        node = root
        while node.expanded and node.terminal_z is None:
            _, node = _select_child(node, cfg.c_puct, root_priors if node is root else None)
            path.append(node)
        _apply_virtual(path, cfg.virtual_loss)
        counters["max_depth"] = max(counters["max_depth"], len(path) - 1)
        return path

    def settle(path: list[Node], value: float) -> None:
        _apply_virtual(path, -cfg.virtual_loss)
        _backup(path, value)

    if cfg.workers <= 1:
        pending: list[list[Node]] = []
        pending_ids: set[int] = set()
        remaining = cfg.simulations

        def flush() -> None:
            if not pending:
                return
            leaves = [p[-1] for p in pending]
            values = evaluate(leaves)
            for p, v in zip(pending, values):
                settle(p, float(v))
            pending.clear()
            pending_ids.clear()

        while remaining > 0 or pending:
            if remaining == 0:
                flush()
                continue
            path = descend()
            leaf = path[-1]
            if leaf.terminal_z is not None:
                settle(path, leaf.terminal_z)
                remaining -= 1
            elif id(leaf) in pending_ids:
                # Collided with a leaf awaiting evaluation: resolve the batch
                # and retry this simulation.
                _apply_virtual(path, -cfg.virtual_loss)
                flush()
            else:
                pending.append(path)
                pending_ids.add(id(leaf))
                remaining -= 1
                if len(pending) >= max(1, cfg.eval_batch):
                    flush()
    else:
        def worker() -> None:
            while True:
                with lock:
                    if counters["done"] >= cfg.simulations:
                        return
                    counters["done"] += 1
                    path = descend()
                    leaf = path[-1]
                    if leaf.terminal_z is not None:
                        settle(path, leaf.terminal_z)
                        continue
                planes = board.encode_planes(leaf.position)[None]
                priors, values = oracle(planes)
                with lock:
                    if not leaf.expanded:
                        _expand(leaf, priors[0])
                        counters["created"] += 1
                    settle(path, float(values[0]))

        threads = [threading.Thread(target=worker) for _ in range(cfg.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    pi = np.zeros(POLICY_SIZE, dtype=np.float64)
    for i, move in enumerate(root.moves):
        child = root.children[i]
        if child is not None:
            pi[move] = child.n - child.n0
    total = pi.sum()
    if total > 0:
        pi /= total
    return SearchResult(
        position=root_position,
        pi=pi,
        q_root=root.fresh_q(),
        simulations=cfg.simulations,
        nodes_created=counters["created"],
        max_depth=counters["max_depth"],
        root=root,
    )


def select_move(
    result: SearchResult,
    move_number: int,
    cfg: SearchConfig,
    rng: np.random.Generator | None = None,
) -> int:
    """Sample from pi for the first `temperature_moves` moves of a game,
    then play argmax(pi) with the lowest square index breaking exact ties."""
    pi = result.pi
    if move_number <= cfg.temperature_moves:
        if rng is None:
            rng = np.random.default_rng()
        return int(rng.choice(POLICY_SIZE, p=pi / pi.sum()))
    return int(np.argmax(pi))


def harvest_visited(result: SearchResult, threshold: int) -> list[HarvestEntry]:
    """Non-root expanded nodes whose fresh visit count meets `threshold`,
    with their fresh child-visit distributions and mean values, sorted by
    visit count descending.

    A node qualifies once at least one simulation continued below it this
    search (its distribution is built from child visits, so a bare expansion
    has nothing to report)."""
    entries: list[HarvestEntry] = []
    stack = [(c, False) for c in (result.root.children or []) if c is not None]
    while stack:
        node, _ = stack.pop()
        if node.children:
            stack.extend((c, False) for c in node.children if c is not None)
        if not node.expanded:
            continue
        fresh = node.fresh_n()
        if fresh < threshold:
            continue
        counts = np.zeros(POLICY_SIZE, dtype=np.float64)
        for i, move in enumerate(node.moves):
            child = node.children[i]
            if child is not None:
                counts[move] = child.n - child.n0
        total = counts.sum()
        if total <= 0:
            continue
        entries.append(
            HarvestEntry(position=node.position, pi=counts / total, q=node.fresh_q(), n=fresh)
        )
    entries.sort(key=lambda e: -e.n)
    return entries


class MctsAgent:
    """A stateful player: searches, commits moves, and optionally carries the
    relevant subtree from one move to the next."""

    def __init__(
        self,
        oracle,
        cfg: SearchConfig,
        rng: np.random.Generator | None = None,
    ):
        self.oracle = oracle
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng()
        self._tree: Node | None = None

    def reset(self) -> None:
        self._tree = None

    def search_position(self, position: Position, noise: bool = False) -> SearchResult:
        tree = self._tree if self.cfg.reuse_tree else None
        result = search(position, self.oracle, self.cfg, noise=noise, rng=self.rng, tree=tree)
        self._tree = result.root
        return result

    def commit_move(self, move: int) -> None:
        """Promote the played move's subtree as the next search's warm start."""
        tree = self._tree
        self._tree = None
        if tree is None or not self.cfg.reuse_tree or tree.children is None:
            return
        try:
            i = tree.moves.index(move)
        except ValueError:
            return
        self._tree = tree.children[i]

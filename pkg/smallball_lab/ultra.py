"""
Ultrametric trees of finite metric spaces and the tree process

    Z(t) = sum_{n=0}^{depth} eps_n g_{theta_n(t)} + eps_depth / sqrt(3) g'_t,    eps_n = 2^-n D,

with one independent coefficient per tree node. The last ("private") term stands for the
levels below the tree depth, so that d_Z(s, t) = sqrt(2/3) eps_{n(s,t)} holds exactly.
"""
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .base.process_model import ProcessModel
from .chaining import MajorizingMeasure, PartitionChain, WeightSequence, mm_lower_exponent
from .covernum import FiniteMetricSpace, greedy_cover
from .errors import ConstructionError, DomainError
from .gaussmath import SeedSpec, block_generator, log_std_normal_interval

import logging
logger = logging.getLogger(__name__)

ZTail = Literal["private", "truncated"]

MAX_DEPTH = 60
EXHAUSTIVE_TRIPLES = 2**8
VERIFY_LIMIT = 2**10
RANDOM_TRIPLES = 200_000
TREE_RTOL = 1e-12


@dataclass
class UltrametricTree:
    """
    centers[n]: point index of each level-n node; parent[n]: level-(n-1) node of each
    level-n node (parent[0] is empty); theta[n, t]: level-n node of point t.
    """
    D: float
    centers: list
    parent: list
    theta: np.ndarray
    report: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def n_points(self) -> int:
        return self.theta.shape[1]

    def eps(self, n):
        return self.D * 2.0 ** -np.asarray(n, dtype=float)

    def n_nodes(self, n: int) -> int:
        return len(self.centers[n])

    def n_common(self, s, t) -> np.ndarray:
        """n(s, t): deepest level at which s and t share a node (broadcasts)."""
        s, t = np.asarray(s), np.asarray(t)
        return (self.theta[:, s] == self.theta[:, t]).sum(axis=0) - 1

    def delta(self, s, t) -> np.ndarray:
        """Ultrametric eps_{n(s,t)}, zero on the diagonal."""
        s, t = np.broadcast_arrays(np.asarray(s), np.asarray(t))
        return np.where(s == t, 0.0, self.eps(self.n_common(s, t)))

    def delta_matrix(self) -> np.ndarray:
        idx = np.arange(self.n_points)
        return self.delta(idx[:, None], idx[None, :])


def _cover_inside(space: FiniteMetricSpace, members: np.ndarray, radius: float) -> tuple[list, np.ndarray]:
    """Greedy cover of a cell by its own points: center point indices and the nearest center of each member."""
    if space.matrix is not None:
        block = space.matrix[np.ix_(members, members)]
    else:
        block = np.vstack([space.row(i)[members] for i in members])
    sub = FiniteMetricSpace.from_matrix(block, ordered=space.ordered)
    centers = sorted(greedy_cover(sub, radius).centers)
    # argmin keeps the lowest index on ties
    return [int(members[c]) for c in centers], np.argmin(block[centers], axis=0)


def build_ultrametric_tree(
    space: FiniteMetricSpace,
    depth: int | None = None,
    strict: bool = False,
    verify: bool = True,
) -> UltrametricTree:
    """
    Top-down tree: level-n nodes are greedy covers at radius eps_n of each level-(n-1)
    cell by its own points, every point attached to its nearest center inside its cell.
    Levels nest by construction and d(t, theta_n(t)) <= eps_n.

    Args:
        space (FiniteMetricSpace): The space.
        depth (int | None): Number of levels below the root; by default the first level
            where every cell is a singleton (capped at MAX_DEPTH).
        strict (bool): Raise on embedding sandwich violations instead of reporting them.
        verify (bool): Check the tree invariants (exhaustively up to VERIFY_LIMIT points).

    Returns:
        UltrametricTree: The tree, with the verification results in `report`.
    """
    D = space.diameter()
    N = space.n_points
    if depth is None:
        if D == 0 or N == 1:
            depth = 1
        else:
            positive = (space.matrix[space.matrix > 0] if space.matrix is not None else
                        np.concatenate([space.row(i)[space.row(i) > 0] for i in range(N)]))
            depth = min(MAX_DEPTH, int(np.ceil(np.log2(D / positive.min()))) + 1)
    if depth < 1:
        raise DomainError(f"Tree depth must be >= 1, got {depth}.")

    theta = np.zeros((depth + 1, N), dtype=np.int64)
    centers = [[0]]
    parent = [np.zeros(0, dtype=np.int64)]
    for n in range(1, depth + 1):
        radius = D * 2.0**-n
        level_centers, level_parent = [], []
        for node in range(len(centers[n - 1])):
            members = np.flatnonzero(theta[n - 1] == node)
            if D == 0:
                cell_centers, labels = [int(members[0])], np.zeros(members.size, dtype=np.int64)
            else:
                cell_centers, labels = _cover_inside(space, members, radius)
            theta[n, members] = len(level_centers) + labels
            level_centers.extend(cell_centers)
            level_parent.extend([node] * len(cell_centers))
        centers.append(level_centers)
        parent.append(np.asarray(level_parent, dtype=np.int64))

    tree = UltrametricTree(D=D, centers=centers, parent=parent, theta=theta)
    if verify:
        tree.report = verify_tree(tree, space, strict=strict)
    logger.info(f"Ultrametric tree on {N} points, depth {depth}: nodes per level {[len(c) for c in centers][:10]}")
    return tree


def verify_tree(tree: UltrametricTree, space: FiniteMetricSpace, strict: bool = False, seed: int = 0) -> dict:
    """
    Checks projectivity, center distances and the strong triangle inequality (raising
    ConstructionError), and the embedding sandwich delta/2 <= d <= delta (raising only
    when `strict`). Returns the counts.
    """
    N = tree.n_points
    for n in range(1, tree.depth + 1):
        if not np.array_equal(tree.parent[n][tree.theta[n]], tree.theta[n - 1]):
            raise ConstructionError(f"Tree level {n} is not projected onto level {n - 1} by its parent map.")
    for n in range(tree.depth + 1):
        center_pts = np.asarray(tree.centers[n])[tree.theta[n]]
        d_center = np.array([space.row(c)[t] for t, c in enumerate(center_pts)]) if N <= VERIFY_LIMIT else None
        if d_center is not None and np.any(d_center > tree.eps(n) * (1 + TREE_RTOL)):
            raise ConstructionError(f"A point is farther than eps_{n} from its level-{n} center.")

    report = {"n_points": N, "depth": tree.depth, "nodes_per_level": [len(c) for c in tree.centers]}

    delta = tree.delta_matrix() if N <= VERIFY_LIMIT else None
    violations = 0
    if delta is not None and N <= EXHAUSTIVE_TRIPLES:
        for u in range(N):
            violations += int(np.sum(delta > np.maximum(delta[:, u][:, None], delta[u][None, :]) * (1 + TREE_RTOL)))
        report["triples_checked"] = N**3
    else:
        rng = block_generator(SeedSpec(seed, 0))
        s, t, u = rng.integers(0, N, size=(3, RANDOM_TRIPLES))
        violations = int(np.sum(tree.delta(s, t) > np.maximum(tree.delta(s, u), tree.delta(u, t)) * (1 + TREE_RTOL)))
        report["triples_checked"] = RANDOM_TRIPLES
    if violations:
        raise ConstructionError(f"Strong triangle inequality fails on {violations} triples.")
    report["strong_triangle_violations"] = 0

    if delta is not None:
        d = space.matrix if space.matrix is not None else np.vstack([space.row(i) for i in range(N)])
        off = ~np.eye(N, dtype=bool)
        upper = int(np.sum(d[off] > delta[off] * (1 + TREE_RTOL)))
        lower = int(np.sum(d[off] < 0.5 * delta[off] * (1 - TREE_RTOL)))
        report["sandwich_upper_violations"] = upper
        report["sandwich_lower_violations"] = lower
        if strict and (upper or lower):
            raise ConstructionError(
                f"Embedding sandwich fails: {upper} pairs above delta, {lower} pairs below delta / 2."
            )

    report["first_non_splitting_level"] = _first_non_splitting_level(tree)
    return report


def _first_non_splitting_level(tree: UltrametricTree) -> int | None:
    """First level n >= 1 where some node with several points has a single child."""
    for n in range(1, tree.depth + 1):
        sizes = np.bincount(tree.theta[n - 1], minlength=tree.n_nodes(n - 1))
        children = np.bincount(tree.parent[n], minlength=tree.n_nodes(n - 1))
        if np.any((sizes > 1) & (children < 2)):
            return n
    return None


# ----tree process----

def _cum_eps2(tree: UltrametricTree) -> np.ndarray:
    return np.cumsum(tree.eps(np.arange(tree.depth + 1)) ** 2)


def _suffix_eps2(tree: UltrametricTree) -> np.ndarray:
    """S[n] = sum_{n < m <= depth} eps_m^2, summed from the finest level."""
    e2 = tree.eps(np.arange(tree.depth + 1)) ** 2
    return np.append(np.cumsum(e2[::-1])[::-1][1:], 0.0)


def _tail_var(tree: UltrametricTree, tail: ZTail) -> float:
    return float(tree.eps(tree.depth) ** 2 / 3) if tail == "private" else 0.0


def z_covariance(tree: UltrametricTree, s, t, tail: ZTail = "private"):
    """E Z(s) Z(t) = sum_{n <= n(s,t)} eps_n^2, plus the private tail variance when s = t."""
    s, t = np.broadcast_arrays(np.asarray(s), np.asarray(t))
    cov = _cum_eps2(tree)[tree.n_common(s, t)] + np.where(s == t, _tail_var(tree, tail), 0.0)
    return float(cov) if cov.ndim == 0 else cov


def z_distance(tree: UltrametricTree, s, t, tail: ZTail = "private"):
    """d_Z(s, t) = (E (Z(s) - Z(t))^2)^(1/2)."""
    s, t = np.broadcast_arrays(np.asarray(s), np.asarray(t))
    n = tree.n_common(s, t)
    var = 2 * (_suffix_eps2(tree)[n] + _tail_var(tree, tail))
    out = np.where(s == t, 0.0, np.sqrt(var))
    return float(out) if out.ndim == 0 else out


def z_sigma(tree: UltrametricTree, tail: ZTail = "private") -> float:
    """sup_t ||Z(t)||_2; 2D/sqrt(3) with the private tail."""
    return float(np.sqrt(_cum_eps2(tree)[-1] + _tail_var(tree, tail)))


class UltrametricZ(ProcessModel):
    """Z on the points of a tree; grid points are point indices."""

    kind = "UltrametricZ"

    def __init__(self, tree: UltrametricTree, tail: ZTail = "private"):
        if tail not in ("private", "truncated"):
            raise ConstructionError(f"UltrametricZ.tail must be 'private' or 'truncated', got {tail!r}.")
        self.tree = tree
        self.tail = tail
        self._offsets = np.concatenate([[0], np.cumsum([len(c) for c in tree.centers])])

    def default_grid(self) -> np.ndarray:
        return np.arange(self.tree.n_points)

    def _indices(self, grid) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(grid))
        if idx.size and (np.any(idx != np.floor(idx)) or idx.min() < 0 or idx.max() >= self.tree.n_points):
            raise DomainError(f"Tree points are indices in [0, {self.tree.n_points}).")
        return idx.astype(np.int64)

    def basis(self, grid) -> np.ndarray:
        idx = self._indices(grid)
        tree = self.tree
        n_nodes = int(self._offsets[-1])
        n_cols = n_nodes + (tree.n_points if self.tail == "private" else 0)
        B = np.zeros((idx.size, n_cols))
        rows = np.arange(idx.size)
        for n in range(tree.depth + 1):
            B[rows, self._offsets[n] + tree.theta[n, idx]] = tree.eps(n)
        if self.tail == "private":
            B[rows, n_nodes + idx] = np.sqrt(_tail_var(tree, self.tail))
        return B

    def intrinsic_distance(self, s, t) -> float:
        s, t = self._indices([s, t])
        return z_distance(self.tree, s, t, self.tail)

    def sup_sigma(self, grid) -> float:
        self._indices(grid)
        return z_sigma(self.tree, self.tail)

    def parameters(self) -> dict:
        return {
            "kind": self.kind,
            "tail": self.tail,
            "D": self.tree.D,
            "depth": self.tree.depth,
            "n_points": self.tree.n_points,
        }


def sample_z(tree: UltrametricTree, n_paths: int, seed: SeedSpec, tail: ZTail = "private", n_workers: int = 1) -> np.ndarray:
    """Paths of Z on every point of the tree, shape (n_paths, n_points)."""
    model = UltrametricZ(tree, tail)
    return model.sample_paths(model.default_grid(), n_paths, seed, n_workers=n_workers)


def sibling_pairs(tree: UltrametricTree, n: int) -> list[tuple[int, int]]:
    """
    floor(N_n / 2) pairs of level-n nodes, as their center points, whose difference
    paths share no tree node.

    Children are paired inside each parent; an odd one out is handed up and paired
    at the next ancestor. A node lies on the handed-up path of at most one pair.
    """
    if not 0 <= n <= tree.depth:
        raise DomainError(f"Level must lie in [0, {tree.depth}], got {n}.")
    pairs = []
    # leftover representative (a level-n node) per node of the current level
    leftover = {node: node for node in range(tree.n_nodes(n))}
    for level in range(n, 0, -1):
        by_parent: dict[int, list] = {}
        for node, rep in leftover.items():
            by_parent.setdefault(int(tree.parent[level][node]), []).append(rep)
        leftover = {}
        for par, reps in sorted(by_parent.items()):
            reps = sorted(reps)
            for a, b in zip(reps[0::2], reps[1::2]):
                pairs.append((a, b))
            if len(reps) % 2:
                leftover[par] = reps[-1]
    return [(int(tree.centers[n][a]), int(tree.centers[n][b])) for a, b in pairs]


def pair_difference_covariance(tree: UltrametricTree, pairs: list, tail: ZTail = "private") -> np.ndarray:
    """Covariance matrix of Z(x_i) - Z(y_i) over the pairs."""
    if not pairs:
        return np.zeros((0, 0))
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    c_xx = z_covariance(tree, x[:, None], x[None, :], tail)
    c_xy = z_covariance(tree, x[:, None], y[None, :], tail)
    c_yx = z_covariance(tree, y[:, None], x[None, :], tail)
    c_yy = z_covariance(tree, y[:, None], y[None, :], tail)
    return (c_xx - c_xy) - (c_yx - c_yy)


@dataclass
class ZUpperBound:
    log_value: float
    level: int
    n_pairs: int
    pair_sd: list
    max_offdiag: float


def z_small_ball_upper(tree: UltrametricTree, epsilon: float, tail: ZTail = "private") -> ZUpperBound:
    """
    log P{sup_{s,t} |Z(s) - Z(t)| <= eps} <= sum_i log P{|g| <= eps_n / v_i}, with n the level
    where eps_{n+1} < eps <= eps_n and v_i the standard deviations of the independent
    sibling differences at level n.

    Raises:
        DomainError: if eps > D or eps <= 0.
        ConstructionError: if the sibling differences are not exactly uncorrelated.
    """
    if not 0 < epsilon <= tree.D * (1 + TREE_RTOL):
        raise DomainError(f"Radius must lie in (0, D = {tree.D}], got {epsilon}.")
    n = min(tree.depth, int(np.floor(np.log2(tree.D / epsilon) + TREE_RTOL)))
    pairs = sibling_pairs(tree, n)
    if not pairs:
        return ZUpperBound(log_value=0.0, level=n, n_pairs=0, pair_sd=[], max_offdiag=0.0)
    C = pair_difference_covariance(tree, pairs, tail)
    off = C - np.diag(np.diag(C))
    max_off = float(np.abs(off).max())
    if max_off > 0:
        raise ConstructionError(f"Sibling differences at level {n} are correlated (max |cov| {max_off:.3e}).")
    sd = np.sqrt(np.diag(C))
    log_value = float(np.sum(log_std_normal_interval(tree.eps(n) / sd)))
    return ZUpperBound(log_value=log_value, level=n, n_pairs=len(pairs), pair_sd=sd.tolist(), max_offdiag=max_off)


def tree_chain(tree: UltrametricTree) -> PartitionChain:
    """
    Cells are the same-node classes per level. Inside a level-n cell d_Z <= sqrt(2/3) eps_n,
    so the chain scale is sqrt(2/3) D.
    """
    return PartitionChain(levels=[tree.theta[n].copy() for n in range(tree.depth + 1)], D=np.sqrt(2 / 3) * tree.D)


def z_small_ball_lower(
    tree: UltrametricTree,
    mu: MajorizingMeasure | None,
    v: WeightSequence | None,
    epsilon: float,
    tail: ZTail = "private",
) -> float:
    """
    N_{n(eps)} log(1/eps) from the tree chain with sigma = sup ||Z||_2:
    P{sup |Z| <= 2 eps sigma} >= C exp(-this).
    """
    mu = mu or MajorizingMeasure.uniform(tree.n_points)
    v = v or WeightSequence.squares()
    return mm_lower_exponent(tree_chain(tree), mu, v, epsilon, z_sigma(tree, tail))


def z_oscillation_mc(
    tree: UltrametricTree,
    epsilon: float,
    n_paths: int,
    seed: SeedSpec,
    tail: ZTail = "private",
    n_workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo P{max Z - min Z <= eps} over the tree points; returns (p_hat, std_err)."""
    if n_paths < 1:
        raise DomainError(f"Monte Carlo needs at least one sample, got {n_paths}.")
    model = UltrametricZ(tree, tail)
    hits = 0
    for paths in model.iter_path_blocks(model.default_grid(), n_paths, seed, n_workers=n_workers):
        hits += int(np.sum(paths.max(axis=1) - paths.min(axis=1) <= epsilon))
    p_hat = hits / n_paths
    return p_hat, float(np.sqrt(p_hat * (1 - p_hat) / n_paths))


# ----test spaces----

def hierarchical_space(
    branching: int = 3,
    depth: int = 5,
    D: float = 1.0,
    seed: int = 0,
    min_branching: int = 1,
) -> FiniteMetricSpace:
    """
    Random ultrametric space: leaves of a random tree whose nodes have between
    `min_branching` and `branching` children (the root at least 2). Leaves split at
    tree depth j are at distance u D 2^-j, u uniform in (1/2, 1], with u = 1 at the root.
    """
    if branching < 2 or depth < 1 or not 1 <= min_branching <= branching:
        raise DomainError(f"Invalid hierarchy branching={branching}, min_branching={min_branching}, depth={depth}.")
    rng = block_generator(SeedSpec(seed, 0))
    # paths[i] = (node id per depth) of leaf i
    paths = [[0]]
    heights = {(0, 0): D}
    next_id = [1] * (depth + 1)
    for j in range(depth):
        new_paths = []
        for path in paths:
            lo = 2 if j == 0 else min_branching
            k = int(rng.integers(lo, branching + 1))
            for _ in range(k):
                node = next_id[j + 1]
                next_id[j + 1] += 1
                if j + 1 < depth:
                    heights[(j + 1, node)] = float(1.0 - 0.5 * rng.random()) * D * 2.0 ** -(j + 1)
                new_paths.append(path + [node])
        paths = new_paths
    P = np.asarray(paths)
    lca = (P[:, None, :] == P[None, :, :]).sum(axis=2) - 1
    d = np.zeros(lca.shape)
    for (j, node), h in heights.items():
        on = (lca == j) & (P[:, None, j] == node)
        d[on] = h
    np.fill_diagonal(d, 0.0)
    return FiniteMetricSpace.from_matrix(d, labels=P)


def balanced_tree_space(b: int = 3, depth: int = 5, D: float = 1.0) -> FiniteMetricSpace:
    """Leaves of the balanced b-ary tree with d = D 2^-j for leaves split at depth j."""
    if b < 2 or depth < 1:
        raise DomainError(f"Invalid balanced tree b={b}, depth={depth}.")
    leaves = np.arange(b**depth)
    digits = np.stack([leaves // b ** (depth - 1 - j) % b for j in range(depth)], axis=1)
    same = np.cumprod(digits[:, None, :] == digits[None, :, :], axis=2).sum(axis=2)
    d = D * 2.0 ** -same.astype(float)
    np.fill_diagonal(d, 0.0)
    return FiniteMetricSpace.from_matrix(d, labels=digits)


# ----serialization----

def tree_to_json(tree: UltrametricTree) -> dict:
    return {
        "D": tree.D,
        "depth": tree.depth,
        "eps": tree.eps(np.arange(tree.depth + 1)).tolist(),
        "centers": [list(map(int, c)) for c in tree.centers],
        "parent": [p.tolist() for p in tree.parent],
        "theta": tree.theta.tolist(),
        "report": tree.report,
    }


def tree_from_json(data: dict) -> UltrametricTree:
    try:
        tree = UltrametricTree(
            D=float(data["D"]),
            centers=[list(c) for c in data["centers"]],
            parent=[np.asarray(p, dtype=np.int64) for p in data["parent"]],
            theta=np.asarray(data["theta"], dtype=np.int64),
            report=dict(data.get("report", {})),
        )
    except KeyError as e:
        raise ConstructionError(f"Tree JSON misses {e}.") from e
    if len(tree.centers) != tree.depth + 1 or len(tree.parent) != tree.depth + 1:
        raise ConstructionError("Tree JSON levels are inconsistent with theta.")
    return tree

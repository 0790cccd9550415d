"""
Finite metric spaces, greedy covers and packings, entropy curves and log-log fits.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from scipy.stats import linregress

from .errors import ConstructionError, DomainError

import logging
logger = logging.getLogger(__name__)

# spaces up to this size are materialized as a full distance matrix
MATRIX_LIMIT = 2**13
# relative tolerance of metric checks
METRIC_RTOL = 1e-9


class FiniteMetricSpace:
    """
    n points with a symmetric distance, either a materialized matrix or a row callback
    `row(i) -> distances from point i to every point`.

    `ordered` marks spaces indexed along a line (grids of [0, 1] in increasing order);
    covers of those are built by a line sweep.
    """

    def __init__(
        self,
        n_points: int,
        row: Callable[[int], np.ndarray],
        labels=None,
        matrix: np.ndarray | None = None,
        ordered: bool = False,
    ):
        if n_points < 1:
            raise ConstructionError(f"A metric space needs at least one point, got {n_points}.")
        self.n_points = int(n_points)
        self._row = row
        self.matrix = matrix
        self.labels = labels
        self.ordered = ordered

    @classmethod
    def from_matrix(cls, matrix, labels=None, ordered: bool = False) -> "FiniteMetricSpace":
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ConstructionError(f"Distance matrix must be square, got shape {M.shape}.")
        return cls(M.shape[0], lambda i: M[i], labels=labels, matrix=M, ordered=ordered)

    @classmethod
    def from_points(cls, points, metric="euclidean", labels=None, ordered: bool | None = None) -> "FiniteMetricSpace":
        """
        Points (n,) or (n, dim) with a scipy `cdist` metric name, or a callable on pairs of
        point arrays returning their elementwise distances. One-dimensional sorted points
        are `ordered` unless told otherwise.
        """
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if ordered is None:
            ordered = X.shape[1] == 1 and bool(np.all(np.diff(X[:, 0]) >= 0))
        if callable(metric):
            def row(i):
                return np.asarray(metric(np.repeat(X[i:i + 1], len(X), axis=0), X), dtype=float).reshape(-1)
        else:
            def row(i):
                return cdist(X[i:i + 1], X, metric=metric)[0]
        return cls._maybe_materialize(len(X), row, labels, ordered)

    @classmethod
    def from_basis(cls, basis, labels=None, ordered: bool = False) -> "FiniteMetricSpace":
        """Rows of a coefficient matrix with the L2 distance, i.e. the intrinsic metric of a series."""
        B = np.asarray(basis, dtype=float)
        return cls._maybe_materialize(B.shape[0], lambda i: cdist(B[i:i + 1], B)[0], labels, ordered)

    @classmethod
    def _maybe_materialize(cls, n, row, labels, ordered) -> "FiniteMetricSpace":
        if n <= MATRIX_LIMIT:
            return cls.from_matrix(np.vstack([row(i) for i in range(n)]), labels=labels, ordered=ordered)
        return cls(n, row, labels=labels, ordered=ordered)

    def row(self, i: int) -> np.ndarray:
        return self._row(int(i))

    def dist(self, i: int, j: int) -> float:
        return float(self.row(i)[j])

    @cached_property
    def n_distinct(self) -> int:
        """Number of points after merging those at distance zero, as a pseudometric allows."""
        return len(greedy_packing(self, 0.0))

    def diameter(self) -> float:
        if self.matrix is not None:
            return float(self.matrix.max())
        return float(max(self.row(i).max() for i in range(self.n_points)))

    def check_metric(self, n_triples: int = 2000, seed: int = 0) -> int:
        """
        Verifies zero diagonal and symmetry on sampled pairs, and counts triangle
        inequality violations on `n_triples` random triples.

        Raises:
            ConstructionError: on a nonzero diagonal or an asymmetric pair.
        """
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, self.n_points, size=(n_triples, 3))
        violations = 0
        for i, j, k in idx:
            ri, rj = self.row(i), self.row(j)
            scale = max(ri.max(), 1.0)
            if abs(ri[i]) > METRIC_RTOL * scale:
                raise ConstructionError(f"Distance of point {i} to itself is {ri[i]}.")
            if abs(ri[j] - rj[i]) > METRIC_RTOL * scale:
                raise ConstructionError(f"Distance is not symmetric at ({i}, {j}): {ri[j]} vs {rj[i]}.")
            if ri[k] > ri[j] + rj[k] + METRIC_RTOL * scale:
                violations += 1
        if violations:
            logger.warning(f"Triangle inequality fails on {violations} of {n_triples} sampled triples")
        return violations


@dataclass
class CoveringResult:
    epsilon: float
    n_cover: int
    centers: list = field(repr=False)
    n_packing: int
    packing_points: list = field(repr=False)


def _next_uncovered(uncovered: np.ndarray, i: int) -> int:
    nxt = np.flatnonzero(uncovered[i:])
    return i + int(nxt[0]) if nxt.size else len(uncovered)


def greedy_packing(space: FiniteMetricSpace, epsilon: float) -> list:
    """
    Maximal epsilon-separated set by greedy insertion in index order.

    A point joins when it is more than epsilon from every earlier member, i.e. when no
    earlier member covers it, so the packing is also a cover of radius epsilon.
    """
    uncovered = np.ones(space.n_points, dtype=bool)
    points = []
    i = 0
    while i < space.n_points:
        points.append(i)
        uncovered &= space.row(i) > epsilon
        i = _next_uncovered(uncovered, i + 1)
    return points


def _line_sweep_centers(space: FiniteMetricSpace, epsilon: float) -> list:
    # first uncovered x; the center is pushed right while it stays within epsilon of x
    uncovered = np.ones(space.n_points, dtype=bool)
    centers = []
    x = 0
    while x < space.n_points:
        far = np.flatnonzero(space.row(x)[x:] > epsilon)
        c = x + (int(far[0]) - 1 if far.size else space.n_points - 1 - x)
        centers.append(c)
        uncovered &= space.row(c) > epsilon
        uncovered[x] = False
        x = _next_uncovered(uncovered, x + 1)
    return centers


def greedy_cover(space: FiniteMetricSpace, epsilon: float) -> CoveringResult:
    """
    Cover and packing brackets of the covering number at radius epsilon.

    The packing is the greedy index-order epsilon-packing. On ordered spaces the cover
    comes from a line sweep (optimal for metrics increasing in |s - t|), elsewhere it is
    the packing itself; the smaller valid cover is kept, so
    n_packing(2 eps) <= N(eps) <= n_cover(eps) <= n_packing(eps).

    Raises:
        DomainError: if epsilon is not positive.
    """
    if not epsilon > 0:
        raise DomainError(f"Covering radius must be positive, got {epsilon}.")
    packing = greedy_packing(space, epsilon)
    centers = packing
    if space.ordered:
        swept = _line_sweep_centers(space, epsilon)
        if len(swept) < len(packing):
            centers = swept
    return CoveringResult(
        epsilon=float(epsilon),
        n_cover=len(centers),
        centers=list(centers),
        n_packing=len(packing),
        packing_points=packing,
    )


def dyadic_epsilons(D: float, j_max: int) -> np.ndarray:
    """eps_j = 2^(-j) D for j = 0..j_max, descending."""
    return D * 2.0 ** -np.arange(j_max + 1)


def entropy_curve(
    space: FiniteMetricSpace,
    epsilon_list,
    saturation_fraction: float = 1 / 16,
    n_workers: int = 1,
) -> pd.DataFrame:
    """
    Covering and packing counts per radius.

    Args:
        space (FiniteMetricSpace): The space.
        epsilon_list: Positive radii, sorted descending.
        saturation_fraction (float): Rows with n_cover above this fraction of the distinct
            points are flagged `saturated`; the grid no longer resolves that scale. Points at
            distance zero count once, so periodic processes on long grids saturate early.
        n_workers (int): Threads computing radii in parallel.

    Returns:
        pd.DataFrame: Columns epsilon, n_cover, n_packing, n_packing_2eps, saturated.
    """
    eps = np.asarray(epsilon_list, dtype=float)
    if eps.size == 0:
        raise DomainError("Entropy curve needs at least one radius.")
    if np.any(eps <= 0):
        raise DomainError("Entropy curve radii must be positive.")
    if np.any(np.diff(eps) > 0):
        raise DomainError("Entropy curve radii must be sorted descending.")

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            results = list(executor.map(lambda e: greedy_cover(space, e), eps))
            doubled = list(executor.map(lambda e: len(greedy_packing(space, 2 * e)), eps))
    else:
        results = [greedy_cover(space, e) for e in eps]
        doubled = [len(greedy_packing(space, 2 * e)) for e in eps]

    df = pd.DataFrame({
        "epsilon": eps,
        "n_cover": [r.n_cover for r in results],
        "n_packing": [r.n_packing for r in results],
        "n_packing_2eps": doubled,
    })
    # a cover at a smaller radius is a cover at every larger one
    df["n_cover"] = np.minimum.accumulate(df["n_cover"].to_numpy()[::-1])[::-1]
    df["saturated"] = df["n_cover"] > saturation_fraction * space.n_distinct
    logger.info(
        f"Entropy curve on {space.n_distinct} distinct of {space.n_points} points: "
        f"{len(df)} radii, {int(df['saturated'].sum())} saturated"
    )
    return df


class LoglogFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_loglog_slope(points, x_range: tuple | None = None) -> LoglogFit:
    """
    Least squares fit of log y against log x over the points with x in `x_range`.

    Raises:
        DomainError: if fewer than 3 points with positive coordinates remain.
    """
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = arr[:, 0], arr[:, 1]
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if x_range is not None:
        keep &= (x >= x_range[0]) & (x <= x_range[1])
    if keep.sum() < 3:
        raise DomainError(f"Log-log fit needs at least 3 usable points, got {int(keep.sum())}.")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if np.ptp(ly) == 0:
        return LoglogFit(slope=0.0, intercept=float(ly[0]), r_squared=1.0, n_points=int(keep.sum()))
    res = linregress(lx, ly)
    return LoglogFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue**2),
        n_points=int(keep.sum()),
    )

"""
Nested partition chains, majorizing measures and the tail functional

    H(n) = sup_t sum_{m>n} 2^(-m) D (log(v(m) / mu(pi_m(t))))^(1/2),

which decides the level n(eps) and the exponent N_{n(eps)} log(1/eps) of the
small-ball lower bound. Includes the interval chain with its integral bound and the
closed-form sieve chain of the independent sequence g_n / phi(n).
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.special import polygamma

from .covernum import FiniteMetricSpace, greedy_cover
from .errors import ChainDepthError, ConstructionError, DomainError
from .weights import EXACT_LOG_LIMIT, SequenceWeight

import logging
logger = logging.getLogger(__name__)

DEFAULT_DEPTH = 40
# points of the finite restriction returned by sieve_chain_for_sequence
DEFAULT_SIEVE_N_MAX = 500
# levels summed beyond the chain depth for the tail certificate
MAX_TAIL_LEVELS = 1000
TAIL_RTOL = 1e-16
CHAIN_RTOL = 1e-9


@dataclass(frozen=True)
class WeightSequence:
    """Level weights v(m) > 0 with sum 1/v(m) finite, given through log v."""
    log_v: Callable = field(compare=False)
    name: str = "custom"

    @classmethod
    def squares(cls) -> "WeightSequence":
        return cls(lambda m: 2 * np.log(np.asarray(m, dtype=float)), name="m^2")

    @classmethod
    def modulus(cls, omega: Callable, D: float) -> "WeightSequence":
        """v(m) = 1 / omega(2^-m D) for an increasing modulus omega."""
        with np.errstate(divide="ignore"):
            return cls(lambda m: -np.log(omega(D * 2.0 ** -np.asarray(m, dtype=float))), name="1/omega")

    def log_value(self, m):
        return self.log_v(m)

    def summable(self, m_max: int = 2000, q: float = 1.5) -> tuple[float, float]:
        """
        Partial sum of 1/v(m) up to m_max and a tail bound, valid when v(m)/m^q is
        nondecreasing (checked on the range) for the given q > 1.
        """
        m = np.arange(1, m_max + 1, dtype=float)
        log_v = np.asarray(self.log_value(m), dtype=float)
        if np.any(~np.isfinite(log_v[: m_max // 2])):
            raise DomainError(f"Weight sequence {self.name} is not finite on levels 1..{m_max // 2}.")
        finite = np.isfinite(log_v)
        if np.any(np.diff(log_v[finite] - q * np.log(m[finite])) < -1e-12):
            raise DomainError(f"Weight sequence {self.name}: v(m)/m^{q} is not nondecreasing, no tail certificate.")
        terms = np.exp(-log_v[finite])
        last = int(m[finite][-1])
        return float(terms.sum()), float(terms[-1] * last / (q - 1))


@dataclass
class MajorizingMeasure:
    """Probability weights over the points of a finite index set."""
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.isfinite(w).all():
            raise ConstructionError("Majorizing measure weights must be a nonnegative finite vector.")
        total = w.sum()
        if not total > 0:
            raise ConstructionError("Majorizing measure has zero total mass.")
        self.weights = w / total

    @classmethod
    def uniform(cls, n_points: int) -> "MajorizingMeasure":
        return cls(np.full(n_points, 1.0 / n_points))


@dataclass
class PartitionChain:
    """
    levels[n] labels the cell of every point at level n (0..depth); level 0 is one cell.
    Cells at level n have diameter at most 2^-n D.
    """
    levels: list
    D: float

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def n_points(self) -> int:
        return len(self.levels[0])

    def n_cells(self, n: int) -> int:
        return int(self.levels[min(n, self.depth)].max()) + 1

    def cell_of(self, t: int, n: int) -> np.ndarray:
        """Indices of the points sharing the level-n cell of point t."""
        labels = self.levels[min(n, self.depth)]
        return np.flatnonzero(labels == labels[t])

    def cells(self, n: int) -> list:
        labels = self.levels[min(n, self.depth)]
        order = np.argsort(labels, kind="stable")
        bounds = np.flatnonzero(np.diff(labels[order])) + 1
        return np.split(order, bounds)

    @property
    def log_n_cells(self) -> np.ndarray:
        return np.log([self.n_cells(n) for n in range(self.depth + 1)])

    def verify(self, space: FiniteMetricSpace | None = None) -> None:
        """
        Checks nestedness and, given the space, the cell diameters.

        Raises:
            ConstructionError: on a cell that straddles two parents or is too wide.
        """
        for n in range(1, self.depth + 1):
            pairs = np.unique(np.column_stack([self.levels[n - 1], self.levels[n]]), axis=0)
            if len(pairs) != self.n_cells(n):
                raise ConstructionError(f"Partition level {n} does not refine level {n - 1}.")
            if space is None:
                continue
            bound = 2.0**-n * self.D * (1 + CHAIN_RTOL)
            for cell in self.cells(n):
                if cell.size < 2:
                    continue
                if space.matrix is not None:
                    diam = space.matrix[np.ix_(cell, cell)].max()
                else:
                    diam = max(space.row(i)[cell].max() for i in cell)
                if diam > bound:
                    raise ConstructionError(
                        f"Cell of {cell.size} points at level {n} has diameter {diam:.6g} > 2^-{n} D = {bound:.6g}."
                    )


def _refine(previous: np.ndarray, labels: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(np.column_stack([previous, labels]), axis=0, return_inverse=True)
    return inverse.reshape(-1).astype(np.int64)


def _nearest_center(space: FiniteMetricSpace, centers: list) -> np.ndarray:
    best = np.full(space.n_points, np.inf)
    labels = np.zeros(space.n_points, dtype=np.int64)
    # ascending order with strict improvement keeps the lowest index on ties
    for k, c in enumerate(sorted(centers)):
        row = space.row(c)
        closer = row < best
        best[closer] = row[closer]
        labels[closer] = k
    return labels


def build_partition_chain(space: FiniteMetricSpace, depth: int, verify: bool = True) -> PartitionChain:
    """
    Level n: greedy cover at radius 2^(-n-1) D, nearest-center cells, intersected with
    level n-1 so the levels nest.
    """
    if depth < 1:
        raise DomainError(f"Partition chain depth must be >= 1, got {depth}.")
    D = space.diameter()
    levels = [np.zeros(space.n_points, dtype=np.int64)]
    for n in range(1, depth + 1):
        previous = levels[-1]
        if D == 0 or int(previous.max()) + 1 == space.n_points:
            levels.append(previous.copy())
            continue
        cover = greedy_cover(space, 2.0 ** (-n - 1) * D)
        levels.append(_refine(previous, _nearest_center(space, cover.centers)))
    chain = PartitionChain(levels=levels, D=D)
    if verify:
        chain.verify(space)
    logger.info(f"Partition chain on {space.n_points} points: {[chain.n_cells(n) for n in range(depth + 1)][:12]} cells")
    return chain


def interval_chain(points, delta_inverse: Callable, depth: int, D: float = 1.0) -> PartitionChain:
    """
    Chain on sorted points of an interval: level m splits into consecutive blocks of
    length delta_inverse(2^-m D), intersected with level m-1. Cells have d-diameter at
    most 2^-m D whenever d(s, t) <= delta(|s - t|) with delta increasing.
    """
    t = np.asarray(points, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) < 0):
        raise DomainError("Interval chain needs sorted one-dimensional points.")
    if depth < 1:
        raise DomainError(f"Partition chain depth must be >= 1, got {depth}.")
    levels = [np.zeros(t.size, dtype=np.int64)]
    for m in range(1, depth + 1):
        length = float(delta_inverse(2.0**-m * D))
        if not length > 0:
            raise DomainError(f"delta_inverse(2^-{m} D) must be positive, got {length}.")
        blocks = np.floor((t - t[0]) / length).astype(np.int64)
        levels.append(_refine(levels[-1], blocks))
    return PartitionChain(levels=levels, D=D)


class HCurve(NamedTuple):
    """H(n) restricted to levels up to the chain depth, n = 0..depth, and a certified bound on the rest."""
    values: np.ndarray
    tail_bound: float
    log_n_cells: np.ndarray

    def certified(self, n: int) -> float:
        """Upper bound on H(n)."""
        return float(self.values[min(n, len(self.values) - 1)] + self.tail_bound)


def _level_tail(D: float, log_ratio_of: Callable, start: int) -> float:
    """
    Bound on sum_{m>start} 2^-m D sqrt(log_ratio_of(m)). Terms are summed until they are
    negligible; the remainder is closed geometrically, or with a power law for slowly
    decaying terms. Returns inf when neither applies within MAX_TAIL_LEVELS.
    """
    total = 0.0
    terms = []
    for m in range(start + 1, start + MAX_TAIL_LEVELS + 1):
        log_ratio = float(log_ratio_of(m))
        if not np.isfinite(log_ratio):
            break
        term = 2.0**-m * D * np.sqrt(max(log_ratio, 0.0))
        total += term
        terms.append(term)
        if len(terms) >= 8 and term <= TAIL_RTOL * total:
            ratio = max(terms[-i] / terms[-i - 1] for i in range(1, 5) if terms[-i - 1] > 0)
            if ratio < 0.95:
                return total + term * ratio / (1 - ratio)
    if len(terms) >= 8 and terms[-2] > 0 and terms[-1] > 0:
        m_last = start + len(terms)
        ratio = terms[-1] / terms[-2]
        if ratio < 0.95:
            return total + terms[-1] * ratio / (1 - ratio)
        s = -np.log(ratio) / np.log(m_last / (m_last - 1))
        if s > 1.05:
            logger.warning(f"Chain tail decays like m^-{s:.2f}; remainder closed by a power law")
            return total + terms[-1] * m_last / (s - 1)
    logger.warning("Chain tail does not converge within the computed levels")
    return np.inf


def h_curve(chain, mu: MajorizingMeasure | None, v: WeightSequence, depth_cutoff: int | None = None) -> HCurve:
    """
    H(n) for n = 0..L, L the depth cutoff, summing levels n < m <= L exactly; levels
    beyond L are bounded with the smallest point mass (cells always contain a point).
    """
    if isinstance(chain, SieveChain):
        return chain.h_curve(v, depth_cutoff)
    L = chain.depth if depth_cutoff is None else min(depth_cutoff, chain.depth)
    w = mu.weights
    if w.size != chain.n_points:
        raise DomainError(f"Measure has {w.size} weights for {chain.n_points} points.")
    suffix = np.zeros((L + 2, chain.n_points))
    for m in range(L, 0, -1):
        mass = np.bincount(chain.levels[m], weights=w)
        if np.any(mass <= 0):
            raise DomainError(f"Cell of zero measure at level {m}.")
        log_ratio = float(v.log_value(m)) - np.log(mass[chain.levels[m]])
        suffix[m - 1] = suffix[m] + 2.0**-m * chain.D * np.sqrt(np.clip(log_ratio, 0, None))
    values = suffix[: L + 1].max(axis=1)
    positive = w[w > 0]
    log_mu_min = float(np.log(positive.min()))
    tail = _level_tail(chain.D, lambda m: float(v.log_value(m)) - log_mu_min, L)
    return HCurve(values=values, tail_bound=tail, log_n_cells=chain.log_n_cells[: L + 1])


class HValue(NamedTuple):
    value: float
    tail_bound: float


def h_function(chain, mu, v: WeightSequence, n: int, depth_cutoff: int | None = None) -> HValue:
    """H(n) over levels up to `depth_cutoff` and the certified bound on the remaining levels."""
    if n < 0:
        raise DomainError(f"Level must be nonnegative, got {n}.")
    curve = h_curve(chain, mu, v, depth_cutoff)
    value = float(curve.values[n]) if n < len(curve.values) else 0.0
    return HValue(value=value, tail_bound=curve.tail_bound)


def _required_depth(curve: HCurve, target: float, tail_at: Callable) -> int:
    L = len(curve.values) - 1
    for extra in range(1, 200):
        if tail_at(L + extra) <= target / 2:
            return L + extra
    return L + 200


def n_of_epsilon(chain, mu, v: WeightSequence, epsilon: float, sigma: float, curve: HCurve | None = None) -> int:
    """
    Smallest level n with H(n) <= eps sigma, H bounded by its certified value.

    Raises:
        DomainError: if eps sigma >= H(0).
        ChainDepthError: if the chain is too shallow to reach eps sigma.
    """
    curve = curve or h_curve(chain, mu, v)
    target = epsilon * sigma
    if not target > 0:
        raise DomainError(f"eps sigma must be positive, got {target}.")
    if target >= curve.certified(0):
        raise DomainError(f"eps sigma = {target:.6g} is not below H(0) = {curve.certified(0):.6g}.")
    ok = np.flatnonzero(curve.values + curve.tail_bound <= target)
    if ok.size == 0:
        if isinstance(chain, SieveChain):
            required = _required_depth(curve, target, lambda L: chain.tail_beyond(v, L))
        else:
            required = len(curve.values) + int(np.ceil(np.log2(max(curve.tail_bound / target, 2.0))))
        raise ChainDepthError(
            f"Chain of depth {len(curve.values) - 1} cannot certify H(n) <= {target:.6g}.",
            required_depth=required,
        )
    return int(ok[0])


def log_mm_lower_exponent(chain, mu, v: WeightSequence, epsilon: float, sigma: float, curve: HCurve | None = None) -> float:
    """log(N_{n(eps)} log(1/eps)); -inf when eps >= 1."""
    curve = curve or h_curve(chain, mu, v)
    n = n_of_epsilon(chain, mu, v, epsilon, sigma, curve)
    if epsilon >= 1:
        return -np.inf
    return float(curve.log_n_cells[n] + np.log(np.log(1 / epsilon)))


def mm_lower_exponent(chain, mu, v: WeightSequence, epsilon: float, sigma: float, curve: HCurve | None = None) -> float:
    """
    N_{n(eps)} log(1/eps): P{sup |X| <= 2 eps sigma} >= C exp(-this) for some C > 0.
    Clipped to 0 for eps >= 1.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(log_mm_lower_exponent(chain, mu, v, epsilon, sigma, curve)))


def interval_entropy_integral(delta_inverse: Callable, omega: Callable, D: float, n: int) -> float:
    """2 int_0^{eps_n} (log(2 / (delta_inverse(u) omega(u))))^(1/2) du, eps_n = 2^-n D."""
    eps_n = 2.0**-n * D

    def integrand(u):
        return np.sqrt(max(np.log(2.0 / (delta_inverse(u) * omega(u))), 0.0))

    val, _ = quad(integrand, 0.0, eps_n, limit=200)
    return 2.0 * val


# ----independent sequence sieve----

SIEVE_MASS = 6 / np.pi**2


class SieveChain:
    """
    Sieve of the index set {1, 2, ...} U {inf} of G_n = g_n / phi(n).

    F_nu = min{t : phi(t) >= 2^nu / D} with D = (phi(1)^-2 + phi(2)^-2)^(1/2). Level nu has
    the singletons u < F_nu and the tail cell [F_nu, inf], F_nu cells in all. The tail cell
    has diameter at most sqrt(2) 2^-nu D, so the chain scale is sqrt(2) D. The measure is
    mu{t} = c t^-2 with c = 6 / pi^2, a tail cell weighing c trigamma(F).
    """

    def __init__(self, phi: SequenceWeight, depth: int = DEFAULT_DEPTH, check_growth: bool = True):
        if depth < 1:
            raise DomainError(f"Sieve depth must be >= 1, got {depth}.")
        if check_growth:
            phi.check_growth()
        self.phi = phi
        self.depth = depth
        w1, w2 = 1 / float(phi.value(1)), 1 / float(phi.value(2))
        self.D_sieve = float(np.hypot(w1, w2))
        self.D = np.sqrt(2.0) * self.D_sieve
        self.sigma = w1

    def log_F(self, nu: int) -> float:
        """log F_nu; inf once the level leaves floating range."""
        if nu > 1000:
            return np.inf
        try:
            return self.phi.log_inverse(2.0**nu / self.D_sieve)
        except DomainError:
            return np.inf

    @cached_property
    def log_F_levels(self) -> np.ndarray:
        """log F_nu for nu = 0..depth + 1."""
        return np.array([self.log_F(nu) for nu in range(self.depth + 2)])

    def F(self, nu: int) -> int | None:
        """Exact F_nu, or None when it exceeds e^36."""
        return self.phi.inverse(2.0**nu / self.D_sieve)

    def n_cells(self, nu: int) -> int | None:
        return self.F(nu)

    @staticmethod
    def log_tail_mass(log_F: float) -> float:
        if log_F < EXACT_LOG_LIMIT:
            return float(np.log(SIEVE_MASS * polygamma(1, np.exp(log_F))))
        # trigamma(F) = 1/F + 1/(2F^2) + ...
        return float(np.log(SIEVE_MASS) - log_F + 0.5 * np.exp(-log_F))

    def tail_beyond(self, v: WeightSequence, L: int) -> float:
        """Bound on levels m > L: every cell at level m weighs at least c / F_m^2."""
        log_c = np.log(SIEVE_MASS)
        return _level_tail(self.D, lambda m: float(v.log_value(m)) - log_c + 2 * self.log_F(m), L)

    def h_curve(self, v: WeightSequence | None = None, depth_cutoff: int | None = None) -> HCurve:
        """
        The sup over t is taken over t = F_{nu+1} - 1 (largest point whose levels above nu are
        singletons) for each nu, and over t = inf.
        """
        v = v or WeightSequence.squares()
        L = self.depth if depth_cutoff is None else min(depth_cutoff, self.depth)
        log_F = self.log_F_levels
        log_c = np.log(SIEVE_MASS)
        m = np.arange(1, L + 1)
        scale = 2.0**-m * self.D
        log_v = np.asarray(v.log_value(m), dtype=float)
        tail_terms = scale * np.sqrt(np.clip(log_v - np.array([self.log_tail_mass(x) for x in log_F[1: L + 1]]), 0, None))

        candidates = [np.concatenate([[0.0], tail_terms])]  # t = inf, index 0 unused
        for nu in range(L + 1):
            if not log_F[nu + 1] > log_F[nu]:
                continue
            log_t = log_F[nu + 1] + np.log1p(-np.exp(-log_F[nu + 1]))
            single = scale * np.sqrt(np.clip(log_v - log_c + 2 * log_t, 0, None))
            terms = np.where(m <= nu, tail_terms, single)
            candidates.append(np.concatenate([[0.0], terms]))
        terms = np.vstack(candidates)
        # suffix[n] = sum over m > n
        suffix = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
        values = np.append(suffix[:, 1:].max(axis=0), 0.0)
        return HCurve(values=values, tail_bound=self.tail_beyond(v, L), log_n_cells=log_F[: L + 1])

    def materialize(self, n_max: int) -> tuple[PartitionChain, MajorizingMeasure, np.ndarray]:
        """
        Restriction to {1..n_max} U {inf} (points listed with np.inf last). The inf point
        carries the mass of [n_max + 1, inf).
        """
        t = np.arange(1, n_max + 1)
        levels = []
        for nu in range(self.depth + 1):
            F = self.F(nu)
            F = np.inf if F is None else F
            labels = np.append(np.where(t < F, t - 1, n_max), n_max)
            levels.append(np.unique(labels, return_inverse=True)[1].reshape(-1).astype(np.int64))
        weights = np.append(SIEVE_MASS / t.astype(float) ** 2, SIEVE_MASS * polygamma(1, n_max + 1))
        points = np.append(t.astype(float), np.inf)
        return PartitionChain(levels=levels, D=self.D), MajorizingMeasure(weights), points

    def distance_matrix(self, n_max: int) -> np.ndarray:
        w = np.append(1 / np.asarray(self.phi.value(np.arange(1, n_max + 1)), dtype=float), 0.0)
        d = np.sqrt(w[:, None] ** 2 + w[None, :] ** 2)
        np.fill_diagonal(d, 0.0)
        return d


def sieve_chain_for_sequence(
    phi: SequenceWeight,
    depth: int = DEFAULT_DEPTH,
    n_max: int = DEFAULT_SIEVE_N_MAX,
    check_depth: int | None = None,
) -> tuple[PartitionChain, MajorizingMeasure]:
    """
    The sieve chain of G(phi) on {1..n_max} U {inf} with the measure mu{t} = c t^-2, the
    inf point carrying the mass of [n_max + 1, inf).

    The ball structure is checked on the same points up to `check_depth` (default: the
    full depth) and the cell diameters against 2^-n D before the pair is returned.

    Raises:
        DomainError: if phi fails the growth check (phi increasing, phi / sqrt(log n) increasing).
        ConstructionError: if a ball of the sieve is neither a singleton nor contains the
            tail cell of the next level, or a cell is too wide.
    """
    sieve = SieveChain(phi, depth)
    logger.info(f"Sieve chain {phi.to_dict()}: log F_nu = {np.round(sieve.log_F_levels[:8], 3).tolist()} ...")
    balls = sieve_ball_check(sieve, n_max, depth=check_depth)
    bad = balls[(balls["singleton_violations"] > 0) | (balls["tail_violations"] > 0)]
    if len(bad):
        raise ConstructionError(f"Sieve ball structure fails on 1..{n_max} at levels {bad['level'].tolist()}.")
    chain, mu, _ = sieve.materialize(n_max)
    chain.verify(FiniteMetricSpace.from_matrix(sieve.distance_matrix(n_max)))
    return chain, mu


def sieve_ball_check(sieve: SieveChain, n_max: int, depth: int | None = None) -> pd.DataFrame:
    """
    Brute-force ball structure on {1..n_max} U {inf}, with nu(u) = max{nu : F_nu <= u}:
    B(u, eps_n) = {u} for n > nu(u), and B(u, eps_n) contains every v >= F_{n+1} for n < nu(u).
    One row per level with the number of checked points and violations.
    """
    depth = sieve.depth if depth is None else depth
    d = sieve.distance_matrix(n_max)
    t = np.arange(1, n_max + 1)
    F = np.array([sieve.F(nu) or np.inf for nu in range(depth + 2)], dtype=float)
    nu_of = np.array([int(np.flatnonzero(F <= u).max()) for u in t])
    values = np.append(t.astype(float), np.inf)
    rows = []
    for n in range(depth + 1):
        eps_n = 2.0**-n * sieve.D_sieve
        singleton_checked = singleton_bad = tail_checked = tail_bad = 0
        tail_cell = values >= F[n + 1] if n + 1 < len(F) else np.zeros(values.size, dtype=bool)
        for i, u in enumerate(t):
            ball = d[i] <= eps_n
            if n > nu_of[i]:
                singleton_checked += 1
                singleton_bad += int(ball.sum() != 1 or not ball[i])
            elif n < nu_of[i]:
                tail_checked += 1
                tail_bad += int(np.any(tail_cell & ~ball))
        rows.append({
            "level": n,
            "singleton_checked": singleton_checked,
            "singleton_violations": singleton_bad,
            "tail_checked": tail_checked,
            "tail_violations": tail_bad,
        })
    return pd.DataFrame(rows)


def technical_condition_fit(phi: SequenceWeight, n_range=(3, 10**6), n_points: int = 60) -> dict:
    """Fitted constant of log phi(m) <= C log m over the range. Recorded, not asserted."""
    m = np.unique(np.geomspace(n_range[0], n_range[1], n_points).astype(np.int64))
    ratio = np.log(np.asarray(phi.value(m), dtype=float)) / np.log(m)
    return {"C_fit": float(ratio.max()), "ratio_at_end": float(ratio[-1]), "n_range": [int(m[0]), int(m[-1])]}

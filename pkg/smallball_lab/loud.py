"""
Saw-tooth functions and the p-adic Loud family

    f(t) = sum_{k>=1} phi_k(t),    phi_k(t) = p^(-2 alpha A k) * phi(t, p^(-2 A k)),

where phi(t, h) is the triangular wave equal to 0 at even and 1 at odd multiples
of h. The family also defines the Gaussian series X(t) = sum_k g_k phi_k(t).

Points that are p-adic rationals j * p^(-level) are evaluated with integer
arithmetic (`teeth_at`), everything else with a floating reduction.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ConstructionError, DomainError

import logging
logger = logging.getLogger(__name__)

MAX_TRUNCATION = 400


@dataclass(frozen=True)
class SawtoothSpec:
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError(f"Saw-tooth half-period must be positive, got {self.h}.")

    @property
    def period(self) -> float:
        return 2 * self.h


def sawtooth_eval(spec: SawtoothSpec, t):
    """Triangular wave of half-period spec.h, range [0, 1]."""
    x = np.asarray(t, dtype=float) / spec.h
    q = np.floor(x)
    frac = x - q
    out = np.where(np.mod(q, 2) == 0, frac, 1.0 - frac)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LoudFamily:
    """
    Parameters (p, A, alpha) of the generalized Loud function.

    The standing assumption p^(2(1-alpha)A) > 2 makes every tooth steeper than the
    sum of all coarser ones, which is what the increment bounds rely on.
    """
    p: int
    A: int
    alpha: float
    tail_tol: float = 1e-12

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 2:
            raise ConstructionError(f"LoudFamily.p must be an integer >= 2, got {self.p!r}.")
        if not isinstance(self.A, (int, np.integer)) or self.A < 1:
            raise ConstructionError(f"LoudFamily.A must be a positive integer, got {self.A!r}.")
        if not 0 < self.alpha < 1:
            raise ConstructionError(f"LoudFamily.alpha must lie in (0, 1), got {self.alpha}.")
        if not self.tail_tol > 0:
            raise ConstructionError(f"LoudFamily.tail_tol must be positive, got {self.tail_tol}.")
        if not 2 * (1 - self.alpha) * self.A * np.log(self.p) > np.log(2):
            raise ConstructionError(
                f"LoudFamily(p={self.p}, A={self.A}, alpha={self.alpha}) violates p^(2(1-alpha)A) > 2."
            )

    @cached_property
    def rho(self) -> float:
        """Peak ratio p^(-2 alpha A) between consecutive teeth."""
        return float(self.p) ** (-2 * self.alpha * self.A)

    @cached_property
    def r(self) -> float:
        """p^(-2(1-alpha)A), the ratio of consecutive slopes; below 1/2 by validity."""
        return float(self.p) ** (-2 * (1 - self.alpha) * self.A)

    @cached_property
    def truncation(self) -> int:
        """Smallest K with rho^(K+1) / (1 - rho) < tail_tol."""
        rho = self.rho
        K = 1
        while rho ** (K + 1) / (1 - rho) >= self.tail_tol:
            K += 1
            if K > MAX_TRUNCATION:
                raise ConstructionError(
                    f"Truncation level exceeds {MAX_TRUNCATION} for rho={rho}; increase tail_tol."
                )
        return K

    @property
    def period(self) -> float:
        """Period of f, set by the first tooth."""
        return 2.0 * float(self.p) ** (-2 * self.A)

    def half_period(self, k: int) -> float:
        return float(self.p) ** (-2 * self.A * k)

    def peak(self, k: int) -> float:
        return float(self.p) ** (-2 * self.alpha * self.A * k)

    def slope(self, k: int) -> float:
        return float(self.p) ** (2 * (1 - self.alpha) * self.A * k)


class LoudConstants(NamedTuple):
    c1: float
    c2: float
    kappa: float
    K_script: float


def loud_constants(fam: LoudFamily) -> LoudConstants:
    """
    Constants of the two-sided increment bounds.

    c1 |s-t|^alpha <= ||X(s)-X(t)||_2 <= c2 |s-t|^alpha, |f(s)-f(t)| <= K_script |s-t|^alpha
    and |f(s)-f(t)| >= kappa |s-t|^alpha at the lags p^(-2A(m+1)).
    """
    p, A, alpha = float(fam.p), fam.A, fam.alpha
    c1 = p ** (-2 * A)
    c2 = np.sqrt(
        p ** (4 * A * alpha) / (1 - p ** (-4 * (1 - alpha) * A))
        + 1 / (1 - p ** (-4 * alpha * A))
    )
    r = fam.r
    kappa = r * (1 - 2 * r) / (1 - r)
    return LoudConstants(c1=float(c1), c2=float(c2), kappa=float(kappa), K_script=float(c2**2))


def loud_sup_norm_bound(fam: LoudFamily) -> float:
    """sup |f| <= sum_k p^(-2 alpha A k)."""
    return fam.rho / (1 - fam.rho)


def loud_basis_eval(fam: LoudFamily, k: int, t):
    if k < 1:
        raise DomainError(f"Tooth index must be >= 1, got {k}.")
    return fam.peak(k) * sawtooth_eval(SawtoothSpec(fam.half_period(k)), t)


def loud_teeth(fam: LoudFamily, t, n_levels: int | None = None) -> np.ndarray:
    """Matrix of phi_k(t), shape (len(t), K); floating evaluation."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    K = n_levels or fam.truncation
    out = np.empty((t.size, K))
    for k in range(1, K + 1):
        out[:, k - 1] = loud_basis_eval(fam, k, t)
    return out


def teeth_at(fam: LoudFamily, numerators, level: int, n_levels: int | None = None) -> np.ndarray:
    """
    Exact phi_k at the p-adic rationals j * p^(-level), shape (len(j), K).

    The reduction modulo 2h is done on integers. For teeth finer than the point
    spacing, j * p^(-level) is an integer multiple of h and only its parity matters.
    """
    j = np.atleast_1d(np.asarray(numerators, dtype=np.int64))
    if level < 0:
        raise DomainError(f"Grid level must be nonnegative, got {level}.")
    K = n_levels or fam.truncation
    out = np.empty((j.size, K))
    for k in range(1, K + 1):
        e = 2 * fam.A * k
        if e <= level:
            m = fam.p ** (level - e)
            q, rem = np.divmod(j, m)
            frac = rem / m
            vals = np.where(q % 2 == 0, frac, 1.0 - frac)
        elif fam.p % 2 == 0:
            vals = np.zeros(j.size)
        else:
            vals = (j % 2).astype(float)
        out[:, k - 1] = fam.peak(k) * vals
    return out


def loud_f_eval(fam: LoudFamily, t):
    vals = loud_teeth(fam, t).sum(axis=1)
    return float(vals[0]) if np.ndim(t) == 0 else vals


def loud_l2_increment(fam: LoudFamily, s, t):
    """(sum_k (phi_k(s) - phi_k(t))^2)^(1/2), the intrinsic metric of X."""
    diff = loud_teeth(fam, s) - loud_teeth(fam, t)
    vals = np.sqrt(np.sum(diff**2, axis=1))
    return float(vals[0]) if np.ndim(s) == 0 and np.ndim(t) == 0 else vals


@dataclass(frozen=True)
class PadicGrid:
    """The points j * p^(-level), j = 0..p^level, of [0, 1] (or a sub-interval [0, span])."""
    p: int
    level: int
    span_level: int = 0

    def __post_init__(self):
        if self.p < 2 or self.level < 0 or not 0 <= self.span_level <= self.level:
            raise DomainError(f"Invalid grid p={self.p}, level={self.level}, span_level={self.span_level}.")
        if self.p ** self.level > np.iinfo(np.int64).max // self.p:
            raise DomainError(f"Grid p^level = {self.p}^{self.level} does not fit integer arithmetic.")

    @property
    def numerators(self) -> np.ndarray:
        return np.arange(self.p ** (self.level - self.span_level) + 1, dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return self.numerators / float(self.p) ** self.level

    @property
    def mesh(self) -> float:
        return float(self.p) ** (-self.level)

    def __len__(self) -> int:
        return self.p ** (self.level - self.span_level) + 1

    def teeth_matrix(self, fam: LoudFamily, n_levels: int | None = None) -> np.ndarray:
        if fam.p != self.p:
            raise DomainError(f"Family base p={fam.p} differs from grid base p={self.p}.")
        return teeth_at(fam, self.numerators, self.level, n_levels)


def lower_increment_level(fam: LoudFamily, diff_numerators, level: int) -> np.ndarray:
    """
    Level m with p^(-2A(m+1)) <= |s-t| < p^(-2Am) for integer lags j * p^(-level).
    Returns 0 for lags at least p^(-2A) and -1 for a zero lag.
    """
    d = np.abs(np.asarray(diff_numerators, dtype=np.int64))
    m = np.full(d.shape, -1, dtype=np.int64)
    m[d > 0] = 0
    k = 1
    while 2 * fam.A * k <= level:
        m[d < fam.p ** (level - 2 * fam.A * k)] = k
        k += 1
    m[d == 0] = -1
    return m


def lower_increment_certified(fam: LoudFamily, i, j, level: int) -> np.ndarray:
    """
    Whether the lower increment bound is certified for the p-adic pair (i, j) p^(-level):
    the lag fixes a tooth level m >= 1 and both points lie in one closed linear piece of
    that tooth. Elsewhere the symmetric teeth can cancel.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    m = lower_increment_level(fam, hi - lo, level)
    applies = np.zeros(np.broadcast(lo, hi).shape, dtype=bool)
    for level_m in np.unique(m[m >= 1]):
        h = fam.p ** (level - 2 * fam.A * int(level_m))
        sel = m == level_m
        applies[sel] = (lo[sel] // h) == ((hi[sel] - 1) // h)
    return applies


def loud_lag_pairs(fam: LoudFamily, m: int, grid: PadicGrid) -> tuple[np.ndarray, np.ndarray, int]:
    """
    Numerator pairs (s, s + lag) for the special lag p^(-2A(m+1)), with s running over
    the multiples of the lag that are grid points and s + lag <= 1.
    Returns (s, t, level) at the level needed to represent both exactly.
    """
    if m < 1:
        raise DomainError(f"Lag level must be >= 1, got {m}.")
    if fam.p != grid.p:
        raise DomainError(f"Family base p={fam.p} differs from grid base p={grid.p}.")
    lag_level = 2 * fam.A * (m + 1)
    level = max(grid.level, lag_level)
    scale = fam.p ** (level - grid.level)
    lag = fam.p ** (level - lag_level)
    step = max(scale, lag)
    top = fam.p**level
    s = np.arange(0, top - lag + 1, step, dtype=np.int64)
    s = s[s % scale == 0]
    return s, s + lag, level

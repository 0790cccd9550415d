"""
Process models: every Gaussian process of the lab as a finite Gaussian series
on a grid, with its exact intrinsic metric and reproducible sampler.

    ScaledLoud          X(t) = g f(t)
    LoudSeries          X(t) = sum_k g_k phi_k(t)
    Lifshits            X(t) = g_0 t + sum_n g_n 2^(-alpha n / 2) psi({2^n t})
    AperiodicCoprime    X(t) = sum_p g_p a_p f_p(t) over pairwise coprime p
    IndependentSequence G_n = g_n / phi(n), G_inf = 0
    UltrametricZ        tree process, see `ultra`
"""
from dataclasses import dataclass, field
from math import gcd
from typing import Literal

import numpy as np
import pandas as pd
from scipy.special import ndtri

from common.utils import check_literal_values

from .base.process_model import ProcessModel
from .errors import ConstructionError, DomainError
from .loud import (
    LoudFamily,
    PadicGrid,
    SawtoothSpec,
    loud_constants,
    loud_f_eval,
    loud_sup_norm_bound,
    loud_teeth,
    sawtooth_eval,
    teeth_at,
)
from .ultra import UltrametricZ
from .weights import LogPowerWeight, SequenceWeight

import logging
logger = logging.getLogger(__name__)

ProcessKind = Literal[
    "ScaledLoud", "LoudSeries", "Lifshits", "AperiodicCoprime", "IndependentSequence", "UltrametricZ"
]

# two-sided Gaussian envelope level used by the grid-bias bands
ENVELOPE_LEVEL = 1e-6


def _envelope(n_terms: int = 1) -> float:
    """z with P{max of n_terms |g| > z} <= ENVELOPE_LEVEL by the union bound."""
    return float(ndtri(1 - ENVELOPE_LEVEL / (2 * max(n_terms, 1))))


def _unit_interval_points(grid) -> np.ndarray:
    points = grid.points if isinstance(grid, PadicGrid) else np.atleast_1d(np.asarray(grid, dtype=float))
    if points.size and (np.any(~np.isfinite(points)) or points.min() < 0 or points.max() > 1):
        raise DomainError("Grid points of this process must lie in [0, 1].")
    return points


def default_grid(level: int = 12, p: int = 2) -> PadicGrid:
    return PadicGrid(p=p, level=level)


class ScaledLoud(ProcessModel):
    """X = g * f: a single Gaussian coefficient times the Loud function."""

    kind = "ScaledLoud"

    def __init__(self, fam: LoudFamily):
        self.fam = fam

    def f_values(self, grid) -> np.ndarray:
        if isinstance(grid, PadicGrid) and grid.p == self.fam.p:
            return grid.teeth_matrix(self.fam).sum(axis=1)
        return np.atleast_1d(loud_f_eval(self.fam, _unit_interval_points(grid)))

    def basis(self, grid) -> np.ndarray:
        return self.f_values(grid)[:, None]

    def intrinsic_distance(self, s, t) -> float:
        _unit_interval_points([s, t])
        return abs(loud_f_eval(self.fam, float(s)) - loud_f_eval(self.fam, float(t)))

    def path_modulus(self, mesh: float) -> float:
        return loud_constants(self.fam).K_script * mesh**self.fam.alpha * _envelope()

    def parameters(self) -> dict:
        return {"kind": self.kind, "p": self.fam.p, "A": self.fam.A, "alpha": self.fam.alpha, "tail_tol": self.fam.tail_tol}


class LoudSeries(ProcessModel):
    """X = sum_k g_k phi_k with independent coefficients per tooth."""

    kind = "LoudSeries"

    def __init__(self, fam: LoudFamily):
        self.fam = fam

    def basis(self, grid) -> np.ndarray:
        if isinstance(grid, PadicGrid) and grid.p == self.fam.p:
            return grid.teeth_matrix(self.fam)
        return loud_teeth(self.fam, _unit_interval_points(grid))

    def path_modulus(self, mesh: float) -> float:
        K = self.fam.truncation
        oscillation = sum(min(self.fam.slope(k) * mesh, self.fam.peak(k)) for k in range(1, K + 1))
        return oscillation * _envelope(K)

    def parameters(self) -> dict:
        return {"kind": self.kind, "p": self.fam.p, "A": self.fam.A, "alpha": self.fam.alpha, "tail_tol": self.fam.tail_tol}


class Lifshits(ProcessModel):
    """
    X(t) = g_0 t + sum_{n>=1} g_n 2^(-alpha n/2) psi({2^n t}) with the tent psi = phi(., 1/2).
    Its increments are bounded below by c |s-t|^(alpha/2) for some unspecified c.
    """

    kind = "Lifshits"

    def __init__(self, alpha: float = 0.5, tail_tol: float = 1e-12):
        if not 0 < alpha < 2:
            raise ConstructionError(f"Lifshits.alpha must lie in (0, 2), got {alpha}.")
        if not tail_tol > 0:
            raise ConstructionError(f"Lifshits.tail_tol must be positive, got {tail_tol}.")
        self.alpha = alpha
        self.tail_tol = tail_tol
        ratio = 2 ** (-alpha / 2)
        n = 1
        while ratio ** (n + 1) / (1 - ratio) >= tail_tol:
            n += 1
        self.truncation = n

    def basis(self, grid) -> np.ndarray:
        t = _unit_interval_points(grid)
        out = np.empty((t.size, self.truncation + 1))
        out[:, 0] = t
        tent = SawtoothSpec(0.5)
        for n in range(1, self.truncation + 1):
            out[:, n] = 2 ** (-self.alpha * n / 2) * sawtooth_eval(tent, 2.0**n * t)
        return out

    def path_modulus(self, mesh: float) -> float:
        oscillation = mesh + sum(
            2 ** (-self.alpha * n / 2) * min(2.0 ** (n + 1) * mesh, 1.0) for n in range(1, self.truncation + 1)
        )
        return oscillation * _envelope(self.truncation + 1)

    def parameters(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "tail_tol": self.tail_tol}


def fit_increment_constant(
    model: ProcessModel,
    exponent: float,
    lag_levels=range(2, 11),
    n_starts: int = 64,
) -> pd.DataFrame:
    """
    Smallest observed ratio d(s, s + 2^-j) / 2^(-j exponent) per dyadic lag, over
    `n_starts` evenly spread dyadic start points. Recorded, not asserted.
    """
    rows = []
    for j in lag_levels:
        lag = 2.0**-j
        s = np.unique(np.floor(np.linspace(0, 1 - lag, n_starts) / lag) * lag)
        B_s = model.basis(s)
        B_t = model.basis(s + lag)
        d = np.linalg.norm(B_s - B_t, axis=1)
        rows.append({"lag": lag, "n_pairs": s.size, "min_ratio": float(np.min(d / lag**exponent))})
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class AperiodicSpec:
    """
    Pairwise coprime bases p > 2 with exponents alpha_p in (0, 1/2), decreasing,
    and weights a_p = 2^(-beta p).
    """
    prime_set: tuple
    alpha_of_p: dict = field(hash=False)
    beta: float = 0.25
    tail_tol: float = 1e-12

    def __post_init__(self):
        primes = tuple(int(p) for p in self.prime_set)
        object.__setattr__(self, "prime_set", primes)
        if not primes:
            raise ConstructionError("AperiodicSpec.prime_set must not be empty.")
        for i, p in enumerate(primes):
            if p <= 2:
                raise ConstructionError(f"AperiodicSpec.prime_set entries must exceed 2, got {p}.")
            for q in primes[i + 1:]:
                if gcd(p, q) != 1:
                    raise ConstructionError(f"AperiodicSpec.prime_set entries {p} and {q} are not coprime.")
        if set(self.alpha_of_p) != set(primes):
            raise ConstructionError("AperiodicSpec.alpha_of_p must give one exponent per base.")
        for p in primes:
            if not 0 < self.alpha_of_p[p] < 0.5:
                raise ConstructionError(f"AperiodicSpec alpha_{p} = {self.alpha_of_p[p]} is outside (0, 1/2).")
        ordered = [self.alpha_of_p[p] for p in sorted(primes)]
        if any(b >= a for a, b in zip(ordered, ordered[1:])):
            raise ConstructionError("AperiodicSpec exponents alpha_p must decrease with p.")
        if not 0 < self.beta < 1:
            raise ConstructionError(f"AperiodicSpec.beta must lie in (0, 1), got {self.beta}.")
        for p in primes:
            self.family(p)

    def family(self, p: int) -> LoudFamily:
        return LoudFamily(p=p, A=1, alpha=self.alpha_of_p[p], tail_tol=self.tail_tol)

    def weight(self, p: int) -> float:
        return 2.0 ** (-self.beta * p)


def default_alpha(p: int) -> float:
    """alpha_p = 1 / (2 log p max(1, log log p)); decreasing and below 1/2 for p >= 3."""
    return 1.0 / (2 * np.log(p) * max(1.0, np.log(np.log(p))))


def default_aperiodic_spec(prime_set=(3, 5, 7, 11, 13), beta: float = 0.25) -> AperiodicSpec:
    return AperiodicSpec(prime_set=tuple(prime_set), alpha_of_p={p: default_alpha(p) for p in prime_set}, beta=beta)


class AperiodicCoprime(ProcessModel):
    """Sum of independent Loud functions in coprime bases; no common period survives."""

    kind = "AperiodicCoprime"

    def __init__(self, spec: AperiodicSpec):
        self.spec = spec

    def basis(self, grid) -> np.ndarray:
        t = _unit_interval_points(grid)
        cols = [self.spec.weight(p) * np.atleast_1d(loud_f_eval(self.spec.family(p), t)) for p in self.spec.prime_set]
        return np.column_stack(cols) if cols else np.empty((t.size, 0))

    def path_modulus(self, mesh: float) -> float:
        total = 0.0
        for p in self.spec.prime_set:
            fam = self.spec.family(p)
            total += self.spec.weight(p) * loud_constants(fam).K_script * mesh**fam.alpha
        return total * _envelope(len(self.spec.prime_set))

    def parameters(self) -> dict:
        return {
            "kind": self.kind,
            "prime_set": list(self.spec.prime_set),
            "alpha_of_p": {str(p): a for p, a in self.spec.alpha_of_p.items()},
            "beta": self.spec.beta,
        }


def condition_report(spec: AperiodicSpec, h: float = 0.1) -> tuple[pd.DataFrame, dict]:
    """
    Finite-set surrogates of the growth conditions on alpha_p:
    alpha_p log p nonincreasing, 2^(h p) alpha_p log p increasing, and the sup-norm
    bound a_p sup|f_p| of each term.
    """
    rows = []
    for p in sorted(spec.prime_set):
        fam = spec.family(p)
        alpha_log = fam.alpha * np.log(p)
        rows.append({
            "p": p,
            "alpha_p": fam.alpha,
            "alpha_log_p": alpha_log,
            "growth": 2 ** (h * p) * alpha_log,
            "a_p": spec.weight(p),
            "sup_f_p": loud_sup_norm_bound(fam),
            "sup_term": spec.weight(p) * loud_sup_norm_bound(fam),
            "kappa_p": loud_constants(fam).kappa,
        })
    df = pd.DataFrame(rows)
    flags = {
        "alpha_decreasing": bool(np.all(np.diff(df["alpha_p"]) < 0)),
        "alpha_log_p_nonincreasing": bool(np.all(np.diff(df["alpha_log_p"]) <= 1e-15)),
        "growth_increasing": bool(np.all(np.diff(df["growth"]) > 0)),
        "sup_norm_summable": float(df["sup_term"].sum()),
    }
    return df, flags


def aperiodic_increment_check(
    model: AperiodicCoprime,
    m_values=(1, 2, 3),
    max_pairs: int = 2048,
) -> pd.DataFrame:
    """
    Checks ||X(s) - X(t)||_2 >= a_p kappa_p |s - t|^alpha_p at |s - t| = p^(-2(m+1)).

    Start points are multiples of the lag (all of them, or `max_pairs` evenly spread ones).
    The p-term is evaluated exactly on p-adic numerators; the other terms only add to the norm.
    """
    spec = model.spec
    rows = []
    for p in spec.prime_set:
        fam = spec.family(p)
        kappa = loud_constants(fam).kappa
        a_p = spec.weight(p)
        for m in m_values:
            level = 2 * (m + 1)
            n_starts = p**level
            if n_starts <= max_pairs:
                s = np.arange(n_starts, dtype=np.int64)
            else:
                s = np.unique(np.linspace(0, n_starts - 1, max_pairs).astype(np.int64))
            t = s + 1
            lag = float(p) ** (-level)
            d2 = a_p**2 * (teeth_at(fam, s, level).sum(axis=1) - teeth_at(fam, t, level).sum(axis=1)) ** 2
            s_pts, t_pts = s / float(p) ** level, t / float(p) ** level
            for q in spec.prime_set:
                if q == p:
                    continue
                fam_q = spec.family(q)
                d2 += spec.weight(q) ** 2 * (loud_f_eval(fam_q, s_pts) - loud_f_eval(fam_q, t_pts)) ** 2
            d = np.sqrt(d2)
            bound = a_p * kappa * lag**fam.alpha
            slack = 2 * a_p * spec.tail_tol
            rows.append({
                "p": p,
                "m": m,
                "lag": lag,
                "n_pairs": int(s.size),
                "bound": bound,
                "min_distance": float(d.min()),
                "violations": int(np.sum(d < bound - slack)),
            })
    return pd.DataFrame(rows)


class IndependentSequence(ProcessModel):
    """
    G_n = g_n / phi(n) on the index set {1..n_max} and the point at infinity, G_inf = 0.
    Grid points are integers, with np.inf standing for the point at infinity.
    """

    kind = "IndependentSequence"

    def __init__(self, phi: SequenceWeight, n_max: int = 1000):
        if n_max < 1:
            raise ConstructionError(f"IndependentSequence.n_max must be >= 1, got {n_max}.")
        if not float(phi.value(1)) > 0:
            raise ConstructionError("IndependentSequence needs phi(1) > 0.")
        self.phi = phi
        self.n_max = int(n_max)

    def default_grid(self) -> np.ndarray:
        return np.append(np.arange(1, self.n_max + 1, dtype=float), np.inf)

    def _indices(self, grid) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(grid, dtype=float))
        finite = np.isfinite(pts)
        if np.any(pts[finite] < 1) or np.any(pts[finite] > self.n_max) or np.any(pts[finite] != np.floor(pts[finite])):
            raise DomainError(f"Sequence indices must be integers in [1, {self.n_max}] or inf.")
        if np.any(np.isnan(pts)) or np.any(pts == -np.inf):
            raise DomainError("Sequence indices must not be NaN or -inf.")
        return pts

    def weights(self, grid) -> np.ndarray:
        """1/phi(n) per grid point, 0 at infinity."""
        pts = self._indices(grid)
        out = np.zeros(pts.size)
        finite = np.isfinite(pts)
        out[finite] = 1.0 / np.asarray(self.phi.value(pts[finite]), dtype=float)
        return out

    def basis(self, grid) -> np.ndarray:
        pts = self._indices(grid)
        B = np.zeros((pts.size, self.n_max))
        finite = np.flatnonzero(np.isfinite(pts))
        B[finite, pts[finite].astype(np.int64) - 1] = self.weights(pts[finite])
        return B

    def intrinsic_distance(self, s, t) -> float:
        pts = self._indices([s, t])
        if pts[0] == pts[1]:
            return 0.0
        w = self.weights(pts)
        return float(np.sqrt(w[0] ** 2 + w[1] ** 2))

    def sup_sigma(self, grid) -> float:
        w = self.weights(grid)
        return float(w.max()) if w.size else 0.0

    def _prepare(self, grid):
        pts = self._indices(grid)
        cols = np.where(np.isfinite(pts), pts, 1).astype(np.int64) - 1
        return cols, self.weights(pts)

    def _n_coefficients(self, state) -> int:
        return self.n_max

    def _paths(self, coefficients: np.ndarray, state) -> np.ndarray:
        cols, w = state
        return coefficients[:, cols] * w[None, :]

    def parameters(self) -> dict:
        return {"kind": self.kind, "phi": self.phi.to_dict(), "n_max": self.n_max}


def _family_from(parameters: dict) -> LoudFamily:
    if "family" in parameters:
        return parameters["family"]
    try:
        return LoudFamily(
            p=int(parameters["p"]),
            A=int(parameters["A"]),
            alpha=float(parameters["alpha"]),
            tail_tol=float(parameters.get("tail_tol", 1e-12)),
        )
    except KeyError as e:
        raise ConstructionError(f"Loud process parameters miss {e}.") from e


def build_process(kind: ProcessKind, parameters: dict | None = None) -> ProcessModel:
    """
    Builds a process model of the given kind.

    Args:
        kind (ProcessKind): Process kind.
        parameters (dict | None): Kind-specific parameters:
            ScaledLoud / LoudSeries: p, A, alpha[, tail_tol] or family;
            Lifshits: alpha[, tail_tol];
            AperiodicCoprime: spec, or prime_set[, alpha_of_p, beta] (defaults otherwise);
            IndependentSequence: phi or beta[, shift], n_max;
            UltrametricZ: tree[, tail].

    Returns:
        ProcessModel: The model.
    """
    check_literal_values(kind, "kind", ProcessKind)
    parameters = dict(parameters or {})
    if kind == "ScaledLoud":
        model = ScaledLoud(_family_from(parameters))
    elif kind == "LoudSeries":
        model = LoudSeries(_family_from(parameters))
    elif kind == "Lifshits":
        model = Lifshits(alpha=float(parameters.get("alpha", 0.5)), tail_tol=float(parameters.get("tail_tol", 1e-12)))
    elif kind == "AperiodicCoprime":
        if "spec" in parameters:
            spec = parameters["spec"]
        elif "alpha_of_p" in parameters:
            spec = AperiodicSpec(
                prime_set=tuple(parameters["prime_set"]),
                alpha_of_p={int(p): float(a) for p, a in parameters["alpha_of_p"].items()},
                beta=float(parameters.get("beta", 0.25)),
            )
        else:
            spec = default_aperiodic_spec(
                prime_set=tuple(parameters.get("prime_set", (3, 5, 7, 11, 13))),
                beta=float(parameters.get("beta", 0.25)),
            )
        model = AperiodicCoprime(spec)
    elif kind == "IndependentSequence":
        phi = parameters.get("phi") or LogPowerWeight(
            beta=float(parameters.get("beta", 1.0)), shift=float(parameters.get("shift", 2.0))
        )
        model = IndependentSequence(phi, n_max=int(parameters.get("n_max", 1000)))
    else:
        if "tree" not in parameters:
            raise ConstructionError("UltrametricZ needs a 'tree' parameter.")
        model = UltrametricZ(parameters["tree"], tail=parameters.get("tail", "private"))
    logger.debug(f"Built process {model.parameters()}")
    return model

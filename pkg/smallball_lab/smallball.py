"""
Small-deviation probabilities P{sup |X| <= eps}: Monte Carlo estimates on grids,
exact values for rank-one and independent structures, and certified two-sided
log bounds for geometric sums and Loud series.

Every probability is handled in log scale; values far below 1e-300 are routine.
Doubly-exponential laws are carried as log(-log P) (`log_deficit`).
"""
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from .base.process_model import DEFAULT_SAMPLE_BUDGET, ProcessModel
from .errors import BudgetExceededError, DomainError
from .gaussmath import (
    SeedSpec,
    gaussian_stream,
    log_neg_log_std_normal_interval,
    log_std_normal_interval,
    std_normal_interval,
)
from .loud import LoudFamily, PadicGrid, loud_constants, loud_sup_norm_bound
from .procs import ScaledLoud
from .weights import SequenceWeight

import logging
logger = logging.getLogger(__name__)

# beyond this argument -log P{|g| <= x} is below 1e-300
NEGLIGIBLE_Z = 38.0
# factors with P{|g| <= x} >= 1 - 1e-16 are dropped from upper products
UNIT_FACTOR_Z = 8.3
# direct summation range of independent products
HEAD_SIZE = 2**16
# the deficit integrand is integrated until it falls this far (in log) below its peak
LOG_CUTOFF = 60.0
MAX_LOG_INDEX = 1e9
# envelope level used with path_modulus bands
ENVELOPE_LEVEL = 1e-6


@dataclass
class McEstimate:
    p_hat: float
    n_samples: int
    std_err: float
    seed: SeedSpec
    grid_size: int
    bias_note: float
    sup_band: float = 0.0

    @property
    def resolvable(self) -> bool:
        """At least 10 hits: the binomial error is meaningful."""
        return self.p_hat * self.n_samples >= 10


class ProductBound(NamedTuple):
    log_value: float
    n_factors_used: int
    tail_log_bound: float
    log_deficit: float
    certified: bool = True


class BallBounds(NamedTuple):
    log_lower: float
    log_upper: float


@dataclass
class ExactProbability:
    """P{sup_grid |X| <= eps} for X = g f, and its continuous-sup lower bound."""
    value: np.ndarray | float
    lower: np.ndarray | float
    log_value: np.ndarray | float
    log_lower: np.ndarray | float
    sup_f: float
    band: float


@dataclass
class TalagrandReport:
    log_bound: float
    c1: float
    c2: float
    doubling_ok: bool


@dataclass
class SidakReport:
    joint_p_hat: float
    std_err: float
    product: float
    log_product: float
    violation: bool
    n_samples: int


def _grid_mesh(grid) -> float:
    if isinstance(grid, PadicGrid):
        return grid.mesh
    pts = np.sort(np.asarray(grid, dtype=float))
    pts = pts[np.isfinite(pts)]
    return float(np.max(np.diff(pts))) if pts.size > 1 else 0.0


def mc_small_ball(
    model: ProcessModel,
    grid,
    epsilon: float,
    n_samples: int,
    seed: SeedSpec,
    n_workers: int = 1,
    budget: int = DEFAULT_SAMPLE_BUDGET,
) -> McEstimate:
    """
    Fraction of sampled paths with max over the grid of |X| at most epsilon.

    Paths are streamed block by block. `bias_note` bounds how much the grid sup inflates
    the probability: the observed fraction of paths whose grid sup falls in the band
    (eps - w, eps], with w the model's modulus band at the grid mesh, plus the envelope level.

    Raises:
        DomainError: if epsilon <= 0, n_samples < 1 or the grid is empty.
        BudgetExceededError: if n_samples * len(grid) exceeds `budget`.
    """
    if not epsilon > 0:
        raise DomainError(f"Small-ball radius must be positive, got {epsilon}.")
    if n_samples < 1:
        raise DomainError(f"Monte Carlo needs at least one sample, got {n_samples}.")
    n_grid = len(grid)
    if n_grid == 0:
        raise DomainError("Monte Carlo grid is empty.")
    if n_samples * n_grid > budget:
        raise BudgetExceededError(
            f"Sampling {n_samples} paths on {n_grid} points exceeds the budget of {budget} values."
        )

    band = model.path_modulus(_grid_mesh(grid))
    hits, near = 0, 0
    for paths in model.iter_path_blocks(grid, n_samples, seed, n_workers=n_workers):
        sup = np.max(np.abs(paths), axis=1)
        hits += int(np.sum(sup <= epsilon))
        near += int(np.sum((sup <= epsilon) & (sup > epsilon - band)))

    p_hat = hits / n_samples
    bias = near / n_samples + (ENVELOPE_LEVEL if band > 0 else 0.0)
    est = McEstimate(
        p_hat=p_hat,
        n_samples=n_samples,
        std_err=float(np.sqrt(p_hat * (1 - p_hat) / n_samples)),
        seed=seed,
        grid_size=n_grid,
        bias_note=bias,
        sup_band=band,
    )
    logger.debug(f"MC {model.kind} eps={epsilon:.3e}: p_hat={p_hat:.4g} +- {est.std_err:.2g} ({n_samples} paths)")
    return est


def scaled_loud_exact(model: ProcessModel, epsilon, grid: PadicGrid | None = None) -> ExactProbability:
    """
    P{sup |g f| <= eps} = P{|g| <= eps / M}, M the sup of |f| over the grid.

    The continuous sup lies in [M, M + K_script mesh^alpha], capped by the sup-norm bound,
    which gives `lower`.
    """
    if not isinstance(model, ScaledLoud):
        raise DomainError(f"scaled_loud_exact needs a ScaledLoud model, got {model.kind}.")
    fam = model.fam
    if grid is None:
        grid = PadicGrid(fam.p, int(np.floor(12 * np.log(2) / np.log(fam.p))))
    eps = np.asarray(epsilon, dtype=float)
    if np.any(np.isnan(eps)) or np.any(eps < 0):
        raise DomainError("Small-ball radius must be nonnegative.")

    M = float(np.max(np.abs(model.f_values(grid))))
    band = min(loud_constants(fam).K_script * grid.mesh**fam.alpha, max(loud_sup_norm_bound(fam) - M, 0.0))
    with np.errstate(divide="ignore"):
        z, z_lower = eps / M, eps / (M + band)
    out = ExactProbability(
        value=std_normal_interval(z),
        lower=std_normal_interval(z_lower),
        log_value=log_std_normal_interval(z),
        log_lower=log_std_normal_interval(z_lower),
        sup_f=M,
        band=band,
    )
    return out


def _log_deficit_terms(phi: SequenceWeight, epsilon: float, n: np.ndarray) -> np.ndarray:
    return log_neg_log_std_normal_interval(epsilon * np.asarray(phi.value(n), dtype=float))


def _log_tail_integral(phi: SequenceWeight, epsilon: float, u0: float, u_end: float | None) -> tuple[float, float]:
    """
    log of int_{e^u0}^{e^u_end} -log P{|g| <= eps phi(x)} dx, computed in u = log x,
    and the absolute quadrature error relative to the result.
    """
    def g(u):
        return log_neg_log_std_normal_interval(epsilon * np.asarray(phi.value_at_log(u), dtype=float)) + u

    if u_end is None:
        U = max(2 * u0, u0 + 64.0)
        while True:
            us = np.linspace(u0, U, 4097)
            gs = g(us)
            peak = int(np.argmax(gs))
            if gs[-1] < gs[peak] - LOG_CUTOFF and peak < len(us) - 1 and gs[-1] < gs[-2]:
                break
            U *= 2
            if U > MAX_LOG_INDEX:
                raise DomainError(
                    f"Independent product diverges to zero for eps={epsilon}: -log P{{|g| <= eps phi(n)}} "
                    "is not summable, phi grows too slowly."
                )
    else:
        U = u_end
        us = np.linspace(u0, U, 4097)
        gs = g(us)
        peak = int(np.argmax(gs))
    if U <= u0:
        return -np.inf, 0.0
    g_max = float(gs[peak])
    val, err = quad(lambda u: np.exp(g(u) - g_max), u0, U, points=[float(us[peak])], limit=500, epsrel=1e-10)
    if val <= 0:
        return -np.inf, 0.0
    return g_max + float(np.log(val)), float(err / val)


def independent_product(
    phi: SequenceWeight,
    epsilon: float,
    rel_tol: float = 1e-6,
    n_max: int | None = None,
) -> ProductBound:
    """
    log P{sup_n |g_n| / phi(n) <= eps} = sum_n log P{|g| <= eps phi(n)}, exactly by independence.

    Indices up to HEAD_SIZE are summed directly. The remaining deficit terms decrease in n,
    so their sum lies between the integrals from N0+1 and from N0; the integral is taken in
    u = log n, which reaches the astronomically large indices that carry the mass.

    Args:
        phi (SequenceWeight): Increasing weight.
        epsilon (float): Radius.
        rel_tol (float): The result is `certified` when the bound on |log P - log_value| is at
            most rel_tol * max(1, -log P), i.e. log(-log P) is known to about rel_tol.
        n_max (int | None): Truncate the product to n <= n_max.

    Returns:
        ProductBound: log_value, direct-sum count, absolute bound on |log P - log_value|,
            log(-log P) and whether the bound meets `rel_tol`.

    Raises:
        DomainError: if eps <= 0, phi is not increasing or the product diverges to zero.
    """
    if not epsilon > 0:
        raise DomainError(f"Small-ball radius must be positive, got {epsilon}.")
    N0 = HEAD_SIZE if n_max is None else min(HEAD_SIZE, int(n_max))
    n = np.arange(1, N0 + 1, dtype=float)
    values = np.asarray(phi.value(n), dtype=float)
    if np.any(np.diff(values) <= 0):
        raise DomainError(f"Weight {phi.to_dict()} must be increasing.")

    log_terms = _log_deficit_terms(phi, epsilon, n)
    log_head = float(logsumexp(log_terms))
    log_deficit, tail_log_bound = log_head, 0.0
    log_half, log_err = -np.inf, -np.inf

    if n_max is None or n_max > N0:
        u_end = None if n_max is None else float(np.log(n_max))
        log_tail, rel_err = _log_tail_integral(phi, epsilon, float(np.log(N0)), u_end)
        # the tail sum lies in [I(N0) - a(N0), I(N0)], I(x) the integral from x
        log_last = float(log_terms[-1])
        with np.errstate(over="ignore", divide="ignore"):
            if log_tail > log_last:
                log_mid = log_tail + float(np.log1p(-0.5 * np.exp(log_last - log_tail)))
                log_half = log_last - float(np.log(2.0))
            else:
                log_mid = log_tail - float(np.log(2.0))
                log_half = log_mid
            log_err = log_tail + float(np.log(rel_err))
            tail_log_bound = float(np.exp(log_half) + np.exp(log_err))
        log_deficit = float(np.logaddexp(log_head, log_mid))

    with np.errstate(over="ignore"):
        log_value = -float(np.exp(log_deficit))
    # relative to max(1, -log P), in logs so that deficits beyond floating range still compare
    log_scale = max(log_deficit, 0.0)
    with np.errstate(over="ignore"):
        rel_bound = float(np.exp(log_half - log_scale) + np.exp(log_err - log_scale))
    certified = bool(rel_bound <= rel_tol)
    if not certified:
        logger.warning(
            f"Independent product eps={epsilon:.3e}: certificate {rel_bound:.3e} of the deficit "
            f"exceeds rel_tol {rel_tol:.1e}, result is not certified"
        )
    return ProductBound(
        log_value=log_value,
        n_factors_used=N0,
        tail_log_bound=tail_log_bound,
        log_deficit=log_deficit,
        certified=certified,
    )


def _geometric_lower(rho: float, epsilon: float, n_terms: int | None = None) -> float:
    """
    log of prod_{n>=1} P{|g| <= (eps/H) rho^(-n/2)}, H = sqrt(rho)/(1-sqrt(rho)).
    These events force sum_n |g_n| rho^n <= eps. Factors past NEGLIGIBLE_Z are
    replaced by twice the last deficit (the arguments grow geometrically).
    """
    H = np.sqrt(rho) / (1 - np.sqrt(rho))
    base = epsilon / H
    N = max(1, int(np.ceil(2 * np.log(NEGLIGIBLE_Z / base) / np.log(1 / rho)))) if base < NEGLIGIBLE_Z else 1
    if n_terms is not None:
        N = min(N, n_terms)
    x = base * rho ** (-np.arange(1, N + 1) / 2)
    total = float(np.sum(log_std_normal_interval(x)))
    if n_terms is None or n_terms > N:
        total -= 2 * float(np.exp(log_neg_log_std_normal_interval(x[-1])))
    return total


def geometric_ball_bounds(rho: float, epsilon: float) -> BallBounds:
    """
    Certified bounds on log P{sum_{n>=1} |g_n| rho^n <= eps}.

    Upper: the event forces |g_n| <= eps rho^(-n) for each n; the product keeps the factors
    n <= N' = max{n : rho^(-n) <= eps^(-1/2)}, dropping the rest only enlarges it.
    """
    if not 0 < rho < 1:
        raise DomainError(f"Geometric ratio must lie in (0, 1), got {rho}.")
    if not epsilon > 0:
        raise DomainError(f"Small-ball radius must be positive, got {epsilon}.")
    log_lower = _geometric_lower(rho, epsilon)
    n_prime = int(np.floor(0.5 * np.log(1 / epsilon) / np.log(1 / rho))) if epsilon < 1 else 0
    if n_prime >= 1:
        log_upper = float(np.sum(log_std_normal_interval(epsilon * rho ** -np.arange(1, n_prime + 1))))
    else:
        log_upper = 0.0
    return BallBounds(log_lower=log_lower, log_upper=min(log_upper, 0.0))


def loudseries_sandwich(fam: LoudFamily, epsilon: float, max_level: int | None = None) -> BallBounds:
    """
    Two-sided bounds on log P{sup_t |sum_k g_k phi_k(t)| <= eps}.

    Lower: sup |X| <= sum_k rho^k |g_k|, rho = p^(-2 alpha A), and the geometric lower product.
    Upper: for even p, X(1) = 0 and p^(2Ak) X(p^(-2Ak)) - p^(2A(k-1)) X(p^(-2A(k-1))) = g_k p^(2A(1-alpha)k),
    so the event forces |g_k| <= p^(2A alpha k) (1 + p^(-2A)) eps for every k.

    With `max_level`, the upper product only uses the diagonal points p^(-2Ak) of the
    level-`max_level` grid and the truncated series, so it bounds the grid sup of the
    sampled model.

    Raises:
        DomainError: for odd p, where the coarse teeth do not vanish on the diagonal points.
    """
    if not epsilon > 0:
        raise DomainError(f"Small-ball radius must be positive, got {epsilon}.")
    if fam.p % 2:
        raise DomainError(f"The diagonal recursion needs an even base, got p={fam.p}.")
    log_lower = _geometric_lower(fam.rho, epsilon)

    a = 2 * fam.A * fam.alpha * np.log(fam.p)
    scale = np.log1p(float(fam.p) ** (-2 * fam.A)) + np.log(epsilon)
    # factors are negligible once p^(2A alpha k)(1+p^(-2A)) eps > UNIT_FACTOR_Z
    k_max = max(0, int(np.ceil((np.log(UNIT_FACTOR_Z) - scale) / a)))
    if max_level is not None:
        k_max = min(k_max, fam.truncation, max_level // (2 * fam.A))
    k = np.arange(1, k_max + 1)
    log_upper = float(np.sum(log_std_normal_interval(np.exp(a * k + scale)))) if k_max else 0.0
    return BallBounds(log_lower=log_lower, log_upper=min(log_upper, 0.0))


def geometric_ratio_constants(rho: float, epsilon: float) -> dict:
    """-log of each bound divided by (log 1/eps)^2; both stay between positive constants."""
    bounds = geometric_ball_bounds(rho, epsilon)
    L2 = np.log(1 / epsilon) ** 2
    return {
        "epsilon": epsilon,
        "log_lower": bounds.log_lower,
        "log_upper": bounds.log_upper,
        "ratio_lower": -bounds.log_lower / L2,
        "ratio_upper": -bounds.log_upper / L2,
    }


def talagrand_lower_bound(
    phi_entropy: Callable,
    K: float,
    epsilon: float,
    eps_range=None,
    doubling_margin: float = 0.1,
) -> TalagrandReport:
    """
    Returns -K phi(eps), with estimates of the doubling constants
    c1 = min phi(e/2)/phi(e), c2 = max phi(e/2)/phi(e) over `eps_range`.
    The doubling condition requires c1 > 1; it is accepted when c1 >= 1 + doubling_margin.
    """
    if not K > 0:
        raise DomainError(f"Talagrand constant K must be positive, got {K}.")
    if not epsilon > 0:
        raise DomainError(f"Small-ball radius must be positive, got {epsilon}.")
    eps = np.logspace(-12, -1, 45) if eps_range is None else np.asarray(eps_range, dtype=float)
    values = np.asarray([phi_entropy(e) for e in eps], dtype=float)
    halved = np.asarray([phi_entropy(e / 2) for e in eps], dtype=float)
    at = float(phi_entropy(epsilon))
    if np.any(values <= 0) or np.any(halved <= 0) or not at > 0:
        raise DomainError("Entropy function must be positive on the requested range.")
    ratios = halved / values
    c1, c2 = float(ratios.min()), float(ratios.max())
    return TalagrandReport(log_bound=-K * at, c1=c1, c2=c2, doubling_ok=c1 >= 1 + doubling_margin)


def sidak_check(cov, z: float, n_samples: int, seed: SeedSpec) -> SidakReport:
    """
    Monte Carlo check of prod_j P{|X_j| <= z} <= P{max_j |X_j| <= z} for a centered
    Gaussian vector with covariance `cov` (dimension at most 10).
    """
    C = np.asarray(cov, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] > 10:
        raise DomainError(f"Covariance must be square of dimension <= 10, got shape {C.shape}.")
    if not np.allclose(C, C.T, atol=1e-12):
        raise DomainError("Covariance matrix is not symmetric.")
    lam, V = np.linalg.eigh(C)
    if lam.min() < -1e-10 * max(1.0, lam.max()):
        raise DomainError(f"Covariance matrix is not positive semidefinite (eigenvalue {lam.min():.3e}).")
    if n_samples < 1:
        raise DomainError(f"Monte Carlo needs at least one sample, got {n_samples}.")

    dim = C.shape[0]
    root = V * np.sqrt(np.clip(lam, 0, None))
    X = gaussian_stream(seed, n_samples * dim).reshape(n_samples, dim) @ root.T
    joint = float(np.mean(np.max(np.abs(X), axis=1) <= z))
    std_err = float(np.sqrt(joint * (1 - joint) / n_samples))

    sd = np.sqrt(np.diag(C))
    with np.errstate(divide="ignore"):
        log_factors = np.where(sd > 0, log_std_normal_interval(np.where(sd > 0, z / np.where(sd > 0, sd, 1), 0)), 0.0)
    log_product = float(np.sum(log_factors))
    product = float(np.exp(log_product))
    # never below 1/n: a zero-variance estimate is not evidence of a violation
    violation = product > joint + 3 * max(std_err, 1 / n_samples)
    if violation:
        logger.warning(f"Sidak product {product:.4g} exceeds joint estimate {joint:.4g} beyond 3 std_err")
    return SidakReport(
        joint_p_hat=joint,
        std_err=std_err,
        product=product,
        log_product=log_product,
        violation=bool(violation),
        n_samples=n_samples,
    )

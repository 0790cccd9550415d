"""
Scalar Gaussian special functions in linear and log scale, and the seeding
contract shared by every stochastic routine of the package.

All probabilities refer to a standard Gaussian g. Functions accept scalars or
numpy arrays and return the same shape (a python float for scalar input).
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc, log_ndtr

from .errors import DomainError

import logging
logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
LOG_SQRT_2_OVER_PI = 0.5 * np.log(2.0 / np.pi)
LOG2 = np.log(2.0)

# below this z the Taylor expansion of log erf is used
SMALL_Z = 1e-3
# above this z log P{|g|<=z} is computed from the complementary function
LARGE_Z = 1.0
# above this z, -log P{|g|<=z} is formed from the tail probability
TAIL_Z = 5.0

STREAM_BLOCK_SIZE = 2**16
UINT64_MAX = 2**64 - 1


def _as_nonnegative(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("Gaussian interval argument must not be NaN.")
    if np.any(arr < 0):
        raise DomainError(f"Gaussian interval argument must be nonnegative, got min {arr.min()}.")
    return arr, arr.ndim == 0


def _out(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def std_normal_interval(z):
    """P{|g| <= z} = erf(z/sqrt 2)."""
    arr, scalar = _as_nonnegative(z)
    return _out(erf(arr / SQRT2), scalar)


def log_std_normal_interval(z):
    """
    log P{|g| <= z}, accurate in relative terms down to z = 1e-12 and up to z = inf.

    Three regimes: a Taylor expansion of log erf for tiny z, log erf in the middle
    and log1p(-erfc) once erf is close to one.
    """
    arr, scalar = _as_nonnegative(z)
    out = np.empty_like(arr)
    with np.errstate(divide="ignore"):
        small = arr < SMALL_Z
        large = arr > LARGE_Z
        mid = ~(small | large)

        x2 = (arr[small] / SQRT2) ** 2
        series = -x2 / 3.0 + x2**2 / 10.0 - x2**3 / 42.0
        out[small] = np.log(arr[small]) + LOG_SQRT_2_OVER_PI + np.log1p(series)
        out[mid] = np.log(erf(arr[mid] / SQRT2))
        out[large] = np.log1p(-erfc(arr[large] / SQRT2))
    return _out(out, scalar)


def log_gaussian_two_sided_tail(z):
    """log P{|g| > z}."""
    arr, scalar = _as_nonnegative(z)
    return _out(LOG2 + log_ndtr(-arr), scalar)


def log_neg_log_std_normal_interval(z):
    """
    log(-log P{|g| <= z}).

    Stays finite where -log P itself is below the smallest float, i.e. for z up to
    about 38. It is +inf at z = 0 and -inf at z = inf.
    """
    arr, scalar = _as_nonnegative(z)
    out = np.empty_like(arr)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        near = arr < TAIL_Z
        out[near] = np.log(-log_std_normal_interval(arr[near]))

        far = ~near
        log_q = LOG2 + log_ndtr(-arr[far])
        q = np.exp(log_q)
        # -log1p(-q) = q(1 + q/2 + ...)
        correction = np.where(q > 1e-8, np.log(-np.log1p(-q) / np.where(q > 0, q, 1.0)), np.log1p(q / 2))
        out[far] = log_q + correction
    return _out(out, scalar)


@dataclass(frozen=True)
class SeedSpec:
    """
    Identifies one reproducible Gaussian stream.

    `master_seed` selects the experiment, `stream_id` the independent substream
    (process, path family or worker). Both are 64-bit unsigned integers.
    """
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or not 0 <= int(val) <= UINT64_MAX:
                raise DomainError(f"SeedSpec.{name} must be an integer in [0, 2^64), got {val!r}.")

    def substream(self, offset: int) -> "SeedSpec":
        """Stream `stream_id + offset` of the same master seed (wraps modulo 2^64)."""
        return SeedSpec(self.master_seed, (int(self.stream_id) + int(offset)) % (UINT64_MAX + 1))


def block_generator(seed: SeedSpec, block: int = 0) -> np.random.Generator:
    """
    Counter-based generator for block `block` of stream `seed`.

    The Philox key holds (master_seed, stream_id) and the block index is placed in the
    highest counter word, so blocks never overlap and each one can be regenerated on
    its own, in any order and on any worker.
    """
    if block < 0:
        raise DomainError(f"Block index must be nonnegative, got {block}.")
    key = np.array([seed.master_seed, seed.stream_id], dtype=np.uint64)
    counter = np.array([0, 0, 0, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def gaussian_stream(seed: SeedSpec, n: int) -> np.ndarray:
    """
    First `n` standard Gaussian variates of stream `seed`.

    The stream is the concatenation of fixed-size blocks, so a longer request
    extends a shorter one and block b can be recomputed independently.
    """
    if n < 0:
        raise DomainError(f"Number of variates must be nonnegative, got {n}.")
    out = np.empty(n, dtype=float)
    n_blocks = -(-n // STREAM_BLOCK_SIZE)
    for block in range(n_blocks):
        start = block * STREAM_BLOCK_SIZE
        stop = min(n, start + STREAM_BLOCK_SIZE)
        out[start:stop] = block_generator(seed, block).standard_normal(stop - start)
    return out

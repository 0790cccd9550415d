"""
Increasing weights phi on the positive integers, used by the Gaussian sequence
G_n = g_n / phi(n) and by its sieve partitions.

The indices that matter for small-ball laws of G are astronomically large, so
every weight can be evaluated at a log-argument u = log n and inverted in log
scale.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError

import logging
logger = logging.getLogger(__name__)

# generalized inverses below e^EXACT_LOG_LIMIT are resolved to the exact integer
EXACT_LOG_LIMIT = 36.0


class SequenceWeight(ABC):
    """
    Nondecreasing weight phi(n), n >= 1, tending to infinity.
    """

    shift: float

    @abstractmethod
    def value(self, n):
        """phi(n) for integer (or real) n >= 1."""
        pass

    @abstractmethod
    def value_at_log(self, u):
        """phi(e^u), finite for every real u >= 0."""
        pass

    @abstractmethod
    def _level_inverse(self, x: float) -> float:
        """Real u with phi(e^u) = x, for x > phi(1)."""
        pass

    @abstractmethod
    def to_dict(self) -> dict:
        pass

    def log_inverse(self, x: float) -> float:
        """
        log of the generalized inverse F = min{t >= 1 integer : phi(t) >= x}.
        """
        if not np.isfinite(x):
            raise DomainError(f"Generalized inverse needs a finite level, got {x}.")
        if x <= self.value(1):
            return 0.0
        u = self._level_inverse(x)
        if u < EXACT_LOG_LIMIT:
            return float(np.log(self._exact_inverse(x, u)))
        return float(u)

    def inverse(self, x: float) -> int | None:
        """Exact generalized inverse, or None when it exceeds e^36."""
        if x <= self.value(1):
            return 1
        u = self._level_inverse(x)
        if u < EXACT_LOG_LIMIT:
            return self._exact_inverse(x, u)
        return None

    def _exact_inverse(self, x: float, u: float) -> int:
        F = max(1, int(np.ceil(np.exp(u))))
        while F > 1 and self.value(F - 1) >= x:
            F -= 1
        while self.value(F) < x:
            F += 1
        return F

    def check_growth(self, u_max: float = 1e4, n_check: int = 200) -> float:
        """
        Verifies on [1, u_max] (in log-argument) that phi increases and that
        phi(n) / sqrt(log n) increases, the continuity requirement for G.
        Returns the final ratio.
        """
        u = np.linspace(1.0, u_max, n_check)
        vals = np.asarray(self.value_at_log(u), dtype=float)
        if np.any(np.diff(vals) <= 0):
            raise DomainError(f"Weight {self.to_dict()} is not increasing on the computed range.")
        ratio = vals / np.sqrt(u)
        if np.any(np.diff(ratio) <= 0):
            raise DomainError(
                f"Weight {self.to_dict()}: phi(n) / sqrt(log n) does not increase on the computed range, "
                "the sequence is not sample continuous."
            )
        return float(ratio[-1])


@dataclass(frozen=True)
class LogPowerWeight(SequenceWeight):
    """phi(n) = (log(n + shift))^beta."""
    beta: float
    shift: float = 2.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"LogPowerWeight.beta must be positive, got {self.beta}.")
        if not self.shift > 0:
            raise DomainError("LogPowerWeight needs log(1 + shift) > 0 so that phi(1) > 0.")

    def value(self, n):
        return np.log(np.asarray(n, dtype=float) + self.shift) ** self.beta

    def value_at_log(self, u):
        u = np.asarray(u, dtype=float)
        return (u + np.log1p(self.shift * np.exp(-u))) ** self.beta

    def _level_inverse(self, x: float) -> float:
        L = x ** (1 / self.beta)
        # log(e^L - shift)
        return float(L + np.log1p(-self.shift * np.exp(-L)))

    def to_dict(self) -> dict:
        return {"family": "log_power", "beta": self.beta, "shift": self.shift}


@dataclass(frozen=True)
class LogLogWeight(SequenceWeight):
    """phi(n) = (log(n + shift))^(1/2) * (log log(n + shift))^(1 + h)."""
    h: float
    shift: float = 2.0

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError(f"LogLogWeight.h must be positive, got {self.h}.")
        if np.log(np.log(1 + self.shift)) <= 0:
            raise DomainError("LogLogWeight needs log log(1 + shift) > 0.")

    def _of_L(self, L):
        return np.sqrt(L) * np.log(L) ** (1 + self.h)

    def value(self, n):
        return self._of_L(np.log(np.asarray(n, dtype=float) + self.shift))

    def value_at_log(self, u):
        u = np.asarray(u, dtype=float)
        return self._of_L(u + np.log1p(self.shift * np.exp(-u)))

    def _level_inverse(self, x: float) -> float:
        L_lo = np.log(1 + self.shift)
        L_hi = 2 * L_lo
        while self._of_L(L_hi) < x:
            L_hi *= 2
            if not np.isfinite(L_hi):
                raise DomainError(f"LogLogWeight level {x} is beyond floating range.")
        L = brentq(lambda L: self._of_L(L) - x, L_lo, L_hi, xtol=1e-14, rtol=1e-15)
        return float(L + np.log1p(-self.shift * np.exp(-L)))

    def to_dict(self) -> dict:
        return {"family": "log_log", "h": self.h, "shift": self.shift}


class CallableWeight(SequenceWeight):
    """
    Arbitrary nondecreasing weight given as a python callable on positive reals.
    Inversion is by bisection on integers, so indices must stay below 2^62.
    """

    shift = 0.0

    def __init__(self, fn: Callable, name: str = "callable"):
        self.fn = fn
        self.name = name

    def value(self, n):
        return np.asarray(self.fn(np.asarray(n, dtype=float)), dtype=float)

    def value_at_log(self, u):
        with np.errstate(over="ignore"):
            return self.value(np.exp(np.asarray(u, dtype=float)))

    def _level_inverse(self, x: float) -> float:
        hi = 2
        while self.value(hi) < x:
            hi *= 2
            if hi > 2**62:
                raise DomainError(f"Weight '{self.name}' does not reach level {x} below 2^62.")
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.value(mid) >= x:
                hi = mid
            else:
                lo = mid
        return float(np.log(hi))

    def to_dict(self) -> dict:
        return {"family": "callable", "name": self.name}

from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Iterator

import numpy as np

from ..errors import BudgetExceededError, DomainError
from ..gaussmath import SeedSpec, block_generator

import logging
logger = logging.getLogger(__name__)

# paths per generator block; fixed so that sampling does not depend on the worker count
PATH_BLOCK_SIZE = 1024
DEFAULT_SAMPLE_BUDGET = 5 * 10**8


class ProcessModel(ABC):
    """
    Abstract Gaussian process given by a finite series X(t) = sum_k B_k(t) g_k.
    Provides the intrinsic metric, covariance and reproducible path sampling.
    Specific processes (Loud series, sequences, tree processes) must subclass this.
    """

    kind: str = ""

    @abstractmethod
    def basis(self, grid) -> np.ndarray:
        """
        Coefficient matrix of the process on a grid.

        Args:
            grid: Index points of the model (array-like, or a model-specific grid object).

        Returns:
            np.ndarray: Matrix B of shape (len(grid), K) with X(grid[i]) = sum_k B[i, k] g_k.
        """
        pass

    @abstractmethod
    def parameters(self) -> dict:
        """
        Plain-dict description of the model parameters, echoed into run manifests.
        """
        pass

    def basis_count(self, grid) -> int:
        """Effective truncation level of the series on a grid."""
        return self.basis(grid).shape[1]

    def path_modulus(self, mesh: float) -> float:
        """
        Width of the band by which the sup over a grid of the given mesh may undershoot the
        continuous sup, at Gaussian envelope level 1e-6. Zero for discrete index sets.
        """
        return 0.0

    def intrinsic_distance(self, s, t) -> float:
        """d(s, t) = ||X(s) - X(t)||_2."""
        B = self.basis(self._pair_grid(s, t))
        return float(np.linalg.norm(B[0] - B[1]))

    def covariance(self, grid) -> np.ndarray:
        B = self.basis(grid)
        return B @ B.T

    def sup_sigma(self, grid) -> float:
        """sigma = max over the grid of ||X(t)||_2."""
        B = self.basis(grid)
        return float(np.sqrt(np.max(np.sum(B**2, axis=1)))) if B.size else 0.0

    def _pair_grid(self, s, t):
        return np.array([s, t], dtype=float)

    # ----sampling----

    def _prepare(self, grid) -> Any:
        """State reused by every block of a sampling run (default: the coefficient matrix)."""
        return self.basis(grid)

    def _n_coefficients(self, state: Any) -> int:
        return state.shape[1]

    def _paths(self, coefficients: np.ndarray, state: Any) -> np.ndarray:
        return coefficients @ state.T

    def _block(self, block: int, n_paths: int, seed: SeedSpec, state: Any) -> np.ndarray:
        start = block * PATH_BLOCK_SIZE
        n_block = min(PATH_BLOCK_SIZE, n_paths - start)
        gen = block_generator(seed, block)
        coefficients = gen.standard_normal((n_block, self._n_coefficients(state)))
        return self._paths(coefficients, state)

    def iter_path_blocks(
        self,
        grid,
        n_paths: int,
        seed: SeedSpec,
        n_workers: int = 1,
    ) -> Iterator[np.ndarray]:
        """
        Yields consecutive blocks of sampled paths (rows) in path order.

        Block b always uses the generator block b of `seed`, so concatenated output
        is the same for any `n_workers`.
        """
        if n_paths < 0:
            raise DomainError(f"Number of paths must be nonnegative, got {n_paths}.")
        state = self._prepare(grid)
        n_blocks = -(-n_paths // PATH_BLOCK_SIZE)
        if n_workers <= 1:
            for block in range(n_blocks):
                yield self._block(block, n_paths, seed, state)
            return
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            # map keeps block order
            for chunk_start in range(0, n_blocks, 4 * n_workers):
                chunk = range(chunk_start, min(n_blocks, chunk_start + 4 * n_workers))
                yield from executor.map(lambda b: self._block(b, n_paths, seed, state), chunk)

    def sample_paths(
        self,
        grid,
        n_paths: int,
        seed: SeedSpec,
        budget: int = DEFAULT_SAMPLE_BUDGET,
        n_workers: int = 1,
    ) -> np.ndarray:
        """
        Matrix of shape (n_paths, len(grid)); row r is one realization with a single
        coefficient draw shared by all grid points.

        Raises:
            BudgetExceededError: if n_paths * len(grid) exceeds `budget`.
        """
        n_grid = len(grid)
        if n_paths * n_grid > budget:
            raise BudgetExceededError(
                f"Sampling {n_paths} paths on {n_grid} points exceeds the budget of {budget} values."
            )
        if n_paths == 0:
            return np.empty((0, n_grid))
        return np.vstack(list(self.iter_path_blocks(grid, n_paths, seed, n_workers)))

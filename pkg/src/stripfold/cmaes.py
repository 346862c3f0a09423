"""Covariance matrix adaptation evolution strategy (minimization).

Standard mu/lambda weighted-recombination variant with cumulative step-size
adaptation and rank-one plus rank-mu covariance updates. Sampling is driven
by a caller-owned ``numpy.random.Generator`` so runs replay exactly.
"""

from __future__ import annotations

import math

import numpy as np


class CMAES:
    """Ask/tell optimizer minimizing a function of an n-dimensional vector."""

    def __init__(self, x0, sigma0: float, popsize: int | None = None,
                 rng: np.random.Generator | None = None):
        self.mean = np.array(x0, dtype=float)
        self.n = len(self.mean)
        self.sigma = float(sigma0)
        if self.sigma <= 0:
            raise ValueError("sigma0 must be positive")
        self.rng = rng if rng is not None else np.random.default_rng()

        n = self.n
        self.lam = popsize if popsize is not None else 4 + int(3 * math.log(n))
        if self.lam < 4:
            raise ValueError("population size must be >= 4")
        self.mu = self.lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / (self.weights ** 2).sum()

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff)
                       / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrt_c = np.eye(n)
        self.eigen_stale = 0
        self.count_evals = 0
        self.generation = 0
        self.best_x = self.mean.copy()
        self.best_f = math.inf

    def ask(self) -> np.ndarray:
        """Sample lambda candidates, shape (lam, n)."""
        z = self.rng.standard_normal((self.lam, self.n))
        self._candidates = self.mean + self.sigma * (z * self.D) @ self.B.T
        return self._candidates.copy()

    def tell(self, candidates: np.ndarray, fitnesses) -> None:
        """Rank by fitness (lower is better) and update the distribution."""
        fit = np.asarray(fitnesses, dtype=float)
        if len(fit) != len(candidates):
            raise ValueError("one fitness per candidate required")
        self.count_evals += len(fit)
        self.generation += 1
        order = np.argsort(fit, kind="stable")
        if fit[order[0]] < self.best_f:
            self.best_f = float(fit[order[0]])
            self.best_x = candidates[order[0]].copy()

        n, sigma = self.n, self.sigma
        old_mean = self.mean.copy()
        sel = candidates[order[: self.mu]]
        self.mean = self.weights @ sel

        y = (self.mean - old_mean) / sigma
        c_inv_y = self.invsqrt_c @ y
        self.ps = ((1 - self.cs) * self.ps
                   + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * c_inv_y)
        hsig = (np.linalg.norm(self.ps)
                / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation))
                / self.chi_n) < 1.4 + 2 / (n + 1)
        self.pc = ((1 - self.cc) * self.pc
                   + (math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y
                      if hsig else 0.0))

        artmp = (sel - old_mean) / sigma
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc)
                               + (0.0 if hsig else self.cc * (2 - self.cc)) * self.C)
                  + self.cmu * artmp.T @ (self.weights[:, None] * artmp))
        self.sigma *= math.exp((self.cs / self.damps)
                               * (np.linalg.norm(self.ps) / self.chi_n - 1))

        self.eigen_stale += 1
        if self.eigen_stale > max(1, int(1 / ((self.c1 + self.cmu) * n * 10))):
            self._update_eigen()

    def _update_eigen(self) -> None:
        self.eigen_stale = 0
        self.C = (self.C + self.C.T) / 2
        d2, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(d2, 1e-30))
        self.invsqrt_c = (self.B / self.D) @ self.B.T


def fmin(func, x0, sigma0: float, popsize: int | None = None,
         max_evals: int = 100_000, f_target: float = -math.inf,
         rng: np.random.Generator | None = None):
    """Minimize ``func``; returns (best_x, best_f, n_evals)."""
    es = CMAES(x0, sigma0, popsize=popsize, rng=rng)
    while es.count_evals < max_evals and es.best_f > f_target:
        xs = es.ask()
        es.tell(xs, [func(x) for x in xs])
    return es.best_x, es.best_f, es.count_evals

"""Evolutionary coordinate selection.

Each iteration picks the coordinate subset ``z`` that the network trains on:

1. survivors: the ``k`` coordinates with the largest cached squared error
   (``x_low``) and the ``k`` with the largest squared Laplacian residual
   (``x_high``); the cache is refreshed only at key iterations;
2. crossover: keep ``x_low & x_high`` and fill back to ``k`` with uniform
   draws from the two exclusive parts, split by the low/high error ratio;
3. mutation: add ``round(alpha * k)`` uniform draws from the rest.

Index sets are sorted 1-D ``int64`` arrays.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .laplacian import high_freq_residual
from .mlp import MlpModel
from .signal import Signal, round_half_up

INTERVAL_FORMULAS = ("relative", "absolute")


@dataclass(frozen=True)
class SelectorConfig:
    tau: float = 100.0
    theta: float = 0.01
    alpha: float = 0.5
    total_iterations: int = 5000
    use_crossover: bool = True
    use_mutation: bool = True
    use_fitness_eval: bool = True
    rng_seed: int = 0
    # "relative": interval tau - theta*t/T as written; "absolute": tau - theta*t
    interval_formula: str = "relative"
    laplacian_kernel: int = 4

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if self.interval_formula not in INTERVAL_FORMULAS:
            raise ValueError(f"interval_formula must be one of {INTERVAL_FORMULAS}")


def key_interval(t: int, config: SelectorConfig) -> int:
    """Spacing between key iterations at step ``t``, rounded and clamped to >= 1."""
    if config.interval_formula == "relative":
        raw = config.tau - config.theta * t / config.total_iterations
    else:
        raw = config.tau - config.theta * t
    return max(1, round_half_up(raw))


def gamma(t: int, config: SelectorConfig) -> int:
    """1 at key iterations (fitness re-evaluated), else 0.

    ``t = 1`` is always a key iteration since nothing is cached yet, and an
    interval of 1 makes every iteration a key iteration.
    """
    if t == 1:
        return 1
    interval = key_interval(t, config)
    if interval == 1:
        return 1
    return int(t % interval == 1)


def top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values, ties to the lower index; sorted."""
    values = np.asarray(values)
    if not 1 <= k <= values.size:
        raise ValueError(f"k={k} outside [1, {values.size}]")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:k])


@dataclass
class FitnessCache:
    """Full-grid evaluation from the last key iteration."""

    predictions: np.ndarray
    low_fitness: np.ndarray
    high_fitness: np.ndarray
    last_key_iteration: int
    _orders: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.low_fitness.size

    @property
    def low_aggregate(self) -> float:
        return float(self.low_fitness.mean())

    @property
    def high_aggregate(self) -> float:
        return float(self.high_fitness.mean())

    def order(self, which: str) -> np.ndarray:
        """Indices sorted by descending fitness (stable), computed once per cache."""
        if which not in self._orders:
            values = self.low_fitness if which == "low" else self.high_fitness
            self._orders[which] = np.argsort(-values, kind="stable")
        return self._orders[which]


def refresh_cache(model: MlpModel, signal: Signal, t: int, kernel: int = 4) -> FitnessCache:
    """Evaluate the model on the whole grid and rebuild both fitness vectors."""
    pred = model.predict(signal.coords)
    if not np.all(np.isfinite(pred)):
        raise FloatingPointError(f"non-finite predictions at iteration {t}")
    diff = pred.astype(np.float64) - signal.attrs
    low = np.einsum("ij,ij->i", diff, diff)
    high = high_freq_residual(pred.astype(np.float64), signal.attrs, signal.grid, kernel)
    return FitnessCache(pred, low, high, t)


def select_survivors(cache: FitnessCache, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` coordinates by low- and high-frequency fitness."""
    if not 1 <= k <= cache.size:
        raise ValueError(f"k={k} outside [1, {cache.size}]")
    return np.sort(cache.order("low")[:k]), np.sort(cache.order("high")[:k])


def balance_ratio(low_aggregate: float, high_aggregate: float) -> float:
    """Share of balancer draws taken from the low-frequency parent."""
    total = low_aggregate + high_aggregate
    if total == 0:
        return 0.5
    return low_aggregate / total


def balancer_split(p: float, l: int) -> tuple[int, int]:
    n_low = round_half_up(p * l)
    return n_low, l - n_low


def _mask(indices: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[indices] = True
    return m


def crossover(x_low: np.ndarray, x_high: np.ndarray, cache: FitnessCache, k: int,
              rng: np.random.Generator) -> np.ndarray:
    """Offspring of size ``k``: the parents' intersection plus balanced uniform fill."""
    if len(x_low) != k or len(x_high) != k:
        raise ValueError("both parent sets must have exactly k members")
    n = cache.size
    in_low = _mask(x_low, n)
    in_high = _mask(x_high, n)
    return _cross(in_low, in_high, balance_ratio(cache.low_aggregate, cache.high_aggregate),
                  k, rng)


def _cross(in_low, in_high, p, k, rng):
    both = in_low & in_high
    only_low = np.flatnonzero(in_low & ~in_high)
    only_high = np.flatnonzero(in_high & ~in_low)
    l = k - int(np.count_nonzero(both))
    n_low, n_high = balancer_split(p, l)
    w = both.copy()
    w[rng.choice(only_low, n_low, replace=False)] = True
    w[rng.choice(only_high, n_high, replace=False)] = True
    return np.flatnonzero(w)


def mutate(w: np.ndarray, n: int, alpha: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """Add ``round(alpha * k)`` uniform draws from outside ``w``."""
    count = round_half_up(alpha * k)
    if count > n - len(w):
        raise ValueError(f"cannot draw {count} mutants from {n - len(w)} unselected coordinates")
    return _add_uniform(w, n, count, rng)


def _add_uniform(w, n, count, rng):
    if count == 0:
        return np.asarray(w, dtype=np.int64)
    z = _mask(w, n)
    z[rng.choice(np.flatnonzero(~z), count, replace=False)] = True
    return np.flatnonzero(z)


def uniform_subset(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= size <= n:
        raise ValueError(f"cannot draw {size} of {n} coordinates")
    return np.sort(rng.choice(n, size, replace=False))


@dataclass
class SelectorState:
    iteration: int
    k: int
    gamma: int
    survivors_low: np.ndarray | None
    survivors_high: np.ndarray | None
    offspring: np.ndarray | None
    subset: np.ndarray


class EvolutionarySelector:
    """Holds the fitness cache and random stream for one training run."""

    def __init__(self, config: SelectorConfig, signal: Signal, rng: np.random.Generator):
        self.config = config
        self.signal = signal
        self.rng = rng
        self.cache: FitnessCache | None = None
        self.refresh_count = 0
        self.refresh_seconds = 0.0  # time of the last call's cache refresh
        self._parents = None  # (cache iteration, k) -> parent masks

    def refresh(self, model: MlpModel, t: int) -> FitnessCache:
        start = time.perf_counter()
        self.cache = refresh_cache(model, self.signal, t, self.config.laplacian_kernel)
        self.refresh_count += 1
        self._parents = None
        self.refresh_seconds = time.perf_counter() - start
        return self.cache

    def _parent_masks(self, k: int):
        key = (self.cache.last_key_iteration, k)
        if self._parents is None or self._parents[0] != key:
            x_low, x_high = select_survivors(self.cache, k)
            n = self.cache.size
            self._parents = (key, x_low, x_high, _mask(x_low, n), _mask(x_high, n))
        return self._parents[1:]

    def select(self, model: MlpModel, t: int, k: int) -> SelectorState:
        cfg = self.config
        n = self.signal.size
        self.refresh_seconds = 0.0
        if cfg.use_fitness_eval:
            g = gamma(t, cfg)
        else:
            g = int(self.cache is None)
        if g:
            self.refresh(model, t)
        # rounding can ask for one more mutant than exists once q reaches N;
        # the draw is capped so z becomes the whole grid
        mutants = min(round_half_up(cfg.alpha * k), n - k) if cfg.use_mutation else 0
        if not cfg.use_fitness_eval:
            z = uniform_subset(n, k + mutants, self.rng)
            return SelectorState(t, k, g, None, None, None, z)
        x_low, x_high, m_low, m_high = self._parent_masks(k)
        if cfg.use_crossover:
            p = balance_ratio(self.cache.low_aggregate, self.cache.high_aggregate)
            w = _cross(m_low, m_high, p, k, self.rng)
        else:
            w = x_low
        z = _add_uniform(w, n, mutants, self.rng)
        return SelectorState(t, k, g, x_low, x_high, w, z)

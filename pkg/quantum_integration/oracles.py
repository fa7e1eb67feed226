import math
import logging
import threading

import numpy as np

from enum import Enum
from typing import Callable, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, field_validator, model_validator

from quantum_integration.utils import MAX_ENUMERATION, CapacityException, DomainException, exact_log2, is_power_of_two

logger = logging.getLogger(__name__)

RANGE_TOLERANCE = 1e-12

class RangeException(Exception):
    """
    Raised when an integrand (or a scaled statistic) leaves [0, 1] at some grid point.
    """

    def __init__(self, message: str, point: Tuple[int, ...]):
        super().__init__(message)

        self.message = message
        self.point = point

class GridDomain(BaseModel):
    """
    The grid [0..M-1]^d; grid point (a_1, ..., a_d) samples the continuous integrand at (a_1 / M, ..., a_d / M).
    Points are flattened in C order, a_1 being the most significant coordinate.
    """
    model_config = ConfigDict(frozen=True)

    d: PositiveInt
    M: PositiveInt

    @field_validator("M")
    def check_points_per_axis(cls, v):
        if v < 2 or not is_power_of_two(v):
            raise ValueError("Points per axis must be a power of two >= 2.")
        return v

    @model_validator(mode="after")
    def check_size(self):
        if self.d * exact_log2(self.M) > 62:
            raise ValueError("M^d must be representable as a 64-bit integer.")
        return self

    @property
    def size(self) -> int:
        return self.M ** self.d

    @property
    def qubits(self) -> int:
        return self.d * exact_log2(self.M)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.M,) * self.d

    def points(self, indices: Optional[np.ndarray] = None) -> np.ndarray:
        if indices is None:
            indices = np.arange(self.size)
        return np.stack(np.unravel_index(indices, self.shape), axis=-1)

    def point(self, index: int) -> Tuple[int, ...]:
        return tuple(int(coordinate) for coordinate in np.unravel_index(index, self.shape))

    def index(self, point: Tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(tuple(point), self.shape))

class IntegrandOracle():
    """
    Black-box grid function f with values in [0, 1].

    `evaluator` maps an integer array of grid points of shape (n, d) to n values. It must be pure.
    Every logical query goes through `record_queries`; `values()` exposes the full table to the simulator without charging,
    the statevector operations charge what the complexity model says they cost.
    """

    def __init__(self, domain: GridDomain, evaluator: Callable[[np.ndarray], np.ndarray], memo: bool = True, name: str = "f"):
        self.domain = domain
        self.evaluator = evaluator
        self.memo = memo
        self.name = name

        self.__queries = 0
        self.__lock = threading.Lock()
        self.__cache = None

    @property
    def queries(self) -> int:
        return self.__queries

    def record_queries(self, count: int):
        if count < 0:
            raise DomainException(f"Query count must be non-negative, got {count}.", count)
        with self.__lock:
            self.__queries += int(count)

    def __evaluate(self, points: np.ndarray) -> np.ndarray:
        values = np.asarray(self.evaluator(points), dtype=np.float64)
        values = np.broadcast_to(values, (points.shape[0],)).astype(np.float64)

        offending = np.flatnonzero(~np.isfinite(values) | (values < -RANGE_TOLERANCE) | (values > 1.0 + RANGE_TOLERANCE))
        if offending.size > 0:
            point = tuple(int(coordinate) for coordinate in points[offending[0]])
            raise RangeException(f"{self.name} evaluates to {values[offending[0]]} at grid point {point}, outside [0, 1].", point)

        return np.clip(values, 0.0, 1.0)

    def values(self) -> np.ndarray:
        if self.__cache is not None:
            return self.__cache

        if self.domain.size > MAX_ENUMERATION:
            raise CapacityException(f"Domain of {self.domain.size} points exceeds the enumeration cap {MAX_ENUMERATION}.", self.domain.size)

        values = self.__evaluate(self.domain.points())
        values.setflags(write=False)

        if self.memo:
            self.__cache = values

        return values

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.domain.d)

        if self.memo and self.__cache is not None:
            values = self.__cache[np.ravel_multi_index(tuple(points.T), self.domain.shape)]
        else:
            values = self.__evaluate(points)

        self.record_queries(points.shape[0])

        return values

    def __call__(self, point: Tuple[int, ...]) -> float:
        return float(self.evaluate(np.asarray(point).reshape(1, -1))[0])

class BooleanOracle():
    """
    Boolean extension b(a, q) = 1 iff q < round(f(a) * Q), q in [0, Q).
    Domain points are flattened as `index = a * Q + q` so q occupies the least significant qubits.
    """

    def __init__(self, base: IntegrandOracle, Q: int):
        if not is_power_of_two(Q) or Q < 2:
            raise DomainException(f"Q must be a power of two >= 2, got {Q}.", Q)

        self.base = base
        self.Q = Q

        self.__queries = 0
        self.__lock = threading.Lock()
        self.__counts = None
        self.__mask = None

    @property
    def size(self) -> int:
        return self.base.domain.size * self.Q

    @property
    def qubits(self) -> int:
        return self.base.domain.qubits + exact_log2(self.Q)

    @property
    def queries(self) -> int:
        return self.__queries

    def record_queries(self, count: int):
        with self.__lock:
            self.__queries += int(count)

    def true_counts(self) -> np.ndarray:
        if self.__counts is None:
            # NOTE: round half up, so every per-point count is within 1/2 of f * Q
            self.__counts = np.floor(self.base.values() * self.Q + 0.5).astype(np.int64)
        return self.__counts

    def marked_mask(self) -> np.ndarray:
        if self.__mask is None:
            if self.size > MAX_ENUMERATION:
                raise CapacityException(f"Boolean domain of {self.size} points exceeds the enumeration cap {MAX_ENUMERATION}.", self.size)
            mask = np.arange(self.Q)[None, :] < self.true_counts()[:, None]
            self.__mask = mask.reshape(-1)
            self.__mask.setflags(write=False)
        return self.__mask

    def __call__(self, point: Tuple[int, ...], q: int) -> int:
        if not 0 <= q < self.Q:
            raise DomainException(f"q must lie in [0, {self.Q}), got {q}.", q)

        self.record_queries(1)

        return int(q < self.true_counts()[self.base.domain.index(point)])

class EstimatorMethod(str, Enum):
    QM_SAMPLING = "qm_sampling"
    QM_ITERATED = "qm_iterated"
    QM_GROVER_FFT = "qm_fft"
    QC_SAMPLING = "qc_sampling"
    QC_FFT = "qc_fft"
    SQRT_SAMPLING = "sqrt_sampling"
    SQRT_FFT = "sqrt_fft"
    CLASSICAL_MC = "classical_mc"
    CLASSICAL_EXACT = "classical_exact"

class Estimate(BaseModel):
    value: float = Field(ge=0.0, le=1.0)
    target_accuracy: PositiveFloat
    oracle_queries: NonNegativeInt
    shots: NonNegativeInt
    method: EstimatorMethod
    seed: int = 0
    count_estimate: Optional[int] = None

def make_grid_oracle(g: Callable[[np.ndarray], np.ndarray], domain: GridDomain, memo: bool = True, name: str = "f") -> IntegrandOracle:
    """
    Sample a continuous integrand g on [0, 1]^d at x_i = a_i / M. `g` receives an (n, d) float array.
    """
    return IntegrandOracle(domain, lambda points: g(points / domain.M), memo=memo, name=name)

def true_mean(oracle: IntegrandOracle) -> float:
    """
    Exact mean by full enumeration; charges M^d queries.
    """
    values = oracle.values()

    oracle.record_queries(oracle.domain.size)

    return float(np.mean(values))

def make_boolean_extension(oracle: IntegrandOracle, Q: int) -> BooleanOracle:
    return BooleanOracle(oracle, Q)

def count_true(boolean: BooleanOracle) -> int:
    if boolean.size > MAX_ENUMERATION:
        raise CapacityException(f"Boolean domain of {boolean.size} points exceeds the enumeration cap {MAX_ENUMERATION}.", boolean.size)

    boolean.record_queries(boolean.size)

    return int(np.sum(boolean.true_counts()))

def classical_exact_estimate(oracle: IntegrandOracle, epsilon: float) -> Estimate:
    before = oracle.queries
    value = true_mean(oracle)

    return Estimate(
        value=value,
        target_accuracy=epsilon,
        oracle_queries=oracle.queries - before,
        shots=0,
        method=EstimatorMethod.CLASSICAL_EXACT,
    )

def monte_carlo_estimate(oracle: IntegrandOracle, n_samples: int, seed: int, epsilon: Optional[float] = None) -> Estimate:
    """
    Plain Monte Carlo: the mean of f at n uniformly drawn grid points (with replacement).
    """
    if n_samples < 1:
        raise DomainException(f"At least one sample is required, got {n_samples}.", n_samples)

    generator = np.random.default_rng(seed)
    before = oracle.queries

    points = generator.integers(0, oracle.domain.M, size=(n_samples, oracle.domain.d))
    value = float(np.mean(oracle.evaluate(points)))

    return Estimate(
        value=min(1.0, max(0.0, value)),
        target_accuracy=epsilon if epsilon is not None else 1.0 / math.sqrt(n_samples),
        oracle_queries=oracle.queries - before,
        shots=n_samples,
        method=EstimatorMethod.CLASSICAL_MC,
        seed=seed,
    )

import math
import logging
import itertools

import numpy as np

from typing import Callable, Dict, Optional, Tuple
from pydantic import BaseModel, ConfigDict, PositiveInt, field_validator

from quantum_integration.utils import CapacityException, exact_log2, is_power_of_two
from quantum_integration.oracles import GridDomain, IntegrandOracle, RangeException, RANGE_TOLERANCE

logger = logging.getLogger(__name__)

MAX_ORACLE_QUBITS = 25
MAX_BRUTE_FORCE_PATHS = 2 ** 20

class StochasticProcessSpec(BaseModel):
    """
    A discrete-time process w_1, ..., w_N driven by independent uniform draws r_i in [0, 1).

    transition(step, previous, draws) -> w_step for a batch of paths: `previous` has shape (n, step + 1) and holds
    w_0 (the initial value) followed by w_1 ... w_{step}, `draws` has shape (n,).
    statistic(paths) -> v for paths of shape (n, N).
    The statistic is mapped onto [0, 1] with the affine scale (v - low) / (high - low) and raised to `moment`.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    steps: PositiveInt
    branching: PositiveInt = 2
    transition: Callable
    statistic: Callable
    statistic_range: Tuple[float, float]
    moment: PositiveInt = 1
    initial_value: float = 0.0

    @field_validator("branching")
    def check_branching(cls, v):
        if v < 2 or not is_power_of_two(v):
            raise ValueError("Branching factor must be a power of two >= 2.")
        return v

    @field_validator("statistic_range")
    def check_statistic_range(cls, v):
        low, high = v
        if not (math.isfinite(low) and math.isfinite(high)) or low >= high:
            raise ValueError("Statistic range must be a finite interval with low < high.")
        return v

    @property
    def qubits(self) -> int:
        return self.steps * exact_log2(self.branching)

    def scale(self, statistic: np.ndarray) -> np.ndarray:
        low, high = self.statistic_range
        return (np.asarray(statistic, dtype=np.float64) - low) / (high - low)

    def roll(self, draws: np.ndarray) -> np.ndarray:
        """
        Roll a batch of paths forward; `draws` has shape (n, N). Returns w_1 ... w_N with shape (n, N).
        """
        walk = np.empty((draws.shape[0], self.steps + 1), dtype=np.float64)
        walk[:, 0] = self.initial_value

        for step in range(self.steps):
            walk[:, step + 1] = self.transition(step, walk[:, :step + 1], draws[:, step])

        return walk[:, 1:]

    def scaled_moment_values(self, draws: np.ndarray) -> np.ndarray:
        scaled = self.scale(self.statistic(self.roll(draws)))

        offending = np.flatnonzero((scaled < -RANGE_TOLERANCE) | (scaled > 1.0 + RANGE_TOLERANCE))
        if offending.size > 0:
            point = tuple(int(round(r * self.branching)) for r in draws[offending[0]])
            raise RangeException(f"Scaled statistic {scaled[offending[0]]} for path {point} lies outside [0, 1]; widen the statistic range.", point)

        return np.clip(np.clip(scaled, 0.0, 1.0) ** self.moment, 0.0, 1.0)

class MomentSummary(BaseModel):
    mean: float
    variance: float
    skewness: Optional[float] = None

def make_stochastic_oracle(spec: StochasticProcessSpec, memo: bool = True) -> IntegrandOracle:
    """
    Grid point (a_1, ..., a_N) -> draws r_i = a_i / M_step -> path -> scale(statistic)^moment.
    The true mean of the oracle is the moment of the scaled statistic under the discretized process.
    """
    if spec.qubits > MAX_ORACLE_QUBITS:
        raise CapacityException(f"Process needs {spec.qubits} function qubits, at most {MAX_ORACLE_QUBITS} are available.", spec.qubits)

    domain = GridDomain(d=spec.steps, M=spec.branching)

    return IntegrandOracle(domain, lambda points: spec.scaled_moment_values(points / spec.branching), memo=memo, name=f"process-moment-{spec.moment}")

def brute_force_path_moment(spec: StochasticProcessSpec) -> float:
    """
    Enumerate every path one by one and average scale(statistic)^moment.
    """
    paths = spec.branching ** spec.steps
    if paths > MAX_BRUTE_FORCE_PATHS:
        raise CapacityException(f"{paths} paths exceed the brute-force cap {MAX_BRUTE_FORCE_PATHS}.", paths)

    total = 0.0
    for path in itertools.product(range(spec.branching), repeat=spec.steps):
        draws = np.asarray(path, dtype=np.float64).reshape(1, -1) / spec.branching
        total += float(spec.scaled_moment_values(draws)[0])

    return total / paths

def random_walk_spec(steps: int, moment: int = 1, branching: int = 2) -> StochasticProcessSpec:
    """
    Fair +-1 walk from 0; the statistic is the final position, scaled from [-steps, steps].
    """
    return StochasticProcessSpec(
        steps=steps,
        branching=branching,
        transition=lambda step, previous, draws: previous[:, -1] + np.where(draws >= 0.5, 1.0, -1.0),
        statistic=lambda paths: paths[:, -1],
        statistic_range=(-float(steps), float(steps)),
        moment=moment,
    )

def unscale_moments(scaled: Dict[int, float], low: float, high: float) -> Dict[int, float]:
    """
    Raw moments E[v^p] from the moments E[s^p] of s = (v - low) / (high - low):
    E[v^p] = sum_k C(p, k) low^(p - k) (high - low)^k E[s^k].
    """
    width = high - low
    moments = {0: 1.0, **scaled}

    raw = {}
    for p in sorted(scaled):
        missing = [k for k in range(1, p + 1) if k not in moments]
        if missing:
            raise ValueError(f"Moment {p} needs the scaled moments {missing}.")
        raw[p] = sum(math.comb(p, k) * low ** (p - k) * width ** k * moments[k] for k in range(p + 1))

    return raw

def summarize_moments(raw: Dict[int, float]) -> MomentSummary:
    mean = raw[1]
    variance = max(0.0, raw[2] - mean ** 2)

    skewness = None
    if 3 in raw and variance > 0.0:
        skewness = (raw[3] - 3.0 * mean * variance - mean ** 3) / variance ** 1.5

    return MomentSummary(mean=mean, variance=variance, skewness=skewness)

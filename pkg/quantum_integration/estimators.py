import math
import logging

import numpy as np

from enum import IntEnum
from typing import Callable, List, Optional, Tuple, Union
from pydantic import BaseModel, Field, NonNegativeInt, PositiveFloat, PositiveInt, field_validator

from quantum_integration.utils import MAX_QUBITS, DomainException, is_power_of_two, next_power_of_two
from quantum_integration.oracles import (
    IntegrandOracle,
    BooleanOracle,
    Estimate,
    EstimatorMethod,
    make_boolean_extension,
    monte_carlo_estimate,
    classical_exact_estimate,
)
from quantum_integration.statevector import (
    StateVector,
    Predicate,
    probability_of,
    resolve_mask,
    sample_measurements,
    dft_counting_register,
    counting_distribution,
)
from quantum_integration.preparation import (
    PreparationDescriptor,
    GroverPreparation,
    HadamardPreparation,
    SqrtRotationPreparation,
    prepare,
    amplify,
    build_counting_state,
)
from quantum_integration.stochastic import StochasticProcessSpec, MomentSummary, make_stochastic_oracle, unscale_moments, summarize_moments

logger = logging.getLogger(__name__)

DEFAULT_SHOTS_CONSTANT = 16
DEFAULT_ROUND_SHOTS_CONSTANT = 64
DEFAULT_DELTA = 0.25
DEFAULT_DELTA_SAFETY = 0.25
DEFAULT_REPETITIONS = 5
DEFAULT_Q = 64

class IterationException(Exception):
    """
    Raised when a round of the iterated estimator stays inconsistent after its restart,
    or when the amplified amplitude leaves the monotone branch.
    """

    def __init__(self, message: str, round_index: int):
        super().__init__(message)

        self.message = message
        self.round_index = round_index

class PeakPolicy(IntEnum):
    ARGMAX_FOLDED = 0

class CountingConfig(BaseModel):
    A: Optional[PositiveInt] = None
    peak_policy: PeakPolicy = PeakPolicy.ARGMAX_FOLDED
    repetitions: PositiveInt = DEFAULT_REPETITIONS
    exact_readout: bool = False
    max_qubits: PositiveInt = MAX_QUBITS

    @field_validator("A")
    def check_register_size(cls, v):
        if v is not None and (v < 2 or not is_power_of_two(v)):
            raise ValueError("The DFT size A must be a power of two >= 2.")
        return v

class EstimatorSettings(BaseModel):
    """
    Every tunable of the estimator suite; the harness builds one per estimator tag.
    """
    shots_constant: PositiveFloat = DEFAULT_SHOTS_CONSTANT
    round_shots_constant: PositiveFloat = DEFAULT_ROUND_SHOTS_CONSTANT
    delta: float = Field(default=DEFAULT_DELTA, ge=0.125, le=0.5)
    delta_safety: PositiveFloat = DEFAULT_DELTA_SAFETY
    Q: Optional[PositiveInt] = None
    A: Optional[PositiveInt] = None
    repetitions: PositiveInt = DEFAULT_REPETITIONS
    samples: Optional[PositiveInt] = None
    exact_readout: bool = False
    check_monotone_branch: bool = False
    max_qubits: PositiveInt = MAX_QUBITS

    @field_validator("Q")
    def check_resolution(cls, v):
        if v is not None and (v < 2 or not is_power_of_two(v)):
            raise ValueError("Q must be a power of two >= 2.")
        return v

    def counting_config(self) -> CountingConfig:
        return CountingConfig(A=self.A, repetitions=self.repetitions, exact_readout=self.exact_readout, max_qubits=self.max_qubits)

class RoundRecord(BaseModel):
    round_index: PositiveInt
    bound: PositiveFloat
    amp_iterations: NonNegativeInt
    shots: PositiveInt
    zoomed_estimate: float
    composite: float
    centred: float
    restarts: NonNegativeInt = 0

class IterationState(BaseModel):
    """
    Bookkeeping of the iterated estimates: E = sum_j (E_j - delta / 2) delta^(j - 1).
    After round k the residual S - E lies in [0, delta^k] with high probability.
    """
    delta: float
    k: NonNegativeInt = 0
    E: float = 0.0
    amp_iterations: NonNegativeInt = 0
    shots_per_round: PositiveInt
    history: List[RoundRecord] = []

def _check_epsilon(epsilon: float):
    if not 0.0 < epsilon < 0.5:
        raise DomainException(f"Target accuracy must lie in (0, 1/2), got {epsilon}.", epsilon)

def _shots(constant: float, accuracy: float) -> int:
    return math.ceil(constant / accuracy ** 2)

def _charge_repeats(oracle: Union[IntegrandOracle, BooleanOracle], before: int, runs: int):
    # NOTE: the circuit is simulated once; the other runs cost what the first one did.
    oracle.record_queries((oracle.queries - before) * (runs - 1))

def _read_probability(state: StateVector, target: Predicate, shots: int, generator: np.random.Generator, exact: bool) -> float:
    mask = resolve_mask(state, target)

    if exact:
        return probability_of(state, mask)

    histogram = sample_measurements(state, shots, generator)

    return sum(count for index, count in histogram.items() if mask[index]) / shots

def invert_amplification(amplified_probability: float, amp_iterations: int) -> Tuple[float, bool]:
    """
    Exact inverse of p = sin^2((2n + 1) theta) on the principal branch: returns (sin(theta), clamped).
    """
    if amp_iterations < 0:
        raise DomainException(f"Iteration count must be non-negative, got {amp_iterations}.", amp_iterations)

    clamped = not 0.0 <= amplified_probability <= 1.0
    probability = min(1.0, max(0.0, amplified_probability))

    return math.sin(math.asin(math.sqrt(probability)) / (2 * amp_iterations + 1)), clamped

def estimate_mean_sampling(oracle: IntegrandOracle, epsilon: float, seed: int = 0, settings: EstimatorSettings = None) -> Estimate:
    """
    Measure U|s> (U = W^-1 R W, no shift) repeatedly; the target amplitude is S, so the estimate is sqrt(frequency).
    """
    settings = settings or EstimatorSettings()
    _check_epsilon(epsilon)

    generator = np.random.default_rng(seed)
    shots = _shots(settings.shots_constant, epsilon)
    before = oracle.queries

    descriptor = GroverPreparation(oracle, shift=0.0)
    state = prepare(descriptor, descriptor.layout(max_qubits=settings.max_qubits))
    _charge_repeats(oracle, before, shots)

    frequency = _read_probability(state, descriptor.target(), shots, generator, settings.exact_readout)

    return Estimate(
        value=min(1.0, math.sqrt(frequency)),
        target_accuracy=epsilon,
        oracle_queries=oracle.queries - before,
        shots=shots,
        method=EstimatorMethod.QM_SAMPLING,
        seed=seed,
    )

def _measure_residual(oracle: IntegrandOracle, shift: float, amp_iterations: int, shots: int, generator: np.random.Generator, settings: EstimatorSettings, round_index: int) -> float:
    descriptor = GroverPreparation(oracle, shift=shift)
    before = oracle.queries

    state = amplify(descriptor, amp_iterations, max_qubits=settings.max_qubits)
    _charge_repeats(oracle, before, shots)

    if settings.check_monotone_branch:
        residual = float(np.mean(oracle.values())) - shift
        angle = (2 * amp_iterations + 1) * math.asin(min(1.0, abs(residual)))
        if angle > math.pi / 2 + 1e-12:
            raise IterationException(f"Round {round_index}: amplified angle {angle:.6f} left the monotone branch (N={amp_iterations}, D={residual:.3e}).", round_index)

    probability = _read_probability(state, descriptor.target(), shots, generator, settings.exact_readout)
    residual, clamped = invert_amplification(probability, amp_iterations)
    if clamped:
        logger.debug(f"round {round_index}: amplified probability {probability} clamped to [0, 1]")

    return residual

def estimate_mean_grover_iterated(oracle: IntegrandOracle, epsilon: float, delta: float = None, seed: int = 0, settings: EstimatorSettings = None, state: IterationState = None) -> Estimate:
    """
    Sampling with iterated estimates. Round k amplifies the residual S - E (bounded by delta^(k-1)) with
    N_k = floor(delta_safety / delta^(k-1)) Grover iterates, samples ceil(round_shots_constant / delta^2) shots, inverts the amplification
    and folds (E_k - delta / 2) delta^(k-1) into the composite E.
    The returned value is the centre E + delta^K / 2 of the final containment interval.
    Pass an IterationState to inspect the per-round history.
    """
    settings = settings or EstimatorSettings()
    if delta is not None:
        settings = EstimatorSettings.model_validate({**settings.model_dump(), "delta": delta})
    _check_epsilon(epsilon)

    delta = settings.delta
    # NOTE: exact powers of delta must not gain a round from rounding in the logarithms
    rounds = max(1, math.ceil(math.log(epsilon) / math.log(delta) - 1e-9))
    shots = _shots(settings.round_shots_constant, delta)

    generator = np.random.default_rng(seed)
    before = oracle.queries

    if state is None:
        state = IterationState(delta=delta, shots_per_round=shots)
    else:
        state.delta, state.shots_per_round, state.k, state.E, state.history = delta, shots, 0, 0.0, []

    total_shots = 0
    for k in range(1, rounds + 1):
        bound = delta ** (k - 1)
        amp_iterations = math.floor(settings.delta_safety / bound)
        # NOTE: the composite may dip below 0 early on; the rotation only accepts shifts in [0, 1]
        shift = min(1.0, max(0.0, state.E))

        state.k = k
        state.amp_iterations = amp_iterations

        restarts = 0
        while True:
            residual = _measure_residual(oracle, shift, amp_iterations, shots, generator, settings, k)
            total_shots += shots
            zoomed = (residual + shift - state.E) / bound

            if zoomed <= 1.0 + delta:
                break

            restarts += 1
            if restarts > 1:
                raise IterationException(f"Round {k}: residual estimate {zoomed * bound:.3e} exceeds its bound {bound:.3e} after a restart.", k)

            logger.warning(f"round {k}: residual estimate {zoomed * bound:.3e} exceeds its bound {bound:.3e}, restarting the round.")

        zoomed = min(1.0, max(0.0, zoomed))
        state.E += (zoomed - delta / 2) * bound

        state.history.append(RoundRecord(
            round_index=k,
            bound=bound,
            amp_iterations=amp_iterations,
            shots=shots,
            zoomed_estimate=zoomed,
            composite=state.E,
            centred=state.E + delta * bound / 2,
            restarts=restarts,
        ))

        logger.debug(f"round {k}/{rounds}: N={amp_iterations} p={zoomed:.4f} E={state.E:.6f}")

    value = state.E + delta ** rounds / 2

    return Estimate(
        value=min(1.0, max(0.0, value)),
        target_accuracy=epsilon,
        oracle_queries=oracle.queries - before,
        shots=total_shots,
        method=EstimatorMethod.QM_ITERATED,
        seed=seed,
    )

def register_size(epsilon: float, A: Optional[int] = None) -> int:
    """
    The DFT size: A when given, else ceil(pi / epsilon) rounded up to a power of two.
    """
    required = next_power_of_two(math.ceil(math.pi / epsilon))

    if A is None:
        return required

    if A < required:
        logger.warning(f"A={A} is below the {required} points needed for accuracy {epsilon}; the accuracy follows A.")

    return A

def folded_peak(distribution: np.ndarray) -> int:
    """
    Fold the mirror pair m, A - m onto [0, A/2] and return the most probable representative.
    """
    A = distribution.shape[0]

    folded = distribution[:A // 2 + 1].copy()
    folded[1:A // 2] += distribution[A - 1:A // 2:-1]

    return int(np.argmax(folded))

def _counting_estimate(descriptor: PreparationDescriptor, target: Predicate, epsilon: float, config: CountingConfig, seed: int, readout: Callable[[float], float]) -> Tuple[float, int, int]:
    _check_epsilon(epsilon)

    A = register_size(epsilon, config.A)
    oracle = descriptor.oracle
    before = oracle.queries

    state = build_counting_state(descriptor, target, A, config.max_qubits)
    dft_counting_register(state)
    distribution = counting_distribution(state)

    _charge_repeats(oracle, before, config.repetitions)

    if config.exact_readout:
        peaks = [folded_peak(distribution)]
    else:
        generator = np.random.default_rng(seed)
        draws = generator.choice(A, size=config.repetitions, p=distribution / distribution.sum())
        peaks = [int(min(m, A - m)) for m in draws]

    value = float(np.median([readout(math.pi * m / A) for m in peaks]))

    logger.debug(f"counting readout: A={A} peaks={peaks} value={value:.6f}")

    return min(1.0, max(0.0, value)), oracle.queries - before, A

def estimate_mean_grover_fft(oracle: IntegrandOracle, epsilon: float, config: CountingConfig = None, seed: int = 0) -> Estimate:
    """
    Read the rotation frequency of G built from W^-1 R W (no shift): |U_ts| = S = sin(pi m / A).
    """
    config = config or CountingConfig()
    descriptor = GroverPreparation(oracle, shift=0.0)

    value, queries, A = _counting_estimate(descriptor, descriptor.target(), epsilon, config, seed, math.sin)

    return Estimate(value=value, target_accuracy=epsilon, oracle_queries=queries, shots=config.repetitions, method=EstimatorMethod.QM_GROVER_FFT, seed=seed)

def estimate_count_sampling(boolean: BooleanOracle, epsilon: float, seed: int = 0, settings: EstimatorSettings = None) -> Estimate:
    """
    Measure W|s> over the (a, q) domain and count the outcomes with b = 1; each outcome costs one query of b.
    """
    settings = settings or EstimatorSettings()
    _check_epsilon(epsilon)

    generator = np.random.default_rng(seed)
    shots = _shots(settings.shots_constant, epsilon)
    before = boolean.queries

    descriptor = HadamardPreparation(boolean)
    state = prepare(descriptor, descriptor.layout(max_qubits=settings.max_qubits))

    frequency = _read_probability(state, boolean.marked_mask(), shots, generator, settings.exact_readout)
    boolean.record_queries(shots)

    return Estimate(
        value=frequency,
        target_accuracy=epsilon,
        oracle_queries=boolean.queries - before,
        shots=shots,
        method=EstimatorMethod.QC_SAMPLING,
        seed=seed,
    )

def estimate_count_fft(boolean: BooleanOracle, epsilon: float, config: CountingConfig = None, seed: int = 0) -> Estimate:
    """
    Quantum counting: |U_ts| = sqrt(r / N), so S = sin^2(pi m / A) and r = S * M^d * Q.
    """
    config = config or CountingConfig()
    descriptor = HadamardPreparation(boolean)

    value, queries, A = _counting_estimate(descriptor, boolean, epsilon, config, seed, lambda angle: math.sin(angle) ** 2)

    return Estimate(
        value=value,
        target_accuracy=epsilon,
        oracle_queries=queries,
        shots=config.repetitions,
        method=EstimatorMethod.QC_FFT,
        seed=seed,
        count_estimate=int(round(value * boolean.size)),
    )

def estimate_mean_sqrt_sampling(oracle: IntegrandOracle, epsilon: float, seed: int = 0, settings: EstimatorSettings = None) -> Estimate:
    """
    Measure R^ W |s>; the ancilla reads |1> with probability mean(f), no square root in post-processing.
    """
    settings = settings or EstimatorSettings()
    _check_epsilon(epsilon)

    generator = np.random.default_rng(seed)
    shots = _shots(settings.shots_constant, epsilon)
    before = oracle.queries

    descriptor = SqrtRotationPreparation(oracle)
    state = prepare(descriptor, descriptor.layout(max_qubits=settings.max_qubits))
    _charge_repeats(oracle, before, shots)

    frequency = _read_probability(state, descriptor.target(), shots, generator, settings.exact_readout)

    return Estimate(
        value=frequency,
        target_accuracy=epsilon,
        oracle_queries=oracle.queries - before,
        shots=shots,
        method=EstimatorMethod.SQRT_SAMPLING,
        seed=seed,
    )

def estimate_mean_sqrt_fft(oracle: IntegrandOracle, epsilon: float, config: CountingConfig = None, seed: int = 0) -> Estimate:
    """
    Counting over G built from R^ W with the ancilla-|1> subspace as target: sin(theta) = sqrt(S).
    """
    config = config or CountingConfig()
    descriptor = SqrtRotationPreparation(oracle)

    value, queries, A = _counting_estimate(descriptor, descriptor.target(), epsilon, config, seed, lambda angle: math.sin(angle) ** 2)

    return Estimate(value=value, target_accuracy=epsilon, oracle_queries=queries, shots=config.repetitions, method=EstimatorMethod.SQRT_FFT, seed=seed)

def boolean_resolution(Q: Optional[int] = None) -> int:
    """
    Q for the boolean extension: as given, else DEFAULT_Q. The extension biases the mean by up to 1 / (2Q),
    independent of epsilon.
    """
    return Q if Q is not None else DEFAULT_Q

def run_estimator(method: EstimatorMethod, oracle: IntegrandOracle, epsilon: float, settings: EstimatorSettings = None, seed: int = 0) -> Estimate:
    settings = settings or EstimatorSettings()
    method = EstimatorMethod(method)

    if method == EstimatorMethod.QM_SAMPLING:
        return estimate_mean_sampling(oracle, epsilon, seed, settings)
    if method == EstimatorMethod.QM_ITERATED:
        return estimate_mean_grover_iterated(oracle, epsilon, seed=seed, settings=settings)
    if method == EstimatorMethod.QM_GROVER_FFT:
        return estimate_mean_grover_fft(oracle, epsilon, settings.counting_config(), seed)
    if method == EstimatorMethod.QC_SAMPLING:
        boolean = make_boolean_extension(oracle, boolean_resolution(settings.Q))
        return estimate_count_sampling(boolean, epsilon, seed, settings)
    if method == EstimatorMethod.QC_FFT:
        boolean = make_boolean_extension(oracle, boolean_resolution(settings.Q))
        return estimate_count_fft(boolean, epsilon, settings.counting_config(), seed)
    if method == EstimatorMethod.SQRT_SAMPLING:
        return estimate_mean_sqrt_sampling(oracle, epsilon, seed, settings)
    if method == EstimatorMethod.SQRT_FFT:
        return estimate_mean_sqrt_fft(oracle, epsilon, settings.counting_config(), seed)
    if method == EstimatorMethod.CLASSICAL_MC:
        samples = settings.samples or math.ceil(1.0 / epsilon ** 2)
        return monte_carlo_estimate(oracle, samples, seed, epsilon)
    if method == EstimatorMethod.CLASSICAL_EXACT:
        return classical_exact_estimate(oracle, epsilon)

    raise DomainException(f"Unsupported estimator {method}.", method)

def estimate_moment(spec: StochasticProcessSpec, epsilon: float, method: EstimatorMethod, seed: int = 0, settings: EstimatorSettings = None) -> Estimate:
    """
    The `moment`-th moment of the scaled statistic, estimated with any method of the suite.
    """
    return run_estimator(method, make_stochastic_oracle(spec), epsilon, settings, seed)

def describe_process(spec: StochasticProcessSpec, epsilon: float, method: EstimatorMethod, seed: int = 0, settings: EstimatorSettings = None, max_moment: int = 3) -> MomentSummary:
    """
    Mean, variance and skewness of the raw statistic from estimated scaled moments 1..max_moment.
    """
    scaled = {}
    for moment in range(1, max_moment + 1):
        moment_spec = spec.model_copy(update={"moment": moment})
        scaled[moment] = estimate_moment(moment_spec, epsilon, method, seed + moment, settings).value

    low, high = spec.statistic_range

    return summarize_moments(unscale_moments(scaled, low, high))

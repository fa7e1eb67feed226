import logging

import numpy as np

from enum import IntEnum
from typing import Callable, Dict, Union
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt

from quantum_integration.utils import MAX_QUBITS, CapacityException, DomainException
from quantum_integration.oracles import IntegrandOracle, BooleanOracle

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-10
INV_SQRT2 = 1.0 / np.sqrt(2.0)

class QubitLayout(BaseModel):
    """
    Register layout, least significant qubit first: the ancilla (when present), then the function qubits, then the counting register.
    A basis index therefore reads `index = (j * function_dimension + a) * ancilla_dimension + r`.
    """
    model_config = ConfigDict(frozen=True)

    ancilla_count: int = Field(default=1, ge=0, le=1)
    function_qubits: PositiveInt
    counting_qubits: NonNegativeInt = 0
    max_qubits: PositiveInt = MAX_QUBITS

    @property
    def total_qubits(self) -> int:
        return self.ancilla_count + self.function_qubits + self.counting_qubits

    @property
    def dimension(self) -> int:
        return 1 << self.total_qubits

    @property
    def ancilla_dimension(self) -> int:
        return 1 << self.ancilla_count

    @property
    def function_dimension(self) -> int:
        return 1 << self.function_qubits

    @property
    def counting_dimension(self) -> int:
        return 1 << self.counting_qubits

    @property
    def system_dimension(self) -> int:
        return self.ancilla_dimension * self.function_dimension

    @property
    def function_qubit_range(self) -> range:
        return range(self.ancilla_count, self.ancilla_count + self.function_qubits)

    @property
    def counting_qubit_range(self) -> range:
        start = self.ancilla_count + self.function_qubits
        return range(start, start + self.counting_qubits)

    def system_layout(self) -> "QubitLayout":
        return self.model_copy(update={"counting_qubits": 0})

    def check_capacity(self):
        if self.total_qubits > self.max_qubits:
            raise CapacityException(
                f"Layout needs {self.total_qubits} qubits but the simulator is capped at {self.max_qubits}.",
                self.total_qubits
            )

class StateVector():
    def __init__(self, layout: QubitLayout, amplitudes: np.ndarray):
        amplitudes = np.ascontiguousarray(amplitudes, dtype=np.complex128).reshape(-1)

        if amplitudes.shape[0] != layout.dimension:
            raise DomainException(f"Expected {layout.dimension} amplitudes for the layout, got {amplitudes.shape[0]}.", amplitudes.shape[0])
        if not np.all(np.isfinite(amplitudes)):
            raise DomainException("Amplitudes must be finite.")

        self.layout = layout
        self.amplitudes = amplitudes

    def __len__(self):
        return self.amplitudes.shape[0]

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.amplitudes.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.probabilities())))

    def is_normalized(self, tolerance: float = NORM_TOLERANCE) -> bool:
        return abs(float(np.sum(self.probabilities())) - 1.0) <= tolerance

    def system_view(self) -> np.ndarray:
        # NOTE: shape (counting, function, ancilla); a view, writes go through to the amplitudes.
        layout = self.layout
        return self.amplitudes.reshape(layout.counting_dimension, layout.function_dimension, layout.ancilla_dimension)

class RotationMode(IntEnum):
    SHIFTED = 0
    SQRT = 1

Predicate = Union[int, np.ndarray, BooleanOracle, Callable[[np.ndarray], np.ndarray]]

def new_zero_state(layout: QubitLayout) -> StateVector:
    layout.check_capacity()

    amplitudes = np.zeros(layout.dimension, dtype=np.complex128)
    amplitudes[0] = 1.0

    return StateVector(layout, amplitudes)

def apply_walsh_hadamard(state: StateVector, qubit_range: range = None) -> StateVector:
    """
    Apply a Hadamard to every qubit of a contiguous range (the function register by default). Mutates and returns `state`.
    """
    if qubit_range is None:
        qubit_range = state.layout.function_qubit_range

    if qubit_range.step != 1 or qubit_range.start < 0 or qubit_range.stop > state.layout.total_qubits:
        raise DomainException(f"Qubit range {qubit_range} is not a contiguous range inside {state.layout.total_qubits} qubits.", qubit_range)

    for qubit in qubit_range:
        view = state.amplitudes.reshape(-1, 2, 1 << qubit)

        upper = view[:, 0, :].copy()
        lower = view[:, 1, :].copy()

        view[:, 0, :] = (upper + lower) * INV_SQRT2
        view[:, 1, :] = (upper - lower) * INV_SQRT2

    return state

def rotation_values(oracle: IntegrandOracle, mode: RotationMode, shift: float = 0.0) -> np.ndarray:
    values = oracle.values()

    if mode == RotationMode.SHIFTED:
        if not 0.0 <= shift <= 1.0:
            raise DomainException(f"Rotation shift must lie in [0, 1], got {shift}.", shift)
        rotation = values - shift
    elif mode == RotationMode.SQRT:
        rotation = np.sqrt(values)
    else:
        raise DomainException(f"Unknown rotation mode {mode}.", mode)

    offending = np.flatnonzero(np.abs(rotation) > 1.0 + 1e-12)
    if offending.size > 0:
        point = oracle.domain.point(int(offending[0]))
        raise DomainException(f"Rotation value {rotation[offending[0]]} at grid point {point} lies outside [-1, 1].", point)

    return np.clip(rotation, -1.0, 1.0)

def apply_oracle_rotation(state: StateVector, oracle: IntegrandOracle, mode: RotationMode = RotationMode.SHIFTED, shift: float = 0.0, inverse: bool = False) -> StateVector:
    """
    Rotate the ancilla of every function basis state |a> by the value v(a):
    |0>|a> -> sqrt(1 - v^2)|0>|a> + v|1>|a> and |1>|a> -> -v|0>|a> + sqrt(1 - v^2)|1>|a>.
    v is f - shift (SHIFTED) or sqrt(f) (SQRT). Charges one query per grid point.
    """
    layout = state.layout

    if layout.ancilla_count != 1:
        raise DomainException("The oracle rotation needs an ancilla qubit.")
    if oracle.domain.size != layout.function_dimension:
        raise DomainException(f"Oracle domain has {oracle.domain.size} points but the function register holds {layout.function_dimension}.", oracle.domain.size)

    sine = rotation_values(oracle, mode, shift)
    cosine = np.sqrt(1.0 - sine ** 2)

    if inverse:
        sine = -sine

    view = state.system_view()

    zero = view[..., 0].copy()
    one = view[..., 1].copy()

    view[..., 0] = cosine * zero - sine * one
    view[..., 1] = sine * zero + cosine * one

    oracle.record_queries(oracle.domain.size)

    return state

def invert_phase_index(state: StateVector, basis_index: int) -> StateVector:
    if not 0 <= basis_index < len(state):
        raise DomainException(f"Basis index {basis_index} out of range [0, {len(state)}).", basis_index)

    state.amplitudes[basis_index] *= -1

    return state

def resolve_mask(state: StateVector, marked: Predicate) -> np.ndarray:
    """
    Turn a predicate into a boolean mask over the whole register. Masks of the system size are repeated over the counting register.
    """
    if isinstance(marked, BooleanOracle):
        mask = marked.marked_mask()
    elif isinstance(marked, (int, np.integer)):
        mask = np.zeros(len(state), dtype=bool)
        mask[int(marked)] = True
    elif isinstance(marked, np.ndarray):
        mask = marked.astype(bool, copy=False)
    elif callable(marked):
        mask = np.asarray(marked(np.arange(len(state))), dtype=bool)
    else:
        raise DomainException(f"Unsupported predicate type {type(marked).__name__}.", marked)

    if mask.shape[0] == len(state):
        return mask
    if mask.shape[0] == state.layout.system_dimension:
        return np.tile(mask, state.layout.counting_dimension)

    raise DomainException(f"Predicate covers {mask.shape[0]} basis states, the register has {len(state)}.", mask.shape[0])

def invert_phase_predicate(state: StateVector, marked: Predicate) -> StateVector:
    mask = resolve_mask(state, marked)

    state.amplitudes[mask] *= -1

    if isinstance(marked, BooleanOracle):
        marked.record_queries(marked.size)

    return state

def dft_counting_register(state: StateVector, inverse: bool = False) -> StateVector:
    layout = state.layout

    if layout.counting_qubits < 1:
        raise DomainException("The state has no counting register.")

    rows = state.amplitudes.reshape(layout.counting_dimension, layout.system_dimension)
    transform = np.fft.ifft if inverse else np.fft.fft

    state.amplitudes[:] = transform(rows, axis=0, norm="ortho").reshape(-1)

    return state

def counting_distribution(state: StateVector) -> np.ndarray:
    layout = state.layout

    if layout.counting_qubits < 1:
        raise DomainException("The state has no counting register.")

    rows = state.probabilities().reshape(layout.counting_dimension, layout.system_dimension)

    return rows.sum(axis=1)

def probability_of(state: StateVector, event: Predicate) -> float:
    mask = resolve_mask(state, event)
    probability = float(np.sum(state.probabilities()[mask]))

    return min(1.0, max(0.0, probability))

def sample_measurements(state: StateVector, shots: int, seed: Union[int, np.random.Generator]) -> Dict[int, int]:
    """
    Draw `shots` independent measurements in the computational basis. Returns a histogram {basis index: count}.
    """
    if shots < 1:
        raise DomainException(f"At least one shot is required, got {shots}.", shots)

    generator = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    probabilities = state.probabilities()
    probabilities = probabilities / probabilities.sum()

    counts = generator.multinomial(shots, probabilities)
    observed = np.flatnonzero(counts)

    return {int(index): int(counts[index]) for index in observed}

import math
import logging

import numpy as np

from enum import IntEnum
from abc import ABC, ABCMeta, abstractmethod

from quantum_integration.utils import MAX_QUBITS, DomainException, exact_log2
from quantum_integration.oracles import IntegrandOracle, BooleanOracle
from quantum_integration.statevector import (
    QubitLayout,
    StateVector,
    RotationMode,
    Predicate,
    new_zero_state,
    apply_walsh_hadamard,
    apply_oracle_rotation,
    invert_phase_index,
    invert_phase_predicate,
    resolve_mask,
)

logger = logging.getLogger(__name__)

class PreparationKind(IntEnum):
    GROVER_U = 0
    HADAMARD_ONLY = 1
    SQRT_ROT = 2

class PreparationDescriptor(ABC):
    """
    A state preparation U taking |s> = |0...0> to a state with amplitude |U_ts| on the target.
    """
    __metaclass__ = ABCMeta

    kind: PreparationKind

    @abstractmethod
    def __init__(self):
        pass

    @property
    @abstractmethod
    def oracle(self):
        pass

    @abstractmethod
    def layout(self, counting_qubits: int = 0, max_qubits: int = MAX_QUBITS) -> QubitLayout:
        pass

    @abstractmethod
    def apply(self, state: StateVector) -> StateVector:
        pass

    @abstractmethod
    def unapply(self, state: StateVector) -> StateVector:
        """
        Apply U^-1, the constituents inverted in reverse order.
        """
        pass

    @abstractmethod
    def target(self) -> Predicate:
        pass

    def check_layout(self, layout: QubitLayout):
        expected = self.layout(layout.counting_qubits, layout.max_qubits)
        if (layout.ancilla_count, layout.function_qubits) != (expected.ancilla_count, expected.function_qubits):
            raise DomainException(
                f"{self.kind.name} needs {expected.ancilla_count} ancilla and {expected.function_qubits} function qubits, "
                f"the layout has {layout.ancilla_count} and {layout.function_qubits}.",
                layout
            )

class GroverPreparation(PreparationDescriptor):
    """
    U = W^-1 R W with R rotating the ancilla by f - shift; the target |1>|0...0> gets amplitude mean(f) - shift.
    """
    kind = PreparationKind.GROVER_U

    def __init__(self, oracle: IntegrandOracle, shift: float = 0.0):
        self.__oracle = oracle
        self.shift = shift

    @property
    def oracle(self) -> IntegrandOracle:
        return self.__oracle

    def layout(self, counting_qubits=0, max_qubits=MAX_QUBITS):
        return QubitLayout(ancilla_count=1, function_qubits=self.__oracle.domain.qubits, counting_qubits=counting_qubits, max_qubits=max_qubits)

    def apply(self, state):
        apply_walsh_hadamard(state)
        apply_oracle_rotation(state, self.__oracle, RotationMode.SHIFTED, self.shift)
        return apply_walsh_hadamard(state)

    def unapply(self, state):
        apply_walsh_hadamard(state)
        apply_oracle_rotation(state, self.__oracle, RotationMode.SHIFTED, self.shift, inverse=True)
        return apply_walsh_hadamard(state)

    def target(self):
        # |1>|0...0>: ancilla bit set, function register zero
        return 1

class HadamardPreparation(PreparationDescriptor):
    """
    U = W over the (a, q) domain of a boolean extension; the target is the marked set of b, |U_ts| = sqrt(r / N).
    """
    kind = PreparationKind.HADAMARD_ONLY

    def __init__(self, boolean: BooleanOracle):
        self.__boolean = boolean

    @property
    def oracle(self) -> BooleanOracle:
        return self.__boolean

    def layout(self, counting_qubits=0, max_qubits=MAX_QUBITS):
        return QubitLayout(ancilla_count=0, function_qubits=self.__boolean.qubits, counting_qubits=counting_qubits, max_qubits=max_qubits)

    def apply(self, state):
        return apply_walsh_hadamard(state)

    def unapply(self, state):
        return apply_walsh_hadamard(state)

    def target(self):
        return self.__boolean

class SqrtRotationPreparation(PreparationDescriptor):
    """
    U = R^ W with R^ rotating the ancilla by sqrt(f) and no closing W^-1; the ancilla-|1> subspace has probability mean(f).
    """
    kind = PreparationKind.SQRT_ROT

    def __init__(self, oracle: IntegrandOracle):
        self.__oracle = oracle

    @property
    def oracle(self) -> IntegrandOracle:
        return self.__oracle

    def layout(self, counting_qubits=0, max_qubits=MAX_QUBITS):
        return QubitLayout(ancilla_count=1, function_qubits=self.__oracle.domain.qubits, counting_qubits=counting_qubits, max_qubits=max_qubits)

    def apply(self, state):
        apply_walsh_hadamard(state)
        return apply_oracle_rotation(state, self.__oracle, RotationMode.SQRT)

    def unapply(self, state):
        apply_oracle_rotation(state, self.__oracle, RotationMode.SQRT, inverse=True)
        return apply_walsh_hadamard(state)

    def target(self):
        system_dimension = 2 * (1 << self.__oracle.domain.qubits)
        return (np.arange(system_dimension) & 1) == 1

def prepare(descriptor: PreparationDescriptor, layout: QubitLayout = None) -> StateVector:
    """
    U|s> for the all-zeros |s>.
    """
    if layout is None:
        layout = descriptor.layout()

    descriptor.check_layout(layout)

    return descriptor.apply(new_zero_state(layout))

def unprepare(descriptor: PreparationDescriptor, state: StateVector) -> StateVector:
    descriptor.check_layout(state.layout)

    return descriptor.unapply(state)

def target_mask(descriptor: PreparationDescriptor, layout: QubitLayout = None) -> np.ndarray:
    """
    Boolean mask of the target basis states over `layout`, counting register included.
    """
    state = new_zero_state(layout or descriptor.layout())
    descriptor.check_layout(state.layout)

    return resolve_mask(state, descriptor.target())

def grover_iterate(state: StateVector, descriptor: PreparationDescriptor, target: Predicate = None) -> StateVector:
    """
    One application of G = -I_s U^-1 I_t U. Mutates and returns `state`.
    """
    if state.layout.counting_qubits != 0:
        raise DomainException("Grover iterates act on the system register only; the state carries a counting register.")

    if target is None:
        target = descriptor.target()

    descriptor.apply(state)
    invert_phase_predicate(state, target)
    descriptor.unapply(state)
    invert_phase_index(state, 0)

    state.amplitudes *= -1

    return state

def amplify(descriptor: PreparationDescriptor, iterations: int, target: Predicate = None, max_qubits: int = MAX_QUBITS) -> StateVector:
    """
    U G^n |s>: the target probability of the returned state is sin^2((2n + 1) theta) with sin(theta) = |U_ts|.
    """
    if iterations < 0:
        raise DomainException(f"Iteration count must be non-negative, got {iterations}.", iterations)

    state = new_zero_state(descriptor.layout(max_qubits=max_qubits))

    for _ in range(iterations):
        grover_iterate(state, descriptor, target)

    return descriptor.apply(state)

def build_counting_state(descriptor: PreparationDescriptor, target: Predicate, A: int, max_qubits: int = MAX_QUBITS) -> StateVector:
    """
    (1 / sqrt(A)) sum_j |j> G^j |s>, built with A - 1 cumulative applications of G.
    """
    layout = descriptor.layout(exact_log2(A), max_qubits)
    layout.check_capacity()

    system = new_zero_state(layout.system_layout())
    rows = np.empty((A, layout.system_dimension), dtype=np.complex128)

    rows[0] = system.amplitudes
    for j in range(1, A):
        grover_iterate(system, descriptor, target)
        rows[j] = system.amplitudes

    rows /= math.sqrt(A)

    logger.debug(f"built counting state with A={A} over {layout.system_dimension} system amplitudes")

    return StateVector(layout, rows.reshape(-1))

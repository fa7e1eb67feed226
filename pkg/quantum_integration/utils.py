import math
import hashlib

MAX_QUBITS = 26
MAX_ENUMERATION = 2 ** 25

class CapacityException(Exception):
    """
    Raised when a register or an exhaustive enumeration would exceed the desk-scale caps.
    """

    def __init__(self, message: str, required: int):
        super().__init__(message)

        self.message = message
        self.required = required

class DomainException(Exception):
    """
    Raised when an operation receives an argument outside of its domain (qubit index, basis index, rotation value, ...).
    """

    def __init__(self, message: str, value=None):
        super().__init__(message)

        self.message = message
        self.value = value

def is_power_of_two(value: int) -> bool:
    return isinstance(value, int) and value > 0 and (value & (value - 1)) == 0

def exact_log2(value: int) -> int:
    if not is_power_of_two(value):
        raise ValueError(f"{value} is not a power of two.")
    return value.bit_length() - 1

def next_power_of_two(value: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(1.0, value))))

def stable_hash(key: str) -> int:
    # NOTE: the builtin hash() of a str changes between interpreter runs.
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "big")

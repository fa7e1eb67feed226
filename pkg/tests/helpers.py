import os
import pytest
import tempfile

import numpy as np

from typing import List, Tuple

from quantum_integration.oracles import GridDomain, IntegrandOracle, BooleanOracle, make_grid_oracle, make_boolean_extension

LINEAR_VALUES = [0.0, 0.25, 0.5, 0.75]
LINEAR_MEAN = 0.375

def constant_oracle(value: float, d: int = 1, M: int = 4) -> IntegrandOracle:
    return make_grid_oracle(lambda x: np.full(x.shape[0], value), GridDomain(d=d, M=M), name=f"const:{value}")

def linear_oracle(memo: bool = True) -> IntegrandOracle:
    # NOTE: f = {0, 0.25, 0.5, 0.75}, mean 0.375
    return make_grid_oracle(lambda x: x[:, 0], GridDomain(d=1, M=4), memo=memo, name="linear")

def table_oracle(values) -> IntegrandOracle:
    table = np.asarray(values, dtype=np.float64)
    return IntegrandOracle(GridDomain(d=1, M=table.shape[0]), lambda points: table[points[:, 0]], name="table")

def random_oracle(generator: np.random.Generator) -> Tuple[IntegrandOracle, np.ndarray]:
    """
    A table oracle with d <= 2, M <= 16 and uniform values in [0, 1]; returns the oracle and its value table.
    """
    domain = GridDomain(d=int(generator.integers(1, 3)), M=int(2 ** generator.integers(1, 5)))
    table = generator.uniform(size=domain.shape)
    return IntegrandOracle(domain, lambda points: table[tuple(points.T)], name="random"), table

def boolean_with_count(r: int) -> BooleanOracle:
    """
    A boolean extension over M = 4, Q = 4 (N = 16) with exactly r marked items.
    """
    counts = [min(4, max(0, r - 4 * a)) for a in range(4)]
    return make_boolean_extension(table_oracle([count / 4 for count in counts]), 4)

def single_marked_item() -> BooleanOracle:
    # NOTE: M = 2, Q = 2, f = {0, 0.5}: one marked item out of four
    return make_boolean_extension(table_oracle([0.0, 0.5]), 2)

def write_config(directory: str, body: str, name: str = "sweep.ini") -> str:
    path = os.path.join(directory, name)

    with open(path, "w", encoding="utf-8") as file:
        file.write(body)

    return path

SMALL_SWEEP_CONFIG = """
[sweep]
estimators = classical_exact, qm_sampling, qm_fft(A=64, reps=3), qc_fft(Q=4, A=64, reps=3)
epsilons = 2^-3, 2^-4
seeds = 1, 2

[integrand]
name = linear
d = 1
M = 4

[integrand:flat]
name = const:0.3
d = 1
M = 4
"""

@pytest.fixture
def temporary_directory():
    directory = tempfile.TemporaryDirectory()

    yield directory.name

    directory.cleanup()

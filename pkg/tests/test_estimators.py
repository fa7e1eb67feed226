import math
import logging
import pytest

import numpy as np

from pydantic import ValidationError

from quantum_integration.utils import DomainException
from quantum_integration.oracles import EstimatorMethod, make_boolean_extension
from quantum_integration.registry import IntegrandSpec
from quantum_integration.stochastic import random_walk_spec
from quantum_integration.estimators import (
    IterationException,
    IterationState,
    CountingConfig,
    EstimatorSettings,
    invert_amplification,
    register_size,
    folded_peak,
    boolean_resolution,
    estimate_mean_sampling,
    estimate_mean_grover_iterated,
    estimate_mean_grover_fft,
    estimate_count_sampling,
    estimate_count_fft,
    estimate_mean_sqrt_sampling,
    estimate_mean_sqrt_fft,
    run_estimator,
    estimate_moment,
    describe_process,
)

from tests.helpers import LINEAR_MEAN, constant_oracle, linear_oracle, boolean_with_count

EXACT = EstimatorSettings(exact_readout=True)

def fft_budget(S: float, A: int) -> float:
    return 2 * math.pi * math.sqrt(S * (1 - S)) / A + math.pi ** 2 / A ** 2

@pytest.mark.parametrize("probability,iterations,expected", [
    (0.0, 3, 0.0),
    (0.36, 0, 0.6),
    (1.0, 1, 0.5),
])
def test_invert_amplification(probability, iterations, expected):
    value, clamped = invert_amplification(probability, iterations)

    assert value == pytest.approx(expected, abs=1e-12)
    assert not clamped

def test_invert_amplification_clamps():
    value, clamped = invert_amplification(1.0 + 1e-9, 0)

    assert value == 1.0 and clamped

@pytest.mark.parametrize("epsilon", [0.0, 0.5, 0.7, -0.1])
def test_estimators_reject_bad_accuracy(epsilon):
    with pytest.raises(DomainException):
        estimate_mean_sampling(linear_oracle(), epsilon)

def test_register_size():
    assert register_size(2 ** -6) == 256
    assert register_size(0.1) == 32
    assert register_size(0.1, 128) == 128

def test_register_size_warns_when_too_small(caplog):
    with caplog.at_level(logging.WARNING):
        assert register_size(2 ** -6, 16) == 16

    assert "below" in caplog.text

def test_folded_peak():
    assert folded_peak(np.array([0.1, 0.2, 0.3, 0.4])) == 1
    assert folded_peak(np.array([0.7, 0.1, 0.1, 0.1])) == 0

def test_boolean_resolution():
    assert boolean_resolution() == 64
    assert boolean_resolution(16) == 16

def test_counting_cost_per_iterate_ignores_accuracy():
    per_iterate = []
    for epsilon in [2 ** -4, 2 ** -7]:
        estimate = run_estimator(EstimatorMethod.QC_FFT, linear_oracle(), epsilon, EXACT)
        per_iterate.append(estimate.oracle_queries / (register_size(epsilon) - 1))

    assert per_iterate[0] == per_iterate[1]

@pytest.mark.parametrize("c", [0.0, 1.0])
def test_sampling_extremes(c):
    estimate = estimate_mean_sampling(constant_oracle(c), 0.1, seed=1)

    assert estimate.value == pytest.approx(c, abs=1e-12)

def test_sampling_exact_readout():
    estimate = estimate_mean_sampling(linear_oracle(), 0.05, settings=EXACT)

    assert estimate.value == pytest.approx(LINEAR_MEAN, abs=1e-10)
    assert estimate.method == EstimatorMethod.QM_SAMPLING

def test_sampling_query_accounting():
    oracle = linear_oracle()
    estimate = estimate_mean_sampling(oracle, 0.1, seed=2)

    assert estimate.oracle_queries == oracle.queries == estimate.shots * 4, "Each shot prepares U once: M^d queries!"

def test_sampling_concentration():
    hits = sum(abs(estimate_mean_sampling(linear_oracle(), 0.05, seed).value - LINEAR_MEAN) <= 0.05 for seed in range(100))

    assert hits >= 67

@pytest.mark.parametrize("c", [0.0, 0.05, 0.3, 0.7, 1.0])
def test_iterated_exact_readout_of_constants(c):
    estimate = estimate_mean_grover_iterated(constant_oracle(c), 2 ** -6, settings=EXACT)

    assert estimate.value == pytest.approx(c, abs=1e-9), "Zero-variance rounds must land on the mean!"

def test_iterated_exact_readout_records_history():
    state = IterationState(delta=0.25, shots_per_round=1)
    estimate = estimate_mean_grover_iterated(linear_oracle(), 2 ** -8, seed=0, settings=EXACT, state=state)

    assert abs(estimate.value - LINEAR_MEAN) <= 2 ** -8
    assert [record.round_index for record in state.history] == [1, 2, 3, 4]
    assert [record.amp_iterations for record in state.history] == [0, 1, 4, 16]
    assert state.shots_per_round == 1024
    assert all(0.0 <= LINEAR_MEAN - record.composite <= record.bound * 0.25 + 1e-12 for record in state.history), "Residual left its containment interval!"

def test_iterated_monotone_branch_check_passes():
    settings = EstimatorSettings(exact_readout=True, check_monotone_branch=True)

    estimate = estimate_mean_grover_iterated(linear_oracle(), 2 ** -8, settings=settings)

    assert abs(estimate.value - LINEAR_MEAN) <= 2 ** -8

def test_iterated_query_accounting():
    oracle = linear_oracle()
    estimate = estimate_mean_grover_iterated(oracle, 2 ** -4, settings=EXACT)

    # NOTE: two rounds with N = 0 and N = 1, 1024 shots each
    assert estimate.oracle_queries == oracle.queries == 1024 * (1 + 3) * 4

def test_iterated_convergence():
    epsilon = 2 ** -8
    hits = 0

    for seed in range(50):
        try:
            estimate = estimate_mean_grover_iterated(linear_oracle(), epsilon, delta=0.25, seed=seed)
        except IterationException:
            continue
        hits += abs(estimate.value - LINEAR_MEAN) <= epsilon

    assert hits >= 34, "Iterated estimates missed their accuracy too often!"

def test_iterated_composite_contracts_each_round():
    contracted, transitions = 0, 0

    for seed in range(50):
        state = IterationState(delta=0.25, shots_per_round=1)
        try:
            estimate_mean_grover_iterated(linear_oracle(), 2 ** -8, delta=0.25, seed=seed, state=state)
        except IterationException:
            continue

        errors = [abs(LINEAR_MEAN - record.composite) for record in state.history]
        contracted += sum(current <= previous / 2 for previous, current in zip(errors, errors[1:]))
        transitions += len(errors) - 1

    assert transitions >= 120
    assert contracted >= 0.9 * transitions, f"Only {contracted} of {transitions} rounds halved the composite error!"

@pytest.mark.parametrize("delta", [0.9, 1.0, 0.0])
def test_iterated_rejects_bad_delta(delta):
    with pytest.raises(ValidationError):
        estimate_mean_grover_iterated(linear_oracle(), 2 ** -6, delta=delta)

@pytest.mark.parametrize("delta", [0.125, 0.25, 0.5])
def test_iterated_delta_values(delta):
    estimate = estimate_mean_grover_iterated(linear_oracle(), 2 ** -6, delta=delta, settings=EXACT)

    assert abs(estimate.value - LINEAR_MEAN) <= 2 ** -6

def test_grover_fft_of_zero():
    estimate = estimate_mean_grover_fft(constant_oracle(0.0), 0.05, CountingConfig(A=64, exact_readout=True))

    assert estimate.value == pytest.approx(0.0, abs=1e-12)

def test_grover_fft_exact_readout():
    estimate = estimate_mean_grover_fft(linear_oracle(), 2 ** -6, CountingConfig(A=256, exact_readout=True))

    assert abs(estimate.value - LINEAR_MEAN) <= math.pi / 256 + math.pi ** 2 / 256 ** 2
    assert estimate.value == pytest.approx(math.sin(math.pi * 31 / 256), abs=1e-12)

def test_grover_fft_query_accounting():
    oracle = linear_oracle()
    estimate = estimate_mean_grover_fft(oracle, 0.1, CountingConfig(A=64, repetitions=3), seed=5)

    assert estimate.oracle_queries == oracle.queries == 63 * 2 * 4 * 3

def test_grover_fft_sampled_repetitions():
    values = [estimate_mean_grover_fft(linear_oracle(), 2 ** -6, CountingConfig(A=256), seed=seed).value for seed in range(10)]

    assert sum(abs(value - LINEAR_MEAN) <= 0.0124 for value in values) >= 6

@pytest.mark.parametrize("A", [64, 128, 256])
def test_fft_error_follows_register_size(A):
    specs = [IntegrandSpec(name="linear"), IntegrandSpec(name="product", d=2), IntegrandSpec(name="gaussian-bump", M=8)]

    for spec in specs:
        oracle = spec.build()
        S = float(np.mean(oracle.values()))
        estimate = estimate_mean_grover_fft(oracle, 0.1, CountingConfig(A=A, exact_readout=True))

        assert abs(estimate.value - S) <= math.pi / A + math.pi ** 2 / A ** 2, f"{spec.name} misses the 1/A budget at A={A}!"

@pytest.mark.parametrize("r", [0, 16])
def test_count_sampling_extremes(r):
    estimate = estimate_count_sampling(boolean_with_count(r), 0.1, seed=3)

    assert estimate.value == r / 16

def test_count_sampling_exact_and_queries():
    boolean = make_boolean_extension(linear_oracle(), 4)
    estimate = estimate_count_sampling(boolean, 0.1, settings=EXACT)

    assert estimate.value == pytest.approx(LINEAR_MEAN, abs=1e-12)
    assert estimate.oracle_queries == boolean.queries == estimate.shots, "One b-query per shot!"

def test_count_sampling_concentration():
    hits = sum(abs(estimate_count_sampling(make_boolean_extension(linear_oracle(), 4), 0.05, seed).value - LINEAR_MEAN) <= 0.05 for seed in range(100))

    assert hits >= 67

def test_count_fft_without_marked_items():
    estimate = estimate_count_fft(boolean_with_count(0), 0.05, CountingConfig(A=64, exact_readout=True))

    assert estimate.value == pytest.approx(0.0, abs=1e-12)
    assert estimate.count_estimate == 0

def test_count_fft_quarter_marked():
    estimate = estimate_count_fft(boolean_with_count(4), 0.05, CountingConfig(A=128, exact_readout=True))

    assert abs(estimate.value - 0.25) <= fft_budget(0.25, 128)
    assert estimate.count_estimate == 4

@pytest.mark.parametrize("r", range(17))
def test_count_fft_recovers_every_count(r):
    estimate = estimate_count_fft(boolean_with_count(r), 0.05, CountingConfig(A=128, exact_readout=True))

    assert estimate.count_estimate == r, f"Counted {estimate.count_estimate} instead of {r}!"

@pytest.mark.parametrize("r", range(17))
def test_count_fft_sampled_within_one(r):
    hits = 0
    for seed in range(20):
        estimate = estimate_count_fft(boolean_with_count(r), 0.05, CountingConfig(A=128), seed=seed)
        hits += abs(estimate.count_estimate - r) <= 1

    assert hits >= 18, f"Only {hits} of 20 seeds counted {r} within one!"

def test_count_fft_sampled_repetitions():
    for seed in range(20):
        boolean = make_boolean_extension(linear_oracle(), 4)
        estimate = estimate_count_fft(boolean, 2 ** -6, CountingConfig(A=256), seed=seed)

        assert abs(estimate.count_estimate - 6) <= 1, f"Seed {seed} miscounted!"

def test_count_fft_query_accounting():
    boolean = boolean_with_count(5)
    estimate = estimate_count_fft(boolean, 0.1, CountingConfig(A=32, repetitions=2), seed=1)

    assert estimate.oracle_queries == boolean.queries == 31 * 16 * 2

@pytest.mark.parametrize("c", [0.0, 1.0])
def test_sqrt_sampling_extremes(c):
    assert estimate_mean_sqrt_sampling(constant_oracle(c), 0.1, seed=4).value == pytest.approx(c, abs=1e-12)

def test_sqrt_sampling_exact_readout():
    assert estimate_mean_sqrt_sampling(linear_oracle(), 0.1, settings=EXACT).value == pytest.approx(LINEAR_MEAN, abs=1e-12)

def test_sqrt_sampling_concentration():
    shots = math.ceil(16 / 0.05 ** 2)
    bound = 5 * math.sqrt(LINEAR_MEAN * (1 - LINEAR_MEAN) / shots)

    for seed in range(10):
        assert abs(estimate_mean_sqrt_sampling(linear_oracle(), 0.05, seed).value - LINEAR_MEAN) <= bound

def test_sqrt_fft_of_zero():
    assert estimate_mean_sqrt_fft(constant_oracle(0.0), 0.05, CountingConfig(A=64, exact_readout=True)).value == pytest.approx(0.0, abs=1e-12)

def test_sqrt_fft_exact_readout():
    estimate = estimate_mean_sqrt_fft(linear_oracle(), 2 ** -6, CountingConfig(A=256, exact_readout=True))

    assert abs(estimate.value - LINEAR_MEAN) <= fft_budget(LINEAR_MEAN, 256)
    assert estimate.method == EstimatorMethod.SQRT_FFT

def test_fft_rows_agree():
    config = CountingConfig(A=256, exact_readout=True)

    grover = estimate_mean_grover_fft(linear_oracle(), 2 ** -6, config).value
    counting = estimate_count_fft(make_boolean_extension(linear_oracle(), 4), 2 ** -6, config).value
    sqrt = estimate_mean_sqrt_fft(linear_oracle(), 2 ** -6, config).value

    budget = math.pi / 256 + fft_budget(LINEAR_MEAN, 256)

    assert abs(grover - counting) <= budget and abs(grover - sqrt) <= budget and abs(counting - sqrt) <= 2 * fft_budget(LINEAR_MEAN, 256)

@pytest.mark.parametrize("method", [
    EstimatorMethod.QM_SAMPLING,
    EstimatorMethod.QM_ITERATED,
    EstimatorMethod.QM_GROVER_FFT,
    EstimatorMethod.SQRT_SAMPLING,
    EstimatorMethod.SQRT_FFT,
    EstimatorMethod.CLASSICAL_MC,
    EstimatorMethod.CLASSICAL_EXACT,
])
def test_reported_queries_match_the_counter(method):
    oracle = linear_oracle()
    estimate = run_estimator(method, oracle, 0.1, EstimatorSettings(A=32), seed=8)

    assert estimate.method == method
    assert estimate.oracle_queries == oracle.queries > 0

def test_run_estimator_accepts_tags():
    estimate = run_estimator("qc_fft", linear_oracle(), 0.1, EstimatorSettings(Q=4, A=64, exact_readout=True))

    assert estimate.method == EstimatorMethod.QC_FFT
    assert estimate.count_estimate == 6

def test_classical_mc_default_sample_count():
    estimate = run_estimator(EstimatorMethod.CLASSICAL_MC, linear_oracle(), 0.1, seed=0)

    assert estimate.shots == 100 and estimate.oracle_queries == 100

@pytest.mark.parametrize("moment,expected", [
    (1, 0.5),
    (2, 42.0 / 144.0),
])
def test_walk_moments_by_quantum_counting(moment, expected):
    settings = EstimatorSettings(Q=64, A=256, exact_readout=True)
    estimate = estimate_moment(random_walk_spec(6, moment), 2 ** -6, EstimatorMethod.QC_FFT, settings=settings)

    assert abs(estimate.value - expected) <= 1 / 128 + fft_budget(expected, 256)

@pytest.mark.parametrize("moment,expected", [
    (1, 0.5),
    (2, 42.0 / 144.0),
])
def test_walk_moments_by_iterated_estimates(moment, expected):
    estimate = estimate_moment(random_walk_spec(6, moment), 2 ** -6, EstimatorMethod.QM_ITERATED, settings=EXACT)

    assert abs(estimate.value - expected) <= 2 ** -6

def test_describe_walk():
    summary = describe_process(random_walk_spec(4), 2 ** -6, EstimatorMethod.QM_ITERATED, settings=EXACT)

    assert summary.mean == pytest.approx(0.0, abs=1e-6)
    assert summary.variance == pytest.approx(4.0, abs=1e-6)
    assert summary.skewness == pytest.approx(0.0, abs=1e-6)

import csv
import math
import time
import logging
import itertools
import configparser

import numpy as np

from pathlib import Path
from typing import Dict, List, Optional, TextIO, Tuple, Union
from concurrent.futures import ThreadPoolExecutor
from pydantic import BaseModel, NonNegativeInt, PositiveInt, ValidationError, field_validator, model_validator

from quantum_integration.utils import MAX_QUBITS, CapacityException, stable_hash
from quantum_integration.oracles import EstimatorMethod, true_mean
from quantum_integration.registry import IntegrandSpec
from quantum_integration.estimators import EstimatorSettings, run_estimator

logger = logging.getLogger(__name__)

CSV_HEADER = ["method", "integrand", "d", "M", "eps_target", "value", "true_value", "abs_error", "oracle_queries", "shots", "seed", "wall_time_ms"]
FLOAT_FORMAT = "{:.12g}"
MIN_FIT_POINTS = 4
EXACT_ERROR_FLOOR = 1e-12

# NOTE: positional argument order of every estimator tag, e.g. qc_fft(64, 256, 5)
ESTIMATOR_PARAMETERS: Dict[EstimatorMethod, Tuple[str, ...]] = {
    EstimatorMethod.QM_SAMPLING: (),
    EstimatorMethod.QM_ITERATED: ("delta",),
    EstimatorMethod.QM_GROVER_FFT: ("A", "reps"),
    EstimatorMethod.QC_SAMPLING: ("Q",),
    EstimatorMethod.QC_FFT: ("Q", "A", "reps"),
    EstimatorMethod.SQRT_SAMPLING: (),
    EstimatorMethod.SQRT_FFT: ("A", "reps"),
    EstimatorMethod.CLASSICAL_MC: ("n",),
    EstimatorMethod.CLASSICAL_EXACT: (),
}
SETTING_NAMES = {"delta": "delta", "A": "A", "reps": "repetitions", "Q": "Q", "n": "samples"}
INTEGER_PARAMETERS = {"A", "reps", "Q", "n"}

class UnknownEstimatorException(Exception):
    """
    Raised when an estimator tag (or one of its parameters) is not part of the vocabulary.
    """

    def __init__(self, message: str, tag: str):
        super().__init__(message)

        self.message = message
        self.tag = tag

class ConfigException(Exception):
    """
    Raised when a sweep configuration file cannot be read or does not validate.
    """

    def __init__(self, message: str, path: Union[str, Path, None]):
        super().__init__(message)

        self.message = message
        self.path = path

class FitException(Exception):
    """
    Raised when too few usable points remain to fit a scaling exponent.
    """

    def __init__(self, message: str, method: str):
        super().__init__(message)

        self.message = message
        self.method = method

def split_top_level(text: str, separators: str = ",") -> List[str]:
    """
    Split on separators that are not inside parentheses.
    """
    items, depth, current = [], 0, []

    for character in text:
        if character == "(":
            depth += 1
        elif character == ")":
            depth -= 1

        if character in separators and depth == 0:
            items.append("".join(current).strip())
            current = []
        else:
            current.append(character)

    items.append("".join(current).strip())

    return [item for item in items if item]

def parse_number(text: str) -> float:
    """
    Plain floats, or powers of two written as 2^-k.
    """
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return float(text)

def format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else FLOAT_FORMAT.format(value)

class EstimatorSpec(BaseModel):
    method: EstimatorMethod
    params: Dict[str, float] = {}

    @model_validator(mode="after")
    def check_params(self):
        allowed = ESTIMATOR_PARAMETERS[self.method]
        unknown = [key for key in self.params if key not in allowed]
        if unknown:
            raise ValueError(f"Estimator {self.method.value} accepts {allowed}, got {unknown}.")
        for key in INTEGER_PARAMETERS & set(self.params):
            if not float(self.params[key]).is_integer():
                raise ValueError(f"Parameter {key} of {self.method.value} must be an integer, got {self.params[key]}.")
        return self

    @property
    def label(self) -> str:
        if not self.params:
            return self.method.value
        ordered = [f"{key}={format_number(self.params[key])}" for key in ESTIMATOR_PARAMETERS[self.method] if key in self.params]
        return f"{self.method.value}({';'.join(ordered)})"

    def settings(self, exact_readout: bool = False, max_qubits: int = MAX_QUBITS) -> EstimatorSettings:
        values = {}
        for key, value in self.params.items():
            values[SETTING_NAMES[key]] = int(value) if key in INTEGER_PARAMETERS else float(value)
        return EstimatorSettings(exact_readout=exact_readout, max_qubits=max_qubits, **values)

def parse_estimator_spec(text: str) -> EstimatorSpec:
    """
    Parse `name`, `name(v1, v2)` or `name(key=value; ...)` into an EstimatorSpec.
    """
    name, _, rest = text.strip().partition("(")
    name = name.strip().lower()

    try:
        method = EstimatorMethod(name)
    except ValueError:
        raise UnknownEstimatorException(f"Unknown estimator tag '{name}', expected one of {[m.value for m in EstimatorMethod]}.", text)

    if rest and not rest.rstrip().endswith(")"):
        raise UnknownEstimatorException(f"Unbalanced parentheses in estimator '{text}'.", text)

    positional = ESTIMATOR_PARAMETERS[method]
    params = {}

    for index, argument in enumerate(split_top_level(rest.rstrip()[:-1] if rest else "", ",;")):
        key, separator, value = argument.partition("=")
        if not separator:
            if index >= len(positional):
                raise UnknownEstimatorException(f"Estimator {name} takes at most {len(positional)} positional arguments.", text)
            key, value = positional[index], argument
        try:
            params[key.strip()] = parse_number(value)
        except ValueError:
            raise UnknownEstimatorException(f"Argument {key.strip()} of estimator {name} is not a number: {value.strip()!r}.", text)

    try:
        return EstimatorSpec(method=method, params=params)
    except ValidationError as exception:
        raise UnknownEstimatorException(str(exception), text) from exception

class SweepConfig(BaseModel):
    integrands: List[IntegrandSpec]
    estimators: List[EstimatorSpec] = []
    epsilons: List[float]
    seeds: List[int] = [0]
    output: Optional[Path] = None
    exact_readout: bool = False
    seed_base: NonNegativeInt = 0
    workers: PositiveInt = 1
    record_timing: bool = False
    max_qubits: PositiveInt = MAX_QUBITS

    @field_validator("estimators", mode="before")
    def parse_estimators(cls, v):
        parsed = []
        for item in v or []:
            if isinstance(item, str):
                try:
                    item = parse_estimator_spec(item)
                except UnknownEstimatorException as exception:
                    raise ValueError(exception.message)
            parsed.append(item)
        return parsed

    @field_validator("epsilons")
    def check_epsilons(cls, v):
        if not v:
            raise ValueError("At least one target accuracy is required.")
        for epsilon in v:
            if not 0.0 < epsilon < 0.5:
                raise ValueError(f"Every target accuracy must lie in (0, 1/2), got {epsilon}.")
        return v

    @field_validator("seeds")
    def check_seeds(cls, v):
        if not v:
            raise ValueError("At least one seed is required.")
        return v

def load_config(path: Union[str, Path], **overrides) -> SweepConfig:
    """
    Read a sweep configuration:

        [sweep]
        estimators = qm_sampling, qm_iterated(delta=0.25), qc_fft(Q=64, A=256, reps=5)
        epsilons = 2^-3, 2^-4, 2^-5, 2^-6
        seeds = 1, 2, 3
        output = results.csv

        [integrand]
        name = linear
        d = 1
        M = 4

    Every section whose name starts with `integrand` adds one integrand; keys other than name, d, M, label become params.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str

    try:
        with open(path, "r", encoding="utf-8") as file:
            parser.read_file(file)
    except (OSError, configparser.Error) as exception:
        raise ConfigException(f"Could not read sweep config {path}: {exception}", path) from exception

    if not parser.has_section("sweep"):
        raise ConfigException(f"Sweep config {path} has no [sweep] section.", path)

    sweep = parser["sweep"]
    values = {}

    try:
        if "estimators" in sweep:
            values["estimators"] = split_top_level(sweep["estimators"])
        if "epsilons" in sweep:
            values["epsilons"] = [parse_number(item) for item in split_top_level(sweep["epsilons"])]
        if "seeds" in sweep:
            values["seeds"] = [int(item) for item in split_top_level(sweep["seeds"])]
        for key in ("output", "seed_base", "workers", "max_qubits"):
            if key in sweep:
                values[key] = sweep[key]
        for key in ("exact_readout", "record_timing"):
            if key in sweep:
                values[key] = sweep.getboolean(key)

        integrands = []
        for section in parser.sections():
            if not section.startswith("integrand"):
                continue
            entries = dict(parser[section])
            label = entries.pop("label", None) or (section.partition(":")[2].strip() or None)
            integrands.append({
                "name": entries.pop("name", ""),
                "d": entries.pop("d", 1),
                "M": entries.pop("M", 4),
                "label": label,
                "params": {key: parse_number(value) for key, value in entries.items()},
            })
        values["integrands"] = integrands

        values.update({key: value for key, value in overrides.items() if value is not None})

        return SweepConfig(**values)
    except (ValueError, ValidationError) as exception:
        raise ConfigException(f"Invalid sweep config {path}: {exception}", path) from exception

class SweepRecord(BaseModel):
    method: str
    integrand: str
    d: PositiveInt
    M: PositiveInt
    eps_target: float
    value: float
    true_value: float
    abs_error: float
    oracle_queries: NonNegativeInt
    shots: NonNegativeInt
    seed: int
    wall_time_ms: float = 0.0

    def sort_key(self):
        return (self.method, self.integrand, self.eps_target, self.seed)

class SweepFailure(BaseModel):
    method: str
    integrand: str
    eps_target: float
    seed: int
    error: str

class SweepCell(BaseModel):
    estimator: EstimatorSpec
    integrand: IntegrandSpec
    epsilon: float
    seed: int

    def key(self) -> str:
        integrand = self.integrand
        return f"{self.estimator.label}|{integrand.display_name}|{integrand.d}|{integrand.M}|{self.epsilon!r}|{self.seed}"

class SweepRunner():
    """
    Runs every (estimator, integrand, epsilon, seed) cell of a SweepConfig. Cells are independent: each builds its own
    oracle and draws from a seed derived from its coordinates, so results do not depend on scheduling.
    Failed cells are collected in `failures` and never abort the sweep.
    """

    def __init__(self, config: SweepConfig):
        self.config = config
        self.failures: List[SweepFailure] = []

        self.__true_values: Dict[str, float] = {}

    def cells(self) -> List[SweepCell]:
        return [
            SweepCell(estimator=estimator, integrand=integrand, epsilon=epsilon, seed=seed)
            for estimator, integrand, epsilon, seed in itertools.product(self.config.estimators, self.config.integrands, self.config.epsilons, self.config.seeds)
        ]

    def cell_seed(self, cell: SweepCell) -> int:
        return self.config.seed_base ^ stable_hash(cell.key())

    def run(self) -> List[SweepRecord]:
        cells = self.cells()

        if self.config.workers > 1 and len(cells) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
                outcomes = list(executor.map(self.__run_cell, cells))
        else:
            outcomes = [self.__run_cell(cell) for cell in cells]

        records = sorted((outcome for outcome in outcomes if isinstance(outcome, SweepRecord)), key=SweepRecord.sort_key)
        self.failures = sorted(
            (outcome for outcome in outcomes if isinstance(outcome, SweepFailure)),
            key=lambda failure: (failure.method, failure.integrand, failure.eps_target, failure.seed)
        )

        return records

    def __true_value(self, integrand: IntegrandSpec) -> float:
        key = f"{integrand.name}|{integrand.d}|{integrand.M}|{sorted(integrand.params.items())}"

        if key not in self.__true_values:
            try:
                self.__true_values[key] = true_mean(integrand.build())
            except CapacityException as exception:
                logger.warning(f"no exact reference for {integrand.display_name}: {exception.message}")
                self.__true_values[key] = math.nan

        return self.__true_values[key]

    def __run_cell(self, cell: SweepCell) -> Union[SweepRecord, SweepFailure]:
        label = cell.estimator.label

        try:
            oracle = cell.integrand.build()
            settings = cell.estimator.settings(self.config.exact_readout, self.config.max_qubits)

            start = time.perf_counter()
            estimate = run_estimator(cell.estimator.method, oracle, cell.epsilon, settings, self.cell_seed(cell))
            elapsed = (time.perf_counter() - start) * 1000.0
        except Exception as exception:
            logger.warning(f"cell {label} / {cell.integrand.display_name} / eps={cell.epsilon} / seed={cell.seed} failed: {type(exception).__name__}: {exception}")
            return SweepFailure(method=label, integrand=cell.integrand.display_name, eps_target=cell.epsilon, seed=cell.seed, error=f"{type(exception).__name__}: {exception}")

        true_value = self.__true_value(cell.integrand)

        logger.info(f"{label} / {cell.integrand.display_name} / eps={cell.epsilon:g} / seed={cell.seed}: value={estimate.value:.6f} queries={estimate.oracle_queries}")

        return SweepRecord(
            method=label,
            integrand=cell.integrand.display_name,
            d=oracle.domain.d,
            M=oracle.domain.M,
            eps_target=cell.epsilon,
            value=estimate.value,
            true_value=true_value,
            abs_error=abs(estimate.value - true_value),
            oracle_queries=estimate.oracle_queries,
            shots=estimate.shots,
            seed=cell.seed,
            wall_time_ms=elapsed if self.config.record_timing else 0.0,
        )

def run_sweep(config: SweepConfig) -> List[SweepRecord]:
    return SweepRunner(config).run()

class ScalingFit(BaseModel):
    method: str
    slope: float
    intercept: float
    r_squared: float
    points: PositiveInt

def method_matches(label: str, method: str) -> bool:
    return label == method or label.startswith(method + "(")

def fit_scaling(records: List[SweepRecord], method: str, use_target: bool = False, integrand: Optional[str] = None) -> ScalingFit:
    """
    Least-squares fit of log2(queries) against log2(1 / error). The error is the achieved one unless `use_target` is set.
    Records whose error is undefined or at most EXACT_ERROR_FLOOR carry no accuracy information and are dropped first.
    Each integrand is then reduced to the median over seeds, and each target accuracy to the mean over integrands.
    """
    method = method.value if isinstance(method, EstimatorMethod) else method

    groups: Dict[float, Dict[str, List[SweepRecord]]] = {}
    for record in records:
        if not method_matches(record.method, method) or (integrand is not None and record.integrand != integrand):
            continue
        if not use_target and not (math.isfinite(record.abs_error) and record.abs_error > EXACT_ERROR_FLOOR):
            continue
        groups.setdefault(record.eps_target, {}).setdefault(record.integrand, []).append(record)

    abscissa, ordinate = [], []
    for epsilon in sorted(groups):
        per_integrand = groups[epsilon].values()

        queries = float(np.mean([np.median([record.oracle_queries for record in group]) for group in per_integrand]))
        error = epsilon if use_target else float(np.mean([np.median([record.abs_error for record in group]) for group in per_integrand]))

        if queries <= 0.0:
            continue

        abscissa.append(math.log2(1.0 / error))
        ordinate.append(math.log2(queries))

    if len(set(abscissa)) < MIN_FIT_POINTS:
        raise FitException(f"Fitting {method} needs {MIN_FIT_POINTS} distinct usable accuracies, got {len(set(abscissa))}.", method)

    x = np.asarray(abscissa)
    y = np.asarray(ordinate)

    slope, intercept = np.polyfit(x, y, 1)

    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))

    return ScalingFit(
        method=method,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=1.0 - residual / total if total > 0.0 else 1.0,
        points=len(x),
    )

def format_field(value) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT.format(value)
    return str(value)

def write_records(records: List[SweepRecord], file: TextIO):
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(CSV_HEADER)

    for record in records:
        writer.writerow([format_field(getattr(record, column)) for column in CSV_HEADER])

def emit_csv(records: List[SweepRecord], path: Union[str, Path]):
    with open(path, "w", encoding="utf-8", newline="") as file:
        write_records(records, file)

def read_csv(path: Union[str, Path]) -> List[SweepRecord]:
    with open(path, "r", encoding="utf-8", newline="") as file:
        reader = csv.DictReader(file)

        if reader.fieldnames != CSV_HEADER:
            raise ConfigException(f"{path} does not carry the sweep CSV header.", path)

        return [SweepRecord(**row) for row in reader]

def write_failures(failures: List[SweepFailure], path: Union[str, Path]):
    with open(path, "w", encoding="utf-8", newline="") as file:
        for failure in failures:
            file.write(f"{failure.method}\t{failure.integrand}\teps={FLOAT_FORMAT.format(failure.eps_target)}\tseed={failure.seed}\t{failure.error}\n")

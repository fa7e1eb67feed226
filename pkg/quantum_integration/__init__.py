from quantum_integration.oracles import GridDomain, IntegrandOracle, BooleanOracle, Estimate, EstimatorMethod
from quantum_integration.estimators import EstimatorSettings, CountingConfig, run_estimator, estimate_moment, describe_process
from quantum_integration.harness import SweepConfig, SweepRecord, SweepRunner, load_config, run_sweep, fit_scaling, emit_csv, read_csv

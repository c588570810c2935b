"""Deterministic fluid-model simulator and analysis toolkit for delay-based
congestion control.

The package models window-based flows that react to queueing delay, the
persistent unfairness a late arrival gains from a standing queue, and two
mitigations: a transient rate-reduction pause and a delay-probe correction
that estimates the standing queue and removes it from the propagation-delay
estimate.  Simulations are deterministic given a seed, and closed-form
equilibrium predictions from the analysis module back every experiment.
"""

from .analysis import (
    EquilibriumPrediction,
    default_fairness_window,
    fairness_ratio,
    predict_equilibrium,
    predicted_ratio_for,
    rr_drain_feasible,
    rr_residual_bias,
    rr_residual_ratio,
    rr_threshold,
    summary_row,
    unfairness_ratio,
    write_summary,
)
from .estimators import (
    DeltaProbeEstimator,
    Estimator,
    MeasurementFailure,
    RateReductionEstimator,
    detect_stable,
    make_estimator,
    probe_correct_delay,
    probe_estimate_capacity,
    probe_estimate_n,
)
from .experiments import (
    SweepSpec,
    late_flow_scenario,
    load_sweep,
    parking_lot_scenario,
    parse_sweep,
    run_sweep,
    run_sweep_point,
)
from .fluidsim import (
    FluidSimulation,
    SimulationError,
    Trace,
    pareto_background,
    run_scenario,
)
from .model import (
    EstimatorSpec,
    FlowSpec,
    LinkSpec,
    ParetoSourceSpec,
    Scenario,
    Topology,
    ValidationError,
    build_parking_lot,
    build_single_bottleneck,
    mbps_to_pkts_per_s,
    replace_flow,
)
from .scenario_io import ScenarioFormatError, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "DeltaProbeEstimator",
    "EquilibriumPrediction",
    "Estimator",
    "EstimatorSpec",
    "FlowSpec",
    "FluidSimulation",
    "LinkSpec",
    "MeasurementFailure",
    "ParetoSourceSpec",
    "RateReductionEstimator",
    "Scenario",
    "ScenarioFormatError",
    "SimulationError",
    "SweepSpec",
    "Topology",
    "Trace",
    "ValidationError",
    "build_parking_lot",
    "build_single_bottleneck",
    "default_fairness_window",
    "detect_stable",
    "fairness_ratio",
    "late_flow_scenario",
    "load_scenario",
    "load_sweep",
    "make_estimator",
    "mbps_to_pkts_per_s",
    "pareto_background",
    "parking_lot_scenario",
    "parse_scenario",
    "parse_sweep",
    "predict_equilibrium",
    "predicted_ratio_for",
    "probe_correct_delay",
    "probe_estimate_capacity",
    "probe_estimate_n",
    "replace_flow",
    "rr_drain_feasible",
    "rr_residual_bias",
    "rr_residual_ratio",
    "rr_threshold",
    "run_scenario",
    "run_sweep",
    "run_sweep_point",
    "summary_row",
    "unfairness_ratio",
    "write_summary",
]

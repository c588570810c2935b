"""Prebuilt experiment scenarios and parameter sweeps.

All experiments share one shape: n established flows reach equilibrium,
one more flow arrives late into the standing queue, and we measure how far
the newcomer's rate sits above its fair share once everything settles.
The sweep engine repeats that experiment across a swept parameter (round
trip propagation delay, flow count, or background traffic intensity) for
each requested estimator and emits one summary row per point.

Sweep files use the same section syntax as scenario files:

    [sweep]
    name = rtt_sweep_demo
    kind = rtt_sweep
    values_s = 0.02, 0.04, 0.06, 0.15, 0.22, 0.30
    estimators = naive_min, rate_reduction, delta_probe
    n_flows = 8
    capacity_mbps = 100
    alpha_pkts = 50

The value key carries the unit of the swept parameter: values_s for delays,
values for flow counts, values_mbps for background peak rates.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import os
from dataclasses import dataclass

from . import analysis, model
from .fluidsim import run_scenario
from .scenario_io import ScenarioFormatError, load_scenario, parse_sections

SWEEP_KINDS = ("rtt_sweep", "nflows_sweep", "background_sweep", "single_run")
DEFAULT_ESTIMATORS = ("naive_min", "rate_reduction", "delta_probe")

RTT_SWEEP_VALUES = (0.02, 0.04, 0.06, 0.15, 0.22, 0.30)
NFLOWS_SWEEP_VALUES = (2.0, 4.0, 8.0, 16.0)
BACKGROUND_SWEEP_MBPS = (5.0, 20.0, 50.0)

SWEEP_EXTRA_COLUMNS = ("value", "status")

# Tuning shared by the bundled experiments.  The tight stability tolerance
# makes the pre-probe equilibrium accurate enough that the measured flow
# count lands within a percent of the true value; background runs need a
# looser tolerance because cross traffic never lets the rate settle that
# far, plus a probe short enough to finish inside one quiet stretch.
STABLE_TOL_CLEAN = 0.001
STABLE_TOL_NOISY = 0.02
BACKGROUND_T_EPS = 0.012


def _estimator_spec(kind, theta=-0.5, t_eps=None, stable_tol=STABLE_TOL_CLEAN):
    return model.EstimatorSpec(kind=kind, theta=theta, t_eps=t_eps,
                               stable_tol=stable_tol)


def late_flow_scenario(
    n_established,
    capacity,
    alpha,
    round_trip_prop,
    estimator,
    *,
    arrival_time=40.0,
    duration=150.0,
    dt=None,
    seed=1,
    output_interval=0.01,
    name="late_flow",
):
    """Dumbbell with n established flows and one late arrival.

    Returns (scenario, late_flow_id).  The established flows start together
    on an empty queue, so their minimum-filter estimates are truthful; the
    late flow uses the given estimator spec.
    """
    if dt is None:
        dt = min(1e-3, round_trip_prop / 20)
    topo = model.build_single_bottleneck(
        n_flows=n_established + 1,
        capacity=capacity,
        access_delay=round_trip_prop / 4,
        bottleneck_delay=round_trip_prop / 4,
        alpha=alpha,
        start_gap=0.0,
    )
    late_id = f"f{n_established}"
    topo = model.replace_flow(topo, late_id,
                              start_time=arrival_time, estimator=estimator)
    scenario = model.Scenario(
        topology=topo,
        duration=duration,
        dt=dt,
        seed=seed,
        output_interval=output_interval,
        name=name,
    )
    scenario.validate()
    return scenario, late_id


def parking_lot_scenario(
    n_sources,
    capacity,
    alpha,
    link_delay,
    estimator,
    peak_rate,
    *,
    arrival_time=40.0,
    duration=120.0,
    dt=1e-3,
    seed=1,
    output_interval=0.01,
    name="parking_lot",
    bg_shape=1.25,
    bg_mean_burst=0.1,
    bg_mean_idle=0.1,
):
    """Chain topology with on/off cross traffic and one long-path arrival.

    Source 1 (the full-path flow) arrives late with the given estimator;
    the shorter sources and the background start immediately.  Returns
    (scenario, "s1").
    """
    topo = model.build_parking_lot(
        n_sources=n_sources,
        link_capacity=capacity,
        link_delay=link_delay,
        alpha=alpha,
    )
    topo = model.replace_flow(topo, "s1",
                              start_time=arrival_time, estimator=estimator)
    background = None
    if peak_rate > 0:
        background = model.ParetoSourceSpec(
            path=tuple(l.id for l in topo.links),
            shape=bg_shape,
            mean_burst=bg_mean_burst,
            mean_idle=bg_mean_idle,
            peak_rate=peak_rate,
        )
    scenario = model.Scenario(
        topology=topo,
        duration=duration,
        dt=dt,
        seed=seed,
        background=background,
        output_interval=output_interval,
        name=name,
    )
    scenario.validate()
    return scenario, "s1"


@dataclass(frozen=True)
class SweepSpec:
    """One family of runs over a swept parameter.

    kind selects what `values` means:
      rtt_sweep         round-trip propagation delays in seconds
      nflows_sweep      established flow counts
      background_sweep  background peak rates in pkt/s
      single_run        no swept value; the base scenario file is run once
                        per estimator with the latest-starting flow switched
                        to that estimator
    """

    kind: str
    values: tuple[float, ...] = ()
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS
    name: str = "sweep"
    seed: int = 1
    capacity: float = 12500.0
    alpha: float = 50.0
    n_flows: int = 8              # rtt_sweep: established flows
    round_trip_prop: float = 0.10  # nflows_sweep: fixed delay
    n_sources: int = 5            # background_sweep: chain sources
    link_delay: float = 0.005     # background_sweep: per-hop one-way delay
    base_scenario: str | None = None  # single_run only
    theta: float = -0.5
    t_eps: float | None = None
    stable_tol: float | None = None
    arrival_time: float | None = None
    duration: float | None = None

    def validate(self):
        if self.kind not in SWEEP_KINDS:
            raise model.ValidationError(f"unknown sweep kind {self.kind!r}")
        if self.kind == "single_run":
            if self.base_scenario is None:
                raise model.ValidationError("single_run needs a base scenario file")
        else:
            if self.base_scenario is not None:
                raise model.ValidationError(
                    "scenario only applies to single_run sweeps")
            if not self.values:
                raise model.ValidationError(f"{self.kind} needs at least one value")
            if list(self.values) != sorted(self.values):
                raise model.ValidationError("values must be increasing")
            if len(set(self.values)) != len(self.values):
                raise model.ValidationError("values must not repeat")
        if not self.estimators:
            raise model.ValidationError("estimators must be non-empty")
        for e in self.estimators:
            if e not in model.ESTIMATOR_KINDS:
                raise model.ValidationError(f"unknown estimator {e!r}")

    def points(self):
        """(value, estimator) pairs in output order."""
        values = self.values if self.kind != "single_run" else (0.0,)
        return [(v, e) for v in sorted(values) for e in sorted(self.estimators)]


def _sweep_stable_tol(spec):
    if spec.stable_tol is not None:
        return spec.stable_tol
    return STABLE_TOL_NOISY if spec.kind == "background_sweep" else STABLE_TOL_CLEAN


def _sweep_t_eps(spec):
    if spec.t_eps is not None:
        return spec.t_eps
    return BACKGROUND_T_EPS if spec.kind == "background_sweep" else None


def point_scenario(spec, value, estimator):
    """Build the scenario behind one sweep point.

    Returns (scenario, late_flow_id, n_established, round_trip_prop).
    """
    est = _estimator_spec(estimator, theta=spec.theta,
                          t_eps=_sweep_t_eps(spec),
                          stable_tol=_sweep_stable_tol(spec))
    label = f"{spec.name}_{value:g}_{estimator}"
    if spec.kind == "rtt_sweep":
        arrival = spec.arrival_time if spec.arrival_time is not None else 60.0
        duration = spec.duration if spec.duration is not None else 200.0
        scenario, late_id = late_flow_scenario(
            spec.n_flows, spec.capacity, spec.alpha, value, est,
            arrival_time=arrival, duration=duration, seed=spec.seed,
            name=label,
        )
        return scenario, late_id, spec.n_flows, value
    if spec.kind == "nflows_sweep":
        n = int(round(value))
        arrival = spec.arrival_time if spec.arrival_time is not None else 60.0
        duration = spec.duration if spec.duration is not None else 200.0
        scenario, late_id = late_flow_scenario(
            n, spec.capacity, spec.alpha, spec.round_trip_prop, est,
            arrival_time=arrival, duration=duration, seed=spec.seed,
            name=label,
        )
        return scenario, late_id, n, spec.round_trip_prop
    if spec.kind == "background_sweep":
        arrival = spec.arrival_time if spec.arrival_time is not None else 40.0
        duration = spec.duration if spec.duration is not None else 120.0
        scenario, late_id = parking_lot_scenario(
            spec.n_sources, spec.capacity, spec.alpha, spec.link_delay,
            est, value,
            arrival_time=arrival, duration=duration, seed=spec.seed,
            name=label,
        )
        n = spec.n_sources - 1
        d = 2 * spec.n_sources * spec.link_delay
        return scenario, late_id, n, d
    # single_run: reparse the base file, then retag the latest arrival
    base = load_scenario(spec.base_scenario)
    flows = base.topology.flows
    late = max(flows, key=lambda f: (f.start_time, f.id))
    topo = model.replace_flow(base.topology, late.id, estimator=est)
    scenario = dataclasses.replace(base, topology=topo, seed=spec.seed,
                                   name=label)
    scenario.validate()
    n = len(flows) - 1
    d = base.topology.round_trip_prop(late)
    return scenario, late.id, n, d


def summarize_run(trace, late_id, n, capacity, alpha, estimator, d,
                  scenario_name, window=None):
    """Fairness and backlog metrics for one finished run, as a summary row."""
    if window is None:
        window = analysis.default_fairness_window(trace)
    ratio = analysis.fairness_ratio(trace, late_id, window)
    path = trace.meta["paths"][late_id]
    backlog = trace.mean_total_backlog(window[0], window[1], link_ids=path)
    return analysis.summary_row(
        scenario_name, n, capacity, alpha, estimator, ratio, backlog,
        predicted_ratio=analysis.predicted_ratio_for(
            estimator, n, capacity, alpha, d),
    )


def run_sweep_point(spec, value, estimator):
    """Run one (value, estimator) point and return its summary row."""
    scenario, late_id, n, d = point_scenario(spec, value, estimator)
    alpha = scenario.topology.flow_map()[late_id].alpha
    capacity = min(scenario.topology.link_map()[l].capacity
                   for l in scenario.topology.flow_map()[late_id].path)
    row = {
        "scenario": scenario.name,
        "n": n,
        "capacity_pkts_s": capacity,
        "alpha_pkts": alpha,
        "estimator": estimator,
        "value": value,
        "status": "ok",
    }
    try:
        trace = run_scenario(scenario)
        row.update(summarize_run(trace, late_id, n, capacity, alpha,
                                 estimator, d, scenario.name))
        if trace.events_for(late_id, "failure"):
            row["status"] = "estimator_gave_up"
    except Exception as exc:
        row["status"] = f"error: {exc}"
    row["value"] = value
    return row


def _point_worker(args):
    spec, value, estimator = args
    return run_sweep_point(spec, value, estimator)


def run_sweep(spec, workers=1, progress=None):
    """Run every sweep point and return summary rows in (value, estimator)
    order.  workers > 1 runs points in separate processes."""
    spec.validate()
    points = spec.points()
    rows = []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            args = [(spec, v, e) for v, e in points]
            for row in pool.map(_point_worker, args):
                rows.append(row)
                if progress is not None:
                    progress(row)
    else:
        for value, estimator in points:
            row = run_sweep_point(spec, value, estimator)
            rows.append(row)
            if progress is not None:
                progress(row)
    rows.sort(key=lambda r: (r["value"], r["estimator"]))
    return rows


def parse_sweep(text, path="<string>"):
    """Parse a sweep file into a validated SweepSpec."""
    sections = parse_sections(text, path)
    swp = None
    for sec in sections:
        if sec.name != "sweep":
            sec.fail(f"unknown section [{sec.name}] in sweep file")
        if swp is not None:
            sec.fail("duplicate [sweep] section")
        swp = sec
    if swp is None:
        raise ScenarioFormatError(f"{path}:1: missing [sweep] section")

    kind = swp.getstr("kind", required=True)
    if kind not in SWEEP_KINDS:
        swp.fail(f"kind must be one of {', '.join(SWEEP_KINDS)}, got {kind!r}",
                 swp.line_of("kind"))

    values = ()
    if kind == "rtt_sweep":
        raw = swp.getlist("values_s", required=True)
        key = "values_s"
    elif kind == "nflows_sweep":
        raw = swp.getlist("values", required=True)
        key = "values"
    elif kind == "background_sweep":
        raw = swp.getlist("values_mbps", required=True)
        key = "values_mbps"
    else:
        raw = None
        key = None
    if raw is not None:
        try:
            values = tuple(float(v) for v in raw)
        except ValueError:
            swp.fail(f"{key} must be a list of numbers", swp.line_of(key))
        if kind == "background_sweep":
            values = tuple(model.mbps_to_pkts_per_s(v) for v in values)

    estimators = tuple(swp.getlist("estimators", list(DEFAULT_ESTIMATORS)))
    spec = SweepSpec(
        kind=kind,
        values=values,
        estimators=estimators,
        name=swp.getstr("name", "sweep"),
        seed=swp.getint("seed", 1),
        capacity=swp.get_rate("capacity", 12500.0),
        alpha=swp.getfloat("alpha_pkts", 50.0),
        n_flows=swp.getint("n_flows", 8),
        round_trip_prop=swp.getfloat("round_trip_prop_s", 0.10),
        n_sources=swp.getint("n_sources", 5),
        link_delay=swp.getfloat("link_delay_s", 0.005),
        base_scenario=swp.getstr("scenario"),
        theta=swp.getfloat("theta", -0.5),
        t_eps=swp.get_auto_float("t_eps_s"),
        stable_tol=swp.getfloat("stable_tol"),
        arrival_time=swp.getfloat("arrival_s"),
        duration=swp.getfloat("duration_s"),
    )
    swp.finish()
    try:
        spec.validate()
    except model.ValidationError as exc:
        raise ScenarioFormatError(f"{path}:{swp.line}: {exc}") from exc
    return spec


def load_sweep(path):
    """Read and parse a sweep file, resolving a base scenario relative to it."""
    with open(path, "r") as fh:
        text = fh.read()
    spec = parse_sweep(text, str(path))
    if spec.base_scenario is not None and not os.path.isabs(spec.base_scenario):
        base = os.path.join(os.path.dirname(os.path.abspath(path)),
                            spec.base_scenario)
        spec = dataclasses.replace(spec, base_scenario=base)
    return spec

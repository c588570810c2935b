"""Closed-form equilibrium predictions and trace metrics.

A flow that joins a bottleneck already carrying n stabilized flows inflates
its propagation-delay estimate by the standing queue n*alpha/C.  At the
resulting equilibrium the newcomer holds backlog

    b0* = (alpha/2) * (1 + sqrt(1 + 4n))

while each older flow keeps alpha queued on top of that, so the newcomer
sends alpha*C/b0* and the others alpha*C/(b0* + n*alpha).  The newcomer is
faster by (1 + sqrt(1 + 4n))/2, which grows like sqrt(n).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

PREDICTION_REL_TOL = 1e-9

SUMMARY_COLUMNS = (
    "scenario",
    "n",
    "capacity_pkts_s",
    "alpha_pkts",
    "estimator",
    "fairness_ratio",
    "predicted_ratio",
    "rr_threshold_s",
    "total_backlog_pkts",
)


@dataclass(frozen=True)
class EquilibriumPrediction:
    """Steady state of one late flow competing with n established flows."""

    n: int
    capacity: float
    alpha: float
    new_flow_backlog: float   # newcomer's own standing queue, packets
    new_flow_rate: float      # newcomer's rate, pkt/s
    established_rate: float   # each established flow's rate, pkt/s
    ratio: float              # new_flow_rate / established_rate
    total_backlog: float      # everything queued at the bottleneck, packets

    def check(self) -> None:
        total = self.new_flow_rate + self.n * self.established_rate
        if abs(total - self.capacity) > PREDICTION_REL_TOL * self.capacity:
            raise AssertionError(
                f"rate conservation violated: {total} != {self.capacity}"
            )


def unfairness_ratio(n: int) -> float:
    """Newcomer rate over established rate; 1 for n = 0 by convention."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1.0
    return (1 + math.sqrt(1 + 4 * n)) / 2


def predict_equilibrium(n: int, capacity: float, alpha: float) -> EquilibriumPrediction:
    """Closed-form equilibrium after one biased arrival joins n flows.

    For n = 0 the lone flow takes the whole capacity and the ratio is 1.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not capacity > 0 or not alpha > 0:
        raise ValueError("capacity and alpha must be > 0")
    b0 = alpha / 2 * (1 + math.sqrt(1 + 4 * n))
    x0 = alpha * capacity / b0
    xf = alpha * capacity / (b0 + n * alpha) if n > 0 else x0
    pred = EquilibriumPrediction(
        n=n,
        capacity=capacity,
        alpha=alpha,
        new_flow_backlog=b0,
        new_flow_rate=x0,
        established_rate=xf,
        ratio=x0 / xf,
        total_backlog=b0 + n * alpha,
    )
    pred.check()
    return pred


def rr_threshold(n: int, capacity: float, alpha: float) -> float:
    """Smallest round-trip propagation delay for which a pause of one RTT
    can drain the whole standing queue the newcomer built."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return n * predict_equilibrium(n, capacity, alpha).new_flow_backlog / capacity


def rr_drain_feasible(n: int, capacity: float, alpha: float, d: float) -> bool:
    """True when the standing queue drains within one equilibrium RTT while
    the established flows keep sending at their old rates.

    Evaluates drain_time < rtt directly; algebraically this is exactly
    d > rr_threshold(n, capacity, alpha), strict at the boundary.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 0:
        raise ValueError("d must be >= 0")
    pred = predict_equilibrium(n, capacity, alpha)
    drain_rate = capacity - n * pred.established_rate
    drain_time = pred.total_backlog / drain_rate
    rtt_star = d + pred.total_backlog / capacity
    return drain_time < rtt_star


def rr_residual_bias(n: int, capacity: float, alpha: float, d: float) -> float:
    """Queueing delay still in the base-delay estimate after a one-RTT pause.

    While the pause lasts the established flows keep draining into the
    bottleneck at their old rates, so the queue shrinks at exactly the
    paused flow's old rate.  Whatever is left when transmission resumes,
    divided by capacity, stays in the minimum filter.  Zero when the pause
    outlasts the drain.
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    pred = predict_equilibrium(n, capacity, alpha)
    pause = d + pred.total_backlog / capacity
    residual = pred.total_backlog - pred.new_flow_rate * pause
    return max(0.0, residual) / capacity


def rr_residual_ratio(n: int, capacity: float, alpha: float, d: float) -> float:
    """Rate ratio left after a pause-based correction.

    A flow whose base-delay estimate is high by beta sees queueing delay
    q - beta and settles at rate alpha/(q - beta).  Solving

        alpha/(q - beta) + n*alpha/q = capacity

    for the common queueing delay q gives the biased flow's advantage
    q/(q - beta); 1.0 when the pause drains the queue completely.
    """
    beta = rr_residual_bias(n, capacity, alpha, d)
    if beta == 0.0:
        return 1.0
    b = capacity * beta + (n + 1) * alpha
    disc = b * b - 4 * capacity * n * alpha * beta
    q = (b + math.sqrt(disc)) / (2 * capacity)
    return q / (q - beta)


def predicted_ratio_for(estimator: str, n: int, capacity: float,
                        alpha: float, d: float) -> float:
    """Expected late-flow advantage for each base-delay estimation scheme."""
    if n < 1:
        return 1.0
    if estimator == "naive_min":
        return unfairness_ratio(n)
    if estimator == "rate_reduction":
        return rr_residual_ratio(n, capacity, alpha, d)
    if estimator == "delta_probe":
        return 1.0
    raise ValueError(f"unknown estimator {estimator!r}")


def fairness_ratio(trace, new_flow_id: str, window: tuple[float, float]) -> float:
    """n * mean rate of the tagged flow over the summed mean rates of the
    other flows, averaged over [t0, t1].  1.0 means a fair share."""
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("window must have positive length")
    others = [fid for fid in trace.flow_ids if fid != new_flow_id]
    if new_flow_id not in trace.flow_ids:
        raise ValueError(f"unknown flow {new_flow_id!r}")
    if not others:
        raise ValueError("fairness ratio needs at least one competing flow")
    for fid in others + [new_flow_id]:
        if trace.start_time(fid) > t0:
            raise ValueError(f"flow {fid} not active for the whole window")
    x_new = trace.mean_rate(new_flow_id, t0, t1)
    x_others = sum(trace.mean_rate(fid, t0, t1) for fid in others)
    if x_others <= 0:
        raise ValueError("competing flows carried no traffic in the window")
    return len(others) * x_new / x_others


def default_fairness_window(trace) -> tuple[float, float]:
    """Final 20% of the trace, clipped to start after the last estimator event."""
    t_end = float(trace.times[-1])
    t0 = float(trace.times[0]) + 0.8 * (t_end - float(trace.times[0]))
    last_event = max((ev[0] for ev in trace.events), default=0.0)
    t0 = max(t0, last_event)
    if not t_end > t0:
        raise ValueError("no samples left after the last estimator event")
    return (t0, t_end)


def summary_row(
    scenario_name: str,
    n: int,
    capacity: float,
    alpha: float,
    estimator: str,
    measured_ratio: float,
    total_backlog: float,
    predicted_ratio: float | None = None,
) -> dict:
    """One summary record comparing a run against the closed forms."""
    if predicted_ratio is None:
        predicted_ratio = unfairness_ratio(n)
    return {
        "scenario": scenario_name,
        "n": n,
        "capacity_pkts_s": capacity,
        "alpha_pkts": alpha,
        "estimator": estimator,
        "fairness_ratio": measured_ratio,
        "predicted_ratio": predicted_ratio,
        "rr_threshold_s": rr_threshold(n, capacity, alpha) if n >= 1 else 0.0,
        "total_backlog_pkts": total_backlog,
    }


def format_float(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def write_summary(path, rows, extra_columns=()) -> None:
    """Write summary rows as CSV with a fixed column order."""
    columns = list(SUMMARY_COLUMNS) + [c for c in extra_columns]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_float(row.get(c, "")) for c in columns])

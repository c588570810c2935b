"""Deterministic fluid-model integrator for delay-based congestion control.

Each flow keeps a window w and sends at x = w / rtt.  The window follows

    dw/dt = kappa * (1 - x * q_perceived / alpha)

where q_perceived = rtt - d_hat is the queueing delay the flow believes it
sees, and kappa = gamma * alpha / rtt ("fast" mode) or 1 / rtt ("vegas").
Queues are fluid FIFO buffers.  Feedback is ack-clocked: the RTT observed
at time t belongs to the packet whose ack just arrived, so it reflects the
queue state one full RTT earlier.  Each flow keeps an observation epoch e
solving e + d + q(e)/C = t; the left side is nondecreasing in e, so the
epoch only moves forward and the observed RTT is t - e.  Integration is
explicit Euler on a fixed grid, which keeps runs bit-reproducible for a
given seed and dt.

Multi-hop paths are handled by passing each stream's rate hop by hop in
topological order: a congested link forwards at most its capacity, split
across streams in proportion to their arrival rates.  This keeps the total
queue growth along a path equal to the traffic actually injected into it,
which the probe estimator's arithmetic relies on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .estimators import make_estimator
from .model import Scenario, ParetoSourceSpec

FLOAT_FMT = "%.9g"
FLOW_CSV_HEADER = "t,flow_id,rate_pkts_s,window_pkts,rtt_s,dhat_s"
QUEUE_CSV_HEADER = "t,link_id,backlog_pkts"
EVENT_CSV_HEADER = "t,flow_id,event,detail"

MIN_WINDOW = 1.0  # packets; avoids division blowups when a flow is paused


class SimulationError(RuntimeError):
    """The integrator hit a non-finite state and aborted."""


@dataclass
class FlowState:
    """Snapshot of one flow's runtime state."""

    w: float
    x: float
    d_hat: float
    active: bool
    rtt_current: float
    estimator_state: object


@dataclass
class QueueState:
    """Snapshot of one link's queue."""

    backlog: float
    drop_flag: bool


class DelayedSignalBuffer:
    """Per-link backlog history sampled once per step, with linear
    interpolation for lagged lookups.  Lookups before the first sample
    return 0 (the network starts empty)."""

    def __init__(self, dt: float, initial: float = 0.0):
        self.dt = dt
        self.samples: list[float] = [initial]

    def append(self, value: float) -> None:
        self.samples.append(value)

    def lookup(self, t: float) -> float:
        fi = t / self.dt
        if fi <= 0.0:
            return self.samples[0]
        i0 = int(fi)
        last = len(self.samples) - 1
        if i0 >= last:
            return self.samples[last]
        frac = fi - i0
        a = self.samples[i0]
        return a + frac * (self.samples[i0 + 1] - a)


def queue_step(backlog: float, inflow: float, capacity: float, dt: float,
               buffer_limit: float | None = None
               ) -> tuple[float, float, bool]:
    """Advance one fluid queue by dt.

    Outflow is the capacity when there is work to send, otherwise the
    inflow; equivalently backlog' = max(0, backlog + (inflow - capacity)*dt),
    clamped to buffer_limit with the drop flag set on overflow.
    Returns (new_backlog, outflow, dropped).
    """
    outflow = min(capacity, inflow + backlog / dt)
    new_backlog = backlog + (inflow - outflow) * dt
    if new_backlog < 0.0:
        new_backlog = 0.0
    dropped = False
    if buffer_limit is not None and new_backlog > buffer_limit:
        new_backlog = buffer_limit
        dropped = True
    return new_backlog, outflow, dropped


def pareto_background(spec: ParetoSourceSpec, seed: int, horizon: float):
    """Piecewise-constant on/off rate schedule, deterministic under seed.

    Burst and idle durations are Pareto with the given means; the source
    starts in a burst.  Returns a _RateSchedule callable as rate(t); t must
    be queried in non-decreasing order.
    """
    rng = np.random.default_rng(seed)
    scale_on = spec.mean_burst * (spec.shape - 1) / spec.shape
    scale_off = spec.mean_idle * (spec.shape - 1) / spec.shape
    times = [0.0]
    rates = []
    t = 0.0
    on = True
    while t <= horizon:
        scale = scale_on if on else scale_off
        dur = scale * (1.0 + rng.pareto(spec.shape))
        rates.append(spec.peak_rate if on else 0.0)
        t += dur
        times.append(t)
        on = not on
    return _RateSchedule(times, rates)


class _RateSchedule:
    def __init__(self, times, rates):
        self.times = times
        self.rates = rates
        self._i = 0

    def __call__(self, t: float) -> float:
        i = self._i
        times = self.times
        last = len(self.rates) - 1
        while i < last and t >= times[i + 1]:
            i += 1
        self._i = i
        return self.rates[i]

    def segments(self):
        """(start, end, rate) triples, for tests and plotting."""
        return [(self.times[i], self.times[i + 1], self.rates[i])
                for i in range(len(self.rates))]


@dataclass
class Trace:
    """Sampled time series plus the estimator/drop event log."""

    times: np.ndarray
    flow_ids: list
    link_ids: list
    rate: np.ndarray      # [flow, sample] pkt/s
    window: np.ndarray    # [flow, sample] packets
    rtt: np.ndarray       # [flow, sample] seconds
    d_hat: np.ndarray     # [flow, sample] seconds
    backlog: np.ndarray   # [link, sample] packets
    events: list          # (t, flow_id, kind, payload dict)
    meta: dict

    def _fi(self, flow_id: str) -> int:
        return self.flow_ids.index(flow_id)

    def start_time(self, flow_id: str) -> float:
        return self.meta["start_times"][flow_id]

    def _window_mask(self, t0: float, t1: float) -> np.ndarray:
        mask = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        if not mask.any():
            raise ValueError(f"no samples in window [{t0}, {t1}]")
        return mask

    def mean_rate(self, flow_id: str, t0: float, t1: float) -> float:
        mask = self._window_mask(t0, t1)
        return float(self.rate[self._fi(flow_id), mask].mean())

    def mean_total_backlog(self, t0: float, t1: float, link_ids=None) -> float:
        mask = self._window_mask(t0, t1)
        if link_ids is None:
            sel = self.backlog
        else:
            idx = [self.link_ids.index(l) for l in link_ids]
            sel = self.backlog[idx]
        return float(sel[:, mask].sum(axis=0).mean())

    def events_for(self, flow_id: str, kind: str | None = None) -> list:
        out = []
        for t, fid, k, payload in self.events:
            if fid == flow_id and (kind is None or k == kind):
                out.append((t, k, payload))
        return out

    def final_d_hat(self, flow_id: str) -> float:
        return float(self.d_hat[self._fi(flow_id), -1])

    def write_csv(self, out_dir) -> None:
        """Write flows.csv, queues.csv and events.csv under out_dir."""
        import os

        os.makedirs(out_dir, exist_ok=True)
        fmt = FLOAT_FMT
        with open(os.path.join(out_dir, "flows.csv"), "w", newline="") as fh:
            fh.write(FLOW_CSV_HEADER + "\n")
            for s, t in enumerate(self.times):
                ts = fmt % t
                for i, fid in enumerate(self.flow_ids):
                    fh.write("%s,%s,%s,%s,%s,%s\n" % (
                        ts, fid,
                        fmt % self.rate[i, s], fmt % self.window[i, s],
                        fmt % self.rtt[i, s], fmt % self.d_hat[i, s]))
        with open(os.path.join(out_dir, "queues.csv"), "w", newline="") as fh:
            fh.write(QUEUE_CSV_HEADER + "\n")
            for s, t in enumerate(self.times):
                ts = fmt % t
                for i, lid in enumerate(self.link_ids):
                    fh.write("%s,%s,%s\n" % (ts, lid, fmt % self.backlog[i, s]))
        with open(os.path.join(out_dir, "events.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EVENT_CSV_HEADER.split(","))
            for t, fid, kind, payload in self.events:
                detail = ";".join(
                    "%s=%s" % (k, (fmt % v) if isinstance(v, float) else v)
                    for k, v in payload.items())
                writer.writerow([fmt % t, fid, kind, detail])


class _FlowRt:
    __slots__ = ("fid", "links", "prop", "alpha", "gamma", "vegas",
                 "start_step", "active", "w", "est", "x", "rtt", "e_ptr",
                 "drop_seen")

    def __init__(self, fid, links, prop, alpha, gamma, vegas, start_step,
                 est):
        self.fid = fid
        self.links = links
        self.prop = prop
        self.alpha = alpha
        self.gamma = gamma
        self.vegas = vegas
        self.start_step = start_step
        self.active = False
        self.w = 0.0
        self.x = 0.0
        self.rtt = 0.0
        self.e_ptr = float(start_step)  # observation epoch, in steps
        self.drop_seen = False
        self.est = est


class FluidSimulation:
    """One scenario, integrable step by step.  Use run_scenario() unless a
    test needs to poke at intermediate state."""

    def __init__(self, scenario: Scenario, collect_balance: bool = False):
        scenario.validate()
        self.scenario = scenario
        topo = scenario.topology
        dt = scenario.dt
        self.dt = dt
        self.n_steps = int(round(scenario.duration / dt))
        self.step_index = 0
        self.collect_balance = collect_balance
        self.max_balance_residual = 0.0

        self.link_ids = [l.id for l in topo.links]
        lix = {lid: i for i, lid in enumerate(self.link_ids)}
        self.cap = [l.capacity for l in topo.links]
        self.buf = [l.buffer_limit for l in topo.links]
        self.backlog = [0.0 for _ in topo.links]
        self.hist = [DelayedSignalBuffer(dt) for _ in topo.links]
        self._dropped = [False for _ in topo.links]
        self._drop_prev = [False for _ in topo.links]

        self.flows = []
        paths = []
        for f in topo.flows:
            est = make_estimator(f.estimator, f.alpha)
            links = [lix[l] for l in f.path]
            paths.append(links)
            self.flows.append(_FlowRt(
                fid=f.id,
                links=links,
                prop=topo.round_trip_prop(f),
                alpha=f.alpha,
                gamma=f.gamma,
                vegas=(f.kappa == "vegas"),
                start_step=int(round(f.start_time / dt)),
                est=est,
            ))

        self.bg = None
        if scenario.background is not None and scenario.background.peak_rate > 0:
            self.bg = pareto_background(scenario.background, scenario.seed,
                                        scenario.duration + dt)
            paths.append([lix[l] for l in scenario.background.path])
        self._stream_paths = paths
        self._order = _topo_link_order(len(topo.links), paths)
        # per link: [(stream index, next link index or -1), ...]
        incid = [[] for _ in topo.links]
        for s, path in enumerate(paths):
            for p, l in enumerate(path):
                nxt = path[p + 1] if p + 1 < len(path) else -1
                incid[l].append((s, nxt))
        self._incidence = incid
        self._cur = [0.0] * len(paths)

        self._events = []  # sim-level (drop) events
        stride = max(1, int(round(scenario.output_interval / dt)))
        self._stride = stride
        n_samples = (self.n_steps + stride - 1) // stride
        self._samples = n_samples
        F, L = len(self.flows), len(topo.links)
        self._t_out = np.zeros(n_samples)
        self._rate_out = np.zeros((F, n_samples))
        self._win_out = np.zeros((F, n_samples))
        self._rtt_out = np.zeros((F, n_samples))
        self._dhat_out = np.zeros((F, n_samples))
        self._bl_out = np.zeros((L, n_samples))

    # -- inspection helpers -------------------------------------------------

    def flow_state(self, flow_id: str) -> FlowState:
        f = next(f for f in self.flows if f.fid == flow_id)
        return FlowState(w=f.w, x=f.x, d_hat=f.est.d_hat, active=f.active,
                         rtt_current=f.rtt, estimator_state=f.est.state)

    def queue_state(self, link_id: str) -> QueueState:
        i = self.link_ids.index(link_id)
        return QueueState(backlog=self.backlog[i], drop_flag=self._dropped[i])

    def flow_rtt(self, flow_id: str) -> float:
        """Current RTT the flow observes: propagation plus lagged queueing."""
        f = next(f for f in self.flows if f.fid == flow_id)
        rtt, _ = self._observe(f, self.step_index)
        return rtt

    def _path_qdelay(self, f: _FlowRt, e: float) -> float:
        """Path queueing delay at epoch e (in steps), linearly interpolated;
        clamped to the newest sample for epochs not yet recorded."""
        q = 0.0
        for l in f.links:
            samples = self.hist[l].samples
            if e <= 0.0:
                b = samples[0]
            else:
                i0 = int(e)
                last = len(samples) - 1
                if i0 >= last:
                    b = samples[last]
                else:
                    a = samples[i0]
                    b = a + (e - i0) * (samples[i0 + 1] - a)
            q += b / self.cap[l]
        return q

    def _observe(self, f: _FlowRt, k: int) -> tuple[float, float]:
        """Advance the flow's observation epoch to step k and return
        (observed rtt, epoch in seconds).

        The epoch e is where a packet must have been sent for its ack to
        arrive now: e + rtt(e) = t with rtt(e) = prop + q(e).  Before the
        first ack (t < start + rtt) the flow reports the RTT its oldest
        in-flight packet will measure.
        """
        dt = self.dt
        prop_steps = f.prop / dt
        e = f.e_ptr
        arrival = e + prop_steps + self._path_qdelay(f, e) / dt
        if arrival >= k:
            # newest ack not yet in; first in-flight packet's rtt
            return (arrival - e) * dt, e * dt
        while True:
            j = int(e) + 1
            arr_j = j + prop_steps + self._path_qdelay(f, float(j)) / dt
            if arr_j <= k:
                e = float(j)
                arrival = arr_j
                continue
            # crossing lies in [e, j): ack arrival time is linear there
            if arr_j > arrival:
                e = e + (k - arrival) * (j - e) / (arr_j - arrival)
            else:
                e = float(j) - 1e-9
            break
        f.e_ptr = e
        return (k - e) * dt, e * dt

    # -- integration --------------------------------------------------------

    def step(self) -> None:
        """Advance the whole system by one dt."""
        k = self.step_index
        t = k * self.dt
        dt = self.dt
        cur = self._cur

        if k % self._stride == 0:
            si = k // self._stride
            record = si < self._samples
        else:
            record = False
            si = -1
        if record:
            self._t_out[si] = t
            for i, b in enumerate(self.backlog):
                self._bl_out[i, si] = b

        for i, f in enumerate(self.flows):
            if not f.active:
                if k >= f.start_step:
                    f.active = True
                    f.w = f.alpha
                else:
                    cur[i] = 0.0
                    continue
            rtt, epoch = self._observe(f, k)
            w = f.w
            nominal = w / rtt
            mult = f.est.on_sample(t, rtt, nominal, f.drop_seen, epoch)
            if mult == 1.0:
                x = nominal
                q_perc = rtt - f.est.d_hat
                if q_perc < 0.0:
                    q_perc = 0.0
                if f.vegas:
                    kappa = 1.0 / rtt
                else:
                    kappa = f.gamma * f.alpha / rtt
                w += dt * kappa * (1.0 - q_perc * nominal / f.alpha)
                if w < MIN_WINDOW:
                    w = MIN_WINDOW
                f.w = w
            else:
                ref = f.est.reference_rate
                x = mult * (ref if ref is not None else nominal)
            if not math.isfinite(f.w) or not math.isfinite(x):
                raise SimulationError(
                    f"flow {f.fid}: non-finite state at t={t:.6g} "
                    f"(w={f.w!r}, x={x!r}); reduce dt or check the scenario")
            f.x = x
            f.rtt = rtt
            cur[i] = x
            if record:
                self._rate_out[i, si] = x
                self._win_out[i, si] = f.w
                self._rtt_out[i, si] = rtt
                self._dhat_out[i, si] = f.est.d_hat

        if self.bg is not None:
            cur[-1] = self.bg(t)

        # queue network: hand rates down each path in topological order,
        # throttling at congested links (same arithmetic as queue_step)
        cap = self.cap
        buf = self.buf
        backlog = self.backlog
        dropped = self._dropped
        for l in self._order:
            inc = self._incidence[l]
            a = 0.0
            for s, _ in inc:
                a += cur[s]
            b = backlog[l]
            avail = a + b / dt
            c = cap[l]
            out = c if avail > c else avail
            b_new = b + (a - out) * dt
            if b_new < 0.0:
                b_new = 0.0
            if self.collect_balance:
                resid = abs((b_new - b) - (a - out) * dt)
                if resid > self.max_balance_residual:
                    self.max_balance_residual = resid
            drop = False
            lim = buf[l]
            if lim is not None and b_new > lim:
                b_new = lim
                drop = True
            if drop and not dropped[l]:
                self._events.append(
                    (t, "", "drop", {"link": self.link_ids[l],
                                     "backlog": b_new}))
            dropped[l] = drop
            backlog[l] = b_new
            self.hist[l].append(b_new)
            if a > 0.0:
                share = out / a
                if share != 1.0:
                    for s, nxt in inc:
                        r = cur[s] * share
                        cur[s] = r
            # note: fluid drained while no stream is arriving (a == 0) is
            # not attributed downstream; it only occurs when every source
            # on the link is silent

        for f in self.flows:
            if f.active:
                seen = False
                for l in f.links:
                    if dropped[l]:
                        seen = True
                        break
                f.drop_seen = seen

        self.step_index = k + 1

    def run(self) -> Trace:
        while self.step_index < self.n_steps:
            self.step()
        return self._build_trace()

    def _build_trace(self) -> Trace:
        events = list(self._events)
        for f in self.flows:
            for t, kind, payload in f.est.events:
                events.append((t, f.fid, kind, payload))
        events.sort(key=lambda ev: ev[0])
        topo = self.scenario.topology
        meta = {
            "name": self.scenario.name,
            "duration": self.scenario.duration,
            "dt": self.dt,
            "seed": self.scenario.seed,
            "start_times": {f.id: f.start_time for f in topo.flows},
            "alphas": {f.id: f.alpha for f in topo.flows},
            "estimators": {f.id: f.estimator.kind for f in topo.flows},
            "capacities": {l.id: l.capacity for l in topo.links},
            "paths": {f.id: list(f.path) for f in topo.flows},
        }
        return Trace(
            times=self._t_out,
            flow_ids=[f.fid for f in self.flows],
            link_ids=list(self.link_ids),
            rate=self._rate_out,
            window=self._win_out,
            rtt=self._rtt_out,
            d_hat=self._dhat_out,
            backlog=self._bl_out,
            events=events,
            meta=meta,
        )


def _topo_link_order(n_links: int, paths) -> list:
    """Order links so that every path visits them in increasing position.
    Raises if the combined paths form a cycle."""
    succ = [set() for _ in range(n_links)]
    indeg = [0] * n_links
    for path in paths:
        for a, b in zip(path, path[1:]):
            if b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1
    ready = [i for i in range(n_links) if indeg[i] == 0]
    order = []
    while ready:
        ready.sort()
        l = ready.pop(0)
        order.append(l)
        for m in sorted(succ[l]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    if len(order) != n_links:
        raise ValueError("flow paths form a routing cycle")
    return order


def run_scenario(scenario: Scenario, collect_balance: bool = False) -> Trace:
    """Integrate a scenario to completion and return its trace."""
    return FluidSimulation(scenario, collect_balance=collect_balance).run()

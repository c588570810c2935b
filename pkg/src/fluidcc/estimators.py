"""Propagation-delay estimation strategies.

Delay-based congestion control needs the round-trip propagation delay to
separate queueing delay from the raw RTT.  The strategies here differ in how
they obtain it:

  naive_min       running minimum of all RTT samples.  A flow that joins a
                  bottleneck with a standing queue never sees the true value
                  and keeps a biased estimate forever.
  rate_reduction  after the flow's rate stabilizes, pause transmission for
                  one RTT so the queue can drain; the minimum filter then
                  catches the true delay if the drain completes in time.
  delta_probe     after stabilizing at rate x*, transmit at (1 - theta) * x*
                  for a short window t_eps and compare the RTT before and
                  after.  The rate of queue growth reveals how many flows
                  share the bottleneck, which gives the standing-queue bias
                  to subtract from the estimate.

The probe math: with competitors holding their rates, the RTT shift is
delta_r = theta * x* * t_eps / C, so z := theta * t_eps / delta_r equals
C / x*.  At the biased equilibrium z also equals b0*/alpha, which satisfies
z * (z - 1) = n.  The capacity estimate is then z * x* and the bias to
remove is alpha * n_hat / C_hat.

RTT samples arrive one feedback lag after the queue state they reflect, so
controllers take both the arrival time t and the sample's epoch (the time
the queue was actually in that state; senders know it as the send time of
the measured packet).  The probe reads its response from the first sample
whose epoch falls after the probe's end, which is exactly the queue state
the injected excess produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

MIN_DELTA_R = 1e-6       # s; smaller probe responses are unmeasurable
MIN_PLAUSIBLE_Z = 0.9    # z < 1 means the queue grew faster than we pushed it
EXHAUSTION_FRACTION = 0.01  # of the pre-probe queueing delay

# history resolution for the stability detector, seconds
_HIST_STRIDE = 0.005


class MeasurementFailure(RuntimeError):
    """A probe produced a response that cannot be trusted."""


# ---------------------------------------------------------------------------
# naive minimum filter

@dataclass
class NaiveMinState:
    d_hat: float = math.inf


def naive_update(state: NaiveMinState, rtt_sample: float) -> NaiveMinState:
    """Fold one RTT sample into the running minimum."""
    if rtt_sample < state.d_hat:
        state.d_hat = rtt_sample
    return state


# ---------------------------------------------------------------------------
# stability detection

def detect_stable(times, rates, window: float, tol: float = 0.005) -> bool:
    """True when the rate history spans at least `window` seconds and every
    sample in the trailing window deviates from the window mean by less than
    `tol` relative.  Insufficient history is simply "not stable yet"."""
    if len(times) < 2 or window <= 0:
        return False
    t_end = times[-1]
    if t_end - times[0] < window * (1 - 1e-9):
        return False
    lo = 0
    for i in range(len(times) - 1, -1, -1):
        if times[i] < t_end - window:
            lo = i + 1
            break
    tail = rates[lo:]
    if len(tail) < 2:
        return False
    mean = sum(tail) / len(tail)
    if mean <= 0:
        return False
    bound = tol * mean
    for x in tail:
        if abs(x - mean) > bound:
            return False
    return True


class _RateHistory:
    """Strided (t, rate) samples kept just long enough for detect_stable."""

    __slots__ = ("times", "rates", "_last_t")

    def __init__(self):
        self.times: list[float] = []
        self.rates: list[float] = []
        self._last_t = -math.inf

    def push(self, t: float, rate: float, keep: float) -> bool:
        """Record at most one sample per stride; returns True when recorded."""
        if t - self._last_t < _HIST_STRIDE * (1 - 1e-9):
            return False
        self.times.append(t)
        self.rates.append(rate)
        self._last_t = t
        if self.times[0] < t - keep:
            cut = 0
            while self.times[cut] < t - keep:
                cut += 1
            del self.times[:cut]
            del self.rates[:cut]
        return True

    def clear(self) -> None:
        self.times.clear()
        self.rates.clear()
        self._last_t = -math.inf


# ---------------------------------------------------------------------------
# rate reduction

@dataclass
class RateReductionState:
    phase: str = "warmup"            # warmup -> reduced -> done
    reduction_start: float = math.nan
    pause_duration: float | None = None  # None: one measured RTT at pause start
    d_hat: float = math.inf
    stable_window_rtts: float = 5.0
    stable_tol: float = 0.005
    events: list = field(default_factory=list)
    _hist: _RateHistory = field(default_factory=_RateHistory)
    _pause_len: float = math.nan


def rr_apply(state: RateReductionState, t: float, rtt_sample: float,
             rate_sample: float) -> tuple[RateReductionState, float]:
    """Advance the rate-reduction controller by one sample.

    Returns the state and the rate multiplier for this step: 1 during normal
    operation, 0 during the pause.  The minimum filter runs throughout,
    including the pause window, so a full drain leaves the true delay behind.
    """
    naive_update(state, rtt_sample)
    if state.phase == "warmup":
        window = state.stable_window_rtts * rtt_sample
        if state._hist.push(t, rate_sample, 2 * window):
            if detect_stable(state._hist.times, state._hist.rates, window,
                             state.stable_tol):
                state.phase = "reduced"
                state.reduction_start = t
                state._pause_len = (state.pause_duration
                                    if state.pause_duration is not None
                                    else rtt_sample)
                state.events.append((t, "rr_pause_start",
                                     {"pause_s": state._pause_len}))
                return state, 0.0
        return state, 1.0
    if state.phase == "reduced":
        if t - state.reduction_start >= state._pause_len * (1 - 1e-9):
            state.phase = "done"
            state.events.append((t, "rr_pause_end", {"d_hat": state.d_hat}))
            return state, 1.0
        return state, 0.0
    return state, 1.0


# ---------------------------------------------------------------------------
# delta probe: pure estimation operations

def probe_estimate_n(theta: float, t_eps: float, delta_r0: float) -> float:
    """Competing-flow count from the probe response delta_r0 = r* - r'.

    Requires a measurable response with the same sign as theta; returns
    max(0, z*(z-1)) with z = theta * t_eps / delta_r0.
    """
    if abs(delta_r0) < MIN_DELTA_R:
        raise MeasurementFailure(
            f"probe response {delta_r0:.3g} s below measurable threshold")
    if math.copysign(1.0, delta_r0) != math.copysign(1.0, theta):
        raise MeasurementFailure(
            f"probe response sign {delta_r0:.3g} inconsistent with theta={theta:g}")
    z = theta * t_eps / delta_r0
    return max(0.0, z * (z - 1.0))


def probe_estimate_capacity(n_hat: float, x_star: float) -> float:
    """Bottleneck capacity implied by the stabilized rate and flow count."""
    if n_hat < 0:
        raise ValueError("n_hat must be >= 0")
    if not x_star > 0:
        raise ValueError("x_star must be > 0")
    return (1 + math.sqrt(1 + 4 * n_hat)) * x_star / 2


def probe_correct_delay(d_hat_star: float, alpha: float, n_hat: float,
                        c_hat: float) -> float:
    """Remove the standing-queue bias alpha*n_hat/c_hat from the estimate."""
    corrected = d_hat_star - alpha * n_hat / c_hat
    if corrected <= 0:
        raise MeasurementFailure(
            f"corrected delay {corrected:.3g} s is not positive; "
            "estimates are inconsistent")
    return corrected


# ---------------------------------------------------------------------------
# delta probe: controller

@dataclass
class DeltaProbeState:
    # warmup -> stabilizing -> probing -> settling -> corrected | failed
    phase: str = "warmup"
    theta: float = -0.5
    t_eps: float = math.nan          # realized probe length once probing ends
    r_star: float = math.nan
    x_star: float = math.nan
    r_prime: float = math.nan
    retries: int = 0
    d_hat: float = math.inf
    n_hat: float = math.nan
    c_hat: float = math.nan
    # configuration
    alpha: float = 50.0
    t_eps_fixed: float | None = None
    stable_window_rtts: float = 5.0
    stable_tol: float = 0.005
    max_retries: int = 3
    events: list = field(default_factory=list)
    # internals
    _hist: _RateHistory = field(default_factory=_RateHistory)
    _probe_start: float = math.nan
    _settle_epoch: float = math.nan
    _t_eps_target: float = math.nan


def _probe_retry(state: DeltaProbeState, t: float, reason: str) -> None:
    state.retries += 1
    if state.retries > state.max_retries:
        state.phase = "failed"
        state.events.append((t, "failure",
                             {"reason": reason, "retries": state.retries - 1}))
        return
    state.theta = -abs(state.theta) / 2
    state._hist.clear()
    state.phase = "stabilizing"
    state.events.append((t, "retry", {"reason": reason, "theta": state.theta}))


def probe_controller(state: DeltaProbeState, t: float, rtt_sample: float,
                     rate_sample: float, drop_seen: bool = False,
                     epoch: float | None = None
                     ) -> tuple[DeltaProbeState, float]:
    """Advance the probe state machine by one RTT sample.

    `epoch` is the time of the queue state the sample reflects (samples lag
    by the feedback delay); it defaults to t for undelayed feeds.  Returns
    the state and the rate multiplier for this step; (1 - theta) while
    probing, 1 otherwise.  Until a correction is applied d_hat is the
    running minimum, afterwards it is frozen.  A buffer drop seen while
    probing, an unmeasurable or wrong-signed response, a response implying
    z < 1 (competitors moved), or a non-positive corrected delay all trigger
    a retry with theta halved (kept negative); after max_retries the
    controller gives up and keeps the minimum filter.
    """
    if epoch is None:
        epoch = t
    if state.phase != "corrected":
        if rtt_sample < state.d_hat:
            state.d_hat = rtt_sample

    if state.phase == "warmup":
        state.phase = "stabilizing"
        # fall through: this sample also feeds the history

    if state.phase == "stabilizing":
        window = state.stable_window_rtts * rtt_sample
        if state._hist.push(t, rate_sample, 2 * window):
            if detect_stable(state._hist.times, state._hist.rates, window,
                             state.stable_tol):
                state.r_star = rtt_sample
                state.x_star = rate_sample
                state._t_eps_target = (state.t_eps_fixed
                                       if state.t_eps_fixed is not None
                                       else state.r_star)
                state._probe_start = t
                state.phase = "probing"
                state.events.append((t, "probe_start",
                                     {"theta": state.theta,
                                      "t_eps": state._t_eps_target,
                                      "r_star": state.r_star,
                                      "x_star": state.x_star}))
                return state, 1.0 - state.theta
        return state, 1.0

    if state.phase == "probing":
        if epoch < state._probe_start:
            # this sample still reflects the queue before the probe reached
            # it; keep it as the freshest possible baseline so the response
            # is measured across exactly the probe window
            state.r_star = rtt_sample
        if drop_seen:
            _probe_retry(state, t, "buffer drop during probe")
            return state, 1.0
        if state.theta > 0:
            # a positive theta drains the queue; if it empties mid-probe the
            # response saturates and the flow count is overestimated
            q_seen = rtt_sample - state.d_hat
            q_ref = state.r_star - state.d_hat
            if q_seen < EXHAUSTION_FRACTION * max(q_ref, 1e-12):
                _probe_retry(state, t, "queue exhausted during probe")
                return state, 1.0
        if t - state._probe_start >= state._t_eps_target * (1 - 1e-9):
            state.t_eps = t - state._probe_start
            state._settle_epoch = t
            state.phase = "settling"
            state.events.append((t, "probe_end", {"t_eps": state.t_eps}))
            return state, 1.0
        return state, 1.0 - state.theta

    if state.phase == "settling":
        # wait for the first sample that reflects the queue at the probe's
        # end; earlier samples still show the pre-probe or mid-probe queue
        if epoch < state._probe_start:
            state.r_star = rtt_sample
        if epoch >= state._settle_epoch - 1e-12:
            state.r_prime = rtt_sample
            delta_r0 = state.r_star - state.r_prime
            try:
                n_hat = probe_estimate_n(state.theta, state.t_eps, delta_r0)
                z = state.theta * state.t_eps / delta_r0
                if z < MIN_PLAUSIBLE_Z:
                    raise MeasurementFailure(
                        f"z={z:.3g} < 1: queue grew faster than the probe pushed it")
                c_hat = probe_estimate_capacity(n_hat, state.x_star)
                d_prime = probe_correct_delay(state.d_hat, state.alpha,
                                              n_hat, c_hat)
            except MeasurementFailure as exc:
                _probe_retry(state, t, str(exc))
                return state, 1.0
            state.n_hat = n_hat
            state.c_hat = c_hat
            state.d_hat = d_prime
            state.phase = "corrected"
            state.events.append((t, "correction",
                                 {"theta": state.theta,
                                  "t_eps": state.t_eps,
                                  "delta_r0": delta_r0,
                                  "n_hat": n_hat,
                                  "c_hat": c_hat,
                                  "d_hat_prime": d_prime}))
        return state, 1.0

    return state, 1.0


# ---------------------------------------------------------------------------
# per-flow adapters used by the simulator

class Estimator:
    """Uniform wrapper: one instance per flow, advanced once per step."""

    kind = "naive_min"

    def __init__(self):
        self.state = NaiveMinState()
        self.events: list = []

    @property
    def d_hat(self) -> float:
        return self.state.d_hat

    @property
    def reference_rate(self):
        """Stabilized rate to scale while the multiplier is not 1, if any."""
        return None

    def on_sample(self, t: float, rtt: float, rate: float,
                  drop_seen: bool = False, epoch: float | None = None
                  ) -> float:
        naive_update(self.state, rtt)
        return 1.0


class RateReductionEstimator(Estimator):
    kind = "rate_reduction"

    def __init__(self, pause_duration=None, stable_window_rtts=5.0,
                 stable_tol=0.005):
        self.state = RateReductionState(
            pause_duration=pause_duration,
            stable_window_rtts=stable_window_rtts,
            stable_tol=stable_tol,
        )
        self.events = self.state.events

    def on_sample(self, t, rtt, rate, drop_seen=False, epoch=None):
        _, mult = rr_apply(self.state, t, rtt, rate)
        return mult


class DeltaProbeEstimator(Estimator):
    kind = "delta_probe"

    def __init__(self, alpha, theta=-0.5, t_eps=None,
                 stable_window_rtts=5.0, stable_tol=0.005, max_retries=3):
        self.state = DeltaProbeState(
            theta=theta,
            alpha=alpha,
            t_eps_fixed=t_eps,
            stable_window_rtts=stable_window_rtts,
            stable_tol=stable_tol,
            max_retries=max_retries,
        )
        self.events = self.state.events

    @property
    def reference_rate(self):
        if self.state.phase == "probing":
            return self.state.x_star
        return None

    def on_sample(self, t, rtt, rate, drop_seen=False, epoch=None):
        _, mult = probe_controller(self.state, t, rtt, rate, drop_seen,
                                   epoch)
        return mult


def make_estimator(spec, alpha: float) -> Estimator:
    """Build the per-flow estimator instance described by an EstimatorSpec."""
    if spec.kind == "naive_min":
        return Estimator()
    if spec.kind == "rate_reduction":
        return RateReductionEstimator(
            pause_duration=spec.pause_duration,
            stable_window_rtts=spec.stable_window_rtts,
            stable_tol=spec.stable_tol,
        )
    if spec.kind == "delta_probe":
        return DeltaProbeEstimator(
            alpha=alpha,
            theta=spec.theta,
            t_eps=spec.t_eps,
            stable_window_rtts=spec.stable_window_rtts,
            stable_tol=spec.stable_tol,
            max_retries=spec.max_retries,
        )
    raise ValueError(f"unknown estimator kind {spec.kind!r}")

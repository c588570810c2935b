"""Closed-form equilibrium predictions and summary bookkeeping.

The reference row used throughout: n=8 established flows, capacity 12500
pkt/s, alpha 50 pkt.  Expected values below are frozen from the closed forms
evaluated at full precision; the coarser reference digits quoted in docs are
checked at 1e-4 relative.
"""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidcc import analysis

# frozen full-precision oracle, n=8, C=12500, alpha=50
B0_REF = 168.61406616345073
X0_REF = 3706.6895676078348
XF_REF = 1099.1638040490207
RATIO_REF = 3.3722813232690143
TOTAL_BACKLOG_REF = 568.6140661634507
THRESHOLD_REF = 0.10791300234460846


def test_reference_row_full_precision():
    pred = analysis.predict_equilibrium(8, 12500.0, 50.0)
    assert pred.new_flow_backlog == pytest.approx(B0_REF, rel=1e-12)
    assert pred.new_flow_rate == pytest.approx(X0_REF, rel=1e-12)
    assert pred.established_rate == pytest.approx(XF_REF, rel=1e-12)
    assert pred.ratio == pytest.approx(RATIO_REF, rel=1e-12)
    assert pred.total_backlog == pytest.approx(TOTAL_BACKLOG_REF, rel=1e-12)
    assert analysis.unfairness_ratio(8) == pytest.approx(RATIO_REF, rel=1e-12)
    assert analysis.rr_threshold(8, 12500.0, 50.0) == pytest.approx(
        THRESHOLD_REF, rel=1e-12)


def test_reference_row_quoted_digits():
    # the coarser reference digits for the same row
    pred = analysis.predict_equilibrium(8, 12500.0, 50.0)
    assert pred.new_flow_backlog == pytest.approx(168.6226, rel=1e-4)
    assert pred.new_flow_rate == pytest.approx(3706.51, rel=1e-4)
    assert pred.established_rate == pytest.approx(1099.19, rel=1e-4)
    assert pred.ratio == pytest.approx(3.37228, rel=1e-4)
    thr = analysis.rr_threshold(8, 12500.0, 50.0)
    assert thr == pytest.approx(0.10792, rel=1e-4)
    # and the headline number: 108 ms to three significant figures
    assert round(thr, 3) == 0.108


def test_equilibrium_conserves_capacity():
    for n in (1, 2, 4, 8, 16, 100):
        pred = analysis.predict_equilibrium(n, 12500.0, 50.0)
        total = pred.new_flow_rate + n * pred.established_rate
        assert total == pytest.approx(12500.0, rel=1e-12)


def test_single_peer_gives_golden_ratio():
    golden = (1 + math.sqrt(5)) / 2
    assert analysis.unfairness_ratio(1) == pytest.approx(golden, rel=1e-12)
    pred = analysis.predict_equilibrium(1, 12500.0, 50.0)
    assert pred.new_flow_backlog == pytest.approx(50.0 * golden, rel=1e-12)


def test_no_peers_means_fair_by_convention():
    assert analysis.unfairness_ratio(0) == 1.0


def test_ratio_scales_like_sqrt_n():
    n = 10 ** 8
    assert analysis.unfairness_ratio(n) / math.sqrt(n) == pytest.approx(
        1.0, rel=1e-3)


def test_threshold_scaling():
    # threshold ~ n^(3/2): quadrupling n multiplies it by 8 asymptotically
    n = 10 ** 6
    r = (analysis.rr_threshold(4 * n, 12500.0, 50.0)
         / analysis.rr_threshold(n, 12500.0, 50.0))
    assert r == pytest.approx(8.0, rel=1e-3)


def test_drain_feasible_boundary_is_strict():
    thr = analysis.rr_threshold(8, 12500.0, 50.0)
    assert not analysis.rr_drain_feasible(8, 12500.0, 50.0, thr)
    assert analysis.rr_drain_feasible(8, 12500.0, 50.0, thr * 1.001)
    assert not analysis.rr_drain_feasible(8, 12500.0, 50.0, thr * 0.999)


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=1000),
    capacity=st.floats(min_value=100.0, max_value=1e6),
    alpha=st.floats(min_value=1.0, max_value=500.0),
    d=st.floats(min_value=1e-4, max_value=10.0),
)
def test_drain_feasible_iff_above_threshold(n, capacity, alpha, d):
    thr = analysis.rr_threshold(n, capacity, alpha)
    if abs(d - thr) < 1e-9 * max(thr, 1.0):
        return  # knife edge: float noise decides, both answers defensible
    assert analysis.rr_drain_feasible(n, capacity, alpha, d) == (d > thr)


def test_residual_bias_above_threshold_is_zero():
    thr = analysis.rr_threshold(8, 12500.0, 50.0)
    assert analysis.rr_residual_bias(8, 12500.0, 50.0, thr * 1.01) == 0.0
    assert analysis.rr_residual_ratio(8, 12500.0, 50.0, 0.15) == 1.0


def test_residual_bias_below_threshold():
    # d well below the threshold: pause cannot drain everything
    beta = analysis.rr_residual_bias(8, 12500.0, 50.0, 0.06)
    assert 0.0 < beta < 8 * 50.0 / 12500.0  # less than the full bias
    ratio = analysis.rr_residual_ratio(8, 12500.0, 50.0, 0.06)
    assert 1.0 < ratio < analysis.unfairness_ratio(8)
    # shorter competing-flow delay leaves more residual queue
    assert (analysis.rr_residual_ratio(8, 12500.0, 50.0, 0.02)
            > analysis.rr_residual_ratio(8, 12500.0, 50.0, 0.06))


def test_predicted_ratio_for_dispatch():
    args = (8, 12500.0, 50.0, 0.06)
    assert analysis.predicted_ratio_for("naive_min", *args) == pytest.approx(
        RATIO_REF, rel=1e-12)
    assert analysis.predicted_ratio_for("delta_probe", *args) == 1.0
    rr = analysis.predicted_ratio_for("rate_reduction", *args)
    assert rr == pytest.approx(
        analysis.rr_residual_ratio(8, 12500.0, 50.0, 0.06), rel=1e-12)
    assert analysis.predicted_ratio_for("naive_min", 0, 12500.0, 50.0,
                                        0.06) == 1.0
    with pytest.raises(ValueError):
        analysis.predicted_ratio_for("bogus", *args)


class _FakeTrace:
    """Minimal stand-in exposing the rate bookkeeping fairness_ratio uses."""

    def __init__(self, rates, starts):
        self._rates = rates
        self._starts = starts
        self.flow_ids = list(rates)

    def start_time(self, fid):
        return self._starts[fid]

    def mean_rate(self, fid, t0, t1):
        return self._rates[fid]


def test_fairness_ratio_on_known_rates():
    trace = _FakeTrace({"a": 100.0, "b": 100.0, "late": 300.0},
                       {"a": 0.0, "b": 0.0, "late": 10.0})
    assert analysis.fairness_ratio(trace, "late", (20.0, 30.0)) == 3.0
    with pytest.raises(ValueError):
        analysis.fairness_ratio(trace, "late", (5.0, 30.0))  # starts inside
    with pytest.raises(ValueError):
        analysis.fairness_ratio(trace, "missing", (20.0, 30.0))
    with pytest.raises(ValueError):
        analysis.fairness_ratio(trace, "late", (30.0, 20.0))
    solo = _FakeTrace({"late": 300.0}, {"late": 0.0})
    with pytest.raises(ValueError):
        analysis.fairness_ratio(solo, "late", (20.0, 30.0))


def test_summary_row_and_csv_roundtrip(tmp_path):
    row = analysis.summary_row("demo", 8, 12500.0, 50.0, "naive_min",
                               3.37, 568.6)
    assert tuple(row) == analysis.SUMMARY_COLUMNS
    assert row["predicted_ratio"] == pytest.approx(RATIO_REF, rel=1e-12)
    assert row["rr_threshold_s"] == pytest.approx(THRESHOLD_REF, rel=1e-12)
    out = tmp_path / "summary.csv"
    analysis.write_summary(out, [row])
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(analysis.SUMMARY_COLUMNS)
    assert lines[1].startswith("demo,8,12500,50,naive_min,3.37,")
    # floats are compact: 9 significant digits, no padding
    assert "3.37228132" in lines[1]


def test_write_summary_extra_columns(tmp_path):
    row = analysis.summary_row("demo", 2, 12500.0, 50.0, "delta_probe",
                               1.0, 150.0)
    row["value"] = 0.02
    row["status"] = "ok"
    out = tmp_path / "summary.csv"
    analysis.write_summary(out, [row], extra_columns=("value", "status"))
    header = out.read_text().splitlines()[0]
    assert header.endswith(",value,status")

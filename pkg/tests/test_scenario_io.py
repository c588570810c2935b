"""Scenario and sweep file parsing, including the diagnostics."""

import textwrap

import pytest

from fluidcc import experiments
from fluidcc.scenario_io import (
    ScenarioFormatError,
    load_scenario,
    parse_scenario,
)

DUMBBELL = textwrap.dedent("""\
    # demo scenario
    [scenario]
    name = demo
    duration_s = 60
    dt_s = 0.0005
    seed = 9
    output_interval_s = 0.02

    [topology]
    kind = single_bottleneck
    n_flows = 3
    capacity_mbps = 100       # bottleneck
    access_delay_s = 0.0025
    bottleneck_delay_s = 0.0025
    alpha_pkts = 50
    start_gap_s = 10

    [flow f2]
    start_s = 40
    estimator = delta_probe
    theta = -0.25
    t_eps_s = 0.2
    """)


def test_parse_single_bottleneck_scenario():
    scn = parse_scenario(DUMBBELL, "demo.ini")
    assert scn.name == "demo"
    assert scn.duration == 60.0
    assert scn.dt == 0.0005
    assert scn.seed == 9
    assert scn.output_interval == 0.02
    topo = scn.topology
    assert [f.id for f in topo.flows] == ["f0", "f1", "f2"]
    assert topo.link_map()["bottleneck"].capacity == 12500.0
    f2 = topo.flow_map()["f2"]
    assert f2.start_time == 40.0
    assert f2.estimator.kind == "delta_probe"
    assert f2.estimator.theta == -0.25
    assert f2.estimator.t_eps == 0.2
    # untouched flows keep the default estimator
    assert topo.flow_map()["f0"].estimator.kind == "naive_min"
    assert topo.flow_map()["f1"].start_time == 10.0


def test_parse_parking_lot_with_background():
    text = textwrap.dedent("""\
        [scenario]
        name = lot
        duration_s = 30
        dt_s = 0.0004

        [topology]
        kind = parking_lot
        n_sources = 5
        capacity_mbps = 100
        link_delay_s = 0.005

        [background]
        path = hop1, hop2, hop3, hop4, hop5
        shape = 1.25
        mean_burst_s = 0.1
        mean_idle_s = 0.1
        peak_rate_mbps = 20
        """)
    scn = parse_scenario(text, "lot.ini")
    assert [l.id for l in scn.topology.links] == [
        f"hop{k}" for k in range(1, 6)]
    bg = scn.background
    assert bg.path == ("hop1", "hop2", "hop3", "hop4", "hop5")
    assert bg.shape == 1.25
    assert bg.peak_rate == 2500.0


def test_parse_explicit_links_and_flows():
    text = textwrap.dedent("""\
        [scenario]
        name = explicit
        duration_s = 20
        dt_s = 0.0004

        [link wan]
        capacity_pkts_per_s = 12500
        delay_s = 0.002

        [link lan]
        capacity_mbps = 1000
        delay_s = 0.0005

        [flow a]
        path = lan, wan
        alpha_pkts = 30

        [flow b]
        path = wan
        start_s = 5
        """)
    scn = parse_scenario(text, "x.ini")
    assert scn.topology.link_map()["lan"].capacity == 125000.0
    assert scn.topology.flow_map()["a"].alpha == 30.0
    assert scn.topology.flow_map()["b"].path == ("wan",)


def test_t_eps_auto_means_measured_rtt():
    text = DUMBBELL.replace("t_eps_s = 0.2", "t_eps_s = auto")
    scn = parse_scenario(text, "demo.ini")
    assert scn.topology.flow_map()["f2"].estimator.t_eps is None


@pytest.mark.parametrize("mangle,loc,fragment", [
    (lambda s: "stray = 1\n" + s, "bad.ini:1", "outside of any"),
    (lambda s: s.replace("duration_s = 60\n", ""), "bad.ini",
     "missing required key 'duration_s'"),
    (lambda s: s.replace("duration_s = 60", "duration_s = sixty"),
     "bad.ini:4", "must be a number"),
    (lambda s: s + "\nwild = 3\n", "bad.ini:24", "unknown key 'wild'"),
    (lambda s: s + "\n[who]\nx = 1\n", "bad.ini:24", "unknown section"),
    (lambda s: s + "\n[flow f2]\nstart_s = 41\n", "bad.ini:24",
     "duplicate [flow f2]"),
    (lambda s: s.replace("estimator = delta_probe",
                         "estimator = psychic"), "bad.ini:20", "estimator"),
    (lambda s: s.replace("dt_s = 0.0005", "dt_s = 0.005"), "bad.ini",
     "dt"),
    (lambda s: s.replace("kind = single_bottleneck", "kind = mystery"),
     "bad.ini:10", "kind must be one of"),
    (lambda s: s.replace("capacity_mbps = 100       # bottleneck",
                         "capacity_mbps = 100\ncapacity_pkts_per_s = 12500"),
     "bad.ini", "capacity"),
])
def test_parse_errors_carry_file_and_line(mangle, loc, fragment):
    with pytest.raises(ScenarioFormatError) as err:
        parse_scenario(mangle(DUMBBELL), "bad.ini")
    msg = str(err.value)
    assert msg.startswith(loc), msg
    assert fragment in msg, msg


def test_load_scenario_from_disk(tmp_path):
    path = tmp_path / "demo.ini"
    path.write_text(DUMBBELL)
    scn = load_scenario(path)
    assert scn.name == "demo"


SWEEP = textwrap.dedent("""\
    [sweep]
    name = demo_sweep
    kind = rtt_sweep
    values_s = 0.02, 0.06, 0.15
    estimators = naive_min, delta_probe
    n_flows = 8
    capacity_mbps = 100
    alpha_pkts = 50
    seed = 4
    """)


def test_parse_sweep_rtt():
    spec = experiments.parse_sweep(SWEEP, "s.ini")
    assert spec.kind == "rtt_sweep"
    assert spec.values == (0.02, 0.06, 0.15)
    assert spec.estimators == ("naive_min", "delta_probe")
    assert spec.capacity == 12500.0
    assert spec.seed == 4
    assert spec.points() == [
        (0.02, "delta_probe"), (0.02, "naive_min"),
        (0.06, "delta_probe"), (0.06, "naive_min"),
        (0.15, "delta_probe"), (0.15, "naive_min")]


def test_parse_sweep_background_converts_mbps():
    text = textwrap.dedent("""\
        [sweep]
        kind = background_sweep
        values_mbps = 5, 20, 50
        seed = 35
        arrival_s = 38
        duration_s = 120
        t_eps_s = 0.012
        stable_tol = 0.02
        """)
    spec = experiments.parse_sweep(text, "s.ini")
    assert spec.values == (625.0, 2500.0, 6250.0)
    assert spec.estimators == experiments.DEFAULT_ESTIMATORS
    assert spec.arrival_time == 38.0
    assert spec.t_eps == 0.012
    assert spec.stable_tol == 0.02


@pytest.mark.parametrize("mangle,fragment", [
    (lambda s: s.replace("kind = rtt_sweep", "kind = sideways"),
     "kind must be one of"),
    (lambda s: s.replace("values_s = 0.02, 0.06, 0.15",
                         "values_s = 0.15, 0.02"), "increasing"),
    (lambda s: s.replace("estimators = naive_min, delta_probe",
                         "estimators = naive_min, psychic"), "estimator"),
    (lambda s: s.replace("[sweep]", "[sweeps]"), "unknown section"),
    (lambda s: s + "scenario = base.ini\n", "single_run"),
])
def test_sweep_parse_errors(mangle, fragment):
    with pytest.raises(ScenarioFormatError) as err:
        experiments.parse_sweep(mangle(SWEEP), "s.ini")
    assert fragment in str(err.value), str(err.value)


def test_sweep_single_run_needs_scenario():
    with pytest.raises(ScenarioFormatError) as err:
        experiments.parse_sweep("[sweep]\nkind = single_run\n", "s.ini")
    assert "base scenario" in str(err.value)


def test_load_sweep_resolves_base_relative_to_file(tmp_path):
    (tmp_path / "base.ini").write_text(DUMBBELL)
    (tmp_path / "s.ini").write_text(
        "[sweep]\nkind = single_run\nscenario = base.ini\n")
    spec = experiments.load_sweep(tmp_path / "s.ini")
    assert spec.kind == "single_run"
    assert spec.base_scenario == str(tmp_path / "base.ini")

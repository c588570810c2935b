"""Command-line behavior: outputs, exit codes, determinism, figures."""

import textwrap

import pytest

from fluidcc import cli
from fluidcc.fluidsim import SimulationError

TINY = textwrap.dedent("""\
    [scenario]
    name = tiny
    duration_s = 25
    dt_s = 0.001
    seed = 7
    output_interval_s = 0.05

    [topology]
    kind = single_bottleneck
    n_flows = 2
    capacity_mbps = 100
    access_delay_s = 0.0025
    bottleneck_delay_s = 0.0025
    alpha_pkts = 50

    [flow f1]
    start_s = 8
    """)

NOISY = textwrap.dedent("""\
    [scenario]
    name = noisy
    duration_s = 20
    dt_s = 0.001
    seed = 5
    output_interval_s = 0.05

    [topology]
    kind = parking_lot
    n_sources = 2
    capacity_mbps = 100
    link_delay_s = 0.005

    [background]
    path = hop1, hop2
    shape = 1.25
    mean_burst_s = 0.1
    mean_idle_s = 0.1
    peak_rate_mbps = 20
    """)


@pytest.fixture
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def _read(path):
    return path.read_bytes()


def test_run_writes_all_outputs(tiny_ini, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", str(tiny_ini), "--out", str(out)]) == 0
    for name in ("flows.csv", "queues.csv", "events.csv", "summary.csv"):
        assert (out / name).exists(), name
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0].startswith("scenario,n,capacity_pkts_s")
    row = lines[1].split(",")
    assert row[0] == "tiny" and row[1] == "1" and row[4] == "naive_min"
    # the late arrival settles at the golden ratio against one peer
    assert float(row[5]) == pytest.approx(1.618, abs=0.01)
    stdout = capsys.readouterr().out
    assert "fairness_ratio=1.618" in stdout


def test_run_quiet_silences_stdout(tiny_ini, tmp_path, capsys):
    assert cli.main(["run", str(tiny_ini), "--out", str(tmp_path / "o"),
                     "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_rerun_is_byte_identical(tiny_ini, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cli.main(["run", str(tiny_ini), "--out", str(out1), "--quiet"])
    cli.main(["run", str(tiny_ini), "--out", str(out2), "--quiet"])
    for name in ("flows.csv", "queues.csv", "events.csv", "summary.csv"):
        assert _read(out1 / name) == _read(out2 / name), name


def test_seed_override_changes_background_noise(tmp_path):
    ini = tmp_path / "noisy.ini"
    ini.write_text(NOISY)
    base, reseeded = tmp_path / "base", tmp_path / "reseeded"
    assert cli.main(["run", str(ini), "--out", str(base), "--quiet"]) == 0
    assert cli.main(["run", str(ini), "--out", str(reseeded), "--quiet",
                     "--seed", "99"]) == 0
    assert _read(base / "queues.csv") != _read(reseeded / "queues.csv")


def test_dt_override(tiny_ini, tmp_path, capsys):
    fine = tmp_path / "fine"
    assert cli.main(["run", str(tiny_ini), "--out", str(fine), "--quiet",
                     "--dt", "0.0005"]) == 0
    # a coarser step than a tenth of the propagation delay is rejected
    assert cli.main(["run", str(tiny_ini), "--out", str(tmp_path / "bad"),
                     "--dt", "0.005"]) == 1
    assert "dt" in capsys.readouterr().err


def test_parse_error_exits_1_with_location(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nname = x\nduration_s = ten\n")
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "bad.ini:3" in err and "duration_s" in err


def test_missing_file_exits_1(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "ghost.ini"),
                     "--out", str(tmp_path / "o")]) == 1
    assert "ghost.ini" in capsys.readouterr().err


def test_simulation_abort_exits_2(tiny_ini, tmp_path, monkeypatch, capsys):
    def boom(scenario):
        raise SimulationError("window went non-finite")

    monkeypatch.setattr(cli, "run_scenario", boom)
    assert cli.main(["run", str(tiny_ini), "--out", str(tmp_path / "o")]) == 2
    assert "aborted" in capsys.readouterr().err


def test_sweep_single_run_and_plot(tiny_ini, tmp_path, capsys):
    sweep = tmp_path / "sweep.ini"
    sweep.write_text(textwrap.dedent("""\
        [sweep]
        name = tiny_sweep
        kind = single_run
        scenario = tiny.ini
        estimators = naive_min, delta_probe
        """))
    out = tmp_path / "sw"
    assert cli.main(["sweep", str(sweep), "--out", str(out), "--plot"]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0].endswith(",value,status")
    assert len(lines) == 3
    # rows ordered by (value, estimator); both points succeeded
    assert lines[1].split(",")[4] == "delta_probe"
    assert lines[2].split(",")[4] == "naive_min"
    assert all(line.endswith(",ok") for line in lines[1:])
    assert (out / "fairness.png").exists()
    stdout = capsys.readouterr().out
    assert "2 points" in stdout


def test_sweep_rejects_dt_override(tiny_ini, tmp_path, capsys):
    sweep = tmp_path / "sweep.ini"
    sweep.write_text("[sweep]\nkind = single_run\nscenario = tiny.ini\n")
    assert cli.main(["sweep", str(sweep), "--out", str(tmp_path / "o"),
                     "--dt", "0.0005"]) == 1


def test_plot_subcommand(tiny_ini, tmp_path):
    out = tmp_path / "out"
    cli.main(["run", str(tiny_ini), "--out", str(out), "--quiet"])
    assert cli.main(["plot", str(out), "--quiet"]) == 0
    assert (out / "rates.png").exists()
    assert (out / "backlog.png").exists()
    figs = tmp_path / "figs"
    assert cli.main(["plot", str(out), "--out", str(figs), "--quiet"]) == 0
    assert (figs / "rates.png").exists()


def test_plot_empty_dir_exits_1(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["plot", str(empty)]) == 1
    assert "no plottable" in capsys.readouterr().err

import csv
import json

import numpy as np
import pytest

from hawkscan import ConfigurationError, HawkesModel, OrderingError, simulate
from hawkscan import io
from hawkscan.cli import main
from hawkscan.experiments import ExperimentSpec, run_experiment
from hawkscan.fixtures import fig1


def write(path, text):
    path.write_text(text)
    return path


def test_event_round_trip(tmp_path):
    s = simulate(HawkesModel.poisson(3), 30.0, 1)
    io.write_events(s, tmp_path / "e.csv")
    back = io.read_events(tmp_path / "e.csv", 3, 30.0)
    assert np.array_equal(back.times, s.times) and np.array_equal(back.nodes, s.nodes)


@pytest.mark.parametrize(
    "body, exc, line",
    [
        ("t,n\n1.0,0\n", ConfigurationError, ":1:"),
        ("time,node\n1.0,0\n0.5,1\n", OrderingError, ":3:"),
        ("time,node\n1.0,zero\n", ConfigurationError, ":2:"),
        ("time,node\n1.0,0,7\n", ConfigurationError, ":2:"),
        ("time,node\n1.0,0\n2.0,5\n", ConfigurationError, ":3:"),
        ("time,node\n-1.0,0\n", ConfigurationError, ":2:"),
    ],
)
def test_event_errors_name_the_line(tmp_path, body, exc, line):
    with pytest.raises(exc, match=line):
        io.read_events(write(tmp_path / "bad.csv", body), n_nodes=3)


def test_bad_json_reports_line(tmp_path):
    with pytest.raises(ConfigurationError, match=":2:"):
        io.read_json(write(tmp_path / "x.json", '{\n "a": ,\n}'))


def test_model_cluster_fisher_round_trip(tmp_path):
    model0, clusters = fig1()
    io.save_model(model0, tmp_path / "m.json")
    io.save_clusters(clusters, tmp_path / "c.json")
    assert io.load_model(tmp_path / "m.json").n_nodes == 12
    assert io.load_clusters(tmp_path / "c.json").names == clusters.names


def test_cli_fixture_simulate_detect(tmp_path, capsys):
    net = tmp_path / "net"
    assert main(["fixture", "fig1", "--out", str(net)]) == 0
    ev = tmp_path / "ev.csv"
    assert main(["simulate", "--model", str(net / "model.json"), "--horizon", "1200", "--case", "ii",
                 "--tau-star", "300", "--seed", "2", "--out", str(ev)]) == 0
    out = tmp_path / "det"
    assert main(["detect", "--events", str(ev), "--model", str(net / "model.json"),
                 "--clusters", str(net / "clusters.json"), "--b", "3.4", "--stop-on-alarm",
                 "--horizon", "1200", "--out", str(out)]) == 0
    summary = json.loads((out / "alarms.json").read_text())
    assert summary["first_alarm"] > 300
    assert "C1" in summary["alarms"][-1]["flagged"]
    assert 0 < summary["alarms"][-1]["fdr_estimate"] < 1
    with open(out / "trajectory.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "gamma_1", "gamma_2", "gamma_3", "gamma_4", "max_abs"]


def test_cli_detect_short_stream(tmp_path, capsys):
    net = tmp_path / "net"
    main(["fixture", "fig1", "--out", str(net)])
    ev = write(tmp_path / "ev.csv", "time,node\n1.0,0\n5.0,3\n")
    code = main(["detect", "--events", str(ev), "--model", str(net / "model.json"),
                 "--clusters", str(net / "clusters.json"), "--b", "3", "--out", str(tmp_path / "d")])
    assert code == 0
    assert "insufficient data" in capsys.readouterr().out
    assert json.loads((tmp_path / "d" / "alarms.json").read_text())["n_updates"] == 0


def test_cli_calibrate(tmp_path):
    net = tmp_path / "net"
    main(["fixture", "fig1", "--out", str(net)])
    rep = tmp_path / "cal.json"
    assert main(["calibrate", "--model", str(net / "model.json"), "--clusters", str(net / "clusters.json"),
                 "--alpha", "0.01", "--out", str(rep)]) == 0
    assert abs(json.loads(rep.read_text())["b"] - 3.0) < 0.1


def test_cli_fit(tmp_path):
    s = simulate(HawkesModel([1.0], [[0.5]], 1.0), 5000.0, 1)
    io.write_events(s, tmp_path / "e.csv")
    assert main(["fit", "--events", str(tmp_path / "e.csv"), "--beta", "1", "--out", str(tmp_path / "m.json")]) == 0
    assert abs(io.load_model(tmp_path / "m.json").A[0, 0] - 0.5) < 0.06


def test_cli_config_file_and_exit_codes(tmp_path, capsys):
    net = tmp_path / "net"
    main(["fixture", "fig1", "--out", str(net)])
    cfg = write(tmp_path / "cfg.json", json.dumps({"alpha": 0.02}))
    rep = tmp_path / "cal.json"
    assert main(["calibrate", "--config", str(cfg), "--model", str(net / "model.json"),
                 "--clusters", str(net / "clusters.json"), "--out", str(rep)]) == 0
    assert abs(json.loads(rep.read_text())["b"] - 2.8) < 0.1
    bad = write(tmp_path / "bad.json", json.dumps({"nonsense": 1}))
    assert main(["calibrate", "--config", str(bad), "--model", str(net / "model.json"),
                 "--clusters", str(net / "clusters.json"), "--alpha", "0.01", "--out", str(rep)]) == 2
    assert main(["detect", "--events", str(tmp_path / "missing.csv"), "--model", str(net / "model.json"),
                 "--clusters", str(net / "clusters.json"), "--b", "3", "--out", str(tmp_path / "x")]) == 2
    unstable = tmp_path / "u.json"
    io.save_model(HawkesModel([1.0], [[1.5]], 1.0), unstable)
    assert main(["simulate", "--model", str(unstable), "--horizon", "10", "--out", str(tmp_path / "u.csv")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_bench_is_deterministic(tmp_path):
    cfg = write(tmp_path / "b.json", json.dumps({"params": {"bs": [2.0, 3.0]}}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["bench", "fdr", "--fixture", "line20", "--replicates", "20", "--seed", "4",
                     "--config", str(cfg), "--out", str(out)]) == 0
    assert a.read_text() == b.read_text()
    rows = list(csv.DictReader(a.open()))
    assert [float(r["b"]) for r in rows] == [2.0, 3.0]


def test_experiment_spec_validation():
    with pytest.raises(ConfigurationError):
        ExperimentSpec("nope")
    with pytest.raises(ConfigurationError):
        ExperimentSpec("edd", cases=("ix",))
    with pytest.raises(ConfigurationError):
        ExperimentSpec("fdr", params={"zzz": 1})


def test_small_edd_experiment_runs():
    rows, timing = run_experiment(ExperimentSpec("edd", cases=("ii",), replicates=5, seed=1,
                                                 params={"methods": ("scan",)}))
    assert rows[0]["method"] == "scan" and 0 < rows[0]["edd"] < 300
    assert "seconds" in timing and "seconds" not in rows[0]

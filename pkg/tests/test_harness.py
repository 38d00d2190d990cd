import csv
import json

import numpy as np
import pytest
import yaml

from timeuse import cli, harness
from timeuse.harness import ParseError, emit_config, parse_config, run_batch
from timeuse.objectives import evaluate
from timeuse.opt_multi import run_multi


def test_minimal_config_defaults():
    cfg = parse_config("algorithm: PSO\nday: STD\noutcome: f4\n")
    assert cfg.algorithms == ("pso",)
    assert cfg.instance == "STD"
    assert cfg.outcomes == ("fitness",)
    assert cfg.runs == 30
    assert cfg.budget == 25000
    assert cfg.seed == 0


def test_week_defaults_and_bounds():
    cfg = parse_config({"algorithm": "de_rand1", "week": 1, "outcome": "cognition"})
    assert cfg.instance == "week1"
    assert cfg.budget == 125000
    with pytest.raises(ParseError, match="week"):
        parse_config({"algorithm": "de_rand1", "week": 7, "outcome": "cognition"})


@pytest.mark.parametrize("doc,path", [
    ({"algorithm": "tabu", "day": "STD", "outcome": "f4"}, "algorithms[0]"),
    ({"algorithm": "pso", "day": "MONDAY", "outcome": "f4"}, "day"),
    ({"algorithm": "pso", "day": "STD", "outcome": "height"}, "outcomes[0]"),
    ({"algorithm": "pso", "day": "STD", "outcome": "f4", "colour": 1}, "colour"),
    ({"algorithm": "pso", "day": "STD", "outcome": "f4", "params": {"zeta": 1}}, "params.zeta"),
    ({"algorithm": "pso", "day": "STD", "outcome": "f4", "runs": 0}, "runs"),
    ({"algorithm": "pso", "day": "STD", "outcome": "f4", "budget": 10}, "budget"),
    ({"algorithm": "nsga2", "day": "STD", "outcome": "f4"}, "outcomes"),
    ({"algorithm": ["pso", "nsga2"], "day": "STD", "outcome": "f4"}, "algorithms"),
    ({"algorithm": "nsga2", "week": 1, "outcomes": ["f1", "f2"]}, "week"),
    ({"algorithm": "pso", "outcome": "f4"}, "day"),
])
def test_parse_errors_name_the_key(doc, path):
    with pytest.raises(ParseError) as info:
        parse_config(doc)
    assert info.value.path == path


def test_parse_rejects_bad_param_values():
    with pytest.raises(ParseError, match="params"):
        parse_config({"algorithm": "de_rand1", "day": "STD", "outcome": "f4",
                      "params": {"F": 5.0}})


def test_config_round_trip():
    doc = {"algorithms": "moead, spea2", "day": "spd", "outcomes": ["f1", "cognition"],
           "runs": 3, "params": {"eta_c": 15}}
    cfg = parse_config(doc)
    text = emit_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert emit_config(again) == text
    normalized = yaml.safe_load(text)
    assert normalized["algorithms"] == ["moead", "spea2"]
    assert normalized["day"] == "SPD"
    assert normalized["outcomes"] == ["bmi", "cognition"]
    assert normalized["budget"] == 25000


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_batch_single(tmp_path):
    cfg = parse_config({"algorithm": "pso", "day": "STD", "outcome": "f4", "runs": 3,
                        "budget": 1000, "seed": 10})
    res = run_batch(cfg, jobs=1, out=tmp_path)
    rows = _read(res.files["runs"])
    assert [int(r["seed"]) for r in rows] == [10, 11, 12]
    assert [int(r["run"]) for r in rows] == [0, 1, 2]
    for r in rows:
        assert float(r["violation"]) == 0 and r["feasible"] == "1"
    [summary] = _read(res.files["summary"])
    scores = [float(r["score"]) for r in rows]
    assert float(summary["best"]) == max(scores)
    assert float(summary["worst"]) == min(scores)
    assert float(summary["median"]) == pytest.approx(np.median(scores))
    history = [json.loads(line) for line in res.files["history"].read_text().splitlines()]
    assert len(history) == 3
    assert history[0]["seed"] == 10
    best = np.array(history[0]["best_x"])
    assert evaluate("fitness", best) == pytest.approx(scores[0])


def test_run_batch_byte_identical_across_jobs(tmp_path):
    cfg = parse_config({"algorithms": ["de_rand1", "cmaes"], "day": "SPD",
                        "outcomes": ["bmi", "cognition"], "runs": 2, "budget": 600})
    a = run_batch(cfg, jobs=1, out=tmp_path / "a")
    b = run_batch(cfg, jobs=2, out=tmp_path / "b")
    c = run_batch(cfg, jobs=1, out=tmp_path / "c")
    for key in ("runs", "summary", "history", "config"):
        assert a.files[key].read_bytes() == b.files[key].read_bytes() == c.files[key].read_bytes()


def test_run_batch_multi_writes_fronts(tmp_path):
    cfg = parse_config({"algorithms": ["nsga2", "spea2"], "day": "SPD",
                        "outcomes": ["bmi", "fitness", "cognition"], "runs": 2,
                        "budget": 1000})
    res = run_batch(cfg, jobs=1, out=tmp_path)
    rows = _read(res.files["runs"])
    assert {r["algorithm"] for r in rows} == {"nsga2", "spea2"}
    for r in rows:
        assert 0 < float(r["value"]) <= 1.1 ** 3
        assert r["outcome"] == "bmi+fitness+cognition"
    front_rows = _read(res.files["front_nsga2"])
    assert list(front_rows[0])[:4] == ["bmi", "fitness", "cognition", "bmi_raw"]
    assert list(front_rows[0])[4:] == ["sleep", "sedentary", "lpa", "mvpa", "seed"]
    for r in front_rows:
        x = [float(r[k]) for k in ("sleep", "sedentary", "lpa", "mvpa")]
        assert float(r["bmi"]) == pytest.approx(abs(float(r["bmi_raw"])))
        assert float(r["bmi_raw"]) == pytest.approx(evaluate("bmi", x))
        assert float(r["fitness"]) == pytest.approx(evaluate("fitness", x))


def test_emit_front_plot_data(tmp_path):
    front = run_multi("nsga2", "SPD", ["cognition", "fitness"], budget=800, seed=0)
    [path] = harness.emit_front_plot_data([front], tmp_path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(front) + 1
    assert lines[0] == "cognition,fitness,sleep,sedentary,lpa,mvpa"
    empty = run_multi("nsga2", "SPD", ["cognition", "fitness"], budget=800, seed=0)
    empty.F, empty.X = empty.F[:0], empty.X[:0]
    with pytest.raises(ValueError):
        harness.emit_front_plot_data([empty], tmp_path)


def test_batch_error_reports_seed(monkeypatch):
    cfg = parse_config({"algorithm": "pso", "day": "STD", "outcome": "f4", "runs": 2,
                        "budget": 100, "seed": 40})

    def boom(*args, **kwargs):
        raise RuntimeError("exploded")

    monkeypatch.setattr(harness, "run_single", boom)
    with pytest.raises(harness.BatchError, match="seed 40"):
        run_batch(cfg, jobs=1, write=False)


def test_report_matches_summary(tmp_path):
    cfg = parse_config({"algorithms": ["pso", "de_rand1"], "day": "STD", "outcome": "bmi",
                        "runs": 3, "budget": 500})
    res = run_batch(cfg, jobs=1, out=tmp_path)
    table = harness.report([res.files["runs"]], tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == res.files["summary"].read_bytes()
    assert [r["algorithm"] for r in table] == ["pso", "de_rand1"]
    for r in table:
        assert r["best"] <= r["median"] <= r["worst"]  # BMI: smaller is better


# --- command line -------------------------------------------------------------

def test_cli_evaluate(capsys):
    assert cli.main(["evaluate", "390", "690", "150", "210", "--day", "STD",
                     "--outcome", "f4"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "outcome,value,score,violation"
    name, value, score, violation = out[1].split(",")
    assert name == "fitness" and float(value) == pytest.approx(60.4817, abs=5e-4)
    assert float(violation) == 0


def test_cli_optimize_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["--seed", "5", "optimize", "--algorithm", "de", "--day", "STD",
                     "--outcome", "f2", "--runs", "2", "--budget", "500", "--jobs", "1",
                     "--out", str(out)]) == 0
    rows = _read(out / "runs.csv")
    assert [r["seed"] for r in rows] == ["5", "6"]
    capsys.readouterr()
    assert cli.main(["report", str(out / "runs.csv")]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("instance,outcome,index,algorithm")


def test_cli_optimize_week(tmp_path):
    assert cli.main(["optimize-week", "--mixture", "2", "--outcome", "bmi", "--runs", "1",
                     "--budget", "200", "--jobs", "1", "--out", str(tmp_path)]) == 0
    [row] = _read(tmp_path / "runs.csv")
    assert row["instance"] == "week2"
    assert yaml.safe_load((tmp_path / "config.yaml").read_text())["bmi_rule"] == "sum_abs"


def test_cli_pareto(tmp_path):
    assert cli.main(["pareto", "--engines", "moead", "--day", "SPD", "--outcomes", "f1,f2",
                     "--runs", "1", "--budget", "500", "--jobs", "1",
                     "--out", str(tmp_path)]) == 0
    assert (tmp_path / "front_moead_SPD_bmi+cognition.csv").exists()


def test_cli_run_config(tmp_path, capsys):
    path = tmp_path / "exp.yaml"
    path.write_text(f"algorithm: cmaes\nday: WWD\noutcome: f3\nruns: 2\nbudget: 300\n"
                    f"out: {tmp_path / 'res'}\n")
    assert cli.main(["run", str(path), "--jobs", "1"]) == 0
    assert len(_read(tmp_path / "res" / "runs.csv")) == 2


def test_cli_oracle_grid(tmp_path):
    out = tmp_path / "grid.csv"
    assert cli.main(["oracle-grid", "--day", "STD", "--outcome", "fitness", "--step", "10",
                     "--out", str(out)]) == 0
    [row] = _read(out)
    assert float(row["value"]) == pytest.approx(60.4817, abs=1e-3)


def test_cli_fit(tmp_path, capsys):
    from timeuse.modelfit import synthetic_dataset
    from timeuse.objectives import OUTCOMES
    data = synthetic_dataset(OUTCOMES["fitness"].beta, 60, np.random.default_rng(0))
    path = tmp_path / "d.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sleep", "sedentary", "lpa", "mvpa", "outcome"])
        for x, y in zip(data.compositions, data.outcomes):
            w.writerow([*map(repr, map(float, x)), repr(float(y))])
    assert cli.main(["fit", str(path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["keep_quadratic"] is True
    assert doc["coefficients"]["b0"] == pytest.approx(68.85903, abs=1e-6)


def test_cli_catalog(capsys):
    assert cli.main(["catalog"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["day_structures"]["SPD"]["lower"] == [360, 480, 210, 61]


def test_cli_errors(capsys):
    assert cli.main(["optimize-week", "--mixture", "7", "--outcome", "f2"]) == 2
    assert "week" in capsys.readouterr().err
    assert cli.main(["evaluate", "1", "2", "3"]) == 2

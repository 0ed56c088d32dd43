import csv
import json
import subprocess
import sys

import pytest

from shyver import data_path
from shyver.cli import main, strip_volatile
from shyver.reduction import read_chain

TWO_MODE = str(data_path("two_mode.json"))
CASE5 = str(data_path("casestudy_n5.json"))


@pytest.fixture
def chain_file(tmp_path):
    out = tmp_path / "two_mode.chain"
    assert main(["reduce", TWO_MODE, "--pitch", "1/30", "-o", str(out)]) == 0
    return out


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


# --------------------------------------------------------------------------- reduce


def test_reduce_two_mode(chain_file):
    chain, meta = read_chain(chain_file)
    assert chain.state_count == 90 and meta["states"] == 90
    assert set(meta["observables"]) == {"y1", "y2"}
    assert meta["error_budget"]["kind"] == "ct"


def test_reduce_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "ct",\n  "modes": [1, 2,,]}')
    code, _, err = run(["reduce", bad, "--pitch", "1/10", "-o", tmp_path / "x"], capsys)
    assert code == 2
    assert "line 2 column" in err


def test_reduce_invalid_model(tmp_path, capsys):
    doc = json.loads(open(TWO_MODE).read())
    doc["initial_density"][0]["weight"] = "1/2"
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    assert run(["reduce", p, "--pitch", "1/30", "-o", tmp_path / "x"], capsys)[0] == 2


def test_reduce_non_dividing_pitch(tmp_path, capsys):
    assert run(["reduce", TWO_MODE, "--pitch", "2/3", "-o", tmp_path / "x"], capsys)[0] == 3


def test_reduce_casestudy_descriptor(tmp_path, capsys):
    out = tmp_path / "cs.json"
    code, stdout, _ = run(["reduce", CASE5, "-o", out], capsys)
    assert code == 0 and "not materialised" in stdout
    desc = json.loads(out.read_text())
    assert int(desc["state_count"]) == 12_800_000
    assert not any(k in desc for k in ("matrix", "generator", "entries"))


# --------------------------------------------------------------------------- check


def test_check_example_chain(chain_file, tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out, _ = run(["check", chain_file, "true U (y2 > 0.27)", "--seed", 1, "--report", report], capsys)
    assert code == 0
    assert out.splitlines()[0] == "YES"
    doc = json.loads(report.read_text())
    assert doc["schema"] == "shyver.report/1" and doc["verdict"]["verdict"] == "Yes"
    for key in ("strengthened", "T", "Delta", "segments", "samples", "seed"):
        assert key in doc or key in doc["verdict"]


def test_check_formula_file(chain_file, tmp_path, capsys):
    f = tmp_path / "phi.mitl"
    f.write_text("true U (y2 > 0.27)\n")
    assert run(["check", chain_file, f, "--seed", 1, "--report", tmp_path / "r.json"], capsys)[0] == 0


def test_check_no_exit_code(chain_file, tmp_path, capsys):
    code, out, _ = run(["check", chain_file, "true U[0,0.05] (y2 > 0.9)", "--seed", 1,
                        "--report", tmp_path / "r.json"], capsys)
    assert code == 1 and out.startswith("NO")


def test_check_segment_cap_exit(chain_file, tmp_path, capsys):
    code, out, _ = run(["check", chain_file, "true U[0,5] (y2 > 0.27)", "--seed", 1, "--max-segments", 3,
                        "--report", tmp_path / "r.json"], capsys)
    assert code == 5 and out.startswith("UNKNOWN")


def test_check_undeclared_observable(chain_file, tmp_path, capsys):
    code, _, err = run(["check", chain_file, "true U (y3 > 0.27)", "--seed", 1, "--report", tmp_path / "r.json"],
                       capsys)
    assert code == 2 and "y3" in err


def test_check_syntax_error(chain_file, tmp_path, capsys):
    code, _, err = run(["check", chain_file, "true U (y2 > )", "--seed", 1, "--report", tmp_path / "r.json"],
                       capsys)
    assert code == 2 and "position" in err


def test_check_model_with_strengthening(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out, _ = run(["check", TWO_MODE, "true U (y2 > 1/4)", "--pitch", "1/30", "--seed", 2,
                        "--lambda", "y2=0.02", "--contractivity-alpha", "1", "--contractivity-beta", "1",
                        "--report", report], capsys)
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["strengthened"] == "(true U[0,inf] (y2 > 0.27))"
    assert doc["error_budget"]["lambda_source"] == {"y2": "user"}


def test_missing_seed_is_drawn_and_printed(chain_file, tmp_path, capsys):
    report = tmp_path / "r.json"
    code, _, err = run(["check", chain_file, "true U (y2 > 0.27)", "--report", report], capsys)
    assert code == 0
    seed = int(err.split("seed:")[1].split()[0])
    assert json.loads(report.read_text())["seed"] == seed


def test_budgets_recorded_verbatim(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, _, _ = run(["check", CASE5, "true U[0,0.05] (w > 0.2)", "--alpha", 0.1, "--gamma", 0.1, "--delta", 0.1,
                      "--delta-prime", 0.1, "--seed", 4, "--report", report], capsys)
    assert code == 0
    doc = json.loads(report.read_text())
    for k in ("alpha", "gamma", "delta", "delta_prime"):
        assert doc["config"][k] == 0.1 and doc["verdict"]["budgets"][k] == 0.1
    assert doc["state_count"] == "12800000"
    assert doc["events_per_sample"] > 0


def test_manifest_replay_is_exact(chain_file, tmp_path, capsys):
    r1, r2 = tmp_path / "a.json", tmp_path / "b.json"
    man = tmp_path / "m.json"
    argv = ["check", chain_file, "true U (y2 > 0.27)", "--seed", 11, "--report", r1,
            "--write-manifest", man]
    first = run(argv, capsys)
    second = run(["check", "--manifest", man, "--report", r2], capsys)
    assert first[0] == second[0]
    a, b = json.loads(r1.read_text()), json.loads(r2.read_text())
    assert a["verdict"]["samples"] == b["verdict"]["samples"]
    assert json.dumps(strip_volatile(a), sort_keys=True) == json.dumps(strip_volatile(b), sort_keys=True)


def test_manifest_detects_changed_input(chain_file, tmp_path, capsys):
    man = tmp_path / "m.json"
    run(["check", chain_file, "true U (y2 > 0.27)", "--seed", 1, "--report", tmp_path / "a.json",
         "--write-manifest", man], capsys)
    with open(chain_file, "a") as fh:
        fh.write("\n")
    assert run(["check", "--manifest", man, "--report", tmp_path / "b.json"], capsys)[0] == 2


def test_dump_files(chain_file, tmp_path, capsys):
    sig, aut, trace = tmp_path / "sig.json", tmp_path / "aut.json", tmp_path / "trace.ndjson"
    code, _, _ = run(["check", chain_file, "true U (y2 > 0.27)", "--seed", 1, "--report", tmp_path / "r.json",
                      "--dump-signal", sig, "--dump-automaton", aut, "--stats-trace", trace], capsys)
    assert code == 0
    assert json.loads(sig.read_text())["segments"]
    assert "note" in json.loads(aut.read_text())
    first = json.loads(trace.read_text().splitlines()[0])
    assert {"test", "n", "llr"} <= set(first)


def test_dtmc_automaton_dump(tmp_path, capsys):
    doc = json.loads(open(data_path("heat.json")).read())
    doc.update(kind="dt", transition_kernel={"type": "identity"}, contractivity=0.5)
    model = tmp_path / "dt.json"
    model.write_text(json.dumps(doc))
    aut = tmp_path / "aut.json"
    code, _, _ = run(["check", model, "left > 0.9", "--pitch", "1/10", "--seed", 1, "--horizon", 3,
                      "--report", tmp_path / "r.json", "--dump-automaton", aut], capsys)
    assert code == 0
    dumped = json.loads(aut.read_text())
    assert dumped["formula"]["states"] >= 1 and dumped["negation"]["states"] >= 1


# --------------------------------------------------------------------------- bench and simulate


def bench(tmp_path, capsys, **suite):
    spec = {"n": [5], "thresholds": [0.2, 0.5, 0.8], "bounds": [0.02, 0.05], "reps": 10, "eta": 10,
            "alpha": 0.1, "gamma": 0.1, "delta": 0.1, "delta_prime": 0.1, "seed": 1}
    spec.update(suite)
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "bench.csv"
    code = run(["bench", path, "-o", out], capsys)[0]
    return code, out


def test_bench_grid(tmp_path, capsys):
    code, out = bench(tmp_path, capsys)
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 60
    assert {r["verdict"] for r in rows if r["threshold"] == "0.2"} == {"Yes"}
    summary = read_csv(tmp_path / "bench_summary.csv")
    assert len(summary) == 6 and all(s["ci95_wall_time"] for s in summary)
    dat = (tmp_path / "bench.dat").read_text()
    assert dat.count("# bound") == 2


def test_bench_single_rep_has_no_ci(tmp_path, capsys):
    code, _ = bench(tmp_path, capsys, reps=1, thresholds=[0.2], bounds=[0.02])
    assert code == 0
    (row,) = read_csv(tmp_path / "bench_summary.csv")
    assert row["ci95_wall_time"] == "" and row["ci95_samples"] == ""


def test_bench_time_cap_exit(tmp_path, capsys):
    code, _ = bench(tmp_path, capsys, reps=1, thresholds=[0.5], bounds=[1.0], time_cap=0.01)
    assert code == 5


def test_simulate_chain(chain_file, tmp_path, capsys):
    out = tmp_path / "sim.ndjson"
    assert run(["simulate", chain_file, "--times", "0,1/2", "--samples", 3, "--seed", 1, "-o", out], capsys)[0] == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(recs) == 6 and {"state", "y1", "y2"} <= set(recs[0])


def test_simulate_casestudy(tmp_path, capsys):
    out = tmp_path / "sim.ndjson"
    code, _, err = run(["simulate", CASE5, "--times", "1,2", "--samples", 4, "--seed", 1, "-o", out], capsys)
    assert code == 0 and "events per sample" in err
    assert len(out.read_text().splitlines()) == 8


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "shyver.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("shyver ")

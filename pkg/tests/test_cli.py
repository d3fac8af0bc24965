import csv
import hashlib
import io
import json
import os
import subprocess
import sys

import pytest

from appspred.cli import MODEL_FORMAT, THREADS_ENV, build_parser, main, n_jobs_from_env

SMALL = ["--preset", "ds01-like", "--n-records", "400", "--seed", "3"]


def _run(*argv):
    return main([str(a) for a in argv])


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(out, command):
    return json.loads((out / f"manifest_{command}.json").read_text())


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert _run("synth", *SMALL, "--out-dir", out) == 0
    return out


class TestSynth:
    def test_outputs_and_manifest(self, synth_dir):
        m = _manifest(synth_dir, "synth")
        assert set(m["outputs"]) == {"schema.json", "data.csv"}
        for name, entry in m["outputs"].items():
            assert entry["sha256"] == _sha(synth_dir / name)
        assert m["params"]["seed"] == 3
        assert m["generator"]["n_records"] == 400
        for key in ("argv", "version", "started", "finished", "elapsed_seconds", "seeds", "inputs"):
            assert key in m
        rows = list(csv.DictReader(io.StringIO((synth_dir / "data.csv").read_text())))
        assert len(rows) == 400 and "app" in rows[0]

    def test_byte_identical_reruns(self, tmp_path, synth_dir):
        again = tmp_path / "again"
        assert _run("synth", *SMALL, "--out-dir", again) == 0
        for name in ("schema.json", "data.csv"):
            assert (again / name).read_bytes() == (synth_dir / name).read_bytes()


class TestPipeline:
    def test_sweep_train_evaluate(self, tmp_path, synth_dir, capsys):
        data = ["--data", synth_dir / "data.csv", "--schema", synth_dir / "schema.json", "--seed", 3]
        out = tmp_path / "run"
        assert _run("sweep", *data, "--grid", "1,5,10", "--k", 3, "--out-dir", out) == 0
        assert capsys.readouterr().out.startswith("chosen_n=")
        sweep = _manifest(out, "sweep")
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "n,precision,recall,f1" and len(lines) == 4
        n = sweep["chosen_n"]
        assert n in (1, 5, 10)

        assert _run("train", *data, "--n-trees", n, "--out-dir", out) == 0
        model = json.loads((out / "model.json").read_text())
        assert model["format"] == MODEL_FORMAT and len(model["forest"]["trees"]) == n

        assert _run("evaluate", *data, "--model", out / "model.json", "--k", 3, "--out-dir", out) == 0
        report = json.loads((out / "report.json").read_text())
        row = next(r for r in csv.DictReader(io.StringIO((out / "sweep.csv").read_text()))
                   if int(r["n"]) == n)
        assert report["mean"]["f1"] == pytest.approx(float(row["f1"]), abs=0.02)
        assert "timings" not in report
        assert "timings" in _manifest(out, "evaluate")
        header = (out / "per_class.csv").read_text().splitlines()[0]
        assert header == "app,precision,recall,f1,roc"

    def test_predict(self, tmp_path, synth_dir):
        out = tmp_path / "p"
        assert _run("train", *SMALL, "--n-trees", 5, "--out-dir", out) == 0
        text = (synth_dir / "data.csv").read_text().splitlines()
        header = text[0].split(",")
        unlabeled = [",".join(header[:-1])] + [",".join(r.split(",")[:-1]) for r in text[1:6]]
        # one row with a missing context
        cells = unlabeled[1].split(",")
        cells[0] = "?"
        unlabeled.append(",".join(cells))
        (tmp_path / "new.csv").write_text("\n".join(unlabeled) + "\n")
        assert _run("predict", "--model", out / "model.json", "--data", tmp_path / "new.csv",
                    "--out-dir", out) == 0
        rows = list(csv.reader(io.StringIO((out / "predictions.csv").read_text())))
        schema = json.loads((synth_dir / "schema.json").read_text())
        assert rows[0][:2] == ["row", "app"] and len(rows[0]) == 2 + len(schema["labels"])
        assert len(rows) == 7
        for r in rows[1:6]:
            assert r[1] in schema["labels"]
            assert sum(float(v) for v in r[2:]) == pytest.approx(1.0, abs=1e-5)
        assert rows[6][1] == "?"

    def test_compare_runs_sweep_when_n_omitted(self, tmp_path):
        out = tmp_path / "c"
        assert _run("compare", *SMALL, "--grid", "1,5", "--k", 3, "--epochs", 20, "--out-dir", out) == 0
        m = _manifest(out, "compare")
        assert m["chosen_n"] in (1, 5) and len(m["sweep"]) == 2
        lines = (out / "comparison.csv").read_text().splitlines()
        assert len(lines) == 7  # header + six models

    def test_time(self, tmp_path):
        out = tmp_path / "t"
        assert _run("time", *SMALL, "--grid", "1,3", "--out-dir", out) == 0
        lines = (out / "timing.csv").read_text().splitlines()
        assert lines[0] == "n,millis" and len(lines) == 3

    def test_replay(self, tmp_path):
        out = tmp_path / "r"
        assert _run("train", *SMALL, "--n-trees", 4, "--out-dir", out) == 0
        first = _sha(out / "model.json")
        assert _run("replay", out / "manifest_train.json", "--out-dir", tmp_path / "r2") == 0
        assert _sha(tmp_path / "r2" / "model.json") == first

    def test_replay_detects_changes(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert _run("train", *SMALL, "--n-trees", 4, "--out-dir", out) == 0
        path = out / "manifest_train.json"
        m = json.loads(path.read_text())
        m["outputs"]["model.json"]["sha256"] = "0" * 64
        path.write_text(json.dumps(m))
        assert _run("replay", path, "--out-dir", tmp_path / "r2") == 1
        assert "model.json" in capsys.readouterr().err


class TestErrors:
    def _fails(self, capsys, *argv, code=1):
        assert _run(*argv) == code
        err = capsys.readouterr().err.strip()
        assert err.startswith("appspred") and "\n" not in err and "Traceback" not in err
        return err

    def test_missing_file(self, tmp_path, capsys):
        err = self._fails(capsys, "train", "--data", tmp_path / "nope.csv", "--schema", tmp_path / "s.json",
                          "--out-dir", tmp_path)
        assert "nope" in err or "s.json" in err

    def test_domain_violation(self, tmp_path, synth_dir, capsys):
        bad = (synth_dir / "data.csv").read_text().replace("home", "moon", 1)
        (tmp_path / "bad.csv").write_text(bad)
        err = self._fails(capsys, "train", "--data", tmp_path / "bad.csv", "--schema", synth_dir / "schema.json",
                          "--out-dir", tmp_path / "o")
        assert "moon" in err
        assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())

    def test_bad_config(self, tmp_path, capsys):
        self._fails(capsys, "train", *SMALL, "--n-trees", 0, "--out-dir", tmp_path)
        assert not (tmp_path / "model.json").exists()

    def test_not_a_model(self, tmp_path, synth_dir, capsys):
        err = self._fails(capsys, "predict", "--model", synth_dir / "schema.json", "--data",
                          synth_dir / "data.csv", "--out-dir", tmp_path)
        assert "model" in err

    @pytest.mark.parametrize("argv", [["train", "--n-trees", "x"], ["bogus"], ["sweep", "--grid", "5,1"]])
    def test_usage_errors_exit_two(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("appspred") and "\n" not in err

    def test_failed_write_leaves_no_outputs(self, tmp_path, capsys):
        out = tmp_path / "o"
        (out / "data.csv").mkdir(parents=True)  # the rename onto a directory fails
        self._fails(capsys, "synth", *SMALL, "--out-dir", out)
        assert sorted(p.name for p in out.iterdir()) == ["data.csv"]


class TestThreads:
    @pytest.mark.parametrize("raw, want", [("1", None), ("2", 2), ("", "all"), ("0", "all")])
    def test_env_parsing(self, monkeypatch, raw, want):
        monkeypatch.setenv(THREADS_ENV, raw)
        if want == "all":
            cores = os.cpu_count() or 1
            want = None if cores == 1 else cores
        assert n_jobs_from_env() == want

    def test_bad_env(self, monkeypatch, tmp_path, capsys):
        monkeypatch.setenv(THREADS_ENV, "many")
        assert _run("train", *SMALL, "--n-trees", 2, "--out-dir", tmp_path) == 1
        assert THREADS_ENV in capsys.readouterr().err

    def test_parallel_and_serial_models_identical(self, monkeypatch, tmp_path):
        shas = []
        for threads in ("1", "2"):
            monkeypatch.setenv(THREADS_ENV, threads)
            out = tmp_path / threads
            assert _run("train", *SMALL, "--n-trees", 6, "--out-dir", out) == 0
            shas.append(_sha(out / "model.json"))
        assert shas[0] == shas[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "appspred", "synth", *SMALL, "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "data.csv").exists()


def test_parser_lists_commands():
    text = build_parser().format_help()
    for cmd in ("synth", "train", "predict", "sweep", "time", "evaluate", "compare", "replay"):
        assert cmd in text

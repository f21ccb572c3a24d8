"""End-to-end CLI tests: verbs, config handling, exit codes, idempotence.

Each command runs in-process through main(argv) so exit codes and stream
contents are asserted directly.
"""

import json

import pytest

from gtfnet.cli import DEFAULTS, load_config, main
from gtfnet.errors import ConfigError

SMALL_MODEL = [
    "--set", "model.gcn=[8,4]",
    "--set", "model.d_model=4",
    "--set", "model.heads=2",
    "--set", "model.d_ff=6",
    "--set", "model.depth=1",
    "--set", "model.d_e=4",
    "--set", "model.d_h=4",
    "--set", "model.d_out=3",
]
SMALL_DATA = [
    "--set", "data.nodes=3",
    "--set", "data.T=8",
    "--set", "data.windows=8",
    "--set", "data.contamination=0.25",
]
FAST_TRAIN = ["--set", "train.epochs=2", "--set", "train.batch=4"]


def run(argv):
    return main(argv)


def jsonl(capsys):
    out = capsys.readouterr().out
    return [json.loads(line) for line in out.splitlines() if line.strip()]


class TestConfig:
    def test_defaults_complete(self):
        cfg = load_config(None)
        assert cfg == DEFAULTS
        assert cfg is not DEFAULTS  # deep copy, defaults never mutated

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[data]\nnodse = 4\n")
        with pytest.raises(ConfigError) as ei:
            load_config(str(path))
        assert "data.nodse" in str(ei.value)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[tuning]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_file_then_set_precedence(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[data]\nnodes = 12\nT = 24\n")
        cfg = load_config(str(path), ["data.nodes=20"])
        assert cfg["data"]["nodes"] == 20
        assert cfg["data"]["T"] == 24

    def test_set_parses_toml_values(self):
        cfg = load_config(None, [
            "model.gcn=[8,32,16]",
            "data.topology=erdos(0.2)",  # bare string fallback
            "train.learning_rate=5e-4",
            "data.mix={spike=1.0}",
        ])
        assert cfg["model"]["gcn"] == [8, 32, 16]
        assert cfg["data"]["topology"] == "erdos(0.2)"
        assert cfg["train"]["learning_rate"] == 5e-4
        assert cfg["data"]["mix"] == {"spike": 1.0}

    def test_set_without_equals(self):
        with pytest.raises(ConfigError):
            load_config(None, ["data.nodes"])

    def test_type_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["data.nodes=not-a-count"])

    def test_missing_config_file(self):
        assert run(["train", "--config", "/nonexistent/cfg.toml"]) == 1


class TestSynth:
    def test_writes_three_files_with_headers(self, tmp_path, capsys):
        assert run(["synth", "--out-dir", str(tmp_path / "c")] + SMALL_DATA) == 0
        for name, header in [
            ("metrics.csv", "timestamp,instance_id,cpu,mem,disk_io,net"),
            ("edges.csv", "timestamp,caller,callee"),
            ("labels.csv", "window_index,instance_id,label"),
        ]:
            first = (tmp_path / "c" / name).read_text().splitlines()[0]
            assert first == header
        summary = jsonl(capsys)[-1]
        assert summary["nodes"] == 3 and summary["windows"] == 8

    def test_same_seed_identical_bytes(self, tmp_path):
        run(["synth", "--out-dir", str(tmp_path / "a")] + SMALL_DATA)
        run(["synth", "--out-dir", str(tmp_path / "b")] + SMALL_DATA)
        for name in ("metrics.csv", "edges.csv", "labels.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_contamination_all_labels_zero(self, tmp_path):
        run([
            "synth", "--out-dir", str(tmp_path / "c"),
            "--set", "data.nodes=3", "--set", "data.T=4",
            "--set", "data.windows=5", "--set", "data.contamination=0.0",
        ])
        rows = (tmp_path / "c" / "labels.csv").read_text().splitlines()[1:]
        assert rows and all(row.endswith(",0") for row in rows)


class TestTrain:
    def test_report_has_epoch_entries(self, tmp_path, capsys):
        out = tmp_path / "model.gtf"
        code = run(["train", "--out", str(out)] + SMALL_DATA + SMALL_MODEL + FAST_TRAIN)
        assert code == 0 and out.exists()
        lines = jsonl(capsys)
        epochs = [x for x in lines if "epoch" in x]
        assert len(epochs) == 2
        assert lines[-1]["checkpoint"] == str(out)

    def test_zero_epochs_is_config_error(self, tmp_path, capsys):
        code = run([
            "train", "--out", str(tmp_path / "m.gtf"),
            "--set", "train.epochs=0",
        ] + SMALL_DATA + SMALL_MODEL)
        assert code == 1
        assert "epochs" in capsys.readouterr().err

    def test_rerun_identical_checkpoint(self, tmp_path):
        args = SMALL_DATA + SMALL_MODEL + FAST_TRAIN
        run(["train", "--out", str(tmp_path / "a.gtf")] + args)
        run(["train", "--out", str(tmp_path / "b.gtf")] + args)
        assert (tmp_path / "a.gtf").read_bytes() == (tmp_path / "b.gtf").read_bytes()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
    def test_divergence_is_numeric_failure(self, tmp_path, capsys):
        code = run([
            "train", "--out", str(tmp_path / "m.gtf"),
            "--set", "train.learning_rate=1e60", "--set", "train.epochs=4",
        ] + SMALL_DATA + SMALL_MODEL)
        assert code == 3
        assert "non-finite" in capsys.readouterr().err


class TestScore:
    @pytest.fixture()
    def checkpoint(self, tmp_path):
        out = tmp_path / "model.gtf"
        run(["train", "--out", str(out)] + SMALL_DATA + SMALL_MODEL + FAST_TRAIN)
        return out

    def test_row_count_is_windows_times_nodes(self, tmp_path, checkpoint, capsys):
        out = tmp_path / "scores.csv"
        code = run(["score", "--checkpoint", str(checkpoint), "--out", str(out)]
                   + SMALL_DATA)
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "window_index,instance_id,score"
        assert len(rows) - 1 == 8 * 3
        assert all(float(r.rsplit(",", 1)[1]) >= 0 for r in rows[1:])

    def test_single_node_single_window(self, tmp_path, checkpoint):
        out = tmp_path / "scores.csv"
        code = run([
            "score", "--checkpoint", str(checkpoint), "--out", str(out),
            "--set", "data.nodes=1", "--set", "data.T=8",
            "--set", "data.windows=1", "--set", "data.contamination=0.0",
        ])
        assert code == 0
        assert len(out.read_text().splitlines()) == 2

    def test_corrupted_checkpoint_no_output(self, tmp_path, capsys):
        bad = tmp_path / "bad.gtf"
        bad.write_bytes(b"GTF1junkjunk")
        out = tmp_path / "scores.csv"
        code = run(["score", "--checkpoint", str(bad), "--out", str(out)] + SMALL_DATA)
        assert code == 2
        assert not out.exists()

    def test_thread_pool_determinism(self, tmp_path, checkpoint, monkeypatch):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("GTF_THREADS", "1")
        run(["score", "--checkpoint", str(checkpoint), "--out", str(a)] + SMALL_DATA)
        monkeypatch.setenv("GTF_THREADS", "4")
        run(["score", "--checkpoint", str(checkpoint), "--out", str(b)] + SMALL_DATA)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_threads_env(self, tmp_path, checkpoint, monkeypatch):
        monkeypatch.setenv("GTF_THREADS", "many")
        code = run(["score", "--checkpoint", str(checkpoint),
                    "--out", str(tmp_path / "s.csv")] + SMALL_DATA)
        assert code == 1


class TestEval:
    def write_pair(self, tmp_path, scores, labels):
        s = tmp_path / "scores.csv"
        l = tmp_path / "labels.csv"
        s.write_text("window_index,instance_id,score\n"
                     + "".join(f"{w},{n},{v}\n" for w, n, v in scores))
        l.write_text("window_index,instance_id,label\n"
                     + "".join(f"{w},{n},{y}\n" for w, n, y in labels))
        return s, l

    def test_perfect_scores(self, tmp_path, capsys):
        s, l = self.write_pair(
            tmp_path,
            [(0, "a", 0.1), (0, "b", 0.2), (1, "a", 0.9), (1, "b", 0.8)],
            [(0, "a", 0), (0, "b", 0), (1, "a", 1), (1, "b", 1)],
        )
        assert run(["eval", "--scores", str(s), "--labels", str(l)]) == 0
        captured = capsys.readouterr()
        assert json.loads(captured.out)["auc"] == 1.0
        assert "AUC 1.0000" in captured.err

    def test_single_class_labels(self, tmp_path, capsys):
        s, l = self.write_pair(
            tmp_path,
            [(0, "a", 0.1), (0, "b", 0.2)],
            [(0, "a", 0), (0, "b", 0)],
        )
        assert run(["eval", "--scores", str(s), "--labels", str(l)]) == 2

    def test_unmatched_keys_listed(self, tmp_path, capsys):
        s, l = self.write_pair(
            tmp_path,
            [(0, "a", 0.1), (0, "b", 0.2)],
            [(0, "a", 0), (0, "ghost", 1)],
        )
        assert run(["eval", "--scores", str(s), "--labels", str(l)]) == 2
        assert "ghost" in capsys.readouterr().err

    def test_row_order_irrelevant(self, tmp_path, capsys):
        rows_s = [(0, "a", 0.1), (0, "b", 0.9), (1, "a", 0.4), (1, "b", 0.6)]
        rows_l = [(0, "a", 0), (0, "b", 1), (1, "a", 0), (1, "b", 1)]
        s1, l1 = self.write_pair(tmp_path, rows_s, rows_l)
        assert run(["eval", "--scores", str(s1), "--labels", str(l1)]) == 0
        first = capsys.readouterr().out
        sub = tmp_path / "shuffled"
        sub.mkdir()
        s2, l2 = self.write_pair(sub, rows_s[::-1], rows_l[::-1])
        assert run(["eval", "--scores", str(s2), "--labels", str(l2)]) == 0
        assert capsys.readouterr().out == first

    def test_labels_required(self, tmp_path):
        s, _ = self.write_pair(tmp_path, [(0, "a", 0.1)], [(0, "a", 0)])
        assert run(["eval", "--scores", str(s)]) == 1


class TestSweep:
    def test_jsonl_one_object_per_depth(self, capsys):
        code = run(["sweep", "--depths", "1", "2"]
                   + SMALL_DATA + SMALL_MODEL + ["--set", "train.epochs=1"])
        assert code == 0
        lines = jsonl(capsys)
        assert [x["depth"] for x in lines] == [1, 2]
        for x in lines:
            assert {"auc", "ks", "f1", "threshold"} <= set(x)

    def test_empty_depths_usage_error(self, capsys):
        code = run(["sweep", "--set", "eval.depths=[]"] + SMALL_DATA + SMALL_MODEL)
        assert code == 1


class TestUsage:
    def test_help_documents_config_keys(self, capsys):
        with pytest.raises(SystemExit) as ei:
            run(["--help"])
        assert ei.value.code == 0
        out = capsys.readouterr().out
        for key in ("data.T", "model.depth", "train.epochs", "eval.labels"):
            assert key in out

    def test_each_verb_has_help_with_keys(self, capsys):
        for verb in ("synth", "train", "score", "eval", "sweep"):
            with pytest.raises(SystemExit) as ei:
                run([verb, "--help"])
            assert ei.value.code == 0
            assert "train.epochs" in capsys.readouterr().out

    def test_unknown_verb(self, capsys):
        assert run(["transmogrify"]) == 1

    def test_unknown_flag(self, capsys):
        assert run(["synth", "--frobnicate"]) == 1

    def test_missing_verb(self, capsys):
        assert run([]) == 1

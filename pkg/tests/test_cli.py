"""Command-line surface: flags, config precedence, exit codes, pipelines."""

import json

import numpy as np
import pytest

from fuserank.cli import CONFIG_KEYS, build_parser, parse_config_file, resolve_config, run
from fuserank.data import save_dataset
from fuserank.errors import DataError

from conftest import make_tiny_dataset

SMALL_SPEC = "n_users = 60\nn_items = 80\nn_interactions = 1500\nseed = 3\n"


def _train_args(data_dir, model_path, extra=()):
    return ["-q", "train", "--data", str(data_dir), "--out", str(model_path),
            "--fusion-dim", "6", "--embed-dim", "4", "--expert-count", "2",
            "--mlp-widths", "8", "--epochs", "1", *extra]


class TestConfigParsing:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("\n# nothing here\n")
        args = build_parser().parse_args(["train", "--data", "d", "--out", "m"])
        cfg = resolve_config(path, args)
        from fuserank.model import ModelConfig
        assert cfg == ModelConfig()

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("learning_rate = 0.001\n")
        args = build_parser().parse_args(
            ["train", "--data", "d", "--out", "m", "--learning-rate", "0.01"])
        cfg = resolve_config(path, args)
        assert cfg.learning_rate == 0.01

    def test_unknown_key_fails_closed(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("learnig_rate = 0.01\n")
        with pytest.raises(DataError, match="learnig_rate"):
            parse_config_file(path)

    def test_type_mismatch_names_key(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("epochs = soon\n")
        with pytest.raises(DataError, match="epochs"):
            parse_config_file(path)

    def test_help_documents_every_config_key(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["train", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key in CONFIG_KEYS:
            assert key in text, f"config key {key} missing from --help"
        assert "default" in text


class TestExitCodes:
    def test_missing_data_dir_exits_one(self, tmp_path, capsys):
        code = run(_train_args(tmp_path / "nope", tmp_path / "m.bin"))
        assert code == 1
        assert "nope" in capsys.readouterr().err

    def test_bad_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["train", "--no-such-flag"])
        assert exc.value.code == 1

    def test_gradcheck_passes_and_exits_zero(self, capsys):
        code = run(["-q", "gradcheck", "--seed", "7"])
        assert code == 0
        out = capsys.readouterr().out
        assert "max relative error" in out

    def test_unknown_config_key_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("not_a_key = 1\n")
        save_dataset(make_tiny_dataset(), tmp_path / "data")
        code = run(["-q", "train", "--config", str(cfg),
                    "--data", str(tmp_path / "data"), "--out", str(tmp_path / "m.bin")])
        assert code == 1
        assert "not_a_key" in capsys.readouterr().err


class TestPipelines:
    def test_synth_train_evaluate_deterministic(self, tmp_path, capsys):
        spec = tmp_path / "spec.txt"
        spec.write_text(SMALL_SPEC)
        reports = []
        for tag in ("one", "two"):
            data = tmp_path / f"data_{tag}"
            model = tmp_path / f"model_{tag}.bin"
            report = tmp_path / f"report_{tag}.json"
            assert run(["-q", "synth", "--spec", str(spec), "--out-dir", str(data)]) == 0
            assert run(_train_args(data, model, ("--seed", "1"))) == 0
            assert run(["-q", "evaluate", "--model", str(model),
                        "--data", str(data), "--report", str(report)]) == 0
            reports.append(report.read_bytes())
        assert reports[0] == reports[1]

    def test_predict_prints_descending_scores(self, tmp_path, capsys):
        data = tmp_path / "data"
        save_dataset(make_tiny_dataset(), data)
        model = tmp_path / "m.bin"
        assert run(_train_args(data, model)) == 0
        capsys.readouterr()
        code = run(["-q", "predict", "--model", str(model), "--data", str(data),
                    "--user", "u1", "--items", "i0,i1,i2,i3"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4
        scores = []
        for line in lines:
            item_id, score = line.split("\t")
            assert item_id in {"i0", "i1", "i2", "i3"}
            scores.append(float(score))
        assert scores == sorted(scores, reverse=True)

    def test_predict_unknown_user_exits_one(self, tmp_path, capsys):
        data = tmp_path / "data"
        save_dataset(make_tiny_dataset(), data)
        model = tmp_path / "m.bin"
        assert run(_train_args(data, model)) == 0
        code = run(["-q", "predict", "--model", str(model), "--data", str(data),
                    "--user", "ghost", "--items", "i0"])
        assert code == 1
        assert "ghost" in capsys.readouterr().err

    def test_extract_style_cli(self, tmp_path):
        rng = np.random.default_rng(0)
        maps = tmp_path / "maps.jsonl"
        with open(maps, "w") as fh:
            for item in ("a", "b"):
                layers = [{"c": 4, "h": 2, "w": 2,
                           "data": rng.standard_normal(16).tolist()} for _ in range(3)]
                fh.write(json.dumps({"item_id": item, "layers": layers}) + "\n")
        out = tmp_path / "vecs.jsonl"
        code = run(["-q", "extract-style", "--maps", str(maps), "--grid", "2",
                    "--layers", "0,1,2", "--out", str(out)])
        assert code == 0
        recs = [json.loads(l) for l in out.read_text().splitlines()]
        assert [r["item_id"] for r in recs] == ["a", "b"]
        assert all(len(r["sty"]) == 12 and len(r["sem"]) == 4 for r in recs)

    def test_train_before_filters_interactions(self, tmp_path, caplog):
        data = tmp_path / "data"
        save_dataset(make_tiny_dataset(), data)
        model = tmp_path / "m.bin"
        code = run(_train_args(data, model, ("--before", "350")))
        assert code == 0
        code = run(_train_args(data, model, ("--before", "50")))
        assert code == 1  # nothing strictly before 50

    def test_evaluate_since_filters_interactions(self, tmp_path):
        data = tmp_path / "data"
        save_dataset(make_tiny_dataset(), data)
        model = tmp_path / "m.bin"
        assert run(_train_args(data, model)) == 0
        report = tmp_path / "r.json"
        assert run(["-q", "evaluate", "--model", str(model), "--data", str(data),
                    "--report", str(report), "--since", "300"]) == 0
        assert json.loads(report.read_text())["n"] == 4  # timestamps 300..600

    def test_similarity_cli(self, tmp_path):
        data = tmp_path / "data"
        save_dataset(make_tiny_dataset(), data)
        out = tmp_path / "sim.json"
        code = run(["-q", "similarity", "--data", str(data), "--modality", "sty",
                    "--queries", "i0,i2", "--k", "2", "--report", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert [q["query"] for q in report["queries"]] == ["i0", "i2"]

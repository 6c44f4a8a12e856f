import json

import numpy as np
import pytest

from grapes.cli import RunConfig, main
from grapes.errors import ConfigError
from grapes.gcn import load_checkpoint
from grapes.io import read_metrics


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def kv(out: str) -> dict:
    return dict(line.split("\t", 1) for line in out.strip().splitlines())


def write_config(path, **kw):
    base = {"sampler": "random", "epochs": 2, "batch_size": 16, "k": 8, "hidden_dim": 8,
            "sampler_hidden": 8}
    base.update(kw)
    path.write_text(json.dumps(base))
    return path


@pytest.fixture
def sbm(tmp_path, capsys):
    out = tmp_path / "sbm"
    assert run(capsys, "generate-synthetic", "--n", "60", "--seed", "0", "--kind", "sbm", "--out", str(out))[0] == 0
    return out


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig.from_dict({})
        assert (cfg.train.batch_size, cfg.train.k, cfg.train.num_layers, cfg.hidden_dim) == (256, 256, 2, 256)

    def test_estimator_follows_sampler(self):
        assert RunConfig.from_dict({"sampler": "grapes-gfn"}).train.estimator == "gfn"
        assert RunConfig.from_dict({"sampler": "grapes-rl"}).train.estimator == "rl"
        assert RunConfig.from_dict({"sampler": "degree"}).train.estimator == "none"

    @pytest.mark.parametrize("raw", [{"sampler": "ladies"}, {"model": "gat"}, {"colour": 1},
                                     {"model": "pair-rule", "num_layers": 2}])
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)

    def test_round_trip(self):
        cfg = RunConfig.from_dict({"sampler": "grapes-gfn", "alpha": 100.0, "seed": 4})
        assert RunConfig.from_dict(cfg.to_dict()) == cfg


class TestCommands:
    def test_generate_and_evaluate_n8(self, tmp_path, capsys):
        out = tmp_path / "t8"
        code, _, _ = run(capsys, "generate-synthetic", "--n", "8", "--seed", "3", "--out", str(out))
        assert code == 0
        code, text, _ = run(capsys, "evaluate", "--data", str(out))
        stats = kv(text)
        assert code == 0
        assert stats["n_edges"] == "28"
        assert 0.0 < float(stats["homophily"]) < 1.0

    def test_train_and_evaluate_checkpoint(self, tmp_path, capsys, sbm):
        cfg = write_config(tmp_path / "c.json", data=str(sbm), sampler="grapes-gfn", alpha=100.0)
        code, text, _ = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "r"))
        assert code == 0
        f1 = float(kv(text)["test_f1"])
        header, recs = read_metrics(tmp_path / "r" / "metrics.jsonl")
        assert header["config"]["sampler"] == "grapes-gfn"
        assert len(recs) == 2
        code, text, _ = run(capsys, "evaluate", "--data", str(sbm), "--checkpoint",
                            str(tmp_path / "r" / "checkpoint.npz"))
        assert code == 0 and float(kv(text)["test_f1"]) == f1

    def test_zero_epochs(self, tmp_path, capsys, sbm):
        cfg = write_config(tmp_path / "c.json", data=str(sbm), epochs=0, seed=5)
        assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "r"))[0] == 0
        header, recs = read_metrics(tmp_path / "r" / "metrics.jsonl")
        assert header and recs == []
        nets, _ = load_checkpoint(tmp_path / "r" / "checkpoint.npz")
        from grapes.gcn import ClassifierGcn, GcnConfig
        fresh = ClassifierGcn(GcnConfig(16, 4, 2, 8), np.random.default_rng(5))
        for name, p in fresh.named_parameters().items():
            assert np.array_equal(nets["classifier"][name], p.data)

    def test_deterministic_metrics(self, tmp_path, capsys, sbm):
        cfg = write_config(tmp_path / "c.json", data=str(sbm), sampler="grapes-rl")
        texts = []
        for name in ("a", "b"):
            assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / name))[0] == 0
            _, recs = read_metrics(tmp_path / name / "metrics.jsonl")
            for r in recs:
                r.pop("wall_time")
            texts.append(recs)
        assert texts[0] == texts[1]

    def test_seed_env_override(self, tmp_path, capsys, sbm, monkeypatch):
        cfg = write_config(tmp_path / "c.json", data=str(sbm), seed=1, epochs=0)
        monkeypatch.setenv("GRAPES_SEED", "42")
        assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "r"))[0] == 0
        header, _ = read_metrics(tmp_path / "r" / "metrics.jsonl")
        assert header["config"]["seed"] == 42

    def test_compare_and_diagnostics(self, tmp_path, capsys, sbm):
        out = tmp_path / "cmp"
        code, text, _ = run(capsys, "--threads", "1", "compare", "--samplers", "random,degree", "--data",
                            str(sbm), "--seeds", "0,1", "--config",
                            str(write_config(tmp_path / "c.json", epochs=1)), "--out", str(out))
        assert code == 0
        lines = (out / "summary.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["sampler", "mean_test_f1", "std_test_f1", "n_seeds"]
        assert [l.split("\t")[0] for l in lines[1:]] == ["random", "degree"]
        assert (out / "val_f1.png").stat().st_size > 0
        assert (out / "degree-seed1" / "metrics.jsonl").is_file()
        code, text, _ = run(capsys, "diagnostics", "--run", str(out / "random-seed0"))
        assert code == 0
        assert text.splitlines()[0].startswith("epoch\tlayer\tentropy_mean")
        assert (out / "random-seed0" / "diagnostics.png").stat().st_size > 0
        assert (out / "random-seed0" / "label_diff.tsv").is_file()


class TestFailures:
    def one_record(self, err):
        lines = err.strip().splitlines()
        assert len(lines) == 1
        return json.loads(lines[0])

    def test_unknown_command(self, capsys):
        code, _, err = run(capsys, "frobnicate")
        assert code != 0 and self.one_record(err)["error"] == "config"

    def test_missing_dataset(self, tmp_path, capsys):
        code, _, err = run(capsys, "evaluate", "--data", str(tmp_path / "nope"))
        assert code != 0 and self.one_record(err)["error"] == "dataset"

    def test_bad_bundle_names_file_and_line(self, tmp_path, capsys, sbm):
        (sbm / "splits.tsv").write_text("0\ttrain\n1\tnowhere\n")
        code, _, err = run(capsys, "evaluate", "--data", str(sbm))
        rec = self.one_record(err)
        assert code != 0 and rec["file"] == "splits.tsv" and rec["line"] == 2

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        code, _, err = run(capsys, "train", "--config", str(cfg))
        assert code != 0 and self.one_record(err)["error"] == "config"

    def test_odd_partner_graph(self, tmp_path, capsys):
        code, _, err = run(capsys, "generate-synthetic", "--n", "7", "--out", str(tmp_path / "x"))
        assert code != 0 and self.one_record(err)["error"] == "graph_input"

    def test_unknown_sampler(self, tmp_path, capsys, sbm):
        code, _, err = run(capsys, "compare", "--samplers", "ladies", "--data", str(sbm), "--seeds", "0",
                           "--out", str(tmp_path / "o"))
        assert code != 0 and self.one_record(err)["error"] == "config"

    def test_missing_run(self, tmp_path, capsys):
        code, _, err = run(capsys, "diagnostics", "--run", str(tmp_path))
        assert code != 0 and self.one_record(err)["error"] == "config"

    def test_bad_threads(self, capsys):
        code, _, err = run(capsys, "--threads", "0", "evaluate", "--data", "x")
        assert code != 0 and "threads" in self.one_record(err)["message"]

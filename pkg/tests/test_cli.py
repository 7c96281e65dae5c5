import json

import pytest

from cqe.cli import main
from cqe.harness import default_pool_spec

SMALL_CFG = "n_quantiles = 9\nhidden_sizes = 8\nepochs = 2\nbatch_size = 128\nn_dims = 64\n"


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.cfg").write_text(SMALL_CFG)
    assert main(["gen-data", "--n", "600", "--seed", "3", "--out", str(d / "data.csv")]) == 0
    assert main(["train", "--config", str(d / "small.cfg"), "--data", str(d / "data.csv"),
                 "--out", str(d / "model.txt")]) == 0
    (d / "pool.json").write_text(json.dumps({
        "spec": default_pool_spec().to_dict(), "n_candidates": 12, "pool_seed": 1,
        "horizon": 6}))
    return d


def run_twice(tmp_path, argv_for, outputs):
    """Run a command into two directories and return the byte contents of each output."""
    results = []
    for tag in ("a", "b"):
        out_dir = tmp_path / tag
        out_dir.mkdir()
        assert main(argv_for(out_dir)) == 0
        results.append([(out_dir / name).read_bytes() for name in outputs])
    return results


class TestGenData:
    def test_row_count_and_sidecar(self, work):
        lines = (work / "data.csv").read_text().splitlines()
        assert len(lines) == 601
        side = json.loads((work / "data.csv.spec.json").read_text())
        assert side["n"] == 600 and side["seed"] == 3 and side["spec"]["family"] == "lognormal"

    def test_invalid_family_in_spec(self, tmp_path, capsys):
        spec = default_pool_spec().to_dict()
        spec["family"] = "weibull"
        (tmp_path / "s.json").write_text(json.dumps(spec))
        code = main(["gen-data", "--spec", str(tmp_path / "s.json"), "--n", "5",
                     "--out", str(tmp_path / "o.csv")])
        assert code == 2
        assert "family" in capsys.readouterr().err

    def test_missing_out_is_usage_error(self):
        assert main(["gen-data", "--n", "5"]) == 1


class TestTrainEval:
    def test_loss_trace_length(self, work):
        lines = [l for l in (work / "model.txt.loss.csv").read_text().splitlines()
                 if not l.startswith("#")]
        assert lines[0] == "epoch,loss" and len(lines) == 3

    def test_config_echoed(self, work):
        text = (work / "model.txt.loss.csv").read_text()
        assert "# n_quantiles = 9" in text

    def test_eval_fields(self, work, capsys):
        assert main(["eval", "--config", str(work / "small.cfg"), "--model", str(work / "model.txt"),
                     "--data", str(work / "data.csv"), "--strategy", "cde"]) == 0
        names = [l.split("\t")[0] for l in capsys.readouterr().out.splitlines()]
        assert "mae" in names and "xauc" in names

    def test_dqc_k1_equals_cse(self, work, tmp_path):
        base = ["eval", "--config", str(work / "small.cfg"), "--model", str(work / "model.txt"),
                "--data", str(work / "data.csv"), "--tau-low", "0.3"]
        assert main(base + ["--strategy", "dqc", "--k", "1.0", "--out", str(tmp_path / "d.csv")]) == 0
        assert main(base + ["--strategy", "cse", "--out", str(tmp_path / "c.csv")]) == 0
        body = lambda p: [l for l in p.read_text().splitlines()
                          if not l.startswith("#") and not l.startswith("strategy,")]
        assert body(tmp_path / "d.csv") == body(tmp_path / "c.csv")

    def test_interest_task(self, work, capsys):
        assert main(["eval", "--config", str(work / "small.cfg"), "--model", str(work / "model.txt"),
                     "--data", str(work / "data.csv"), "--task", "interest"]) == 0
        out = capsys.readouterr().out
        assert "gauc" in out and "ndcg@5" in out

    def test_missing_model(self, work, capsys):
        code = main(["eval", "--model", str(work / "nope.txt"), "--data", str(work / "data.csv")])
        assert code == 2
        assert "nope.txt" in capsys.readouterr().err

    def test_unknown_config_key(self, work, tmp_path):
        (tmp_path / "bad.cfg").write_text("learning_rate = 0.1\n")
        code = main(["train", "--config", str(tmp_path / "bad.cfg"), "--data", str(work / "data.csv"),
                     "--out", str(tmp_path / "m.txt")])
        assert code == 1

    def test_bad_data_file(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n")
        code = main(["train", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "m.txt")])
        assert code == 2


class TestGradCheck:
    def test_passes(self, capsys):
        assert main(["grad-check"]) == 0
        assert "max_relative_error" in capsys.readouterr().out

    def test_failure_exit_code(self):
        # an impossible tolerance forces the numeric-failure path
        assert main(["grad-check", "--tolerance", "0"]) == 3


class TestSweepCompare:
    def test_sweep_rows(self, work, tmp_path):
        assert main(["sweep-quantiles", "--config", str(work / "small.cfg"), "--data",
                     str(work / "data.csv"), "--n-list", "1,3,3", "--out", str(tmp_path / "s.csv")]) == 0
        lines = [l for l in (tmp_path / "s.csv").read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == 4
        assert [l.split(",")[0] for l in lines[1:]] == ["1", "3", "3"]
        # both N=3 rows come from identical runs
        assert lines[2] == lines[3]

    def test_compare_rows(self, work, tmp_path):
        assert main(["compare", "--pool", str(work / "pool.json"), "--n-sessions", "50",
                     "--out", str(tmp_path / "c.csv")]) == 0
        lines = [l for l in (tmp_path / "c.csv").read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "strategy,mean_watch_s,se_watch,mean_plays,se_plays,churn_rate"
        assert [l.split(",")[0] for l in lines[1:]] == ["cse", "dqc", "cde"]


class TestDeterminism:
    @pytest.mark.parametrize("verb", ["gen-data", "train", "eval", "rank", "grad-check",
                                      "sweep-quantiles", "compare"])
    def test_byte_identical(self, verb, work, tmp_path):
        cfg, data, model = str(work / "small.cfg"), str(work / "data.csv"), str(work / "model.txt")
        argv, outputs = {
            "gen-data": (lambda o: ["gen-data", "--n", "50", "--seed", "1", "--out", str(o / "x.csv")],
                         ["x.csv", "x.csv.spec.json"]),
            "train": (lambda o: ["train", "--config", cfg, "--data", data, "--out", str(o / "m.txt")],
                      ["m.txt", "m.txt.loss.csv"]),
            "eval": (lambda o: ["eval", "--config", cfg, "--model", model, "--data", data,
                                "--out", str(o / "e.csv")], ["e.csv"]),
            "rank": (lambda o: ["rank", "--config", cfg, "--model", model, "--data", data,
                                "--out", str(o / "r.csv")], ["r.csv"]),
            "grad-check": (lambda o: ["grad-check", "--config", cfg, "--out", str(o / "g.csv")],
                           ["g.csv"]),
            "sweep-quantiles": (lambda o: ["sweep-quantiles", "--config", cfg, "--data", data,
                                           "--n-list", "1,5", "--out", str(o / "s.csv")], ["s.csv"]),
            "compare": (lambda o: ["compare", "--pool", str(work / "pool.json"), "--n-sessions", "40",
                                   "--out", str(o / "c.csv")], ["c.csv"]),
        }[verb]
        a, b = run_twice(tmp_path, argv, outputs)
        assert a == b

"""End-to-end exercises of the command-line surface.

Everything drives ``cli.main`` in-process with explicit --out directories,
so runs stay hermetic.  A module-scoped fixture trains one small copy-task
model that the finetune/evaluate/correlate tests share.
"""

import numpy as np
import pytest

from ngramgrad import cli
from ngramgrad.corpus import Vocab, load_corpus
from ngramgrad.training import TrainConfig


def write_config(path, **overrides):
    values = {
        "task": "copy", "size": 400, "vocab_size": 10, "len_min": 3,
        "len_max": 6, "emb_size": 16, "hidden_size": 24, "attn_size": 12,
        "epochs": 2, "seed": 11,
    }
    values.update(overrides)
    path.write_text(
        "# test pipeline\n"
        + "\n".join(f"{k} = {v}" for k, v in values.items())
        + "\n"
    )
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One CLI training run good enough to finetune from (dev BLEU >= 0.5)."""
    out = tmp_path_factory.mktemp("runs")
    cfg = write_config(out / "base.cfg", epochs=25, stop_at_dev_bleu=0.55)
    rc = cli.main(["train", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    ckpts = sorted(out.glob("mle-*.ckpt"))
    assert len(ckpts) == 1
    return out, cfg, ckpts[0]


class TestConfigHandling:
    def test_file_comments_and_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("task = copy  # inline comment\n\n# full-line comment\nsize = 60\nvocab_size = 10\n")
        rc = cli.main(["gen-data", "--config", str(cfg), "--size", "40",
                       "--out", str(tmp_path), "--set", "seed=3"])
        assert rc == 0
        assert "40 copy pairs" in capsys.readouterr().out

    def test_unknown_key_named_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("batchsize = 10\n")
        rc = cli.main(["train", "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 2
        assert "batchsize" in capsys.readouterr().err

    def test_missing_config_file_exit_2(self, tmp_path, capsys):
        rc = cli.main(["train", "--config", str(tmp_path / "nope.cfg"),
                       "--out", str(tmp_path)])
        assert rc == 2
        assert "nope.cfg" in capsys.readouterr().err

    def test_malformed_set_exit_2(self, tmp_path):
        assert cli.main(["gen-data", "--set", "seed", "--out", str(tmp_path)]) == 2

    def test_malformed_file_line_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("task copy\n")
        assert cli.main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "key = value" in capsys.readouterr().err

    def test_bad_value_exit_2(self, tmp_path, capsys):
        rc = cli.main(["gen-data", "--task", "shuffle", "--out", str(tmp_path)])
        assert rc == 2
        assert "shuffle" in capsys.readouterr().err

    def test_out_defaults_to_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NGRAMGRAD_OUT", str(tmp_path / "envruns"))
        rc = cli.main(["gen-data", "--task", "copy", "--size", "30",
                       "--set", "vocab_size=10", "--seed", "2"])
        assert rc == 0
        assert list((tmp_path / "envruns").glob("data-*.src"))


class TestGenData:
    def test_writes_corpus_and_snapshot(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", size=50)
        rc = cli.main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 0
        stems = list(tmp_path.glob("data-*.src"))
        assert len(stems) == 1
        stem = stems[0].name[: -len(".src")]
        corp = load_corpus(tmp_path, stem)
        assert len(corp) == 50
        snapshot = tmp_path / f"{stem}.config"
        assert snapshot.exists()

    def test_snapshot_reproduces_fingerprint(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", size=50)
        assert cli.main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        snapshot = next(tmp_path.glob("data-*.config"))
        reloaded = TrainConfig.from_mapping(cli._parse_config_file(str(snapshot)))
        assert f"data-{reloaded.fingerprint()}.config" == snapshot.name

    def test_rerun_is_bit_identical(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", size=50)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert cli.main(["gen-data", "--config", str(cfg), "--out", str(out)]) == 0
        for part in ("src", "tgt", "src.vocab", "tgt.vocab"):
            fa, fb = next(a.glob(f"data-*.{part}")), next(b.glob(f"data-*.{part}"))
            assert fa.read_bytes() == fb.read_bytes()


class TestTrain:
    def test_outputs_and_determinism(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.cfg", epochs=2, size=200)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        ckpt_a, ckpt_b = next(a.glob("mle-*.ckpt")), next(b.glob("mle-*.ckpt"))
        assert ckpt_a.read_bytes() == ckpt_b.read_bytes()
        curve = next(a.glob("mle-*.curve.csv")).read_text().splitlines()
        assert curve[0] == "step,epoch,split,metric,value"
        assert len(curve) > 1
        assert "best dev corpus BLEU" in capsys.readouterr().out

    def test_rejects_probabilistic_objective(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.cfg", objective="p_gleu")
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "finetune" in capsys.readouterr().err


class TestFinetuneEvaluateCorrelate:
    def test_finetune_requires_start(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.cfg", objective="p_p2")
        assert cli.main(["finetune", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "start" in capsys.readouterr().err

    def test_finetune_rejects_ce(self, trained, tmp_path):
        out, cfg, ckpt = trained
        rc = cli.main(["finetune", "--config", str(cfg), "--start", str(ckpt),
                       "--out", str(tmp_path)])
        assert rc == 2

    def test_finetune_then_evaluate(self, trained, tmp_path, capsys):
        out, cfg, ckpt = trained
        rc = cli.main(["finetune", "--config", str(cfg), "--start", str(ckpt),
                       "--objective", "p_p2", "--epochs", "1",
                       "--out", str(tmp_path)])
        assert rc == 0
        ft = next(tmp_path.glob("ft-*.ckpt"))
        rc = cli.main(["evaluate", "--config", str(cfg), "--checkpoint", str(ft),
                       "--out", str(tmp_path)])
        assert rc == 0
        lines = next(tmp_path.glob("eval-*.csv")).read_text().splitlines()
        assert lines[0] == "id,bleu,gleu,hyp,ref"
        assert len(lines) > 1
        assert "test corpus BLEU" in capsys.readouterr().out

    def test_checkpoint_fingerprint_mismatch_exit_2(self, trained, tmp_path, capsys):
        out, cfg, ckpt = trained
        rc = cli.main(["evaluate", "--config", str(cfg), "--checkpoint", str(ckpt),
                       "--set", "size=999", "--out", str(tmp_path)])
        assert rc == 2
        assert "fingerprint" in capsys.readouterr().err

    def test_correlate_reports_pearson(self, trained, tmp_path, capsys):
        out, cfg, ckpt = trained
        rc = cli.main(["correlate", "--config", str(cfg), "--checkpoint", str(ckpt),
                       "--n-samples", "40", "--out", str(tmp_path)])
        assert rc == 0
        assert "pearson r = " in capsys.readouterr().out
        lines = next(tmp_path.glob("corr-*.csv")).read_text().splitlines()
        assert lines[0] == "id,gleu,pgleu"
        assert len(lines) == 41

    def test_divergence_exit_3_keeps_checkpoint(self, trained, tmp_path, capsys):
        out, cfg, ckpt = trained
        with np.errstate(invalid="ignore", over="ignore"):
            rc = cli.main(["finetune", "--config", str(cfg), "--start", str(ckpt),
                           "--objective", "p_p2", "--epochs", "1",
                           "--set", "optimizer=sgd", "--set", "lr=1e308",
                           "--out", str(tmp_path)])
        assert rc == 3
        assert "diverged" in capsys.readouterr().err
        assert list(tmp_path.glob("ft-*.ckpt"))


class TestGradcheck:
    def test_passes_and_prints_worst_error(self, tmp_path, capsys):
        rc = cli.main(["gradcheck", "--seed", "0", "--instances", "5",
                       "--out", str(tmp_path)])
        assert rc == 0
        output = capsys.readouterr().out
        assert "max relative error" in output
        for objective in ("p_bleu", "p_gleu", "p_p2"):
            assert objective in output

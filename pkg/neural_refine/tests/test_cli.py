"""The neural-refine command line: train and eval round trip."""

import numpy as np

from neural_refine import cli


class TestTrain:
    def test_train_writes_checkpoint_and_curve(self, tiny_dataset, tmp_path,
                                               capsys):
        ckpt = tmp_path / "net.pt"
        curve = tmp_path / "curve.csv"
        rc = cli.main(["train", str(tiny_dataset), "--out", str(ckpt),
                       "--curve", str(curve), "--epochs", "2",
                       "--blocks", "1", "--seed", "5"])
        assert rc == 0
        assert ckpt.is_file() and curve.is_file()
        out = capsys.readouterr().out
        assert "epoch   0" in out and "saved checkpoint" in out
        assert len(curve.read_text().strip().split("\n")) == 3

    def test_missing_dataset_fails_cleanly(self, tmp_path, capsys):
        rc = cli.main(["train", str(tmp_path / "absent"), "--out",
                       str(tmp_path / "x.pt"), "--epochs", "1"])
        assert rc == cli.EXIT_BAD_ARGS
        assert "error:" in capsys.readouterr().err


class TestEval:
    def test_eval_reports_rmse(self, tiny_dataset, tmp_path, capsys):
        ckpt = tmp_path / "net.pt"
        assert cli.main(["train", str(tiny_dataset), "--out", str(ckpt),
                         "--epochs", "1", "--blocks", "1"]) == 0
        capsys.readouterr()
        assert cli.main(["eval", str(tiny_dataset), "--ckpt", str(ckpt)]) == 0
        out = capsys.readouterr().out
        rmse = float(out.split(":")[1].strip().split(" ")[0])
        assert np.isfinite(rmse) and rmse >= 0.0

    def test_eval_missing_checkpoint(self, tiny_dataset, tmp_path, capsys):
        rc = cli.main(["eval", str(tiny_dataset), "--ckpt",
                       str(tmp_path / "none.pt")])
        assert rc == cli.EXIT_BAD_ARGS

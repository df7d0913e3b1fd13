import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lpmkl import cli
from lpmkl import io as lio
from lpmkl.kernels import linear_kernel, rbf_kernel

from conftest import balanced_labels

COMMANDS = ["train", "predict", "toygen", "sweep", "bounds", "align", "normalize"]


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def problem(tmp_path):
    """Two RBF kernels, labels, and matching test-kernel rows on disk."""
    rng = np.random.default_rng(4)
    X = rng.standard_normal((16, 2))
    y = balanced_labels(rng, 16)
    X[y > 0] += 2.0  # separable enough for zero training error
    Xt = rng.standard_normal((5, 2))
    paths = []
    for name, w in (("k1", 0.5), ("k2", 2.0)):
        K = rbf_kernel(X, w, name=name)
        lio.write_kernel(tmp_path / f"{name}.km", K)
        d = ((Xt[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        lio.write_kernel_rows(tmp_path / f"{name}.rows", np.exp(-d / w), name=name)
        lio.write_kernel_rows(tmp_path / f"{name}.train", K.values, name=name)
        paths.append(tmp_path / f"{name}.km")
    lio.write_labels(tmp_path / "y.txt", y)
    return tmp_path, paths, y


class TestNumberParsing:
    def test_values(self):
        assert cli.number("inf") == float("inf")
        assert cli.number("4/3") == pytest.approx(4 / 3)
        assert cli.number("1e-3") == 1e-3

    def test_rejects(self):
        with pytest.raises(Exception):
            cli.number("four")


class TestHelp:
    @pytest.mark.parametrize("command", COMMANDS)
    def test_help_exits_zero_without_files(self, command, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        with pytest.raises(SystemExit) as exc:
            cli.main([command, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out
        assert os.listdir(tmp_path) == []

    def test_bad_flag_is_input_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["bounds", "--M", "2", "--n", "10", "--nonsense"])
        assert exc.value.code == 1

    def test_abbreviations_refused(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["bounds", "--M", "2", "--n", "10", "--cort"])
        assert exc.value.code == 1

    def test_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "lpmkl.cli", "--help"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and "train" in res.stdout


class TestTrain:
    def test_train_and_predict(self, problem, capsys):
        d, paths, y = problem
        code, out, _ = run(["train", "--p", "2", "--C", "1", "--mode", "interleaved",
                            "--kernels", *paths, "--labels", d / "y.txt",
                            "--out", d / "model.mkl"], capsys)
        assert code == 0 and "gap" in out
        report = json.loads((d / "model.mkl.report.json").read_text())
        assert report["config"]["mode"] == "interleaved"
        assert report["kernels"][0].endswith("k1.km")
        model, names = lio.read_model(d / "model.mkl")
        assert names == ["k1", "k2"]

        code, out, _ = run(["predict", "--model", d / "model.mkl",
                            "--kernels", d / "k1.rows", d / "k2.rows"], capsys)
        table = rows(out)
        assert code == 0 and table[0] == ["decision", "label"] and len(table) == 1 + 5

        # the training set comes back with its own labels
        code, out, _ = run(["predict", "--model", d / "model.mkl",
                            "--kernels", d / "k1.train", d / "k2.train"], capsys)
        labels = [int(r[1]) for r in rows(out)[1:]]
        np.testing.assert_array_equal(labels, y)

    def test_p_inf_is_unweighted_sum(self, problem, capsys):
        d, paths, _ = problem
        code, _, _ = run(["train", "--p", "inf", "--kernels", *paths, "--labels", d / "y.txt",
                          "--out", d / "m.mkl"], capsys)
        model, _ = lio.read_model(d / "m.mkl")
        assert code == 0
        np.testing.assert_array_equal(model.theta, [1.0, 1.0])

    def test_p_below_one(self, problem, capsys):
        d, paths, _ = problem
        code, _, err = run(["train", "--p", "0.5", "--kernels", *paths, "--labels", d / "y.txt",
                            "--out", d / "m.mkl"], capsys)
        assert code == 1 and "p must be ≥ 1" in err
        assert not (d / "m.mkl").exists()

    def test_missing_kernel_file(self, problem, capsys):
        d, paths, _ = problem
        code, _, err = run(["train", "--kernels", paths[0], d / "ghost.km",
                            "--labels", d / "y.txt", "--out", d / "m.mkl"], capsys)
        assert code == 1 and "ghost.km" in err

    def test_label_count_mismatch(self, problem, capsys):
        d, paths, _ = problem
        lio.write_labels(d / "short.txt", [1, -1])
        code, _, err = run(["train", "--kernels", *paths, "--labels", d / "short.txt",
                            "--out", d / "m.mkl"], capsys)
        assert code == 1 and "short.txt" in err

    def test_non_convergence_writes_best(self, problem, capsys):
        d, paths, _ = problem
        code, _, err = run(["train", "--p", "1.1", "--C", "100", "--max-outer", "1",
                            "--epsilon-mkl", "1e-12", "--kernels", *paths,
                            "--labels", d / "y.txt", "--out", d / "m.mkl"], capsys)
        assert code == 2 and "warning" in err
        assert (d / "m.mkl").exists() and (d / "m.mkl.report.json").exists()

    def test_q_block_exclusive(self, problem, capsys):
        d, paths, _ = problem
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--p", "2", "--q-block", "3", "--kernels", str(paths[0]),
                      "--labels", str(d / "y.txt"), "--out", str(d / "m.mkl")])
        assert exc.value.code == 1

    def test_manifest(self, problem, capsys):
        d, paths, _ = problem
        code, _, _ = run(["train", "--manifest", d / "run.json", "--kernels", *paths,
                          "--labels", d / "y.txt", "--out", d / "m.mkl"], capsys)
        manifest = json.loads((d / "run.json").read_text())
        assert code == 0 and manifest["command"] == "train" and manifest["C"] == 1.0
        assert manifest["backend"] in ("numba", "numpy")


class TestPredict:
    def test_missing_row_file_names_kernel(self, problem, capsys):
        d, paths, _ = problem
        run(["train", "--kernels", *paths, "--labels", d / "y.txt", "--out", d / "m.mkl"], capsys)
        code, _, err = run(["predict", "--model", d / "m.mkl", "--kernels", d / "k1.rows"],
                           capsys)
        assert code == 1 and "'k2'" in err

    def test_shape_mismatch(self, problem, capsys):
        d, paths, _ = problem
        run(["train", "--kernels", *paths, "--labels", d / "y.txt", "--out", d / "m.mkl"], capsys)
        code, _, err = run(["predict", "--model", d / "m.mkl",
                            "--kernels", d / "k1.rows", d / "k2.train"], capsys)
        assert code == 1 and "shape" in err

    def test_missing_model(self, tmp_path, capsys):
        code, _, err = run(["predict", "--model", tmp_path / "none.mkl",
                            "--kernels", tmp_path / "a"], capsys)
        assert code == 1 and "none.mkl" in err


class TestToygen:
    def test_deterministic(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            assert run(["toygen", "--seed", 7, "--out", tmp_path / name], capsys)[0] == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        table = rows((tmp_path / "a.csv").read_text())
        assert len(table) == 51 and table[0][-1] == "y" and len(table[0]) == 51

    def test_kernel_dir(self, tmp_path, capsys):
        code, _, _ = run(["toygen", "--n", 10, "--d", 3, "--informative", 1,
                          "--kernel-dir", tmp_path / "k"], capsys)
        assert code == 0
        assert sorted(os.listdir(tmp_path / "k")) == ["f000.km", "f001.km", "f002.km",
                                                      "labels.txt"]
        K = lio.read_kernel(tmp_path / "k" / "f000.km")
        # multiplicative normalization: mean diagonal minus mean entry equals one
        assert np.trace(K.values) / 10 - K.values.mean() == pytest.approx(1.0)

    def test_invalid(self, capsys):
        code, _, err = run(["toygen", "--n", 9], capsys)
        assert code == 1 and "even" in err


class TestSweep:
    def test_small_sweep(self, tmp_path, capsys):
        argv = ["sweep", "--d", 4, "--informative", 1, 4, "--n-train", 10, "--n-validate", 20,
                "--n-test", 20, "--repetitions", 2, "--ps", 2, "inf", "--Cs", 0.1, 1,
                "--report", tmp_path / "r.json"]
        code, out, _ = run(argv, capsys)
        table = rows(out)
        assert code == 0 and len(table) == 1 + 4
        assert table[0][0] == "scenario_nu"
        assert json.loads((tmp_path / "r.json").read_text())["ps"] == [2.0, "inf"]


class TestBounds:
    def test_l1_value(self, capsys):
        code, out, _ = run(["bounds", "--M", 2, "--R", 1, "--n", 100, "--p", 1], capsys)
        table = rows(out)
        assert code == 0
        assert table[0][:6] == ["M", "n", "p", "R", "l1_bound", "lp_bound"]
        # %.5g of 0.1685776; the value is 0.16859 to within 5e-5
        assert table[1][5] == "0.16858"

    def test_grid_and_columns(self, capsys):
        code, out, _ = run(["bounds", "--M", 2, 16, "--n", 100, 400, "--p", 1, 2, "inf",
                            "--delta", 0.05, "--cortes"], capsys)
        table = rows(out)
        assert code == 0 and len(table) == 1 + 12
        assert "generalization_bound" in table[0] and "cortes_bound" in table[0]
        assert table[1][table[0].index("cortes_bound")] == "inf"

    def test_invalid_M(self, capsys):
        code, _, err = run(["bounds", "--M", 1, "--n", 100], capsys)
        assert code == 1 and "M > 1" in err


class TestAlign:
    def test_spherical_unit_diagonal(self, problem, capsys):
        d, paths, _ = problem
        code, out, _ = run(["align", "--kernels", *paths, "--normalize", "spherical"], capsys)
        A = np.array(rows(out), dtype=float)
        assert code == 0 and A.shape == (2, 2)
        np.testing.assert_allclose(np.diag(A), 1.0, atol=1e-12)
        np.testing.assert_allclose(A, A.T)

    def test_names_header(self, problem, capsys):
        d, paths, _ = problem
        code, out, _ = run(["align", "--kernels", *paths, "--names"], capsys)
        assert rows(out)[0] == ["k1", "k2"]


class TestNormalize:
    def test_spherical(self, tmp_path, capsys):
        X = np.random.default_rng(0).standard_normal((6, 3))
        lio.write_kernel(tmp_path / "lin.km", linear_kernel(X))
        code, _, _ = run(["normalize", "--kernel", tmp_path / "lin.km", "--method", "spherical",
                          "--out", tmp_path / "out.kmb"], capsys)
        K = lio.read_kernel(tmp_path / "out.kmb")
        assert code == 0
        np.testing.assert_array_equal(np.diag(K.values), 1.0)

    def test_unknown_method(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["normalize", "--kernel", "x", "--method", "cubic", "--out", "y"])
        assert exc.value.code == 1

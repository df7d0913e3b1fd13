import json
import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lpmkl import io as lio
from lpmkl.errors import ValidationError
from lpmkl.io import FormatError
from lpmkl.kernels import KernelMatrix, KernelStack, rbf_kernel
from lpmkl.mkl import P_INF, MklConfig, MklModel, predict, train

from conftest import balanced_labels, random_psd

finite = st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False, width=64)


def symmetric(A):
    return np.triu(A) + np.triu(A, 1).T


class TestAtomicWrite:
    def test_writes_and_replaces(self, tmp_path):
        target = tmp_path / "out.txt"
        lio.atomic_write(target, "first")
        lio.atomic_write(target, b"second")
        assert target.read_text() == "second"
        assert os.listdir(tmp_path) == ["out.txt"]

    def test_failure_leaves_old_file(self, tmp_path, monkeypatch):
        target = tmp_path / "out.txt"
        target.write_text("old")

        def broken(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(lio.os, "replace", broken)
        with pytest.raises(OSError):
            lio.atomic_write(target, "new")
        assert target.read_text() == "old"
        assert os.listdir(tmp_path) == ["out.txt"]


class TestKernelFiles:
    @pytest.mark.parametrize("suffix", [".km", ".kmb"])
    def test_round_trip_bit_exact(self, tmp_path, suffix):
        rng = np.random.default_rng(0)
        K = KernelMatrix(random_psd(rng, 7) * np.pi, "gauss")
        path = tmp_path / f"k{suffix}"
        lio.write_kernel(path, K)
        back = lio.read_kernel(path)
        assert back.values.tobytes() == K.values.tobytes()
        assert back.name == ("gauss" if suffix == ".km" else "k")

    @settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(arrays(np.float64, (3, 3), elements=finite))
    def test_text_round_trip_any_symmetric(self, tmp_path, A):
        A = symmetric(A)
        path = tmp_path / "h.km"
        lio.write_kernel(path, A, name="h")
        try:
            back = lio.read_kernel(path)
        except ValidationError:
            return  # non-PSD or otherwise invalid values are rejected on read, not mangled
        np.testing.assert_array_equal(back.values, A)

    def test_header_name_defaults_to_stem(self, tmp_path):
        path = tmp_path / "stem.km"
        path.write_text("n 1 name \n2\n")
        assert lio.read_kernel(path).name == "stem"

    @pytest.mark.parametrize("text, msg", [
        ("", "empty"),
        ("size 2\n1 0\n0 1\n", "header"),
        ("n two name a\n1\n", "bad value"),
        ("n 2 name a\n1 0\n", "promises 2 rows"),
        ("n 2 name a\n1 0\n0 1 3\n", "row 2 has 3 values"),
        ("n 2 name a\n1 x\n0 1\n", "not numeric"),
    ])
    def test_malformed_text(self, tmp_path, text, msg):
        path = tmp_path / "bad.km"
        path.write_text(text)
        with pytest.raises(FormatError, match=msg):
            lio.read_kernel(path)

    def test_malformed_binary(self, tmp_path):
        path = tmp_path / "bad.kmb"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 8)
        with pytest.raises(FormatError, match="magic"):
            lio.read_kernel(path)
        lio.write_kernel(path, np.eye(2))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="size"):
            lio.read_kernel(path)

    def test_invalid_kernel_names_file(self, tmp_path):
        path = tmp_path / "asym.km"
        path.write_text("n 2 name a\n1 2\n0 1\n")
        with pytest.raises(ValidationError, match="asym.km"):
            lio.read_kernel(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="cannot read"):
            lio.read_kernel(tmp_path / "nope.km")

    def test_write_non_square(self, tmp_path):
        with pytest.raises(ValidationError):
            lio.write_kernel(tmp_path / "x.km", np.ones((2, 3)))


class TestKernelRows:
    @pytest.mark.parametrize("suffix", [".km", ".kmb"])
    def test_round_trip(self, tmp_path, suffix):
        R = np.random.default_rng(1).standard_normal((4, 9)) / 3
        path = tmp_path / f"rows{suffix}"
        lio.write_kernel_rows(path, R, name="k0")
        back, name = lio.read_kernel_rows(path)
        assert back.tobytes() == R.tobytes()
        assert name == ("k0" if suffix == ".km" else "rows")

    def test_non_finite(self, tmp_path):
        path = tmp_path / "r.km"
        path.write_text("rows 1 cols 2 name r\n1 nan\n")
        with pytest.raises(FormatError, match="non-finite"):
            lio.read_kernel_rows(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "r.kmb"
        lio.write_kernel(path, np.eye(2))
        with pytest.raises(FormatError, match="magic"):
            lio.read_kernel_rows(path)


class TestLabels:
    def test_round_trip(self, tmp_path):
        y = np.array([1.0, -1.0, -1.0, 1.0])
        lio.write_labels(tmp_path / "y.txt", y)
        np.testing.assert_array_equal(lio.read_labels(tmp_path / "y.txt"), y)

    def test_accepts_plus_sign_and_floats(self, tmp_path):
        (tmp_path / "y.txt").write_text("+1 -1.0\n1\n")
        np.testing.assert_array_equal(lio.read_labels(tmp_path / "y.txt"), [1, -1, 1])

    @pytest.mark.parametrize("text, msg", [("1 0\n", "label 2"), ("1 a\n", "not a number"),
                                           ("\n", "no labels")])
    def test_invalid(self, tmp_path, text, msg):
        (tmp_path / "y.txt").write_text(text)
        with pytest.raises(FormatError, match=msg):
            lio.read_labels(tmp_path / "y.txt")


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((20, 2))
    stack = KernelStack([rbf_kernel(X, 1.0, name="a"), rbf_kernel(X, 4.0, name="b")])
    y = balanced_labels(rng, 20)
    return stack, y, train(stack, y, MklConfig(p=4 / 3, C=2.0))


class TestModelFiles:
    def test_round_trip_bit_exact(self, tmp_path, trained):
        stack, y, model = trained
        lio.write_model(tmp_path / "m.mkl", model, kernel_names=["a", "b"])
        back, names = lio.read_model(tmp_path / "m.mkl")
        assert names == ["a", "b"]
        assert back.theta.tobytes() == model.theta.tobytes()
        assert back.alpha.tobytes() == model.alpha.tobytes()
        assert back.bias == model.bias
        assert back.config.p == model.config.p and back.config.C == 2.0
        np.testing.assert_array_equal(predict(back, stack.values), predict(model, stack.values))

    def test_format_is_stable(self, trained):
        _, _, model = trained
        text = lio.format_model(model)
        assert text.splitlines()[0] == "p %.17g" % (4 / 3)
        assert [ln.split()[0] for ln in text.splitlines()] == \
            ["p", "C", "b", "theta", "alpha", "support"]

    def test_inf_and_q_block(self, tmp_path):
        m = MklModel(np.ones(2), np.array([0.5, -0.5]), 0.1, MklConfig(p=P_INF))
        lio.write_model(tmp_path / "inf.mkl", m)
        back, names = lio.read_model(tmp_path / "inf.mkl")
        assert math.isinf(back.config.p) and names is None
        m = MklModel(np.ones(2), np.array([0.5, -0.5]), 0.0, MklConfig(p=None, q_block=3.0))
        lio.write_model(tmp_path / "q.mkl", m)
        assert lio.read_model(tmp_path / "q.mkl")[0].config.q_block == 3.0

    @pytest.mark.parametrize("edit, msg", [
        (lambda s: s.replace("C ", "Cost "), "missing 'C'"),
        (lambda s: "q_block 3\n" + s, "exactly one"),
        (lambda s: s.replace("support 0 1", "support 0"), "support line"),
        (lambda s: s.replace("b 0.10000000000000001", "b 1 2"), "one value"),
        (lambda s: s.replace("b 0.10000000000000001", "b x"), "could not convert"),
        (lambda s: s + "kernels a\n", "1 kernel names"),
    ])
    def test_malformed(self, tmp_path, edit, msg):
        m = MklModel(np.ones(2), np.array([0.5, -0.5]), 0.1, MklConfig(p=2.0))
        path = tmp_path / "m.mkl"
        path.write_text(edit(lio.format_model(m)))
        with pytest.raises(FormatError, match=msg):
            lio.read_model(path)

    def test_names_with_spaces_rejected(self):
        m = MklModel(np.ones(1), np.array([0.5, -0.5]), 0.0, MklConfig(p=2.0))
        with pytest.raises(ValidationError):
            lio.format_model(m, ["a b"])


class TestJson:
    def test_special_values(self):
        obj = {"a": np.float64(np.inf), "b": [np.nan, 1], "c": np.arange(2), 3: (1.5,)}
        assert json.loads(lio.dumps_json(obj)) == {"a": "inf", "b": [None, 1], "c": [0, 1],
                                                   "3": [1.5]}

    def test_training_report(self, tmp_path, trained):
        _, _, model = trained
        lio.write_json(tmp_path / "r.json", model.report.to_dict())
        data = json.loads((tmp_path / "r.json").read_text())
        assert data["outer_iterations"] == model.report.outer_iterations

"""File formats: kernel matrices, test-kernel rows, labels, models, reports.

Text kernel files start with ``n <n> name <label>`` followed by n rows of n
numbers. Files ending in ``.kmb`` use the binary layout: 8-byte magic,
little-endian u64 n, then n*n little-endian f64 values in row order.
Test-kernel rows (n_test x n_train) use ``rows <r> cols <c> name <label>``
in text and a second magic with two u64 sizes in binary.

Every writer goes through :func:`atomic_write`, so an interrupted run never
leaves a truncated file behind.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .kernels import KernelMatrix
from .mkl import MklConfig, MklModel, TrainingReport

KERNEL_MAGIC = b"LPMKLKM1"
ROWS_MAGIC = b"LPMKLKR1"
BINARY_SUFFIX = ".kmb"


class FormatError(ValidationError):
    """A file does not follow the expected layout."""


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc


def _fmt_rows(A: np.ndarray) -> str:
    return "".join(" ".join("%.17g" % v for v in row) + "\n" for row in A)


def _parse_header(line: str, keys: tuple, path) -> dict:
    tok = line.split()
    if len(tok) < 2 * len(keys) - 1 or any(tok[2 * i] != k for i, k in enumerate(keys)):
        layout = " ".join(f"{k} <{k}>" for k in keys)
        raise FormatError(f"{path}: header must read '{layout}', got {line.strip()!r}")
    out = {}
    for i, k in enumerate(keys):
        if k == "name":
            out[k] = " ".join(tok[2 * i + 1:])
            continue
        try:
            out[k] = int(tok[2 * i + 1])
        except ValueError:
            raise FormatError(f"{path}: bad value for {k!r} in header") from None
        if out[k] < 1:
            raise FormatError(f"{path}: {k} must be positive")
    return out


def _parse_body(lines, n_rows, n_cols, path) -> np.ndarray:
    body = [ln for ln in lines if ln.strip()]
    if len(body) != n_rows:
        raise FormatError(f"{path}: header promises {n_rows} rows, found {len(body)}")
    A = np.empty((n_rows, n_cols))
    for i, ln in enumerate(body):
        try:
            row = np.array(ln.split(), dtype=np.float64)
        except ValueError:
            raise FormatError(f"{path}: row {i + 1} is not numeric") from None
        if row.size != n_cols:
            raise FormatError(f"{path}: row {i + 1} has {row.size} values, expected {n_cols}")
        A[i] = row
    return A


def _default_name(path) -> str:
    return Path(path).stem


# ------------------------------------------------------------------ kernels

def write_kernel(path, K: KernelMatrix | np.ndarray, name: str | None = None) -> None:
    A = np.asarray(K, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"kernel must be square, got shape {A.shape}")
    if name is None:
        name = getattr(K, "name", None) or _default_name(path)
    if str(path).endswith(BINARY_SUFFIX):
        data = KERNEL_MAGIC + struct.pack("<Q", A.shape[0]) + A.astype("<f8").tobytes()
        atomic_write(path, data)
    else:
        atomic_write(path, f"n {A.shape[0]} name {name}\n" + _fmt_rows(A))


def read_kernel(path) -> KernelMatrix:
    raw = _read_bytes(path)
    if str(path).endswith(BINARY_SUFFIX):
        if raw[:8] != KERNEL_MAGIC or len(raw) < 16:
            raise FormatError(f"{path}: not a binary kernel file (bad magic)")
        (n,) = struct.unpack("<Q", raw[8:16])
        if len(raw) != 16 + 8 * n * n:
            raise FormatError(f"{path}: size does not match n={n}")
        A = np.frombuffer(raw, dtype="<f8", offset=16).reshape(n, n).astype(np.float64)
        name = _default_name(path)
    else:
        lines = raw.decode("utf-8").splitlines()
        if not lines:
            raise FormatError(f"{path}: empty file")
        h = _parse_header(lines[0], ("n", "name"), path)
        A = _parse_body(lines[1:], h["n"], h["n"], path)
        name = h["name"] or _default_name(path)
    try:
        return KernelMatrix(A, name)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_kernel_rows(path, R, name: str | None = None) -> None:
    A = np.asarray(R, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError("kernel rows must form a 2-d array")
    name = name or _default_name(path)
    if str(path).endswith(BINARY_SUFFIX):
        atomic_write(path, ROWS_MAGIC + struct.pack("<QQ", *A.shape) + A.astype("<f8").tobytes())
    else:
        atomic_write(path, f"rows {A.shape[0]} cols {A.shape[1]} name {name}\n" + _fmt_rows(A))


def read_kernel_rows(path) -> tuple[np.ndarray, str]:
    raw = _read_bytes(path)
    if str(path).endswith(BINARY_SUFFIX):
        if raw[:8] != ROWS_MAGIC or len(raw) < 24:
            raise FormatError(f"{path}: not a binary kernel-rows file (bad magic)")
        r, c = struct.unpack("<QQ", raw[8:24])
        if len(raw) != 24 + 8 * r * c:
            raise FormatError(f"{path}: size does not match {r}x{c}")
        A = np.frombuffer(raw, dtype="<f8", offset=24).reshape(r, c).astype(np.float64)
        name = _default_name(path)
    else:
        lines = raw.decode("utf-8").splitlines()
        if not lines:
            raise FormatError(f"{path}: empty file")
        h = _parse_header(lines[0], ("rows", "cols", "name"), path)
        A = _parse_body(lines[1:], h["rows"], h["cols"], path)
        name = h["name"] or _default_name(path)
    if not np.all(np.isfinite(A)):
        raise FormatError(f"{path}: non-finite entries")
    return A, name


# ------------------------------------------------------------------- labels

def read_labels(path) -> np.ndarray:
    text = _read_bytes(path).decode("utf-8")
    vals = []
    for i, tok in enumerate(text.split()):
        try:
            v = float(tok)
        except ValueError:
            raise FormatError(f"{path}: label {i + 1} ({tok!r}) is not a number") from None
        if v not in (1.0, -1.0):
            raise FormatError(f"{path}: label {i + 1} is {tok!r}, expected +1 or -1")
        vals.append(v)
    if not vals:
        raise FormatError(f"{path}: no labels")
    return np.array(vals)


def write_labels(path, y) -> None:
    atomic_write(path, "".join(f"{int(v):d}\n" for v in np.asarray(y)))


# ------------------------------------------------------------------- models

def _num(v: float) -> str:
    return "inf" if math.isinf(v) else "%.17g" % v


def format_model(model: MklModel, kernel_names=None) -> str:
    cfg = model.config
    lines = []
    if cfg.p is not None:
        lines.append(f"p {_num(cfg.p)}")
    else:
        lines.append(f"q_block {_num(cfg.q_block)}")
    lines += [f"C {_num(cfg.C)}", f"b {_num(model.bias)}",
              "theta " + " ".join(_num(t) for t in model.theta),
              "alpha " + " ".join(_num(a) for a in model.alpha),
              "support " + " ".join(str(i) for i in model.support)]
    if kernel_names is not None:
        names = list(kernel_names)
        if any(not n or any(ch.isspace() for ch in n) for n in names):
            raise ValidationError("kernel names written to a model file may not contain whitespace")
        lines.append("kernels " + " ".join(names))
    return "\n".join(lines) + "\n"


def write_model(path, model: MklModel, kernel_names=None) -> None:
    atomic_write(path, format_model(model, kernel_names))


def read_model(path) -> tuple[MklModel, list[str] | None]:
    """Return the model and the stored kernel names (``None`` if absent)."""
    fields = {}
    for ln in _read_bytes(path).decode("utf-8").splitlines():
        if not ln.strip():
            continue
        key, _, rest = ln.partition(" ")
        fields[key] = rest.split()
    for key in ("C", "b", "theta", "alpha"):
        if key not in fields:
            raise FormatError(f"{path}: missing '{key}' line")
    if ("p" in fields) == ("q_block" in fields):
        raise FormatError(f"{path}: need exactly one of 'p' and 'q_block'")

    def scalar(key):
        if len(fields[key]) != 1:
            raise FormatError(f"{path}: '{key}' needs one value")
        return float(fields[key][0])

    try:
        theta = np.array(fields["theta"], dtype=np.float64)
        alpha = np.array(fields["alpha"], dtype=np.float64)
        p = scalar("p") if "p" in fields else None
        q_block = scalar("q_block") if "q_block" in fields else None
        config = MklConfig(p=p, q_block=q_block, C=scalar("C"))
        bias = scalar("b")
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if "support" in fields:
        sv = np.array(fields["support"], dtype=np.int64)
        if not np.array_equal(sv, np.flatnonzero(alpha != 0)):
            raise FormatError(f"{path}: support line disagrees with alpha")
    names = fields.get("kernels")
    if names is not None and len(names) != len(theta):
        raise FormatError(f"{path}: {len(names)} kernel names for {len(theta)} weights")
    return MklModel(theta, alpha, bias, config, TrainingReport()), names


def to_jsonable(obj):
    """Recursively convert numpy values; infinities become "inf", NaN None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, dumps_json(obj))


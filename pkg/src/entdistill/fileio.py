"""JSON formats for matrices, instruments and reports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import EntDistillError, InvalidOperator
from .instruments import DilSubchannel, IsoSubchannel

HERMITIAN_READ_TOL = 1e-9


class ParseError(EntDistillError):
    pass


def matrix_to_obj(x, dims=None) -> dict:
    a = np.asarray(x, dtype=complex)
    if dims is None:
        d = a.shape[0]
        k = int(round(np.sqrt(d)))
        dims = (k, k) if k * k == d else (d, 1)
    return {"dim_a": int(dims[0]), "dim_b": int(dims[1]), "re": a.real.tolist(), "im": a.imag.tolist()}


def _grid(obj, key, d, where):
    rows = obj.get(key)
    if rows is None:
        if key == "im":
            return np.zeros((d, d))
        raise ParseError(f"{where}: missing field {key!r}")
    if not isinstance(rows, list) or len(rows) != d:
        raise ParseError(f"{where}: {key} must have {d} rows, found {len(rows) if isinstance(rows, list) else type(rows).__name__}")
    out = np.empty((d, d))
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != d:
            n = len(row) if isinstance(row, list) else type(row).__name__
            raise ParseError(f"{where}: {key} row {i} must have {d} entries, found {n}")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(f"{where}: {key}[{i}][{j}] is not a number: {v!r}")
            out[i, j] = v
    return out


def matrix_from_obj(obj, where: str = "matrix") -> tuple[np.ndarray, tuple[int, int]]:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    try:
        da, db = int(obj["dim_a"]), int(obj["dim_b"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad or missing dim_a/dim_b ({exc})") from None
    if da < 1 or db < 1:
        raise ParseError(f"{where}: dimensions must be positive")
    d = da * db
    a = _grid(obj, "re", d, where) + 1j * _grid(obj, "im", d, where)
    dev = np.abs(a - a.conj().T)
    if dev.max() > HERMITIAN_READ_TOL:
        i, j = np.unravel_index(np.argmax(dev), dev.shape)
        raise InvalidOperator(f"{where}: not Hermitian at row {i}, col {j} (deviation {dev[i, j]:.3e})")
    return (a + a.conj().T) / 2, (da, db)


def _load_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def read_matrix(path) -> tuple[np.ndarray, tuple[int, int]]:
    return matrix_from_obj(_load_json(path), str(path))


def write_matrix(path, x, dims=None):
    Path(path).write_text(json.dumps(matrix_to_obj(x, dims)))


_OPS = {"iso": ("M", "N"), "dil": ("gamma", "delta")}


def instrument_to_obj(s) -> dict:
    if isinstance(s, IsoSubchannel):
        return {"kind": "iso", "m": s.m, "ops": {"M": matrix_to_obj(s.m_op, s.dims), "N": matrix_to_obj(s.n_op, s.dims)}}
    if isinstance(s, DilSubchannel):
        return {
            "kind": "dil",
            "m": s.m,
            "ops": {"gamma": matrix_to_obj(s.gamma, s.dims), "delta": matrix_to_obj(s.delta, s.dims)},
        }
    raise TypeError(f"not an instrument: {type(s).__name__}")


def instrument_from_obj(obj, where: str = "instrument"):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    kind = obj.get("kind")
    if kind not in _OPS:
        raise ParseError(f"{where}: kind must be 'iso' or 'dil', got {kind!r}")
    m = obj.get("m")
    if isinstance(m, bool) or not isinstance(m, int):
        raise ParseError(f"{where}: m must be an integer")
    ops = obj.get("ops")
    if not isinstance(ops, dict):
        raise ParseError(f"{where}: missing ops")
    mats = []
    dims = None
    for name in _OPS[kind]:
        if name not in ops:
            raise ParseError(f"{where}: missing operator {name!r}")
        x, dims = matrix_from_obj(ops[name], f"{where}.ops.{name}")
        mats.append(x)
    cls = IsoSubchannel if kind == "iso" else DilSubchannel
    return cls(m, mats[0], mats[1], dims)


def read_instrument(path):
    return instrument_from_obj(_load_json(path), str(path))


def write_instrument(path, s):
    Path(path).write_text(json.dumps(instrument_to_obj(s)))


def to_jsonable(obj):
    """Best-effort conversion of reports and certificates to JSON values."""
    if isinstance(obj, (str, bool, int)) or obj is None:
        return obj
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else ("inf" if obj > 0 else "-inf" if obj < 0 else "nan")
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
        return [to_jsonable(v) for v in obj.tolist()] if obj.ndim else to_jsonable(obj.item())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        out = {"type": type(obj).__name__}
        for k in obj.__dataclass_fields__:
            out[k] = to_jsonable(getattr(obj, k))
        return out
    return str(obj)

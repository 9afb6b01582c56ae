"""JSON Lines serialization of iteration traces.

One object per record with exactly the :class:`StepRecord` field names,
followed by a trailer object ``{"termination": ..., "run": {...}}``. Floats
are written with 17 significant digits so doubles round-trip exactly;
``None`` becomes ``null`` and infinities ``Infinity``/``-Infinity``.
"""

import json
import math
import os
import tempfile

from .errors import TraceFormatError
from .solver import RECORD_FIELDS, TERMINATIONS, IterationTrace, StepRecord

__all__ = ["dumps", "loads", "write_trace", "read_trace", "atomic_write"]


def _num(v):
    if v is None:
        return "null"
    if isinstance(v, bool):
        raise TypeError("booleans are not trace values")
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%.17g" % v


def _value(v):
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_num(x) for x in v) + "]"
    return _num(v)


def _record_line(rec):
    parts = [f'"{name}": {_value(getattr(rec, name))}' for name in RECORD_FIELDS]
    return "{" + ", ".join(parts) + "}"


def dumps(trace, run=None):
    """Serialize ``trace`` (and optionally the run settings) to JSONL text."""
    lines = [_record_line(rec) for rec in trace.records]
    trailer = {"termination": trace.termination}
    if run is not None:
        trailer["run"] = run
    lines.append(json.dumps(trailer, sort_keys=True))
    return "\n".join(lines) + "\n"


def _record(obj, lineno):
    if not isinstance(obj, dict):
        raise TraceFormatError(f"line {lineno}: expected an object")
    keys = set(obj)
    if keys != set(RECORD_FIELDS):
        missing = set(RECORD_FIELDS) - keys
        extra = keys - set(RECORD_FIELDS)
        raise TraceFormatError(
            f"line {lineno}: bad keys (missing {sorted(missing)}, unexpected {sorted(extra)})"
        )
    x = obj["x_k"]
    if not isinstance(x, list) or not all(isinstance(v, (int, float)) for v in x):
        raise TraceFormatError(f"line {lineno}: x_k must be a list of numbers")
    if not isinstance(obj["k"], int):
        raise TraceFormatError(f"line {lineno}: k must be an integer")
    vals = {}
    for name in RECORD_FIELDS:
        v = obj[name]
        if name == "x_k":
            v = tuple(float(t) for t in v)
        elif name != "k" and v is not None:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise TraceFormatError(f"line {lineno}: {name} must be a number or null")
            v = float(v)
        vals[name] = v
    return StepRecord(**vals)


def loads(text):
    """Parse JSONL text into ``(IterationTrace, run_dict_or_None)``.

    Raises
    ------
    TraceFormatError
        On malformed JSON, unknown keys, a missing trailer or out-of-order records.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace")
    objs = []
    for i, ln in enumerate(lines, 1):
        try:
            objs.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"line {i}: {exc}") from None
    trailer = objs[-1]
    if not isinstance(trailer, dict) or "termination" not in trailer:
        raise TraceFormatError("missing trailer line with termination")
    if set(trailer) - {"termination", "run"}:
        raise TraceFormatError(f"unexpected trailer keys {sorted(set(trailer))}")
    if trailer["termination"] not in TERMINATIONS:
        raise TraceFormatError(f"unknown termination {trailer['termination']!r}")
    records = [_record(o, i) for i, o in enumerate(objs[:-1], 1)]
    if not records:
        raise TraceFormatError("trace has no records")
    for i, rec in enumerate(records):
        if rec.k != i:
            raise TraceFormatError(f"record {i} has k = {rec.k}")
    return IterationTrace(records, trailer["termination"]), trailer.get("run")


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace(path, trace, run=None):
    atomic_write(path, dumps(trace, run))


def read_trace(path):
    with open(path) as fh:
        return loads(fh.read())

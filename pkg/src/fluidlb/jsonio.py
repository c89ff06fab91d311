"""JSON emission with floats at 17 significant digits (lossless round-trip)."""

from __future__ import annotations

import math


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int | None = None) -> str:
    out: list[str] = []
    _emit(obj, out, indent, 0)
    return "".join(out)


def _emit(obj, out: list[str], indent, depth) -> None:
    pad = "" if indent is None else "\n" + " " * (indent * (depth + 1))
    end_pad = "" if indent is None else "\n" + " " * (indent * depth)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(_escape(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for n, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {type(k)}")
            out.append(("," if n else "") + pad)
            out.append(_escape(k))
            out.append(": " if indent is not None else ":")
            _emit(v, out, indent, depth + 1)
        out.append(end_pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not len(obj):
            out.append("[]")
            return
        out.append("[")
        for n, v in enumerate(obj):
            out.append(("," if n else "") + pad)
            _emit(v, out, indent, depth + 1)
        out.append(end_pad + "]")
    elif hasattr(obj, "item"):  # numpy scalar
        _emit(obj.item(), out, indent, depth)
    elif hasattr(obj, "tolist"):  # numpy array
        _emit(obj.tolist(), out, indent, depth)
    else:
        raise TypeError(f"cannot serialize {type(obj)}")


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dump_path(obj, path, indent: int | None = 2) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=indent))
        fh.write("\n")

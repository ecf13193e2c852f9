# app/services/output.py
from __future__ import annotations
import csv
import io
import json
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from typing import Any, Dict, Optional

from mpmath import matrix, mp, mpc, mpf
from pydantic import BaseModel

from app import __version__
from app.services.numeric import digits

TOOL_NAME = "naesat"
FORMATS = ("json", "csv", "text")


def to_plain(value: Any, dps: int) -> Any:
    """mpf -> десятичная строка на полной точности, Fraction -> "p/q"; остальное без потерь."""
    if isinstance(value, BaseModel):
        return to_plain(value.model_dump(), dps)
    if is_dataclass(value) and not isinstance(value, type):
        return to_plain(asdict(value), dps)
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return value
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, (mpf, mpc)):
        return mp.nstr(value, dps)
    if isinstance(value, matrix):
        return [[to_plain(value[i, j], dps) for j in range(value.cols)] for i in range(value.rows)]
    if isinstance(value, dict):
        return {str(k): to_plain(v, dps) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v, dps) for v in value]
    return str(value)


def envelope(verb: str, params: Dict[str, Any], result: Any, bits: Optional[int]) -> Dict[str, Any]:
    dps = digits(bits) if bits else 30
    precision: Dict[str, Any] = (
        {"bits": bits, "digits": dps} if bits else {"bits": None, "digits": None, "arithmetic": "exact"}
    )
    return {
        "schema_id": f"naesat.{verb}.v1",
        "tool": {"name": TOOL_NAME, "version": __version__, "build": f"v{__version__}"},
        "params": to_plain(params, dps),
        "precision": precision,
        "result": to_plain(result, dps),
    }


def _cell(value: Any) -> str:
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False, separators=(",", ":"))
    if value is None:
        return ""
    return str(value)


def render(doc: Dict[str, Any], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
    result = doc["result"]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        rows = result.get("rows") if isinstance(result, dict) else None
        if rows:
            header = list(rows[0].keys())
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(row.get(h)) for h in header])
        else:
            writer.writerow(["key", "value"])
            for key, value in (result.items() if isinstance(result, dict) else [("result", result)]):
                writer.writerow([key, _cell(value)])
        return buf.getvalue()
    if fmt == "text":
        lines = [f"# {doc['schema_id']} {doc['tool']['build']}"]
        items = result.items() if isinstance(result, dict) else [("result", result)]
        lines += [f"{key} = {_cell(value)}" for key, value in items]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")

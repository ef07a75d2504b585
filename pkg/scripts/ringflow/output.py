from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from .constants import FLOAT_FORMAT


def round_float(value: float) -> float:
    return float(FLOAT_FORMAT % value)


def rounded(payload: Any) -> Any:
    if isinstance(payload, dict):
        return {key: rounded(value) for key, value in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [rounded(value) for value in payload]
    if isinstance(payload, np.ndarray):
        return rounded(payload.tolist())
    if isinstance(payload, (np.integer,)):
        return int(payload)
    if isinstance(payload, (float, np.floating)):
        value = float(payload)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return round_float(value)
    return payload


def to_json_line(payload: Any) -> str:
    return json.dumps(rounded(payload), sort_keys=False, separators=(",", ":"))


def write_atomic(path: Union[str, Path], content: str) -> Path:
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(content)
        os.replace(temp_name, target)
    except Exception:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    logging.info("Wrote %s", target)
    return target


def write_json(path: Union[str, Path], payload: Any) -> Path:
    return write_atomic(path, json.dumps(rounded(payload), indent=2) + "\n")


def write_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    return write_atomic(path, text)


def artifact_path(prefix: Union[str, Path], suffix: str) -> Path:
    prefix = Path(prefix)
    return prefix.with_name(f"{prefix.name}_{suffix}")


__all__ = [
    "artifact_path",
    "round_float",
    "rounded",
    "to_json_line",
    "write_atomic",
    "write_csv",
    "write_json",
]

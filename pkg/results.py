"""
CSV and JSON artifacts.

Every file carries the resolved run configuration and the lab version, so a
rerun with the same configuration reproduces it byte for byte.
"""
import csv
import io
import json
import sys
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from config import __version__


def to_plain(value: Any) -> Any:
    """Recursively convert numpy, pydantic, dataclass and enum values to JSON types."""
    if hasattr(value, "to_dict"):
        return to_plain(value.to_dict())
    if isinstance(value, BaseModel):
        return to_plain(value.model_dump(mode="json"))
    if is_dataclass(value) and not isinstance(value, type):
        return to_plain(asdict(value))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _cell(value: Any) -> str:
    value = to_plain(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return json.dumps(value)
    return "" if value is None else str(value)


def _emit(path: Optional[Path], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_csv(path: Optional[Path], columns: Sequence[str], rows: Iterable[Sequence[Any]],
              run_config: Any) -> None:
    """CSV with the run configuration and version as leading '#' comment lines."""
    buffer = io.StringIO()
    buffer.write(f"# asymflat {__version__}\n")
    buffer.write(f"# run_config: {json.dumps(to_plain(run_config), sort_keys=True)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    _emit(path, buffer.getvalue())


def write_json(path: Optional[Path], payload: Any, run_config: Any) -> None:
    document = {
        "version": __version__,
        "run_config": to_plain(run_config),
        "result": to_plain(payload),
    }
    _emit(path, json.dumps(document, indent=2, sort_keys=True, allow_nan=True) + "\n")


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))

# utils/formatter.py
import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

# Display precision per column; anything else is written at full precision.
CAPACITY_DIGITS = 2
EPSILON_DIGITS = 3

COLUMN_DIGITS: Dict[str, int] = {
    "avg_capacity": CAPACITY_DIGITS,
    "max_capacity": CAPACITY_DIGITS,
    "capacity": CAPACITY_DIGITS,
    "bound": CAPACITY_DIGITS,
    "leakage": CAPACITY_DIGITS,
    "increase_percent": CAPACITY_DIGITS,
    "epsilon": EPSILON_DIGITS,
}
# Shown as signed percentages in text tables.
PERCENT_COLUMNS = {"increase_percent"}


def format_number(value: Any, digits: int = CAPACITY_DIGITS) -> str:
    if value is None:
        return "N/A"
    try:
        num = float(value)
        if math.isnan(num):
            return "N/A"
        if math.isinf(num):
            return "inf" if num > 0 else "-inf"
        return f"{num:,.{digits}f}"
    except (ValueError, TypeError):
        return "N/A"


def format_percent(value: Any) -> str:
    if value is None:
        return "N/A"
    try:
        val = float(value)
        if math.isnan(val):
            return "N/A"
        sign = "+" if val > 0 else ""
        return f"{sign}{val:.2f}%"
    except (ValueError, TypeError):
        return "N/A"


def _plain(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {k: _plain(v) for k, v in dataclasses.asdict(value).items()}
    if hasattr(value, "model_dump"):
        return _plain(value.model_dump())
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else str(value)
    return value


def rows_to_records(rows: Iterable[Any]) -> List[Dict[str, Any]]:
    return [_plain(row) for row in rows]


def rows_to_frame(rows: Iterable[Any], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    frame = pd.DataFrame(rows_to_records(rows))
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    return frame


def display_frame(frame: pd.DataFrame, digits: Optional[Mapping[str, int]] = None) -> pd.DataFrame:
    """Rounds known columns to their display precision."""
    digits = COLUMN_DIGITS if digits is None else digits
    shown = frame.copy()
    for column, places in digits.items():
        if column in shown.columns and pd.api.types.is_numeric_dtype(shown[column]):
            shown[column] = shown[column].round(places)
    return shown


def render_csv(rows: Iterable[Any], columns: Optional[Sequence[str]] = None) -> str:
    return display_frame(rows_to_frame(rows, columns)).to_csv(index=False)


def render_json(payload: Any) -> str:
    return json.dumps(_plain(payload), indent=2)


def render_text_table(rows: Iterable[Any], columns: Optional[Sequence[str]] = None) -> str:
    frame = rows_to_frame(rows, columns)
    if frame.empty:
        return "(no rows)"
    formatted = frame.copy().astype(object)
    for column in frame.columns:
        places = COLUMN_DIGITS.get(column)
        if column in PERCENT_COLUMNS:
            formatted[column] = [format_percent(v) for v in frame[column]]
        elif places is not None:
            formatted[column] = [format_number(v, places) for v in frame[column]]
    return formatted.to_string(index=False)


def render(rows: Iterable[Any], fmt: str, columns: Optional[Sequence[str]] = None) -> str:
    rows = list(rows)
    if fmt == "json":
        return render_json(rows)
    if fmt == "table":
        return render_text_table(rows, columns)
    return render_csv(rows, columns)


def emit(text: str, out: Optional[Path] = None, name: Optional[str] = None) -> Optional[Path]:
    """Writes to `out` (a directory when `name` is given) or returns None so the caller prints."""
    if out is None:
        return None
    path = Path(out)
    if name is not None:
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    return path

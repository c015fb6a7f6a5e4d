# utils/serialization.py
import io
import json
from typing import Any, Dict, List, Sequence, Union

import pandas as pd

from services.qif import Channel, GainMatrix, Label, Prior, make_channel, make_gain, make_prior
from utils.errors import MalformedCsv

# Composite (tuple) labels are written as their parts joined by this separator in CSV.
CSV_LABEL_SEPARATOR = "|"


def _encode_label(label: Label) -> Any:
    if isinstance(label, tuple):
        return [_encode_label(part) for part in label]
    return label


def _decode_label(value: Any) -> Label:
    if isinstance(value, list):
        return tuple(_decode_label(part) for part in value)
    return value


def _labels_to_json(labels: Sequence[Label]) -> List[Any]:
    return [_encode_label(label) for label in labels]


def _labels_from_json(values: Sequence[Any]) -> List[Label]:
    return [_decode_label(value) for value in values]


def to_document(value: Union[Channel, Prior, GainMatrix]) -> Dict[str, Any]:
    if isinstance(value, Channel):
        return {
            "kind": "channel",
            "rows": _labels_to_json(value.row_labels),
            "cols": _labels_to_json(value.col_labels),
            "entries": value.entries.tolist(),
        }
    if isinstance(value, GainMatrix):
        return {
            "kind": "gain",
            "rows": _labels_to_json(value.action_labels),
            "cols": _labels_to_json(value.secret_labels),
            "entries": value.gains.tolist(),
        }
    if isinstance(value, Prior):
        return {
            "kind": "prior",
            "rows": _labels_to_json(value.labels),
            "cols": ["probability"],
            "entries": [[p] for p in value.probs.tolist()],
        }
    raise TypeError(f"cannot serialize {type(value).__name__}")


def from_document(doc: Dict[str, Any]) -> Union[Channel, Prior, GainMatrix]:
    kind = doc.get("kind", "channel")
    rows = _labels_from_json(doc["rows"])
    entries = doc["entries"]
    if kind == "prior":
        return make_prior(rows, [row[0] if isinstance(row, list) else row for row in entries])
    cols = _labels_from_json(doc["cols"])
    if kind == "gain":
        return make_gain(rows, cols, entries)
    return make_channel(rows, cols, entries)


def dumps(value: Union[Channel, Prior, GainMatrix], indent: int = 2) -> str:
    return json.dumps(to_document(value), indent=indent)


def loads(text: str) -> Union[Channel, Prior, GainMatrix]:
    return from_document(json.loads(text))


def _csv_label(label: Label) -> str:
    if isinstance(label, tuple):
        return CSV_LABEL_SEPARATOR.join(_csv_label(part) for part in label)
    return str(label)


def _parse_csv_label(text: str) -> Label:
    if CSV_LABEL_SEPARATOR in text:
        return tuple(text.split(CSV_LABEL_SEPARATOR))
    return text


def channel_to_frame(channel: Channel) -> pd.DataFrame:
    return pd.DataFrame(
        channel.entries,
        index=[_csv_label(x) for x in channel.row_labels],
        columns=[_csv_label(y) for y in channel.col_labels],
    )


def channel_to_csv(channel: Channel) -> str:
    buffer = io.StringIO()
    channel_to_frame(channel).to_csv(buffer, float_format="%.17g")
    return buffer.getvalue()


def channel_from_csv(text: str) -> Channel:
    try:
        frame = pd.read_csv(io.StringIO(text), index_col=0, dtype=str, keep_default_na=False)
        entries = frame.astype(float).to_numpy()
    except (ValueError, pd.errors.ParserError) as e:
        raise MalformedCsv(f"cannot read channel CSV: {e}") from e
    rows = [_parse_csv_label(str(x)) for x in frame.index]
    cols = [_parse_csv_label(str(y)) for y in frame.columns]
    return make_channel(rows, cols, entries)

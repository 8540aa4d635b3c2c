"""
CSV and JSON result artifacts.

Every CSV opens with ``# key: value`` lines carrying the config hash and the
seed. Floats are written with 17 significant digits so that reruns with the
same config and seed are byte-identical.
"""
import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

from palmbar.repositories.base import BaseArtifactRepository

Cell = Union[str, int, float, bool, None]


def format_number(value: Cell) -> str:
    """Fixed textual form of one cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def header_lines(header: Mapping[str, Any]) -> List[str]:
    return [f"# {key}: {header[key]}" for key in header]


def render_csv(columns: Sequence[str], rows: Sequence[Sequence[Cell]], header: Mapping[str, Any]) -> str:
    """The complete CSV text, header comments included."""
    buffer = io.StringIO()
    for line in header_lines(header):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells for {len(columns)} columns")
        writer.writerow([format_number(cell) for cell in row])
    return buffer.getvalue()


def _jsonable(value: Any) -> Any:
    """Dict keys become strings and non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return format_number(value)
    return value


def render_json(payload: Mapping[str, Any]) -> str:
    return json.dumps(_jsonable(dict(payload)), sort_keys=True, indent=2) + "\n"


class ArtifactRepository(BaseArtifactRepository):
    """Result tables as CSV and summaries as JSON."""

    def __init__(self, root: Union[str, Path], header: Mapping[str, Any]):
        super().__init__(root)
        self.header: Dict[str, Any] = dict(header)

    def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Sequence[Cell]]) -> Path:
        return self.write_text(name, render_csv(columns, rows, self.header))

    def write_json(self, name: str, payload: Mapping[str, Any]) -> Path:
        return self.write_text(name, render_json({**payload, "provenance": self.header}))

"""
Plot-ready CSV emission.

Every file opens with one metadata comment line, then the header row. Floats use
the shortest round-trip representation, so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from complexity_engine.bounds import CappedValue, SampleCount

logger = logging.getLogger(__name__)

TOOL_NAME = "pi-complexity"
TOOL_VERSION = "0.1.0"


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, (CappedValue, SampleCount)):
        return str(value)
    return str(value)


def metadata_line(metadata: Mapping[str, Any]) -> str:
    fields = [f"{key}={format_value(value)}" for key, value in metadata.items()]
    fields.append(f"version={TOOL_NAME}/{TOOL_VERSION}")
    return "# " + " ".join(fields)


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    metadata: Mapping[str, Any],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(metadata_line(metadata) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info("Wrote %d rows to %s", count, path)
    return path


def read_csv(path: str | Path) -> tuple[str, list[dict[str, str]]]:
    """(metadata line, rows as dicts); used by tests and downstream plotting."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        meta = fh.readline().rstrip("\n")
        return meta, list(csv.DictReader(fh))

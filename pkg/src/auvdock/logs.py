"""CSV/JSON helpers for run directories and episode logs."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _plain(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _cell(v):
    v = _plain(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))
    if isinstance(v, bool):
        return int(v)
    return "" if v is None else v


def write_csv(path, rows: list[dict], columns=None) -> None:
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def append_csv(path, row: dict, columns) -> None:
    """Append one row, writing the header first if the file is new."""
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(columns)
        w.writerow([_cell(row.get(c)) for c in columns])


def read_csv(path) -> list[dict]:
    """Rows as dicts, numeric-looking cells converted to float."""
    def conv(s):
        if s == "":
            return None
        try:
            return float(s)
        except ValueError:
            return s

    with Path(path).open(newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_plain, sort_keys=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_episode(directory, index: int, episode: dict, sidecar: dict) -> Path:
    """Write ``episode_NNNN.csv`` (the step rows) and its ``.json`` sidecar.

    The sidecar holds everything needed to re-simulate the episode: its
    seed, the package version and the resolved config text, plus the
    episode summary and any caller-supplied fields.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = directory / f"episode_{index:04d}"
    write_csv(stem.with_suffix(".csv"), episode.get("log", []))
    summary = {k: v for k, v in episode.items() if k != "log"}
    write_json(stem.with_suffix(".json"), {**summary, **sidecar})
    return stem.with_suffix(".csv")

"""CSV and manifest writers with byte-stable formatting."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from . import __version__
from .config import ScenarioConfig


def fmt(value) -> str:
    """9 significant digits for floats, plain ``str`` for everything else."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        out = format(value, ".9g")
        return "0" if out == "-0" else out
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, command: str, cfg: ScenarioConfig | None = None, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "version": __version__}
    if cfg is not None:
        doc["config"] = cfg.to_dict()
        doc["config_digest"] = cfg.digest()
        doc["master_seed"] = cfg.master_seed
    doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")

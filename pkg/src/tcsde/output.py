"""CSV writing with provenance headers and atomic replacement."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

from . import __version__

OUTPUT_DIR_ENV = "TCSDE_OUTPUT_DIR"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "tcsde-out"))


def fmt(value) -> str:
    # 17 significant digits round-trip every float64 exactly
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def header_lines(config: dict) -> list[str]:
    return [
        f"# tcsde {__version__}",
        "# config: " + json.dumps(config, sort_keys=True, default=str),
    ]


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, columns, rows, config: dict) -> Path:
    buf = io.StringIO()
    for line in header_lines(config):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())
    return Path(path)


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    """Read a file written by :func:`write_csv`, skipping comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]

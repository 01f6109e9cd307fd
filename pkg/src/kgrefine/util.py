"""Small shared helpers: atomic writes and TSV parsing."""

import json
import os
import tempfile

from .errors import ParseError


def write_atomic(path, text: str) -> None:
    """Write text to path atomically (temp file in the same dir + rename)."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_tsv(path, n_cols: int):
    """Yield (lineno, columns) for each data row of a TSV file.

    Lines starting with '#' and blank lines are skipped.  A row with the
    wrong number of columns raises ParseError with the offending line.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != n_cols:
                raise ParseError(
                    f"{path}:{lineno}: expected {n_cols} tab-separated columns, got {len(cols)}"
                )
            yield lineno, cols


def parse_unit_float(text: str, path, lineno: int, what: str) -> float:
    """Parse a float that must lie in [0, 1]."""
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: {what} is not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise ParseError(f"{path}:{lineno}: {what} {value} outside [0, 1]")
    return value

"""Byte-stable CSV persistence for experiment metrics.

The file format is deliberately rigid: a fixed header, LF line endings,
RFC-4180 quoting, and floats printed as their shortest round-trip
decimal. Two runs that produce equal rows produce equal bytes, which is
what makes determinism checkable with a plain file compare.
"""

import os
import tempfile
from dataclasses import dataclass
from typing import Optional

from .errors import CsvFormatError, DataError

HEADER = "run,algo,iter,objective,stationarity,clean_err,attack,eps,adv_err,ms"
_COLUMNS = HEADER.split(",")


@dataclass(frozen=True)
class MetricsRow:
    run: str
    algo: str
    iteration: int
    objective: Optional[float] = None
    stationarity: Optional[float] = None
    clean_err: Optional[float] = None
    attack: str = "none"
    eps: float = 0.0
    adv_err: Optional[float] = None
    ms: int = 0


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        raise DataError("booleans have no CSV representation here")
    if isinstance(value, float):
        text = repr(value)
    else:
        text = str(value)
    if any(ch in text for ch in ',"\n\r'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def _format_row(row):
    cells = [row.run, row.algo, row.iteration, row.objective, row.stationarity,
             row.clean_err, row.attack, row.eps, row.adv_err, row.ms]
    return ",".join(_cell(c) for c in cells)


def write_metrics(rows, path):
    """Atomically write rows to path (temp file in place, then rename)."""
    last_iter = {}
    for row in rows:
        prev = last_iter.get((row.run, row.algo))
        if prev is not None and row.iteration < prev:
            raise DataError(
                "iterations must be monotone within run %r/%s (%d after %d)"
                % (row.run, row.algo, row.iteration, prev))
        last_iter[(row.run, row.algo)] = row.iteration

    body = HEADER + "\n" + "".join(_format_row(r) + "\n" for r in rows)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".metrics-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_cells(line, lineno, path):
    cells = []
    current = []
    quoted = False
    i = 0
    while i < len(line):
        ch = line[i]
        if quoted:
            if ch == '"':
                if i + 1 < len(line) and line[i + 1] == '"':
                    current.append('"')
                    i += 1
                else:
                    quoted = False
            else:
                current.append(ch)
        elif ch == '"':
            quoted = True
        elif ch == ",":
            cells.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    if quoted:
        raise CsvFormatError("%s:%d: unterminated quote" % (path, lineno))
    cells.append("".join(current))
    return cells


def read_metrics(path):
    """Parse a metrics file back into MetricsRow objects."""
    with open(path, newline="") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != HEADER:
        raise CsvFormatError("%s: missing metrics header" % path)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        cells = _parse_cells(line, lineno, path)
        if len(cells) != len(_COLUMNS):
            raise CsvFormatError(
                "%s:%d: %d cells, expected %d"
                % (path, lineno, len(cells), len(_COLUMNS)))

        def opt_float(text):
            return None if text == "" else float(text)

        rows.append(MetricsRow(
            run=cells[0], algo=cells[1], iteration=int(cells[2]),
            objective=opt_float(cells[3]), stationarity=opt_float(cells[4]),
            clean_err=opt_float(cells[5]), attack=cells[6],
            eps=float(cells[7]), adv_err=opt_float(cells[8]),
            ms=int(cells[9])))
    return rows

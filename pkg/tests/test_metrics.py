"""Metrics CSV: byte stability, quoting, round trips, atomicity."""

import os

import pytest

from wassrobust.errors import CsvFormatError, DataError
from wassrobust.metrics import HEADER, MetricsRow, read_metrics, write_metrics


def _rows():
    return [
        MetricsRow("exp-a", "spgda", 0, objective=1.25, stationarity=0.5),
        MetricsRow("exp-a", "spgda", 50, objective=0.1 + 0.2,
                   stationarity=1e-17, clean_err=0.05),
        MetricsRow("exp-a", "spgda", 50, clean_err=0.05, attack="pgd",
                   eps=0.1, adv_err=0.3, ms=12),
        MetricsRow("exp-a", "erm", 0, objective=2.0),
    ]


def test_empty_rows_write_header_only(tmp_path):
    p = str(tmp_path / "m.csv")
    write_metrics([], p)
    assert open(p, "rb").read() == (HEADER + "\n").encode()


def test_round_trip_preserves_every_field(tmp_path):
    p = str(tmp_path / "m.csv")
    rows = _rows()
    write_metrics(rows, p)
    assert read_metrics(p) == rows


def test_identical_rows_give_identical_bytes(tmp_path):
    p1 = str(tmp_path / "a.csv")
    p2 = str(tmp_path / "b.csv")
    write_metrics(_rows(), p1)
    write_metrics(_rows(), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_floats_print_as_shortest_round_trip_decimal(tmp_path):
    p = str(tmp_path / "m.csv")
    write_metrics([MetricsRow("r", "erm", 0, objective=0.1 + 0.2)], p)
    text = open(p).read()
    assert "0.30000000000000004" in text
    assert text.endswith("\n")
    assert "\r" not in text


def test_fields_needing_quotes_are_quoted(tmp_path):
    p = str(tmp_path / "m.csv")
    rows = [MetricsRow('say "hi", ok', "erm", 1, objective=1.0)]
    write_metrics(rows, p)
    line = open(p).read().split("\n")[1]
    assert line.startswith('"say ""hi"", ok",erm,1')
    assert read_metrics(p) == rows


def test_none_cells_round_trip_as_empty(tmp_path):
    p = str(tmp_path / "m.csv")
    row = MetricsRow("r", "erm", 3)
    write_metrics([row], p)
    line = open(p).read().split("\n")[1]
    assert line == "r,erm,3,,,,none,0.0,,0"
    (back,) = read_metrics(p)
    assert back.objective is None and back.adv_err is None


def test_iteration_must_be_monotone_within_a_run(tmp_path):
    p = str(tmp_path / "m.csv")
    rows = [MetricsRow("r", "erm", 10), MetricsRow("r", "erm", 5)]
    with pytest.raises(DataError, match="monotone"):
        write_metrics(rows, p)
    # distinct algorithms are separate sequences
    write_metrics([MetricsRow("r", "erm", 10), MetricsRow("r", "spgda", 5)], p)


def test_failed_write_leaves_no_file_behind(tmp_path):
    p = str(tmp_path / "m.csv")
    with pytest.raises(DataError):
        write_metrics([MetricsRow("r", "erm", 1), MetricsRow("r", "erm", 0)], p)
    assert os.listdir(str(tmp_path)) == []


def test_write_replaces_existing_file_atomically(tmp_path):
    p = str(tmp_path / "m.csv")
    write_metrics(_rows(), p)
    write_metrics([], p)
    assert open(p).read() == HEADER + "\n"
    assert os.listdir(str(tmp_path)) == ["m.csv"]


def test_read_rejects_wrong_header(tmp_path):
    p = str(tmp_path / "m.csv")
    with open(p, "w") as fh:
        fh.write("iteration,loss\n1,2\n")
    with pytest.raises(CsvFormatError, match="header"):
        read_metrics(p)


def test_read_rejects_ragged_and_unterminated_lines(tmp_path):
    p = str(tmp_path / "m.csv")
    with open(p, "w") as fh:
        fh.write(HEADER + "\nr,erm,1\n")
    with pytest.raises(CsvFormatError, match="cells"):
        read_metrics(p)
    with open(p, "w") as fh:
        fh.write(HEADER + '\n"r,erm,1,,,,none,0.0,,0\n')
    with pytest.raises(CsvFormatError, match="quote"):
        read_metrics(p)

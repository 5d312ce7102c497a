import numpy as np
import pytest

from streamopt.stream import (EdgeRecord, ResourceMeter, SparseFlow,
                              StreamFormatError, StreamSource, emit_stream,
                              for_each_pass, open_stream)


def write(tmp_path, text, name="g.el"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_two_edges(tmp_path):
    src = open_stream(write(tmp_path, "0 1\n0 2\n"), "edge")
    assert src.length == 2
    recs = list(src.records())
    assert recs[0] == EdgeRecord(0, 1, 1.0)
    assert recs[1] == EdgeRecord(0, 2, 1.0)


def test_parse_weighted_edge(tmp_path):
    src = open_stream(write(tmp_path, "0 1 2.5\n"), "edge")
    assert list(src.records()) == [EdgeRecord(0, 1, 2.5)]


def test_self_loop_rejected_for_graphs(tmp_path):
    with pytest.raises(StreamFormatError, match="self loop"):
        open_stream(write(tmp_path, "0 0\n"), "edge")


def test_self_loop_fine_for_bipartite(tmp_path):
    src = open_stream(write(tmp_path, "0 0\n"), "edge", bipartite=True)
    assert src.length == 1


def test_bad_tokens_report_line_numbers(tmp_path):
    with pytest.raises(StreamFormatError, match="line 2"):
        open_stream(write(tmp_path, "0 1\n0 x\n"), "edge")
    with pytest.raises(StreamFormatError, match="negative"):
        open_stream(write(tmp_path, "-1 2\n"), "edge")
    with pytest.raises(StreamFormatError, match="NaN"):
        open_stream(write(tmp_path, "0 1 nan\n"), "edge")


def test_empty_file_is_valid(tmp_path):
    src = open_stream(write(tmp_path, "# nothing\n\n"), "edge")
    assert src.length == 0


def test_header_only_when_requested(tmp_path):
    src = open_stream(write(tmp_path, "4 5\n0 1\n"), "edge", expect_header=True)
    assert (src.n_left, src.n_right) == (4, 5)
    assert src.length == 1


def test_row_grammar(tmp_path):
    src = open_stream(write(tmp_path, "1.5 2 0:1.0 3:-2.0\n0 0\n"), "row")
    recs = list(src.records())
    assert recs[0].cost == 1.5
    assert recs[0].entries == [(0, 1.0), (3, -2.0)]
    assert recs[1].entries == []


def test_row_columns_must_increase(tmp_path):
    with pytest.raises(StreamFormatError):
        open_stream(write(tmp_path, "0 2 3:1.0 1:2.0\n"), "row")


def test_for_each_pass_counts_and_replays(tmp_path):
    src = open_stream(write(tmp_path, "0 1\n1 2\n2 3\n"), "edge")
    meter = ResourceMeter()
    seen = []
    for_each_pass(src, seen.append, meter)
    assert len(seen) == 3
    assert meter.passes == 1
    seen2 = []
    for_each_pass(src, seen2.append, meter)
    assert meter.passes == 2
    assert seen == seen2  # replay determinism


def test_for_each_pass_empty(tmp_path):
    src = open_stream(write(tmp_path, ""), "edge")
    meter = ResourceMeter()
    for_each_pass(src, lambda r: pytest.fail("visitor on empty stream"), meter)
    assert meter.passes == 1


def test_emit_stream_sums():
    src = emit_stream([((0, 1), 0.5), ((0, 1), 0.5)])
    total = {}
    for rec in src.records():
        total[(rec.u, rec.v)] = total.get((rec.u, rec.v), 0.0) + rec.w
    assert total == {(0, 1): 1.0}


def test_emit_stream_rejects_bad_values():
    with pytest.raises(ValueError):
        emit_stream([((0, 1), -0.5)])
    with pytest.raises(ValueError):
        emit_stream([((0, 1), float("nan"))])


def test_emit_stream_empty():
    assert emit_stream([]).length == 0


def test_meter_peak_words():
    meter = ResourceMeter()
    meter.alloc(100)
    meter.alloc(50)
    meter.free(120)
    meter.alloc(10)
    assert meter.peak_words == 150


def test_sparse_flow_round_trip(tmp_path):
    f = SparseFlow({(0, 1): 0.25, (2, 3): 1.5})
    path = str(tmp_path / "f.txt")
    f.save(path)
    g = SparseFlow.load(path)
    assert g.values == f.values
    assert g.l1() == pytest.approx(1.75)


def test_from_rows_builder():
    from streamopt.stream import RowRecord
    src = StreamSource.from_rows([RowRecord([(0, 1.0), (2, -1.0)], 0.5),
                                  RowRecord([], 0.0)])
    assert src.length == 2
    assert src.row_norms_l1().tolist() == [2.0, 0.0]

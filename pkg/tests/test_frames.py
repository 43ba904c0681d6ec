import numpy as np
import pytest

from peopleflow.errors import RejectedInput
from peopleflow.frames import (
    ThermalFrame,
    format_frame_line,
    parse_frame_line,
    quantize_c,
    read_frame_dump,
    write_frame_dump,
)

from .conftest import make_frame


def test_valid_frame_accepts_quantized_cells():
    frame = make_frame(np.full((8, 8), 21.25))
    assert frame.cells[0, 0] == 21.25
    assert not frame.cells.flags.writeable


def test_wrong_shape_rejected():
    with pytest.raises(RejectedInput):
        make_frame(np.zeros((8, 7)))


def test_out_of_range_rejected():
    cells = np.full((8, 8), 20.0)
    cells[3, 3] = 80.25
    with pytest.raises(RejectedInput):
        make_frame(cells)
    cells[3, 3] = -0.25
    with pytest.raises(RejectedInput):
        make_frame(cells)


def test_unquantized_cell_rejected():
    cells = np.full((8, 8), 20.0)
    cells[0, 0] = 20.1
    with pytest.raises(RejectedInput):
        make_frame(cells)


def test_quantize_rounds_to_quarter_and_clamps():
    raw = np.array([20.1, 20.13, 20.874, -3.0, 90.0])
    assert quantize_c(raw).tolist() == [20.0, 20.25, 20.75, 0.0, 80.0]


def test_dump_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    frames = [
        make_frame(quantize_c(rng.uniform(15, 30, size=(8, 8))), seq=i + 1, timestamp_ms=100 * i)
        for i in range(5)
    ]
    path = tmp_path / "frames.dump"
    assert write_frame_dump(frames, path) == 5
    loaded = list(read_frame_dump(path))
    assert len(loaded) == 5
    for orig, back in zip(frames, loaded):
        assert back.sensor_id == orig.sensor_id
        assert back.seq == orig.seq
        assert back.timestamp_ms == orig.timestamp_ms
        assert np.array_equal(back.cells, orig.cells)


def test_line_with_wrong_token_count_rejected(constant_frame):
    line = format_frame_line(constant_frame)
    with pytest.raises(RejectedInput):
        parse_frame_line(line + " 20.00")
    with pytest.raises(RejectedInput):
        parse_frame_line(" ".join(line.split()[:-1]))


def test_line_with_garbage_rejected(constant_frame):
    tokens = format_frame_line(constant_frame).split()
    tokens[5] = "warm"
    with pytest.raises(RejectedInput):
        parse_frame_line(" ".join(tokens))

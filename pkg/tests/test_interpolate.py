import numpy as np
import pytest

from peopleflow.errors import RejectedInput
from peopleflow.frames import GRID_SIZE
from peopleflow.interpolate import (
    OUT_SIZE,
    InterpolatedFrame,
    interpolate_bicubic,
    source_coordinate,
)

from .conftest import make_frame
from .oracles import bicubic_upscale


def test_constant_field_reproduced_exactly(constant_frame):
    out = interpolate_bicubic(constant_frame)
    assert out.cells.shape == (OUT_SIZE, OUT_SIZE)
    assert np.max(np.abs(out.cells - 20.0)) < 1e-9
    assert out.source_seq == constant_frame.seq


def test_linear_row_ramp_reproduced_exactly():
    cells = np.array([[10.0 + i for _ in range(GRID_SIZE)] for i in range(GRID_SIZE)])
    out = interpolate_bicubic(make_frame(cells))
    for r in range(OUT_SIZE):
        expected = 10.0 + source_coordinate(r)
        assert np.max(np.abs(out.cells[r] - expected)) < 1e-9


def test_linear_column_ramp_reproduced_exactly():
    cells = np.array([[12.0 + 0.5 * j for j in range(GRID_SIZE)] for _ in range(GRID_SIZE)])
    out = interpolate_bicubic(make_frame(cells))
    for c in range(OUT_SIZE):
        expected = 12.0 + 0.5 * source_coordinate(c)
        assert np.max(np.abs(out.cells[:, c] - expected)) < 1e-9


def test_single_hot_cell_matches_kernel_sum_oracle():
    cells = np.full((GRID_SIZE, GRID_SIZE), 20.0)
    cells[4, 4] = 30.0
    out = interpolate_bicubic(make_frame(cells))
    expected = np.array(bicubic_upscale(cells.tolist()))
    assert np.max(np.abs(out.cells - expected)) < 1e-9


def test_random_frames_match_kernel_sum_oracle():
    rng = np.random.default_rng(11)
    for _ in range(3):
        cells = np.round(rng.uniform(10, 40, size=(GRID_SIZE, GRID_SIZE)) * 4) / 4
        out = interpolate_bicubic(make_frame(cells))
        expected = np.array(bicubic_upscale(cells.tolist()))
        assert np.max(np.abs(out.cells - expected)) < 1e-9


def _support_cells(out_index: int) -> set:
    """Real source indices that can influence one output row/column,
    including cells reached through the border reflection."""
    u = source_coordinate(out_index)
    base = int(np.floor(u))
    support = set()
    for i in range(base - 1, base + 3):
        if 0 <= i < GRID_SIZE:
            support.add(i)
        elif i < 0:
            support.update((0, -i))
        else:
            support.update((GRID_SIZE - 1, 2 * (GRID_SIZE - 1) - i))
    return support


def test_locality_one_source_cell_only_touches_its_support():
    rng = np.random.default_rng(5)
    base = np.round(rng.uniform(15, 25, size=(GRID_SIZE, GRID_SIZE)) * 4) / 4
    for (si, sj) in [(0, 0), (3, 4), (7, 7), (0, 5)]:
        bumped = base.copy()
        bumped[si, sj] += 2.0
        diff = interpolate_bicubic(make_frame(bumped)).cells - interpolate_bicubic(make_frame(base)).cells
        changed = np.argwhere(np.abs(diff) > 1e-12)
        for r, c in changed:
            assert si in _support_cells(r)
            assert sj in _support_cells(c)


def test_overshoot_bounded_by_kernel_negative_mass():
    # The kernel's negative lobes bound how far the reconstruction can leave
    # the source range. Derive the worst-case factor from the oracle's own
    # weights rather than trusting the implementation.
    unit = np.zeros((GRID_SIZE, GRID_SIZE))
    rows = []
    for r in range(OUT_SIZE):
        row_weights = []
        for i in range(GRID_SIZE):
            unit[:] = 0.0
            unit[i, :] = 1.0
            row_weights.append(bicubic_upscale(unit.tolist())[r][0])
        rows.append(row_weights)
    rows = np.array(rows)
    neg_1d = np.maximum(-rows, 0.0).sum(axis=1)
    pos_1d = np.maximum(rows, 0.0).sum(axis=1)
    # For the separable 2D operator, negative mass of the outer product.
    factor = float(np.max(np.outer(pos_1d, neg_1d) + np.outer(neg_1d, pos_1d)))

    rng = np.random.default_rng(7)
    for _ in range(5):
        cells = np.round(rng.uniform(10, 40, size=(GRID_SIZE, GRID_SIZE)) * 4) / 4
        out = interpolate_bicubic(make_frame(cells)).cells
        lo, hi = cells.min(), cells.max()
        span = hi - lo
        assert out.min() >= lo - factor * span - 1e-9
        assert out.max() <= hi + factor * span + 1e-9


def test_interpolated_frame_shape_guard():
    with pytest.raises(RejectedInput):
        InterpolatedFrame(cells=np.zeros((8, 8)), source_seq=1)

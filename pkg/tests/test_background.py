import numpy as np
import pytest

from peopleflow.background import EMA_ALPHA, WARMUP_FRAMES, BackgroundModel, update_background
from peopleflow.errors import RejectedInput
from peopleflow.interpolate import OUT_SIZE

FULL = (OUT_SIZE, OUT_SIZE)
NO_MASK = np.zeros(FULL, dtype=bool)


def warmed_model(value=20.0):
    return BackgroundModel(cells=np.full(FULL, value), frames_absorbed=WARMUP_FRAMES)


def test_fixed_point():
    model = warmed_model(20.0)
    updated = update_background(model, np.full(FULL, 20.0), NO_MASK)
    assert np.allclose(updated.cells, 20.0)
    assert updated.frames_absorbed == WARMUP_FRAMES + 1


def test_single_ema_step():
    model = warmed_model(20.0)
    updated = update_background(model, np.full(FULL, 25.0), NO_MASK)
    assert np.allclose(updated.cells, 20.1)


def test_occupied_cells_frozen_after_warmup():
    model = warmed_model(20.0)
    mask = NO_MASK.copy()
    mask[5:8, 5:8] = True
    updated = update_background(model, np.full(FULL, 25.0), mask)
    assert np.allclose(updated.cells[mask], 20.0)
    assert np.allclose(updated.cells[~mask], 20.1)


def test_warmup_is_running_mean_and_ignores_mask():
    model = BackgroundModel.empty()
    mask = NO_MASK.copy()
    mask[:] = True  # should be ignored during warm-up
    values = [18.0, 22.0, 20.0]
    for v in values:
        model = update_background(model, np.full(FULL, v), mask)
    assert np.allclose(model.cells, np.mean(values))
    assert model.frames_absorbed == 3


def test_fifty_frames_converge_to_constant_scene():
    # Iterate the published update rule directly: warm-up mean then EMA.
    expected = 0.0
    model = BackgroundModel.empty()
    for n in range(1, 51):
        if n <= WARMUP_FRAMES:
            alpha = 1.0 / n
        else:
            alpha = EMA_ALPHA
        expected = (1 - alpha) * expected + alpha * 22.0
        model = update_background(model, np.full(FULL, 22.0), NO_MASK)
    assert abs(expected - 22.0) < 1e-6  # warm-up mean locks on immediately
    assert np.max(np.abs(model.cells - 22.0)) < 0.001
    assert np.max(np.abs(model.cells - expected)) < 1e-12


def test_shape_mismatch_rejected():
    model = warmed_model()
    with pytest.raises(RejectedInput):
        update_background(model, np.full((8, 8), 20.0), NO_MASK)
    with pytest.raises(RejectedInput):
        update_background(model, np.full(FULL, 20.0), np.zeros((8, 8), dtype=bool))

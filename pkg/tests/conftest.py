import numpy as np
import pytest

from peopleflow.frames import GRID_SIZE, ThermalFrame


def make_frame(cells, sensor_id="s1", seq=1, timestamp_ms=0):
    return ThermalFrame(sensor_id, seq, timestamp_ms, np.asarray(cells, dtype=np.float64))


@pytest.fixture
def constant_frame():
    return make_frame(np.full((GRID_SIZE, GRID_SIZE), 20.0))

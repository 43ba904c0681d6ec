import numpy as np
import pytest

from peopleflow.errors import RejectedInput
from peopleflow.journal import (
    EventJournal,
    JournalEntry,
    JournalReader,
    format_entry,
    parse_entry,
    read_journal,
    read_snapshot,
    write_snapshot,
)
from peopleflow.occupancy import OccupancyStore


def test_increment_from_zero():
    store = OccupancyStore()
    store.register_location("L1")
    update = store.apply("L1", "s1", 1, 1, 1000)
    assert update.occupancy == 1
    assert update.as_of_ms == 1000


def test_decrement_at_zero_floors_and_counts_anomaly():
    store = OccupancyStore()
    store.register_location("L1")
    update = store.apply("L1", "s1", 1, -1, 1000)
    assert update.occupancy == 0
    assert store.state("L1").anomaly_underflow == 1


def test_duplicate_event_is_noop():
    store = OccupancyStore()
    store.register_location("L1")
    assert store.apply("L1", "s1", 1, 1, 1000)
    assert store.apply("L1", "s1", 1, 1, 1001) is None
    assert store.state("L1").occupancy == 1


def test_unknown_location_dropped_and_counted():
    store = OccupancyStore()
    assert store.apply("nowhere", "s1", 1, 1, 1000) is None
    assert store.dropped_unknown_location == 1


def test_occupancy_never_negative_under_fuzz():
    rng = np.random.default_rng(55)
    store = OccupancyStore()
    store.register_location("L1")
    seq = 0
    for _ in range(5000):
        seq += 1
        direction = 1 if rng.random() < 0.45 else -1
        store.apply("L1", "s1", seq, direction, seq)
        assert store.state("L1").occupancy >= 0


def test_journal_replay_reconstructs_state(tmp_path):
    path = tmp_path / "events.journal"
    journal = EventJournal(path)
    store = OccupancyStore(journal)
    store.register_location("L1")
    store.register_location("L2")
    rng = np.random.default_rng(7)
    seq = {"s1": 0, "s2": 0}
    for _ in range(200):
        sensor = "s1" if rng.random() < 0.5 else "s2"
        loc = "L1" if sensor == "s1" else "L2"
        seq[sensor] += 1
        store.apply(loc, sensor, seq[sensor], 1 if rng.random() < 0.6 else -1, seq[sensor])
    journal.close()

    recovered = OccupancyStore()
    applied = recovered.recover(path)
    assert applied == 200
    for loc in ("L1", "L2"):
        assert recovered.state(loc).occupancy == store.state(loc).occupancy
        assert recovered.state(loc).as_of_ms == store.state(loc).as_of_ms
        assert recovered.state(loc).last_seq == store.state(loc).last_seq
        # underflow anomalies are re-derived deterministically
        assert recovered.state(loc).anomaly_underflow == store.state(loc).anomaly_underflow


def test_replay_skips_duplicates_in_journal(tmp_path):
    path = tmp_path / "events.journal"
    entry = JournalEntry("L1", "s1", 1, 1, 10)
    path.write_text(format_entry(entry) + "\n" + format_entry(entry) + "\n")
    store = OccupancyStore()
    assert store.recover(path) == 1
    assert store.state("L1").occupancy == 1


def test_journal_line_round_trip():
    entry = JournalEntry("L1", "s1", 9, -1, 777)
    assert parse_entry(format_entry(entry)) == entry
    with pytest.raises(RejectedInput):
        parse_entry("L1 s1 9 -1")
    with pytest.raises(RejectedInput):
        parse_entry("L1 s1 9 2 777")


def test_snapshot_round_trip(tmp_path):
    path = tmp_path / "occupancy.snapshot"
    rows = {"L1": (4, 1200), "L2": (0, 900)}
    write_snapshot(path, rows)
    assert read_snapshot(path) == rows


def test_journal_reader_tails_incrementally(tmp_path):
    path = tmp_path / "events.journal"
    reader = JournalReader(path)
    assert reader.poll() == []
    journal = EventJournal(path)
    journal.append(JournalEntry("L1", "s1", 1, 1, 10))
    assert [e.event_seq for e in reader.poll()] == [1]
    assert reader.poll() == []
    journal.append(JournalEntry("L1", "s1", 2, -1, 20))
    journal.append(JournalEntry("L1", "s1", 3, 1, 30))
    assert [e.event_seq for e in reader.poll()] == [2, 3]
    journal.close()


def test_read_journal_missing_file_is_empty(tmp_path):
    assert list(read_journal(tmp_path / "absent.journal")) == []

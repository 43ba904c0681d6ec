"""Acceptance suite: one test per release criterion, each with its stated
time budget. Every test prints a PASS line so a plain run reads as a
checklist (use ``pytest tests/test_acceptance.py -v -s``)."""

import json
import statistics
import threading
import time

import numpy as np
import pytest

from peopleflow.broker import Broker
from peopleflow.client import BrokerClient
from peopleflow.clock import ManualClock
from peopleflow.coordinator import Coordinator, DeviceConfig, ProvisioningCollector
from peopleflow.frames import GRID_SIZE
from peopleflow.geocode import StubGeocoder
from peopleflow.interpolate import OUT_SIZE, interpolate_bicubic, source_coordinate
from peopleflow.occupancy import OccupancyStore
from peopleflow.registry import Notifier, OccupancyView, RegistryService
from peopleflow.registry_client import RegistryClient
from peopleflow.registrystore import RegistryStore
from peopleflow.segmentation import MIN_CLUSTER_PIXELS, find_clusters
from peopleflow.simrun import RunManifest, run_simulation
from peopleflow.simulate import make_test_day, render, true_events
from peopleflow.device import DeviceSettings
from peopleflow.topics import topic_matches, validate_filter, validate_topic
from peopleflow.tracking import FlowEvent
from peopleflow.whitelist import DeviceRecord, Whitelist
from peopleflow.wire import encode_payload

from .conftest import make_frame
from .oracles import bicubic_upscale, connected_components, topic_filter_matches
from .procs import CliProc, endpoint_of, write_whitelist
from .test_coordinator import LossyTransport

DEV_KEY = "aa" * 16
REG_KEY = "bb" * 16
BIZ_EMAIL = "owner@biz.example"


def report(name: str, elapsed: float, budget: float, detail: str = "") -> None:
    print(f"ACCEPTANCE PASS: {name} ({elapsed:.1f}s of {budget:.0f}s budget) {detail}")


class LiveStack:
    """In-process broker + registry over real sockets, one device key."""

    def __init__(self, tmp_path, location="L1", noise_clock=None):
        self.tmp_path = tmp_path
        self.whitelist = Whitelist(
            devices=[
                DeviceRecord("dev-1", DEV_KEY, location_id=location, location_name="Museum"),
                DeviceRecord("registry", REG_KEY, device_type="service"),
            ],
            path=tmp_path / "whitelist.json",
        )
        self.whitelist.save()
        self.broker = Broker(
            "127.0.0.1", 0, self.whitelist,
            journal_path=tmp_path / "events.journal",
            snapshot_path=tmp_path / "occupancy.snapshot",
            retransmit_interval_s=0.3,
        )
        self.broker.start()
        self.store = RegistryStore(tmp_path / "registry.journal", iterations=2000)
        self.view = OccupancyView(tmp_path / "events.journal")
        notifier_client = BrokerClient(*self.broker.endpoint, key=REG_KEY, client_id="registry",
                                       retransmit_interval_s=0.3)
        self.notifier = Notifier(publish=notifier_client.publish)
        self._notifier_client = notifier_client
        self.registry = RegistryService(
            self.store, self.view, geocoder=StubGeocoder(), notifier=self.notifier,
            whitelist_path=tmp_path / "whitelist.json", business_emails={BIZ_EMAIL},
        )
        self.registry.start("127.0.0.1", 0)
        self.api = RegistryClient(f"http://127.0.0.1:{self.registry.port}")

    def close(self):
        self.registry.stop()
        self._notifier_client.close()
        self.broker.stop()


def drive_scenario(stack, scenario, location="L1"):
    """Feed one scenario through pipeline/meter/coordinator into the broker."""
    client = BrokerClient(*stack.broker.endpoint, key=DEV_KEY, client_id="dev-1",
                          retransmit_interval_s=0.3)
    client.connect()
    config = DeviceConfig("dev-1", DEV_KEY, "flow-meter", location, "Museum",
                          {"delta_threshold": 1.5})
    coordinator = Coordinator(config, client)
    coordinator.attach_sensor(scenario.sensor_id)
    coordinator.start_publisher()
    from peopleflow.pipeline import SensorPipeline
    from peopleflow.tracking import FlowMeter

    pipeline = SensorPipeline(scenario.sensor_id)
    meter = FlowMeter(scenario.sensor_id)
    detected = []
    for frame, _ in render(scenario):
        clusters = pipeline.process(frame)
        for event in meter.step([c.centroid for c in clusters], frame.timestamp_ms):
            coordinator.ingest(event)
            detected.append(event)
    assert coordinator.wait_drained(60.0)
    coordinator.stop()
    client.close()
    return detected


# 1 ---------------------------------------------------------------------------


def associate_and_wait(stack, token, activity):
    _, grant = stack.api.issue_otp(token, activity["activity_id"])
    status, _ = stack.api.associate_device("dev-1", grant["otp"])
    assert status == 200
    assert stack.notifier.wait_drained(10.0)
    deadline = time.monotonic() + 10.0
    while time.monotonic() < deadline:
        if stack.whitelist.lookup_id("dev-1").location_id == activity["location_id"]:
            return
        time.sleep(0.05)
    raise AssertionError("association never reached the broker")


def test_closed_system_zero_day(tmp_path):
    start = time.monotonic()
    stack = LiveStack(tmp_path)
    try:
        scenario = make_test_day(42, seed=101, noise_sigma_c=0.0)
        truth = true_events(scenario)
        assert sum(1 for e in truth if e.direction == 1) == 21
        assert sum(1 for e in truth if e.direction == -1) == 21

        token = register_owner(stack)
        activity = create_museum(stack, token)
        associate_and_wait(stack, token, activity)
        detected = drive_scenario(stack, scenario, location=activity["location_id"])
        status, occ = stack.api.occupancy(activity["activity_id"])
        assert status == 200
        assert occ["occupancy"] == 0, f"end-of-day occupancy {occ['occupancy']} != 0"
        assert sum(e.direction for e in detected) == 0
    finally:
        stack.close()
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    report("closed-system zero day (21 in + 21 out, noise 0)", elapsed, 30.0,
           f"detected={len(detected)}")


def register_owner(stack):
    stack.api.register(BIZ_EMAIL, "secret-password")
    _, body = stack.api.login(BIZ_EMAIL, "secret-password")
    return body["token"]


def create_museum(stack, token):
    status, activity = stack.api.create_activity(token, "Museum", "1 Museum Square, Perugia", 80)
    assert status == 200
    return activity


# 2 ---------------------------------------------------------------------------


def test_fifteen_day_error_envelope(tmp_path):
    start = time.monotonic()
    stack = LiveStack(tmp_path)
    try:
        token = register_owner(stack)
        activity = create_museum(stack, token)
        associate_and_wait(stack, token, activity)

        device_config = stack.tmp_path / "device.json"
        DeviceSettings("dev-1", DEV_KEY, *map(str, stack.broker.endpoint)).save(device_config)
        manifest = RunManifest(
            seed=42,
            broker_host=stack.broker.endpoint[0],
            broker_port=stack.broker.endpoint[1],
            registry_url=stack.api.base_url,
            device_config=device_config,
            activity_id=activity["activity_id"],
            output_dir=stack.tmp_path / "run",
            day_count=15,
            mean_passes=42.0,
            duration_s=300.0,
            noise_sigma_c=0.3,
            retransmit_interval_s=0.3,
            dump_frames=False,
        )
        result = run_simulation(manifest)
        assert not result.get("incomplete"), result.get("reason")
        drifts = [day["drift"] for day in result["days"]]
        assert len(drifts) == 15
        assert max(drifts) <= 2, f"per-day drifts {drifts}"
        assert statistics.median(drifts) <= 1, f"median of {drifts}"
    finally:
        stack.close()
    elapsed = time.monotonic() - start
    assert elapsed < 600.0
    report("15-day error envelope (drift <= 2 daily, median <= 1)", elapsed, 600.0,
           f"drifts={drifts}")


# 3 ---------------------------------------------------------------------------


def test_clustering_equals_union_find_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    for trial in range(200):
        mask = rng.random((OUT_SIZE, OUT_SIZE)) < rng.uniform(0.05, 0.5)
        excess = np.where(mask, rng.uniform(0.1, 6.0, size=(OUT_SIZE, OUT_SIZE)), 0.0)
        clusters = find_clusters(mask, excess)
        expected = {
            comp for comp in connected_components(mask.tolist())
            if len(comp) >= MIN_CLUSTER_PIXELS
        }
        assert len(clusters) == len(expected), f"trial {trial}"
        assert {c.pixels for c in clusters} == expected, f"trial {trial}"
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report("flood-fill equals union-find on 200 seeded masks", elapsed, 5.0)


# 4 ---------------------------------------------------------------------------


def test_interpolation_exactness():
    start = time.monotonic()
    flat = make_frame(np.full((GRID_SIZE, GRID_SIZE), 20.0))
    out = interpolate_bicubic(flat).cells
    assert np.max(np.abs(out - 20.0)) < 1e-9

    ramp = make_frame(np.array([[10.0 + i] * GRID_SIZE for i in range(GRID_SIZE)]))
    out = interpolate_bicubic(ramp).cells
    for r in range(OUT_SIZE):
        assert np.max(np.abs(out[r] - (10.0 + source_coordinate(r)))) < 1e-9

    hot = np.full((GRID_SIZE, GRID_SIZE), 20.0)
    hot[4, 4] = 30.0
    out = interpolate_bicubic(make_frame(hot)).cells
    oracle = np.array(bicubic_upscale(hot.tolist()))
    worst = float(np.max(np.abs(out - oracle)))
    assert worst < 1e-9
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    report("interpolation exactness (constant, linear, hot-cell oracle)", elapsed, 1.0,
           f"worst={worst:.2e}")


# 5 ---------------------------------------------------------------------------


def test_exactly_once_under_frame_loss(tmp_path):
    start = time.monotonic()
    stack = LiveStack(tmp_path)
    try:
        rng = np.random.default_rng(2718)
        client = BrokerClient(
            *stack.broker.endpoint, key=DEV_KEY, client_id="dev-1",
            transport_factory=lambda sock: LossyTransport(sock, rng, 0.20),
            retransmit_interval_s=0.02,
        )
        client.connect()
        config = DeviceConfig("dev-1", DEV_KEY, "flow-meter", "L1", "Museum", {})
        coordinator = Coordinator(config, client)
        coordinator.attach_sensor("s1")
        coordinator.start_publisher()

        stream_rng = np.random.default_rng(7)
        running = 0
        total = 0
        for i in range(1000):
            direction = 1 if running == 0 or stream_rng.random() < 0.5 else -1
            running += direction
            total += direction
            coordinator.ingest(FlowEvent("s1", i + 1, direction, 10_000 + i))
        assert coordinator.wait_drained(55.0), "events not drained in time"
        state = stack.broker.store.state("L1")
        assert state.occupancy == total, f"occupancy {state.occupancy} != sum {total}"
        assert state.last_seq["s1"] == 1000
        assert state.anomaly_underflow == 0
        coordinator.stop()
        client.close()
    finally:
        stack.close()
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    report("exactly-once occupancy under 20% frame loss, 1000 events", elapsed, 60.0,
           f"final={total}")


# 6 ---------------------------------------------------------------------------


def test_occupancy_non_negative_fuzz():
    start = time.monotonic()
    rng = np.random.default_rng(99)
    underflows = 0
    for stream in range(10_000):
        store = OccupancyStore()
        store.register_location("L")
        length = int(rng.integers(1, 12))
        for seq in range(1, length + 1):
            direction = 1 if rng.random() < 0.4 else -1  # biased toward underflow
            store.apply("L", "s", seq, direction, seq)
            assert store.state("L").occupancy >= 0
        underflows += store.state("L").anomaly_underflow
    assert underflows > 0  # the fuzz actually attempted underflows
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    report("occupancy >= 0 across 10,000 fuzzed event streams", elapsed, 30.0,
           f"underflow anomalies counted={underflows}")


# 7 ---------------------------------------------------------------------------


def test_wildcard_routing_matches_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(4242)
    words = ["locations", "devices", "L1", "L2", "dev-1", "delta", "occupancy", "config", "x"]

    def random_topic():
        return [str(rng.choice(words)) for _ in range(int(rng.integers(1, 5)))]

    def random_filter():
        levels = []
        n = int(rng.integers(1, 5))
        for i in range(n):
            roll = rng.random()
            if roll < 0.25:
                levels.append("+")
            elif roll < 0.35 and i == n - 1:
                levels.append("#")
            else:
                levels.append(str(rng.choice(words)))
        return levels

    for _ in range(1000):
        topic_levels, filter_levels = random_topic(), random_filter()
        topic, topic_filter = "/".join(topic_levels), "/".join(filter_levels)
        validate_topic(topic)
        validate_filter(topic_filter)
        assert topic_matches(topic_filter, topic) == topic_filter_matches(
            filter_levels, topic_levels
        ), (topic_filter, topic)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report("wildcard matching equals recursive oracle on 1000 fuzzed pairs", elapsed, 5.0)


# 8 ---------------------------------------------------------------------------


def test_provisioning_order_independent():
    start = time.monotonic()
    messages = {
        "type": encode_payload({"device_type": "flow-meter"}),
        "location": encode_payload({"location_id": "L1", "name": "Museum"}),
        "constants": encode_payload({"delta_threshold": 1.5}),
    }
    import itertools

    configs = []
    for order in itertools.permutations(("type", "location", "constants")):
        collector = ProvisioningCollector("dev-1", DEV_KEY)
        for suffix in order:
            collector.feed(f"devices/dev-1/config/{suffix}", messages[suffix])
        assert collector.complete.is_set()
        configs.append(collector.build())
    assert all(c == configs[0] for c in configs)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report("provisioning config identical across all 6 orderings", elapsed, 5.0)


# 9 ---------------------------------------------------------------------------


def test_durability_kill_and_replay(tmp_path):
    start = time.monotonic()
    write_whitelist(
        tmp_path / "whitelist.json",
        [
            {"device_id": "dev-1", "device_key": DEV_KEY},
            {"device_id": "registry", "device_key": REG_KEY, "device_type": "service"},
        ],
    )
    broker_args = [
        "broker", "--listen", "127.0.0.1:0",
        "--whitelist", str(tmp_path / "whitelist.json"),
        "--journal", str(tmp_path / "events.journal"),
        "--snapshot", str(tmp_path / "occupancy.snapshot"),
        "--snapshot-interval", "0.5",
    ]
    broker = CliProc(*broker_args)
    broker_ep = endpoint_of(broker.wait_ready("broker ready on "))

    def registry_proc(listen):
        return CliProc(
            "registry", "--listen", listen,
            "--journal", str(tmp_path / "events.journal"),
            "--store", str(tmp_path / "registry.journal"),
            "--whitelist", str(tmp_path / "whitelist.json"),
            "--broker", broker_ep, "--key", REG_KEY,
            "--business-email", BIZ_EMAIL, "--iterations", "2000",
        )

    registry = registry_proc("127.0.0.1:0")
    registry_url = endpoint_of(registry.wait_ready("registry ready on "))
    registry_port = registry_url.rsplit(":", 1)[1]

    api = RegistryClient(registry_url)
    api.register(BIZ_EMAIL, "secret-password")
    token = api.login(BIZ_EMAIL, "secret-password")[1]["token"]
    _, activity = api.create_activity(token, "Museum", "1 Museum Square, Perugia", 80)
    _, grant = api.issue_otp(token, activity["activity_id"])
    assert api.associate_device("dev-1", grant["otp"])[0] == 200

    # half a day of traffic straight into the broker
    host, port = broker_ep.rsplit(":", 1)
    client = BrokerClient(host, int(port), key=DEV_KEY, client_id="dev-1",
                          retransmit_interval_s=0.3)
    client.connect()
    from peopleflow.wire import delta_payload

    location = activity["location_id"]
    deadline = time.monotonic() + 10.0
    while api.occupancy(activity["activity_id"])[1].get("as_of_ms") is None:
        client.publish(f"locations/{location}/delta", delta_payload("s1", 1, 1, 1000), qos=1)
        if time.monotonic() > deadline:
            raise AssertionError("location never became known to the broker")
        time.sleep(0.1)
    rng = np.random.default_rng(12)
    running = api.occupancy(activity["activity_id"])[1]["occupancy"]
    for seq in range(2, 22):
        direction = 1 if running == 0 or rng.random() < 0.5 else -1
        running += direction
        client.publish(f"locations/{location}/delta",
                       delta_payload("s1", seq, direction, 1000 + seq), qos=1)
    client.close()

    status, before_occ = api.occupancy(activity["activity_id"])
    assert status == 200
    before_devices = api.devices(token, activity["activity_id"])[1]
    before_occ_bytes = json.dumps(before_occ, sort_keys=True).encode()
    before_dev_bytes = json.dumps(before_devices, sort_keys=True).encode()
    time.sleep(0.8)  # let a snapshot happen
    snapshot_before = (tmp_path / "occupancy.snapshot").read_bytes()

    broker.kill()  # SIGKILL: no clean shutdown
    registry.kill()

    broker2 = CliProc(*[a if a != "127.0.0.1:0" else broker_ep for a in broker_args])
    broker2.wait_ready("broker ready on ")
    registry2 = registry_proc(f"127.0.0.1:{registry_port}")
    registry2.wait_ready("registry ready on ")
    try:
        api2 = RegistryClient(registry_url)
        token2 = api2.login(BIZ_EMAIL, "secret-password")[1]["token"]
        status, after_occ = api2.occupancy(activity["activity_id"])
        assert status == 200
        after_devices = api2.devices(token2, activity["activity_id"])[1]
        assert json.dumps(after_occ, sort_keys=True).encode() == before_occ_bytes
        assert json.dumps(after_devices, sort_keys=True).encode() == before_dev_bytes
        deadline = time.monotonic() + 5.0
        while time.monotonic() < deadline:
            if (tmp_path / "occupancy.snapshot").read_bytes() == snapshot_before:
                break
            time.sleep(0.2)
        assert (tmp_path / "occupancy.snapshot").read_bytes() == snapshot_before
    finally:
        broker2.stop()
        registry2.stop()
        broker.stop()
        registry.stop()
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    report("durability: kill -9, restart, journal replay, identical state", elapsed, 60.0)


# 10 --------------------------------------------------------------------------


def test_otp_contract(tmp_path):
    start = time.monotonic()
    clock = ManualClock(1_700_000_000_000)
    store = RegistryStore(tmp_path / "registry.journal", clock=clock, iterations=2000)
    view = OccupancyView(tmp_path / "events.journal")
    wl = Whitelist(devices=[DeviceRecord("dev-1", DEV_KEY), DeviceRecord("dev-2", REG_KEY)],
                   path=tmp_path / "whitelist.json")
    wl.save()
    service = RegistryService(store, view, geocoder=StubGeocoder(),
                              whitelist_path=tmp_path / "whitelist.json",
                              business_emails={BIZ_EMAIL}, clock=clock)
    service.start("127.0.0.1", 0)
    api = RegistryClient(f"http://127.0.0.1:{service.port}")
    try:
        api.register(BIZ_EMAIL, "secret-password")
        token = api.login(BIZ_EMAIL, "secret-password")[1]["token"]
        _, activity = api.create_activity(token, "Museum", "1 Museum Square, Perugia", 10)

        # concurrency: one OTP, two simultaneous associations, one winner
        _, grant = api.issue_otp(token, activity["activity_id"])
        barrier = threading.Barrier(2)
        results = []

        def attempt(device_id):
            barrier.wait()
            results.append((device_id, api.associate_device(device_id, grant["otp"])[0]))

        threads = [threading.Thread(target=attempt, args=(d,)) for d in ("dev-1", "dev-2")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(s for _, s in results) == [200, 400], results

        # expiry boundary with a mocked clock: 300 s ok, 301 s expired
        _, g300 = api.issue_otp(token, activity["activity_id"])
        clock.advance(300_000)
        loser = next(d for d, s in results if s != 200)
        status_300, body = api.associate_device(loser, g300["otp"])
        assert status_300 == 200, body
        _, g301 = api.issue_otp(token, activity["activity_id"])
        clock.advance(301_000)
        status_301, body = api.associate_device("dev-x", g301["otp"])
        assert status_301 == 400
    finally:
        service.stop()
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report("OTP single-use under concurrency and 300s expiry boundary", elapsed, 5.0)

"""Command line entry point.

Subcommands:

    broker        run the pub/sub server
    registry      run the HTTP registry
    device        run a provisioned device fed by a scenario or frame dump
    simulate      drive scripted days through a running stack, write a report
    query         print an activity's occupancy
    scenario gen  generate a balanced scenario file

Long-running commands print one readiness line to stdout when they accept
connections and log structure to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from .broker import Broker
from .device import DeviceRuntime, DeviceSettings
from .errors import AuthorizationError, ConfigurationError, PeopleFlowError
from .frames import read_frame_dump
from .geocode import StubGeocoder
from .registry import Notifier, OccupancyView, RegistryService
from .registry_client import RegistryClient
from .registrystore import RegistryStore
from .simrun import RunManifest, run_simulation
from .simulate import make_test_day, read_scenario, render, true_events, write_scenario, write_true_events
from .tracking import write_event_log
from .whitelist import Whitelist


def _split_endpoint(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigurationError(f"expected host:port, got {value!r}")
    return host, int(port)


def _wait_for_interrupt() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(sig, lambda *_: stop.set())
        except ValueError:
            pass  # not the main thread
    stop.wait()


def cmd_broker(args) -> int:
    host, port = _split_endpoint(args.listen)
    whitelist = Whitelist.load(args.whitelist)
    snapshot = args.snapshot or str(Path(args.journal).with_suffix(".snapshot"))
    broker = Broker(
        host,
        port,
        whitelist,
        journal_path=args.journal,
        snapshot_path=snapshot,
        snapshot_interval_s=args.snapshot_interval,
    )
    try:
        broker.start()
    except OSError as exc:
        print(f"error: cannot listen on {args.listen}: {exc}", file=sys.stderr)
        return 2
    print(f"broker ready on {broker.host}:{broker.port}", flush=True)
    try:
        _wait_for_interrupt()
    finally:
        broker.stop()
    return 0


def cmd_registry(args) -> int:
    host, port = _split_endpoint(args.listen)
    store = RegistryStore(args.store, iterations=args.iterations)
    view = OccupancyView(args.journal)
    geocoder = StubGeocoder.from_file(args.geocode_table) if args.geocode_table else StubGeocoder()
    notifier = Notifier()
    client = None
    if args.broker:
        from .client import BrokerClient

        bhost, bport = _split_endpoint(args.broker)
        client = BrokerClient(bhost, bport, key=args.key, client_id="registry",
                              retransmit_interval_s=2.0)
        notifier = Notifier(publish=client.publish)
    service = RegistryService(
        store,
        view,
        geocoder=geocoder,
        notifier=notifier,
        whitelist_path=args.whitelist,
        business_emails=set(args.business_email or []),
    )
    try:
        service.start(host, port)
    except OSError as exc:
        print(f"error: cannot listen on {args.listen}: {exc}", file=sys.stderr)
        return 2
    print(f"registry ready on http://{service.host}:{service.port}", flush=True)
    try:
        _wait_for_interrupt()
    finally:
        service.stop()
        if client is not None:
            client.close()
    return 0


def cmd_device(args) -> int:
    settings = DeviceSettings.load(args.config)
    runtime = DeviceRuntime(settings, provision_timeout_s=args.provision_timeout)
    try:
        config = runtime.start()
    except AuthorizationError as exc:
        print(f"authorization rejected: {exc}", file=sys.stderr)
        runtime.stop()
        return 3
    print(
        f"device {config.device_id} ready at location "
        f"{config.location_id or 'UNASSIGNED'} ({config.location_name or '-'})",
        flush=True,
    )
    try:
        if args.scenario:
            scenario = read_scenario(args.scenario)
            frames = (frame for frame, _ in render(scenario))
            fps = scenario.fps if args.realtime else None
        elif args.frames:
            frames = read_frame_dump(args.frames)
            fps = 10.0 if args.realtime else None
        else:
            print("device idle: no scenario or frame dump given", flush=True)
            _wait_for_interrupt()
            return 0
        emitted = runtime.run(frames, realtime_fps=fps)
        drained = runtime.drain(timeout_s=60.0)
        if args.event_log and runtime.events:
            write_event_log(runtime.events, args.event_log)
        print(f"device done: {emitted} events, drained={drained}", flush=True)
        return 0 if drained else 4
    finally:
        runtime.stop()


def cmd_simulate(args) -> int:
    manifest = RunManifest.load(args.manifest)
    report = run_simulation(manifest)
    report_path = manifest.output_dir / "report.txt"
    sys.stdout.write(report_path.read_text(encoding="utf-8"))
    sys.stdout.flush()
    return 1 if report.get("incomplete") else 0


def cmd_query(args) -> int:
    client = RegistryClient(args.registry)
    status, body = client.occupancy(args.activity_id, token=args.token)
    if status != 200:
        print(f"error {status}: {body.get('error', body)}", file=sys.stderr)
        return 1
    print(json.dumps(body))
    return 0


def cmd_scenario_gen(args) -> int:
    scenario = make_test_day(
        args.passes,
        seed=args.seed,
        duration_s=args.duration,
        noise_sigma_c=args.noise,
        fps=args.fps,
    )
    write_scenario(scenario, args.out)
    if args.truth:
        write_true_events(true_events(scenario), args.truth)
    print(f"wrote {args.out} ({len(scenario.persons)} walkers)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peopleflow", description=__doc__)
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("broker", help="run the pub/sub broker")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--whitelist", required=True)
    p.add_argument("--journal", required=True)
    p.add_argument("--snapshot", default=None)
    p.add_argument("--snapshot-interval", type=float, default=30.0)
    p.set_defaults(func=cmd_broker)

    p = sub.add_parser("registry", help="run the registry HTTP service")
    p.add_argument("--listen", required=True, help="host:port")
    p.add_argument("--journal", required=True, help="broker occupancy journal path")
    p.add_argument("--store", required=True, help="registry journal path")
    p.add_argument("--whitelist", default=None)
    p.add_argument("--broker", default=None, help="broker host:port for notifications")
    p.add_argument("--key", default=None, help="registry's broker key")
    p.add_argument("--business-email", action="append")
    p.add_argument("--geocode-table", default=None)
    p.add_argument("--iterations", type=int, default=50_000)
    p.set_defaults(func=cmd_registry)

    p = sub.add_parser("device", help="run a provisioned device")
    p.add_argument("--config", required=True)
    p.add_argument("--scenario", default=None)
    p.add_argument("--frames", default=None)
    p.add_argument("--event-log", default=None)
    p.add_argument("--realtime", action="store_true")
    p.add_argument("--provision-timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_device)

    p = sub.add_parser("simulate", help="run scripted days against a live stack")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("query", help="print an activity's occupancy")
    p.add_argument("activity_id")
    p.add_argument("--registry", required=True, help="base URL")
    p.add_argument("--token", default=None)
    p.set_defaults(func=cmd_query)

    p_scn = sub.add_parser("scenario", help="scenario utilities")
    scn_sub = p_scn.add_subparsers(dest="scenario_command", required=True)
    p = scn_sub.add_parser("gen", help="generate a balanced test day")
    p.add_argument("--passes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    p.set_defaults(func=cmd_scenario_gen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigurationError, PeopleFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

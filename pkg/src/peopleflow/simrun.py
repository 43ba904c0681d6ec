"""End-to-end simulation harness: scripted days through the live stack.

Replays one or more scenario days through the full chain (renderer,
pipeline, flow meter, coordinator, broker, registry) and writes a per-day
report with ground truth next to it: true passes, detected events, the
end-of-day occupancy the registry answers, and the absolute drift from
the closed-system expectation of zero.

All timestamps in the report come from the simulated time axis carried by
the frames themselves, so a manifest with a fixed seed produces an
identical report against a fresh stack, byte for byte.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .device import DeviceRuntime, DeviceSettings
from .errors import ConfigurationError
from .frames import ThermalFrame, write_frame_dump
from .registry_client import RegistryClient
from .simulate import (
    Scenario,
    make_test_day,
    read_scenario,
    render,
    true_events,
    write_scenario,
    write_true_events,
)
from .tracking import write_event_log

logger = logging.getLogger("peopleflow.simrun")

DAY_MS = 86_400_000


@dataclass
class RunManifest:
    seed: int
    broker_host: str
    broker_port: int
    registry_url: str
    device_config: Path
    activity_id: str
    output_dir: Path
    scenario_paths: list = field(default_factory=list)
    day_count: int = 0
    mean_passes: float = 42.0
    duration_s: float = 300.0
    noise_sigma_c: float = 0.3
    fps: float = 10.0
    min_gap_s: float = 4.0
    dump_frames: bool = True
    retransmit_interval_s: float = 1.0

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        base = Path(path).parent
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            host, port = raw["broker"].rsplit(":", 1)
            manifest = cls(
                seed=int(raw["seed"]),
                broker_host=host,
                broker_port=int(port),
                registry_url=raw["registry"],
                device_config=base / raw["device_config"],
                activity_id=raw["activity_id"],
                output_dir=base / raw["output_dir"],
                scenario_paths=[base / p for p in raw.get("scenarios", [])],
                day_count=int(raw.get("days", {}).get("count", 0)),
                mean_passes=float(raw.get("days", {}).get("mean_passes", 42.0)),
                duration_s=float(raw.get("days", {}).get("duration_s", 300.0)),
                noise_sigma_c=float(raw.get("days", {}).get("noise_sigma_c", 0.3)),
                fps=float(raw.get("days", {}).get("fps", 10.0)),
                min_gap_s=float(raw.get("days", {}).get("min_gap_s", 4.0)),
                dump_frames=bool(raw.get("dump_frames", True)),
                retransmit_interval_s=float(raw.get("retransmit_interval_s", 1.0)),
            )
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"bad manifest {path}: {exc}") from exc
        if not manifest.scenario_paths and manifest.day_count <= 0:
            raise ConfigurationError("manifest needs scenarios or days.count")
        missing = [str(p) for p in [manifest.device_config, *manifest.scenario_paths] if not p.exists()]
        if missing:
            raise ConfigurationError(f"manifest paths not found: {missing}")
        return manifest


def _day_scenarios(manifest: RunManifest) -> list[Scenario]:
    scenarios = []
    if manifest.scenario_paths:
        for i, path in enumerate(manifest.scenario_paths):
            scn = read_scenario(path)
            scenarios.append(Scenario(
                seed=scn.seed, duration_s=scn.duration_s, persons=scn.persons,
                ambient_c=scn.ambient_c, fps=scn.fps, noise_sigma_c=scn.noise_sigma_c,
                sensor_id=scn.sensor_id, start_ms=i * DAY_MS,
            ))
        return scenarios
    rng = np.random.default_rng(manifest.seed)
    for day in range(manifest.day_count):
        passes = int(rng.poisson(manifest.mean_passes))
        scenarios.append(
            make_test_day(
                passes,
                seed=manifest.seed * 1000 + day,
                duration_s=manifest.duration_s,
                fps=manifest.fps,
                noise_sigma_c=manifest.noise_sigma_c,
                min_gap_s=manifest.min_gap_s,
                start_ms=day * DAY_MS,
            )
        )
    return scenarios


def run_simulation(manifest: RunManifest) -> dict:
    """Run every day end-to-end and return the report (also written to the
    output directory). Unreachable components abort with a partial report
    marked incomplete."""
    out_dir = manifest.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    registry = RegistryClient(manifest.registry_url)
    report: dict = {"seed": manifest.seed, "activity_id": manifest.activity_id, "days": []}

    settings = DeviceSettings.load(manifest.device_config)
    runtime = DeviceRuntime(settings, retransmit_interval_s=manifest.retransmit_interval_s)
    scenarios = _day_scenarios(manifest)
    if len({s.sensor_id for s in scenarios}) > 1:
        raise ConfigurationError("all scenario days must use one sensor_id")
    try:
        config = runtime.start()
        runtime.begin_sensor(scenarios[0].sensor_id if scenarios else settings.device_id)

        status, probe = registry.occupancy(manifest.activity_id)
        if status != 200:
            raise ConfigurationError(f"registry query failed with {status}: {probe}")

        seq_base = 0
        detected_before = 0
        for day_index, scenario in enumerate(scenarios):
            day_dir = out_dir / f"day{day_index:02d}"
            day_dir.mkdir(exist_ok=True)
            truth = true_events(scenario)
            write_scenario(scenario, day_dir / "scenario.scn")
            write_true_events(truth, day_dir / "truth.log")

            dumped: list[ThermalFrame] = []
            for frame, _ in render(scenario):
                shifted = ThermalFrame(
                    frame.sensor_id, frame.seq + seq_base, frame.timestamp_ms, frame.cells
                )
                runtime.feed(shifted)
                if manifest.dump_frames:
                    dumped.append(shifted)
            seq_base += scenario.frame_count
            if manifest.dump_frames:
                write_frame_dump(dumped, day_dir / "frames.dump")

            if not runtime.drain(timeout_s=60.0):
                raise ConfigurationError("broker did not acknowledge all deltas")
            day_events = runtime.events[detected_before:]
            detected_before = len(runtime.events)
            write_event_log(day_events, day_dir / "events.log")

            status, occ = registry.occupancy(manifest.activity_id)
            if status != 200:
                raise ConfigurationError(f"registry query failed with {status}: {occ}")
            entries = sum(1 for e in day_events if e.direction == 1)
            exits = len(day_events) - entries
            row = {
                "day_index": day_index,
                "true_passes": len(truth),
                "detected": len(day_events),
                "detected_entries": entries,
                "detected_exits": exits,
                "end_occupancy": occ["occupancy"],
                "drift": abs(occ["occupancy"]),
            }
            report["days"].append(row)
            logger.info(
                "day %d: true=%d detected=%d end_occupancy=%d",
                day_index, row["true_passes"], row["detected"], row["end_occupancy"],
            )
    except Exception as exc:
        report["incomplete"] = True
        report["reason"] = str(exc)
        logger.error("simulation aborted: %s", exc)
    finally:
        runtime.stop()

    if report["days"]:
        drifts = [row["drift"] for row in report["days"]]
        report["summary"] = {
            "days": len(drifts),
            "total_true": sum(r["true_passes"] for r in report["days"]),
            "total_detected": sum(r["detected"] for r in report["days"]),
            "max_drift": max(drifts),
            "median_drift": statistics.median(drifts),
        }
    write_report(report, out_dir)
    return report


def write_report(report: dict, out_dir: Path) -> None:
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = [f"{'day':>4} {'true':>6} {'detected':>9} {'end_occ':>8} {'drift':>6}"]
    for row in report["days"]:
        lines.append(
            f"{row['day_index']:>4} {row['true_passes']:>6} {row['detected']:>9} "
            f"{row['end_occupancy']:>8} {row['drift']:>6}"
        )
    if "summary" in report:
        s = report["summary"]
        lines.append(
            f"days={s['days']} total_true={s['total_true']} total_detected={s['total_detected']} "
            f"max_drift={s['max_drift']} median_drift={s['median_drift']}"
        )
    if report.get("incomplete"):
        lines.append(f"INCOMPLETE: {report.get('reason', 'unknown')}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

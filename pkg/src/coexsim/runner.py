"""Single-run assembly, seeded campaign execution, and report aggregation.

A run is fully determined by (config, seed): the engine, RNG streams and all
output files are reproducible bit-exactly, independent of campaign
parallelism. Wall-clock timings are reported on stdout only so output
directories stay byte-identical across parallelism degrees.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Optional

from .channel_access import CamTrace, make_cam
from .config import ACCESS_MODES, CampaignConfig, ConfigError
from .engine import MS, US, Engine, RngStreams
from .metrics import OccupancyLedger, box_stats, goodput_per_device_bps, latency_samples_ns
from .nru import NruConfig, NruGnb, NruUe
from .radio import RadioEnvironment
from .scenario import Scenario, build_scenario, scenario_csv
from .traffic import CbrFlow
from .wigig import WigigAp, WigigConfig, WigigSta


@dataclass
class RunResult:
    label: str
    seed: int
    config_hash: str
    technologies: dict[str, str]
    occupancy: dict[str, float]
    latency_ns: dict[str, list[int]]  # device -> delivered packet delays
    goodput_bps: dict[str, float]
    event_count: int
    wall_s: float
    # Heavyweight handles for in-process inspection (not serialized).
    flows: list = field(default_factory=list, repr=False)
    env: object = field(default=None, repr=False)
    scenario: object = field(default=None, repr=False)
    gnbs: list = field(default_factory=list, repr=False)
    aps: list = field(default_factory=list, repr=False)
    ledger: object = field(default=None, repr=False)
    cam_trace: object = field(default=None, repr=False)
    cams: list = field(default_factory=list, repr=False)


def _cam_overrides(cfg: CampaignConfig) -> dict:
    return dict(
        cca_slot_ns=round(cfg.cca_slot_us * US),
        defer_ns=round(cfg.defer_us * US),
        max_cot_ns=round(cfg.max_cot_ms * MS),
        cws_min=cfg.cws_min,
        cws_max=cfg.cws_max,
        cat3_cws=cfg.cat3_cws,
        cat2_defer_ns=round(cfg.cat2_defer_us * US),
        duty_on_ns=round(cfg.duty_on_ms * MS),
        duty_off_ns=round(cfg.duty_off_ms * MS),
    )


def run_once(
    cfg: CampaignConfig,
    seed: int,
    out_dir: Optional[str] = None,
    traces: tuple[str, ...] = (),
) -> RunResult:
    t_wall = time.perf_counter()
    t_end = cfg.duration_ns
    engine = Engine()
    streams = RngStreams(seed)
    env = RadioEnvironment(
        engine,
        streams,
        fc_ghz=cfg.center_frequency_ghz,
        bandwidth_hz=cfg.bandwidth_ghz * 1e9,
        noise_figure_db=cfg.noise_figure_db,
        tx_power_dbm=cfg.tx_power_dbm,
    )
    cam_trace = CamTrace() if "cam" in traces else None
    mac_trace: Optional[list] = [] if "mac" in traces else None
    frame_trace: Optional[list] = [] if "frames" in traces else None
    if traces:
        env.emission_log = []

    scn = build_scenario(cfg, streams, env)
    ledger = OccupancyLedger()
    env.emission_observers.append(
        lambda em: ledger.record(em.source.operator, em.start, em.end)
    )

    flows: list[CbrFlow] = []
    gnbs: list[NruGnb] = []
    aps: list[WigigAp] = []
    cams = []
    for op in ("A", "B"):
        tech = cfg.technologies()[op]
        if tech == "NR-U":
            gnb_cat, ue_cat = ACCESS_MODES[cfg.nru_access]
            nru_cfg = NruConfig(
                bandwidth_hz=cfg.bandwidth_ghz * 1e9,
                tx_power_dbm=cfg.tx_power_dbm,
                mac_lead_slots=cfg.mac_lead_slots,
                harq_max_tx=cfg.harq_max_tx,
                overhead=cfg.nru_overhead,
                mcs_margin_db=cfg.mcs_margin_db,
            )
            overrides = _cam_overrides(cfg)
            for site in scn.sites[op]:
                cam = make_cam(
                    gnb_cat, site, env, engine,
                    streams.stream("cam", site.id), cam_trace,
                    ed_threshold_dbm=cfg.gnb_ed_threshold_dbm,
                    sensing_mode="omni", **overrides,
                )
                cams.append(cam)
                gnb = NruGnb(site, cam, env, engine, nru_cfg, t_end, mac_trace)
                gnbs.append(gnb)
                for user in scn.users_of_site(site):
                    ue_cam = make_cam(
                        ue_cat, user, env, engine,
                        streams.stream("cam", user.id), cam_trace,
                        ed_threshold_dbm=cfg.ue_ed_threshold_dbm,
                        sensing_mode="directional", **overrides,
                    )
                    cams.append(ue_cam)
                    ue = NruUe(user, ue_cam, gnb)
                    gnb.add_ue(ue)
                    flow = CbrFlow(
                        f"flow-{user.id}", user.id, cfg.load_mbps * 1e6,
                        cfg.packet_bytes, engine,
                        (lambda gnb=gnb, uid=user.id: lambda pkt: gnb.offer_packet(uid, pkt))(),
                        t_end,
                    )
                    flows.append(flow)
                gnb.start()
        else:
            wcfg = WigigConfig(
                tx_power_dbm=cfg.tx_power_dbm,
                ed_threshold_dbm=cfg.wigig_ed_threshold_dbm,
                preamble_threshold_dbm=cfg.wigig_preamble_threshold_dbm,
                cca_slot_ns=round(cfg.cca_slot_us * US),
                defer_ns=round(cfg.defer_us * US),
                cws_min=cfg.cws_min,
                cws_max=cfg.cws_max,
                retry_limit=cfg.wigig_retry_limit,
                sifs_ns=round(cfg.sifs_us * US),
                ack_ns=round(cfg.ack_us * US),
                ack_timeout_ns=round(cfg.ack_timeout_us * US),
                assoc_attempts=cfg.assoc_attempts,
            )
            for site in scn.sites[op]:
                ap = WigigAp(site, env, engine, wcfg, streams.stream("dcf", site.id), frame_trace)
                aps.append(ap)
                for k, user in enumerate(scn.users_of_site(site)):
                    sta = WigigSta(user, ap, engine, streams.stream("dcf", user.id), t0_offset=k * 100 * US)
                    sta.start()
                    flow = CbrFlow(
                        f"flow-{user.id}", user.id, cfg.load_mbps * 1e6,
                        cfg.packet_bytes, engine,
                        (lambda ap=ap, uid=user.id: lambda pkt: ap.offer_packet(uid, pkt))(),
                        t_end,
                    )
                    flows.append(flow)

    for flow in flows:
        flow.start(0)
    events = engine.run_until(t_end)
    wall_s = time.perf_counter() - t_wall

    occupancy = {
        op: ledger.occupied_within(op, 0, t_end) / t_end for op in ("A", "B")
    }
    result = RunResult(
        label=cfg.label,
        seed=seed,
        config_hash=cfg.config_hash(),
        technologies=cfg.technologies(),
        occupancy=occupancy,
        latency_ns=latency_samples_ns(flows),
        goodput_bps=goodput_per_device_bps(flows, t_end),
        event_count=events,
        wall_s=wall_s,
        flows=flows,
        env=env,
        scenario=scn,
        gnbs=gnbs,
        aps=aps,
        ledger=ledger,
        cam_trace=cam_trace,
        cams=cams,
    )
    if out_dir is not None:
        _write_run(result, scn, cfg, out_dir, cam_trace, mac_trace, frame_trace)
    return result


def _write_run(result, scn, cfg, out_dir, cam_trace, mac_trace, frame_trace) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "scope", "value"])
        for op in sorted(result.occupancy):
            w.writerow(["occupancy", op, f"{result.occupancy[op]:.9f}"])
        for dev in sorted(result.latency_ns):
            for delay in result.latency_ns[dev]:
                w.writerow(["latency_us", dev, f"{delay / 1000:.3f}"])
        for dev in sorted(result.goodput_bps):
            w.writerow(["goodput_mbps", dev, f"{result.goodput_bps[dev] / 1e6:.6f}"])
    with open(os.path.join(out_dir, "scenario.csv"), "w") as fh:
        fh.write(scenario_csv(scn))
    meta = {
        "label": result.label,
        "seed": result.seed,
        "config_hash": result.config_hash,
        "technologies": result.technologies,
        "event_count": result.event_count,
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cam_trace is not None:
        with open(os.path.join(out_dir, "cam_trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ns", "device", "category", "event"])
            w.writerows(cam_trace.rows)
    if mac_trace is not None:
        with open(os.path.join(out_dir, "mac_trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot_start_ns", "ue", "symbols", "mcs", "tb_bytes", "outcome"])
            w.writerows(mac_trace)
    if frame_trace is not None:
        with open(os.path.join(out_dir, "frame_trace.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ns", "ap", "sta", "bytes", "mcs", "retries", "outcome"])
            w.writerows(frame_trace)


# -- campaign ----------------------------------------------------------------


def _sanitize(label: str) -> str:
    return label.replace("/", "-")


def _campaign_worker(args) -> tuple[str, int, Optional[str], float]:
    cfg, seed, run_dir = args
    try:
        result = run_once(cfg, seed, out_dir=run_dir)
        return (cfg.label, seed, None, result.wall_s)
    except Exception as exc:  # keep the campaign alive on per-run crashes
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "error.txt"), "w") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        return (cfg.label, seed, f"{type(exc).__name__}: {exc}", 0.0)


def run_campaign(
    cfg: CampaignConfig,
    seeds: list[int],
    out_dir: str,
    parallelism: int = 1,
    verbose: bool = True,
) -> list[tuple[str, int, Optional[str], float]]:
    tasks = []
    for label in cfg.sweep_labels():
        label_cfg = cfg.for_label(label)
        for seed in seeds:
            run_dir = os.path.join(out_dir, "runs", f"{_sanitize(label)}_seed{seed}")
            tasks.append((label_cfg, seed, run_dir))
    if parallelism > 1:
        with get_context("spawn").Pool(parallelism) as pool:
            outcomes = pool.map(_campaign_worker, tasks)
    else:
        outcomes = [_campaign_worker(t) for t in tasks]
    if verbose:
        for label, seed, err, wall in outcomes:
            status = f"ERROR {err}" if err else f"ok ({wall:.1f}s)"
            print(f"run {label} seed={seed}: {status}")
    return outcomes


# -- report ------------------------------------------------------------------


def _median(xs: list[float]) -> float:
    ys = sorted(xs)
    n = len(ys)
    return ys[n // 2] if n % 2 else 0.5 * (ys[n // 2 - 1] + ys[n // 2])


def emit_report(in_dir: str, out_csv: str) -> None:
    runs_dir = os.path.join(in_dir, "runs")
    if not os.path.isdir(runs_dir):
        runs_dir = in_dir
    samples: dict[tuple[str, str, str], list[float]] = {}
    hashes: dict[str, str] = {}
    found = 0
    for name in sorted(os.listdir(runs_dir)):
        run_dir = os.path.join(runs_dir, name)
        meta_path = os.path.join(run_dir, "run.json")
        if not os.path.isfile(meta_path):
            continue
        with open(meta_path) as fh:
            meta = json.load(fh)
        label = meta["label"]
        if label in hashes and hashes[label] != meta["config_hash"]:
            raise ConfigError(
                f"mixed configurations for label '{label}' in {runs_dir}"
            )
        hashes[label] = meta["config_hash"]
        tech = meta["technologies"]
        found += 1
        per_dev_latency: dict[str, list[float]] = {}
        with open(os.path.join(run_dir, "metrics.csv")) as fh:
            for row in csv.DictReader(fh):
                metric, scope, value = row["metric"], row["scope"], float(row["value"])
                if metric == "occupancy":
                    samples.setdefault((label, "occupancy", tech[scope]), []).append(value)
                elif metric == "goodput_mbps":
                    op = scope.split("-", 1)[0]
                    samples.setdefault((label, "goodput_mbps", tech[op]), []).append(value)
                elif metric == "latency_us":
                    per_dev_latency.setdefault(scope, []).append(value)
        for dev, delays in per_dev_latency.items():
            op = dev.split("-", 1)[0]
            samples.setdefault((label, "latency_us", tech[op]), []).append(_median(delays))
    if not found:
        raise ConfigError(f"no run results found under {in_dir}")
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "metric", "technology", "min", "p5", "p50", "p95", "max"])
        for key in sorted(samples):
            b = box_stats(samples[key])
            w.writerow(
                list(key)
                + [f"{v:.6f}" for v in (b.min, b.p5, b.p50, b.p95, b.max)]
            )

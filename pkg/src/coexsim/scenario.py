"""Scenario construction: two-operator indoor layout, user drops, serving cells.

Sites sit in two symmetric rows (operator A at y=6.67 m, operator B at
y=13.33 m, 3 m height); users drop uniformly on the floor at 1.5 m, redrawn
until within 20 m (2D) of some own-operator site. The serving cell is the
own-operator site with the strongest average received power, beam-aligned.
"""
from __future__ import annotations

from dataclasses import dataclass

from .config import CampaignConfig
from .engine import RngStreams
from .radio import AntennaArray, Device, Position, RadioEnvironment

SITE_ARRAY = AntennaArray(rows=8, cols=8)
USER_ARRAY = AntennaArray(rows=4, cols=4)
SITE_HEIGHT = 3.0
USER_HEIGHT = 1.5
ROW_Y = {"A": 6.67, "B": 13.33}


def site_positions(cfg: CampaignConfig, operator: str) -> list[Position]:
    y = ROW_Y[operator]
    if cfg.sites_per_operator == 1:
        xs = [cfg.floor_x / 2]
    else:
        step = cfg.floor_x / cfg.sites_per_operator
        xs = [step / 2 + i * step for i in range(cfg.sites_per_operator)]
    return [Position(x, y, SITE_HEIGHT) for x in xs]


@dataclass
class Scenario:
    sites: dict[str, list[Device]]  # operator -> site devices
    users: dict[str, list[Device]]  # operator -> user devices

    def all_devices(self) -> list[Device]:
        out: list[Device] = []
        for op in sorted(self.sites):
            out.extend(self.sites[op])
        for op in sorted(self.users):
            out.extend(self.users[op])
        return out

    def users_of_site(self, site: Device) -> list[Device]:
        return [u for u in self.users[site.operator] if u.serving == site.id]


def build_scenario(
    cfg: CampaignConfig, streams: RngStreams, env: RadioEnvironment
) -> Scenario:
    sites: dict[str, list[Device]] = {}
    users: dict[str, list[Device]] = {}
    for op in ("A", "B"):
        tech = cfg.technologies()[op]
        site_role = "gnb" if tech == "NR-U" else "ap"
        user_role = "ue" if tech == "NR-U" else "sta"
        sites[op] = []
        for i, pos in enumerate(site_positions(cfg, op)):
            dev = Device(f"{op}-{site_role}{i}", op, site_role, pos, SITE_ARRAY)
            sites[op].append(dev)
            env.add_device(dev)
        rng = streams.stream("drop", op)
        users[op] = []
        for i in range(cfg.users_per_operator):
            while True:
                pos = Position(
                    rng.uniform(0.0, cfg.floor_x),
                    rng.uniform(0.0, cfg.floor_y),
                    USER_HEIGHT,
                )
                if min(pos.distance_2d(s.position) for s in sites[op]) <= cfg.max_site_distance_m:
                    break
            dev = Device(f"{op}-{user_role}{i}", op, user_role, pos, USER_ARRAY)
            env.add_device(dev)
            dev.serving = _serving_site(env, dev, sites[op]).id
            users[op].append(dev)
    return Scenario(sites, users)


def _serving_site(env: RadioEnvironment, user: Device, sites: list[Device]) -> Device:
    def rx_power(site: Device) -> float:
        return (
            env.tx_power_dbm
            + env.gain_db(site, user, user)
            + env.gain_db(user, site, site)
            - env.link_pathloss_db(site, user)
        )

    return max(sites, key=rx_power)


def scenario_csv(scn: Scenario) -> str:
    lines = ["device,operator,role,x,y,z,serving"]
    for dev in scn.all_devices():
        p = dev.position
        lines.append(
            f"{dev.id},{dev.operator},{dev.role},{p.x:.4f},{p.y:.4f},{p.z:.4f},{dev.serving or ''}"
        )
    return "\n".join(lines) + "\n"

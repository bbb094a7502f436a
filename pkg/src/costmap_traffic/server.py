"""Central traffic-management server.

Serves the prohibition and lane masks as latched topics, folds the per-robot
pose topics into one fleet snapshot, and owns the region reservation table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import mapio
from .bus import Domain, Durability
from .config import MapRef, ServerConfig
from .region_protocol import RegionTable, ServerDiagnostics, Ticket, server_step

logger = logging.getLogger(__name__)

PROHIBITION_TOPIC = "/prohibition_mask"
LANE_TOPIC = "/lane_mask"
FLEET_TOPIC = "/multi_robot"
TICKET_TOPIC = "/ticket"
TICKET_RESPONSE_TOPIC = "/ticket_response"
POSE_BASE = "pose"
SERVER_ID = "traffic_server"


@dataclass(frozen=True)
class PoseStamped:
    name: str
    x: float
    y: float
    yaw: float
    step: int

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass(frozen=True)
class FleetSnapshot:
    step: int
    entries: tuple[PoseStamped, ...] = ()

    def names(self) -> list[str]:
        return [e.name for e in self.entries]


@dataclass
class TrafficServer:
    domain: Domain
    config: ServerConfig = field(default_factory=ServerConfig)
    region_ids: tuple[str, ...] = ()
    priorities: dict = field(default_factory=dict)
    mask: mapio.MaskGrid | None = None
    lanes: mapio.LaneGrid | None = None
    diagnostics: ServerDiagnostics = field(default_factory=ServerDiagnostics)

    def __post_init__(self):
        self.table = RegionTable.for_regions(self.region_ids)
        self._poses = self.domain.subscribe("/*/" + POSE_BASE)
        self._tickets = self.domain.subscribe(TICKET_TOPIC)
        self._latest: dict[str, PoseStamped] = {}
        self.domain.create_topic(FLEET_TOPIC, Durability.VOLATILE, FleetSnapshot)
        self.domain.create_topic(TICKET_RESPONSE_TOPIC, Durability.VOLATILE, Ticket)
        self._served = False

    @classmethod
    def from_files(cls, domain: Domain, config: ServerConfig, prohibition: MapRef | None = None,
                   lane: MapRef | None = None, regions_path=None, priorities=None):
        """Load every configured file up front; any failure aborts startup."""
        mask = mapio.load_mask(prohibition.image, prohibition.meta) if prohibition else None
        lanes = mapio.load_lane_mask(lane.image, lane.meta) if lane else None
        regions = mapio.load_regions(regions_path) if regions_path else []
        return cls(domain, config, tuple(r.region_id for r in regions), dict(priorities or {}),
                   mask, lanes)

    def serve_masks(self) -> None:
        if self._served:
            return
        if self.mask is not None:
            self.domain.create_topic(PROHIBITION_TOPIC, Durability.LAST_VALUE, mapio.MaskGrid)
            self.domain.publish(PROHIBITION_TOPIC, self.mask, SERVER_ID)
        if self.lanes is not None:
            self.domain.create_topic(LANE_TOPIC, Durability.LAST_VALUE, mapio.LaneGrid)
            self.domain.publish(LANE_TOPIC, self.lanes, SERVER_ID)
        self._served = True

    def aggregate_poses(self, step: int) -> FleetSnapshot | None:
        for sample in self._poses.take():
            msg = sample.payload
            if not isinstance(msg, PoseStamped):
                continue
            prev = self._latest.get(msg.name)
            if prev is None or msg.step >= prev.step:
                self._latest[msg.name] = msg
        if step % self.config.aggregation_period:
            return None
        for name in [n for n, m in self._latest.items()
                     if step - m.step > self.config.staleness]:
            del self._latest[name]
        snap = FleetSnapshot(step, tuple(self._latest[n] for n in sorted(self._latest)))
        self.domain.publish(FLEET_TOPIC, snap, SERVER_ID)
        return snap

    def run_region_server(self) -> list[Ticket]:
        inbox = [s.payload for s in self._tickets.take()]
        responses = server_step(self.table, inbox, self.priorities, self.diagnostics)
        for r in responses:
            self.domain.publish(TICKET_RESPONSE_TOPIC, r, SERVER_ID)
        return responses

    def step(self, step: int) -> None:
        self.aggregate_poses(step)
        self.run_region_server()

"""Exclusive-region reservation: ticket messages, the server table, the robot client.

A robot asks for a region when it enters the region's inflation zone and gives
it back once it has left the zone again. The server grants a region only while
nobody else holds it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

from .geometry import InflationZone

logger = logging.getLogger(__name__)


class Kind(str, Enum):
    RESERVE = "reserve_request"
    RELEASE = "release_request"
    RESPONSE = "response"


class Result(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    NONE = "none"


class Mode(str, Enum):
    OUTSIDE = "outside"
    REQUESTING = "requesting"
    HOLDING = "holding"
    RELEASING = "releasing"


class ProtocolError(KeyError):
    """Ticket names a region the server does not know."""


@dataclass(frozen=True)
class Ticket:
    robot_id: str
    region_id: str
    kind: Kind
    result: Result = Result.NONE
    seq: int = 0

    def respond(self, result: Result) -> "Ticket":
        return Ticket(self.robot_id, self.region_id, Kind.RESPONSE, result, self.seq)

    def as_dict(self) -> dict:
        return {"robot_id": self.robot_id, "region_id": self.region_id,
                "kind": self.kind.value, "result": self.result.value, "seq": self.seq}

    @classmethod
    def from_dict(cls, d: dict) -> "Ticket":
        return cls(d["robot_id"], d["region_id"], Kind(d["kind"]),
                   Result(d.get("result", "none")), int(d["seq"]))


@dataclass
class RegionTable:
    holders: dict[str, str | None]

    @classmethod
    def for_regions(cls, region_ids) -> "RegionTable":
        return cls({rid: None for rid in region_ids})

    def holder(self, region_id: str) -> str | None:
        if region_id not in self.holders:
            raise ProtocolError(region_id)
        return self.holders[region_id]


def reserve_region(table: RegionTable, robot_id: str, region_id: str) -> Result:
    holder = table.holder(region_id)
    if holder is None:
        table.holders[region_id] = robot_id
        return Result.SUCCESS
    return Result.SUCCESS if holder == robot_id else Result.FAILURE


def release_region(table: RegionTable, robot_id: str, region_id: str) -> Result:
    # stricter than "release whenever held": only the holder may release
    if table.holder(region_id) == robot_id:
        table.holders[region_id] = None
        return Result.SUCCESS
    return Result.FAILURE


@dataclass
class ServerDiagnostics:
    malformed: int = 0
    unknown_region: int = 0


def _coerce(item) -> Ticket | None:
    if isinstance(item, Ticket):
        t = item
    elif isinstance(item, dict):
        try:
            t = Ticket.from_dict(item)
        except (KeyError, ValueError, TypeError):
            return None
    else:
        return None
    if not t.robot_id or not t.region_id or t.kind is Kind.RESPONSE:
        return None
    if t.result is not Result.NONE:
        return None
    return t


def server_step(table: RegionTable, inbox, priorities: dict | None = None,
                diagnostics: ServerDiagnostics | None = None) -> list[Ticket]:
    """Apply one batch of requests and answer each of them.

    Without ``priorities`` requests are handled in arrival order; with them,
    lower priority numbers go first and arrival order breaks ties.
    """
    diag = diagnostics if diagnostics is not None else ServerDiagnostics()
    tickets = []
    for item in inbox:
        t = _coerce(item)
        if t is None:
            diag.malformed += 1
            logger.warning("dropping malformed ticket %r", item)
            continue
        tickets.append(t)
    if priorities:
        order = sorted(range(len(tickets)),
                       key=lambda i: (priorities.get(tickets[i].robot_id, 0), i))
        tickets = [tickets[i] for i in order]
    responses = []
    for t in tickets:
        op = reserve_region if t.kind is Kind.RESERVE else release_region
        try:
            result = op(table, t.robot_id, t.region_id)
        except ProtocolError:
            diag.unknown_region += 1
            logger.warning("ticket for unknown region %r from %s", t.region_id, t.robot_id)
            result = Result.FAILURE
        responses.append(t.respond(result))
    return responses


@dataclass
class ClientState:
    """One robot's view of every region it has dealt with."""

    robot_id: str
    retry_period: float = 1.0
    modes: dict[str, Mode] = field(default_factory=dict)
    # region -> (seq, kind) of the request awaiting an answer
    outstanding: dict[str, tuple[int, Kind]] = field(default_factory=dict)
    retry_at: dict[str, float] = field(default_factory=dict)
    next_seq: int = 0
    mismatched: int = 0

    def mode(self, region_id: str) -> Mode:
        return self.modes.get(region_id, Mode.OUTSIDE)

    def held(self) -> list[str]:
        return sorted(r for r, m in self.modes.items() if m is Mode.HOLDING)

    def _request(self, region_id: str, kind: Kind) -> Ticket:
        t = Ticket(self.robot_id, region_id, kind, Result.NONE, self.next_seq)
        self.outstanding[region_id] = (self.next_seq, kind)
        self.next_seq += 1
        return t


def client_step(state: ClientState, pose, zone: InflationZone, now: float,
                inbox=()) -> list[Ticket]:
    """Advance the client for ``zone``'s region; returns requests to publish.

    ``inbox`` holds responses addressed to this robot for this region.
    """
    rid = zone.region.region_id
    for resp in inbox:
        pending = state.outstanding.get(rid)
        if (resp.robot_id != state.robot_id or resp.region_id != rid or pending is None
                or resp.seq != pending[0]):
            state.mismatched += 1
            logger.debug("%s: unmatched response %r", state.robot_id, resp)
            continue
        kind = pending[1]
        del state.outstanding[rid]
        mode = state.mode(rid)
        if kind is Kind.RESERVE and mode is Mode.REQUESTING:
            if resp.result is Result.SUCCESS:
                state.modes[rid] = Mode.HOLDING
            else:
                state.retry_at[rid] = now + state.retry_period
        elif kind is Kind.RELEASE and mode is Mode.RELEASING:
            if resp.result is Result.SUCCESS:
                state.modes[rid] = Mode.OUTSIDE
            else:
                state.retry_at[rid] = now + state.retry_period

    inside = zone.contains(pose[0], pose[1])
    mode = state.mode(rid)
    waiting = rid in state.outstanding
    if mode is Mode.OUTSIDE and inside:
        state.modes[rid] = Mode.REQUESTING
        return [state._request(rid, Kind.RESERVE)]
    if mode is Mode.REQUESTING and not waiting and now >= state.retry_at.get(rid, 0.0):
        return [state._request(rid, Kind.RESERVE)]
    if mode is Mode.HOLDING and not inside:
        state.modes[rid] = Mode.RELEASING
        return [state._request(rid, Kind.RELEASE)]
    if mode is Mode.RELEASING and not waiting and now >= state.retry_at.get(rid, 0.0):
        return [state._request(rid, Kind.RELEASE)]
    return []


@dataclass
class RegionClient:
    """Runs :func:`client_step` for every zone and routes responses by region."""

    state: ClientState
    zones: list[InflationZone]

    def step(self, pose, now: float, responses=()) -> list[Ticket]:
        by_region: dict[str, list[Ticket]] = {z.region.region_id: [] for z in self.zones}
        for r in responses:
            if r.robot_id != self.state.robot_id:
                continue
            if r.region_id in by_region:
                by_region[r.region_id].append(r)
            else:
                self.state.mismatched += 1
        out = []
        for zone in self.zones:
            out += client_step(self.state, pose, zone, now, by_region[zone.region.region_id])
        return out

    def holdings(self) -> dict[str, str]:
        return {rid: self.state.robot_id for rid in self.state.held()}

"""Deterministic discrete-event network core.

Integer-millisecond clock, FIFO latency links with observer taps, NAT
address translation, and the per-hostname load-balancer eligibility model.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "SimTime",
    "SimulationError",
    "Endpoint",
    "TcpFlags",
    "FoKind",
    "Packet",
    "Simulator",
    "Link",
    "NatGateway",
    "LoadBalancerModel",
    "nat_translate",
    "rotate_public_ip",
    "lb_select_ip",
]

SimTime = int  # milliseconds since simulation start


class SimulationError(Exception):
    pass


@dataclass(frozen=True, order=True)
class Endpoint:
    ip: str
    port: int

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")


class TcpFlags(enum.IntFlag):
    SYN = 1
    ACK = 2
    FIN = 4


class FoKind(enum.IntEnum):
    """Fast Open option tag as carried on the wire."""

    ABSENT = 0
    REQUEST = 1
    COOKIE = 2


@dataclass
class Packet:
    """A simulated TCP segment.

    ``ack_len`` is the number of payload bytes the segment acknowledges
    (0 = SYN only). ``conn_id`` is simulator bookkeeping and is excluded
    from captures; adversaries may read every other field.
    """

    src: Endpoint
    dst: Endpoint
    flags: TcpFlags
    fo_kind: FoKind = FoKind.ABSENT
    fo_cookie: Optional[bytes] = None
    ack_len: int = 0
    payload: bytes = b""
    conn_id: int = -1

    def __post_init__(self):
        if self.fo_kind is FoKind.COOKIE:
            if self.fo_cookie is None or len(self.fo_cookie) != 16:
                raise ValueError("Fast Open cookie option must carry exactly 16 bytes")
        elif self.fo_cookie is not None:
            raise ValueError("fo_cookie only valid with FoKind.COOKIE")

    def copy(self) -> "Packet":
        return replace(self)

    def is_syn(self) -> bool:
        return bool(self.flags & TcpFlags.SYN) and not self.flags & TcpFlags.ACK

    def is_synack(self) -> bool:
        return bool(self.flags & TcpFlags.SYN) and bool(self.flags & TcpFlags.ACK)


class Simulator:
    """Single-threaded event loop; ties broken by scheduling order."""

    def __init__(self):
        self.now: SimTime = 0
        self._heap: list = []
        self._seq = 0

    def schedule(self, at: SimTime, action: Callable[[], None]) -> int:
        if at < self.now:
            raise SimulationError(f"cannot schedule at t={at} (clock is {self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (int(at), self._seq, action))
        return self._seq

    def schedule_in(self, delay: SimTime, action: Callable[[], None]) -> int:
        return self.schedule(self.now + delay, action)

    def run(self, until: Optional[SimTime] = None) -> None:
        while self._heap:
            at, _, action = self._heap[0]
            if until is not None and at > until:
                break
            heapq.heappop(self._heap)
            self.now = at
            action()
        if until is not None and until > self.now:
            self.now = until

    @property
    def pending(self) -> int:
        return len(self._heap)


Tap = Callable[[SimTime, Packet], None]


class Link:
    """Unidirectional link with fixed one-way delay and FIFO delivery.

    Taps receive a byte-exact copy of every packet at send time. Lossless
    by default; a ``loss_hook`` returning True drops a packet in flight
    (after taps, which observe everything sent).
    """

    def __init__(self, sim: Simulator, one_way_delay: SimTime,
                 deliver: Callable[[Packet], None], label: str = ""):
        if one_way_delay < 0:
            raise ValueError("one_way_delay must be >= 0")
        self.sim = sim
        self.one_way_delay = int(one_way_delay)
        self.deliver = deliver
        self.label = label
        self.taps: list[Tap] = []
        self.loss_hook: Optional[Callable[[Packet], bool]] = None

    def attach_tap(self, tap: Tap) -> None:
        self.taps.append(tap)

    def send(self, pkt: Packet) -> Optional[SimTime]:
        for tap in self.taps:
            tap(self.sim.now, pkt.copy())
        if self.loss_hook is not None and self.loss_hook(pkt):
            return None
        arrival = self.sim.now + self.one_way_delay
        self.sim.schedule(arrival, lambda p=pkt: self.deliver(p))
        return arrival


class NatGateway:
    """Port-translating gateway; the public IP may change over time while
    local mappings persist."""

    def __init__(self, public_ip: str, first_port: int = 40001):
        self.public_ip = public_ip
        self._by_local: dict[Endpoint, int] = {}
        self._by_port: dict[int, Endpoint] = {}
        self._next_port = first_port

    def outbound(self, pkt: Packet) -> Packet:
        port = self._by_local.get(pkt.src)
        if port is None:
            port = self._next_port
            self._next_port += 1
            self._by_local[pkt.src] = port
            self._by_port[port] = pkt.src
        out = pkt.copy()
        out.src = Endpoint(self.public_ip, port)
        return out

    def inbound(self, pkt: Packet) -> Optional[Packet]:
        local = self._by_port.get(pkt.dst.port)
        if local is None:
            return None  # unmapped: dropped
        out = pkt.copy()
        out.dst = local
        return out

    def rotate_public_ip(self, new_ip: str) -> None:
        if new_ip == self.public_ip:
            raise ValueError("new public IP must differ from the current one")
        self.public_ip = new_ip


def nat_translate(pkt: Packet, gw: NatGateway, direction: str) -> Optional[Packet]:
    if direction == "outbound":
        return gw.outbound(pkt)
    if direction == "inbound":
        return gw.inbound(pkt)
    raise ValueError(f"unknown direction: {direction!r}")


def rotate_public_ip(gw: NatGateway, new_ip: str) -> None:
    gw.rotate_public_ip(new_ip)


@dataclass
class LoadBalancerModel:
    """One hostname served from a pool of addresses sharing a cookie secret.

    ``failure_prob_by_revisit[r-1]`` is the probability that the r-th
    revisit is served from an address the client holds no cookie for;
    revisits past the end of the list reuse the last probability.
    """

    hostname: str
    ip_pool: Sequence[str]
    failure_prob_by_revisit: Sequence[float] = field(default_factory=lambda: (0.0,))

    def __post_init__(self):
        if not self.ip_pool:
            raise ValueError("ip_pool must be non-empty")
        for p in self.failure_prob_by_revisit:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"failure probability out of [0,1]: {p}")

    def prob_for(self, revisit: int) -> float:
        if revisit < 1:
            raise ValueError("revisit index starts at 1")
        probs = self.failure_prob_by_revisit
        if not probs:
            return 0.0
        return probs[min(revisit, len(probs)) - 1]

    def select(self, revisit: int, rng: np.random.Generator,
               held_ips: Iterable[str] = ()) -> tuple[str, bool]:
        """Pick the serving address for this connection.

        Returns (address, abbreviated_eligible). ``held_ips`` are the pool
        addresses the client currently holds cookies for; on a miss the
        serving address avoids all of them.
        """
        held = [ip for ip in self.ip_pool if ip in set(held_ips)]
        if revisit < 1 or not held:
            return self.ip_pool[0], False
        miss = float(rng.random()) < self.prob_for(revisit)
        if not miss:
            return held[-1], True
        fresh = [ip for ip in self.ip_pool if ip not in set(held)]
        if not fresh:
            raise SimulationError(
                f"pool for {self.hostname!r} cannot express a miss: "
                "all addresses already carry cookies (enlarge ip_pool)")
        # deterministic: first fresh address in pool order
        return fresh[0], False


def lb_select_ip(model: LoadBalancerModel, revisit: int, rng: np.random.Generator,
                 held_ips: Iterable[str] = ()) -> tuple[str, bool]:
    return model.select(revisit, rng, held_ips)

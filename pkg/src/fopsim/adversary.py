"""Passive and host-based trackers reconstructing linkage from cookies.

The passive observer sees only wire bytes (built from Packet fields, never
simulator bookkeeping or keys); the host-based tracker is the server pool
itself and additionally knows which cookies it issued inside tickets.
Connected components of the resulting linkage graph are tracking profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .simcore import Endpoint, FoKind, Packet, SimTime

__all__ = [
    "ConnObservation",
    "HostObservation",
    "LinkageGraph",
    "observe",
    "link_passive",
    "link_host",
    "link_ip_baseline",
    "tracking_period",
    "cross_context_links",
    "cleartext_cookie_counts",
]


@dataclass
class ConnObservation:
    """What a wire tap learns about one connection attempt."""

    time: SimTime
    wire_src: Endpoint
    wire_dst: Endpoint
    cookie_in_syn: Optional[bytes] = None
    cookie_in_synack: Optional[bytes] = None
    payload_opaque: bool = False

    def line(self, idx: int) -> str:
        syn = self.cookie_in_syn.hex() if self.cookie_in_syn else "-"
        synack = self.cookie_in_synack.hex() if self.cookie_in_synack else "-"
        return (f"O {idx} t={self.time} src={self.wire_src.ip}:{self.wire_src.port} "
                f"dst={self.wire_dst.ip}:{self.wire_dst.port} "
                f"syn={syn} synack={synack} opaque={int(self.payload_opaque)}")

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "src": f"{self.wire_src.ip}:{self.wire_src.port}",
            "dst": f"{self.wire_dst.ip}:{self.wire_dst.port}",
            "cookie_in_syn": self.cookie_in_syn.hex() if self.cookie_in_syn else None,
            "cookie_in_synack": (self.cookie_in_synack.hex()
                                 if self.cookie_in_synack else None),
            "payload_opaque": self.payload_opaque,
        }


@dataclass
class HostObservation:
    """What the serving pool learns about one connection attempt."""

    time: SimTime
    client_wire_ip: str
    presented_cookie: Optional[bytes] = None
    issued_cookies: list[bytes] = field(default_factory=list)

    def record_issued(self, cookie: Optional[bytes]) -> None:
        if cookie is not None:
            self.issued_cookies.append(bytes(cookie))

    def line(self, idx: int) -> str:
        presented = self.presented_cookie.hex() if self.presented_cookie else "-"
        issued = ",".join(c.hex() for c in self.issued_cookies) or "-"
        return (f"H {idx} t={self.time} ip={self.client_wire_ip} "
                f"presented={presented} issued={issued}")

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "client_wire_ip": self.client_wire_ip,
            "presented_cookie": (self.presented_cookie.hex()
                                 if self.presented_cookie else None),
            "issued_cookies": [c.hex() for c in self.issued_cookies],
        }


def _payload_opaque(payload: bytes) -> bool:
    """A flight is opaque when it exposes no plaintext handshake metadata.

    The 3-byte record framing is public knowledge; unparseable payloads
    count as opaque."""
    if not payload:
        return False
    from .tlschan import REC_HANDSHAKE, ChannelError, parse_records
    try:
        records = parse_records(payload)
    except ChannelError:
        return True
    return all(tag != REC_HANDSHAKE for tag, _ in records)


def observe(packets: Iterable[tuple[SimTime, Packet]]) -> list[ConnObservation]:
    """One observation per connection attempt, built from wire bytes only."""
    observations: list[ConnObservation] = []
    waiting: dict[tuple[Endpoint, Endpoint], ConnObservation] = {}
    for t, pkt in packets:
        if pkt.is_syn():
            obs = ConnObservation(
                time=t, wire_src=pkt.src, wire_dst=pkt.dst,
                cookie_in_syn=(bytes(pkt.fo_cookie)
                               if pkt.fo_kind is FoKind.COOKIE else None),
                payload_opaque=_payload_opaque(pkt.payload))
            observations.append(obs)
            waiting[(pkt.src, pkt.dst)] = obs
        elif pkt.is_synack():
            obs = waiting.pop((pkt.dst, pkt.src), None)
            if obs is not None and pkt.fo_kind is FoKind.COOKIE:
                obs.cookie_in_synack = bytes(pkt.fo_cookie)
    return observations


class LinkageGraph:
    """Observations as nodes; labeled edges; components = profiles."""

    def __init__(self, observations: Sequence):
        self.nodes = list(observations)
        self.edges: list[tuple[int, int, str]] = []

    def add_edge(self, i: int, j: int, label: str) -> None:
        if i == j:
            raise ValueError("self edges are meaningless here")
        self.edges.append((min(i, j), max(i, j), label))

    def components(self) -> list[list[int]]:
        parent = list(range(len(self.nodes)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j, _ in self.edges:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[rj] = ri
        groups: dict[int, list[int]] = {}
        for idx in range(len(self.nodes)):
            groups.setdefault(find(idx), []).append(idx)
        return sorted(groups.values(), key=lambda g: g[0])

    def component_periods(self) -> list[SimTime]:
        periods = []
        for comp in self.components():
            times = [self.nodes[i].time for i in comp]
            periods.append(max(times) - min(times))
        return periods

    def to_lines(self) -> list[str]:
        lines = [obs.line(i) for i, obs in enumerate(self.nodes)]
        lines += [f"E {i} {j} {label}" for i, j, label in self.edges]
        return lines

    def to_dict(self) -> dict:
        return {
            "nodes": [obs.to_dict() for obs in self.nodes],
            "edges": [[i, j, label] for i, j, label in self.edges],
            "components": self.components(),
            "tracking_period_ms": tracking_period(self),
        }


def link_passive(observations: Sequence[ConnObservation]) -> LinkageGraph:
    """Link observations sharing identical cleartext cookie bytes, whether
    the bytes rode a SYN or a SYN-ACK."""
    graph = LinkageGraph(observations)
    sightings: dict[bytes, list[int]] = {}
    for idx, obs in enumerate(observations):
        for cookie in (obs.cookie_in_syn, obs.cookie_in_synack):
            if cookie is not None:
                sightings.setdefault(cookie, []).append(idx)
    for indices in sightings.values():
        for a in range(len(indices)):
            for b in range(a + 1, len(indices)):
                graph.add_edge(indices[a], indices[b], "same-cookie")
    return graph


def link_host(observations: Sequence[HostObservation]) -> LinkageGraph:
    """Pool-side linkage: same presented cookie, plus issuance chains
    (a cookie handed out in one connection presented in another)."""
    graph = LinkageGraph(observations)
    presented: dict[bytes, list[int]] = {}
    issued: dict[bytes, list[int]] = {}
    for idx, obs in enumerate(observations):
        if obs.presented_cookie is not None:
            presented.setdefault(bytes(obs.presented_cookie), []).append(idx)
        for cookie in obs.issued_cookies:
            issued.setdefault(bytes(cookie), []).append(idx)
    for indices in presented.values():
        for a in range(len(indices)):
            for b in range(a + 1, len(indices)):
                graph.add_edge(indices[a], indices[b], "same-cookie")
    for cookie, issuers in issued.items():
        for i in issuers:
            for j in presented.get(cookie, ()):
                if i != j:
                    graph.add_edge(i, j, "issuance-chain")
    return graph


def link_ip_baseline(observations: Sequence) -> LinkageGraph:
    """Address-based tracking baseline; kept apart from cookie linkage."""
    graph = LinkageGraph(observations)
    by_ip: dict[str, list[int]] = {}
    for idx, obs in enumerate(observations):
        ip = obs.wire_src.ip if isinstance(obs, ConnObservation) else obs.client_wire_ip
        by_ip.setdefault(ip, []).append(idx)
    for indices in by_ip.values():
        for a in range(len(indices)):
            for b in range(a + 1, len(indices)):
                graph.add_edge(indices[a], indices[b], "same-ip")
    return graph


def tracking_period(graph: LinkageGraph) -> SimTime:
    """Longest observation span within any single profile."""
    periods = graph.component_periods()
    return max(periods) if periods else 0


def cross_context_links(graph: LinkageGraph, truth_labels: Sequence[str]) -> int:
    """Edges joining observations generated under different ground-truth
    labels; the labels come from the scenario script, not the attacker."""
    if len(truth_labels) != len(graph.nodes):
        raise ValueError("one truth label per observation required")
    return sum(1 for i, j, _ in graph.edges if truth_labels[i] != truth_labels[j])


def cleartext_cookie_counts(packets: Iterable[tuple[SimTime, Packet]]) -> dict[bytes, int]:
    """How often each cookie byte string rode the wire in the clear."""
    counts: dict[bytes, int] = {}
    for _, pkt in packets:
        if pkt.fo_kind is FoKind.COOKIE:
            cookie = bytes(pkt.fo_cookie)
            counts[cookie] = counts.get(cookie, 0) + 1
    return counts

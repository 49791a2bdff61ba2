"""Hosts, server pools, and the simulated internet tying the layers together.

A World owns the event loop and routes packets between client hosts
(optionally behind a NAT gateway) and server pools. All one-way delay sits
on the client-side access links, so a request/response exchange completes
in exactly two link delays when processing time is zero.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import transport
from .adversary import HostObservation
from .cookies import ServerCookieKey
from .rngtools import SeedTree
from .simcore import (
    Endpoint,
    Link,
    LoadBalancerModel,
    NatGateway,
    Packet,
    SimTime,
    Simulator,
    TcpFlags,
)
from .tlschan import (
    DEFAULT_CONTEXT,
    ChannelError,
    ClientSession,
    ClientTlsCache,
    ServerSession,
)
from .transport import ClientConn, TcpVariant, TfoClientCache

__all__ = [
    "ConnRecord",
    "FetchRecord",
    "ServerPool",
    "ServerHost",
    "ClientHost",
    "GatewayNode",
    "WireTap",
    "World",
    "schedule_visit",
    "schedule_fetch",
]

SERVER_PORT = 443


@dataclass
class ConnRecord:
    """Ground-truth record of one connection attempt (outside attacker view)."""

    conn_id: int
    client_id: str
    hostname: str
    serving_ip: str
    variant: TcpVariant
    truth_label: str
    context_label: Optional[str]
    t_start: SimTime
    t_done: Optional[SimTime] = None
    zero_rtt_accepted: bool = False
    attempted_abbreviated: bool = False
    lb_eligible: bool = False
    aborted: bool = False

    @property
    def duration(self) -> Optional[int]:
        if self.t_done is None:
            return None
        return self.t_done - self.t_start


@dataclass
class FetchRecord:
    """One website fetch: a primary connection followed by parallel
    secondaries; done when the slowest connection finishes."""

    client_id: str
    primary: str
    t_start: SimTime
    t_done: Optional[SimTime] = None
    records: list[ConnRecord] = field(default_factory=list)

    @property
    def duration(self) -> Optional[int]:
        if self.t_done is None:
            return None
        return self.t_done - self.t_start


class WireTap:
    """Passive observer: byte-exact copies of packets at send time."""

    def __init__(self):
        self.packets: list[tuple[SimTime, Packet]] = []

    def __call__(self, t: SimTime, pkt: Packet) -> None:
        self.packets.append((t, pkt))


class ServerPool:
    """Addresses serving one or more hostnames behind a shared cookie
    secret and a shared session-ticket store."""

    def __init__(self, world: "World", hostnames: Sequence[str],
                 ips: Sequence[str], failure_probs: Sequence[float] = (0.0,),
                 *, fop_enabled: bool = True, tickets_per_connection: int = 1,
                 response_body: bytes = b"resp"):
        self.world = world
        self.hostnames = tuple(hostnames)
        self.rng = world.seeds.stream("pool", self.hostnames[0])
        self.cookie_key = ServerCookieKey.generate(
            world.seeds.stream("poolkey", self.hostnames[0]))
        self.ticket_store: dict[bytes, bytes] = {}
        self.lb = LoadBalancerModel(self.hostnames[0], list(ips),
                                    list(failure_probs))
        self.fop_enabled = fop_enabled
        self.tickets_per_connection = tickets_per_connection
        self.response_body = response_body
        self.host_observations: list[HostObservation] = []
        self.servers = {ip: ServerHost(world, ip, self) for ip in ips}

    def cookie_gen(self, client_ip: str) -> bytes:
        """Pool-side cookie API, independent of connection handling."""
        return transport.cookie_gen(self.cookie_key, client_ip, self.rng)


class ServerHost:
    def __init__(self, world: "World", ip: str, pool: ServerPool,
                 port: int = SERVER_PORT):
        self.world = world
        self.endpoint = Endpoint(ip, port)
        self.pool = pool
        self._conns: dict[Endpoint, tuple[transport.ServerConn, ServerSession]] = {}
        world._register_server(self)

    def receive(self, pkt: Packet) -> None:
        now = self.world.sim.now
        if pkt.is_syn():
            conn = transport.ServerConn(client=pkt.src, key=self.pool.cookie_key,
                                        rng=self.pool.rng)
            obs = HostObservation(time=now, client_wire_ip=pkt.src.ip)
            session = ServerSession(
                hostnames=self.pool.hostnames,
                cookie_key=self.pool.cookie_key,
                ticket_store=self.pool.ticket_store,
                rng=self.pool.rng,
                client_ip=pkt.src.ip,
                fop_enabled=self.pool.fop_enabled,
                tickets_per_connection=self.pool.tickets_per_connection,
                response_body=self.pool.response_body,
                on_ticket_issued=lambda t: obs.record_issued(t.embedded_cookie))
            synack, deliver = conn.accept(pkt)
            obs.presented_cookie = conn.presented_cookie
            obs.record_issued(conn.issued_cookie)
            if deliver:
                session.on_bytes(deliver, now)
                synack.payload = session.take_output()
            self._conns[pkt.src] = (conn, session)
            self.pool.host_observations.append(obs)
            self.world._host_obs.append(obs)
            self.world.send_to_client(synack)
        else:
            entry = self._conns.get(pkt.src)
            if entry is None or not pkt.payload:
                return
            _, session = entry
            session.on_bytes(pkt.payload, now)
            out = session.take_output()
            if out:
                self.world.send_to_client(Packet(
                    src=self.endpoint, dst=pkt.src, flags=TcpFlags.ACK,
                    payload=out, conn_id=pkt.conn_id))


class ClientHost:
    """A simulated end host: one kernel cookie cache and one TLS cache,
    shared by everything the host runs."""

    def __init__(self, world: "World", client_id: str, ip: str,
                 gateway: Optional["GatewayNode"] = None):
        self.world = world
        self.client_id = client_id
        self.ip = ip
        self.gateway = gateway
        self.kernel = TfoClientCache()
        self.tls = ClientTlsCache()
        self.rng = world.seeds.stream("client", client_id)
        self.records: list[ConnRecord] = []
        self._next_port = 50001
        self._conns: dict[int, tuple[ClientConn, ClientSession, ConnRecord,
                                     Optional[Callable]]] = {}
        self._visit_counts: dict[str, int] = {}
        self._last_served: dict[str, str] = {}
        self._lb_rngs: dict[str, object] = {}

    # -- host lifecycle events -------------------------------------------

    def change_ip(self, new_ip: str) -> None:
        self.world._readdress_client(self, new_ip)

    def clear_tls_cache(self) -> None:
        self.tls.clear()

    def context_id(self, label: Optional[str]) -> bytes:
        if label is None:
            return DEFAULT_CONTEXT
        return hashlib.blake2b(f"{self.client_id}|{label}".encode(),
                               digest_size=16).digest()

    # -- connections ------------------------------------------------------

    def _lb_rng(self, hostname: str):
        rng = self._lb_rngs.get(hostname)
        if rng is None:
            rng = self.world.seeds.stream("lb", self.client_id, hostname)
            self._lb_rngs[hostname] = rng
        return rng

    def open_connection(self, hostname: str, *, variant: TcpVariant,
                        truth_label: str = "", context_label: Optional[str] = None,
                        lifetime: Optional[int] = None,
                        request: bytes = b"GET /",
                        on_done: Optional[Callable[[ConnRecord], None]] = None,
                        ) -> ConnRecord:
        world = self.world
        now = world.sim.now
        pool = world.pool_for(hostname)

        revisit = self._visit_counts.get(hostname, 0)
        if variant is TcpVariant.TFO:
            held = self.kernel.ips_with_cookie(self.ip, pool.lb.ip_pool, SERVER_PORT)
        else:
            held = [self._last_served[hostname]] if hostname in self._last_served else []
        serving_ip, eligible = pool.lb.select(revisit, self._lb_rng(hostname), held)
        self._visit_counts[hostname] = revisit + 1
        self._last_served[hostname] = serving_ip

        ctx = self.context_id(context_label) if variant is TcpVariant.FOP \
            else DEFAULT_CONTEXT
        entry = self.tls.take(hostname, ctx, now,
                              lifetime if variant is TcpVariant.FOP else None)
        if (variant is TcpVariant.FOP and entry is not None
                and entry.ticket.embedded_cookie is not None):
            transport.cookie_set(self.kernel, self.ip, serving_ip, SERVER_PORT,
                                 entry.ticket.embedded_cookie)

        port = self._next_port
        self._next_port += 1
        record = ConnRecord(conn_id=world.next_conn_id(), client_id=self.client_id,
                            hostname=hostname, serving_ip=serving_ip,
                            variant=variant, truth_label=truth_label,
                            context_label=context_label, t_start=now,
                            lb_eligible=eligible)
        session = ClientSession(
            hostname, self.rng, fop=(variant is TcpVariant.FOP), entry=entry,
            request=request,
            on_ticket=lambda t, ts, h=hostname, c=ctx: self.tls.store(h, c, t, ts),
            on_response=lambda _body, ts, p=port: self._finish(p, ts))
        conn = ClientConn(conn_id=record.conn_id, variant=variant,
                          src=Endpoint(self.ip, port),
                          dst=Endpoint(serving_ip, SERVER_PORT),
                          cache=self.kernel, send=self._send,
                          on_data=lambda data, ts, p=port: self._feed_tls(p, data, ts),
                          now=lambda: world.sim.now)
        self._conns[port] = (conn, session, record, on_done)
        self.records.append(record)
        conn.connect(session.first_flight())
        record.attempted_abbreviated = conn.attempted_cookie is not None
        return record

    def _feed_tls(self, port: int, data: bytes, ts: SimTime) -> None:
        conn, session, record, _ = self._conns[port]
        try:
            session.on_bytes(data, ts)
        except ChannelError:
            record.aborted = True
            return
        out = session.take_output()
        if out:
            conn.send_app(out)

    def _finish(self, port: int, ts: SimTime) -> None:
        conn, _session, record, on_done = self._conns[port]
        record.t_done = ts
        record.zero_rtt_accepted = conn.zero_rtt_accepted
        if on_done is not None:
            on_done(record)

    def _send(self, pkt: Packet) -> None:
        if self.gateway is not None:
            self.gateway.send_outbound(pkt)
        else:
            self.world._uplink_for(self).send(pkt)

    def receive(self, pkt: Packet) -> None:
        entry = self._conns.get(pkt.dst.port)
        if entry is not None:
            entry[0].on_packet(pkt)


class GatewayNode:
    """NAT gateway plus its WAN links; local hops cost zero delay."""

    def __init__(self, world: "World", gateway: NatGateway):
        self.world = world
        self.gateway = gateway
        self.locals: dict[str, ClientHost] = {}
        self.wan_up = Link(world.sim, world.delay_up, world._arrive_public,
                           label=f"wan-up:{gateway.public_ip}")
        self.wan_down = Link(world.sim, world.delay_down, self._deliver_local,
                             label=f"wan-down:{gateway.public_ip}")

    @property
    def public_ip(self) -> str:
        return self.gateway.public_ip

    def send_outbound(self, pkt: Packet) -> None:
        self.wan_up.send(self.gateway.outbound(pkt))

    def _deliver_local(self, pkt: Packet) -> None:
        local = self.gateway.inbound(pkt)
        if local is None:
            self.world._drop(pkt, "nat-unmapped")
            return
        client = self.locals.get(local.dst.ip)
        if client is None:
            self.world._drop(pkt, "nat-no-local-host")
            return
        client.receive(local)


class World:
    """One deterministic scenario universe."""

    def __init__(self, seed: int, one_way_delay_ms: int = 30,
                 delay_down_ms: Optional[int] = None):
        self.sim = Simulator()
        self.seeds = SeedTree(seed)
        self.delay_up = int(one_way_delay_ms)
        self.delay_down = int(one_way_delay_ms if delay_down_ms is None
                              else delay_down_ms)
        self.pools: list[ServerPool] = []
        self.clients: dict[str, ClientHost] = {}
        self.gateways: list[GatewayNode] = []
        self.dropped: list[tuple[SimTime, Packet, str]] = []
        self._pools_by_hostname: dict[str, ServerPool] = {}
        self._servers_by_ip: dict[str, ServerHost] = {}
        self._clients_by_public_ip: dict[str, ClientHost] = {}
        self._gateways_by_public_ip: dict[str, GatewayNode] = {}
        self._client_links: dict[str, tuple[Link, Link]] = {}
        self._taps: list[Callable] = []
        self._conn_ids = itertools.count(1)
        self._host_obs: list[HostObservation] = []

    # -- topology construction -------------------------------------------

    def add_pool(self, hostnames, ips, failure_probs=(0.0,), **kw) -> ServerPool:
        if isinstance(hostnames, str):
            hostnames = (hostnames,)
        pool = ServerPool(self, hostnames, ips, failure_probs, **kw)
        self.pools.append(pool)
        for h in pool.hostnames:
            if h in self._pools_by_hostname:
                raise ValueError(f"hostname already registered: {h}")
            self._pools_by_hostname[h] = pool
        return pool

    def add_gateway(self, public_ip: str) -> GatewayNode:
        node = GatewayNode(self, NatGateway(public_ip))
        self.gateways.append(node)
        self._gateways_by_public_ip[public_ip] = node
        for tap in self._taps:
            node.wan_up.attach_tap(tap)
            node.wan_down.attach_tap(tap)
        return node

    def add_client(self, client_id: str, ip: str,
                   gateway: Optional[GatewayNode] = None) -> ClientHost:
        if client_id in self.clients:
            raise ValueError(f"duplicate client id: {client_id}")
        client = ClientHost(self, client_id, ip, gateway)
        self.clients[client_id] = client
        if gateway is not None:
            gateway.locals[ip] = client
        else:
            uplink = Link(self.sim, self.delay_up, self._arrive_public,
                          label=f"up:{client_id}")
            downlink = Link(self.sim, self.delay_down, client.receive,
                            label=f"down:{client_id}")
            for tap in self._taps:
                uplink.attach_tap(tap)
                downlink.attach_tap(tap)
            self._client_links[client_id] = (uplink, downlink)
            self._clients_by_public_ip[ip] = client
        return client

    def attach_tap(self) -> WireTap:
        """Observe every packet on the public side of the network."""
        tap = WireTap()
        self._taps.append(tap)
        for up, down in self._client_links.values():
            up.attach_tap(tap)
            down.attach_tap(tap)
        for node in self.gateways:
            node.wan_up.attach_tap(tap)
            node.wan_down.attach_tap(tap)
        return tap

    # -- dynamic address events --------------------------------------------

    def rotate_gateway(self, node: GatewayNode, new_ip: str) -> None:
        del self._gateways_by_public_ip[node.public_ip]
        node.gateway.rotate_public_ip(new_ip)
        self._gateways_by_public_ip[new_ip] = node

    def _readdress_client(self, client: ClientHost, new_ip: str) -> None:
        if client.gateway is not None:
            del client.gateway.locals[client.ip]
            client.gateway.locals[new_ip] = client
        else:
            del self._clients_by_public_ip[client.ip]
            self._clients_by_public_ip[new_ip] = client
        client.ip = new_ip

    # -- routing -----------------------------------------------------------

    def _register_server(self, server: ServerHost) -> None:
        self._servers_by_ip[server.endpoint.ip] = server

    def _uplink_for(self, client: ClientHost) -> Link:
        return self._client_links[client.client_id][0]

    def _arrive_public(self, pkt: Packet) -> None:
        server = self._servers_by_ip.get(pkt.dst.ip)
        if server is None:
            self._drop(pkt, "no-route")
            return
        server.receive(pkt)

    def send_to_client(self, pkt: Packet) -> None:
        node = self._gateways_by_public_ip.get(pkt.dst.ip)
        if node is not None:
            node.wan_down.send(pkt)
            return
        client = self._clients_by_public_ip.get(pkt.dst.ip)
        if client is not None:
            self._client_links[client.client_id][1].send(pkt)
            return
        self._drop(pkt, "no-route")

    def _drop(self, pkt: Packet, reason: str) -> None:
        self.dropped.append((self.sim.now, pkt, reason))

    # -- misc ----------------------------------------------------------------

    def pool_for(self, hostname: str) -> ServerPool:
        pool = self._pools_by_hostname.get(hostname)
        if pool is None:
            raise KeyError(f"no pool serves hostname {hostname!r}")
        return pool

    def next_conn_id(self) -> int:
        return next(self._conn_ids)

    def host_observations(self) -> list[HostObservation]:
        """All pools' observations in exact SYN-arrival order."""
        return list(self._host_obs)

    def all_records(self) -> list[ConnRecord]:
        recs = []
        for client in self.clients.values():
            recs.extend(client.records)
        recs.sort(key=lambda r: (r.t_start, r.conn_id))
        return recs

    def run(self, until: Optional[SimTime] = None) -> None:
        self.sim.run(until)


def schedule_visit(world: World, client: ClientHost, hostname: str,
                   at: SimTime, **kw) -> None:
    world.sim.schedule(at, lambda: client.open_connection(hostname, **kw))


def schedule_fetch(world: World, client: ClientHost, primary: str,
                   secondaries: Sequence[str], at: SimTime, *,
                   on_done: Optional[Callable[[FetchRecord], None]] = None,
                   **conn_kw) -> FetchRecord:
    """Fetch a site: connect to the primary host, then to every secondary
    in parallel; the fetch completes with the slowest connection."""
    fetch = FetchRecord(client_id=client.client_id, primary=primary, t_start=at)
    remaining = {"n": len(secondaries)}

    def finish(t: SimTime) -> None:
        fetch.t_done = t
        if on_done is not None:
            on_done(fetch)

    def secondary_done(rec: ConnRecord) -> None:
        remaining["n"] -= 1
        if remaining["n"] == 0:
            finish(max(r.t_done for r in fetch.records[1:]))

    def primary_done(rec: ConnRecord) -> None:
        if not secondaries:
            finish(rec.t_done)
            return
        for h in secondaries:
            fetch.records.append(
                client.open_connection(h, on_done=secondary_done, **conn_kw))

    def start() -> None:
        fetch.records.append(
            client.open_connection(primary, on_done=primary_done, **conn_kw))

    world.sim.schedule(at, start)
    return fetch

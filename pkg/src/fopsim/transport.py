"""Client and server TCP state machines for the three handshake variants.

Standard: plain three-way handshake, data only after establishment.
TFO: cached cookies keyed by the exact (src IP, dst IP, dst port) triple
authorize data in the SYN; the SYN-ACK of an initial or rejected attempt
carries a fresh plaintext cookie which replaces the cached one.
FOP: the TCP leg is wire-identical to TFO's 0-RTT flows, but cookies enter
the cache only through the cookie_set API, are deleted on use, and a
plaintext cookie in a SYN-ACK is discarded instead of cached.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import cookies
from .simcore import Endpoint, FoKind, Packet, SimTime, TcpFlags

__all__ = [
    "SYN_PAYLOAD_BUDGET",
    "TcpVariant",
    "TfoClientCache",
    "ClientPhase",
    "ClientConn",
    "ServerConn",
    "cookie_gen",
    "cookie_set",
    "cookie_delete",
]

SYN_PAYLOAD_BUDGET = 1400  # one data-bearing segment


class TcpVariant(enum.Enum):
    STANDARD = "standard"
    TFO = "tfo"
    FOP = "fop"


class TfoClientCache:
    """Kernel-style Fast Open cookie cache, one per simulated host.

    Shared by every application on the host; survives application
    restarts, browser modes, and client address changes (stale entries
    simply stop matching because the source IP is part of the key).
    """

    def __init__(self):
        self._entries: dict[tuple[str, str, int], bytes] = {}

    def get(self, src_ip: str, dst_ip: str, dst_port: int) -> Optional[bytes]:
        return self._entries.get((src_ip, dst_ip, dst_port))

    def set(self, src_ip: str, dst_ip: str, dst_port: int, cookie: bytes) -> None:
        if len(cookie) != cookies.COOKIE_LEN:
            raise ValueError("cookie must be 16 bytes")
        self._entries[(src_ip, dst_ip, dst_port)] = bytes(cookie)

    def delete(self, src_ip: str, dst_ip: str, dst_port: int) -> None:
        self._entries.pop((src_ip, dst_ip, dst_port), None)

    def ips_with_cookie(self, src_ip: str, candidate_ips, dst_port: int) -> list[str]:
        return [ip for ip in candidate_ips
                if (src_ip, ip, dst_port) in self._entries]

    def __len__(self) -> int:
        return len(self._entries)


def cookie_gen(key: cookies.ServerCookieKey, client_ip: str,
               rng: np.random.Generator) -> bytes:
    """Server-side API: a fresh cookie for a specific client, independent
    of any connection handling."""
    return cookies.mint(key, client_ip, rng)


def cookie_set(cache: TfoClientCache, src_ip: str, dst_ip: str, dst_port: int,
               cookie: bytes) -> None:
    """Client-side API: place a specific cookie into the kernel cache."""
    cache.set(src_ip, dst_ip, dst_port, cookie)


def cookie_delete(cache: TfoClientCache, src_ip: str, dst_ip: str,
                  dst_port: int) -> None:
    """Client-side API: drop a cached cookie; missing entries are a no-op."""
    cache.delete(src_ip, dst_ip, dst_port)


class ClientPhase(enum.Enum):
    IDLE = "idle"
    SYN_SENT = "syn_sent"
    ESTABLISHED = "established"
    CLOSED = "closed"


class ClientConn:
    """One client-side connection attempt."""

    def __init__(self, conn_id: int, variant: TcpVariant, src: Endpoint,
                 dst: Endpoint, cache: TfoClientCache,
                 send: Callable[[Packet], None],
                 on_data: Callable[[bytes, SimTime], None],
                 now: Callable[[], SimTime]):
        self.conn_id = conn_id
        self.variant = variant
        self.src = src
        self.dst = dst
        self.cache = cache
        self._send = send
        self._on_data = on_data
        self._now = now

        self.phase = ClientPhase.IDLE
        self.attempted_cookie: Optional[bytes] = None
        self.zero_rtt_accepted = False
        self.t_first_send: Optional[SimTime] = None
        self.syn_payload: bytes = b""
        self.pending_payload: bytes = b""

    def connect(self, first_flight: bytes = b"",
                cookie_hint: Optional[bytes] = None) -> None:
        if self.phase is not ClientPhase.IDLE:
            raise RuntimeError("connection already started")
        if len(first_flight) > SYN_PAYLOAD_BUDGET:
            raise ValueError("SYN payload exceeds budget")

        fo_kind = FoKind.ABSENT
        fo_cookie = None
        payload = b""
        if self.variant is TcpVariant.STANDARD:
            if cookie_hint is not None:
                raise ValueError("standard variant takes no cookie")
            self.pending_payload = first_flight
        else:
            cookie = cookie_hint
            if cookie is None:
                cookie = self.cache.get(self.src.ip, self.dst.ip, self.dst.port)
            if cookie is not None:
                fo_kind = FoKind.COOKIE
                fo_cookie = cookie
                payload = first_flight
                self.attempted_cookie = cookie
                self.syn_payload = first_flight
                if self.variant is TcpVariant.FOP:
                    # single use: consumed whether or not the server accepts
                    self.cache.delete(self.src.ip, self.dst.ip, self.dst.port)
            else:
                if self.variant is TcpVariant.TFO:
                    fo_kind = FoKind.REQUEST
                self.pending_payload = first_flight

        self.phase = ClientPhase.SYN_SENT
        self.t_first_send = self._now()
        self._send(Packet(src=self.src, dst=self.dst, flags=TcpFlags.SYN,
                          fo_kind=fo_kind, fo_cookie=fo_cookie,
                          payload=payload, conn_id=self.conn_id))

    def on_packet(self, pkt: Packet) -> None:
        if pkt.is_synack():
            self._on_synack(pkt)
        elif self.phase is ClientPhase.ESTABLISHED and pkt.payload:
            self._on_data(pkt.payload, self._now())

    def _on_synack(self, pkt: Packet) -> None:
        if self.phase is not ClientPhase.SYN_SENT:
            return  # unknown or duplicate: ignored
        if pkt.fo_kind is FoKind.COOKIE:
            if self.variant is TcpVariant.TFO:
                # initial issuance or cookie_2 replacement, Fast Open rules
                self.cache.set(self.src.ip, self.dst.ip, self.dst.port,
                               pkt.fo_cookie)
            # FOP: plaintext cookies are discarded; fresh ones arrive sealed
        self.phase = ClientPhase.ESTABLISHED

        if self.syn_payload and pkt.ack_len == len(self.syn_payload):
            self.zero_rtt_accepted = True
            reply = b""
        elif self.syn_payload:
            reply = self.syn_payload  # rejected: retransmit after the ACK
        else:
            reply = self.pending_payload
        self.pending_payload = b""
        self._send(Packet(src=self.src, dst=self.dst, flags=TcpFlags.ACK,
                          payload=reply, conn_id=self.conn_id))
        if pkt.payload:
            self._on_data(pkt.payload, self._now())

    def send_app(self, data: bytes) -> None:
        if self.phase is not ClientPhase.ESTABLISHED:
            raise RuntimeError("connection not established")
        self._send(Packet(src=self.src, dst=self.dst, flags=TcpFlags.ACK,
                          payload=data, conn_id=self.conn_id))


@dataclass
class ServerConn:
    """Server-side record of one connection attempt."""

    client: Endpoint
    key: cookies.ServerCookieKey
    rng: np.random.Generator
    phase: str = "listen"
    accepted_syn_payload: bool = False
    presented_cookie: Optional[bytes] = None
    issued_cookie: Optional[bytes] = None

    def accept(self, syn: Packet) -> tuple[Packet, bytes]:
        """Process a SYN; returns (SYN-ACK, payload delivered upward).

        The returned payload is empty unless the SYN carried a validated
        cookie: data never reaches the application otherwise.
        """
        if not syn.is_syn():
            raise ValueError("not a SYN")
        ack_len = 0
        deliver = b""
        fo_kind = FoKind.ABSENT
        fo_cookie = None
        if syn.fo_kind is FoKind.REQUEST:
            self.issued_cookie = cookies.mint(self.key, syn.src.ip, self.rng)
            fo_kind, fo_cookie = FoKind.COOKIE, self.issued_cookie
        elif syn.fo_kind is FoKind.COOKIE:
            self.presented_cookie = syn.fo_cookie
            if cookies.validate(syn.fo_cookie, self.key, syn.src.ip):
                self.accepted_syn_payload = True
                ack_len = len(syn.payload)
                deliver = syn.payload
            else:
                # invalid: drop data, hand out a replacement cookie
                self.issued_cookie = cookies.mint(self.key, syn.src.ip, self.rng)
                fo_kind, fo_cookie = FoKind.COOKIE, self.issued_cookie
        self.phase = "syn_received"
        synack = Packet(src=syn.dst, dst=syn.src,
                        flags=TcpFlags.SYN | TcpFlags.ACK,
                        fo_kind=fo_kind, fo_cookie=fo_cookie,
                        ack_len=ack_len, conn_id=syn.conn_id)
        return synack, deliver

"""Simplified TLS 1.3 channel with RTT-faithful full and 0-RTT handshakes.

Key exchange is a real X25519 agreement and records are AES-GCM sealed, so
confidentiality against wire observers holds mechanically, not by fiat.
Session tickets ride inside sealed records and may embed a Fast Open
cookie; the client caches them per (hostname, context identifier) with
FIFO single-use consumption and an age limit.

Record framing: 2-byte big-endian body length, 1 tag byte, body.
Tags: 0 handshake (plaintext body), 1 ticket (sealed), 2 app (sealed),
3 early app data (sealed under the pre-handshake resumption key).
"""

from __future__ import annotations

import hashlib
import struct
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import cookies
from .simcore import SimTime

__all__ = [
    "REC_HANDSHAKE",
    "REC_TICKET",
    "REC_APP",
    "REC_EARLY",
    "DEFAULT_CONTEXT",
    "DEFAULT_LIFETIME_MS",
    "ChannelError",
    "DirectionalKey",
    "SessionTicket",
    "FopCacheEntry",
    "ClientTlsCache",
    "ClientSession",
    "ServerSession",
    "frame",
    "parse_records",
    "seal_record",
    "open_record",
]

REC_HANDSHAKE = 0
REC_TICKET = 1
REC_APP = 2
REC_EARLY = 3

MSG_CHLO = 1
MSG_SHLO = 2

FLAG_FOP = 1
FLAG_PSK = 2
FLAG_EARLY = 4

SHLO_PSK_OK = 1
SHLO_FOP_OK = 2

DEFAULT_CONTEXT = b"\x00" * 16
DEFAULT_LIFETIME_MS = 3_600_000  # 60 minutes


class ChannelError(Exception):
    pass


def frame(tag: int, body: bytes) -> bytes:
    if len(body) > 0xFFFF:
        raise ChannelError("record body too large")
    return struct.pack(">HB", len(body), tag) + body


def parse_records(data: bytes) -> list[tuple[int, bytes]]:
    records = []
    off = 0
    while off < len(data):
        if off + 3 > len(data):
            raise ChannelError("truncated record header")
        length, tag = struct.unpack_from(">HB", data, off)
        off += 3
        if off + length > len(data):
            raise ChannelError("truncated record body")
        records.append((tag, data[off:off + length]))
        off += length
    return records


def _kdf(secret: bytes, label: bytes, *parts: bytes) -> bytes:
    h = hashlib.blake2b(key=secret, digest_size=16,
                        person=label.ljust(16, b"\x00"))
    for p in parts:
        h.update(p)
    return h.digest()


def derive_record_keys(secret: bytes, client_random: bytes,
                       server_random: bytes) -> tuple[bytes, bytes]:
    """(client-to-server key, server-to-client key)."""
    return (_kdf(secret, b"c2s", client_random, server_random),
            _kdf(secret, b"s2c", client_random, server_random))


def derive_early_key(secret: bytes, client_random: bytes) -> bytes:
    return _kdf(secret, b"early", client_random)


class DirectionalKey:
    """AEAD key with a per-direction nonce counter; one instance per side
    per direction, kept in sync by in-order delivery."""

    def __init__(self, key: bytes):
        self._aead = AESGCM(key)
        self._seq = 0

    def seal(self, plaintext: bytes, tag: int) -> bytes:
        nonce = self._seq.to_bytes(12, "big")
        self._seq += 1
        return self._aead.encrypt(nonce, plaintext, bytes([tag]))

    def open(self, ciphertext: bytes, tag: int) -> bytes:
        nonce = self._seq.to_bytes(12, "big")
        try:
            plaintext = self._aead.decrypt(nonce, ciphertext, bytes([tag]))
        except InvalidTag as exc:
            raise ChannelError("record authentication failed") from exc
        self._seq += 1
        return plaintext


def seal_record(key: DirectionalKey, tag: int, plaintext: bytes) -> bytes:
    return frame(tag, key.seal(plaintext, tag))


def open_record(key: DirectionalKey, record: bytes) -> tuple[int, bytes]:
    parsed = parse_records(record)
    if len(parsed) != 1:
        raise ChannelError("expected a single record")
    tag, body = parsed[0]
    return tag, key.open(body, tag)


@dataclass
class SessionTicket:
    ticket_id: bytes
    resumption_secret: bytes
    embedded_cookie: Optional[bytes]
    issued_at: SimTime

    def encode(self) -> bytes:
        cookie = self.embedded_cookie or b""
        return (self.ticket_id + self.resumption_secret
                + bytes([1 if cookie else 0]) + cookie
                + struct.pack(">Q", self.issued_at))

    @classmethod
    def decode(cls, body: bytes) -> "SessionTicket":
        ticket_id, secret = body[:16], body[16:32]
        has_cookie = body[32]
        off = 33
        cookie = None
        if has_cookie:
            cookie = body[off:off + 16]
            off += 16
        (issued_at,) = struct.unpack_from(">Q", body, off)
        if len(ticket_id) != 16 or len(secret) != 16:
            raise ChannelError("malformed ticket")
        return cls(ticket_id, secret, cookie, issued_at)


@dataclass
class FopCacheEntry:
    hostname: str
    context: bytes
    ticket: SessionTicket
    issued_at: SimTime


class ClientTlsCache:
    """Per-client ticket cache keyed by (hostname, context identifier).

    Multiple entries per key are consumed FIFO; a taken entry is removed
    (single use) and entries older than the lifetime are purged.
    """

    def __init__(self):
        self._entries: dict[tuple[str, bytes], deque[FopCacheEntry]] = {}

    def store(self, hostname: str, context: bytes, ticket: SessionTicket,
              now: SimTime) -> None:
        key = (hostname, bytes(context))
        self._entries.setdefault(key, deque()).append(
            FopCacheEntry(hostname, bytes(context), ticket, now))

    def take(self, hostname: str, context: bytes, now: SimTime,
             lifetime: Optional[int] = None) -> Optional[FopCacheEntry]:
        key = (hostname, bytes(context))
        queue = self._entries.get(key)
        if not queue:
            return None
        while queue:
            entry = queue.popleft()
            if lifetime is None or now - entry.issued_at <= lifetime:
                if not queue:
                    del self._entries[key]
                return entry
        del self._entries[key]
        return None

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return sum(len(q) for q in self._entries.values())


def _encode_chlo(flags: int, client_random: bytes, pub: bytes,
                 ticket_id: Optional[bytes], hostname: str) -> bytes:
    body = bytes([MSG_CHLO, flags]) + client_random + pub
    if flags & FLAG_PSK:
        body += ticket_id
    host = hostname.encode("utf-8")
    return body + bytes([len(host)]) + host


def _decode_chlo(body: bytes) -> tuple[int, bytes, bytes, Optional[bytes], str]:
    flags = body[1]
    client_random = body[2:18]
    pub = body[18:50]
    off = 50
    ticket_id = None
    if flags & FLAG_PSK:
        ticket_id = body[off:off + 16]
        off += 16
    hlen = body[off]
    hostname = body[off + 1:off + 1 + hlen].decode("utf-8")
    return flags, client_random, pub, ticket_id, hostname


def _encode_shlo(flags: int, server_random: bytes, pub: bytes,
                 hostname: str) -> bytes:
    host = hostname.encode("utf-8")
    return bytes([MSG_SHLO, flags]) + server_random + pub + bytes([len(host)]) + host


def _decode_shlo(body: bytes) -> tuple[int, bytes, bytes, str]:
    flags = body[1]
    server_random = body[2:18]
    pub = body[18:50]
    hlen = body[50]
    hostname = body[51:51 + hlen].decode("utf-8")
    return flags, server_random, pub, hostname


class ClientSession:
    """Client half of the channel for one connection."""

    def __init__(self, hostname: str, rng: np.random.Generator, *,
                 fop: bool = False,
                 entry: Optional[FopCacheEntry] = None,
                 request: bytes = b"GET /",
                 on_ticket: Optional[Callable[[SessionTicket, SimTime], None]] = None,
                 on_response: Optional[Callable[[bytes, SimTime], None]] = None):
        self.hostname = hostname
        self.fop = fop
        self.entry = entry
        self.request = request
        self.on_ticket = on_ticket
        self.on_response = on_response

        self.client_random = rng.bytes(16)
        self._priv = X25519PrivateKey.from_private_bytes(rng.bytes(32))
        self._pub = self._priv.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw)

        self.established = False
        self.resumption_accepted = False
        self.aborted = False
        self.response: Optional[bytes] = None
        self._send_key: Optional[DirectionalKey] = None
        self._recv_key: Optional[DirectionalKey] = None
        self._out = bytearray()

    def first_flight(self) -> bytes:
        flags = FLAG_FOP if self.fop else 0
        ticket_id = None
        if self.entry is not None:
            flags |= FLAG_PSK | FLAG_EARLY
            ticket_id = self.entry.ticket.ticket_id
        chlo = _encode_chlo(flags, self.client_random, self._pub,
                            ticket_id, self.hostname)
        flight = frame(REC_HANDSHAKE, chlo)
        if self.entry is not None:
            early = DirectionalKey(derive_early_key(
                self.entry.ticket.resumption_secret, self.client_random))
            flight += seal_record(early, REC_EARLY, self.request)
        return flight

    def take_output(self) -> bytes:
        out = bytes(self._out)
        self._out.clear()
        return out

    def on_bytes(self, data: bytes, now: SimTime) -> None:
        if self.aborted:
            return
        for tag, body in parse_records(data):
            if tag == REC_HANDSHAKE:
                self._on_shlo(body)
            elif self._recv_key is not None:
                plaintext = self._recv_key.open(body, tag)
                if tag == REC_TICKET:
                    ticket = SessionTicket.decode(plaintext)
                    if self.on_ticket:
                        self.on_ticket(ticket, now)
                elif tag == REC_APP:
                    self.response = plaintext
                    if self.on_response:
                        self.on_response(plaintext, now)
            else:
                raise ChannelError("sealed record before handshake completed")

    def _on_shlo(self, body: bytes) -> None:
        if body[0] != MSG_SHLO or self.established:
            raise ChannelError("unexpected handshake message")
        flags, server_random, server_pub, host_echo = _decode_shlo(body)
        if host_echo != self.hostname:
            self.aborted = True
            raise ChannelError(
                f"hostname authentication failed: wanted {self.hostname!r}, "
                f"peer is {host_echo!r}")
        if self.entry is not None and flags & SHLO_PSK_OK:
            secret = self.entry.ticket.resumption_secret
            self.resumption_accepted = True
        else:
            # full handshake path; any early data was discarded by the server
            shared = self._priv.exchange(X25519PublicKey.from_public_bytes(server_pub))
            secret = _kdf(shared, b"master")
        c2s, s2c = derive_record_keys(secret, self.client_random, server_random)
        self._send_key = DirectionalKey(c2s)
        self._recv_key = DirectionalKey(s2c)
        self.established = True
        if not self.resumption_accepted:
            self._out += seal_record(self._send_key, REC_APP, self.request)


class ServerSession:
    """Server half of the channel for one connection.

    Needs the pool's shared cookie key, ticket store, and served hostnames;
    ``client_ip`` is the wire-visible peer address used to mint embedded
    cookies.
    """

    def __init__(self, *, hostnames: tuple[str, ...],
                 cookie_key: cookies.ServerCookieKey,
                 ticket_store: dict,
                 rng: np.random.Generator,
                 client_ip: str,
                 fop_enabled: bool = True,
                 tickets_per_connection: int = 1,
                 response_body: bytes = b"hello",
                 on_ticket_issued: Optional[Callable[[SessionTicket], None]] = None):
        self.hostnames = hostnames
        self.cookie_key = cookie_key
        self.ticket_store = ticket_store
        self.rng = rng
        self.client_ip = client_ip
        self.fop_enabled = fop_enabled
        self.tickets_per_connection = tickets_per_connection
        self.response_body = response_body
        self.on_ticket_issued = on_ticket_issued

        self.established = False
        self.client_fop = False
        self.resumption_accepted = False
        self._chlo_seen = False
        self._early_key: Optional[DirectionalKey] = None
        self._send_key: Optional[DirectionalKey] = None
        self._recv_key: Optional[DirectionalKey] = None
        self._out = bytearray()

    def take_output(self) -> bytes:
        out = bytes(self._out)
        self._out.clear()
        return out

    def on_bytes(self, data: bytes, now: SimTime) -> None:
        for tag, body in parse_records(data):
            if tag == REC_HANDSHAKE:
                if self._chlo_seen:
                    continue  # retransmitted flight: CHLO already processed
                self._on_chlo(body, now)
            elif tag == REC_EARLY:
                if self._early_key is None:
                    continue  # resumption rejected: early data dropped
                self._respond(self._early_key.open(body, tag))
            elif tag == REC_APP and self._recv_key is not None:
                self._respond(self._recv_key.open(body, tag))
            else:
                raise ChannelError("unexpected record")

    def _on_chlo(self, body: bytes, now: SimTime) -> None:
        if body[0] != MSG_CHLO:
            raise ChannelError("unexpected handshake message")
        self._chlo_seen = True
        flags, client_random, client_pub, ticket_id, hostname = _decode_chlo(body)
        self.client_fop = bool(flags & FLAG_FOP)
        # the handshake authenticates the hostname this pool actually serves
        host_echo = hostname if hostname in self.hostnames else self.hostnames[0]

        server_random = self.rng.bytes(16)
        shlo_flags = 0
        secret = None
        if flags & FLAG_PSK and ticket_id is not None:
            stored = self.ticket_store.pop(bytes(ticket_id), None)
            if stored is not None:
                secret = stored
                shlo_flags |= SHLO_PSK_OK
                self.resumption_accepted = True
                if flags & FLAG_EARLY:
                    self._early_key = DirectionalKey(
                        derive_early_key(secret, client_random))
        priv = X25519PrivateKey.from_private_bytes(self.rng.bytes(32))
        pub = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        if secret is None:
            shared = priv.exchange(X25519PublicKey.from_public_bytes(client_pub))
            secret = _kdf(shared, b"master")
        if self.fop_enabled and self.client_fop:
            shlo_flags |= SHLO_FOP_OK

        c2s, s2c = derive_record_keys(secret, client_random, server_random)
        self._recv_key = DirectionalKey(c2s)
        self._send_key = DirectionalKey(s2c)
        self.established = True
        self._out += frame(REC_HANDSHAKE,
                           _encode_shlo(shlo_flags, server_random, pub, host_echo))
        for _ in range(self.tickets_per_connection):
            self._issue_ticket(now)

    def _issue_ticket(self, now: SimTime) -> None:
        embedded = None
        if self.fop_enabled and self.client_fop:
            embedded = cookies.mint(self.cookie_key, self.client_ip, self.rng)
        ticket = SessionTicket(ticket_id=self.rng.bytes(16),
                               resumption_secret=self.rng.bytes(16),
                               embedded_cookie=embedded,
                               issued_at=now)
        self.ticket_store[bytes(ticket.ticket_id)] = ticket.resumption_secret
        self._out += seal_record(self._send_key, REC_TICKET, ticket.encode())
        if self.on_ticket_issued:
            self.on_ticket_issued(ticket)

    def _respond(self, request: bytes) -> None:
        self._out += seal_record(self._send_key, REC_APP, self.response_body)

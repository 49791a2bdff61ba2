"""End-to-end handshake flows over the simulated network."""

import pytest

from fopsim.adversary import cleartext_cookie_counts
from fopsim.capture import capture_bytes
from fopsim.simcore import FoKind, TcpFlags
from fopsim.stack import World, schedule_fetch, schedule_visit
from fopsim.transport import TcpVariant

D = 30  # one-way delay used throughout


def one_host_world(seed=1, delay=D, nat=False):
    world = World(seed, delay)
    world.add_pool("shop.example", ["198.51.100.1"])
    if nat:
        gw = world.add_gateway("192.0.2.1")
        client = world.add_client("alice", "10.0.0.2", gateway=gw)
        return world, client, gw
    client = world.add_client("alice", "203.0.113.1")
    return world, client, None


def visit(world, client, at, variant, **kw):
    kw.setdefault("truth_label", "t")
    kw.setdefault("context_label", "ctx")
    schedule_visit(world, client, "shop.example", at, variant=variant, **kw)


class TestRttStructure:
    @pytest.mark.parametrize("variant", list(TcpVariant))
    def test_initial_connection_takes_three_rtt(self, variant):
        world, client, _ = one_host_world()
        visit(world, client, 0, variant)
        world.run()
        assert client.records[0].duration == 6 * D

    def test_standard_resumed_takes_two_rtt(self):
        world, client, _ = one_host_world()
        visit(world, client, 0, TcpVariant.STANDARD)
        visit(world, client, 10_000, TcpVariant.STANDARD)
        world.run()
        assert client.records[1].duration == 4 * D
        assert not client.records[1].zero_rtt_accepted

    @pytest.mark.parametrize("variant", [TcpVariant.TFO, TcpVariant.FOP])
    def test_accepted_abbreviated_resumption_takes_one_rtt(self, variant):
        world, client, _ = one_host_world()
        visit(world, client, 0, variant)
        visit(world, client, 10_000, variant)
        world.run()
        record = client.records[1]
        assert record.duration == 2 * D
        assert record.zero_rtt_accepted and record.attempted_abbreviated

    @pytest.mark.parametrize("variant", [TcpVariant.TFO, TcpVariant.FOP])
    def test_rejected_abbreviated_costs_standard_handshake(self, variant):
        # public address rotates between visits: the presented cookie no
        # longer matches, the attempt is rejected, total equals 2 RTT
        world, client, gw = one_host_world(nat=True)
        visit(world, client, 0, variant)
        world.sim.schedule(5_000, lambda: world.rotate_gateway(gw, "192.0.2.99"))
        visit(world, client, 10_000, variant)
        world.run()
        record = client.records[1]
        assert record.attempted_abbreviated
        assert not record.zero_rtt_accepted
        assert record.duration == 4 * D

    def test_rejected_equals_standard_resumed_duration(self):
        world, client, gw = one_host_world(nat=True)
        visit(world, client, 0, TcpVariant.TFO)
        world.sim.schedule(5_000, lambda: world.rotate_gateway(gw, "192.0.2.99"))
        visit(world, client, 10_000, TcpVariant.TFO)
        world2, client2, _ = one_host_world()
        visit(world2, client2, 0, TcpVariant.STANDARD)
        visit(world2, client2, 10_000, TcpVariant.STANDARD)
        world.run()
        world2.run()
        assert client.records[1].duration == client2.records[1].duration

    def test_exchange_duration_is_multiple_of_2d(self):
        for variant in TcpVariant:
            world, client, _ = one_host_world()
            for k in range(3):
                visit(world, client, k * 10_000, variant)
            world.run()
            for record in client.records:
                assert record.duration % (2 * D) == 0

    def test_asymmetric_delays_sum_to_rtt(self):
        world = World(1, 40, delay_down_ms=20)
        world.add_pool("shop.example", ["198.51.100.1"])
        client = world.add_client("alice", "203.0.113.1")
        visit(world, client, 0, TcpVariant.STANDARD)
        world.run()
        assert client.records[0].duration == 3 * 60


class TestFopFlows:
    def test_rejection_keeps_consumed_ticket_out_and_delivers_fresh_one(self):
        world, client, gw = one_host_world(nat=True)
        visit(world, client, 0, TcpVariant.FOP)
        world.sim.schedule(5_000, lambda: world.rotate_gateway(gw, "192.0.2.99"))
        visit(world, client, 10_000, TcpVariant.FOP)
        world.run()
        # replacement plaintext cookie was not cached by the kernel
        assert len(client.kernel) == 0
        # the fresh ticket arrived sealed and is ready for the next visit
        assert len(client.tls) == 1
        visit(world, client, 20_000, TcpVariant.FOP)
        world.run()
        assert client.records[2].zero_rtt_accepted

    def test_server_losing_ticket_state_falls_back_within_connection(self):
        # TCP accepts the cookie, the channel rejects the unknown ticket:
        # the session completes as a full handshake in the same connection
        world, client, _ = one_host_world()
        pool = world.pools[0]
        visit(world, client, 0, TcpVariant.FOP)
        world.sim.schedule(5_000, pool.ticket_store.clear)
        visit(world, client, 10_000, TcpVariant.FOP)
        world.run()
        record = client.records[1]
        assert record.attempted_abbreviated
        assert record.zero_rtt_accepted          # the TCP layer accepted
        assert record.duration == 4 * D          # the channel re-requested
        assert len(client.tls) == 1              # and a fresh ticket arrived

    def test_fop_cookie_appears_in_at_most_one_syn(self):
        world, client, _ = one_host_world()
        tap = world.attach_tap()
        for k in range(4):
            visit(world, client, k * 10_000, TcpVariant.FOP)
        world.run()
        syn_cookies = [bytes(p.fo_cookie) for _, p in tap.packets
                       if p.is_syn() and p.fo_kind is FoKind.COOKIE]
        assert len(syn_cookies) == len(set(syn_cookies)) == 3

    def test_fop_issuance_never_in_cleartext(self):
        world, client, _ = one_host_world()
        tap = world.attach_tap()
        for k in range(3):
            visit(world, client, k * 10_000, TcpVariant.FOP)
        world.run()
        # every cookie the client ever presented came out of a sealed ticket;
        # the wire shows each at most once and never inside any payload
        counts = cleartext_cookie_counts(tap.packets)
        assert all(n == 1 for n in counts.values())
        for cookie in counts:
            assert all(cookie not in p.payload for _, p in tap.packets)

    def test_resumption_accepted_at_different_pool_address(self):
        # miss probability 1: the revisit is served from a fresh pool
        # address; the hostname-bound cookie still authorizes 0-RTT there
        world = World(1, D)
        world.add_pool("shop.example", ["198.51.100.1", "198.51.100.2"], [1.0])
        client = world.add_client("alice", "203.0.113.1")
        visit(world, client, 0, TcpVariant.FOP)
        visit(world, client, 10_000, TcpVariant.FOP)
        world.run()
        first, second = client.records
        assert second.serving_ip != first.serving_ip
        assert second.zero_rtt_accepted
        assert second.duration == 2 * D

    def test_server_without_fop_support_completes_plain_sessions(self):
        world = World(1, D)
        world.add_pool("shop.example", ["198.51.100.1"], fop_enabled=False)
        client = world.add_client("alice", "203.0.113.1")
        visit(world, client, 0, TcpVariant.FOP)
        visit(world, client, 10_000, TcpVariant.FOP)
        world.run()
        # tickets arrive without cookies, so revisits resume the session
        # over a plain handshake and never attempt 0-RTT at the TCP layer
        second = client.records[1]
        assert not second.attempted_abbreviated
        assert second.duration == 4 * D

    def test_tfo_misses_at_different_pool_address(self):
        # same topology under plain Fast Open: fresh address, cache miss
        world = World(1, D)
        world.add_pool("shop.example", ["198.51.100.1", "198.51.100.2"], [1.0])
        client = world.add_client("alice", "203.0.113.1")
        visit(world, client, 0, TcpVariant.TFO)
        visit(world, client, 10_000, TcpVariant.TFO)
        world.run()
        second = client.records[1]
        assert not second.attempted_abbreviated
        assert second.duration == 4 * D  # session resumption still works

    def test_no_ticket_id_reused_across_resumptions(self):
        # ticket identifiers ride resumption hellos in the clear; across a
        # whole trace each value may appear at most once
        from fopsim.tlschan import MSG_CHLO, REC_HANDSHAKE, parse_records
        for variant in (TcpVariant.TFO, TcpVariant.FOP, TcpVariant.STANDARD):
            world, client, _ = one_host_world()
            tap = world.attach_tap()
            for k in range(5):
                visit(world, client, k * 10_000, variant)
            world.run()
            seen = []
            for _, pkt in tap.packets:
                if not pkt.payload:
                    continue
                for tag, body in parse_records(pkt.payload):
                    if tag == REC_HANDSHAKE and body[0] == MSG_CHLO and body[1] & 2:
                        seen.append(body[50:66])  # ticket id field
            assert len(seen) == 4, variant
            assert len(set(seen)) == len(seen), variant

    def test_wire_flow_structurally_identical_to_tfo(self):
        flows = {}
        for variant in (TcpVariant.TFO, TcpVariant.FOP):
            world, client, _ = one_host_world()
            tap = world.attach_tap()
            visit(world, client, 0, variant)
            visit(world, client, 10_000, variant)
            world.run()
            resumed = [(int(p.flags), int(p.fo_kind),
                        len(p.fo_cookie or b""), p.ack_len > 0, bool(p.payload))
                       for t, p in tap.packets if t >= 10_000]
            flows[variant] = resumed
        assert flows[TcpVariant.TFO] == flows[TcpVariant.FOP]


class TestTfoFlows:
    def test_initial_handshake_issues_cleartext_cookie(self):
        world, client, _ = one_host_world()
        tap = world.attach_tap()
        visit(world, client, 0, TcpVariant.TFO)
        world.run()
        synacks = [p for _, p in tap.packets if p.is_synack()]
        assert synacks[0].fo_kind is FoKind.COOKIE

    def test_cookie_reused_across_connections(self):
        world, client, _ = one_host_world()
        tap = world.attach_tap()
        for k in range(3):
            visit(world, client, k * 10_000, TcpVariant.TFO)
        world.run()
        counts = cleartext_cookie_counts(tap.packets)
        assert max(counts.values()) == 3  # issuance + two reuses

    def test_nat_rotation_keeps_client_attempting(self):
        # the kernel cache key uses the static local address, so the
        # abbreviated attempt still happens after the public IP changed
        world, client, gw = one_host_world(nat=True)
        visit(world, client, 0, TcpVariant.TFO)
        world.sim.schedule(5_000, lambda: world.rotate_gateway(gw, "192.0.2.99"))
        visit(world, client, 10_000, TcpVariant.TFO)
        world.run()
        assert client.records[1].attempted_abbreviated

    def test_client_ip_change_forces_initial_flow(self):
        world, client, _ = one_host_world()
        visit(world, client, 0, TcpVariant.TFO)
        world.sim.schedule(5_000, lambda: client.change_ip("203.0.113.99"))
        visit(world, client, 10_000, TcpVariant.TFO)
        world.run()
        assert not client.records[1].attempted_abbreviated
        assert client.records[1].duration == 4 * D  # session still resumes


class TestNatOpacity:
    def test_no_local_address_on_public_side(self):
        world, client, gw = one_host_world(nat=True)
        tap = world.attach_tap()
        for k in range(3):
            visit(world, client, k * 10_000, TcpVariant.TFO)
        world.run()
        assert tap.packets
        for _, pkt in tap.packets:
            assert not pkt.src.ip.startswith("10.")
            assert not pkt.dst.ip.startswith("10.")

    def test_replies_reach_client_through_gateway(self):
        world, client, _ = one_host_world(nat=True)
        visit(world, client, 0, TcpVariant.STANDARD)
        world.run()
        assert client.records[0].duration == 6 * D


class TestDeterminism:
    def run_once(self, seed):
        world = World(seed, D)
        world.add_pool("shop.example", ["198.51.100.5", "198.51.100.6"], [0.4])
        world.add_pool("cdn.example", ["198.51.100.7"])
        gw = world.add_gateway("192.0.2.1")
        alice = world.add_client("alice", "10.0.0.2", gateway=gw)
        bob = world.add_client("bob", "203.0.113.3")
        tap = world.attach_tap()
        for k in range(3):
            schedule_visit(world, alice, "shop.example", k * 7_000,
                           variant=TcpVariant.TFO, truth_label="a",
                           context_label="a")
            schedule_fetch(world, bob, "shop.example", ["cdn.example"],
                           k * 9_000 + 500, variant=TcpVariant.FOP,
                           truth_label="b", context_label="b")
        world.run()
        durations = tuple(r.duration for r in world.all_records())
        return capture_bytes(tap.packets), durations

    def test_identical_seed_gives_identical_trace(self):
        assert self.run_once(42) == self.run_once(42)

    def test_different_seed_changes_bytes(self):
        assert self.run_once(42)[0] != self.run_once(43)[0]


class TestServerGuards:
    def test_syn_payload_never_delivered_without_valid_cookie(self):
        from fopsim.simcore import Endpoint, Packet
        world, client, _ = one_host_world()
        server = world.pools[0].servers["198.51.100.1"]
        forged = Packet(src=Endpoint("203.0.113.1", 50009),
                        dst=Endpoint("198.51.100.1", 443),
                        flags=TcpFlags.SYN, fo_kind=FoKind.COOKIE,
                        fo_cookie=b"\x00" * 16, payload=b"evil")
        server.receive(forged)
        obs = world.pools[0].host_observations[0]
        assert obs.presented_cookie == b"\x00" * 16
        conn, session = server._conns[forged.src]
        assert not conn.accepted_syn_payload
        assert not session.established  # payload never reached the channel


class TestBurstsAndMixing:
    def test_parallel_revisit_burst_each_gets_its_own_ticket(self):
        # a server issuing two tickets per connection lets a burst of two
        # simultaneous revisits each consume a single-use entry (FIFO)
        world = World(1, D)
        world.add_pool("shop.example", ["198.51.100.1"],
                       tickets_per_connection=2)
        client = world.add_client("alice", "203.0.113.1")
        tap = world.attach_tap()
        visit(world, client, 0, TcpVariant.FOP)
        visit(world, client, 10_000, TcpVariant.FOP)
        visit(world, client, 10_000, TcpVariant.FOP)
        world.run()
        first, second, third = client.records
        assert second.zero_rtt_accepted and third.zero_rtt_accepted
        assert second.duration == third.duration == 2 * D
        syn_cookies = [bytes(p.fo_cookie) for _, p in tap.packets
                       if p.is_syn() and p.fo_kind is FoKind.COOKIE]
        assert len(syn_cookies) == 2 and len(set(syn_cookies)) == 2

    def test_burst_without_enough_tickets_falls_back_gracefully(self):
        world, client, _ = one_host_world()
        visit(world, client, 0, TcpVariant.FOP)
        visit(world, client, 10_000, TcpVariant.FOP)
        visit(world, client, 10_000, TcpVariant.FOP)  # cache exhausted
        world.run()
        second, third = client.records[1], client.records[2]
        assert second.zero_rtt_accepted
        assert not third.attempted_abbreviated  # initial flow, still completes
        assert third.duration == 6 * D

    def test_mixed_variant_clients_share_a_pool_without_interference(self):
        world = World(1, D)
        world.add_pool("shop.example", ["198.51.100.1"])
        clients = {variant: world.add_client(variant.value,
                                             f"203.0.113.{i + 1}")
                   for i, variant in enumerate(TcpVariant)}
        for k in range(3):
            for variant, client in clients.items():
                schedule_visit(world, client, "shop.example", k * 10_000,
                               variant=variant, truth_label=variant.value,
                               context_label="ctx")
        world.run()
        expected_revisit = {TcpVariant.STANDARD: 4 * D,
                            TcpVariant.TFO: 2 * D, TcpVariant.FOP: 2 * D}
        for variant, client in clients.items():
            assert client.records[0].duration == 6 * D
            for record in client.records[1:]:
                assert record.duration == expected_revisit[variant], variant


class TestFetch:
    def test_secondaries_start_after_primary_completes(self):
        world = World(1, D)
        world.add_pool("primary.example", ["198.51.100.1"])
        for i in range(3):
            world.add_pool(f"s{i}.example", [f"198.51.101.{i + 1}"])
        client = world.add_client("alice", "203.0.113.1")
        fetch = schedule_fetch(world, client, "primary.example",
                               [f"s{i}.example" for i in range(3)], 0,
                               variant=TcpVariant.STANDARD,
                               truth_label="f", context_label="f")
        world.run()
        # initial: primary 6d, then all secondaries in parallel add 6d
        assert fetch.duration == 12 * D
        primary, *secondaries = fetch.records
        assert all(s.t_start == primary.t_done for s in secondaries)

    def test_fetch_without_secondaries(self):
        world, client, _ = one_host_world()
        fetch = schedule_fetch(world, client, "shop.example", [], 0,
                               variant=TcpVariant.STANDARD,
                               truth_label="f", context_label="f")
        world.run()
        assert fetch.duration == 6 * D

"""Randomized revisit schedules for wire-level linkability properties.

Each schedule draws 2-5 clients (optionally behind one NAT), a few
single-address hosts, and a strictly ordered visit sequence. Run under the
hostname-bound stack, the wire must never show a cookie twice and the
passive graph must stay fully disconnected; under plain Fast Open, any
revisit must produce a linked component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..adversary import cleartext_cookie_counts, link_passive, observe
from ..stack import World, schedule_visit
from ..transport import TcpVariant

__all__ = ["RandomScheduleSpec", "random_schedule", "run_random_scenario",
           "RandomScenarioResult"]


@dataclass(frozen=True)
class RandomScheduleSpec:
    n_clients: int
    nat: bool
    n_hosts: int
    visits: tuple[tuple[int, int, int], ...]  # (at_ms, client_idx, host_idx)

    @property
    def has_revisit(self) -> bool:
        seen = set()
        for _, client, host in self.visits:
            if (client, host) in seen:
                return True
            seen.add((client, host))
        return False


def random_schedule(rng: np.random.Generator) -> RandomScheduleSpec:
    n_clients = int(rng.integers(2, 6))
    nat = bool(rng.integers(0, 2))
    n_hosts = int(rng.integers(1, 4))
    n_visits = int(rng.integers(4, 11))
    visits = tuple(
        (1000 * (k + 1),
         int(rng.integers(0, n_clients)),
         int(rng.integers(0, n_hosts)))
        for k in range(n_visits))
    return RandomScheduleSpec(n_clients, nat, n_hosts, visits)


@dataclass
class RandomScenarioResult:
    spec: RandomScheduleSpec
    variant: str
    component_sizes: list[int]
    cookie_counts: dict[bytes, int]
    tap_packets: list = field(default_factory=list)

    @property
    def all_singletons(self) -> bool:
        return all(size == 1 for size in self.component_sizes)

    @property
    def has_multi_component(self) -> bool:
        return any(size >= 2 for size in self.component_sizes)


def run_random_scenario(spec: RandomScheduleSpec, variant: TcpVariant,
                        seed: int) -> RandomScenarioResult:
    world = World(seed)
    for h in range(spec.n_hosts):
        world.add_pool(f"host{h}.example", [f"198.51.100.{h + 1}"])
    gw = world.add_gateway("192.0.2.1") if spec.nat else None
    clients = []
    for c in range(spec.n_clients):
        if gw is not None:
            clients.append(world.add_client(f"c{c}", f"10.0.0.{c + 2}", gateway=gw))
        else:
            clients.append(world.add_client(f"c{c}", f"203.0.113.{c + 10}"))
    tap = world.attach_tap()
    for at, c, h in spec.visits:
        schedule_visit(world, clients[c], f"host{h}.example", at,
                       variant=variant, truth_label=f"c{c}",
                       context_label="shared")
    world.run()
    graph = link_passive(observe(tap.packets))
    return RandomScenarioResult(
        spec=spec,
        variant=variant.value,
        component_sizes=[len(comp) for comp in graph.components()],
        cookie_counts=cleartext_cookie_counts(tap.packets),
        tap_packets=tap.packets,
    )

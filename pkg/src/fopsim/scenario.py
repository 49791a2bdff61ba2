"""Executes scripted scenario configs and evaluates their checks."""

from __future__ import annotations

from dataclasses import dataclass, field

from .adversary import (
    LinkageGraph,
    cleartext_cookie_counts,
    cross_context_links,
    link_host,
    link_ip_baseline,
    link_passive,
    observe,
    tracking_period,
)
from .capture import capture_bytes
from .config import ScenarioConfig
from .stack import World, schedule_visit

__all__ = ["ScenarioResult", "run_scenario"]


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    world: World
    tap_packets: list
    passive_graph: LinkageGraph
    host_graph: LinkageGraph
    ip_graph: LinkageGraph
    passive_labels: list[str]
    host_labels: list[str]
    checks: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def capture(self) -> bytes:
        return capture_bytes(self.tap_packets)

    def summary(self) -> dict:
        return {
            "name": self.config.name,
            "variant": self.config.variant,
            "seed": self.config.seed,
            "connections": len(self.world.all_records()),
            "passive": self.passive_graph.to_dict(),
            "host": self.host_graph.to_dict(),
            "ip_baseline_period_ms": tracking_period(self.ip_graph),
            "checks": self.checks,
            "passed": self.passed,
        }


def _build_world(cfg: ScenarioConfig) -> World:
    world = World(cfg.seed, cfg.one_way_delay_ms)
    for host in cfg.hosts:
        world.add_pool(tuple(host["hostnames"]), list(host["ips"]),
                       tuple(host.get("failure_probs", [0.0])))
    gateway = None
    if cfg.nat is not None:
        gateway = world.add_gateway(cfg.nat["public_ip"])
    for c in cfg.clients:
        world.add_client(c["id"], c["ip"],
                         gateway=gateway if c.get("behind_nat") else None)
    return world


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    world = _build_world(cfg)
    tap = world.attach_tap()
    variant = cfg.tcp_variant
    if cfg.nat is not None:
        for rot in cfg.nat.get("rotations", []):
            gw = world.gateways[0]
            world.sim.schedule(
                rot["at_ms"],
                lambda g=gw, ip=rot["new_ip"]: world.rotate_gateway(g, ip))
    for v in cfg.visits:
        schedule_visit(world, world.clients[v["client"]], v["hostname"],
                       v["at_ms"], variant=variant,
                       truth_label=v.get("label", ""),
                       context_label=v.get("context"),
                       lifetime=cfg.cookie_lifetime_ms)
    world.run()

    observations = observe(tap.packets)
    passive_graph = link_passive(observations)
    records = world.all_records()
    if len(records) != len(observations):
        raise RuntimeError("observation/record mismatch")
    passive_labels = [r.truth_label for r in records]

    host_obs = world.host_observations()
    host_graph = link_host(host_obs)
    host_labels = _host_labels(world, host_obs)
    ip_graph = link_ip_baseline(host_obs)

    result = ScenarioResult(config=cfg, world=world, tap_packets=tap.packets,
                            passive_graph=passive_graph, host_graph=host_graph,
                            ip_graph=ip_graph, passive_labels=passive_labels,
                            host_labels=host_labels)
    result.checks = [_evaluate(check, result) for check in cfg.checks]
    return result


def _host_labels(world: World, host_obs) -> list[str]:
    recs = sorted(world.all_records(), key=lambda r: (r.t_start, r.conn_id))
    if len(recs) != len(host_obs):
        raise RuntimeError("host observation/record mismatch")
    # host observations across pools, merged by time, match record order
    return [r.truth_label for r in recs]


def _evaluate(check: dict, result: ScenarioResult) -> dict:
    kind = check["kind"]
    cfg = result.config
    if kind == "tracking_period_exceeds_ip_baseline":
        cookie = tracking_period(result.host_graph)
        ip = tracking_period(result.ip_graph)
        return _outcome(kind, cookie > ip,
                        f"cookie profile spans {cookie} ms, address baseline {ip} ms")
    if kind == "issuance_chain_edge_present":
        present = any(label == "issuance-chain"
                      and result.host_graph.nodes[i].presented_cookie is not None
                      for i, j, label in result.host_graph.edges)
        return _outcome(kind, present,
                        "replacement cookie chained a rejected attempt" if present
                        else "no issuance-chain edge after a rejection")
    if kind == "tracking_period_within_lifetime":
        period = tracking_period(result.host_graph)
        limit = cfg.cookie_lifetime_ms
        ok = limit is None or period <= limit
        return _outcome(kind, ok, f"longest profile {period} ms, limit {limit} ms")
    if kind == "passive_singletons":
        sizes = [len(c) for c in result.passive_graph.components()]
        ok = all(s == 1 for s in sizes)
        return _outcome(kind, ok, f"component sizes {sizes}")
    if kind == "no_cleartext_cookie_reuse":
        counts = cleartext_cookie_counts(result.tap_packets)
        repeats = {c.hex(): n for c, n in counts.items() if n > 1}
        return _outcome(kind, not repeats,
                        f"repeated cookie sightings: {repeats}" if repeats
                        else "every cookie crossed the wire at most once")
    if kind in ("linkage_across_labels", "no_linkage_across_labels"):
        adversary = check.get("adversary", "host")
        if adversary == "passive":
            graph, labels = result.passive_graph, result.passive_labels
        else:
            graph, labels = result.host_graph, result.host_labels
        links = cross_context_links(graph, labels)
        want_links = kind == "linkage_across_labels"
        return _outcome(kind, (links > 0) == want_links,
                        f"{links} cross-label edges in the {adversary} graph")
    if kind == "ip_baseline_links_across_labels":
        links = cross_context_links(result.ip_graph, result.host_labels)
        return _outcome(kind, links > 0,
                        f"{links} cross-label edges under address-only tracking")
    raise ValueError(f"unknown check kind: {kind!r}")


def _outcome(name: str, passed: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}

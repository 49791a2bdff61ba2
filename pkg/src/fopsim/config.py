"""Scenario configuration files.

A config is a versioned JSON document that fully determines a run given
its seed: topology (clients, optional NAT with a rotation schedule, host
pools), a visit schedule with ground-truth labels, and the checks that
decide the run's exit status. Configs round-trip losslessly through
to_dict/from_dict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .transport import TcpVariant

__all__ = ["ConfigError", "ScenarioConfig", "load_config"]

CONFIG_VERSION = 1

_VARIANTS = {v.value for v in TcpVariant}

_CHECK_KINDS = {
    "tracking_period_exceeds_ip_baseline",
    "issuance_chain_edge_present",
    "tracking_period_within_lifetime",
    "passive_singletons",
    "no_cleartext_cookie_reuse",
    "linkage_across_labels",
    "no_linkage_across_labels",
    "ip_baseline_links_across_labels",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _expect(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


@dataclass
class ScenarioConfig:
    name: str
    variant: str
    seed: int
    one_way_delay_ms: int = 30
    cookie_lifetime_ms: Optional[int] = 3_600_000
    clients: list[dict] = field(default_factory=list)
    nat: Optional[dict] = None
    hosts: list[dict] = field(default_factory=list)
    visits: list[dict] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    version: int = CONFIG_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "name": self.name,
            "variant": self.variant,
            "seed": self.seed,
            "one_way_delay_ms": self.one_way_delay_ms,
            "cookie_lifetime_ms": self.cookie_lifetime_ms,
            "clients": self.clients,
            "nat": self.nat,
            "hosts": self.hosts,
            "visits": self.visits,
            "checks": self.checks,
        }

    @classmethod
    def from_dict(cls, data: Any) -> "ScenarioConfig":
        _expect(isinstance(data, dict), "<root>", "config must be an object")
        _expect("version" in data, "version", "missing")
        _expect(data["version"] == CONFIG_VERSION, "version",
                f"unsupported (expected {CONFIG_VERSION})")
        for key in ("name", "variant", "seed"):
            _expect(key in data, key, "missing")
        _expect(isinstance(data["name"], str), "name", "must be a string")
        _expect(data["variant"] in _VARIANTS, "variant",
                f"must be one of {sorted(_VARIANTS)}")
        _expect(isinstance(data["seed"], int) and data["seed"] >= 0,
                "seed", "must be a non-negative integer")

        delay = data.get("one_way_delay_ms", 30)
        _expect(isinstance(delay, int) and delay >= 0,
                "one_way_delay_ms", "must be a non-negative integer")
        lifetime = data.get("cookie_lifetime_ms", 3_600_000)
        _expect(lifetime is None or (isinstance(lifetime, int) and lifetime > 0),
                "cookie_lifetime_ms", "must be a positive integer or null")

        clients = data.get("clients", [])
        _expect(isinstance(clients, list) and clients, "clients",
                "must be a non-empty list")
        ids = set()
        for i, c in enumerate(clients):
            key = f"clients[{i}]"
            _expect(isinstance(c, dict), key, "must be an object")
            _expect(isinstance(c.get("id"), str), f"{key}.id", "must be a string")
            _expect(c["id"] not in ids, f"{key}.id", "duplicate client id")
            ids.add(c["id"])
            _expect(isinstance(c.get("ip"), str), f"{key}.ip", "must be a string")
            _expect(isinstance(c.get("behind_nat", False), bool),
                    f"{key}.behind_nat", "must be a boolean")

        nat = data.get("nat")
        if any(c.get("behind_nat") for c in clients):
            _expect(isinstance(nat, dict), "nat",
                    "required when a client sits behind the gateway")
        if nat is not None:
            _expect(isinstance(nat.get("public_ip"), str), "nat.public_ip",
                    "must be a string")
            rotations = nat.get("rotations", [])
            _expect(isinstance(rotations, list), "nat.rotations", "must be a list")
            for i, r in enumerate(rotations):
                key = f"nat.rotations[{i}]"
                _expect(isinstance(r, dict), key, "must be an object")
                _expect(isinstance(r.get("at_ms"), int) and r["at_ms"] >= 0,
                        f"{key}.at_ms", "must be a non-negative integer")
                _expect(isinstance(r.get("new_ip"), str), f"{key}.new_ip",
                        "must be a string")

        hosts = data.get("hosts", [])
        _expect(isinstance(hosts, list) and hosts, "hosts",
                "must be a non-empty list")
        hostnames = set()
        for i, h in enumerate(hosts):
            key = f"hosts[{i}]"
            _expect(isinstance(h, dict), key, "must be an object")
            names = h.get("hostnames")
            _expect(isinstance(names, list) and names
                    and all(isinstance(n, str) for n in names),
                    f"{key}.hostnames", "must be a non-empty list of strings")
            for n in names:
                _expect(n not in hostnames, f"{key}.hostnames",
                        f"hostname declared twice: {n}")
                hostnames.add(n)
            ips = h.get("ips")
            _expect(isinstance(ips, list) and ips
                    and all(isinstance(ip, str) for ip in ips),
                    f"{key}.ips", "must be a non-empty list of strings")
            probs = h.get("failure_probs", [0.0])
            _expect(isinstance(probs, list)
                    and all(isinstance(p, (int, float)) and 0 <= p <= 1
                            for p in probs),
                    f"{key}.failure_probs", "must be probabilities in [0,1]")

        visits = data.get("visits", [])
        _expect(isinstance(visits, list) and visits, "visits",
                "must be a non-empty list")
        for i, v in enumerate(visits):
            key = f"visits[{i}]"
            _expect(isinstance(v, dict), key, "must be an object")
            _expect(isinstance(v.get("at_ms"), int) and v["at_ms"] >= 0,
                    f"{key}.at_ms", "must be a non-negative integer")
            _expect(v.get("client") in ids, f"{key}.client",
                    "must name a declared client")
            _expect(v.get("hostname") in hostnames, f"{key}.hostname",
                    "must name a declared hostname")
            _expect(isinstance(v.get("label", ""), str), f"{key}.label",
                    "must be a string")
            _expect(v.get("context") is None or isinstance(v["context"], str),
                    f"{key}.context", "must be a string or null")

        checks = data.get("checks", [])
        _expect(isinstance(checks, list), "checks", "must be a list")
        for i, c in enumerate(checks):
            key = f"checks[{i}]"
            _expect(isinstance(c, dict), key, "must be an object")
            _expect(c.get("kind") in _CHECK_KINDS, f"{key}.kind",
                    f"must be one of {sorted(_CHECK_KINDS)}")

        return cls(name=data["name"], variant=data["variant"], seed=data["seed"],
                   one_way_delay_ms=delay, cookie_lifetime_ms=lifetime,
                   clients=clients, nat=nat, hosts=hosts, visits=visits,
                   checks=checks)

    @property
    def tcp_variant(self) -> TcpVariant:
        return TcpVariant(self.variant)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: not valid JSON ({exc})") from exc
    return ScenarioConfig.from_dict(data)

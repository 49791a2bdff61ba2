"""Delay savings on website revisits under load balancing.

A fetch touches a primary host and then n secondary hosts in parallel.
Relative to a revisit over the standard stack (2 RTT per stage), an
abbreviated hit saves one RTT on the primary, and one more only when all
secondaries hit. The analytic distribution with miss probability p and
q = 1 - p:

    P(save 2) = q^(n+1)
    P(save 0) = p * (1 - q^n)
    P(save 1) = 1 - P(save 0) - P(save 2)
    mean saving = rtt * (P(save 1) + 2 * P(save 2))

The hostname-bound variant is never affected by the serving address and
saves two RTTs on every revisit.
"""

from __future__ import annotations

from dataclasses import dataclass


from .. import kernels
from ..rngtools import SeedTree
from ..stack import World, schedule_fetch
from ..transport import TcpVariant
from .failure import RevisitFailureModel

__all__ = [
    "SavingsDistribution",
    "WebsiteModel",
    "table5_analytic",
    "table5_montecarlo",
]


@dataclass(frozen=True)
class SavingsDistribution:
    p_save0: float
    p_save1: float
    p_save2: float
    mean_saving_ms: float
    trials: int = 0  # 0 = analytic

    def __post_init__(self):
        total = self.p_save0 + self.p_save1 + self.p_save2
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {total!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_save0, self.p_save1, self.p_save2)


@dataclass(frozen=True)
class WebsiteModel:
    """A primary host plus parallel secondaries, each behind its own pool."""

    primary: str = "primary.site.example"
    n_secondary: int = 19

    def __post_init__(self):
        if self.n_secondary < 0:
            raise ValueError("n_secondary must be >= 0")

    @property
    def secondaries(self) -> list[str]:
        return [f"asset{i}.site.example" for i in range(self.n_secondary)]


def table5_analytic(model: RevisitFailureModel, revisit: int,
                    n_secondary: int = 19, rtt_ms: float = 60,
                    variant: TcpVariant = TcpVariant.TFO) -> SavingsDistribution:
    if variant is TcpVariant.FOP:
        return SavingsDistribution(0.0, 0.0, 1.0, 2.0 * rtt_ms)
    if variant is not TcpVariant.TFO:
        raise ValueError("savings are defined for the abbreviated variants")
    p = model.prob_for(revisit)
    q = 1.0 - p
    p2 = q ** (n_secondary + 1)
    p0 = p * (1.0 - q ** n_secondary)
    p1 = 1.0 - p0 - p2
    mean = rtt_ms * (p1 + 2.0 * p2)
    return SavingsDistribution(p0, p1, p2, mean)


def table5_montecarlo(model: RevisitFailureModel, revisit: int,
                      n_secondary: int = 19, rtt_ms: float = 60,
                      trials: int = 100_000, seed: int = 0,
                      variant: TcpVariant = TcpVariant.TFO,
                      engine: str = "fast",
                      chunk: int = 200_000) -> SavingsDistribution:
    """Empirical savings distribution over ``trials`` website revisits.

    engine="fast" samples the eligibility model directly (numba/numpy
    kernel); engine="packet" runs every trial through the full packet
    simulator, priming each with an initial visit.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if engine == "fast":
        counts = _montecarlo_fast(model, revisit, n_secondary, trials,
                                  seed, variant, chunk)
    elif engine == "packet":
        counts = _montecarlo_packet(model, revisit, n_secondary, rtt_ms,
                                    trials, seed, variant)
    else:
        raise ValueError(f"unknown engine: {engine!r}")
    n0, n1, n2 = counts
    mean = rtt_ms * (n1 + 2 * n2) / trials
    return SavingsDistribution(n0 / trials, n1 / trials, n2 / trials,
                               mean, trials=trials)


def _montecarlo_fast(model: RevisitFailureModel, revisit: int,
                     n_secondary: int, trials: int, seed: int,
                     variant: TcpVariant, chunk: int) -> tuple[int, int, int]:
    if variant is TcpVariant.FOP:
        # hostname-bound cookies: every draw is a hit by construction
        return (0, 0, trials)
    q = 1.0 - model.prob_for(revisit)
    rng = SeedTree(seed).stream("table5", variant.value, revisit)
    n0 = n1 = n2 = 0
    remaining = trials
    while remaining > 0:
        n = min(remaining, chunk)
        uniforms = rng.random((n, n_secondary + 1))
        c0, c1, c2 = kernels.tally_savings(uniforms, q)
        n0 += c0
        n1 += c1
        n2 += c2
        remaining -= n
    return (n0, n1, n2)


def _montecarlo_packet(model: RevisitFailureModel, revisit: int,
                       n_secondary: int, rtt_ms: float, trials: int,
                       seed: int, variant: TcpVariant) -> tuple[int, int, int]:
    rtt = int(rtt_ms)
    if rtt <= 0 or rtt != rtt_ms:
        raise ValueError("packet engine needs a positive integer RTT")
    if n_secondary < 1:
        # the two-stage savings accounting needs a real secondary stage;
        # the fast engine handles the degenerate single-host case
        raise ValueError("packet engine needs at least one secondary host")
    up = (rtt + 1) // 2
    down = rtt - up
    # every revisit of the trial draws the probability under study
    p_r = model.prob_for(revisit)
    seeds = SeedTree(seed)
    site = WebsiteModel(n_secondary=n_secondary)
    counts = [0, 0, 0]
    for trial in range(trials):
        world_seed = int(seeds.stream("t5pkt", variant.value, revisit,
                                      trial).integers(0, 2**63))
        duration = _run_fetch_pair(world_seed, site, (p_r,), up, down, variant)
        saved, rem = divmod(4 * rtt - duration, rtt)
        if rem or not 0 <= saved <= 2:
            raise RuntimeError(
                f"unexpected revisit duration {duration} ms at RTT {rtt} ms")
        counts[saved] += 1
    return tuple(counts)


def _run_fetch_pair(seed: int, site: WebsiteModel, failure_probs,
                    up: int, down: int, variant: TcpVariant) -> int:
    """Initial fetch to prime caches, then one measured revisit fetch."""
    world = World(seed, up, down)
    for i, hostname in enumerate([site.primary] + site.secondaries):
        world.add_pool(hostname, [f"198.51.{i}.1", f"198.51.{i}.2"],
                       failure_probs)
    client = world.add_client("c1", "203.0.113.1")
    kw = dict(variant=variant, truth_label="t5", context_label="t5")
    schedule_fetch(world, client, site.primary, site.secondaries, 0, **kw)
    revisit = schedule_fetch(world, client, site.primary, site.secondaries,
                             1_000_000, **kw)
    world.run()
    if revisit.duration is None:
        raise RuntimeError("revisit fetch did not complete")
    return revisit.duration

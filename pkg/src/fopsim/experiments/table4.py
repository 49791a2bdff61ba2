"""Connection-establishment durations across variants and latencies.

With zero processing delay, durations are pure RTT counts: 3 round trips
for any initial connection, 2 for a resumed connection over the standard
handshake, and 1 for an accepted abbreviated resumption.
"""

from __future__ import annotations

from ..stack import World, schedule_visit
from ..transport import TcpVariant

__all__ = ["run_table4", "table4_grid", "split_rtt", "RTT_COUNTS"]

# round trips to first application response: (initial, resumed)
RTT_COUNTS = {
    TcpVariant.STANDARD: (3, 2),
    TcpVariant.TFO: (3, 1),
    TcpVariant.FOP: (3, 1),
}


def split_rtt(rtt_ms: int) -> tuple[int, int]:
    """Split a round-trip budget into integer up/down one-way delays."""
    up = (rtt_ms + 1) // 2
    return up, rtt_ms - up


def run_table4(variant: TcpVariant, mode: str, one_way_delay_ms: int,
               *, seed: int = 0, delay_down_ms: int | None = None) -> int:
    """Simulated duration (ms) of one connection plus a short response.

    ``mode`` is "initial" or "resumed"; resumed connections are primed by
    a preceding visit to the same single-address host.
    """
    if mode not in ("initial", "resumed"):
        raise ValueError(f"unknown mode: {mode!r}")
    world = World(seed, one_way_delay_ms, delay_down_ms)
    world.add_pool("site.example", ["198.51.100.1"])
    client = world.add_client("c1", "203.0.113.1")
    kw = dict(variant=variant, truth_label="t4", context_label="t4")
    schedule_visit(world, client, "site.example", 0, **kw)
    if mode == "resumed":
        schedule_visit(world, client, "site.example", 1_000_000, **kw)
    world.run()
    record = client.records[0 if mode == "initial" else 1]
    if record.duration is None:
        raise RuntimeError("connection did not complete")
    return record.duration


def table4_grid(rtt_list: list[int], variants: list[TcpVariant],
                *, seed: int = 0) -> dict:
    """Durations for every (RTT, variant, mode) cell, via simulation."""
    rows = []
    for rtt in rtt_list:
        up, down = split_rtt(rtt)
        cells = {}
        for variant in variants:
            initial = run_table4(variant, "initial", up, seed=seed,
                                 delay_down_ms=down)
            resumed = run_table4(variant, "resumed", up, seed=seed,
                                 delay_down_ms=down)
            saving = 1.0 - resumed / initial if initial else 0.0
            cells[variant.value] = {
                "initial_ms": initial,
                "resumed_ms": resumed,
                "resumed_vs_initial_saving": saving,
            }
        rows.append({"rtt_ms": rtt, "one_way_up_ms": up,
                     "one_way_down_ms": down, "variants": cells})
    return {"rows": rows}

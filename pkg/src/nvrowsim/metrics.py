"""Per-run statistics: hit rates, energy breakdown, lifetime, speedup.

All counters are plain sums, so partial reports from parallel workers can
be combined by field-wise addition. Reports serialize to JSON (full
structure) and to a flat CSV row with stable column names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .device import EnergyEvent
from .tech import EnergyKind

SECONDS_PER_YEAR = 31_557_600.0
LIFETIME_TARGET_YEARS = 5.0

ENERGY_CLASSES = ("activate", "read", "write", "array_write")


def hit_rate(hits: int, closed_misses: int, conflicts: int) -> float:
    lookups = hits + closed_misses + conflicts
    if lookups == 0:
        raise ValueError("hit rate undefined with zero row-buffer lookups")
    return hits / lookups


def weighted_speedup(shared_cycles: Iterable[float],
                     alone_cycles: Iterable[float]) -> float:
    """Sum of per-core speedups versus each core's alone run."""
    shared = list(shared_cycles)
    alone = list(alone_cycles)
    if len(shared) != len(alone) or not shared:
        raise ValueError("need one alone-run baseline per core")
    for a, s in zip(alone, shared):
        if a is None or s is None or s <= 0:
            raise ValueError("missing or invalid baseline cycles")
    return sum(a / s for a, s in zip(alone, shared))


def lifetime_years(capacity_bytes: float, endurance_writes: float,
                   array_bytes_written: float, elapsed_seconds: float) -> float:
    """Projected device lifetime under ideal wear leveling.

    Leveling spreads array writes uniformly over every cell, so the device
    survives capacity * endurance bytes of writes at the observed rate.
    """
    if elapsed_seconds <= 0:
        raise ValueError("elapsed_seconds must be positive")
    if array_bytes_written < 0:
        raise ValueError("array_bytes_written must be non-negative")
    if array_bytes_written == 0:
        return float("inf")
    rate = array_bytes_written / elapsed_seconds
    return capacity_bytes * endurance_writes / rate / SECONDS_PER_YEAR


def energy_breakdown(events: Iterable[EnergyEvent]) -> dict[str, float]:
    """Sum events by class; transfer_fraction is the bus-transfer share."""
    totals = {name: 0.0 for name in ENERGY_CLASSES}
    for ev in events:
        totals[ev.kind.value] += ev.picojoules
    totals["total"] = sum(totals[name] for name in ENERGY_CLASSES)
    totals["transfer_fraction"] = (
        (totals["read"] + totals["write"]) / totals["total"]
        if totals["total"] > 0 else 0.0)
    return totals


@dataclass
class CoreStats:
    core: int
    requests: int = 0
    reads: int = 0
    writes: int = 0
    instructions: int = 0
    first_pass_cycles: Optional[int] = None


@dataclass
class StatsReport:
    """Everything one simulation run measured, plus derived metrics."""

    config: dict = field(default_factory=dict)
    per_core: list[CoreStats] = field(default_factory=list)
    hits: int = 0
    closed_misses: int = 0
    conflicts: int = 0
    energy_pj: dict = field(default_factory=lambda: {
        name: 0.0 for name in ENERGY_CLASSES})
    commands: dict = field(default_factory=dict)
    bus_busy_cycles: int = 0
    array_bytes_written: int = 0
    wear_events: int = 0
    memory_requests: int = 0
    forwarded_reads: int = 0
    coalesced_writes: int = 0
    cache: Optional[dict] = None
    cycles: int = 0
    clock_period_ns: float = 1.875
    capacity_bytes: int = 0
    endurance_writes: Optional[float] = None
    alone_cycles: Optional[list] = None  # solo-run baselines, when supplied
    timestamp: Optional[str] = None

    @property
    def lookups(self) -> int:
        return self.hits + self.closed_misses + self.conflicts

    def hit_rate(self) -> float:
        return hit_rate(self.hits, self.closed_misses, self.conflicts)

    @property
    def total_energy_pj(self) -> float:
        return sum(self.energy_pj[name] for name in ENERGY_CLASSES)

    @property
    def transfer_fraction(self) -> float:
        total = self.total_energy_pj
        if total <= 0:
            return 0.0
        return (self.energy_pj["read"] + self.energy_pj["write"]) / total

    @property
    def elapsed_seconds(self) -> float:
        return self.cycles * self.clock_period_ns * 1e-9

    def write_rate_bytes_per_s(self) -> float:
        if self.cycles == 0:
            return 0.0
        return self.array_bytes_written / self.elapsed_seconds

    def lifetime_years(self) -> Optional[float]:
        """Projected lifetime, or None when endurance does not apply (DRAM)."""
        if self.endurance_writes is None or self.cycles == 0:
            return None
        return lifetime_years(self.capacity_bytes, self.endurance_writes,
                              self.array_bytes_written, self.elapsed_seconds)

    def weighted_speedup(self) -> Optional[float]:
        if self.alone_cycles is None:
            return None
        shared = [c.first_pass_cycles for c in self.per_core]
        return weighted_speedup(shared, self.alone_cycles)

    def to_dict(self, deterministic: bool = False) -> dict:
        lifetime = self.lifetime_years()
        derived = {
            "hit_rate": self.hit_rate() if self.lookups else None,
            "transfer_fraction": self.transfer_fraction,
            "lifetime_years": lifetime,
            "weighted_speedup": self.weighted_speedup(),
        }
        if lifetime is not None and lifetime < LIFETIME_TARGET_YEARS:
            derived["lifetime_warning"] = {
                "target_years": LIFETIME_TARGET_YEARS,
                "write_rate_bytes_per_s": self.write_rate_bytes_per_s(),
            }
        out = {
            "config": self.config,
            "per_core": [{
                "core": c.core,
                "requests": c.requests,
                "reads": c.reads,
                "writes": c.writes,
                "instructions": c.instructions,
                "first_pass_cycles": c.first_pass_cycles,
            } for c in self.per_core],
            "row_buffer": {
                "hits": self.hits,
                "closed_misses": self.closed_misses,
                "conflicts": self.conflicts,
                "lookups": self.lookups,
            },
            "energy_pj": {**{k: self.energy_pj[k] for k in ENERGY_CLASSES},
                          "total": self.total_energy_pj},
            "memory": {
                "commands": dict(sorted(self.commands.items())),
                "bus_busy_cycles": self.bus_busy_cycles,
                "requests": self.memory_requests,
                "forwarded_reads": self.forwarded_reads,
                "coalesced_writes": self.coalesced_writes,
            },
            "wear": {
                "array_bytes_written": self.array_bytes_written,
                "wear_events": self.wear_events,
                "writes_per_second": (
                    self.wear_events / self.elapsed_seconds if self.cycles else 0.0),
            },
            "derived": derived,
            "run": {
                "cycles": self.cycles,
                "elapsed_seconds": self.elapsed_seconds,
            },
        }
        if self.cache is not None:
            out["memory"]["cache"] = self.cache
        if not deterministic and self.timestamp is not None:
            out["run"]["timestamp"] = self.timestamp
        return out

    def to_json(self, deterministic: bool = False) -> str:
        return json.dumps(self.to_dict(deterministic=deterministic),
                          indent=2, sort_keys=True) + "\n"


def flatten_report(d: dict, prefix: str = "") -> dict:
    """Flatten a report dict into dotted CSV column names."""
    flat: dict = {}
    for key, value in d.items():
        name = f"{prefix}{key}" if not prefix else f"{prefix}.{key}"
        if isinstance(value, dict):
            flat.update(flatten_report(value, name))
        elif isinstance(value, list):
            for item in value:
                if isinstance(item, dict) and "core" in item:
                    flat.update(flatten_report(
                        {k: v for k, v in item.items() if k != "core"},
                        f"{name}.{item['core']}"))
                else:
                    flat[name] = json.dumps(value)
                    break
        else:
            flat[name] = value
    return flat

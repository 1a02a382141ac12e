"""Per-channel memory controller.

Holds the read/write request queues, coalesces writes, forwards reads from
queued writes, and schedules commands first-ready first-come-first-served:
row-buffer-hit column commands beat row commands, age breaks ties, and
reads outrank writes except while draining the write queue.

A bank is reserved from the first row command issued on a request's behalf
until that request's column command goes out, so a conflicting request can
never close a row mid-sequence, and a precharge is never chosen while a
same-pool request could still hit the open row.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .device import (BankState, ChannelTiming, Command, CommandKind, Geometry,
                     Lookup, Phase, PhysicalLocation, RankTiming,
                     apply_command, earliest_issue)
from .tech import EnergyKind, EnergyTable, Protocol, TimingSet
from .trace import Op

NEVER = 1 << 62


class InvariantViolation(Exception):
    """A simulator self-check failed; the violated invariant is in args."""


class EnqueueResult(Enum):
    ACCEPTED = "accepted"
    COALESCED = "coalesced"
    REJECTED = "rejected"
    FORWARDED = "forwarded"  # read served from a queued write


@dataclass
class MemoryRequest:
    id: int
    core_id: int
    op: Op
    block_address: int
    location: PhysicalLocation
    enqueue_cycle: int = 0
    completion_cycle: Optional[int] = None
    data_tag: Optional[int] = None  # identity of written data, for soundness checks
    wait_core: Optional[int] = None  # core whose miss buffer this read holds
    classified: bool = False


@dataclass
class ControllerStats:
    hits: int = 0
    closed_misses: int = 0
    conflicts: int = 0
    commands: dict = field(default_factory=dict)
    energy_pj: dict = field(default_factory=dict)
    array_bytes_written: int = 0
    wear_events: int = 0
    forwarded_reads: int = 0
    coalesced_writes: int = 0
    accepted_requests: int = 0


class ChannelController:
    def __init__(self, channel: int, geom: Geometry, timing: TimingSet,
                 protocol: Protocol, energy_table: EnergyTable,
                 read_queue_depth: int = 64, write_queue_depth: int = 64,
                 drain_high: int = 48, drain_low: int = 16,
                 read_forwarding: bool = True, coalescing: bool = True,
                 timeout_cycles: int = 1_000_000,
                 memory_image: Optional[dict] = None,
                 record_commands: bool = False,
                 collect_events: bool = False,
                 data_log: Optional[list] = None):
        self.channel = channel
        self.geom = geom
        self.timing = timing
        self.protocol = protocol
        self.energy_table = energy_table
        self.read_queue_depth = read_queue_depth
        self.write_queue_depth = write_queue_depth
        self.drain_high = drain_high
        self.drain_low = drain_low
        self.read_forwarding = read_forwarding
        self.coalescing = coalescing
        self.timeout_cycles = timeout_cycles
        self.memory_image = memory_image if memory_image is not None else {}
        self.data_log = data_log

        self.banks = {(r, b): BankState()
                      for r in range(geom.ranks_per_channel)
                      for b in range(geom.banks_per_rank)}
        self.rank_timing = {r: RankTiming() for r in range(geom.ranks_per_channel)}
        self.chan_timing = ChannelTiming()
        self.read_queue: list[MemoryRequest] = []
        self.write_queue: list[MemoryRequest] = []
        self.drain_mode = False
        self.reserved: dict[tuple[int, int], int] = {}  # (rank, bank) -> request id
        self.completions: list = []  # heap of (cycle, seq, request)
        self._seq = 0
        self.stats = ControllerStats()
        self.command_log: list[Command] = [] if record_commands else None
        self.energy_events: list = [] if collect_events else None

    # ------------------------------------------------------------- queues

    def enqueue(self, req: MemoryRequest, now: int) -> EnqueueResult:
        req.enqueue_cycle = now
        if req.op is Op.WRITE:
            if self.coalescing:
                for entry in self.write_queue:
                    if entry.block_address == req.block_address:
                        entry.data_tag = req.data_tag
                        self.stats.coalesced_writes += 1
                        return EnqueueResult.COALESCED
            if len(self.write_queue) >= self.write_queue_depth:
                return EnqueueResult.REJECTED
            self.write_queue.append(req)
            self.stats.accepted_requests += 1
            return EnqueueResult.ACCEPTED
        if self.read_forwarding:
            source = None
            for entry in self.write_queue:  # youngest match wins
                if entry.block_address == req.block_address:
                    source = entry
            if source is not None:
                req.data_tag = source.data_tag
                self._complete(req, now + self.timing.tCL + self.timing.tBURST)
                self.stats.forwarded_reads += 1
                if self.data_log is not None:
                    self.data_log.append((Op.READ, req.block_address, req.data_tag))
                return EnqueueResult.FORWARDED
        if len(self.read_queue) >= self.read_queue_depth:
            return EnqueueResult.REJECTED
        self.read_queue.append(req)
        self.stats.accepted_requests += 1
        return EnqueueResult.ACCEPTED

    def update_drain(self) -> bool:
        wq = len(self.write_queue)
        if wq >= self.drain_high or (not self.read_queue and wq > 0):
            self.drain_mode = True
        elif wq <= self.drain_low:
            self.drain_mode = False
        return self.drain_mode

    # ---------------------------------------------------------- scheduling

    def _next_command(self, req: MemoryRequest) -> tuple[CommandKind, bool]:
        """(next command kind for this request, is it a row-buffer hit)."""
        bank = self.banks[(req.location.rank, req.location.bank)]
        ident = bank.open_identity()
        if ident == (req.location.row, req.location.segment):
            kind = CommandKind.READ if req.op is Op.READ else CommandKind.WRITE
            return kind, True
        if self.protocol is Protocol.NVM:
            if bank.phase is Phase.ROW_LATCHED and bank.latched_row == req.location.row:
                return CommandKind.ACTIVATE, False
            return CommandKind.PRECHARGE, False
        if ident is None:
            return CommandKind.ACTIVATE, False
        return CommandKind.PRECHARGE, False

    def _classify(self, req: MemoryRequest, bank: BankState) -> None:
        ident = bank.open_identity()
        if ident == (req.location.row, req.location.segment):
            self.stats.hits += 1
        elif ident is None:
            self.stats.closed_misses += 1
        else:
            self.stats.conflicts += 1
        req.classified = True

    def _check_starvation(self, now: int) -> None:
        for queue in (self.read_queue, self.write_queue):
            if queue and now - queue[0].enqueue_cycle > self.timeout_cycles:
                raise InvariantViolation(
                    f"starvation: request {queue[0].id} waited more than "
                    f"{self.timeout_cycles} cycles")

    def schedule(self, now: int) -> tuple[Optional[Command], int]:
        """Issue at most one command; also return the earliest future cycle
        at which an issue could become possible (NEVER if queues are idle)."""
        self.update_drain()
        self._check_starvation(now)
        t = self.timing
        for bank in self.banks.values():
            bank.settle(now, t)
        if self.drain_mode:
            pools = (self.write_queue, self.read_queue)
        else:
            pools = (self.read_queue, self.write_queue)

        candidates = []
        for class_rank, pool in enumerate(pools):
            for req in pool:
                kind, is_hit = self._next_command(req)
                candidates.append((class_rank, not is_hit, req.enqueue_cycle,
                                   req.id, kind, req))
        candidates.sort(key=lambda c: c[:4])

        # Rows that same-pool requests could still hit must not be closed.
        protected = set()
        preferred = pools[0]
        for req in preferred:
            key = (req.location.rank, req.location.bank)
            bank = self.banks[key]
            if bank.open_identity() == (req.location.row, req.location.segment):
                protected.add(key)

        next_hint = NEVER
        for _, _, _, _, kind, req in candidates:
            key = (req.location.rank, req.location.bank)
            bank = self.banks[key]
            if kind is CommandKind.PRECHARGE and (
                    key in self.reserved or key in protected):
                continue
            ready = earliest_issue(bank, self.rank_timing[req.location.rank],
                                   self.chan_timing, kind, now, t, self.protocol)
            if ready > now:
                next_hint = min(next_hint, ready)
                continue
            return self._issue(req, kind, bank, key, now), next_hint
        return None, next_hint

    def _issue(self, req: MemoryRequest, kind: CommandKind, bank: BankState,
               key: tuple[int, int], now: int) -> Command:
        loc = req.location
        if not req.classified:
            self._classify(req, bank)
        if kind is CommandKind.PRECHARGE and self.protocol is Protocol.DRAM:
            cmd = Command(kind, self.channel, loc.rank, loc.bank,
                          bank.open_row, 0, bank.open_segment or 0, now)
        else:
            cmd = Command(kind, self.channel, loc.rank, loc.bank,
                          loc.row, loc.block_column, loc.segment, now)
        energy, wear = apply_command(bank, self.rank_timing[loc.rank],
                                     self.chan_timing, cmd, self.protocol,
                                     self.geom, self.timing, self.energy_table)
        self._account(energy, wear, cmd)
        if kind in (CommandKind.PRECHARGE, CommandKind.ACTIVATE):
            self.reserved[key] = req.id
        else:
            if self.reserved.get(key) == req.id:
                del self.reserved[key]
            self._retire_column(req, now)
        return cmd

    def _retire_column(self, req: MemoryRequest, now: int) -> None:
        t = self.timing
        if req.op is Op.READ:
            self.read_queue.remove(req)
            req.data_tag = self.memory_image.get(req.block_address)
            if self.data_log is not None:
                self.data_log.append((Op.READ, req.block_address, req.data_tag))
            self._complete(req, now + t.tCL + t.tBURST)
        else:
            self.write_queue.remove(req)
            self.memory_image[req.block_address] = req.data_tag
            if self.data_log is not None:
                self.data_log.append((Op.WRITE, req.block_address, req.data_tag))
            self._complete(req, now + t.tCWL + t.tBURST)

    def _complete(self, req: MemoryRequest, cycle: int) -> None:
        req.completion_cycle = cycle
        heapq.heappush(self.completions, (cycle, self._seq, req))
        self._seq += 1

    def _account(self, energy, wear, cmd: Command) -> None:
        stats = self.stats
        stats.commands[cmd.kind.value] = stats.commands.get(cmd.kind.value, 0) + 1
        for ev in energy:
            stats.energy_pj[ev.kind.value] = (
                stats.energy_pj.get(ev.kind.value, 0.0) + ev.picojoules)
            if self.energy_events is not None:
                self.energy_events.append(ev)
        for w in wear:
            stats.array_bytes_written += w.bytes_written
            stats.wear_events += 1
        if self.command_log is not None:
            self.command_log.append(cmd)

    # ------------------------------------------------------------- draining

    def pop_completions(self, now: int) -> list[MemoryRequest]:
        done = []
        while self.completions and self.completions[0][0] <= now:
            done.append(heapq.heappop(self.completions)[2])
        return done

    def next_completion_cycle(self) -> int:
        return self.completions[0][0] if self.completions else NEVER

    @property
    def idle(self) -> bool:
        return not self.read_queue and not self.write_queue and not self.completions

    def open_banks(self) -> list[tuple[int, int]]:
        return [key for key, bank in sorted(self.banks.items())
                if bank.phase in (Phase.ACTIVATING, Phase.ACTIVE)]

    def close_one_bank(self, now: int) -> tuple[Optional[Command], int]:
        """End-of-run: precharge the first open bank whose timing allows it."""
        t = self.timing
        next_hint = NEVER
        for key in self.open_banks():
            bank = self.banks[key]
            bank.settle(now, t)
            if bank.phase not in (Phase.ACTIVATING, Phase.ACTIVE):
                continue
            ready = earliest_issue(bank, self.rank_timing[key[0]],
                                   self.chan_timing, CommandKind.PRECHARGE,
                                   now, t, self.protocol)
            if ready > now:
                next_hint = min(next_hint, ready)
                continue
            cmd = Command(CommandKind.PRECHARGE, self.channel, key[0], key[1],
                          bank.open_row, 0, bank.open_segment or 0, now)
            energy, wear = apply_command(bank, self.rank_timing[key[0]],
                                         self.chan_timing, cmd, self.protocol,
                                         self.geom, t, self.energy_table)
            self._account(energy, wear, cmd)
            return cmd, next_hint
        return None, next_hint

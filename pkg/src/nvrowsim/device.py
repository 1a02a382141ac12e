"""Bank state machines, address decoding, timing legality, and energy events.

Two command protocols share the same four commands but wire them
differently. Under the DRAM protocol ACTIVATE carries the row address and
senses a full buffer, while PRECHARGE restores the (destructively read)
buffer to the array. Under the NVM protocol PRECHARGE only latches a row
address on chip, ACTIVATE carries the column/segment address and senses
just that segment, and dirty blocks are written back to the array at
eviction time.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .tech import (EnergyKind, EnergyTable, Protocol, TimingSet,
                   command_energy)

# Timestamp for "never happened"; far enough back that no constraint binds.
LONG_AGO = -(10 ** 9)


class Mapping(Enum):
    ROW_INTERLEAVED = "row"
    BLOCK_INTERLEAVED = "block"


class CommandKind(Enum):
    ACTIVATE = "ACTIVATE"
    PRECHARGE = "PRECHARGE"
    READ = "READ"
    WRITE = "WRITE"


class Phase(Enum):
    IDLE = "idle"
    ROW_LATCHED = "row_latched"  # NVM only: row address stored, awaiting ACTIVATE
    ACTIVATING = "activating"
    ACTIVE = "active"
    PRECHARGING = "precharging"  # DRAM only


class Lookup(Enum):
    HIT = "hit"
    CLOSED_MISS = "closed_miss"
    CONFLICT = "conflict"


class IllegalCommandError(Exception):
    """Command not legal in the bank's current phase."""


class AddressError(ValueError):
    """Address outside the configured physical space."""


def _log2(value: int, label: str) -> int:
    if value <= 0 or value & (value - 1):
        raise ValueError(f"{label} must be a positive power of two, got {value}")
    return value.bit_length() - 1


@dataclass(frozen=True)
class Geometry:
    channels: int = 2
    ranks_per_channel: int = 1
    banks_per_rank: int = 8
    chips_per_rank: int = 8
    row_bytes_per_chip: int = 1024  # the array row, m
    buffer_bytes_per_chip: int = 1024  # the row buffer, m-dagger
    rows_per_bank: int = 16384
    cache_block_bytes: int = 64
    prefetch_bytes_per_chip: int = 8

    def __post_init__(self):
        for name in ("channels", "ranks_per_channel", "banks_per_rank",
                     "chips_per_rank", "row_bytes_per_chip",
                     "buffer_bytes_per_chip", "rows_per_bank",
                     "cache_block_bytes", "prefetch_bytes_per_chip"):
            _log2(getattr(self, name), name)
        if self.row_bytes_per_chip % self.buffer_bytes_per_chip:
            raise ValueError("buffer size must divide the row size")
        if self.cache_block_bytes != self.prefetch_bytes_per_chip * self.chips_per_rank:
            raise ValueError("cache block must equal prefetch bytes times chips")
        if self.buffer_bytes_per_chip < self.prefetch_bytes_per_chip:
            raise ValueError("buffer must hold at least one prefetch unit")

    @property
    def row_bytes_per_rank(self) -> int:
        return self.row_bytes_per_chip * self.chips_per_rank

    @property
    def buffer_bytes(self) -> int:
        return self.buffer_bytes_per_chip * self.chips_per_rank

    @property
    def buffer_bits(self) -> int:
        return self.buffer_bytes * 8

    @property
    def block_bits(self) -> int:
        return self.cache_block_bytes * 8

    @property
    def blocks_per_row(self) -> int:
        return self.row_bytes_per_rank // self.cache_block_bytes

    @property
    def blocks_per_buffer(self) -> int:
        return self.buffer_bytes // self.cache_block_bytes

    @property
    def segments_per_row(self) -> int:
        return self.row_bytes_per_chip // self.buffer_bytes_per_chip

    @property
    def total_bytes(self) -> int:
        return (self.channels * self.ranks_per_channel * self.banks_per_rank
                * self.rows_per_bank * self.row_bytes_per_rank)

    def with_buffer(self, buffer_bytes_per_chip: int) -> "Geometry":
        from dataclasses import replace
        return replace(self, buffer_bytes_per_chip=buffer_bytes_per_chip)


@dataclass(frozen=True)
class PhysicalLocation:
    channel: int
    rank: int
    bank: int
    row: int
    block_column: int  # cache-block index within the row
    segment: int  # buffer-sized region of the row containing the block


def decode_address(addr: int, g: Geometry, mapping: Mapping) -> PhysicalLocation:
    """Split a byte address into its physical coordinates.

    Bit layout MSB to LSB is row|rank|bank|channel|column|offset for row
    interleaving and row|column|rank|bank|channel|offset for block
    interleaving. Sub-block offset bits are dropped.
    """
    if addr < 0 or addr >= g.total_bytes:
        raise AddressError(f"address {addr:#x} outside {g.total_bytes:#x}-byte space")
    bits = addr >> _log2(g.cache_block_bytes, "cache_block_bytes")

    def take(count: int) -> int:
        nonlocal bits
        width = _log2(count, "field")
        value = bits & (count - 1)
        bits >>= width
        return value

    if mapping is Mapping.ROW_INTERLEAVED:
        column = take(g.blocks_per_row)
        channel = take(g.channels)
        bank = take(g.banks_per_rank)
        rank = take(g.ranks_per_channel)
        row = take(g.rows_per_bank)
    elif mapping is Mapping.BLOCK_INTERLEAVED:
        channel = take(g.channels)
        bank = take(g.banks_per_rank)
        rank = take(g.ranks_per_channel)
        column = take(g.blocks_per_row)
        row = take(g.rows_per_bank)
    else:
        raise ValueError(f"unknown mapping {mapping!r}")
    return PhysicalLocation(channel, rank, bank, row, column,
                            column // g.blocks_per_buffer)


def encode_address(loc: PhysicalLocation, g: Geometry, mapping: Mapping) -> int:
    """Inverse of decode_address, returning the block-aligned byte address."""
    bits = 0
    if mapping is Mapping.ROW_INTERLEAVED:
        fields = ((loc.row, g.rows_per_bank), (loc.rank, g.ranks_per_channel),
                  (loc.bank, g.banks_per_rank), (loc.channel, g.channels),
                  (loc.block_column, g.blocks_per_row))
    else:
        fields = ((loc.row, g.rows_per_bank), (loc.block_column, g.blocks_per_row),
                  (loc.rank, g.ranks_per_channel), (loc.bank, g.banks_per_rank),
                  (loc.channel, g.channels))
    for value, count in fields:
        if value < 0 or value >= count:
            raise AddressError(f"field value {value} out of range {count}")
        bits = (bits << _log2(count, "field")) | value
    return bits * g.cache_block_bytes


@dataclass
class Command:
    kind: CommandKind
    channel: int
    rank: int
    bank: int
    row: int
    block_column: int
    segment: int
    cycle: int


@dataclass(frozen=True)
class EnergyEvent:
    kind: EnergyKind
    bits: int
    picojoules: float


@dataclass(frozen=True)
class WearEvent:
    channel: int
    rank: int
    bank: int
    row: int
    bytes_written: int


@dataclass
class BankState:
    """Protocol state of one bank plus the timestamps its constraints need."""

    phase: Phase = Phase.IDLE
    open_row: Optional[int] = None
    open_segment: Optional[int] = None
    latched_row: Optional[int] = None  # NVM pending row address
    dirty_mask: int = 0  # one bit per cache block in the buffer
    activate_cycle: int = LONG_AGO
    precharge_cycle: int = LONG_AGO
    last_read_cycle: int = LONG_AGO
    last_write_cycle: int = LONG_AGO

    def settle(self, now: int, t: TimingSet) -> None:
        """Fold elapsed time into the phase (activation/precharge done)."""
        if self.phase is Phase.ACTIVATING and now >= self.activate_cycle + t.tRCD:
            self.phase = Phase.ACTIVE
        elif self.phase is Phase.PRECHARGING and now >= self.precharge_cycle + t.tRP:
            self.phase = Phase.IDLE

    def open_identity(self) -> Optional[tuple[int, int]]:
        """(row, segment) held or being sensed into the buffer, if any."""
        if self.phase in (Phase.ACTIVATING, Phase.ACTIVE):
            return self.open_row, self.open_segment
        return None


@dataclass
class RankTiming:
    """Rank-scoped history: inter-activate spacing and write turnaround."""

    act_history: deque = field(default_factory=lambda: deque(maxlen=4))
    last_write_cycle: int = LONG_AGO


@dataclass
class ChannelTiming:
    """Channel-scoped data-bus state. Bursts leave in command order."""

    bus_free_cycle: int = LONG_AGO  # end of the latest reserved burst
    last_read_cycle: int = LONG_AGO
    last_write_cycle: int = LONG_AGO
    busy_cycles: int = 0


def lookup(state: BankState, loc: PhysicalLocation) -> Lookup:
    """Classify a request against a settled bank state."""
    if state.phase is Phase.ACTIVE and state.open_row == loc.row \
            and state.open_segment == loc.segment:
        return Lookup.HIT
    if state.open_row is None:
        return Lookup.CLOSED_MISS
    return Lookup.CONFLICT


def _check_phase(bank: BankState, kind: CommandKind, protocol: Protocol) -> None:
    if kind is CommandKind.ACTIVATE:
        if protocol is Protocol.NVM:
            if bank.phase is not Phase.ROW_LATCHED:
                raise IllegalCommandError("NVM ACTIVATE without a latched row")
        elif bank.phase not in (Phase.IDLE, Phase.PRECHARGING):
            raise IllegalCommandError(f"ACTIVATE while {bank.phase.value}")
    elif kind is CommandKind.PRECHARGE:
        if protocol is Protocol.DRAM and bank.phase not in (
                Phase.ACTIVATING, Phase.ACTIVE):
            raise IllegalCommandError(f"DRAM PRECHARGE while {bank.phase.value}")
    elif kind in (CommandKind.READ, CommandKind.WRITE):
        if bank.phase not in (Phase.ACTIVATING, Phase.ACTIVE):
            raise IllegalCommandError(f"{kind.value} while {bank.phase.value}")
    else:
        raise IllegalCommandError(f"unknown command kind {kind!r}")


def earliest_issue(bank: BankState, rank_t: RankTiming, chan_t: ChannelTiming,
                   kind: CommandKind, now: int, t: TimingSet,
                   protocol: Protocol) -> int:
    """Earliest cycle >= now at which the command satisfies every constraint.

    Covers activate-to-column, write recovery, read-to-precharge,
    inter-activate spacing and the four-activate window per rank, precharge
    time, minimum row-open time (DRAM only), same-kind column spacing,
    write-to-read turnaround, and data-bus burst occupancy. The command-bus
    slot itself (one command per channel per cycle) is the caller's to
    arbitrate.
    """
    _check_phase(bank, kind, protocol)
    earliest = now
    if kind is CommandKind.ACTIVATE:
        earliest = max(earliest, bank.precharge_cycle + t.tRP)
        if rank_t.act_history:
            earliest = max(earliest, rank_t.act_history[-1] + t.tRRD)
        if len(rank_t.act_history) == 4:
            earliest = max(earliest, rank_t.act_history[0] + t.tFAW)
    elif kind is CommandKind.PRECHARGE:
        earliest = max(earliest,
                       bank.last_write_cycle + t.tWR,
                       bank.last_read_cycle + t.tRTP)
        if protocol is Protocol.DRAM:
            earliest = max(earliest, bank.activate_cycle + t.tRAS)
    elif kind is CommandKind.READ:
        earliest = max(earliest,
                       bank.activate_cycle + t.tRCD,
                       chan_t.last_read_cycle + t.tCCD,
                       rank_t.last_write_cycle + t.tCWL + t.tBURST + t.tWTR,
                       chan_t.bus_free_cycle - t.tCL)
    elif kind is CommandKind.WRITE:
        earliest = max(earliest,
                       bank.activate_cycle + t.tRCD,
                       chan_t.last_write_cycle + t.tCCD,
                       chan_t.bus_free_cycle - t.tCWL)
    return earliest


def apply_command(bank: BankState, rank_t: RankTiming, chan_t: ChannelTiming,
                  cmd: Command, protocol: Protocol, g: Geometry,
                  t: TimingSet, table: EnergyTable
                  ) -> tuple[list[EnergyEvent], list[WearEvent]]:
    """Execute one command against the bank, returning its energy/wear events."""
    bank.settle(cmd.cycle, t)
    _check_phase(bank, cmd.kind, protocol)
    energy: list[EnergyEvent] = []
    wear: list[WearEvent] = []

    def emit(kind: EnergyKind, bits: int) -> None:
        energy.append(EnergyEvent(kind, bits, command_energy(table, kind, bits)))

    if cmd.kind is CommandKind.ACTIVATE:
        if protocol is Protocol.NVM:
            bank.open_row = bank.latched_row
            bank.latched_row = None
        else:
            bank.open_row = cmd.row
        bank.open_segment = cmd.segment
        bank.dirty_mask = 0
        bank.phase = Phase.ACTIVATING
        bank.activate_cycle = cmd.cycle
        rank_t.act_history.append(cmd.cycle)
        emit(EnergyKind.ACTIVATE, g.buffer_bits)
    elif cmd.kind is CommandKind.PRECHARGE:
        if protocol is Protocol.DRAM:
            # Destructive read: the whole buffer is restored to the array.
            emit(EnergyKind.ARRAY_WRITE, g.buffer_bits)
            bank.phase = Phase.PRECHARGING
        else:
            # Address transfer only; evict dirty blocks back to the array.
            if bank.phase in (Phase.ACTIVATING, Phase.ACTIVE):
                mask = bank.dirty_mask
                while mask:
                    mask &= mask - 1
                    emit(EnergyKind.ARRAY_WRITE, g.block_bits)
                    wear.append(WearEvent(cmd.channel, cmd.rank, cmd.bank,
                                          bank.open_row, g.cache_block_bytes))
            bank.phase = Phase.ROW_LATCHED
            bank.latched_row = cmd.row
        bank.open_row = None
        bank.open_segment = None
        bank.dirty_mask = 0
        bank.precharge_cycle = cmd.cycle
    elif cmd.kind is CommandKind.READ:
        _check_column(bank, cmd)
        bank.phase = Phase.ACTIVE
        bank.last_read_cycle = cmd.cycle
        chan_t.last_read_cycle = cmd.cycle
        _reserve_bus(chan_t, cmd.cycle + t.tCL, t.tBURST)
        emit(EnergyKind.READ, g.block_bits)
    elif cmd.kind is CommandKind.WRITE:
        _check_column(bank, cmd)
        bank.phase = Phase.ACTIVE
        bank.dirty_mask |= 1 << (cmd.block_column - cmd.segment * g.blocks_per_buffer)
        bank.last_write_cycle = cmd.cycle
        rank_t.last_write_cycle = cmd.cycle
        chan_t.last_write_cycle = cmd.cycle
        _reserve_bus(chan_t, cmd.cycle + t.tCWL, t.tBURST)
        emit(EnergyKind.WRITE, g.block_bits)
    return energy, wear


def _check_column(bank: BankState, cmd: Command) -> None:
    if bank.open_row != cmd.row or bank.open_segment != cmd.segment:
        raise IllegalCommandError(
            f"{cmd.kind.value} targets ({cmd.row},{cmd.segment}) but bank holds "
            f"({bank.open_row},{bank.open_segment})")


def _reserve_bus(chan_t: ChannelTiming, burst_start: int, burst_len: int) -> None:
    if burst_start < chan_t.bus_free_cycle:
        raise IllegalCommandError("data-bus bursts would overlap")
    chan_t.bus_free_cycle = burst_start + burst_len
    chan_t.busy_cycles += burst_len


def service_latency_closed_form(scenario: str, op: str, t: TimingSet,
                                protocol: Protocol, dirty: bool = False) -> int:
    """Analytic latency of one isolated request, in cycles.

    Assumes an idle bank and idle buses, with every command issued at its
    earliest timing-legal cycle.
    """
    if op == "read":
        column = t.tCL + t.tBURST
    elif op == "write":
        column = t.tCWL + t.tBURST
    else:
        raise ValueError(f"unknown op {op!r}")
    if scenario == "hit":
        return column
    if scenario == "closed_miss":
        return t.tRCD + column
    if scenario == "conflict":
        wait = t.tWR if dirty else 0
        if protocol is Protocol.DRAM:
            wait += t.tRP
        return wait + t.tRCD + column
    raise ValueError(f"unknown scenario {scenario!r}")


def simulate_isolated_request(scenario: str, op: str, t: TimingSet,
                              protocol: Protocol, g: Geometry,
                              dirty: bool = False) -> int:
    """Cycle-step one request on a fresh bank and return its latency.

    The counterpart of service_latency_closed_form: commands are issued at
    their earliest_issue cycle with no competing bus traffic.
    """
    table = EnergyTable(0.3, 19.0, 24.2, 0.3)
    bank = BankState()
    rank_t = RankTiming()
    chan_t = ChannelTiming()
    target = PhysicalLocation(0, 0, 0, row=7, block_column=0, segment=0)
    if scenario == "hit":
        bank.phase = Phase.ACTIVE
        bank.open_row = target.row
        bank.open_segment = target.segment
    elif scenario == "conflict":
        bank.phase = Phase.ACTIVE
        bank.open_row = target.row + 1
        bank.open_segment = 0
        if dirty:
            bank.dirty_mask = 1
            bank.last_write_cycle = 0  # a write retired just as we arrive
    elif scenario != "closed_miss":
        raise ValueError(f"unknown scenario {scenario!r}")

    if scenario == "hit":
        sequence = []
    elif protocol is Protocol.NVM:
        sequence = [CommandKind.PRECHARGE, CommandKind.ACTIVATE]
    elif scenario == "closed_miss":
        sequence = [CommandKind.ACTIVATE]
    else:
        sequence = [CommandKind.PRECHARGE, CommandKind.ACTIVATE]

    now = 0
    for kind in sequence:
        now = earliest_issue(bank, rank_t, chan_t, kind, now, t, protocol)
        cmd = Command(kind, 0, 0, 0, target.row, target.block_column,
                      target.segment, now)
        apply_command(bank, rank_t, chan_t, cmd, protocol, g, t, table)
    col = CommandKind.READ if op == "read" else CommandKind.WRITE
    now = earliest_issue(bank, rank_t, chan_t, col, now, t, protocol)
    cmd = Command(col, 0, 0, 0, target.row, target.block_column,
                  target.segment, now)
    apply_command(bank, rank_t, chan_t, cmd, protocol, g, t, table)
    return now + (t.tCL if op == "read" else t.tCWL) + t.tBURST


CSV_HEADER = ["cycle", "channel", "rank", "bank", "kind", "row", "column"]


def write_command_csv(commands: Iterable[Command], path: str) -> None:
    """Dump a command stream as the debug CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for c in commands:
            writer.writerow([c.cycle, c.channel, c.rank, c.bank,
                             c.kind.value, c.row, c.block_column])


def read_command_csv(path: str, g: Geometry) -> list[Command]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected command CSV header {header!r}")
        out = []
        for row in reader:
            cycle, channel, rank, bank, kind, row_id, column = row
            out.append(Command(CommandKind(kind), int(channel), int(rank),
                               int(bank), int(row_id), int(column),
                               int(column) // g.blocks_per_buffer, int(cycle)))
    return out

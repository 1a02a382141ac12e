"""Independent post-hoc legality checker for emitted command streams.

Deliberately shares no logic with the scheduler or with earliest_issue: it
walks the recorded stream and re-checks every constraint from scratch, so a
bug in command generation cannot hide itself. Streams must be in issue
order (non-decreasing cycle).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .device import Command, CommandKind, Geometry
from .tech import Protocol, TimingSet


@dataclass(frozen=True)
class Violation:
    cycle: int
    channel: int
    rank: int
    bank: int
    rule: str
    detail: str


class _BankTrack:
    __slots__ = ("open_row", "open_segment", "latched_row",
                 "last_act", "last_pre", "last_read", "last_write")

    def __init__(self):
        self.open_row: Optional[int] = None
        self.open_segment: Optional[int] = None
        self.latched_row: Optional[int] = None
        far = -(10 ** 9)
        self.last_act = far
        self.last_pre = far
        self.last_read = far
        self.last_write = far


def validate_stream(commands: Iterable[Command], t: TimingSet,
                    protocol: Protocol, g: Geometry) -> list[Violation]:
    """Replay a command stream and collect every constraint violation."""
    far = -(10 ** 9)
    banks: dict[tuple[int, int, int], _BankTrack] = {}
    rank_acts: dict[tuple[int, int], list[int]] = {}
    rank_last_write: dict[tuple[int, int], int] = {}
    chan_last_cmd: dict[int, int] = {}
    chan_last_read: dict[int, int] = {}
    chan_last_write: dict[int, int] = {}
    chan_burst_end: dict[int, int] = {}
    violations: list[Violation] = []
    prev_cycle = far

    def flag(cmd: Command, rule: str, detail: str) -> None:
        violations.append(Violation(cmd.cycle, cmd.channel, cmd.rank,
                                    cmd.bank, rule, detail))

    for cmd in commands:
        if cmd.cycle < prev_cycle:
            flag(cmd, "stream-order", f"cycle {cmd.cycle} after {prev_cycle}")
        prev_cycle = cmd.cycle
        bkey = (cmd.channel, cmd.rank, cmd.bank)
        rkey = (cmd.channel, cmd.rank)
        bank = banks.setdefault(bkey, _BankTrack())
        acts = rank_acts.setdefault(rkey, [])

        if chan_last_cmd.get(cmd.channel, far) == cmd.cycle:
            flag(cmd, "command-bus", "two commands on one channel in one cycle")
        chan_last_cmd[cmd.channel] = cmd.cycle

        if cmd.kind is CommandKind.ACTIVATE:
            if protocol is Protocol.NVM:
                if bank.latched_row is None:
                    flag(cmd, "phase", "NVM ACTIVATE without latched row")
                elif bank.latched_row != cmd.row:
                    flag(cmd, "phase", f"ACTIVATE row {cmd.row} but latch holds "
                                       f"{bank.latched_row}")
            else:
                if bank.open_row is not None:
                    flag(cmd, "phase", "ACTIVATE on an open bank")
                if cmd.cycle - bank.last_pre < t.tRP:
                    flag(cmd, "tRP", f"A {cmd.cycle - bank.last_pre} cycles after P")
            if acts and cmd.cycle - acts[-1] < t.tRRD:
                flag(cmd, "tRRD", f"A {cmd.cycle - acts[-1]} cycles after rank A")
            in_window = sum(1 for a in acts if cmd.cycle - a < t.tFAW)
            if in_window >= 4:
                flag(cmd, "tFAW", f"{in_window + 1} activates within {t.tFAW} cycles")
            acts.append(cmd.cycle)
            if len(acts) > 8:
                del acts[:-8]
            bank.open_row = cmd.row if protocol is Protocol.DRAM else bank.latched_row
            bank.open_segment = cmd.segment
            bank.latched_row = None
            bank.last_act = cmd.cycle
        elif cmd.kind is CommandKind.PRECHARGE:
            if protocol is Protocol.DRAM and bank.open_row is None:
                flag(cmd, "phase", "DRAM PRECHARGE on a closed bank")
            if cmd.cycle - bank.last_write < t.tWR:
                flag(cmd, "tWR", f"P {cmd.cycle - bank.last_write} cycles after W")
            if cmd.cycle - bank.last_read < t.tRTP:
                flag(cmd, "tRTP", f"P {cmd.cycle - bank.last_read} cycles after R")
            if protocol is Protocol.DRAM and cmd.cycle - bank.last_act < t.tRAS:
                flag(cmd, "tRAS", f"P {cmd.cycle - bank.last_act} cycles after A")
            if protocol is Protocol.NVM:
                bank.latched_row = cmd.row
            bank.open_row = None
            bank.open_segment = None
            bank.last_pre = cmd.cycle
        elif cmd.kind in (CommandKind.READ, CommandKind.WRITE):
            if bank.open_row != cmd.row or bank.open_segment != cmd.segment:
                flag(cmd, "phase",
                     f"{cmd.kind.value} ({cmd.row},{cmd.segment}) on bank holding "
                     f"({bank.open_row},{bank.open_segment})")
            if cmd.cycle - bank.last_act < t.tRCD:
                flag(cmd, "tRCD", f"column {cmd.cycle - bank.last_act} cycles after A")
            if cmd.kind is CommandKind.READ:
                if cmd.cycle - chan_last_read.get(cmd.channel, far) < t.tCCD:
                    flag(cmd, "tCCD", "reads closer than tCCD on one channel")
                turnaround = t.tCWL + t.tBURST + t.tWTR
                if cmd.cycle - rank_last_write.get(rkey, far) < turnaround:
                    flag(cmd, "tWTR", "read too soon after a write in the rank")
                burst_start = cmd.cycle + t.tCL
                chan_last_read[cmd.channel] = cmd.cycle
                bank.last_read = cmd.cycle
            else:
                if cmd.cycle - chan_last_write.get(cmd.channel, far) < t.tCCD:
                    flag(cmd, "tCCD", "writes closer than tCCD on one channel")
                burst_start = cmd.cycle + t.tCWL
                chan_last_write[cmd.channel] = cmd.cycle
                rank_last_write[rkey] = cmd.cycle
                bank.last_write = cmd.cycle
            if burst_start < chan_burst_end.get(cmd.channel, far):
                flag(cmd, "data-bus", "burst overlaps the previous burst")
            chan_burst_end[cmd.channel] = burst_start + t.tBURST
        else:
            flag(cmd, "kind", f"unknown command kind {cmd.kind!r}")
    return violations

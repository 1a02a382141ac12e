"""Technology parameters and the models derived from them.

A TechnologyProfile describes a memory technology through four ratios
relative to DRAM (read energy, write energy, read latency, write latency)
plus write endurance. From a profile and a row-buffer size this module
derives the integer-cycle timing set, the per-command energy table, an
analytic power cross-check, and the sense-amp area feasibility estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

CLOCK_PERIOD_NS = 1.875


class Protocol(Enum):
    DRAM = "dram"
    NVM = "nvm"


class EnergyKind(Enum):
    ACTIVATE = "activate"
    READ = "read"
    WRITE = "write"
    ARRAY_WRITE = "array_write"


class PowerForm(Enum):
    DRAM_FULL = "dram_full"
    NVM_FULL = "nvm_full"
    DRAM_APPROX = "dram_approx"
    NVM_APPROX = "nvm_approx"


@dataclass(frozen=True)
class TechnologyProfile:
    """Per-technology ratios, all relative to DRAM (= 1.0)."""

    name: str
    alpha: float  # read energy ratio
    beta: float  # write energy ratio
    gamma: float  # read latency ratio
    delta: float  # write latency ratio
    protocol: Protocol
    endurance_writes: Optional[float] = None  # writes per cell before failure

    def __post_init__(self):
        for label, value in (("alpha", self.alpha), ("beta", self.beta),
                             ("gamma", self.gamma), ("delta", self.delta)):
            if value <= 0:
                raise ValueError(f"{label} must be positive, got {value}")
        if self.protocol is Protocol.DRAM:
            if (self.alpha, self.beta, self.gamma, self.delta) != (1.0, 1.0, 1.0, 1.0):
                raise ValueError("DRAM profile requires unit ratios")
        else:
            if self.endurance_writes is None:
                raise ValueError("NVM profile requires endurance_writes")

    def with_overrides(self, **kwargs) -> "TechnologyProfile":
        return replace(self, **kwargs)


# Default ratio choices. PCM energy ratios are the commonly cited 2x read /
# 100x write; PCM latency ratios sit mid-range of published surveys. STT-RAM
# is modeled with DRAM-like ratios. All overridable per experiment config.
DRAM_PROFILE = TechnologyProfile("dram", 1.0, 1.0, 1.0, 1.0, Protocol.DRAM)
PCM_PROFILE = TechnologyProfile("pcm", 2.0, 100.0, 4.0, 8.0, Protocol.NVM,
                                endurance_writes=1e8)
STTRAM_PROFILE = TechnologyProfile("sttram", 1.0, 1.0, 1.0, 1.0, Protocol.NVM,
                                   endurance_writes=1e12)

PROFILES = {p.name: p for p in (DRAM_PROFILE, PCM_PROFILE, STTRAM_PROFILE)}


@dataclass(frozen=True)
class TimingSet:
    """Command-to-command constraints in integer clock cycles."""

    tRCD: int
    tWR: int
    tRRD: int
    tFAW: int
    tRP: int
    tRTP: int
    tCL: int = 8
    tCWL: int = 6
    tCCD: int = 4
    tBURST: int = 4
    tWTR: int = 4
    tRAS: int = 20
    clock_period_ns: float = CLOCK_PERIOD_NS

    def __post_init__(self):
        for name in ("tRCD", "tWR", "tRRD", "tFAW", "tRP", "tRTP",
                     "tCL", "tCWL", "tCCD", "tBURST", "tWTR", "tRAS"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if self.tBURST != 4:
            raise ValueError("tBURST is fixed at 4 cycles")

    def with_overrides(self, **kwargs) -> "TimingSet":
        return replace(self, **kwargs)


# DDR3-1066 class values for the DRAM column.
DRAM_TIMING = TimingSet(tRCD=8, tWR=8, tRRD=4, tFAW=20, tRP=8, tRTP=4)


def _check_power_of_two(value: int, label: str) -> None:
    if value <= 0 or (value & (value - 1)) != 0:
        raise ValueError(f"{label} must be a positive power of two, got {value}")


def derive_timing(profile: TechnologyProfile, m_dagger_bytes: int,
                  m_base_bytes: int) -> TimingSet:
    """Derive the timing set for a profile at a given per-chip buffer size.

    DRAM always gets the fixed DDR3 column. NVM scales activate-to-column
    and write-recovery by the latency ratios, relaxes the inter-activate
    constraints with the buffer-size ratio (peak-power driven), and zeroes
    the precharge constraints. Fractional results round up; inter-command
    gaps keep a floor of one cycle since the command bus issues at most one
    command per cycle.
    """
    _check_power_of_two(m_dagger_bytes, "m_dagger_bytes")
    _check_power_of_two(m_base_bytes, "m_base_bytes")
    if m_dagger_bytes > m_base_bytes:
        raise ValueError(
            f"buffer size {m_dagger_bytes} exceeds row size {m_base_bytes}")
    if profile.protocol is Protocol.DRAM:
        return DRAM_TIMING
    size_ratio = m_dagger_bytes / m_base_bytes
    return TimingSet(
        tRCD=math.ceil(8 * profile.gamma),
        tWR=math.ceil(8 * profile.delta),
        tRRD=max(1, math.ceil(4 * profile.alpha * size_ratio)),
        tFAW=max(1, math.ceil(20 * profile.alpha * size_ratio)),
        tRP=0,
        tRTP=0,
    )


@dataclass(frozen=True)
class EnergyTable:
    """Per-bit command energies in picojoules.

    READ and WRITE cover the full row-buffer-to-bus transfer and are
    technology independent; ACTIVATE (array to buffer) and the array write
    (buffer back to array) scale with the technology ratios.
    """

    activate_pj_per_bit: float
    read_pj_per_bit: float
    write_pj_per_bit: float
    array_write_pj_per_bit: float

    def __post_init__(self):
        for name in ("activate_pj_per_bit", "read_pj_per_bit",
                     "write_pj_per_bit", "array_write_pj_per_bit"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.read_pj_per_bit != 19.0 or self.write_pj_per_bit != 24.2:
            raise ValueError("read/write transfer energies are technology independent")

    @classmethod
    def for_profile(cls, profile: TechnologyProfile) -> "EnergyTable":
        return cls(
            activate_pj_per_bit=0.3 * profile.alpha,
            read_pj_per_bit=19.0,
            write_pj_per_bit=24.2,
            array_write_pj_per_bit=0.3 * profile.beta,
        )


def command_energy(table: EnergyTable, kind: EnergyKind, bits: int) -> float:
    """Energy in pJ for moving `bits` with one command of the given kind."""
    if bits <= 0:
        raise ValueError(f"bits must be positive, got {bits}")
    if kind is EnergyKind.ACTIVATE:
        per_bit = table.activate_pj_per_bit
    elif kind is EnergyKind.READ:
        per_bit = table.read_pj_per_bit
    elif kind is EnergyKind.WRITE:
        per_bit = table.write_pj_per_bit
    elif kind is EnergyKind.ARRAY_WRITE:
        per_bit = table.array_write_pj_per_bit
    else:
        raise ValueError(f"unknown command kind {kind!r}")
    return per_bit * bits


@dataclass(frozen=True)
class ElectricalParams:
    """Inputs to the analytic dynamic-power expressions.

    m and m_dagger are row-buffer sizes in bits (DRAM and NVM designs), n is
    the number of wordlines per bank. i_cell may be given directly, or for
    an RC-sensed DRAM derived from bitline capacitance and voltage swing via
    derived_cell_current().
    """

    v_dd: float = 0.0  # volts, memory core supply
    v_ddq: float = 0.0  # volts, peripheral supply
    f: float = 0.0  # hertz
    i_cell: float = 0.0  # amps per activated bit
    i_leak: float = 0.0  # amps per idle bit
    i_dc: float = 0.0  # amps, static chip current
    c_de: float = 0.0  # farads per decoder output node
    c_pt: float = 0.0  # farads, total peripheral CMOS capacitance
    n: float = 0.0  # wordlines per bank
    m: float = 0.0  # DRAM row-buffer bits
    m_dagger: float = 0.0  # NVM row-buffer bits
    c_bl: Optional[float] = None  # bitline capacitance, optional
    delta_v_dd: Optional[float] = None  # bitline voltage swing, optional

    def __post_init__(self):
        for name in ("v_dd", "v_ddq", "f", "i_cell", "i_leak", "i_dc",
                     "c_de", "c_pt", "n", "m", "m_dagger"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.m_dagger > self.m:
            raise ValueError("m_dagger must not exceed m")

    def derived_cell_current(self) -> float:
        """RC-sensing cell current for DRAM, from C_BL and the bitline swing."""
        if self.c_bl is None or self.delta_v_dd is None:
            raise ValueError("c_bl and delta_v_dd required to derive i_cell")
        return self.c_bl * self.delta_v_dd


def analytic_power(p: ElectricalParams, which: PowerForm) -> float:
    """Dynamic power in watts, full expression or its active-term approximation.

    The full forms add leakage of unselected cells, decoder node charging,
    and static converter current on top of the cell-activation and
    peripheral-transfer terms that the approximations keep.
    """
    if which is PowerForm.DRAM_FULL:
        buf = p.m
    elif which is PowerForm.NVM_FULL:
        buf = p.m_dagger
    elif which is PowerForm.DRAM_APPROX:
        return p.m * p.i_cell * p.v_dd + p.c_pt * p.v_ddq ** 2 * p.f
    elif which is PowerForm.NVM_APPROX:
        return p.m_dagger * p.i_cell * p.v_dd + p.c_pt * p.v_ddq ** 2 * p.f
    else:
        raise ValueError(f"unknown power form {which!r}")
    return (buf * p.i_cell * p.v_dd
            + (buf * p.n - buf) * p.i_leak * p.v_dd
            + (p.n + buf) * p.c_de * p.v_dd ** 2 * p.f
            + p.c_pt * p.v_ddq ** 2 * p.f
            + p.v_dd * p.i_dc)


# Sense-amp building block transistor counts: the NVM buffer cell needs a
# sense amp (13T) + write driver (3T) + explicit latch (8T) = 24T against
# the 14T DRAM latch-based amp.
NVM_BUFFER_TRANSISTORS = 24
DRAM_BUFFER_TRANSISTORS = 14


def area_feasibility(m_dagger_bytes: int, m_base_bytes: int) -> tuple[float, bool]:
    """Row-buffer area of the NVM design relative to DRAM's.

    Returns (ratio, feasible). Feasible means the NVM buffer occupies less
    area than the DRAM buffer it replaces, so the reorganization costs no
    extra area.
    """
    if m_dagger_bytes <= 0 or m_base_bytes <= 0:
        raise ValueError("sizes must be positive")
    ratio = (NVM_BUFFER_TRANSISTORS * m_dagger_bytes) / (
        DRAM_BUFFER_TRANSISTORS * m_base_bytes)
    return ratio, ratio < 1.0

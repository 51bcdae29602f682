"""DRAM/SRAM cost model with open-row burst semantics.

DRAM is modeled as a single rank with one open row: a word in the open
row costs cycles_seq_word, and touching any other row first pays a row
activation of row_change_factor * cycles_seq_word. SRAM accesses cost
no cycles (fully pipelined) but do cost energy, so cycle totals are
attributable to DRAM alone.

Energy defaults are explicit model parameters, not measured values;
only their ratios carry meaning (a DRAM word is ~100x a MAC, SRAM ~5x).
"""

import math
from dataclasses import dataclass, field

from .errors import Underdetermined
from .trace import AccessTrace, TAGS


@dataclass(frozen=True)
class MemConfig:
    words_per_row: int = 1024
    burst_len: int = 8           # reporting granularity only; no cycle effect
    cycles_seq_word: int = 1
    row_change_factor: int = 50
    e_dram_word: float = 100.0   # pJ
    e_sram_word: float = 5.0     # pJ
    e_mac: float = 1.0           # pJ
    clock_hz: float = 1e9

    def __post_init__(self):
        for name in ("words_per_row", "burst_len", "cycles_seq_word",
                     "e_dram_word", "e_sram_word", "e_mac", "clock_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.row_change_factor < 1:
            raise ValueError("row_change_factor must be >= 1")


@dataclass
class MemCostReport:
    cycles: int = 0
    row_activations: int = 0
    dram_words: int = 0
    sram_words: int = 0
    energy_pj: float = 0.0
    dram_words_by_tag: dict[str, int] = field(default_factory=lambda: {t: 0 for t in TAGS})
    sram_words_by_tag: dict[str, int] = field(default_factory=lambda: {t: 0 for t in TAGS})


def cost_trace(trace: AccessTrace, cfg: MemConfig) -> MemCostReport:
    """Walk the trace with one open DRAM row and accumulate costs.

    Runs are costed arithmetically: a run of n words starting at
    address a crosses (last_row - first_row) row boundaries, plus one
    activation if it does not start in the currently open row.
    """
    rep = MemCostReport()
    open_row = None
    wpr = cfg.words_per_row
    for e in trace:
        if e.nwords == 0:
            continue
        if e.region == "SRAM":
            rep.sram_words += e.nwords
            rep.sram_words_by_tag[e.tag] += e.nwords
            continue
        first_row = e.address // wpr
        last_row = (e.address + e.nwords - 1) // wpr
        if open_row != first_row:
            rep.row_activations += 1
        rep.row_activations += last_row - first_row
        open_row = last_row
        rep.dram_words += e.nwords
        rep.dram_words_by_tag[e.tag] += e.nwords
    rep.cycles = (rep.dram_words * cfg.cycles_seq_word
                  + rep.row_activations * cfg.row_change_factor * cfg.cycles_seq_word)
    rep.energy_pj = rep.dram_words * cfg.e_dram_word + rep.sram_words * cfg.e_sram_word
    return rep


def schedule_dense_weight_stream(dims: tuple[int, ...], cfg: MemConfig,
                                 base_address: int = 0) -> AccessTrace:
    """Fully sequential read of a contiguously laid-out weight region."""
    n = math.prod(dims) if dims else 0
    trace = AccessTrace()
    if n > 0:
        trace.add("DRAM", "read", "weights", base_address, n)
    return trace


def random_vs_burst_ratio(n_words: int, cfg: MemConfig) -> float:
    """Worst-case scattered cycles over ideal streaming cycles for n words.

    Scattered: every word lands in a different row, n*(1+f) word costs.
    The streaming baseline is one uninterrupted burst: n word costs plus
    a single row activation, n+f. The ratio tends to 1+f as n grows,
    which is the row-change asymmetry the model is built around; it is
    deliberately independent of words_per_row (a long stream's interior
    row crossings are a layout detail, not part of the asymmetry).
    """
    if n_words <= 0:
        raise ValueError("n_words must be positive")
    f = cfg.row_change_factor
    return n_words * (1 + f) / (n_words + f)


def energy_breakdown(macs: int, dram_words: int, sram_words: int,
                     cfg: MemConfig) -> dict[str, float]:
    """Energy in picojoules split by source, plus the total."""
    mac_pj = macs * cfg.e_mac
    dram_pj = dram_words * cfg.e_dram_word
    sram_pj = sram_words * cfg.e_sram_word
    return {
        "mac_pj": mac_pj,
        "dram_pj": dram_pj,
        "sram_pj": sram_pj,
        "total_pj": mac_pj + dram_pj + sram_pj,
    }


def effective_gops(dense_equivalent_op: int, cycles: int, cfg: MemConfig) -> float:
    """Dense-equivalent Op per simulated second, in GOp/s.

    Uses the effective-throughput convention: the numerator counts the
    work a dense engine would have done, so skipping raises the figure.
    """
    if cycles == 0:
        return 0.0
    seconds = cycles / cfg.clock_hz
    return dense_equivalent_op / seconds / 1e9


def gops_per_watt(dense_equivalent_op: int, energy_pj: float) -> float:
    """Dense-equivalent GOp/s per watt; clock-independent (Op per energy)."""
    if energy_pj == 0:
        return 0.0
    joules = energy_pj * 1e-12
    return dense_equivalent_op / joules / 1e9


def brain_budget(rate_hz: float, fanout: float, neurons: float,
                 energy_per_syn_j: float) -> float:
    """Total power of an event-driven system: rate * fanout * count * energy.

    With 1 Hz mean rate, 1e4 fan-out, 1e10 neurons and 100 fJ per
    synaptic update this gives the canonical ~10 W brain budget.
    """
    for name, v in (("rate_hz", rate_hz), ("fanout", fanout),
                    ("neurons", neurons), ("energy_per_syn_j", energy_per_syn_j)):
        if v <= 0:
            raise ValueError(f"{name} must be positive")
    return rate_hz * fanout * neurons * energy_per_syn_j


def solve_for(power_w: float, rate_hz: float | None = None,
              fanout: float | None = None, neurons: float | None = None,
              energy_per_syn_j: float | None = None) -> float:
    """Invert the power product for the single missing factor."""
    if power_w <= 0:
        raise ValueError("power_w must be positive")
    factors = {"rate_hz": rate_hz, "fanout": fanout, "neurons": neurons,
               "energy_per_syn_j": energy_per_syn_j}
    missing = [k for k, v in factors.items() if v is None]
    if len(missing) != 1:
        raise Underdetermined(
            f"need exactly one unknown, got {len(missing)}: {missing or 'none'}")
    prod = 1.0
    for k, v in factors.items():
        if v is None:
            continue
        if v <= 0:
            raise ValueError(f"{k} must be positive")
        prod *= v
    return power_w / prod

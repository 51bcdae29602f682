"""Memory access traces.

Engines emit an ordered stream of word accesses; the cost model walks
the stream. Events carry a run length so a burst of n sequential words
is one record, which keeps traces for realistic layers compact. The
semantics are always the flattened per-word list (address, address+1,
..., address+nwords-1), which is what the CSV export produces.
"""

from dataclasses import dataclass, field

from ._binio import atomic_write_text

REGIONS = ("DRAM", "SRAM")
KINDS = ("read", "write")
TAGS = ("weights", "activations", "state")


@dataclass(frozen=True)
class AccessEvent:
    region: str
    kind: str
    tag: str
    address: int
    nwords: int = 1

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"unknown region {self.region!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown access kind {self.kind!r}")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        if self.address < 0:
            raise ValueError(f"negative address {self.address}")
        if self.nwords < 0:
            raise ValueError(f"negative run length {self.nwords}")


@dataclass
class AccessTrace:
    events: list[AccessEvent] = field(default_factory=list)

    def add(self, region: str, kind: str, tag: str, address: int, nwords: int = 1) -> None:
        if nwords == 0:
            return
        self.events.append(AccessEvent(region, kind, tag, address, nwords))

    def extend(self, other: "AccessTrace") -> None:
        self.events.extend(other.events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def word_count(self, region: str | None = None, tag: str | None = None,
                   kind: str | None = None) -> int:
        total = 0
        for e in self.events:
            if region is not None and e.region != region:
                continue
            if tag is not None and e.tag != tag:
                continue
            if kind is not None and e.kind != kind:
                continue
            total += e.nwords
        return total

    def words_by_tag(self, region: str) -> dict[str, int]:
        out = {t: 0 for t in TAGS}
        for e in self.events:
            if e.region == region:
                out[e.tag] += e.nwords
        return out

    def to_csv(self) -> str:
        """One row per word access: region,address,kind,tag."""
        lines = ["region,address,kind,tag"]
        for e in self.events:
            for off in range(e.nwords):
                lines.append(f"{e.region},{e.address + off},{e.kind},{e.tag}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        atomic_write_text(path, self.to_csv())


class TeeTrace:
    """Forwards adds to several traces (e.g. run-order plus per-layer views)."""

    def __init__(self, *targets: AccessTrace):
        self.targets = targets

    def add(self, region: str, kind: str, tag: str, address: int,
            nwords: int = 1) -> None:
        for t in self.targets:
            t.add(region, kind, tag, address, nwords)


def trace_from_csv(text: str) -> AccessTrace:
    """Parse the CSV export format back into a trace."""
    trace = AccessTrace()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "region,address,kind,tag":
        raise ValueError("expected header 'region,address,kind,tag'")
    for ln in lines[1:]:
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != 4:
            raise ValueError(f"bad trace row {ln!r}")
        region, address, kind, tag = parts
        trace.add(region, kind, tag, int(address))
    return trace

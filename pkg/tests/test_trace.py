"""Access-trace recording, filtering, and CSV round-tripping."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsebench.trace import AccessEvent, AccessTrace, TeeTrace, trace_from_csv


def test_event_field_validation():
    with pytest.raises(ValueError, match="region"):
        AccessEvent("L2", "read", "weights", 0)
    with pytest.raises(ValueError, match="kind"):
        AccessEvent("DRAM", "fetch", "weights", 0)
    with pytest.raises(ValueError, match="tag"):
        AccessEvent("DRAM", "read", "gradients", 0)
    with pytest.raises(ValueError, match="address"):
        AccessEvent("DRAM", "read", "weights", -1)
    with pytest.raises(ValueError, match="run length"):
        AccessEvent("DRAM", "read", "weights", 0, -2)


def test_add_skips_empty_runs():
    t = AccessTrace()
    t.add("DRAM", "read", "weights", 0, 0)
    assert len(t) == 0
    t.add("DRAM", "read", "weights", 0, 3)
    assert len(t) == 1 and t.events[0].nwords == 3


def _sample_trace():
    t = AccessTrace()
    t.add("DRAM", "read", "weights", 0, 4)
    t.add("DRAM", "write", "activations", 100, 2)
    t.add("SRAM", "read", "activations", 8, 3)
    t.add("SRAM", "write", "state", 50)
    return t


def test_word_count_filters():
    t = _sample_trace()
    assert t.word_count() == 10
    assert t.word_count(region="DRAM") == 6
    assert t.word_count(region="SRAM") == 4
    assert t.word_count(region="DRAM", kind="read") == 4
    assert t.word_count(tag="activations") == 5
    assert t.word_count(region="SRAM", tag="state", kind="write") == 1


def test_words_by_tag():
    t = _sample_trace()
    assert t.words_by_tag("DRAM") == {"weights": 4, "activations": 2, "state": 0}
    assert t.words_by_tag("SRAM") == {"weights": 0, "activations": 3, "state": 1}


def test_csv_expands_runs():
    t = AccessTrace()
    t.add("DRAM", "read", "weights", 5, 3)
    assert t.to_csv() == (
        "region,address,kind,tag\n"
        "DRAM,5,read,weights\n"
        "DRAM,6,read,weights\n"
        "DRAM,7,read,weights\n"
    )


def _word_list(t: AccessTrace) -> list[tuple]:
    out = []
    for e in t:
        for off in range(e.nwords):
            out.append((e.region, e.address + off, e.kind, e.tag))
    return out


@st.composite
def traces(draw):
    t = AccessTrace()
    for _ in range(draw(st.integers(0, 12))):
        t.add(
            draw(st.sampled_from(("DRAM", "SRAM"))),
            draw(st.sampled_from(("read", "write"))),
            draw(st.sampled_from(("weights", "activations", "state"))),
            draw(st.integers(0, 5000)),
            draw(st.integers(1, 20)),
        )
    return t


@given(traces())
def test_csv_roundtrip_preserves_word_sequence(t):
    back = trace_from_csv(t.to_csv())
    assert _word_list(back) == _word_list(t)


def test_csv_file_roundtrip(tmp_path):
    t = _sample_trace()
    path = str(tmp_path / "trace.csv")
    t.write_csv(path)
    with open(path) as fh:
        back = trace_from_csv(fh.read())
    assert _word_list(back) == _word_list(t)


def test_csv_parse_rejects_garbage():
    with pytest.raises(ValueError, match="header"):
        trace_from_csv("address,region\n1,DRAM\n")
    with pytest.raises(ValueError, match="row"):
        trace_from_csv("region,address,kind,tag\nDRAM,1,read\n")
    with pytest.raises(ValueError, match="region"):
        trace_from_csv("region,address,kind,tag\nCACHE,1,read,weights\n")


def test_tee_forwards_to_all_targets():
    a, b = AccessTrace(), AccessTrace()
    tee = TeeTrace(a, b)
    tee.add("DRAM", "read", "weights", 7, 2)
    tee.add("SRAM", "write", "state", 1)
    assert _word_list(a) == _word_list(b)
    assert a.word_count() == 3


def test_extend_concatenates_in_order():
    a, b = AccessTrace(), AccessTrace()
    a.add("DRAM", "read", "weights", 0)
    b.add("SRAM", "write", "state", 9)
    a.extend(b)
    assert [e.region for e in a] == ["DRAM", "SRAM"]

import struct
import zlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from occ.codec import CodecConfig, Decoder, Encoder
from occ.conformal import ConformalConfig
from occ.transport import (
    ABSENT,
    ContainerError,
    ContainerHeader,
    SlotMessage,
    read_container,
    wire_overhead_bits,
    write_container,
)


def _header(mode="sync", T=0, bits=0, **kw):
    return ContainerHeader(mode=mode, alpha=0.1, gamma1=0.1, eta1=0.001, beta=0.0,
                           predictor_digest=bytes(range(32)), alphabet_size=256, T=T,
                           payload_bits=bits, **kw)


slots = st.one_of(st.just(ABSENT),
                  st.text(alphabet="01", max_size=40).map(lambda b: SlotMessage(True, b)))


@given(st.lists(slots, max_size=30))
def test_sync_roundtrip_keeps_absent_and_empty_apart(msgs):
    h = _header("sync", len(msgs), sum(m.bits for m in msgs))
    c = read_container(write_container(h, msgs))
    assert c.header == h
    assert c.messages == msgs


@given(st.lists(st.text(alphabet="01", max_size=20), max_size=30))
def test_async_roundtrip(payloads):
    msgs = [SlotMessage(True, p) for p in payloads]
    h = _header("async", len(msgs), sum(m.bits for m in msgs), backend="huffman")
    c = read_container(write_container(h, msgs))
    assert c.header == h
    r = c.reader()
    assert r.read(h.payload_bits) == "".join(payloads)


@given(st.lists(slots, max_size=12), st.lists(slots, max_size=12))
def test_distinct_slot_sequences_give_distinct_containers(a, b):
    ha = _header("sync", len(a), sum(m.bits for m in a))
    hb = _header("sync", len(b), sum(m.bits for m in b))
    if a != b:
        assert write_container(ha, a) != write_container(hb, b)


def test_absent_differs_from_empty_on_the_wire():
    one = write_container(_header("sync", 1, 0), [ABSENT])
    two = write_container(_header("sync", 1, 0), [SlotMessage(True, "")])
    assert one != two


def test_empty_run_is_header_only():
    for mode in ("sync", "async"):
        data = write_container(_header(mode), [])
        c = read_container(data)
        assert c.header.T == 0 and c.messages == [] and c.bitstream == b""
        assert len(data) == 4 + 3 + 32 + 32 + 4 + 16 + 4


def test_header_and_crc_fields():
    data = write_container(_header("async", 2, 3), [SlotMessage(True, "1"), SlotMessage(True, "01")])
    assert data[:4] == b"OCCS" and data[4] == 1 and data[5] == 1
    assert struct.unpack(">I", data[-4:])[0] == zlib.crc32(data[:-4])
    assert data[-5] == 0b10100000


def test_writer_checks_header_consistency():
    with pytest.raises(ContainerError):
        write_container(_header("sync", 2, 0), [ABSENT])
    with pytest.raises(ContainerError):
        write_container(_header("sync", 1, 5), [SlotMessage(True, "1")])
    with pytest.raises(ContainerError):
        write_container(_header("async", 1, 0), [ABSENT])


def test_reader_rejects_damage():
    data = write_container(_header("sync", 2, 3), [SlotMessage(True, "101"), ABSENT])
    with pytest.raises(ContainerError, match="checksum"):
        read_container(data[:-5] + bytes([data[-5] ^ 1]) + data[-4:])
    with pytest.raises(ContainerError):
        read_container(data[:10])
    with pytest.raises(ContainerError, match="magic"):
        read_container(b"XXXX" + data[4:])
    bumped = data[:4] + b"\x02" + data[5:-4]
    with pytest.raises(ContainerError, match="version"):
        read_container(bumped + struct.pack(">I", zlib.crc32(bumped)))
    short = data[:-5]  # drop the last body byte, re-sign
    with pytest.raises(ContainerError, match="truncated"):
        read_container(short + struct.pack(">I", zlib.crc32(short)))


def test_payload_bits_accounting_through_codec(primed_model, heldout):
    seq = list(heldout[:400])
    for mode in ("sync", "async"):
        cfg = CodecConfig(mode, ConformalConfig(alpha=0.2, eta1=0.05))
        trace = Encoder(cfg, primed_model.fork()).encode(seq)
        total = sum(o.bits for o in trace)
        h = cfg.header(len(trace), total)
        data = write_container(h, [o.message for o in trace])
        c = read_container(data)
        assert c.header.payload_bits == total
        assert wire_overhead_bits(data, c.header) == len(data) * 8 - total
        dec = Decoder(cfg, primed_model.fork())
        if mode == "sync":
            out = dec.decode_messages(c.messages)
        else:
            out = dec.decode_bitstream(c.reader(), c.header.T)
        assert out == [o.reconstructed for o in trace]

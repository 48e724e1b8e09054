"""Slotted channel messages and the on-disk container for encoded runs.

Container layout (version 1, all integers big-endian)::

    magic        4 bytes  b"OCCS"
    version      u8
    mode         u8       0 = sync, 1 = async
    backend      u8       0 = shannon, 1 = huffman
    alpha        f64
    gamma1       f64
    eta1         f64
    beta         f64
    predictor    32 bytes SHA-256 of the predictor spec
    alphabet     u32
    T            u64      number of slots
    payload_bits u64      sum of b_t, stored redundantly and checked on read
    body
    crc32        u32      over everything above

Sync body: one record per slot, ``present`` byte (0/1), and if present a
LEB128 varint bit length followed by the payload packed MSB-first into
``ceil(bits / 8)`` bytes.  Async body: the concatenated codewords packed
MSB-first; its bit length is ``payload_bits``.

Everything other than payload bits (flags, varints, padding, header, CRC)
is wire overhead and is not part of the coding rate.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

from .coder import BitReader, BitWriter

MAGIC = b"OCCS"
VERSION = 1
FILE_SUFFIX = ".occ"

_MODES = ("sync", "async")
_BACKENDS = ("shannon", "huffman")
_HEADER = struct.Struct(">4sBBBdddd32sIQQ")


class ContainerError(Exception):
    pass


@dataclass(frozen=True)
class SlotMessage:
    """One time step on the channel.  Absent is distinct from present-but-empty."""

    present: bool
    payload: str = ""

    def __post_init__(self):
        if not self.present and self.payload:
            raise ValueError("an absent message carries no payload")

    @property
    def bits(self) -> int:
        return len(self.payload)


ABSENT = SlotMessage(False)


@dataclass(frozen=True)
class ContainerHeader:
    mode: str
    alpha: float
    gamma1: float
    eta1: float
    beta: float
    predictor_digest: bytes
    alphabet_size: int
    T: int
    payload_bits: int
    backend: str = "shannon"
    version: int = VERSION


@dataclass
class Container:
    header: ContainerHeader
    messages: list = field(default_factory=list)  # sync slots
    bitstream: bytes = b""  # async body

    def reader(self) -> BitReader:
        return BitReader(self.bitstream, self.header.payload_bits)


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    n = shift = 0
    while True:
        if pos >= len(buf):
            raise ContainerError("truncated varint")
        b = buf[pos]
        pos += 1
        n |= (b & 0x7F) << shift
        shift += 7
        if not b & 0x80:
            return n, pos


def _pack(bits: str) -> bytes:
    w = BitWriter()
    w.write(bits)
    return w.getvalue()


def write_container(header: ContainerHeader, messages) -> bytes:
    messages = list(messages)
    if len(messages) != header.T:
        raise ContainerError(f"header declares T={header.T}, got {len(messages)} messages")
    total = sum(m.bits for m in messages)
    if total != header.payload_bits:
        raise ContainerError(f"header declares {header.payload_bits} payload bits, messages carry {total}")
    head = _HEADER.pack(
        MAGIC, header.version, _MODES.index(header.mode), _BACKENDS.index(header.backend),
        header.alpha, header.gamma1, header.eta1, header.beta,
        header.predictor_digest, header.alphabet_size, header.T, header.payload_bits)
    body = bytearray()
    if header.mode == "sync":
        for m in messages:
            if not m.present:
                body.append(0)
                continue
            body.append(1)
            body += _varint(m.bits)
            body += _pack(m.payload)
    else:
        if not all(m.present for m in messages):
            raise ContainerError("async streams cannot contain absent slots")
        body += _pack("".join(m.payload for m in messages))
    data = head + bytes(body)
    return data + struct.pack(">I", zlib.crc32(data))


def read_container(data: bytes) -> Container:
    if len(data) < _HEADER.size + 4:
        raise ContainerError("container truncated")
    if data[:4] != MAGIC:
        raise ContainerError("bad magic")
    if data[4] != VERSION:
        raise ContainerError(f"unsupported container version {data[4]}")
    (crc,) = struct.unpack(">I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise ContainerError("checksum mismatch")
    (_, version, mode, backend, alpha, gamma1, eta1, beta, digest,
     alphabet, T, payload_bits) = _HEADER.unpack_from(data)
    if mode > 1 or backend > 1:
        raise ContainerError("bad mode or backend field")
    header = ContainerHeader(
        mode=_MODES[mode], alpha=alpha, gamma1=gamma1, eta1=eta1, beta=beta,
        predictor_digest=digest, alphabet_size=alphabet, T=T,
        payload_bits=payload_bits, backend=_BACKENDS[backend], version=version)
    body = data[_HEADER.size:-4]
    if header.mode == "async":
        if len(body) != (payload_bits + 7) // 8:
            raise ContainerError("async body length disagrees with payload_bits")
        return Container(header, bitstream=body)
    messages = []
    pos = 0
    total = 0
    for _ in range(T):
        if pos >= len(body):
            raise ContainerError("container truncated inside slot records")
        flag = body[pos]
        pos += 1
        if flag == 0:
            messages.append(ABSENT)
            continue
        if flag != 1:
            raise ContainerError(f"bad presence flag {flag}")
        n, pos = _read_varint(body, pos)
        nbytes = (n + 7) // 8
        if pos + nbytes > len(body):
            raise ContainerError("container truncated inside payload")
        payload = BitReader(body[pos:pos + nbytes], n).read(n)
        pos += nbytes
        total += n
        messages.append(SlotMessage(True, payload))
    if pos != len(body):
        raise ContainerError("trailing bytes after last slot")
    if total != payload_bits:
        raise ContainerError(f"payload bits {total} disagree with header {payload_bits}")
    return Container(header, messages=messages)


def wire_overhead_bits(data: bytes, header: ContainerHeader) -> int:
    return len(data) * 8 - header.payload_bits

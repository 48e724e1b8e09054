"""Per-symbol codes over distributions that change every step.

Codewords are plain ``str`` objects of ``'0'``/``'1'`` characters.  Bit I/O
packs them most-significant-bit first.

Tie rule everywhere: higher probability first, then ascending symbol id,
with the outage symbol ``OUTAGE`` ordered after every real symbol.
"""
from __future__ import annotations

import heapq
import math
from typing import Mapping

OUTAGE = -1  # the explicit outage symbol "e" of the asynchronous mode


class CodingError(Exception):
    pass


class TruncatedStreamError(CodingError):
    """The bit stream ended in the middle of a codeword."""


def _tie_key(sym):
    return (sym == OUTAGE, sym)


class BitWriter:
    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_length = 0

    def write(self, bits: str) -> None:
        for ch in bits:
            self._acc = (self._acc << 1) | (ch == "1")
            self._nacc += 1
            if self._nacc == 8:
                self._buf.append(self._acc)
                self._acc = 0
                self._nacc = 0
        self.bit_length += len(bits)

    def getvalue(self) -> bytes:
        """Packed bytes; the last byte is zero-padded on the right."""
        out = bytes(self._buf)
        if self._nacc:
            out += bytes([self._acc << (8 - self._nacc)])
        return out


class BitReader:
    def __init__(self, data: bytes, bit_length: int | None = None):
        self._data = data
        self.bit_length = len(data) * 8 if bit_length is None else bit_length
        if self.bit_length > len(data) * 8:
            raise ValueError("bit_length exceeds buffer")
        self.pos = 0

    @classmethod
    def from_bits(cls, bits: str) -> "BitReader":
        w = BitWriter()
        w.write(bits)
        return cls(w.getvalue(), len(bits))

    @property
    def remaining(self) -> int:
        return self.bit_length - self.pos

    def read_bit(self) -> str:
        if self.pos >= self.bit_length:
            raise TruncatedStreamError(f"stream exhausted at bit {self.pos}")
        byte = self._data[self.pos >> 3]
        bit = (byte >> (7 - (self.pos & 7))) & 1
        self.pos += 1
        return "1" if bit else "0"

    def read(self, n: int) -> str:
        if n > self.remaining:
            raise TruncatedStreamError(
                f"need {n} bits at position {self.pos}, only {self.remaining} left")
        return "".join(self.read_bit() for _ in range(n))


class CodeTable:
    """Symbol <-> codeword map of one kind: one_to_one, shannon or huffman."""

    def __init__(self, kind: str, codewords: dict, ranked: list | None = None):
        self.kind = kind
        self.codewords = codewords
        self.ranked = ranked  # one_to_one: symbols in rank order
        self._inverse = {c: s for s, c in codewords.items()}

    def __contains__(self, sym):
        return sym in self.codewords

    def __len__(self):
        return len(self.codewords)

    def length(self, sym) -> int:
        return len(self.codewords[sym])

    def kraft_sum(self) -> float:
        return sum(2.0 ** -len(c) for c in self.codewords.values())

    def __eq__(self, other):
        return (isinstance(other, CodeTable) and self.kind == other.kind
                and self.codewords == other.codewords)

    def __repr__(self):
        return f"CodeTable({self.kind!r}, {self.codewords!r})"


def _check_dist(dist: Mapping) -> None:
    if not dist:
        raise CodingError("empty support")
    for sym, p in dist.items():
        if not p > 0:
            raise CodingError(f"symbol {sym} has non-positive probability {p}")


def rank_order(dist: Mapping) -> list:
    return sorted(dist, key=lambda s: (-dist[s], _tie_key(s)))


def one_to_one_codeword(rank: int) -> str:
    """The ``rank``-th (1-based) string of eps, 0, 1, 00, 01, 10, 11, 000, ..."""
    n = rank.bit_length() - 1
    return format(rank - (1 << n), f"0{n}b") if n else ""


def build_one_to_one(dist: Mapping) -> CodeTable:
    """Non-prefix-free rank code; decoding needs the message length."""
    _check_dist(dist)
    ranked = rank_order(dist)
    codewords = {s: one_to_one_codeword(i) for i, s in enumerate(ranked, start=1)}
    return CodeTable("one_to_one", codewords, ranked)


def shannon_length(p: float) -> int:
    """Exactly ``ceil(-log2 p)``: the smallest L with ``2**-L <= p``."""
    if not p > 0:
        raise CodingError(f"non-positive probability {p}")
    if p >= 1.0:
        return 0
    L = max(math.ceil(-math.log2(p)), 0)
    while math.ldexp(1.0, -L) > p:
        L += 1
    while L > 0 and math.ldexp(1.0, -(L - 1)) <= p:
        L -= 1
    return L


def _canonical(lengths: Mapping) -> dict:
    # Codewords in (length, id) order, lexicographically increasing.
    order = sorted(lengths, key=lambda s: (lengths[s], _tie_key(s)))
    codewords = {}
    code = 0
    prev = 0
    for s in order:
        L = lengths[s]
        code <<= L - prev
        codewords[s] = format(code, f"0{L}b") if L else ""
        code += 1
        prev = L
    return codewords


def _enforce_kraft(lengths: dict) -> dict:
    # Only reachable when the input probabilities sum above one by rounding.
    top = max(lengths.values())
    total = sum(1 << (top - L) for L in lengths.values())
    while total > 1 << top:
        worst = max(lengths, key=lambda s: (lengths[s], _tie_key(s)))
        L = lengths[worst]
        if L == top:
            top += 1
            total <<= 1
        total -= 1 << (top - L - 1)
        lengths[worst] = L + 1
    return lengths


def build_shannon(dist: Mapping) -> CodeTable:
    """Canonical prefix-free code with lengths ``ceil(-log2 p)``."""
    _check_dist(dist)
    if len(dist) == 1:
        return CodeTable("shannon", {next(iter(dist)): ""})
    lengths = {s: shannon_length(p) for s, p in dist.items()}
    return CodeTable("shannon", _canonical(_enforce_kraft(lengths)))


def build_huffman(dist: Mapping) -> CodeTable:
    """Canonical Huffman code.  Shorter on average than Shannon, but its
    per-symbol length is not bounded by ``-log2 p + 1``."""
    _check_dist(dist)
    if len(dist) == 1:
        return CodeTable("huffman", {next(iter(dist)): ""})
    lengths = {s: 0 for s in dist}
    # Heap items carry a tie key so merges are deterministic.
    heap = [(p, _tie_key(s), [s]) for s, p in dist.items()]
    heapq.heapify(heap)
    while len(heap) > 1:
        p1, k1, g1 = heapq.heappop(heap)
        p2, k2, g2 = heapq.heappop(heap)
        for s in g1:
            lengths[s] += 1
        for s in g2:
            lengths[s] += 1
        heapq.heappush(heap, (p1 + p2, min(k1, k2), g1 + g2))
    return CodeTable("huffman", _canonical(lengths))


BACKENDS = {"shannon": build_shannon, "huffman": build_huffman}


def encode_symbol(table: CodeTable, sym) -> str:
    try:
        return table.codewords[sym]
    except KeyError:
        raise CodingError(f"symbol {sym} not in code table") from None


def decode_symbol(table: CodeTable, reader: BitReader, length: int | None = None):
    """Read one symbol.  One-to-one tables need the message ``length``."""
    if table.kind == "one_to_one":
        if length is None:
            raise CodingError("one-to-one decoding needs the message length")
        bits = reader.read(length)
        rank = (1 << length) + (int(bits, 2) if bits else 0)
        if rank > len(table.ranked):
            raise CodingError(f"{length}-bit message {bits!r} maps past the table end")
        return table.ranked[rank - 1]
    inverse = table._inverse
    if "" in inverse:
        return inverse[""]
    max_len = max(len(c) for c in inverse)
    bits = ""
    while len(bits) < max_len:
        bits += reader.read_bit()
        if bits in inverse:
            return inverse[bits]
    raise CodingError(f"no codeword matches {bits!r}")


def decode_one_to_one(table: CodeTable, bits: str):
    return decode_symbol(table, BitReader.from_bits(bits), len(bits))

"""Autoregressive next-symbol predictors.

Every predictor here is driven only by the symbols fed to it, so an encoder
and a decoder that feed the same reconstructed history get bit-identical
distributions.  Three kinds are provided:

* ``uniform`` - flat distribution, ignores history.
* ``context_model`` - order-k byte context model.  Order 0 uses the
  Krichevsky-Trofimov estimator ``(c + 1/2) / (n + A/2)``; each higher order
  j interpolates with order j-1 Witten-Bell style,
  ``(c_j(x) + u_j * p_{j-1}(x)) / (n_j + u_j)`` with ``u_j`` the number of
  distinct symbols seen in that context.  Unseen contexts back off to the
  lower order unchanged.
* ``replay`` - plays back precomputed distributions from a file.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROB_FLOOR = 1e-12
DEFAULT_ORDER = 3
KT_PSEUDOCOUNT = 0.5

REPLAY_MAGIC = "OCC-REPLAY"
REPLAY_VERSION = 1


class PredictorError(Exception):
    pass


class ReplayExhaustedError(PredictorError):
    """Raised when a replay predictor runs past the end of its file."""


def normalize(probs: np.ndarray) -> np.ndarray:
    """Floor every entry at ``PROB_FLOOR`` and rescale to sum to one."""
    p = np.maximum(np.asarray(probs, dtype=np.float64), PROB_FLOOR)
    return p / p.sum()


class Predictor:
    """Base class.  Subclasses implement ``_predict`` and ``_update``."""

    kind = "abstract"

    def __init__(self, alphabet_size: int):
        if alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")
        self.alphabet_size = alphabet_size
        self.history: list[int] = []
        self._cache: np.ndarray | None = None

    def predict(self) -> np.ndarray:
        if self._cache is None:
            self._cache = self._predict()
            self._cache.flags.writeable = False
        return self._cache

    def feed(self, sym: int) -> None:
        sym = int(sym)
        if not 0 <= sym < self.alphabet_size:
            raise ValueError(f"symbol {sym} outside alphabet of size {self.alphabet_size}")
        self._update(sym)
        self.history.append(sym)
        self._cache = None

    def feed_all(self, symbols) -> None:
        for s in symbols:
            self.feed(s)

    def fork(self) -> "Predictor":
        """Independent copy with identical state."""
        raise NotImplementedError

    def _predict(self) -> np.ndarray:
        raise NotImplementedError

    def _update(self, sym: int) -> None:
        pass


class UniformPredictor(Predictor):
    kind = "uniform"

    def _predict(self):
        return np.full(self.alphabet_size, 1.0 / self.alphabet_size)

    def fork(self):
        other = UniformPredictor(self.alphabet_size)
        other.history = list(self.history)
        return other


class _Layer:
    # Frozen, shared count tables.  Children copy entries before mutating them.
    __slots__ = ("tables", "parent")

    def __init__(self, tables, parent):
        self.tables = tables
        self.parent = parent

    def lookup(self, j, ctx):
        layer = self
        while layer is not None:
            entry = layer.tables[j].get(ctx)
            if entry is not None:
                return entry
            layer = layer.parent
        return None


class _Entry:
    __slots__ = ("counts", "total", "distinct")

    def __init__(self, counts, total=0, distinct=0):
        self.counts = counts
        self.total = total
        self.distinct = distinct

    def copy(self):
        return _Entry(self.counts.copy(), self.total, self.distinct)


class ContextModel(Predictor):
    """Order-k adaptive byte context model with KT base and Witten-Bell blending.

    ``fork()`` is copy-on-write, so forking a model primed on a large corpus
    costs nothing until the fork starts updating contexts.
    """

    kind = "context_model"

    def __init__(self, alphabet_size: int = 256, order: int = DEFAULT_ORDER):
        super().__init__(alphabet_size)
        if order < 0:
            raise ValueError("order must be >= 0")
        self.order = order
        self._counts0 = np.zeros(alphabet_size, dtype=np.int64)
        self._n0 = 0
        # tables[j] maps a length-j context tuple to its _Entry, j = 1..order
        self._local: list[dict] = [dict() for _ in range(order + 1)]
        self._parent: _Layer | None = None

    def _lookup(self, j, ctx):
        entry = self._local[j].get(ctx)
        if entry is None and self._parent is not None:
            entry = self._parent.lookup(j, ctx)
        return entry

    def _predict(self):
        a = self.alphabet_size
        p = (self._counts0 + KT_PSEUDOCOUNT) / (self._n0 + KT_PSEUDOCOUNT * a)
        h = self.history
        for j in range(1, min(self.order, len(h)) + 1):
            entry = self._lookup(j, tuple(h[-j:]))
            if entry is None:
                break
            u = entry.distinct
            p = (entry.counts + u * p) / (entry.total + u)
        return normalize(p)

    def _update(self, sym):
        self._counts0[sym] += 1
        self._n0 += 1
        h = self.history
        for j in range(1, min(self.order, len(h)) + 1):
            ctx = tuple(h[-j:])
            entry = self._local[j].get(ctx)
            if entry is None:
                shared = self._parent.lookup(j, ctx) if self._parent is not None else None
                if shared is not None:
                    entry = shared.copy()
                else:
                    entry = _Entry(np.zeros(self.alphabet_size, dtype=np.int32))
                self._local[j][ctx] = entry
            if entry.counts[sym] == 0:
                entry.distinct += 1
            entry.counts[sym] += 1
            entry.total += 1

    def fork(self):
        # Move our private tables into a frozen layer shared by both copies.
        if any(self._local[1:]):
            self._parent = _Layer(self._local, self._parent)
            self._local = [dict() for _ in range(self.order + 1)]
        other = ContextModel(self.alphabet_size, self.order)
        other._parent = self._parent
        other._counts0 = self._counts0.copy()
        other._n0 = self._n0
        other.history = list(self.history)
        other._cache = self._cache
        return other


class ReplayPredictor(Predictor):
    """Plays back one stored distribution per step, ignoring fed symbols."""

    kind = "replay"

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("replay rows must be a 2-D array")
        super().__init__(rows.shape[1])
        self.rows = rows

    @classmethod
    def from_file(cls, path) -> "ReplayPredictor":
        return cls(read_replay(path))

    def _predict(self):
        t = len(self.history)
        if t >= len(self.rows):
            raise ReplayExhaustedError(
                f"replay source has {len(self.rows)} rows, step {t + 1} requested")
        return normalize(self.rows[t])

    def fork(self):
        other = ReplayPredictor(self.rows)
        other.history = list(self.history)
        return other


def write_replay(path, rows) -> None:
    """Write distributions in the versioned replay format.

    Line 1: ``OCC-REPLAY <version> <alphabet_size> <rows>``; then one row per
    line, space separated, each value as ``%.16e`` (round-trips float64).
    """
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w") as f:
        f.write(f"{REPLAY_MAGIC} {REPLAY_VERSION} {rows.shape[1]} {rows.shape[0]}\n")
        for row in rows:
            f.write(" ".join(f"{v:.16e}" for v in row))
            f.write("\n")


def read_replay(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != REPLAY_MAGIC:
            raise PredictorError(f"{path}: not a replay file")
        if int(header[1]) != REPLAY_VERSION:
            raise PredictorError(f"{path}: unsupported replay version {header[1]}")
        size, count = int(header[2]), int(header[3])
        rows = [np.array(line.split(), dtype=np.float64) for line in f if line.strip()]
    if len(rows) != count:
        raise PredictorError(f"{path}: header declares {count} rows, found {len(rows)}")
    if any(len(r) != size for r in rows):
        raise PredictorError(f"{path}: row width differs from alphabet size {size}")
    if count == 0:
        return np.zeros((0, size))
    return np.vstack(rows)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class PredictorSpec:
    """Serializable recipe for building a predictor.

    ``prime_path`` optionally names a file whose bytes are fed to a context
    model before coding starts (the desk stand-in for a pre-trained model).
    """

    kind: str = "context_model"
    alphabet_size: int = 256
    order: int = DEFAULT_ORDER
    source_path: str | None = None
    prime_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("context_model", "replay", "uniform"):
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.kind == "replay" and not self.source_path:
            raise ValueError("replay predictor needs source_path")
        if self.prime_path and self.kind != "context_model":
            raise ValueError("prime_path only applies to context_model")

    def build(self) -> Predictor:
        if self.kind == "uniform":
            return UniformPredictor(self.alphabet_size)
        if self.kind == "replay":
            pred = ReplayPredictor.from_file(self.source_path)
            if pred.alphabet_size != self.alphabet_size:
                raise PredictorError(
                    f"replay alphabet {pred.alphabet_size} != spec alphabet {self.alphabet_size}")
            return pred
        model = ContextModel(self.alphabet_size, self.order)
        if self.prime_path:
            data = Path(self.prime_path).read_bytes()
            if self.alphabet_size < 256:
                raise PredictorError("priming from bytes needs alphabet_size 256")
            prime_context_model(model, data)
        return model

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alphabet_size": self.alphabet_size,
            "order": self.order,
            "source_path": self.source_path,
            "prime_path": self.prime_path,
        }

    def digest(self) -> bytes:
        """SHA-256 over the spec and the content of any file it references.

        Paths themselves are excluded so a container decodes from any location.
        """
        doc = {"kind": self.kind, "alphabet_size": self.alphabet_size}
        if self.kind == "context_model":
            doc["order"] = self.order
            doc["prime"] = _file_digest(self.prime_path) if self.prime_path else None
        elif self.kind == "replay":
            doc["source"] = _file_digest(self.source_path)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).digest()


def prime_context_model(model: ContextModel, data: bytes) -> ContextModel:
    """Feed a training corpus into ``model``, then start a fresh history.

    The fed history is cleared so the coded stream's first symbols are not
    conditioned on the tail of the training text; counts are kept.
    """
    model.feed_all(data)
    model.history = []
    model._cache = None
    return model

"""Replayable record streams with pass, work, and workspace metering.

The semi-streaming model is simulated with replayable sources: the backing
buffer (file contents parsed once into columnar numpy arrays) stands in for
the external stream and is exempt from the workspace meter.  Every complete
traversal of a source costs one pass on the meter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

WORD_BYTES = 8


class StreamFormatError(ValueError):
    """Raised when an input file violates the edge/row grammar."""


@dataclass
class EdgeRecord:
    u: int
    v: int
    w: float = 1.0


@dataclass
class RowRecord:
    entries: list[tuple[int, float]]
    cost: float


def _words_of(arr: np.ndarray) -> int:
    return (arr.nbytes + WORD_BYTES - 1) // WORD_BYTES


class ResourceMeter:
    """Counts passes, arithmetic work, and peak auxiliary words.

    peak_words is a high-water mark over words explicitly registered by the
    metered code (solver vectors, chunk temporaries, forest nodes, certificate
    stores).  Replay buffers are never registered.
    """

    def __init__(self) -> None:
        self.passes = 0
        self.work = 0
        self.peak_words = 0
        self._live_words = 0
        self.stage_passes: dict[str, int] = {}
        self._stage: list[str] = []

    def add_pass(self, k: int = 1) -> None:
        self.passes += k
        if self._stage:
            name = self._stage[-1]
            self.stage_passes[name] = self.stage_passes.get(name, 0) + k

    def add_work(self, ops: int) -> None:
        self.work += int(ops)

    def alloc(self, words: int) -> None:
        self._live_words += int(words)
        if self._live_words > self.peak_words:
            self.peak_words = self._live_words

    def free(self, words: int) -> None:
        self._live_words -= int(words)

    def track(self, arr: np.ndarray) -> np.ndarray:
        """Register a long-lived array allocation and return it."""
        self.alloc(_words_of(arr))
        return arr

    def borrow(self, words: int) -> "_Borrow":
        return _Borrow(self, int(words))

    def stage(self, name: str) -> "_Stage":
        return _Stage(self, name)


class _Borrow:
    def __init__(self, meter: ResourceMeter, words: int) -> None:
        self.meter, self.words = meter, words

    def __enter__(self) -> None:
        self.meter.alloc(self.words)

    def __exit__(self, *exc) -> None:
        self.meter.free(self.words)


class _Stage:
    def __init__(self, meter: ResourceMeter, name: str) -> None:
        self.meter, self.name = meter, name

    def __enter__(self) -> None:
        self.meter._stage.append(self.name)

    def __exit__(self, *exc) -> None:
        self.meter._stage.pop()


class StreamSource:
    """A replayable, ordered sequence of edge or row records.

    kind is "edge" or "row".  Edge sources are backed by columnar (u, v, w)
    arrays; row sources by CSR-style (indptr, indices, values, costs) arrays;
    either may instead be backed by a factory that rebuilds the record
    iterator on every pass (used to pipe one stage's output into the next
    without materializing it).
    """

    def __init__(self, kind: str, length: int):
        if kind not in ("edge", "row"):
            raise ValueError(f"unknown stream kind {kind!r}")
        self.kind = kind
        self.length = length

    # -- construction -----------------------------------------------------

    @staticmethod
    def from_edge_arrays(u: np.ndarray, v: np.ndarray, w: np.ndarray,
                         n_left: int | None = None,
                         n_right: int | None = None) -> "EdgeSource":
        return EdgeSource(np.asarray(u, dtype=np.int64),
                          np.asarray(v, dtype=np.int64),
                          np.asarray(w, dtype=np.float64),
                          n_left=n_left, n_right=n_right)

    @staticmethod
    def from_rows(rows: Iterable[RowRecord]) -> "RowSource":
        indptr = [0]
        indices: list[int] = []
        values: list[float] = []
        costs: list[float] = []
        for rec in rows:
            prev = -1
            for col, val in rec.entries:
                if col <= prev:
                    raise StreamFormatError("row column ids must be strictly increasing")
                prev = col
                indices.append(col)
                values.append(val)
            indptr.append(len(indices))
            costs.append(rec.cost)
        return RowSource(np.asarray(indptr, dtype=np.int64),
                         np.asarray(indices, dtype=np.int64),
                         np.asarray(values, dtype=np.float64),
                         np.asarray(costs, dtype=np.float64))

    # -- traversal ---------------------------------------------------------

    def records(self) -> Iterator[EdgeRecord | RowRecord]:
        raise NotImplementedError

    def __len__(self) -> int:
        return self.length


class EdgeSource(StreamSource):
    def __init__(self, u: np.ndarray, v: np.ndarray, w: np.ndarray,
                 n_left: int | None = None, n_right: int | None = None):
        super().__init__("edge", len(u))
        self.u, self.v, self.w = u, v, w
        self.n_left = n_left if n_left is not None else (int(u.max()) + 1 if len(u) else 0)
        self.n_right = n_right if n_right is not None else (int(v.max()) + 1 if len(v) else 0)

    def records(self) -> Iterator[EdgeRecord]:
        for i in range(self.length):
            yield EdgeRecord(int(self.u[i]), int(self.v[i]), float(self.w[i]))

    def chunks(self, meter: ResourceMeter | None = None, chunk: int = 65536):
        """Yield (u, v, w) array slices covering one full pass."""
        if meter is not None:
            meter.add_pass()
        for i0 in range(0, self.length, chunk):
            yield self.u[i0:i0 + chunk], self.v[i0:i0 + chunk], self.w[i0:i0 + chunk]
        if self.length == 0:
            return


class RowSource(StreamSource):
    def __init__(self, indptr: np.ndarray, indices: np.ndarray,
                 values: np.ndarray, costs: np.ndarray):
        super().__init__("row", len(costs))
        self.indptr = indptr
        self.indices = indices
        self.values = values
        self.costs = costs
        # abs values and per-entry row ids round out the replay buffer
        self.abs_values = np.abs(values)
        self.row_ids = np.repeat(np.arange(self.length, dtype=np.int64),
                                 np.diff(indptr))
        # incidence shortcut: every row has (at most) two equal-valued entries
        self.pair: tuple[np.ndarray, np.ndarray, float] | None = None

    def set_pair_structure(self, c1: np.ndarray, c2: np.ndarray, scale: float,
                           scratch_col: int) -> None:
        """Declare that row i is scale * (e_{c1[i]} + e_{c2[i]}); rows with no
        entries point both columns at the scratch column."""
        self.pair = (c1.astype(np.int64), c2.astype(np.int64), float(scale))
        self.pair_scratch = int(scratch_col)

    def records(self) -> Iterator[RowRecord]:
        for i in range(self.length):
            lo, hi = int(self.indptr[i]), int(self.indptr[i + 1])
            ents = [(int(self.indices[k]), float(self.values[k])) for k in range(lo, hi)]
            yield RowRecord(ents, float(self.costs[i]))

    def row_norms_l1(self) -> np.ndarray:
        out = np.zeros(self.length)
        np.add.at(out, self.row_ids, self.abs_values)
        return out


class GeneratorSource(StreamSource):
    """Edge-value stream recomputed on every pass by a chunk factory.

    factory() must return a fresh iterator of (u_arr, v_arr, val_arr) chunk
    triples; replay determinism is the factory's contract.
    """

    def __init__(self, factory: Callable[[], Iterator[tuple]], length: int,
                 passes_per_replay: int = 1):
        super().__init__("edge", length)
        self.factory = factory
        self.passes_per_replay = passes_per_replay

    def records(self) -> Iterator[EdgeRecord]:
        for cu, cv, cw in self.factory():
            for i in range(len(cu)):
                yield EdgeRecord(int(cu[i]), int(cv[i]), float(cw[i]))

    def chunks(self, meter: ResourceMeter | None = None, chunk: int = 0):
        if meter is not None:
            meter.add_pass(self.passes_per_replay)
        yield from self.factory()


def for_each_pass(src: StreamSource, visitor: Callable, meter: ResourceMeter) -> None:
    """Apply visitor to every record in order; costs exactly one pass."""
    meter.add_pass(getattr(src, "passes_per_replay", 1))
    for rec in src.records():
        visitor(rec)
    meter.add_work(src.length)


def emit_stream(records: Iterable[tuple[tuple[int, int], float]]) -> EdgeSource:
    """Materialize an ordered sequence of (edge, value) contributions.

    Values must be finite and nonnegative.  The result replays the emitted
    sequence exactly, so one stage's output can feed the next stage's passes.
    """
    us, vs, ws = [], [], []
    for (u, v), val in records:
        if not (math.isfinite(val) and val >= 0.0):
            raise ValueError(f"contribution value {val!r} must be finite and nonnegative")
        us.append(u)
        vs.append(v)
        ws.append(val)
    return EdgeSource(np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64),
                      np.asarray(ws, dtype=np.float64))


# -- text formats ----------------------------------------------------------

def _parse_edge_line(parts: list[str], lineno: int, bipartite: bool) -> tuple[int, int, float]:
    if len(parts) not in (2, 3):
        raise StreamFormatError(f"line {lineno}: expected 'u v [w]', got {len(parts)} tokens")
    try:
        u, v = int(parts[0]), int(parts[1])
    except ValueError as e:
        raise StreamFormatError(f"line {lineno}: bad vertex id ({e})") from None
    if u < 0 or v < 0:
        raise StreamFormatError(f"line {lineno}: negative vertex id")
    if not bipartite and u == v:
        raise StreamFormatError(f"line {lineno}: self loop")
    w = 1.0
    if len(parts) == 3:
        try:
            w = float(parts[2])
        except ValueError:
            raise StreamFormatError(f"line {lineno}: bad weight token {parts[2]!r}") from None
        if math.isnan(w):
            raise StreamFormatError(f"line {lineno}: NaN weight")
        if w < 0:
            raise StreamFormatError(f"line {lineno}: negative weight")
    return u, v, w


def open_stream(path: str, kind: str, *, bipartite: bool = False,
                expect_header: bool = False) -> StreamSource:
    """Parse an edge-list or row file into a replayable source.

    Edge grammar: one `u v [w]` record per line, `#` comments ignored.  An
    optional `n_left n_right` header is only consumed when expect_header is
    set (a bare two-token line is otherwise a weight-1 edge).  Row grammar:
    `cost k col:val col:val ...`.
    """
    if kind == "edge":
        us, vs, ws = [], [], []
        header: tuple[int, int] | None = None
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                parts = body.split()
                if expect_header and header is None:
                    if len(parts) != 2:
                        raise StreamFormatError(f"line {lineno}: expected header 'n_left n_right'")
                    header = (int(parts[0]), int(parts[1]))
                    continue
                u, v, w = _parse_edge_line(parts, lineno, bipartite)
                us.append(u)
                vs.append(v)
                ws.append(w)
        nl, nr = header if header else (None, None)
        return EdgeSource(np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64),
                          np.asarray(ws, dtype=np.float64), n_left=nl, n_right=nr)
    if kind == "row":
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                parts = body.split()
                if len(parts) < 2:
                    raise StreamFormatError(f"line {lineno}: expected 'cost k col:val ...'")
                try:
                    cost = float(parts[0])
                    k = int(parts[1])
                except ValueError as e:
                    raise StreamFormatError(f"line {lineno}: {e}") from None
                if math.isnan(cost):
                    raise StreamFormatError(f"line {lineno}: NaN cost")
                if len(parts) != 2 + k:
                    raise StreamFormatError(f"line {lineno}: declared {k} entries, found {len(parts) - 2}")
                ents = []
                for tok in parts[2:]:
                    try:
                        col_s, val_s = tok.split(":", 1)
                        col, val = int(col_s), float(val_s)
                    except ValueError:
                        raise StreamFormatError(f"line {lineno}: bad entry token {tok!r}") from None
                    if math.isnan(val):
                        raise StreamFormatError(f"line {lineno}: NaN entry value")
                    ents.append((col, val))
                rows.append(RowRecord(ents, cost))
        try:
            return StreamSource.from_rows(rows)
        except StreamFormatError as e:
            raise StreamFormatError(f"{path}: {e}") from None
    raise ValueError(f"unknown stream kind {kind!r}")


# -- sparse flows ----------------------------------------------------------

@dataclass
class SparseFlow:
    """Explicit edge -> value map with nonnegative values."""

    values: dict[tuple[int, int], float] = field(default_factory=dict)

    def l1(self) -> float:
        return float(sum(self.values.values()))

    def support(self) -> int:
        return len(self.values)

    def items(self):
        return self.values.items()

    def weighted(self, w: Callable[[tuple[int, int]], float]) -> float:
        return float(sum(w(e) * x for e, x in self.values.items()))

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            for (u, v), x in sorted(self.values.items()):
                fh.write(f"{u} {v} {x!r}\n")

    @staticmethod
    def load(path: str) -> "SparseFlow":
        vals: dict[tuple[int, int], float] = {}
        with open(path) as fh:
            for line in fh:
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                u, v, x = body.split()
                vals[(int(u), int(v))] = vals.get((int(u), int(v)), 0.0) + float(x)
        return SparseFlow(vals)

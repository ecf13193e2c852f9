# app/services/graphs.py
from __future__ import annotations
import gzip
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from app.services.errors import (
    ArityError,
    DegreeMismatchError,
    HeaderError,
    InputError,
    InstanceFormatError,
    VariableIndexError,
)

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
# поток литералов живёт в старшем слове 256-битного счётчика Philox
LITERAL_COUNTER = 1 << 192

# L_{a,j} по слотам клауз, длина m·k
LiteralAssignment = Tuple[int, ...]


@dataclass(frozen=True)
class FactorGraph:
    """
    (d,k)-бирегулярный двудольный мультиграф в модели конфигураций.

    Паросочетание хранится со стороны клауз: var_of_slot[a*k + j]: переменная в слоте (a, j).
    Полуребро переменной (v, i): i-е вхождение v в порядке слотов, поэтому биекция
    полуребро ↔ слот восстанавливается однозначно.
    """
    n: int
    m: int
    d: int
    k: int
    var_of_slot: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1 or self.d < 0 or self.m < 0:
            raise InputError(f"bad graph sizes n={self.n} m={self.m} d={self.d} k={self.k}")
        if self.n * self.d != self.m * self.k:
            raise DegreeMismatchError(f"n·d={self.n * self.d} != m·k={self.m * self.k}")
        if len(self.var_of_slot) != self.m * self.k:
            raise InputError("matching length differs from m·k")
        counts = [0] * self.n
        for v in self.var_of_slot:
            if not 0 <= v < self.n:
                raise VariableIndexError(f"variable {v} out of range")
            counts[v] += 1
        bad = [v for v, c in enumerate(counts) if c != self.d]
        if bad:
            raise DegreeMismatchError(f"variable {bad[0]} has degree {counts[bad[0]]}, expected {self.d}")

    @classmethod
    def empty(cls, n: int) -> "FactorGraph":
        return cls(n=n, m=0, d=0, k=1, var_of_slot=())

    @property
    def slots(self) -> int:
        return self.m * self.k

    def clause(self, a: int) -> Tuple[int, ...]:
        return self.var_of_slot[a * self.k:(a + 1) * self.k]

    @cached_property
    def _slots_of_var(self) -> Tuple[Tuple[int, ...], ...]:
        acc: List[List[int]] = [[] for _ in range(self.n)]
        for s, v in enumerate(self.var_of_slot):
            acc[v].append(s)
        return tuple(tuple(x) for x in acc)

    def variable_slots(self, v: int) -> Tuple[int, ...]:
        """Слоты клауз переменной v в порядке её полуребер (v,0..d-1)."""
        return self._slots_of_var[v]

    def is_simple(self) -> bool:
        return all(len(set(self.clause(a))) == self.k for a in range(self.m))


# ====== Генерация ======

def generate_graph(n: int, d: int, k: int, seed: int) -> FactorGraph:
    """
    Равномерное паросочетание полуребер: Philox(key=seed mod 2^64), Фишер–Йейтс
    снизу вверх по индексу, j = raw mod (i+1). Смещение по модулю не больше nd/2^64.
    """
    if n < 1 or d < 1 or k < 1:
        raise InputError("n, d, k must be positive")
    if (n * d) % k:
        raise InputError(f"n·d = {n * d} is not divisible by k = {k}")
    nd = n * d
    half_edges = np.repeat(np.arange(n, dtype=np.int64), d)
    if nd > 1:
        raw = np.random.Philox(key=int(seed) & MASK64).random_raw(nd - 1)
        for step, i in enumerate(range(nd - 1, 0, -1)):
            j = int(raw[step]) % (i + 1)
            half_edges[i], half_edges[j] = half_edges[j], half_edges[i]
    return FactorGraph(n=n, m=nd // k, d=d, k=k, var_of_slot=tuple(int(v) for v in half_edges))


def generate_literals(g: FactorGraph, seed: int) -> LiteralAssignment:
    if g.slots == 0:
        return ()
    gen = np.random.Philox(key=int(seed) & MASK64, counter=LITERAL_COUNTER)
    raw = gen.random_raw(g.slots)
    return tuple(int(b) for b in (raw >> np.uint64(63)))


# ====== Текстовый формат ======

def serialize(g: FactorGraph, L: LiteralAssignment) -> str:
    if len(L) != g.slots:
        raise InputError("literal vector length differs from m·k")
    lines = [f"p naesat {g.n} {g.m} {g.d} {g.k}"]
    for a in range(g.m):
        lits = []
        for j, v in enumerate(g.clause(a)):
            s = a * g.k + j
            lits.append(str(-(v + 1) if L[s] else v + 1))
        lines.append(" ".join(lits + ["0"]))
    return "\n".join(lines) + "\n"


def _header(tokens: List[str]) -> Tuple[int, int, int, int]:
    if len(tokens) != 6 or tokens[0] != "p" or tokens[1] != "naesat":
        raise HeaderError(f"expected 'p naesat n m d k', got {' '.join(tokens)!r}")
    try:
        n, m, d, k = (int(t) for t in tokens[2:])
    except ValueError as e:
        raise HeaderError(f"non-integer header field in {' '.join(tokens)!r}") from e
    if n < 1 or m < 0 or d < 0 or k < 1:
        raise HeaderError(f"header sizes out of range: n={n} m={m} d={d} k={k}")
    if n * d != m * k:
        raise DegreeMismatchError(f"header has n·d={n * d} but m·k={m * k}")
    return n, m, d, k


def parse(text: str) -> Tuple[FactorGraph, LiteralAssignment]:
    header = None
    var_of_slot: List[int] = []
    L: List[int] = []
    clauses = 0
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("c"):
            continue
        tokens = line.split()
        if header is None:
            header = _header(tokens)
            continue
        n, m, d, k = header
        try:
            ints = [int(t) for t in tokens]
        except ValueError as e:
            raise InstanceFormatError(f"line {lineno}: non-integer literal") from e
        if ints and ints[-1] == 0:
            ints = ints[:-1]
        if len(ints) != k:
            raise ArityError(f"line {lineno}: clause has {len(ints)} literals, expected {k}")
        for lit in ints:
            if lit == 0 or abs(lit) > n:
                raise VariableIndexError(f"line {lineno}: variable index {lit} out of range 1..{n}")
            var_of_slot.append(abs(lit) - 1)
            L.append(1 if lit < 0 else 0)
        clauses += 1
    if header is None:
        raise HeaderError("missing 'p naesat' header")
    n, m, d, k = header
    if clauses != m:
        raise DegreeMismatchError(f"header announces {m} clauses, found {clauses}")
    return FactorGraph(n=n, m=m, d=d, k=k, var_of_slot=tuple(var_of_slot)), tuple(L)


def read_instance(path: Union[str, Path]) -> Tuple[FactorGraph, LiteralAssignment]:
    p = Path(path)
    if p.suffix == ".gz":
        with gzip.open(p, "rt", encoding="utf-8") as f:
            return parse(f.read())
    return parse(p.read_text(encoding="utf-8"))


def write_instance(path: Union[str, Path], g: FactorGraph, L: LiteralAssignment) -> None:
    p = Path(path)
    text = serialize(g, L)
    if p.suffix == ".gz":
        # mtime=0: одинаковые инстансы дают одинаковые байты
        with open(p, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(text.encode("utf-8"))
    else:
        p.write_text(text, encoding="utf-8")
    log.info("instance written to %s (n=%d, m=%d)", p, g.n, g.m)

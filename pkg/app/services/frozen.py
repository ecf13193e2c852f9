# app/services/frozen.py
from __future__ import annotations
import heapq
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Set, Tuple

from app.settings import settings
from app.services.errors import InputError, NotASolutionError, SizeGuardError
from app.services.graphs import FactorGraph, LiteralAssignment
from app.services.naesat_core import Assignment, is_nae_solution

log = logging.getLogger(__name__)

FREE = 2  # значение f в η ∈ {0,1,f}^V
SYMBOLS = {0: "0", 1: "1", FREE: "f"}

FrozenVector = Tuple[int, ...]


@dataclass(frozen=True)
class FrozenConfig:
    eta: FrozenVector

    @property
    def free_count(self) -> int:
        return sum(1 for e in self.eta if e == FREE)

    @property
    def beta(self) -> Fraction:
        return free_density(self.eta)

    def __str__(self) -> str:
        return "".join(SYMBOLS[e] for e in self.eta)


@dataclass(frozen=True)
class TruncationPolicy:
    beta_max: Fraction

    def __post_init__(self) -> None:
        if not 0 < self.beta_max <= 1:
            raise InputError(f"beta_max must lie in (0, 1], got {self.beta_max}")

    @classmethod
    def for_k(cls, k: int) -> "TruncationPolicy":
        return cls(beta_max=Fraction(7, 2 ** k))

    @classmethod
    def unrestricted(cls) -> "TruncationPolicy":
        return cls(beta_max=Fraction(1))

    def cap(self, n: int) -> int:
        """Допустимое число свободных переменных: floor(n·β_max)."""
        return math.floor(n * self.beta_max)


def parse_eta(text: str) -> FrozenVector:
    back = {"0": 0, "1": 1, "f": FREE}
    try:
        return tuple(back[c] for c in text.strip())
    except KeyError as e:
        raise InputError(f"frozen vector must use the letters 0, 1, f: {text!r}") from e


def free_density(eta: Sequence[int]) -> Fraction:
    return Fraction(sum(1 for e in eta if e == FREE), len(eta))


# ====== Форсирование ======

def is_forcing_edge(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int], slot: int) -> bool:
    """
    Слот (a, j) форсирует свою переменную, если клауза целиком жёсткая и все
    остальные слоты дают отрицание его оценки. Слоты считаются независимо,
    даже если переменная повторяется.
    """
    k = g.k
    a, j = divmod(slot, k)
    vars_a = g.clause(a)
    if any(eta[w] == FREE for w in vars_a):
        return False
    base = a * k
    e = L[slot] ^ eta[vars_a[j]]
    return all(L[base + i] ^ eta[w] == 1 - e for i, w in enumerate(vars_a) if i != j)


def forcing_slots(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int]) -> List[Optional[int]]:
    """Форсирующий слот каждой клаузы (не больше одного при k ≥ 3) или None."""
    out: List[Optional[int]] = []
    for a in range(g.m):
        found = None
        for j in range(g.k):
            if is_forcing_edge(g, L, eta, a * g.k + j):
                found = a * g.k + j
                break
        out.append(found)
    return out


def _clause_defect(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int], a: int) -> bool:
    """(a) жёсткая клауза с постоянной оценкой; (c) ровно один свободный слот при постоянной оценке остальных."""
    base = a * g.k
    evals = set()
    free_slots = 0
    for j, w in enumerate(g.clause(a)):
        if eta[w] == FREE:
            free_slots += 1
        else:
            evals.add(L[base + j] ^ eta[w])
    if free_slots == 0:
        return len(evals) == 1
    if free_slots == 1:
        return len(evals) <= 1
    return False


def _variable_defect(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int], v: int) -> bool:
    forced = any(is_forcing_edge(g, L, eta, s) for s in g.variable_slots(v))
    return forced != (eta[v] != FREE)


def is_valid_frozen(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int]) -> bool:
    if len(eta) != g.n:
        return False
    if any(e not in (0, 1, FREE) for e in eta):
        return False
    if any(_clause_defect(g, L, eta, a) for a in range(g.m)):
        return False
    return not any(_variable_defect(g, L, eta, v) for v in range(g.n))


# ====== Огрубление ======

def coarsen(g: FactorGraph, L: LiteralAssignment, x: Sequence[int]) -> FrozenConfig:
    """
    Пока есть жёсткая нефорсированная переменная, освобождаем первую по индексу.
    Освобождение только снимает форсирование, поэтому кандидаты держим в куче.
    """
    if len(x) != g.n or not is_nae_solution(g, L, x):
        raise NotASolutionError("coarsen expects an NAE-SAT solution")
    eta = list(x)
    fslot = forcing_slots(g, L, eta)
    forced_count = [0] * g.n
    for s in fslot:
        if s is not None:
            forced_count[g.var_of_slot[s]] += 1

    heap = [v for v in range(g.n) if forced_count[v] == 0]
    heapq.heapify(heap)
    while heap:
        v = heapq.heappop(heap)
        if eta[v] == FREE or forced_count[v]:
            continue
        eta[v] = FREE
        for s in g.variable_slots(v):
            a = s // g.k
            fs = fslot[a]
            if fs is None:
                continue
            fslot[a] = None
            w = g.var_of_slot[fs]
            forced_count[w] -= 1
            if forced_count[w] == 0 and eta[w] != FREE:
                heapq.heappush(heap, w)
    return FrozenConfig(eta=tuple(eta))


# ====== Перечисление ======

def enumerate_frozen(
    g: FactorGraph,
    L: LiteralAssignment,
    policy: TruncationPolicy,
    limit_n: Optional[int] = None,
) -> List[FrozenConfig]:
    """Все валидные η с не более чем floor(n·β_max) свободными; перебор по индексу с отсечениями."""
    limit = settings.enum_limit_n if limit_n is None else int(limit_n)
    if g.n > limit:
        raise SizeGuardError(f"n={g.n} exceeds the frozen enumeration limit {limit}")
    cap = policy.cap(g.n)

    # клаузы, которые становятся полностью назначенными на шаге i
    clauses_at: List[List[int]] = [[] for _ in range(g.n)]
    for a in range(g.m):
        clauses_at[max(g.clause(a))].append(a)
    # переменные, чьё окружение полностью назначено на шаге i
    vars_at: List[List[int]] = [[] for _ in range(g.n)]
    for v in range(g.n):
        reach = v
        for s in g.variable_slots(v):
            reach = max(reach, max(g.clause(s // g.k)))
        vars_at[reach].append(v)

    out: List[FrozenConfig] = []
    eta: List[int] = [FREE] * g.n

    def rec(i: int, free_used: int) -> None:
        if i == g.n:
            out.append(FrozenConfig(eta=tuple(eta)))
            return
        for val in (0, 1, FREE):
            used = free_used + (val == FREE)
            if used > cap:
                continue
            eta[i] = val
            if any(_clause_defect(g, L, eta, a) for a in clauses_at[i]):
                continue
            if any(_variable_defect(g, L, eta, v) for v in vars_at[i]):
                continue
            rec(i + 1, used)
        eta[i] = FREE

    rec(0, 0)
    log.info("enumerate_frozen: %d configurations (cap %d free)", len(out), cap)
    return out


def cluster_preimage(
    g: FactorGraph,
    L: LiteralAssignment,
    eta: Sequence[int],
    limit_n: Optional[int] = None,
) -> Set[Assignment]:
    limit = settings.count_limit_n if limit_n is None else int(limit_n)
    if g.n > limit:
        raise SizeGuardError(f"n={g.n} exceeds the preimage limit {limit}")
    if not is_valid_frozen(g, L, eta):
        return set()
    target = tuple(eta)
    free_vars = [v for v in range(g.n) if eta[v] == FREE]
    out: Set[Assignment] = set()
    for bits in itertools.product((0, 1), repeat=len(free_vars)):
        x = list(eta)
        for v, b in zip(free_vars, bits):
            x[v] = b
        if is_nae_solution(g, L, x) and coarsen(g, L, x).eta == target:
            out.add(tuple(x))
    return out

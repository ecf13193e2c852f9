# app/services/naesat_core.py
from __future__ import annotations
import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
from mpmath import mp, mpf

from app.settings import settings
from app.services.errors import InputError, SizeGuardError, SolverBudgetError
from app.services.graphs import FactorGraph, LiteralAssignment, MASK64

log = logging.getLogger(__name__)

Assignment = Tuple[int, ...]


@dataclass
class SolutionCount:
    Z: int
    solutions: Optional[List[Assignment]] = None


@dataclass
class ExpectedZ:
    exact: Fraction
    log_value: mpf
    phi: mpf


def evaluate_clause(g: FactorGraph, L: LiteralAssignment, x: Sequence[int], a: int) -> Tuple[int, ...]:
    """(Lx)_a: по слотам, повторная переменная берёт одно и то же x_v."""
    base = a * g.k
    return tuple(L[base + j] ^ x[v] for j, v in enumerate(g.clause(a)))


def _check_assignment(g: FactorGraph, x: Sequence[int]) -> None:
    if len(x) != g.n:
        raise InputError(f"assignment has length {len(x)}, expected n={g.n}")


def is_nae_solution(g: FactorGraph, L: LiteralAssignment, x: Sequence[int]) -> bool:
    _check_assignment(g, x)
    for a in range(g.m):
        ev = evaluate_clause(g, L, x, a)
        if len(set(ev)) == 1:
            return False
    return True


def _limit(limit_n: Optional[int], default: int) -> int:
    return default if limit_n is None else int(limit_n)


# ====== Полный перебор (код Грея) ======

def count_solutions(
    g: FactorGraph,
    L: LiteralAssignment,
    limit_n: Optional[int] = None,
    keep_solutions: bool = False,
) -> SolutionCount:
    """
    Перебор 2^{n-1} присваиваний с x_{n-1} = 0 в порядке кода Грея и удвоение:
    решения идут парами (x, ¬x).
    """
    limit = _limit(limit_n, settings.count_limit_n)
    if g.n > limit:
        raise SizeGuardError(f"n={g.n} exceeds the exhaustive count limit {limit}")
    k = g.k
    x = [0] * g.n
    # число единиц в оценке каждой клаузы
    ones = [sum(L[a * k:(a + 1) * k]) for a in range(g.m)]
    bad = sum(1 for c in ones if c == 0 or c == k)
    slots = [g.variable_slots(v) for v in range(g.n)]

    found = 0
    sols: List[Assignment] = []
    if bad == 0:
        found += 1
        if keep_solutions:
            sols.append(tuple(x))
    for i in range(1, 1 << (g.n - 1)):
        v = (i & -i).bit_length() - 1
        for s in slots[v]:
            a = s // k
            before = ones[a]
            ones[a] += -1 if (L[s] ^ x[v]) else 1
            bad += (ones[a] in (0, k)) - (before in (0, k))
        x[v] ^= 1
        if bad == 0:
            found += 1
            if keep_solutions:
                sols.append(tuple(x))
    if keep_solutions:
        full = sols + [tuple(1 - b for b in s) for s in sols]
        full.sort()
        return SolutionCount(Z=2 * found, solutions=full)
    return SolutionCount(Z=2 * found)


def sample_solution(g: FactorGraph, L: LiteralAssignment, seed: int, limit_n: Optional[int] = None) -> Optional[Assignment]:
    """Равномерное решение из полного списка; None, если решений нет."""
    sols = count_solutions(g, L, limit_n=limit_n, keep_solutions=True).solutions or []
    if not sols:
        return None
    rng = np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
    return sols[int(rng.integers(len(sols)))]


# ====== DPLL для NAE ======

class _NaeSearch:
    def __init__(self, g: FactorGraph, L: LiteralAssignment, budget: int) -> None:
        self.g = g
        self.L = L
        self.budget = budget
        self.nodes = 0

    def _status(self, x: List[Optional[int]], a: int) -> Tuple[Set[int], Set[int]]:
        seen: Set[int] = set()
        free: Set[int] = set()
        base = a * self.g.k
        for j, v in enumerate(self.g.clause(a)):
            if x[v] is None:
                free.add(v)
            else:
                seen.add(self.L[base + j] ^ x[v])
        return seen, free

    def _propagate(self, x: List[Optional[int]]) -> bool:
        # Клауза с одной свободной переменной и одинаковыми оценками остальных
        # слотов вынуждает её значение (повторы переменной учитываются).
        g, L = self.g, self.L
        changed = True
        while changed:
            changed = False
            for a in range(g.m):
                seen, free = self._status(x, a)
                if len(seen) == 2:
                    continue
                if not free:
                    return False
                if len(free) > 1:
                    continue
                v = next(iter(free))
                base = a * g.k
                own = [base + j for j, w in enumerate(g.clause(a)) if w == v]
                feasible = [val for val in (0, 1) if len(seen | {L[s] ^ val for s in own}) == 2]
                if not feasible:
                    return False
                if len(feasible) == 1:
                    x[v] = feasible[0]
                    changed = True
        return True

    def _branch_variable(self, x: List[Optional[int]]) -> Optional[int]:
        score = {}
        for a in range(self.g.m):
            seen, free = self._status(x, a)
            if len(seen) == 2:
                continue
            for v in self.g.clause(a):
                if x[v] is None:
                    score[v] = score.get(v, 0) + 1
        if not score:
            return None
        return min(score, key=lambda v: (-score[v], v))

    def solve(self, x: List[Optional[int]]) -> bool:
        self.nodes += 1
        if self.nodes > self.budget:
            raise SolverBudgetError(f"node budget {self.budget} exhausted")
        x = list(x)
        if not self._propagate(x):
            return False
        v = self._branch_variable(x)
        if v is None:
            return True
        # в корне фиксируем ветку 0: x и ¬x решают одновременно
        values = (0,) if all(val is None for val in x) else (0, 1)
        for val in values:
            x[v] = val
            if self.solve(x):
                return True
        return False


def decide_exists(g: FactorGraph, L: LiteralAssignment, node_budget: Optional[int] = None) -> bool:
    search = _NaeSearch(g, L, _limit(node_budget, settings.node_budget))
    result = search.solve([None] * g.n)
    log.debug("dpll: %s after %d nodes", result, search.nodes)
    return result


# ====== Первый момент ======

def expected_Z(n: int, m: int, k: int) -> ExpectedZ:
    """E Z = 2^n (1 - 2/2^k)^m точно, плюс логарифм и Φ_k(d) при d = mk/n."""
    if n < 1 or m < 0 or k < 1:
        raise InputError("expected_Z needs n ≥ 1, m ≥ 0, k ≥ 1")
    p = 1 - Fraction(2, 2 ** k)
    exact = Fraction(2 ** n) * p ** m
    if exact == 0:
        return ExpectedZ(exact=exact, log_value=mp.ninf, phi=mp.ninf)
    log_value = n * mp.log(2) + m * mp.log(mp.mpf(p.numerator) / p.denominator)
    return ExpectedZ(exact=exact, log_value=log_value, phi=log_value / n)


def mean_Z_over_literals(g: FactorGraph, max_slots: int = 18) -> Fraction:
    """Точное среднее Z по всем 2^{mk} векторам литералов."""
    if g.slots > max_slots:
        raise SizeGuardError(f"m·k={g.slots} exceeds the literal enumeration limit {max_slots}")
    total = 0
    for bits in itertools.product((0, 1), repeat=g.slots):
        total += count_solutions(g, bits).Z
    return Fraction(total, 2 ** g.slots)

# app/services/auxiliary.py
from __future__ import annotations
import itertools
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.settings import settings
from app.services.errors import (
    InputError,
    InvalidConfigurationError,
    SizeGuardError,
)
from app.services.frozen import FREE, FrozenConfig, TruncationPolicy, forcing_slots, is_valid_frozen
from app.services.graphs import FactorGraph, LiteralAssignment, MASK64
from app.services.naesat_core import Assignment, evaluate_clause

log = logging.getLogger(__name__)

# Спин ребра: (σ_{v→a}, σ_{a→v}); порядок фиксирован для всех матриц
SPINS: Tuple[str, ...] = ("0f", "00", "f0", "1f", "11", "f1", "ff")
SPIN_INDEX: Dict[str, int] = {s: i for i, s in enumerate(SPINS)}
RF_SPINS: Tuple[str, ...] = ("rr", "rf", "fr", "ff")
PROJECTION: Dict[str, str] = {
    "0f": "rf", "1f": "rf",
    "00": "rr", "11": "rr",
    "f0": "fr", "f1": "fr",
    "ff": "ff",
}
UNSAT = "UNSAT"

FACTOR_KINDS = ("variable", "clause_zero", "clause", "variable_rf", "clause_rf")

_FLIP_CHAR = {"0": "1", "1": "0", "f": "f"}


def flip_spin(spin: str) -> str:
    """0 <-> 1 в обеих компонентах."""
    return _FLIP_CHAR[spin[0]] + _FLIP_CHAR[spin[1]]


def xor_spin(spin: str, bit: int) -> str:
    return flip_spin(spin) if bit else spin


def _char(value: int) -> str:
    return "f" if value == FREE else str(value)


# ====== Правила сообщений ======

def vertex_rule(messages: Sequence[str]) -> str:
    has0 = "0" in messages
    has1 = "1" in messages
    if has0 and has1:
        return UNSAT
    if has0:
        return "0"
    if has1:
        return "1"
    return "f"


def clause_rule(incoming: Sequence[str], literals: Sequence[int], target: int) -> str:
    """
    incoming: сообщения σ_{w→a} остальных k-1 слотов в порядке слотов (без target).
    Жёсткое значение y, если L_target ⊕ y = ¬(L_w ⊕ σ_w) для всех остальных w.
    """
    if len(incoming) != len(literals) - 1:
        raise InputError("clause_rule expects k-1 incoming messages")
    if "f" in incoming:
        return "f"
    others = [i for i in range(len(literals)) if i != target]
    evals = {literals[i] ^ int(msg) for i, msg in zip(others, incoming)}
    if len(evals) != 1:
        return "f"
    xi = evals.pop()
    return str(literals[target] ^ 1 ^ xi)


def variable_factor(spins: Sequence[str]) -> int:
    """ψ̇ по правилам: исходящие сообщения согласованы с входящими."""
    incoming = [s[1] for s in spins]
    if vertex_rule(incoming) == UNSAT:
        return 0
    for i, s in enumerate(spins):
        if s[0] != vertex_rule(incoming[:i] + incoming[i + 1:]):
            return 0
    return 1


def clause_factor(spins: Sequence[str], literals: Sequence[int]) -> int:
    """ψ̂^a по правилам при литералах L_a; жёсткая клауза не должна быть постоянной."""
    out = [s[0] for s in spins]
    for i, s in enumerate(spins):
        if s[1] != clause_rule(out[:i] + out[i + 1:], literals, i):
            return 0
    if "f" not in out:
        evals = {lit ^ int(o) for lit, o in zip(literals, out)}
        if len(evals) == 1:
            return 0
    return 1


def literal_average_clause_weight(spins: Sequence[str]) -> Fraction:
    """2^{-k} Σ_L ψ̂°(σ̂ ⊕ L) прямым перебором литералов."""
    k = len(spins)
    total = sum(clause_factor(spins, L) for L in itertools.product((0, 1), repeat=k))
    return Fraction(total, 2 ** k)


# ====== Таблицы по классам перестановок ======

def _variable_weight(c: Counter, size: int) -> Fraction:
    if c["ff"] == size:
        return Fraction(1)
    for x in "01":
        xf, fx, xx = x + "f", "f" + x, x + x
        if c[xf] + c[fx] + c[xx] != size:
            continue
        if c[fx] == 1 and c[xx] == 0:
            return Fraction(1)
        if c[fx] == 0 and c[xx] >= 2:
            return Fraction(1)
    return Fraction(0)


def _clause_zero_weight(c: Counter, size: int) -> Fraction:
    k = size
    out_f = c["f0"] + c["f1"] + c["ff"]
    if out_f == 0:
        n0 = c["0f"] + c["00"]
        n1 = c["1f"] + c["11"]
        if n0 == 0 or n1 == 0:
            return Fraction(0)
        if n0 == 1 and c["00"] == 1 and c["1f"] == k - 1:
            return Fraction(1)
        if n1 == 1 and c["11"] == 1 and c["0f"] == k - 1:
            return Fraction(1)
        if n0 >= 2 and n1 >= 2 and c["00"] == 0 and c["11"] == 0:
            return Fraction(1)
        return Fraction(0)
    if out_f == 1:
        if c["f0"] == 1 and c["1f"] == k - 1:
            return Fraction(1)
        if c["f1"] == 1 and c["0f"] == k - 1:
            return Fraction(1)
        if c["ff"] == 1 and c["0f"] >= 1 and c["1f"] >= 1 and c["0f"] + c["1f"] == k - 1:
            return Fraction(1)
        return Fraction(0)
    if c["ff"] == out_f and c["0f"] + c["1f"] == k - out_f:
        return Fraction(1)
    return Fraction(0)


def _clause_rf_weight(c: Counter, size: int) -> Fraction:
    k = size
    p = Fraction(1, 2 ** k)
    if c["rf"] == k:
        return (2 ** k - 2 - 2 * k) * p
    if c["rf"] == k - 1 and (c["rr"] == 1 or c["fr"] == 1):
        return 2 * p
    if c["rf"] == k - 1 and c["ff"] == 1:
        return (2 ** k - 4) * p
    if c["ff"] >= 2 and c["ff"] + c["rf"] == k:
        return Fraction(1)
    return Fraction(0)


def _variable_rf_weight(c: Counter, size: int) -> Fraction:
    if c["ff"] == size:
        return Fraction(1)
    if c["fr"] == 1 and c["rf"] == size - 1:
        return Fraction(2)
    if c["rr"] >= 2 and c["rr"] + c["rf"] == size:
        return Fraction(2)
    return Fraction(0)


def factor_weight(kind: str, local: Sequence[str]) -> Fraction:
    """
    Точный вес фактора по классу перестановки:
      variable / clause_zero: ψ̇ и ψ̂° на 7-буквенном алфавите;
      clause: ψ̂ = 2^{-k} Σ_L ψ̂°(·⊕L), зависит только от проекции Π;
      variable_rf / clause_rf: таблицы после проекции на {rr, rf, fr, ff}.
    """
    if kind not in FACTOR_KINDS:
        raise InputError(f"unknown factor kind {kind!r}")
    size = len(local)
    if size == 0:
        raise InputError("empty factor tuple")
    if kind in ("variable_rf", "clause_rf"):
        if any(s not in RF_SPINS for s in local):
            raise InputError("r/f factor expects letters rr, rf, fr, ff")
        c = Counter(local)
        return _variable_rf_weight(c, size) if kind == "variable_rf" else _clause_rf_weight(c, size)
    if any(s not in SPIN_INDEX for s in local):
        raise InputError(f"unknown spin in {tuple(local)!r}")
    c = Counter(local)
    if kind == "variable":
        return _variable_weight(c, size)
    if kind == "clause_zero":
        return _clause_zero_weight(c, size)
    return _clause_rf_weight(Counter(PROJECTION[s] for s in local), size)


# ====== Вспомогательная модель на графе ======

@dataclass(frozen=True)
class AuxConfig:
    spins: Tuple[str, ...]  # по слотам клауз

    def __str__(self) -> str:
        return " ".join(self.spins)


def is_valid_aux(g: FactorGraph, L: LiteralAssignment, sigma: AuxConfig) -> bool:
    if len(sigma.spins) != g.slots or any(s not in SPIN_INDEX for s in sigma.spins):
        return False
    for v in range(g.n):
        if not variable_factor([sigma.spins[s] for s in g.variable_slots(v)]):
            return False
    for a in range(g.m):
        base = a * g.k
        if not clause_factor(sigma.spins[base:base + g.k], L[base:base + g.k]):
            return False
    return True


def frozen_to_aux(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int]) -> AuxConfig:
    """
    σ_{a→v} = η_v на форсирующем слоте, иначе f;
    σ_{v→a} = η_v, если v форсирована через другой слот, иначе f.
    """
    if not is_valid_frozen(g, L, eta):
        raise InvalidConfigurationError("frozen_to_aux expects a valid frozen configuration")
    fslot = forcing_slots(g, L, eta)
    forcing = {s for s in fslot if s is not None}
    spins: List[str] = []
    for s, v in enumerate(g.var_of_slot):
        inc = _char(eta[v]) if s in forcing else "f"
        forced_elsewhere = any(t in forcing for t in g.variable_slots(v) if t != s)
        out = _char(eta[v]) if forced_elsewhere else "f"
        spins.append(out + inc)
    sigma = AuxConfig(spins=tuple(spins))
    if not is_valid_aux(g, L, sigma):
        raise InvalidConfigurationError("frozen configuration does not map to a valid auxiliary one")
    return sigma


def aux_to_frozen(g: FactorGraph, sigma: AuxConfig, L: Optional[LiteralAssignment] = None) -> FrozenConfig:
    if L is not None and not is_valid_aux(g, L, sigma):
        raise InvalidConfigurationError("aux_to_frozen expects a valid auxiliary configuration")
    eta: List[int] = []
    for v in range(g.n):
        value = vertex_rule([sigma.spins[s][1] for s in g.variable_slots(v)])
        if value == UNSAT:
            raise InvalidConfigurationError(f"variable {v} receives both 0 and 1")
        eta.append(FREE if value == "f" else int(value))
    return FrozenConfig(eta=tuple(eta))


def local_variable_configs(d: int) -> List[Tuple[str, ...]]:
    """Носитель ψ̇ на M^d: ff^d; (fx, xf^{d-1}); xx на подмножестве ≥ 2, xf на остальных."""
    out: List[Tuple[str, ...]] = [("ff",) * d]
    for x in "01":
        for size in range(1, d + 1):
            for subset in itertools.combinations(range(d), size):
                hit = "f" + x if size == 1 else x + x
                out.append(tuple(hit if i in subset else x + "f" for i in range(d)))
    return out


def _partial_clause_ok(spins: Sequence[Optional[str]], literals: Sequence[int]) -> bool:
    # форсирующий слот требует жёстких исходящих с оценкой ξ = ¬(L_s ⊕ y) у остальных
    for s, sp in enumerate(spins):
        if sp is None or sp[1] == "f":
            continue
        xi = literals[s] ^ int(sp[1]) ^ 1
        for w, other in enumerate(spins):
            if w == s or other is None:
                continue
            if other[0] == "f" or (literals[w] ^ int(other[0])) != xi:
                return False
    return True


def enumerate_aux(
    g: FactorGraph,
    L: LiteralAssignment,
    policy: TruncationPolicy,
    limit_n: Optional[int] = None,
) -> List[AuxConfig]:
    limit = settings.enum_limit_n if limit_n is None else int(limit_n)
    if g.n > limit:
        raise SizeGuardError(f"n={g.n} exceeds the auxiliary enumeration limit {limit}")
    cap = policy.cap(g.n)
    local = local_variable_configs(g.d) if g.d else [()]
    clauses_at: List[List[int]] = [[] for _ in range(g.n)]
    for a in range(g.m):
        clauses_at[max(g.clause(a))].append(a)
    touched: List[List[int]] = [sorted({s // g.k for s in g.variable_slots(v)}) for v in range(g.n)]

    spins: List[Optional[str]] = [None] * g.slots
    out: List[AuxConfig] = []

    def rec(v: int, free_used: int) -> None:
        if v == g.n:
            out.append(AuxConfig(spins=tuple(spins)))  # type: ignore[arg-type]
            return
        my_slots = g.variable_slots(v)
        for conf in local:
            is_free = bool(conf) and conf[0] == "ff"
            used = free_used + (is_free or not conf)
            if used > cap:
                continue
            for s, sp in zip(my_slots, conf):
                spins[s] = sp
            ok = True
            for a in touched[v]:
                base = a * g.k
                if not _partial_clause_ok(spins[base:base + g.k], L[base:base + g.k]):
                    ok = False
                    break
            if ok:
                for a in clauses_at[v]:
                    base = a * g.k
                    if not clause_factor(spins[base:base + g.k], L[base:base + g.k]):  # type: ignore[arg-type]
                        ok = False
                        break
            if ok:
                rec(v + 1, used)
        for s in my_slots:
            spins[s] = None

    rec(0, 0)
    return out


def aux_partition(
    g: FactorGraph,
    L: LiteralAssignment,
    policy: TruncationPolicy,
    limit_n: Optional[int] = None,
) -> int:
    """Σ_σ Ψ(σ) по β ≤ β_max; веса 01f-модели равны 0/1, так что это число конфигураций."""
    return len(enumerate_aux(g, L, policy, limit_n))


# ====== Достройка кластера до решения ======

@dataclass
class ComponentInfo:
    variables: Tuple[int, ...]
    clauses: Tuple[int, ...]
    cycles: int


@dataclass
class CompletionResult:
    assignment: Optional[Assignment]
    failed_component: Optional[ComponentInfo] = None
    components: List[ComponentInfo] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.assignment is not None


def _sharp_clauses(g: FactorGraph, L: LiteralAssignment, eta: Sequence[int]) -> Dict[int, int]:
    """F♯: ≥ 2 свободных слота и постоянная оценка жёстких; для чисто свободных ξ = 0."""
    out: Dict[int, int] = {}
    for a in range(g.m):
        base = a * g.k
        evals = set()
        free_slots = 0
        for j, v in enumerate(g.clause(a)):
            if eta[v] == FREE:
                free_slots += 1
            else:
                evals.add(L[base + j] ^ eta[v])
        if free_slots >= 2 and len(evals) <= 1:
            out[a] = evals.pop() if evals else 0
    return out


def _find_cycle(
    start: Tuple[str, int],
    adj: Dict[Tuple[str, int], List[Tuple[int, Tuple[str, int]]]],
) -> List[Tuple[Tuple[str, int], int]]:
    """Единственный цикл компоненты: пары (вершина, ребро к следующей вершине цикла)."""
    parent: Dict[Tuple[str, int], Tuple[Optional[Tuple[str, int]], Optional[int]]] = {start: (None, None)}
    depth = {start: 0}
    stack = [start]
    while stack:
        node = stack.pop()
        for edge, nxt in adj[node]:
            if edge == parent[node][1]:
                continue
            if nxt not in parent:
                parent[nxt] = (node, edge)
                depth[nxt] = depth[node] + 1
                stack.append(nxt)
                continue
            # подъём до общего предка: a_path от node, b_path от nxt
            a_path, a_edges = [node], []
            b_path, b_edges = [nxt], []
            a, b = node, nxt
            while a != b:
                if depth[a] >= depth[b]:
                    a, e = parent[a]
                    a_edges.append(e)
                    a_path.append(a)
                else:
                    b, e = parent[b]
                    b_edges.append(e)
                    b_path.append(b)
            cycle: List[Tuple[Tuple[str, int], int]] = []
            for i in range(len(b_path) - 1):
                cycle.append((b_path[i], b_edges[i]))
            down, down_edges = a_path[::-1], a_edges[::-1]
            for i in range(len(down) - 1):
                cycle.append((down[i], down_edges[i]))
            cycle.append((node, edge))
            return cycle
    return []


def complete_to_solution(
    g: FactorGraph,
    L: LiteralAssignment,
    eta: Sequence[int],
    seed: int,
) -> CompletionResult:
    """
    Достраивает η до NAE-решения через граф G♯ (свободные переменные и клаузы F♯).
    Компоненты-деревья: корень и значения выбираются по seed, первый ребёнок клаузы
    закрывает недостающую оценку. Унициклические: на цикле x_v = ¬L_{av} ⊕ ξ_a.
    Компонента с двумя и более циклами: отказ.
    """
    if not is_valid_frozen(g, L, eta):
        raise InvalidConfigurationError("complete_to_solution expects a valid frozen configuration")
    rng = np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
    sharp = _sharp_clauses(g, L, eta)

    Node = Tuple[str, int]
    adj: Dict[Node, List[Tuple[int, Node]]] = {("v", v): [] for v in range(g.n) if eta[v] == FREE}
    for a in sharp:
        adj[("c", a)] = []
    for a in sharp:
        for j, v in enumerate(g.clause(a)):
            if eta[v] == FREE:
                s = a * g.k + j
                adj[("c", a)].append((s, ("v", v)))
                adj[("v", v)].append((s, ("c", a)))

    # компоненты в порядке наименьшей переменной
    seen: Dict[Node, int] = {}
    comps: List[List[Node]] = []
    for node in sorted(adj, key=lambda t: (t[0] != "v", t[1])):
        if node in seen:
            continue
        comp = []
        queue = deque([node])
        seen[node] = len(comps)
        while queue:
            cur = queue.popleft()
            comp.append(cur)
            for _, nxt in adj[cur]:
                if nxt not in seen:
                    seen[nxt] = len(comps)
                    queue.append(nxt)
        comps.append(comp)

    infos: List[ComponentInfo] = []
    for comp in comps:
        edges = sum(len(adj[nd]) for nd in comp if nd[0] == "c")
        infos.append(ComponentInfo(
            variables=tuple(sorted(nd[1] for nd in comp if nd[0] == "v")),
            clauses=tuple(sorted(nd[1] for nd in comp if nd[0] == "c")),
            cycles=edges - len(comp) + 1,
        ))
    for info in infos:
        if info.cycles >= 2:
            log.info("completion failed: component with %d cycles", info.cycles)
            return CompletionResult(assignment=None, failed_component=info, components=infos)

    x: List[Optional[int]] = [None if e == FREE else e for e in eta]
    processed = set()

    def process_clause(a: int, queue: deque) -> None:
        processed.add(a)
        base = a * g.k
        existing = {L[base + j] ^ x[v] for j, v in enumerate(g.clause(a)) if x[v] is not None}
        children: List[int] = []
        for v in g.clause(a):
            if x[v] is None and v not in children:
                children.append(v)
        for idx, c in enumerate(children):
            own = [base + j for j, v in enumerate(g.clause(a)) if v == c]
            if idx == 0 and len(existing) == 1:
                missing = 1 - next(iter(existing))
                val = L[own[0]] ^ missing
            else:
                val = int(rng.integers(2))
            x[c] = val
            existing |= {L[s] ^ val for s in own}
            queue.append(c)

    def spread(queue: deque) -> None:
        while queue:
            v = queue.popleft()
            for s in g.variable_slots(v):
                a = s // g.k
                if a in sharp and a not in processed:
                    process_clause(a, queue)

    for comp, info in zip(comps, infos):
        queue: deque = deque()
        if info.cycles == 1:
            cycle = _find_cycle(comp[0], adj)
            for node, edge in cycle:
                if node[0] == "v":
                    a = edge // g.k
                    x[node[1]] = 1 ^ L[edge] ^ sharp[a]
            for node, _ in cycle:
                if node[0] == "v":
                    queue.append(node[1])
            for node, _ in cycle:
                if node[0] == "c" and node[1] not in processed:
                    process_clause(node[1], queue)
        else:
            root = info.variables[int(rng.integers(len(info.variables)))]
            x[root] = int(rng.integers(2))
            queue.append(root)
        spread(queue)

    result = tuple(int(b) for b in x)  # type: ignore[arg-type]
    for a in range(g.m):
        if len(set(evaluate_clause(g, L, result, a))) > 1:
            continue
        info = next((c for c in infos if a in c.clauses), None)
        if info is None:
            info = ComponentInfo(variables=tuple(sorted(set(g.clause(a)))), clauses=(a,), cycles=0)
        log.error("completion violated clause %d (component of %d variables)", a, len(info.variables))
        return CompletionResult(assignment=None, failed_component=info, components=infos)
    return CompletionResult(assignment=result, components=infos)

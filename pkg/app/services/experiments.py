# app/services/experiments.py
from __future__ import annotations
import heapq
import logging
import math
import time
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from mpmath import mp
from pydantic import BaseModel, Field
from scipy.stats import norm

from app.settings import settings
from app.services.errors import InputError, SolverBudgetError
from app.services.frozen import coarsen
from app.services.graphs import FactorGraph, MASK64, generate_graph, generate_literals
from app.services.naesat_core import count_solutions, decide_exists, expected_Z, sample_solution
from app.services.numeric import entropy

log = logging.getLogger(__name__)

REGIME = "qualitative"  # конечные n: теоремы асимптотические


# ====== Модели результатов ======

class SweepRow(BaseModel):
    k: int
    d: int
    n: int
    trials: int = Field(gt=0)
    sat: int
    budget_exhausted: int
    sat_fraction: Optional[float] = Field(default=None, ge=0, le=1)
    mean_Z: Optional[float] = None
    mean_free_density: Optional[float] = None
    wall_time: float = Field(default=0.0, exclude=True)


class SweepResult(BaseModel):
    schema_id: str = "naesat.sweep.v1"
    seed: int
    regime: str = REGIME
    rows: List[SweepRow]


class FreeDensityHistogram(BaseModel):
    schema_id: str = "naesat.density.v1"
    k: int
    d: int
    n: int
    trials: int
    seed: int
    samples: int
    empty: bool
    counts: List[int]
    edges: List[float]
    mean_beta: Optional[float] = None
    reference: float  # 2^{-(k+1)}
    reference_ratio: Optional[float] = None  # mean β · 2^{k+1}
    regime: str = REGIME
    wall_time: float = Field(default=0.0, exclude=True)


class SurvivalResult(BaseModel):
    schema_id: str = "naesat.survival.v1"
    k: int
    d: int
    n: int
    t_target: float
    trials: int
    seed: int
    theta: float
    steps_required: int
    survived: int
    probability: float
    log_bound: float  # n[H(t) + d(1/k - t) log(1 - ϑt)]
    bound: float
    regime: str = REGIME
    wall_time: float = Field(default=0.0, exclude=True)


class EZSample(BaseModel):
    schema_id: str = "naesat.ez.v1"
    k: int
    d: int
    n: int
    m: int
    trials: int
    seed: int
    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    confidence: float
    expected: float
    covered: bool
    regime: str = REGIME
    wall_time: float = Field(default=0.0, exclude=True)


# ====== Сиды ======

def trial_seeds(seed: int, row: int, trial: int, words: int = 3) -> Tuple[int, ...]:
    """Испытание t строки r: SeedSequence(seed, spawn_key=(r, t)).generate_state(words, uint64)."""
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=(int(row), int(trial)))
    return tuple(int(x) for x in ss.generate_state(words, np.uint64))


def _check_trials(trials: int) -> None:
    if trials <= 0:
        raise InputError(f"trials must be positive, got {trials}")


def _n_jobs(n_jobs: Optional[int]) -> int:
    return settings.n_jobs if n_jobs is None else int(n_jobs)


def _check_instance_sizes(n: int, d: int, k: int) -> None:
    if n < 1 or d < 1 or k < 3:
        raise InputError(f"need n ≥ 1, d ≥ 1, k ≥ 3; got n={n} d={d} k={k}")
    if (n * d) % k:
        raise InputError(f"n·d = {n * d} is not divisible by k = {k}")


# ====== Свип выполнимости ======

def _sweep_trial(
    k: int, d: int, n: int, seeds: Tuple[int, ...], node_budget: Optional[int], count_limit: int,
) -> Tuple[Optional[bool], Optional[int], Optional[Fraction]]:
    g = generate_graph(n, d, k, seeds[0])
    L = generate_literals(g, seeds[1])
    try:
        sat = decide_exists(g, L, node_budget=node_budget)
    except SolverBudgetError:
        return None, None, None
    if n > count_limit:
        return sat, None, None
    Z = count_solutions(g, L, limit_n=count_limit).Z
    beta = None
    if Z:
        x = sample_solution(g, L, seeds[2], limit_n=count_limit)
        beta = coarsen(g, L, x).beta
    return sat, Z, beta


def sat_sweep(
    k: int,
    d_list: Sequence[int],
    n: int,
    trials: int,
    seed: int,
    n_jobs: Optional[int] = None,
    node_budget: Optional[int] = None,
) -> SweepResult:
    """Доля выполнимых инстансов по каждому d; исчерпание бюджета учитывается в строке."""
    _check_trials(trials)
    for d in d_list:
        _check_instance_sizes(n, d, k)
    count_limit = settings.count_limit_n
    rows: List[SweepRow] = []
    for r, d in enumerate(d_list):
        started = time.perf_counter()
        results = Parallel(n_jobs=_n_jobs(n_jobs))(
            delayed(_sweep_trial)(k, d, n, trial_seeds(seed, r, t), node_budget, count_limit)
            for t in range(trials)
        )
        decided = [s for s, _, _ in results if s is not None]
        sat = sum(1 for s in decided if s)
        counts = [z for _, z, _ in results if z is not None]
        betas = [b for _, _, b in results if b is not None]
        row = SweepRow(
            k=k, d=d, n=n, trials=trials, sat=sat,
            budget_exhausted=trials - len(decided),
            sat_fraction=float(Fraction(sat, len(decided))) if decided else None,
            mean_Z=float(Fraction(sum(counts), len(counts))) if counts else None,
            mean_free_density=float(sum(betas, Fraction(0)) / len(betas)) if betas else None,
            wall_time=time.perf_counter() - started,
        )
        if row.budget_exhausted:
            log.warning("sweep k=%d d=%d: %d trials hit the node budget", k, d, row.budget_exhausted)
        log.info("sweep k=%d d=%d n=%d: sat %d/%d in %.2fs", k, d, n, sat, len(decided), row.wall_time)
        rows.append(row)
    return SweepResult(seed=seed, rows=rows)


# ====== Плотность свободных ======

def _density_trial(k: int, d: int, n: int, seeds: Tuple[int, ...], count_limit: int) -> Optional[Fraction]:
    g = generate_graph(n, d, k, seeds[0])
    L = generate_literals(g, seeds[1])
    x = sample_solution(g, L, seeds[2], limit_n=count_limit)
    if x is None:
        return None
    return coarsen(g, L, x).beta


def free_density_histogram(
    k: int, d: int, n: int, trials: int, seed: int, bins: int = 10, n_jobs: Optional[int] = None,
) -> FreeDensityHistogram:
    """β огрублённых равномерных решений против ориентира 2^{-(k+1)}."""
    _check_trials(trials)
    _check_instance_sizes(n, d, k)
    started = time.perf_counter()
    results = Parallel(n_jobs=_n_jobs(n_jobs))(
        delayed(_density_trial)(k, d, n, trial_seeds(seed, 0, t), settings.count_limit_n)
        for t in range(trials)
    )
    betas = [b for b in results if b is not None]
    counts, edges = np.histogram([float(b) for b in betas], bins=bins, range=(0.0, 1.0))
    reference = 2.0 ** -(k + 1)
    mean = sum(betas, Fraction(0)) / len(betas) if betas else None
    out = FreeDensityHistogram(
        k=k, d=d, n=n, trials=trials, seed=seed, samples=len(betas), empty=not betas,
        counts=[int(c) for c in counts], edges=[float(e) for e in edges],
        mean_beta=float(mean) if mean is not None else None,
        reference=reference,
        reference_ratio=float(mean * 2 ** (k + 1)) if mean is not None else None,
        wall_time=time.perf_counter() - started,
    )
    if out.empty:
        log.warning("density k=%d d=%d n=%d: no satisfiable instance among %d trials", k, d, n, trials)
    log.info("density k=%d d=%d n=%d: %d samples in %.2fs", k, d, n, out.samples, out.wall_time)
    return out


# ====== Выживание огрубления ======

def survival_theta(k: int) -> float:
    return min(1.0, 2 * k / (2 ** k - 2))


def coarsening_steps(k: int, d: int, n: int, seed: int) -> int:
    """
    Один прогон процесса удаления: из nd полуребер переменных случайно (и в случайном порядке)
    выбираются m потенциально форсирующих, каждое изначально форсирующее с вероятностью ϑ.
    Шаг берёт первую неосвобождённую переменную без оставшихся изначально форсирующих
    полуребер, удаляет её оставшиеся потенциально форсирующие полуребра и первые d - d_v
    среди оставшихся. Возвращает число шагов до остановки.
    """
    nd = n * d
    m = nd // k
    rng = np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
    pf = rng.permutation(nd)[:m]
    forcing = rng.random(m) < survival_theta(k)
    owner = [int(e) // d for e in pf]

    alive = [True] * m
    pf_of_var: List[List[int]] = [[] for _ in range(n)]
    forcing_left = [0] * n
    for a, v in enumerate(owner):
        pf_of_var[v].append(a)
        if forcing[a]:
            forcing_left[v] += 1

    freed = [False] * n
    heap = [v for v in range(n) if forcing_left[v] == 0]
    heapq.heapify(heap)
    cursor = 0

    def delete(a: int) -> None:
        alive[a] = False
        if forcing[a]:
            v = owner[a]
            forcing_left[v] -= 1
            if forcing_left[v] == 0 and not freed[v]:
                heapq.heappush(heap, v)

    steps = 0
    while heap:
        v = heapq.heappop(heap)
        if freed[v] or forcing_left[v]:
            continue
        freed[v] = True
        steps += 1
        mine = [a for a in pf_of_var[v] if alive[a]]
        for a in mine:
            delete(a)
        extra = d - len(mine)
        while extra > 0 and cursor < m:
            if alive[cursor]:
                delete(cursor)
                extra -= 1
            cursor += 1
    return steps


def survival_log_bound(k: int, d: int, n: int, t: float) -> float:
    """n[H(t) + d(1/k - t) log(1 - ϑt)]."""
    theta = mp.mpf(survival_theta(k))
    t = mp.mpf(t)
    if t == 0:
        return 0.0
    if theta * t >= 1:
        return float("-inf")
    return float(n * (entropy(t) + d * (mp.one / k - t) * mp.log(1 - theta * t)))


def simulate_coarsening_survival(
    k: int, d: int, n: int, t_target: float, trials: int, seed: int, n_jobs: Optional[int] = None,
) -> SurvivalResult:
    _check_trials(trials)
    _check_instance_sizes(n, d, k)
    if not 0 <= t_target <= 1:
        raise InputError(f"t_target must lie in [0, 1], got {t_target}")
    started = time.perf_counter()
    required = math.ceil(n * t_target)
    steps = Parallel(n_jobs=_n_jobs(n_jobs))(
        delayed(coarsening_steps)(k, d, n, trial_seeds(seed, 0, t, words=1)[0]) for t in range(trials)
    )
    survived = sum(1 for s in steps if s >= required)
    log_bound = survival_log_bound(k, d, n, t_target)
    out = SurvivalResult(
        k=k, d=d, n=n, t_target=t_target, trials=trials, seed=seed, theta=survival_theta(k),
        steps_required=required, survived=survived, probability=survived / trials,
        log_bound=log_bound, bound=math.exp(log_bound),
        wall_time=time.perf_counter() - started,
    )
    log.info("survival k=%d d=%d n=%d t=%s: %d/%d in %.2fs", k, d, n, t_target, survived, trials, out.wall_time)
    return out


# ====== Выборочное среднее Z ======

def _ez_trial(k: int, d: int, n: int, seeds: Tuple[int, ...], count_limit: int) -> int:
    if d == 0:
        g = FactorGraph(n=n, m=0, d=0, k=k, var_of_slot=())
    else:
        g = generate_graph(n, d, k, seeds[0])
    L = generate_literals(g, seeds[1])
    return count_solutions(g, L, limit_n=count_limit).Z


def sample_EZ(
    k: int, d: int, n: int, trials: int, seed: int, confidence: float = 0.95, n_jobs: Optional[int] = None,
) -> EZSample:
    """Выборочное среднее Z и двусторонний нормальный доверительный интервал против E Z."""
    _check_trials(trials)
    if d:
        _check_instance_sizes(n, d, k)
    elif n < 1 or k < 1:
        raise InputError("need n ≥ 1 and k ≥ 1")
    if not 0 < confidence < 1:
        raise InputError(f"confidence must lie in (0, 1), got {confidence}")
    started = time.perf_counter()
    zs = Parallel(n_jobs=_n_jobs(n_jobs))(
        delayed(_ez_trial)(k, d, n, trial_seeds(seed, 0, t, words=2), settings.count_limit_n)
        for t in range(trials)
    )
    m = n * d // k
    mean = Fraction(sum(zs), trials)
    if trials > 1:
        var = sum((Fraction(z) - mean) ** 2 for z in zs) / (trials - 1)
        se = math.sqrt(var / trials)
    else:
        se = 0.0
    z_crit = float(norm.ppf(1 - (1 - confidence) / 2))
    lo, hi = float(mean) - z_crit * se, float(mean) + z_crit * se
    expected = float(expected_Z(n, m, k).exact)
    out = EZSample(
        k=k, d=d, n=n, m=m, trials=trials, seed=seed, mean=float(mean), std_error=se,
        ci_low=lo, ci_high=hi, confidence=confidence, expected=expected,
        covered=lo <= expected <= hi, wall_time=time.perf_counter() - started,
    )
    log.info("ez k=%d d=%d n=%d: mean %.6g vs %.6g in %.2fs", k, d, n, out.mean, expected, out.wall_time)
    return out

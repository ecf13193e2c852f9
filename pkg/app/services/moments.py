# app/services/moments.py
from __future__ import annotations
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from mpmath import mp, mpf

from app.services.auxiliary import SPINS, SPIN_INDEX, clause_factor, flip_spin
from app.services.errors import ConsistencyError, DomainError, InputError, SizeGuardError
from app.services.frozen import TruncationPolicy
from app.services.numeric import as_tol, bisect_root, entropy, log2, powr, working_bits, xlogx
from app.services.recursions import (
    CONSISTENCY_FACTOR,
    MessageLaw,
    ScalarState,
    fixed_point_law,
    iterate_qv,
    regime_of,
)

log = logging.getLogger(__name__)

D_STAR_TOL = mpf("1e-12")
D_STAR_MAX_ITER = 200

_FLIP_INDEX = tuple(SPIN_INDEX[flip_spin(s)] for s in SPINS)


def _check_k(k: int) -> None:
    if int(k) != k or k < 3:
        raise InputError(f"k must be an integer ≥ 3, got {k}")


def _unit_interval(name: str, x) -> mpf:
    x = mp.mpf(x)
    if not 0 < x < 1:
        raise DomainError(f"{name} must lie in (0, 1), got {mp.nstr(x, 12)}")
    return x


# ====== Первый момент и рабочие границы ======

@dataclass
class Thresholds:
    d_fm: mpf
    d_lbd: mpf
    d_ubd: mpf


def phi_first(k: int, d) -> mpf:
    """Φ_k(d) = log 2 + (d/k) log(1 - 2/2^k)."""
    _check_k(k)
    return log2() + mp.mpf(d) / k * mp.log(1 - mp.ldexp(mp.one, 1 - k))


def thresholds(k: int) -> Thresholds:
    _check_k(k)
    return Thresholds(
        d_fm=-k * log2() / mp.log(1 - mp.ldexp(mp.one, 1 - k)),
        d_lbd=(mp.ldexp(mp.one, k - 1) - 2) * k * log2(),
        d_ubd=mp.ldexp(mp.one, k - 1) * k * log2(),
    )


# ====== Второй момент: ā(α) ======

def _theta(k: int) -> mpf:
    return mp.mpf(2) / (mp.ldexp(mp.one, k) - 2)


def _gamma0(k: int, alpha: mpf) -> mpf:
    return 1 - alpha ** k - (1 - alpha) ** k


def gamma_star(k: int, alpha) -> mpf:
    """Внутренний максимизатор γ* = γ₀(1-ϑ)/(1-ϑγ₀)."""
    _check_k(k)
    alpha = _unit_interval("alpha", alpha)
    g0 = _gamma0(k, alpha)
    th = _theta(k)
    return g0 * (1 - th) / (1 - th * g0)


def abar(k: int, d, alpha) -> mpf:
    """ā(α) = H(α) + (d/k) log(1 - γ₀ϑ)."""
    _check_k(k)
    alpha = _unit_interval("alpha", alpha)
    return entropy(alpha) + mp.mpf(d) / k * mp.log(1 - _gamma0(k, alpha) * _theta(k))


def a_full(k: int, d, alpha, gamma) -> mpf:
    """𝐚(α, γ) = H(α) + (d/k)[-H(γ|γ₀) + γ log(1-ϑ)]."""
    _check_k(k)
    alpha = _unit_interval("alpha", alpha)
    gamma = _unit_interval("gamma", gamma)
    g0 = _gamma0(k, alpha)
    relent = xlogx(gamma) - gamma * mp.log(g0) + xlogx(1 - gamma) - (1 - gamma) * mp.log(1 - g0)
    return entropy(alpha) + mp.mpf(d) / k * (-relent + gamma * mp.log(1 - _theta(k)))


# ====== Экспонента плотности свободных ======

def _free_density_weights(k: int, beta: mpf) -> List[mpf]:
    p = [mp.binomial(k, j) * beta ** j * (1 - beta) ** (k - j) for j in range(k + 1)]
    p[0] *= 1 - mp.ldexp(mp.one, 1 - k)
    p[1] *= 1 - mp.ldexp(mp.one, 2 - k)
    return p


def free_density_tilt(k: int, beta, bits: Optional[int] = None) -> Tuple[mpf, mpf]:
    """
    Наклон u из Σ j p_j u^j / Σ p_j u^j = kβ (монотонно по u) и c = Σ p_j u^j.
    Скобка расширяется удвоением, затем бисекция.
    """
    _check_k(k)
    with mp.workprec(working_bits(k, bits)):
        return _solve_tilt(k, mp.mpf(beta))


def _solve_tilt(k: int, beta: mpf) -> Tuple[mpf, mpf]:
    if not 0 < beta < mp.one / k:
        raise DomainError(f"beta must lie in (0, 1/k), got {mp.nstr(beta, 12)}")
    p = _free_density_weights(k, beta)
    target = k * beta

    def excess(u: mpf) -> mpf:
        powers = [p[j] * u ** j for j in range(k + 1)]
        return sum(j * w for j, w in enumerate(powers)) / sum(powers) - target

    lo, hi = mp.mpf("0.5"), mp.mpf(2)
    for _ in range(200):
        if excess(lo) <= 0:
            break
        lo /= 2
    for _ in range(200):
        if excess(hi) >= 0:
            break
        hi *= 2
    u, _ = bisect_root(excess, lo, hi, x_tol=mp.eps * 4)
    c = sum(p[j] * u ** j for j in range(k + 1))
    return u, c


def free_density_exponent(k: int, d, beta, bits: Optional[int] = None) -> mpf:
    """𝐲(β) = (1-β) log 2 + H(β) + (d/k)[log c - kβ log u]."""
    _check_k(k)
    with mp.workprec(working_bits(k, bits)):
        beta = mp.mpf(beta)
        u, c = _solve_tilt(k, beta)
        return (1 - beta) * log2() + entropy(beta) + mp.mpf(d) / k * (mp.log(c) - k * beta * mp.log(u))


# ====== Эмпирическая мера по классам ======

@dataclass
class SpinClass:
    """Класс перестановок: счётчики спинов, кратность, вес фактора и масса класса."""
    counts: Tuple[int, ...]  # по SPINS
    mult: int
    psi: mpf
    mass: mpf

    @property
    def size(self) -> int:
        return sum(self.counts)


def _spin_counts(pairs: Sequence[Tuple[str, int]]) -> Tuple[int, ...]:
    out = [0] * len(SPINS)
    for spin, c in pairs:
        out[SPIN_INDEX[spin]] += c
    return tuple(out)


def _weight(counts: Sequence[int], h: Sequence[mpf]) -> mpf:
    w = mp.one
    for c, x in zip(counts, h):
        if c:
            w *= powr(x, c)
    return w


@dataclass
class EmpiricalMeasure:
    k: int
    d: int
    variable: List[SpinClass]
    clause: List[SpinClass]
    clause_zero: List[SpinClass]  # мера клауз при нулевых литералах, для M̂⁰
    vh: Tuple[mpf, ...]
    zdot_bar: mpf
    zhat_bar: mpf
    z_bar: mpf
    truncated: bool
    bits: int
    identity_residual: mpf = field(default_factory=lambda: mp.zero)

    def variable_marginal(self) -> Tuple[mpf, ...]:
        return _marginal(self.variable, self.d)

    def clause_marginal(self) -> Tuple[mpf, ...]:
        return _marginal(self.clause, self.k)

    def relabeled(self) -> "EmpiricalMeasure":
        """0 <-> 1 во всех спинах."""
        def flip(classes: List[SpinClass]) -> List[SpinClass]:
            return [
                SpinClass(counts=tuple(c.counts[i] for i in _FLIP_INDEX), mult=c.mult, psi=c.psi, mass=c.mass)
                for c in classes
            ]
        return EmpiricalMeasure(
            k=self.k, d=self.d,
            variable=flip(self.variable), clause=flip(self.clause), clause_zero=flip(self.clause_zero),
            vh=tuple(self.vh[i] for i in _FLIP_INDEX),
            zdot_bar=self.zdot_bar, zhat_bar=self.zhat_bar, z_bar=self.z_bar,
            truncated=self.truncated, bits=self.bits, identity_residual=self.identity_residual,
        )


def _marginal(classes: Sequence[SpinClass], size: int) -> Tuple[mpf, ...]:
    acc = [mp.zero] * len(SPINS)
    for c in classes:
        for i, n in enumerate(c.counts):
            if n:
                acc[i] += c.mass * n
    return tuple(a / size for a in acc)


def _integer_d(d) -> int:
    dd = mp.mpf(d)
    if dd != mp.floor(dd) or dd < 2:
        raise InputError(f"the empirical measure needs an integer d ≥ 2, got {mp.nstr(dd, 15)}")
    return int(dd)


def _variable_classes(d: int, hhat: Dict[str, mpf], cutoff: mpf) -> Tuple[List[SpinClass], mpf, bool]:
    """
    supp ψ̇ по классам: ff^d; (fx, xf^{d-1}) с кратностью d; xx^j xf^{d-j}, j ≥ 2, с кратностью C(d, j).
    Хвост по j за модой отбрасывается, когда масса класса меньше cutoff.
    """
    zdot_bar = powr(hhat["ff"], d)
    for x in "01":
        r, s, t = hhat[x + x], hhat[x + "f"], hhat["f" + x]
        zdot_bar += d * t * powr(s, d - 1) + powr(r + s, d) - powr(s, d) - d * r * powr(s, d - 1)

    one = mp.one
    classes = [SpinClass(counts=_spin_counts([("ff", d)]), mult=1, psi=one, mass=powr(hhat["ff"], d) / zdot_bar)]
    truncated = False
    for x in "01":
        xx, xf, fx = x + x, x + "f", "f" + x
        r, s, t = hhat[xx], hhat[xf], hhat[fx]
        classes.append(SpinClass(
            counts=_spin_counts([(fx, 1), (xf, d - 1)]), mult=d, psi=one,
            mass=d * t * powr(s, d - 1) / zdot_bar,
        ))
        if r == 0:
            continue
        mult = d * (d - 1) // 2
        prev = mp.zero
        for j in range(2, d + 1):
            if j > 2:
                mult = mult * (d - j + 1) // j
            mass = mult * powr(r, j) * powr(s, d - j) / zdot_bar
            if mass < prev and mass < cutoff:
                truncated = True
                break
            classes.append(SpinClass(counts=_spin_counts([(xx, j), (xf, d - j)]), mult=mult, psi=one, mass=mass))
            prev = mass
    return classes, zdot_bar, truncated


def _clause_classes_averaged(k: int, hdot: Dict[str, mpf]) -> Tuple[List[SpinClass], mpf]:
    """
    ψ̂ после усреднения по литералам зависит только от проекции Π:
      rf^k: (2^k-2-2k)/2^k; одна буква из {rr, fr} и rf^{k-1}: 2/2^k;
      ff и rf^{k-1}: (2^k-4)/2^k; ff^{≥2} и rf^{rest}: 1.
    Буквы rf дополнительно разбиваются на 0f/1f.
    """
    p = mp.ldexp(mp.one, -k)
    raw: List[Tuple[Tuple[int, ...], int, mpf]] = []
    for j in range(k + 1):
        raw.append((_spin_counts([("0f", j), ("1f", k - j)]), math.comb(k, j), (2 ** k - 2 - 2 * k) * p))
    for special in ("00", "11", "f0", "f1"):
        for j in range(k):
            raw.append((_spin_counts([(special, 1), ("0f", j), ("1f", k - 1 - j)]), k * math.comb(k - 1, j), 2 * p))
    for j in range(k):
        raw.append((_spin_counts([("ff", 1), ("0f", j), ("1f", k - 1 - j)]), k * math.comb(k - 1, j), (2 ** k - 4) * p))
    for i in range(2, k + 1):
        for j in range(k - i + 1):
            raw.append((_spin_counts([("ff", i), ("0f", j), ("1f", k - i - j)]),
                        math.comb(k, i) * math.comb(k - i, j), mp.one))
    return _normalize_classes(raw, hdot)


def _clause_classes_zero(k: int, hdot: Dict[str, mpf]) -> Tuple[List[SpinClass], mpf]:
    """supp ψ̂° при L = 0; все веса равны 1."""
    raw: List[Tuple[Tuple[int, ...], int, mpf]] = []
    one = mp.one
    for special, rest in (("00", "1f"), ("f0", "1f"), ("11", "0f"), ("f1", "0f")):
        raw.append((_spin_counts([(special, 1), (rest, k - 1)]), k, one))
    for j in range(2, k - 1):
        raw.append((_spin_counts([("0f", j), ("1f", k - j)]), math.comb(k, j), one))
    for j in range(1, k - 1):
        raw.append((_spin_counts([("ff", 1), ("0f", j), ("1f", k - 1 - j)]), k * math.comb(k - 1, j), one))
    for i in range(2, k + 1):
        for j in range(k - i + 1):
            raw.append((_spin_counts([("ff", i), ("0f", j), ("1f", k - i - j)]),
                        math.comb(k, i) * math.comb(k - i, j), one))
    return _normalize_classes(raw, hdot)


def _normalize_classes(raw, hdot: Dict[str, mpf]) -> Tuple[List[SpinClass], mpf]:
    h = tuple(hdot[s] for s in SPINS)
    weights = [mult * psi * _weight(counts, h) for counts, mult, psi in raw]
    z = sum(weights)
    classes = [
        SpinClass(counts=counts, mult=mult, psi=psi, mass=w / z)
        for (counts, mult, psi), w in zip(raw, weights)
        if w > 0
    ]
    return classes, z


def empirical_from_law(k: int, d, law: MessageLaw, tol=None) -> EmpiricalMeasure:
    """
    ż̄ ḣ̄(σ̇) = ψ̇(σ̇) Π ĥ_{σ_i},  ẑ̄ ĥ̄(σ̂) = ψ̂(σ̂) Π ḣ_{σ_i},  z̄ v̄h(σ) = ḣ_σ ĥ_σ;
    проверяется тождество z̄ = ż̄/ż = ẑ̄/ẑ.
    """
    _check_k(k)
    d_int = _integer_d(d)
    bits = law.bits
    with mp.workprec(bits):
        hdot = dict(zip(SPINS, law.hdot))
        hhat = dict(zip(SPINS, law.hhat))
        cutoff = mp.ldexp(mp.one, -(bits + 32))
        variable, zdot_bar, truncated = _variable_classes(d_int, hhat, cutoff)
        clause, zhat_bar = _clause_classes_averaged(k, hdot)
        clause_zero, _ = _clause_classes_zero(k, hdot)
        prod = [hdot[s] * hhat[s] for s in SPINS]
        z_bar = sum(prod)
        vh = tuple(x / z_bar for x in prod)

        identity = max(abs(zdot_bar / law.zdot / z_bar - 1), abs(zhat_bar / law.zhat / z_bar - 1))
        bound = as_tol(k, tol) * CONSISTENCY_FACTOR
        if identity > bound:
            raise ConsistencyError(
                f"z̄ = ż̄/ż = ẑ̄/ẑ fails: relative defect {mp.nstr(identity, 5)} > {mp.nstr(bound, 5)}"
            )
        if truncated:
            log.debug("empirical measure k=%d d=%d: variable tail below 2^-%d dropped", k, d_int, bits + 32)
        return EmpiricalMeasure(
            k=k, d=d_int, variable=variable, clause=clause, clause_zero=clause_zero, vh=vh,
            zdot_bar=zdot_bar, zhat_bar=zhat_bar, z_bar=z_bar, truncated=truncated, bits=bits,
            identity_residual=identity,
        )


# ====== Функционал Бете ======

@dataclass
class RatePoint:
    value: mpf
    explicit: mpf  # log ż̄ + (d/k) log ẑ̄ - d log z̄
    zdot_bar: mpf
    zhat_bar: mpf
    z_bar: mpf
    marginal_residual: mpf
    log_prefactor: Optional[mpf] = None
    dimension: Optional[int] = None
    regime: str = "proven"


def _class_entropy(classes: Sequence[SpinClass]) -> mpf:
    """Σ по конфигурациям h log(ψ/h), свёрнутая по классам."""
    total = mp.zero
    for c in classes:
        if c.mass > 0:
            total += c.mass * (mp.log(c.psi) + mp.log(c.mult) - mp.log(c.mass))
    return total


def _log_product(classes: Sequence[SpinClass], scale: mpf) -> mpf:
    """log Π по конфигурациям (scale·h)."""
    return sum((c.mult * (mp.log(scale * c.mass) - mp.log(c.mult)) for c in classes), mp.zero)


def phi_bethe(k: int, d, measure: EmpiricalMeasure, tol=None) -> RatePoint:
    """
    Φ̄ = Σ ḣ̄ log(ψ̇/ḣ̄) + (d/k) Σ ĥ̄ log(ψ̂/ĥ̄) - d Σ v̄h log(1/v̄h).
    Префактор 𝒫 считается только для меры без отброшенного хвоста.
    """
    _check_k(k)
    with mp.workprec(measure.bits):
        d = mp.mpf(d)
        vm = measure.variable_marginal()
        cm = measure.clause_marginal()
        residual = max(max(abs(a - b) for a, b in zip(vm, measure.vh)), max(abs(a - b) for a, b in zip(cm, measure.vh)))
        bound = as_tol(k, tol) * CONSISTENCY_FACTOR
        if residual > bound:
            raise ConsistencyError(f"marginals disagree with v̄h by {mp.nstr(residual, 5)} > {mp.nstr(bound, 5)}")

        edge = sum((xlogx(x) for x in measure.vh), mp.zero)
        value = _class_entropy(measure.variable) + d / k * _class_entropy(measure.clause) + d * edge
        explicit = mp.log(measure.zdot_bar) + d / k * mp.log(measure.zhat_bar) - d * mp.log(measure.z_bar)

        point = RatePoint(
            value=value, explicit=explicit,
            zdot_bar=measure.zdot_bar, zhat_bar=measure.zhat_bar, z_bar=measure.z_bar,
            marginal_residual=residual, regime=regime_of(k),
        )
        if not measure.truncated and min(measure.vh) > 0:
            s_dot = sum(c.mult for c in measure.variable)
            s_hat = sum(c.mult for c in measure.clause)
            point.dimension = s_dot + s_hat - len(SPINS) - 1
            point.log_prefactor = (
                sum((mp.log(d * x) for x in measure.vh), mp.zero)
                - mp.log(k)
                - _log_product(measure.variable, mp.one)
                - _log_product(measure.clause, d / k)
            ) / 2
        return point


# ====== Явные формулы в неподвижной точке ======

@dataclass
class ExplicitNormalizers:
    zdot_bar: mpf
    zhat_bar: mpf
    z_bar: mpf
    zdot_bar_rf: mpf


def explicit_normalizers(state: ScalarState) -> ExplicitNormalizers:
    """ż̄ = (2-v^d)/(4-v)^d, ẑ̄ = (1+q_f v_r)/((2+q_f)^k (1+v_r)), z̄ = (1+q_f v_r)/((2+q_f)(4-v))."""
    with mp.workprec(state.bits):
        k, d, v, qf, vr = state.k, state.d, state.v, state.q_free, state.v_rig
        vd = powr(v, d)
        return ExplicitNormalizers(
            zdot_bar=(2 - vd) / powr(4 - v, d),
            zhat_bar=(1 + qf * vr) / ((2 + qf) ** k * (1 + vr)),
            z_bar=(1 + qf * vr) / ((2 + qf) * (4 - v)),
            zdot_bar_rf=(2 - vd) / powr(2, d),
        )


def explicit_vh(state: ScalarState) -> Tuple[mpf, ...]:
    """v̄h в порядке SPINS; доля ff равна q_f v/(1+q_f v_r)."""
    with mp.workprec(state.bits):
        q, v, qf, vr = state.q, state.v, state.q_free, state.v_rig
        z = 2 * (1 + qf * vr)
        half = (q * v, q * vr, 2 * qf * vr)
        return tuple(x / z for x in half + half + (2 * qf * v,))


@dataclass
class FreeDensityCheck:
    value: mpf  # ḣ̄(ff^d)
    beta_max: mpf
    within_cap: bool


def fixed_point_free_density(state: ScalarState) -> FreeDensityCheck:
    """ḣ̄(ff^d) = v^d/(2-v^d) против β_max = 7/2^k."""
    with mp.workprec(state.bits):
        vd = powr(state.v, state.d)
        value = vd / (2 - vd)
        cap = TruncationPolicy.for_k(state.k).beta_max
        beta_max = mp.mpf(cap.numerator) / cap.denominator
        return FreeDensityCheck(value=value, beta_max=beta_max, within_cap=value <= beta_max)


def phi_star_of_state(state: ScalarState) -> mpf:
    """Φ* = log 2 - log(2-q) - d(1-1/k-1/d) log[1-2(q/2)^k] + (d-1) log[1-(q/2)^{k-1}]."""
    with mp.workprec(state.bits):
        k, d, q = state.k, state.d, state.q
        half = q / 2
        return (
            log2() - mp.log(2 - q)
            - d * (1 - mp.one / k - 1 / d) * mp.log(1 - 2 * half ** k)
            + (d - 1) * mp.log(1 - half ** (k - 1))
        )


def phi_star(k: int, d, tol=None, bits: Optional[int] = None) -> mpf:
    _check_k(k)
    return phi_star_of_state(iterate_qv(k, d, tol=tol, bits=bits))


def frozen_gap(k: int, d, tol=None, bits: Optional[int] = None) -> mpf:
    """Φ - Φ* - q_f; мало в масштабе k²/4^k."""
    _check_k(k)
    state = iterate_qv(k, d, tol=tol, bits=bits)
    with mp.workprec(state.bits):
        return phi_first(k, d) - phi_star_of_state(state) - state.q_free


def find_d_star(k: int, tol=None, bits: Optional[int] = None, d_tol=None) -> mpf:
    """Бисекция Φ*(d) на [d_lbd, d_ubd]; на концах обязана быть смена знака."""
    _check_k(k)
    bits = working_bits(k, bits)
    with mp.workprec(bits):
        th = thresholds(k)
        x_tol = D_STAR_TOL if d_tol is None else mp.mpf(d_tol)
        root, iterations = bisect_root(
            lambda d: phi_star(k, d, tol=tol, bits=bits),
            th.d_lbd, th.d_ubd, x_tol=x_tol, max_iter=D_STAR_MAX_ITER,
        )
        log.info("find_d_star k=%d: d*=%s after %d bisection steps", k, mp.nstr(root, 20), iterations)
        if regime_of(k) != "proven":
            log.warning("k=%d lies outside the proven regime; d* is reported as qualitative", k)
        return root


def d_star_asymptotic(k: int) -> mpf:
    """(2^{k-1} - 1/2 - 1/(4 log 2)) k log 2."""
    _check_k(k)
    return (mp.ldexp(mp.one, k - 1) - mp.mpf(1) / 2 - 1 / (4 * log2())) * k * log2()


# ====== Парная модель ======

@dataclass
class PairClauseTerm:
    log_zhat_pair: mpf
    expected_log: mpf  # E_{ĥ̄₂} Σ_i log(ḣ⊗ḣ)
    value: mpf  # Σ ĥ̄₂ log(ψ̃/ĥ̄₂)


def _multinomial(parts: Sequence[int]) -> int:
    out = 1
    total = 0
    for p in parts:
        total += p
        out *= math.comb(total, p)
    return out


def _literal_split_sums(k: int, law: MessageLaw) -> Tuple[List[mpf], List[mpf]]:
    """
    Z[ℓ] = Σ_τ ψ̂°(τ) Π_{i≤ℓ} ḣ(¬τ_i) Π_{i>ℓ} ḣ(τ_i); E[ℓ]: та же сумма с весом Σ_i log ḣ(σ_i).
    Считается по классам ψ̂° с разбиением счётчиков между первыми ℓ слотами и остальными.
    """
    h = law.hdot
    hflip = tuple(h[i] for i in _FLIP_INDEX)
    logh = [mp.log(x) if x > 0 else mp.ninf for x in h]
    loghf = [logh[i] for i in _FLIP_INDEX]
    zero_classes, _ = _clause_classes_zero(k, dict(zip(SPINS, h)))

    Z = [mp.zero] * (k + 1)
    E = [mp.zero] * (k + 1)
    for c in zero_classes:
        letters = [i for i, n in enumerate(c.counts) if n]
        for split in itertools.product(*(range(c.counts[i] + 1) for i in letters)):
            ell = sum(split)
            rest = [c.counts[i] - a for i, a in zip(letters, split)]
            ways = _multinomial(split) * _multinomial(rest)
            w = mp.mpf(ways)
            s_log = mp.zero
            for i, a, b in zip(letters, split, rest):
                if a:
                    w *= powr(hflip[i], a)
                    s_log += a * loghf[i]
                if b:
                    w *= powr(h[i], b)
                    s_log += b * logh[i]
            if w == 0:
                continue
            Z[ell] += w
            E[ell] += w * s_log
    return Z, E


def pair_clause_term(k: int, law: MessageLaw) -> PairClauseTerm:
    """
    ψ̃(σ¹, σ²) = 2^{-k} Σ_L ψ̂°(σ¹⊕L) ψ̂°(σ²⊕L). Сумма по L сводится к числу ℓ единиц:
    ẑ̄₂ = 2^{-k} Σ_ℓ C(k, ℓ) (Z[ℓ])².
    """
    _check_k(k)
    with mp.workprec(law.bits):
        Z, E = _literal_split_sums(k, law)
        scale = mp.ldexp(mp.one, -k)
        z_pair = scale * sum(math.comb(k, ell) * Z[ell] ** 2 for ell in range(k + 1))
        expected = 2 * scale * sum(math.comb(k, ell) * Z[ell] * E[ell] for ell in range(k + 1)) / z_pair
        log_z = mp.log(z_pair)
        return PairClauseTerm(log_zhat_pair=log_z, expected_log=expected, value=log_z - expected)


def diagonal_clause_term(k: int, law: MessageLaw) -> PairClauseTerm:
    """
    Клаузный член Φ̃ на диагонали σ¹ = σ²: ψ̃(σ, σ) = 2^{-k} Σ_L ψ̂°(σ⊕L),
    парное сообщение ḣ(σ) на диагональных спинах. Сумма линейна по Z[ℓ].
    """
    _check_k(k)
    with mp.workprec(law.bits):
        Z, E = _literal_split_sums(k, law)
        scale = mp.ldexp(mp.one, -k)
        z_diag = scale * sum(math.comb(k, ell) * Z[ell] for ell in range(k + 1))
        expected = scale * sum(math.comb(k, ell) * E[ell] for ell in range(k + 1)) / z_diag
        log_z = mp.log(z_diag)
        return PairClauseTerm(log_zhat_pair=log_z, expected_log=expected, value=log_z - expected)


def pair_clause_oracle(k: int, law: MessageLaw, max_k: int = 4) -> PairClauseTerm:
    """Прямой перебор M^k × M^k × {0,1}^k по носителю ψ̂°(·⊕L)."""
    if k > max_k:
        raise SizeGuardError(f"k={k} exceeds the pair oracle limit {max_k}")
    with mp.workprec(law.bits):
        h = dict(zip(SPINS, law.hdot))
        z_pair = mp.zero
        acc = mp.zero
        for L in itertools.product((0, 1), repeat=k):
            support = []
            for spins in itertools.product(SPINS, repeat=k):
                if clause_factor(spins, L):
                    w = mp.one
                    s_log = mp.zero
                    for s in spins:
                        w *= h[s]
                        s_log += mp.log(h[s])
                    if w > 0:
                        support.append((w, s_log))
            for w1, l1 in support:
                for w2, l2 in support:
                    z_pair += w1 * w2
                    acc += w1 * w2 * (l1 + l2)
        scale = mp.ldexp(mp.one, -k)
        z_pair *= scale
        expected = acc * scale / z_pair
        log_z = mp.log(z_pair)
        return PairClauseTerm(log_zhat_pair=log_z, expected_log=expected, value=log_z - expected)


@dataclass
class PairRate:
    product: mpf  # Φ̃(h̄*⊗h̄*)
    identical: mpf  # Φ̃(h̄^x)
    phi_star: mpf
    zhat_pair_defect: mpf  # |ẑ̄₂/ẑ̄² - 1|
    diagonal_defect: mpf  # |ẑ̄^x/ẑ̄ - 1|
    regime: str


def pair_rate(k: int, d, tol=None, bits: Optional[int] = None) -> PairRate:
    """
    Φ̃ на произведении: две копии переменных и рёбер плюс клаузы, связанные общими литералами.
    На диагонали σ¹ = σ² ψ̇⊗ψ̇ = ψ̇, рёбра входят один раз, клаузы идут через ψ̃(σ, σ).
    """
    _check_k(k)
    state, law = fixed_point_law(k, d, tol=tol, bits=bits)
    measure = empirical_from_law(k, d, law, tol=tol)
    with mp.workprec(law.bits):
        dd = mp.mpf(d)
        bound = as_tol(k, tol) * CONSISTENCY_FACTOR
        term = pair_clause_term(k, law)
        defect = abs(mp.exp(term.log_zhat_pair - 2 * mp.log(measure.zhat_bar)) - 1)
        if defect > bound:
            raise ConsistencyError(f"ẑ̄₂ differs from ẑ̄² by {mp.nstr(defect, 5)}")
        diag = diagonal_clause_term(k, law)
        diag_defect = abs(mp.exp(diag.log_zhat_pair - mp.log(measure.zhat_bar)) - 1)
        if diag_defect > bound:
            raise ConsistencyError(f"diagonal ẑ̄ differs from ẑ̄ by {mp.nstr(diag_defect, 5)}")

        variable = _class_entropy(measure.variable)
        edge = sum((xlogx(x) for x in measure.vh), mp.zero)
        product = 2 * variable + dd / k * term.value + 2 * dd * edge
        identical = variable + dd / k * diag.value + dd * edge
        return PairRate(
            product=product, identical=identical, phi_star=phi_star_of_state(state),
            zhat_pair_defect=defect, diagonal_defect=diag_defect, regime=regime_of(k),
        )

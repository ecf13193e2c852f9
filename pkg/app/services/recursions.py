# app/services/recursions.py
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from mpmath import mp, mpf

from app.settings import settings
from app.services.auxiliary import PROJECTION, RF_SPINS, SPINS, flip_spin
from app.services.errors import ConsistencyError, DomainError, InputError, NonConvergenceError
from app.services.numeric import as_tol, powr, working_bits

log = logging.getLogger(__name__)

PAIR_LETTERS: Tuple[str, ...] = ("00", "01", "0f", "10", "11", "1f", "f0", "f1", "ff")

# допуск на невязку уравнений Бете относительно допуска скалярной итерации
CONSISTENCY_FACTOR = 2 ** 10


def regime_of(k: int) -> str:
    return "proven" if k >= settings.proven_regime_k else "qualitative"


def _check_kd(k: int, d) -> None:
    if int(k) != k or k < 3:
        raise InputError(f"k must be an integer ≥ 3, got {k}")
    if mp.mpf(d) <= 1:
        raise InputError(f"d must exceed 1, got {d}")


# ====== Скалярные отображения ======

def q_map(k: int, d, v) -> mpf:
    """q_{d-1}(v) = (2 - 2v^{d-1}) / (2 - v^{d-1})."""
    w = powr(v, mp.mpf(d) - 1)
    return (2 - 2 * w) / (2 - w)


def v_map(k: int, q) -> mpf:
    """v_{k-1}(q) = (1 - 2Q) / (1 - Q), Q = (q/2)^{k-1}."""
    Q = (mp.mpf(q) / 2) ** (k - 1)
    return (1 - 2 * Q) / (1 - Q)


@dataclass
class ScalarState:
    k: int
    d: mpf
    q: mpf
    v: mpf
    q_free: mpf
    v_rig: mpf
    Q: mpf
    residual: mpf
    iterations: int
    converged: bool
    bits: int
    tol: mpf

    @property
    def regime(self) -> str:
        return regime_of(self.k)


def _state(k: int, d, q, iterations: int, converged: bool, bits: int, tol) -> ScalarState:
    v = v_map(k, q)
    return ScalarState(
        k=k, d=mp.mpf(d), q=q, v=v,
        q_free=1 - q, v_rig=1 - v, Q=(q / 2) ** (k - 1),
        residual=abs(q - q_map(k, d, v)),
        iterations=iterations, converged=converged, bits=bits, tol=tol,
    )


def iterate_qv(
    k: int,
    d,
    q0=None,
    tol=None,
    max_iter: Optional[int] = None,
    bits: Optional[int] = None,
) -> ScalarState:
    """Итерация q ↦ q_{d-1}(v_{k-1}(q)) от q0 = 1; сжатие порядка k²/2^k."""
    _check_kd(k, d)
    bits = working_bits(k, bits)
    max_iter = settings.max_iter if max_iter is None else int(max_iter)
    with mp.workprec(bits):
        d = mp.mpf(d)
        tol = as_tol(k, tol)
        q = mp.one if q0 is None else mp.mpf(q0)
        if not 0 <= q <= 1:
            raise DomainError(f"q0 must lie in [0, 1], got {mp.nstr(q, 10)}")
        for it in range(1, max_iter + 1):
            q_new = q_map(k, d, v_map(k, q))
            step = abs(q_new - q)
            q = q_new
            if step < tol:
                state = _state(k, d, q, it, True, bits, tol)
                if state.residual < tol:
                    log.info("iterate_qv k=%d d=%s: %d steps, residual %s",
                             k, mp.nstr(d, 12), it, mp.nstr(state.residual, 5))
                    return state
    raise NonConvergenceError(f"iterate_qv did not converge in {max_iter} steps (k={k}, d={mp.nstr(d, 12)})")


def d_of_q(k: int, q, bits: Optional[int] = None) -> mpf:
    """Обратная функция: d = 1 + log(2(1-q)/(2-q)) / log v_{k-1}(q)."""
    if int(k) != k or k < 3:
        raise InputError(f"k must be an integer ≥ 3, got {k}")
    bits = working_bits(k, bits)
    with mp.workprec(bits):
        q = mp.mpf(q)
        if not 0 < q < 1:
            raise DomainError(f"d_of_q needs 0 < q < 1, got {mp.nstr(q, 12)}")
        w = 2 * (1 - q) / (2 - q)
        v = v_map(k, q)
        if not (0 < w < 1 and 0 < v < 1):
            raise DomainError(f"log of a non-positive or unit argument at q={mp.nstr(q, 12)}")
        return 1 + mp.log(w) / mp.log(v)


def contraction_slope(state: ScalarState) -> mpf:
    """Производная (q_{d-1} ∘ v_{k-1})′ в неподвижной точке."""
    with mp.workprec(state.bits):
        return mp.diff(lambda t: q_map(state.k, state.d, v_map(state.k, t)), state.q)


# ====== r/f-закон ======

@dataclass
class RFLaw:
    k: int
    d: mpf
    gdot: Dict[str, mpf]
    ghat: Dict[str, mpf]
    zdot: mpf
    zhat: mpf
    residual: mpf
    bits: int


def rf_bethe_update(k: int, d, gdot: Dict[str, mpf], ghat: Dict[str, mpf]):
    """Явные r/f-рекурсии Бете; возвращает нормированные (ġ', ĝ') и ż_g, ẑ_g."""
    p = mp.ldexp(mp.one, -k)
    T = gdot["rf"]
    F = gdot["ff"]
    base = T ** (k - 1)
    hat = {
        "rr": 2 * p * base,
        "fr": 2 * p * base,
        "ff": (F + T) ** (k - 1) - 4 * p * base,
        "rf": (F + T) ** (k - 1) - 2 * p * (k + 1) * base
              + 2 * p * (k - 1) * T ** (k - 2) * (gdot["rr"] + gdot["fr"] - 2 * F),
    }
    e = mp.mpf(d) - 1
    both = powr(ghat["rr"] + ghat["rf"], e) - powr(ghat["rf"], e)
    dot = {
        "ff": powr(ghat["ff"], e),
        "fr": 2 * powr(ghat["rf"], e),
        "rr": 2 * both,
        "rf": 2 * both,
    }
    zhat = sum(hat.values())
    zdot = sum(dot.values())
    return ({s: dot[s] / zdot for s in RF_SPINS}, {s: hat[s] / zhat for s in RF_SPINS}, zdot, zhat)


def rf_law_from_scalar(state: ScalarState) -> RFLaw:
    """ĝ_rf = ĝ_ff = v/2, ĝ_rr = ĝ_fr = (1-v)/2; ġ_rr = ġ_rf = q/(2+q_f), ġ_fr = 2ġ_ff = 2q_f/(2+q_f)."""
    k = state.k
    with mp.workprec(state.bits):
        q, v, qf = state.q, state.v, state.q_free
        ghat = {"rr": (1 - v) / 2, "rf": v / 2, "fr": (1 - v) / 2, "ff": v / 2}
        gdot = {"rr": q / (2 + qf), "rf": q / (2 + qf), "fr": 2 * qf / (2 + qf), "ff": qf / (2 + qf)}
        gdot2, ghat2, zdot, zhat = rf_bethe_update(k, state.d, gdot, ghat)
        residual = max(max(abs(gdot2[s] - gdot[s]), abs(ghat2[s] - ghat[s])) for s in RF_SPINS)
        bound = state.tol * CONSISTENCY_FACTOR
        if residual > bound:
            raise ConsistencyError(f"r/f Bethe residual {mp.nstr(residual, 5)} exceeds {mp.nstr(bound, 5)}")
        return RFLaw(k=k, d=state.d, gdot=gdot, ghat=ghat, zdot=zdot, zhat=zhat, residual=residual, bits=state.bits)


# ====== 01f-закон ======

@dataclass
class MessageLaw:
    k: int
    d: mpf
    hdot: Tuple[mpf, ...]  # в порядке SPINS
    hhat: Tuple[mpf, ...]
    zdot: mpf
    zhat: mpf
    residual: mpf
    bits: int

    def dot(self, spin: str) -> mpf:
        return self.hdot[SPINS.index(spin)]

    def hat(self, spin: str) -> mpf:
        return self.hhat[SPINS.index(spin)]

    def relabeled(self) -> "MessageLaw":
        """0 <-> 1 во всех спинах."""
        idx = [SPINS.index(flip_spin(s)) for s in SPINS]
        return MessageLaw(
            k=self.k, d=self.d,
            hdot=tuple(self.hdot[i] for i in idx), hhat=tuple(self.hhat[i] for i in idx),
            zdot=self.zdot, zhat=self.zhat, residual=self.residual, bits=self.bits,
        )


def bethe_update(k: int, d, hdot, hhat) -> Tuple[Tuple[mpf, ...], Tuple[mpf, ...], mpf, mpf]:
    """
    Один шаг рекурсий Бете по классам:
      переменная: ff^d, (fx, xf^{d-1}), xx^{≥2}xf^{rest};
      клауза: ψ̂ зависит только от проекции Π.
    Возвращает нормированные (ḣ', ĥ') и нормировки ż, ẑ.
    """
    hd = dict(zip(SPINS, hdot))
    hh = dict(zip(SPINS, hhat))
    e = mp.mpf(d) - 1
    dot: Dict[str, mpf] = {"ff": powr(hh["ff"], e)}
    for x in "01":
        xf, fx, xx = hh[x + "f"], hh["f" + x], hh[x + x]
        S = powr(xx + xf, e)
        P = powr(xf, e)
        dot["f" + x] = P
        dot[x + x] = S - P
        dot[x + "f"] = S - P + e * powr(xf, e - 1) * (fx - xx)

    p = mp.ldexp(mp.one, -k)
    T = hd["0f"] + hd["1f"]
    R = hd["00"] + hd["11"] + hd["f0"] + hd["f1"]
    F = hd["ff"]
    Tk1 = T ** (k - 1)
    Tk2 = T ** (k - 2)
    mixed = (F + T) ** (k - 1) - Tk1
    hat: Dict[str, mpf] = {s: 2 * p * Tk1 for s in ("00", "11", "f0", "f1")}
    hat["ff"] = (2 ** k - 4) * p * Tk1 + mixed
    rf = ((2 ** k - 2 - 2 * k) * p * Tk1 + 2 * p * (k - 1) * R * Tk2
          + (2 ** k - 4) * p * (k - 1) * F * Tk2 + mixed - (k - 1) * F * Tk2)
    hat["0f"] = rf
    hat["1f"] = rf

    zdot = sum(dot.values())
    zhat = sum(hat.values())
    return (tuple(dot[s] / zdot for s in SPINS), tuple(hat[s] / zhat for s in SPINS), zdot, zhat)


def bethe_residual(k: int, d, law: MessageLaw) -> mpf:
    """max-норма расхождения обеих половин рекурсии после нормировки."""
    with mp.workprec(law.bits):
        hdot2, hhat2, _, _ = bethe_update(k, d, law.hdot, law.hhat)
        return max(
            max(abs(a - b) for a, b in zip(hdot2, law.hdot)),
            max(abs(a - b) for a, b in zip(hhat2, law.hhat)),
        )


def lift_to_zof(rf: RFLaw, tol=None) -> MessageLaw:
    """ĥ_σ = ĝ_{Πσ}/(2 - ĝ_ff), ḣ_σ = 2^{1{σ=ff}} ġ_{Πσ}/2."""
    k = rf.k
    with mp.workprec(rf.bits):
        denom = 2 - rf.ghat["ff"]
        hhat = tuple(rf.ghat[PROJECTION[s]] / denom for s in SPINS)
        hdot = tuple(rf.gdot["ff"] if s == "ff" else rf.gdot[PROJECTION[s]] / 2 for s in SPINS)
        _, _, zdot, zhat = bethe_update(k, rf.d, hdot, hhat)
        law = MessageLaw(k=k, d=rf.d, hdot=hdot, hhat=hhat, zdot=zdot, zhat=zhat, residual=mp.zero, bits=rf.bits)
        law.residual = bethe_residual(k, rf.d, law)
        bound = as_tol(k, tol) * CONSISTENCY_FACTOR
        if law.residual > bound:
            raise ConsistencyError(f"01f Bethe residual {mp.nstr(law.residual, 5)} exceeds {mp.nstr(bound, 5)}")
        return law


def fixed_point_law(k: int, d, tol=None, bits: Optional[int] = None) -> Tuple[ScalarState, MessageLaw]:
    """Скалярная неподвижная точка -> r/f -> 01f."""
    state = iterate_qv(k, d, tol=tol, bits=bits)
    law = lift_to_zof(rf_law_from_scalar(state), tol=state.tol)
    return state, law


# ====== Парные рекурсии ======

@dataclass
class PairState:
    k: int
    d: mpf
    qdot: Dict[str, mpf]
    qhat: Dict[str, mpf]
    residual: mpf
    iterations: int
    converged: bool
    regime_ok: bool
    bits: int


def pair_clause_map(k: int, qdot: Dict[str, mpf]) -> Dict[str, mpf]:
    """Сообщения клауза -> переменная для двух копий с общими литералами."""
    eq = qdot["00"] + qdot["11"]
    ne = qdot["01"] + qdot["10"]
    r1 = eq + ne + qdot["0f"] + qdot["1f"]
    r2 = eq + ne + qdot["f0"] + qdot["f1"]
    c = mp.ldexp(mp.one, 1 - k)
    q_eq = c * eq ** (k - 1)
    q_ne = c * ne ** (k - 1)
    q_rf = c * (r1 ** (k - 1) - eq ** (k - 1) - ne ** (k - 1))
    q_fr = c * (r2 ** (k - 1) - eq ** (k - 1) - ne ** (k - 1))
    out = {
        "00": q_eq, "11": q_eq, "01": q_ne, "10": q_ne,
        "0f": q_rf, "1f": q_rf, "f0": q_fr, "f1": q_fr,
    }
    out["ff"] = 1 - 2 * (q_eq + q_ne + q_rf + q_fr)
    return out


def pair_variable_map(k: int, d, qhat: Dict[str, mpf]) -> Dict[str, mpf]:
    """Правило вершины по каждой копии; противоречия отбрасываются, закон нормируется."""
    e = mp.mpf(d) - 1
    C = qhat["ff"]
    out: Dict[str, mpf] = {"ff": powr(C, e)}
    for x in "01":
        for y in "01":
            A = qhat[x + y] + qhat[x + "f"] + qhat["f" + y] + C
            B1 = qhat["f" + y] + C
            B2 = qhat[x + "f"] + C
            out[x + y] = powr(A, e) - powr(B1, e) - powr(B2, e) + powr(C, e)
        out[x + "f"] = powr(qhat[x + "f"] + C, e) - powr(C, e)
        out["f" + x] = powr(qhat["f" + x] + C, e) - powr(C, e)
    z = sum(out.values())
    return {s: out[s] / z for s in PAIR_LETTERS}


def _pair_regime_ok(k: int, qdot: Dict[str, mpf]) -> bool:
    f_mass = qdot["ff"] + qdot["0f"] + qdot["1f"] + qdot["f0"] + qdot["f1"]
    eq = qdot["00"] + qdot["11"]
    ne = qdot["01"] + qdot["10"]
    if ne == 0:
        return False
    return f_mass <= 4 * mp.ldexp(mp.one, -k) and abs(eq / ne - 1) <= 2 * k * mp.power(2, -mp.mpf(k) / 2)


def product_pair_state(state: ScalarState) -> PairState:
    """q*⊗q*: точная неподвижная точка парных рекурсий."""
    k = state.k
    with mp.workprec(state.bits):
        single = {"0": state.q / 2, "1": state.q / 2, "f": state.q_free}
        qdot = {s: single[s[0]] * single[s[1]] for s in PAIR_LETTERS}
        qhat = pair_clause_map(k, qdot)
        return PairState(k=k, d=state.d, qdot=qdot, qhat=qhat, residual=mp.zero, iterations=0,
                         converged=True, regime_ok=_pair_regime_ok(k, qdot), bits=state.bits)


def perturbed_pair_state(state: ScalarState, eps=None) -> PairState:
    """q̇_00 = q̇_11 = (q²/4)(1+ε), q̇_01 = q̇_10 = (q²/4)(1-ε); по умолчанию ε = k/2^{k/2+1}."""
    k = state.k
    base = product_pair_state(state)
    with mp.workprec(state.bits):
        eps = mp.mpf(k) / mp.power(2, mp.mpf(k) / 2 + 1) if eps is None else mp.mpf(eps)
        qdot = dict(base.qdot)
        q2 = state.q ** 2 / 4
        qdot["00"] = qdot["11"] = q2 * (1 + eps)
        qdot["01"] = qdot["10"] = q2 * (1 - eps)
        return PairState(k=k, d=state.d, qdot=qdot, qhat=pair_clause_map(k, qdot), residual=mp.inf,
                         iterations=0, converged=False, regime_ok=_pair_regime_ok(k, qdot), bits=state.bits)


def pair_iterate(
    k: int,
    d,
    init: PairState,
    tol=None,
    max_iter: Optional[int] = None,
    bits: Optional[int] = None,
) -> PairState:
    _check_kd(k, d)
    bits = working_bits(k, bits or init.bits)
    max_iter = settings.max_iter if max_iter is None else int(max_iter)
    with mp.workprec(bits):
        tol = as_tol(k, tol)
        regime_ok = _pair_regime_ok(k, init.qdot)
        if not regime_ok:
            log.warning("pair_iterate: initial state outside the contraction regime (k=%d)", k)
        qdot = dict(init.qdot)
        for it in range(1, max_iter + 1):
            qhat = pair_clause_map(k, qdot)
            new = pair_variable_map(k, d, qhat)
            residual = max(abs(new[s] - qdot[s]) for s in PAIR_LETTERS)
            qdot = new
            if residual < tol:
                log.info("pair_iterate k=%d: %d steps, residual %s", k, it, mp.nstr(residual, 5))
                return PairState(k=k, d=mp.mpf(d), qdot=qdot, qhat=pair_clause_map(k, qdot), residual=residual,
                                 iterations=it, converged=True, regime_ok=regime_ok, bits=bits)
    raise NonConvergenceError(f"pair_iterate did not converge in {max_iter} steps (k={k})")

# app/services/spectral.py
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from mpmath import mp, mpf

from app.services.auxiliary import SPINS, SPIN_INDEX, flip_spin
from app.services.errors import ConsistencyError, DomainError, NonConvergenceError
from app.services.moments import EmpiricalMeasure, SpinClass
from app.services.numeric import as_tol
from app.services.recursions import CONSISTENCY_FACTOR, ScalarState

log = logging.getLogger(__name__)

N = len(SPINS)
JACOBI_MAX_SWEEPS = 100


# ====== Линейная алгебра в mp ======

def _identity(n: int):
    return mp.eye(n)


def kron(a, b):
    """Кронекерово произведение двух mp.matrix."""
    ra, ca = a.rows, a.cols
    rb, cb = b.rows, b.cols
    out = mp.zeros(ra * rb, ca * cb)
    for i in range(ra):
        for j in range(ca):
            aij = a[i, j]
            if aij == 0:
                continue
            for p in range(rb):
                for q in range(cb):
                    out[i * rb + p, j * cb + q] = aij * b[p, q]
    return out


def _max_abs(a) -> mpf:
    return max((abs(a[i, j]) for i in range(a.rows) for j in range(a.cols)), default=mp.zero)


def jacobi_eigh(a, tol=None) -> Tuple[List[mpf], "mp.matrix"]:
    """
    Циклический метод Якоби для симметричной матрицы в текущей точности.
    Возвращает собственные значения и матрицу собственных векторов (по столбцам).
    """
    n = a.rows
    a = a.copy()
    p = _identity(n)
    scale = _max_abs(a) or mp.one
    tol = mp.eps * scale * n if tol is None else mp.mpf(tol)

    def rotate(k: int, l: int) -> None:
        diff = a[l, l] - a[k, k]
        if abs(a[k, l]) < abs(diff) * mp.eps ** 2:
            t = a[k, l] / diff
        else:
            phi = diff / (2 * a[k, l])
            t = 1 / (abs(phi) + mp.sqrt(phi ** 2 + 1))
            if phi < 0:
                t = -t
        c = 1 / mp.sqrt(t ** 2 + 1)
        s = t * c
        tau = s / (1 + c)
        temp = a[k, l]
        a[k, l] = a[l, k] = mp.zero
        a[k, k] -= t * temp
        a[l, l] += t * temp
        for i in range(n):
            if i == k or i == l:
                continue
            aik, ail = a[i, k], a[i, l]
            a[i, k] = a[k, i] = aik - s * (ail + tau * aik)
            a[i, l] = a[l, i] = ail + s * (aik - tau * ail)
        for i in range(n):
            pik, pil = p[i, k], p[i, l]
            p[i, k] = pik - s * (pil + tau * pik)
            p[i, l] = pil + s * (pik - tau * pil)

    for sweep in range(JACOBI_MAX_SWEEPS):
        off = max((abs(a[i, j]) for i in range(n) for j in range(i + 1, n)), default=mp.zero)
        if off <= tol:
            log.debug("jacobi: %d sweeps for n=%d", sweep, n)
            return [a[i, i] for i in range(n)], p
        for k in range(n - 1):
            for l in range(k + 1, n):
                if a[k, l] != 0:
                    rotate(k, l)
    raise NonConvergenceError(f"Jacobi rotations did not converge in {JACOBI_MAX_SWEEPS} sweeps (n={n})")


def smallest_singular_value(x) -> mpf:
    """σ_min через собственные значения XᵀX."""
    eig, _ = jacobi_eigh(x.T * x)
    return mp.sqrt(max(min(eig), mp.zero))


# ====== Матрицы перехода ======

@dataclass
class SpectralReport:
    k: int
    d: int
    vh: Tuple[mpf, ...]
    Mdot: "mp.matrix"
    Mhat: "mp.matrix"
    Mhat0: "mp.matrix"
    Mhat1: "mp.matrix"
    Mdot2: Optional["mp.matrix"] = None
    Mhat2: Optional["mp.matrix"] = None
    eig_Mdot: List[mpf] = field(default_factory=list)
    stochastic_defect: mpf = field(default_factory=lambda: mp.zero)
    reversibility_defect: mpf = field(default_factory=lambda: mp.zero)
    bits: int = 0

    @property
    def vh2(self) -> Tuple[mpf, ...]:
        return tuple(a * b for a in self.vh for b in self.vh)


def _pair_joint(classes: Sequence[SpinClass], size: int):
    """Совместный закон спинов первых двух позиций симметричной меры."""
    joint = mp.zeros(N, N)
    norm = size * (size - 1)
    for c in classes:
        nz = [i for i, n in enumerate(c.counts) if n]
        for i in nz:
            for j in nz:
                pairs = c.counts[i] * (c.counts[j] - (1 if i == j else 0))
                if pairs:
                    joint[i, j] += c.mass * pairs / norm
    return joint


def _conditional(joint, vh: Sequence[mpf]):
    out = mp.zeros(N, N)
    for i in range(N):
        for j in range(N):
            out[i, j] = joint[i, j] / vh[i]
    return out


def flip_columns(m):
    """M¹_{σσ′} = M⁰_{σ, σ′⊕1}."""
    out = mp.zeros(N, N)
    for j, s in enumerate(SPINS):
        src = SPIN_INDEX[flip_spin(s)]
        for i in range(N):
            out[i, j] = m[i, src]
    return out


def _stochastic_defect(m) -> mpf:
    return max(abs(sum(m[i, j] for j in range(m.cols)) - 1) for i in range(m.rows))


def _reversibility_defect(m, pi: Sequence[mpf]) -> mpf:
    n = m.rows
    return max(
        (abs(pi[i] * m[i, j] - pi[j] * m[j, i]) for i in range(n) for j in range(i + 1, n)),
        default=mp.zero,
    )


def transition_matrices(measure: EmpiricalMeasure, pair: bool = True, tol=None) -> SpectralReport:
    """
    Ṁ_{σσ′} = v̄h(σ)^{-1} Σ ḣ̄(σ̇) 1{(σ₁,σ₂) = (σ,σ′)}, так же M̂ и M̂⁰ (литералы 0);
    M̂¹ получается сдвигом столбцов, M̂ = ½(M̂⁰+M̂¹). Парные версии: Ṁ₂ = Ṁ⊗Ṁ,
    M̂₂ = ½(M̂⁰⊗M̂⁰ + M̂¹⊗M̂¹).
    """
    k, d = measure.k, measure.d
    with mp.workprec(measure.bits):
        vh = measure.vh
        if min(vh) <= 0:
            raise DomainError("transition matrices need a strictly positive v̄h")
        Mdot = _conditional(_pair_joint(measure.variable, d), vh)
        Mhat = _conditional(_pair_joint(measure.clause, k), vh)
        Mhat0 = _conditional(_pair_joint(measure.clause_zero, k), vh)
        Mhat1 = flip_columns(Mhat0)

        stochastic = max(_stochastic_defect(Mdot), _stochastic_defect(Mhat), _stochastic_defect(Mhat0))
        reversible = max(_reversibility_defect(Mdot, vh), _reversibility_defect(Mhat, vh))
        average = _max_abs((Mhat0 + Mhat1) / 2 - Mhat)
        bound = as_tol(k, tol) * CONSISTENCY_FACTOR
        if max(stochastic, reversible, average) > bound:
            raise ConsistencyError(
                f"transition matrices: stochastic {mp.nstr(stochastic, 5)}, "
                f"reversibility {mp.nstr(reversible, 5)}, averaging {mp.nstr(average, 5)}"
            )

        sym = _symmetrize(Mdot, vh)
        eig, _ = jacobi_eigh((sym + sym.T) / 2)
        report = SpectralReport(
            k=k, d=d, vh=vh, Mdot=Mdot, Mhat=Mhat, Mhat0=Mhat0, Mhat1=Mhat1,
            eig_Mdot=sorted(eig, reverse=True),
            stochastic_defect=stochastic, reversibility_defect=reversible, bits=measure.bits,
        )
        if pair:
            report.Mdot2 = kron(Mdot, Mdot)
            report.Mhat2 = (kron(Mhat0, Mhat0) + kron(Mhat1, Mhat1)) / 2
        return report


# ====== Явные таблицы ======

@dataclass
class ExplicitMatrices:
    Mdot: "mp.matrix"
    Mhat: "mp.matrix"
    Mhat0: "mp.matrix"
    Mhat1: "mp.matrix"
    a: mpf
    b: mpf
    lam: mpf  # λ = √(ab)
    params: Dict[str, mpf]


def explicit_transition_matrices(state: ScalarState) -> ExplicitMatrices:
    """
    Замкнутые формулы через γ = v_r/v, a = v_r(1+q_f)/(1-q_f), b = 2v_r q_f/(vq),
    δ = q_f/(1-2Q), ε = 2q_f/q, B = v_r/(1-q_f-2v_r-q_f v_r).
    """
    with mp.workprec(state.bits):
        q, v, qf, vr, Q = state.q, state.v, state.q_free, state.v_rig, state.Q
        gamma = vr / v
        a = vr * (1 + qf) / (1 - qf)
        b = 2 * vr * qf / (v * q)
        delta = qf / (1 - 2 * Q)
        eps = 2 * qf / q
        B = vr / (1 - qf - 2 * vr - qf * vr)
        m_hat = 1 - delta - gamma
        I = SPIN_INDEX

        Mdot = mp.zeros(N, N)
        for x in "01":
            xf, xx, fx = I[x + "f"], I[x + x], I["f" + x]
            Mdot[xf, xf] = 1 - b - gamma * (1 - a)
            Mdot[xf, xx] = gamma * (1 - a)
            Mdot[xf, fx] = b
            Mdot[xx, xf] = 1 - a
            Mdot[xx, xx] = a
            Mdot[fx, xf] = 1
        Mdot[I["ff"], I["ff"]] = 1

        Mhat0 = mp.zeros(N, N)
        for x, y in (("0", "1"), ("1", "0")):
            xf, yf = I[x + "f"], I[y + "f"]
            Mhat0[xf, xf] = (1 + B) / 2 * m_hat
            Mhat0[xf, yf] = (1 - B) / 2 * m_hat
            Mhat0[xf, I[y + y]] = gamma
            Mhat0[xf, I["f" + y]] = eps * gamma
            Mhat0[xf, I["ff"]] = delta - eps * gamma
            Mhat0[I[x + x], yf] = 1
            Mhat0[I["f" + x], yf] = 1
        Mhat0[I["ff"], I["0f"]] = (1 - delta) / 2
        Mhat0[I["ff"], I["1f"]] = (1 - delta) / 2
        Mhat0[I["ff"], I["ff"]] = delta
        Mhat1 = flip_columns(Mhat0)

        return ExplicitMatrices(
            Mdot=Mdot, Mhat=(Mhat0 + Mhat1) / 2, Mhat0=Mhat0, Mhat1=Mhat1,
            a=a, b=b, lam=mp.sqrt(a * b),
            params={"gamma": gamma, "delta": delta, "eps": eps, "B": B},
        )


def max_entry_gap(x, y) -> mpf:
    return _max_abs(x - y)


# ====== Гессиан ======

@dataclass
class HessianVerdict:
    singular_values: Dict[str, mpf]
    nonsingular: bool
    max_restricted_eig: Optional[mpf] = None
    symmetry_defect: Optional[mpf] = None
    negative_definite: Optional[bool] = None
    note: str = ""


@dataclass
class HessianReport:
    single: HessianVerdict
    pair: Optional[HessianVerdict] = None


def _symmetrize(m, weights: Sequence[mpf]):
    """H^{1/2} M H^{-1/2}."""
    root = [mp.sqrt(w) for w in weights]
    out = mp.zeros(m.rows, m.cols)
    for i in range(m.rows):
        for j in range(m.cols):
            out[i, j] = root[i] * m[i, j] / root[j]
    return out


def _verdict(k: int, d: int, Mdot, Mhat, weights: Sequence[mpf], suffix: str) -> HessianVerdict:
    n = Mdot.rows
    I = _identity(n)
    Ldot = I + (d - 1) * Mdot
    Lhat = I + (k - 1) * Mhat
    L = I - (d - 1) * (k - 1) * (Mdot * Mhat)
    sv = {
        f"Ldot{suffix}": smallest_singular_value(Ldot),
        f"Lhat{suffix}": smallest_singular_value(Lhat),
        f"L{suffix}": smallest_singular_value(L),
    }
    floor = mp.eps * 2 ** 16 * max(1, d * k)
    nonsingular = all(s > floor for s in sv.values())
    if not nonsingular:
        return HessianVerdict(singular_values=sv, nonsingular=False, note="singular L-matrix")

    F = mp.inverse(_symmetrize(Ldot, weights)) + mp.inverse(_symmetrize(Lhat, weights)) - I
    symmetry = _max_abs(F - F.T)
    Fs = (F + F.T) / 2

    w = mp.matrix([mp.sqrt(x) for x in weights])
    norm2 = sum(w[i] ** 2 for i in range(n))
    P = I - (w * w.T) / norm2
    eig, vecs = jacobi_eigh(P * Fs * P)
    # собственный вектор, ближайший к v̄h^{1/2}, отбрасываем
    overlaps = [abs(sum(vecs[i, j] * w[i] for i in range(n))) for j in range(n)]
    drop = max(range(n), key=lambda j: overlaps[j])
    restricted = [e for j, e in enumerate(eig) if j != drop]
    top = max(restricted)
    return HessianVerdict(
        singular_values=sv, nonsingular=True, max_restricted_eig=top,
        symmetry_defect=symmetry, negative_definite=top < 0,
    )


def hessian_definiteness(k: int, d, report: SpectralReport, pair: bool = True) -> HessianReport:
    """
    L̇ = I+(d-1)Ṁ, L̂ = I+(k-1)M̂, L = I-(d-1)(k-1)ṀM̂;
    F = (H^{1/2}L̇H^{-1/2})^{-1} + (H^{1/2}L̂H^{-1/2})^{-1} - I на дополнении к v̄h^{1/2}.
    """
    d = int(mp.mpf(d))
    with mp.workprec(report.bits):
        single = _verdict(k, d, report.Mdot, report.Mhat, report.vh, "")
        out = HessianReport(single=single)
        if pair and report.Mdot2 is not None:
            out.pair = _verdict(k, d, report.Mdot2, report.Mhat2, report.vh2, "2")
        log.info("hessian k=%d d=%d: single max eig %s", k, d,
                 mp.nstr(single.max_restricted_eig, 8) if single.max_restricted_eig is not None else "n/a")
        return out

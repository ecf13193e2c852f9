# app/services/numeric.py
from __future__ import annotations
import logging
from typing import Callable, Optional, Tuple

from mpmath import mp, mpf
from mpmath.libmp import prec_to_dps

from app.settings import settings
from app.services.errors import BracketError, DomainError

log = logging.getLogger(__name__)


def working_bits(k: int, bits: Optional[int] = None) -> int:
    """Явный флаг > NAESAT_PRECISION_BITS > 4k+64."""
    if bits:
        return int(bits)
    if settings.precision_bits:
        return int(settings.precision_bits)
    return 4 * int(k) + 64


def digits(bits: int) -> int:
    return int(prec_to_dps(int(bits)))


def default_tol(k: int) -> mpf:
    return mp.ldexp(mp.one, -(2 * int(k) + 40))


def as_tol(k: int, tol) -> mpf:
    return default_tol(k) if tol is None else mp.mpf(tol)


def log2() -> mpf:
    return mp.log(2)


def powr(x, e) -> mpf:
    """x**e через exp/log; d может быть порядка k·2^k и нецелым."""
    x = mp.mpf(x)
    e = mp.mpf(e)
    if x < 0:
        raise DomainError(f"power of a negative base: {mp.nstr(x, 10)}")
    if x == 0:
        if e > 0:
            return mp.zero
        if e == 0:
            return mp.one
        raise DomainError("zero to a non-positive power")
    return mp.exp(e * mp.log(x))


def xlogx(x) -> mpf:
    x = mp.mpf(x)
    return mp.zero if x == 0 else x * mp.log(x)


def entropy(t) -> mpf:
    t = mp.mpf(t)
    if t < 0 or t > 1:
        raise DomainError(f"entropy argument outside [0,1]: {mp.nstr(t, 10)}")
    return -xlogx(t) - xlogx(1 - t)


def bisect_root(f: Callable[[mpf], mpf], lo, hi, x_tol, max_iter: int = 200) -> Tuple[mpf, int]:
    """Бисекция по знаку; на концах обязана быть смена знака."""
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo, 0
    if f_hi == 0:
        return hi, 0
    if mp.sign(f_lo) == mp.sign(f_hi):
        raise BracketError(
            f"no sign change on [{mp.nstr(lo, 12)}, {mp.nstr(hi, 12)}]: "
            f"f(lo)={mp.nstr(f_lo, 6)}, f(hi)={mp.nstr(f_hi, 6)}"
        )
    it = 0
    while it < max_iter and hi - lo > x_tol:
        it += 1
        mid = (lo + hi) / 2
        f_mid = f(mid)
        if f_mid == 0:
            return mid, it
        if mp.sign(f_mid) == mp.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    log.debug("bisection finished after %d steps, width %s", it, mp.nstr(hi - lo, 5))
    return (lo + hi) / 2, it

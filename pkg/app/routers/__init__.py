# app/routers/__init__.py
from __future__ import annotations
import argparse
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Tuple

from mpmath import mp


class Arg(NamedTuple):
    flags: Tuple[str, ...]
    kwargs: Dict[str, Any]


def arg(*flags: str, **kwargs: Any) -> Arg:
    return Arg(flags=flags, kwargs=kwargs)


@dataclass
class Reply:
    """Ответ обработчика: результат и точность, с которой он посчитан (None: точная арифметика)."""
    result: Any
    bits: Optional[int] = None


Handler = Callable[[argparse.Namespace], Reply]


@dataclass
class Command:
    verb: str
    help: str
    handler: Handler
    arguments: Tuple[Arg, ...] = field(default_factory=tuple)


class Router:
    def __init__(self, name: str) -> None:
        self.name = name
        self.commands: Dict[str, Command] = {}

    def command(self, verb: str, help: str, *arguments: Arg) -> Callable[[Handler], Handler]:
        def register(handler: Handler) -> Handler:
            if verb in self.commands:
                raise ValueError(f"verb {verb!r} registered twice in router {self.name}")
            self.commands[verb] = Command(verb=verb, help=help, handler=handler, arguments=arguments)
            return handler
        return register


# ====== Типы и общие флаги ======

def real(text: str) -> str:
    """Вещественное значение флага; строка сохраняется для эха параметров."""
    try:
        mp.mpf(text)
    except (ValueError, TypeError) as e:
        raise argparse.ArgumentTypeError(f"not a real number: {text!r}") from e
    return text


def int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


K = arg("--k", type=int, required=True, help="clause arity k")
D_REAL = arg("--d", type=real, required=True, help="variable degree d (real values accepted)")
D_INT = arg("--d", type=int, required=True, help="variable degree d")
N = arg("--n", type=int, required=True, help="number of variables")
TRIALS = arg("--trials", type=int, default=20, help="independent trials")
SEED = arg("--seed", type=int, default=0, help="master seed")
PRECISION = arg("--precision-bits", type=int, default=None, help="mantissa bits (default: env or 4k+64)")
TOL = arg("--tol", type=real, default=None, help="fixed-point tolerance (default 2^-(2k+40))")
FORMAT = arg("--format", choices=("json", "csv", "text"), default="json", help="output format")
IN = arg("--in", dest="inp", required=True, help="instance file (.naesat or .naesat.gz)")
OUT = arg("--out", default=None, help="output file")
N_JOBS = arg("--n-jobs", type=int, default=None, help="joblib workers (default NAESAT_N_JOBS)")

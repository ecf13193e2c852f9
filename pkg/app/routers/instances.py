# app/routers/instances.py
from __future__ import annotations
import argparse
import logging
from fractions import Fraction
from typing import Tuple

from app.routers import D_INT, FORMAT, IN, K, N, OUT, SEED, Reply, Router, arg
from app.services import graphs
from app.services.auxiliary import aux_to_frozen, complete_to_solution, enumerate_aux, frozen_to_aux
from app.services.errors import InputError
from app.services.frozen import (
    TruncationPolicy,
    cluster_preimage,
    coarsen,
    enumerate_frozen,
    free_density,
    parse_eta,
)
from app.services.naesat_core import count_solutions, decide_exists, sample_solution
from app.settings import settings

router = Router("instances")
log = logging.getLogger(__name__)


def _parse_bits(text: str) -> Tuple[int, ...]:
    cleaned = text.replace(",", "").replace(" ", "")
    if not cleaned or any(c not in "01" for c in cleaned):
        raise InputError(f"assignment must be a 0/1 string, got {text!r}")
    return tuple(int(c) for c in cleaned)


def _beta_policy(k: int, text) -> TruncationPolicy:
    if text is None:
        return TruncationPolicy.for_k(k)
    if text == "none":
        return TruncationPolicy.unrestricted()
    try:
        return TruncationPolicy(beta_max=Fraction(text))
    except (ValueError, ZeroDivisionError) as e:
        raise InputError(f"bad --beta-max {text!r}") from e


def _bits_str(x) -> str:
    return "".join(str(b) for b in x)


@router.command(
    "gen", "random d-regular k-uniform NAE instance with uniform literals",
    N, D_INT, K, SEED, OUT, FORMAT,
)
def cmd_gen(args: argparse.Namespace) -> Reply:
    g = graphs.generate_graph(args.n, args.d, args.k, args.seed)
    L = graphs.generate_literals(g, args.seed)
    result = {"n": g.n, "m": g.m, "d": g.d, "k": g.k, "simple": g.is_simple()}
    if args.out:
        graphs.write_instance(args.out, g, L)
        result["path"] = args.out
    else:
        result["instance"] = graphs.serialize(g, L)
    return Reply(result=result)


@router.command(
    "solve", "decide satisfiability (DPLL) and count solutions when n is small",
    IN, FORMAT,
    arg("--node-budget", type=int, default=None, help="DPLL node budget (default NAESAT_NODE_BUDGET)"),
)
def cmd_solve(args: argparse.Namespace) -> Reply:
    g, L = graphs.read_instance(args.inp)
    sat = decide_exists(g, L, node_budget=args.node_budget)
    result = {"n": g.n, "m": g.m, "d": g.d, "k": g.k, "sat": sat}
    if g.n <= settings.count_limit_n:
        count = count_solutions(g, L)
        result["Z"] = count.Z
        if (count.Z > 0) != sat:
            log.error("decide_exists and count_solutions disagree on %s", args.inp)
    return Reply(result=result)


@router.command(
    "coarsen", "coarsening of a solution into its frozen configuration",
    IN, FORMAT,
    arg("--x", default=None, help="solution as a 0/1 string; sampled uniformly when absent"),
    SEED,
)
def cmd_coarsen(args: argparse.Namespace) -> Reply:
    g, L = graphs.read_instance(args.inp)
    if args.x is not None:
        x = _parse_bits(args.x)
    else:
        x = sample_solution(g, L, args.seed)
        if x is None:
            return Reply(result={"n": g.n, "found": False})
    eta = coarsen(g, L, x)
    return Reply(result={
        "n": g.n,
        "found": True,
        "x": _bits_str(x),
        "eta": str(eta),
        "free_count": eta.free_count,
        "free_density": free_density(eta.eta),
    })


@router.command(
    "enumerate", "frozen and auxiliary configurations of a small instance",
    IN, FORMAT,
    arg("--beta-max", default=None, help="free-density cap as a fraction, or 'none' (default 7/2^k)"),
    arg("--list", action="store_true", help="include the configurations themselves"),
)
def cmd_enumerate(args: argparse.Namespace) -> Reply:
    g, L = graphs.read_instance(args.inp)
    policy = _beta_policy(g.k, args.beta_max)
    frozen = enumerate_frozen(g, L, policy)
    aux = enumerate_aux(g, L, policy)
    # биекция η <-> σ на перечисленных множествах
    round_trip = all(aux_to_frozen(g, frozen_to_aux(g, L, c.eta), L).eta == c.eta for c in frozen)
    preimages = {str(c): len(cluster_preimage(g, L, c.eta)) for c in frozen} if g.n <= settings.count_limit_n else None
    result = {
        "n": g.n,
        "beta_max": policy.beta_max,
        "free_cap": policy.cap(g.n),
        "frozen_count": len(frozen),
        "aux_count": len(aux),
        "bijection_ok": round_trip and len(frozen) == len(aux),
    }
    if preimages is not None:
        result["cluster_sizes"] = preimages
    if args.list:
        result["frozen"] = [str(c) for c in frozen]
        result["aux"] = [str(s) for s in aux]
    return Reply(result=result)


@router.command(
    "complete", "complete a frozen configuration to an NAE solution through its free components",
    IN, FORMAT,
    arg("--eta", required=True, help="frozen configuration over {0,1,f}"),
    SEED,
)
def cmd_complete(args: argparse.Namespace) -> Reply:
    g, L = graphs.read_instance(args.inp)
    eta = parse_eta(args.eta)
    if len(eta) != g.n:
        raise InputError(f"--eta has {len(eta)} entries, instance has n={g.n}")
    done = complete_to_solution(g, L, eta, args.seed)
    result = {
        "n": g.n,
        "ok": done.ok,
        "components": [
            {"variables": len(c.variables), "clauses": len(c.clauses), "cycles": c.cycles}
            for c in done.components
        ],
    }
    if done.ok:
        result["x"] = _bits_str(done.assignment)
    else:
        result["failed_component"] = done.failed_component
    return Reply(result=result)

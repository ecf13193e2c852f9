# app/routers/experiments.py
from __future__ import annotations
import argparse

from app.routers import FORMAT, K, N, N_JOBS, SEED, TRIALS, Reply, Router, arg, int_list
from app.services import experiments

router = Router("experiments")

D_ONE = arg("--d", type=int, required=True, help="variable degree d")


@router.command(
    "sweep", "fraction of satisfiable instances for each d at fixed (k, n)",
    K, N, TRIALS, SEED, N_JOBS, FORMAT,
    arg("--d", type=int_list, required=True, help="comma-separated degrees, e.g. 10,12,14"),
    arg("--node-budget", type=int, default=None, help="DPLL node budget per instance"),
)
def cmd_sweep(args: argparse.Namespace) -> Reply:
    return Reply(result=experiments.sat_sweep(
        args.k, args.d, args.n, args.trials, args.seed, n_jobs=args.n_jobs, node_budget=args.node_budget,
    ))


@router.command(
    "survival", "probability that coarsening runs for n·t steps, against the analytic bound",
    K, D_ONE, N, TRIALS, SEED, N_JOBS, FORMAT,
    arg("--t", type=float, required=True, help="target fraction of freed variables"),
)
def cmd_survival(args: argparse.Namespace) -> Reply:
    return Reply(result=experiments.simulate_coarsening_survival(
        args.k, args.d, args.n, args.t, args.trials, args.seed, n_jobs=args.n_jobs,
    ))


@router.command(
    "density", "histogram of free densities of coarsened uniform solutions",
    K, D_ONE, N, TRIALS, SEED, N_JOBS, FORMAT,
    arg("--bins", type=int, default=10, help="histogram bins on [0, 1]"),
)
def cmd_density(args: argparse.Namespace) -> Reply:
    return Reply(result=experiments.free_density_histogram(
        args.k, args.d, args.n, args.trials, args.seed, bins=args.bins, n_jobs=args.n_jobs,
    ))


@router.command(
    "ez", "sample mean of Z with a normal confidence interval against E Z",
    K, D_ONE, N, TRIALS, SEED, N_JOBS, FORMAT,
    arg("--confidence", type=float, default=0.95, help="two-sided confidence level"),
)
def cmd_ez(args: argparse.Namespace) -> Reply:
    return Reply(result=experiments.sample_EZ(
        args.k, args.d, args.n, args.trials, args.seed, confidence=args.confidence, n_jobs=args.n_jobs,
    ))

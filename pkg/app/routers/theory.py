# app/routers/theory.py
from __future__ import annotations
import argparse
import logging

from mpmath import mp

from app.routers import D_INT, D_REAL, FORMAT, K, PRECISION, TOL, Reply, Router, arg, real
from app.services import moments, recursions, spectral
from app.services.auxiliary import SPINS
from app.services.numeric import working_bits

router = Router("theory")
log = logging.getLogger(__name__)


def _spin_table(values) -> dict:
    return {s: v for s, v in zip(SPINS, values)}


def _warn_regime(k: int) -> None:
    if recursions.regime_of(k) != "proven":
        log.warning("k=%d lies outside the proven regime; results are qualitative", k)


@router.command("threshold", "d*(k) bisection with working bounds and the fixed point at d*", K, PRECISION, TOL, FORMAT)
def cmd_threshold(args: argparse.Namespace) -> Reply:
    k = args.k
    bits = working_bits(k, args.precision_bits)
    d_star = moments.find_d_star(k, tol=args.tol, bits=bits)
    state = recursions.iterate_qv(k, d_star, tol=args.tol, bits=bits)
    with mp.workprec(state.bits):
        th = moments.thresholds(k)
        result = {
            "k": k,
            "regime": state.regime,
            "d_star": d_star,
            "d_lbd": th.d_lbd,
            "d_ubd": th.d_ubd,
            "d_fm": th.d_fm,
            "d_star_asymptotic": moments.d_star_asymptotic(k),
            "q": state.q,
            "v": state.v,
            "q_free": state.q_free,
            "v_rig": state.v_rig,
            "phi_star": moments.phi_star_of_state(state),
            "phi": moments.phi_first(k, d_star),
            "residual": state.residual,
            "iterations": state.iterations,
        }
    return Reply(result=result, bits=state.bits)


@router.command("fixedpoint", "scalar fixed point and the lifted 01f message law", K, D_REAL, PRECISION, TOL, FORMAT)
def cmd_fixedpoint(args: argparse.Namespace) -> Reply:
    k = args.k
    _warn_regime(k)
    state = recursions.iterate_qv(k, args.d, tol=args.tol, bits=args.precision_bits)
    rf = recursions.rf_law_from_scalar(state)
    law = recursions.lift_to_zof(rf, tol=state.tol)
    norms = moments.explicit_normalizers(state)
    density = moments.fixed_point_free_density(state)
    with mp.workprec(state.bits):
        result = {
            "k": k,
            "d": state.d,
            "regime": state.regime,
            "q": state.q,
            "v": state.v,
            "q_free": state.q_free,
            "v_rig": state.v_rig,
            "q_free_scaled": state.q_free * mp.ldexp(mp.one, k),
            "residual": state.residual,
            "iterations": state.iterations,
            "contraction_slope": recursions.contraction_slope(state),
            "gdot": rf.gdot,
            "ghat": rf.ghat,
            "hdot": _spin_table(law.hdot),
            "hhat": _spin_table(law.hhat),
            "bethe_residual": law.residual,
            "zdot_bar": norms.zdot_bar,
            "zhat_bar": norms.zhat_bar,
            "z_bar": norms.z_bar,
            "free_density": density.value,
            "beta_max": density.beta_max,
            "within_cap": density.within_cap,
        }
    return Reply(result=result, bits=state.bits)


@router.command(
    "rate", "first-moment, explicit and Bethe exponents at (k, d)",
    K, D_REAL, PRECISION, TOL, FORMAT,
    arg("--alpha", type=real, default=None, help="also evaluate ā(α)"),
    arg("--beta", type=real, default=None, help="also evaluate the free-density exponent 𝐲(β)"),
)
def cmd_rate(args: argparse.Namespace) -> Reply:
    k = args.k
    _warn_regime(k)
    bits = working_bits(k, args.precision_bits)
    state = recursions.iterate_qv(k, args.d, tol=args.tol, bits=bits)
    with mp.workprec(state.bits):
        d = state.d
        result = {
            "k": k,
            "d": d,
            "regime": state.regime,
            "phi": moments.phi_first(k, d),
            "phi_star": moments.phi_star_of_state(state),
            "gap": moments.phi_first(k, d) - moments.phi_star_of_state(state) - state.q_free,
        }
        if d == mp.floor(d):
            _, law = recursions.fixed_point_law(k, d, tol=args.tol, bits=bits)
            measure = moments.empirical_from_law(k, d, law, tol=args.tol)
            point = moments.phi_bethe(k, d, measure, tol=args.tol)
            result.update({
                "phi_bethe": point.value,
                "phi_normalizers": point.explicit,
                "zdot_bar": point.zdot_bar,
                "zhat_bar": point.zhat_bar,
                "z_bar": point.z_bar,
                "vh": _spin_table(measure.vh),
                "truncated": measure.truncated,
                "log_prefactor": point.log_prefactor,
                "dimension": point.dimension,
            })
        if args.alpha is not None:
            result["alpha"] = mp.mpf(args.alpha)
            result["abar"] = moments.abar(k, d, args.alpha)
            result["gamma_star"] = moments.gamma_star(k, args.alpha)
        if args.beta is not None:
            u, c = moments.free_density_tilt(k, args.beta, bits=state.bits)
            result["beta"] = mp.mpf(args.beta)
            result["free_density_exponent"] = moments.free_density_exponent(k, d, args.beta, bits=state.bits)
            result["tilt_u"] = u
            result["tilt_c"] = c
    return Reply(result=result, bits=state.bits)


@router.command(
    "hessian", "transition matrices, L-matrices and the restricted spectrum of F",
    K, D_INT, PRECISION, TOL, FORMAT,
    arg("--skip-pair", action="store_true", help="skip the 49×49 pair matrices"),
)
def cmd_hessian(args: argparse.Namespace) -> Reply:
    k, d = args.k, args.d
    _warn_regime(k)
    state, law = recursions.fixed_point_law(k, d, tol=args.tol, bits=args.precision_bits)
    measure = moments.empirical_from_law(k, d, law, tol=args.tol)
    report = spectral.transition_matrices(measure, pair=not args.skip_pair, tol=args.tol)
    explicit = spectral.explicit_transition_matrices(state)
    verdict = spectral.hessian_definiteness(k, d, report, pair=not args.skip_pair)
    with mp.workprec(state.bits):
        result = {
            "k": k,
            "d": d,
            "regime": state.regime,
            "eig_Mdot": report.eig_Mdot,
            "lambda": explicit.lam,
            "a": explicit.a,
            "b": explicit.b,
            "Mdot_00_00": report.Mdot[SPINS.index("00"), SPINS.index("00")],
            "explicit_gap_Mdot": spectral.max_entry_gap(report.Mdot, explicit.Mdot),
            "explicit_gap_Mhat0": spectral.max_entry_gap(report.Mhat0, explicit.Mhat0),
            "stochastic_defect": report.stochastic_defect,
            "reversibility_defect": report.reversibility_defect,
            "single": verdict.single,
            "pair": verdict.pair,
        }
    return Reply(result=result, bits=state.bits)


@router.command(
    "pair", "pair recursions from a perturbed start and the pair rate at the two maximizers",
    K, D_INT, PRECISION, TOL, FORMAT,
    arg("--eps", type=real, default=None, help="perturbation size (default k/2^{k/2+1})"),
)
def cmd_pair(args: argparse.Namespace) -> Reply:
    k, d = args.k, args.d
    _warn_regime(k)
    state = recursions.iterate_qv(k, d, tol=args.tol, bits=args.precision_bits)
    target = recursions.product_pair_state(state)
    start = recursions.perturbed_pair_state(state, eps=args.eps)
    fixed = recursions.pair_iterate(k, d, start, tol=args.tol, bits=state.bits)
    rate = moments.pair_rate(k, d, tol=args.tol, bits=state.bits)
    with mp.workprec(state.bits):
        distance = max(abs(fixed.qdot[s] - target.qdot[s]) for s in recursions.PAIR_LETTERS)
        result = {
            "k": k,
            "d": d,
            "regime": state.regime,
            "start_in_regime": start.regime_ok,
            "converged": fixed.converged,
            "iterations": fixed.iterations,
            "residual": fixed.residual,
            "distance_to_product": distance,
            "qdot": fixed.qdot,
            "rate_product": rate.product,
            "rate_identical": rate.identical,
            "phi_star": rate.phi_star,
            "twice_phi_star": 2 * rate.phi_star,
            "zhat_pair_defect": rate.zhat_pair_defect,
            "diagonal_defect": rate.diagonal_defect,
        }
    return Reply(result=result, bits=state.bits)

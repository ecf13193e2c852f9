import pytest
from mpmath import mp

from app.services import moments, recursions
from app.services.auxiliary import SPINS
from app.services.errors import DomainError, InputError, NonConvergenceError
from app.services.numeric import default_tol


@pytest.mark.parametrize("k", [10, 15, 20, 25, 30])
def test_fixed_point_quality(k):
    d = mp.nint(moments.find_d_star(k))
    state = recursions.iterate_qv(k, d)
    assert state.bits == 4 * k + 64
    with mp.workprec(state.bits):
        assert state.residual < default_tol(k)
        scaled = mp.ldexp(state.q_free, k)
        assert abs(scaled - mp.mpf(1) / 2) <= 5 * k ** 2 / mp.mpf(2) ** k


def test_maps_at_the_fixed_point(k15):
    state = k15["state"]
    with mp.workprec(state.bits):
        assert mp.almosteq(recursions.v_map(state.k, state.q), state.v, abs_eps=mp.mpf(10) ** -30)
        assert abs(recursions.q_map(state.k, state.d, state.v) - state.q) < default_tol(15)
        assert state.Q == (state.q / 2) ** 14


def test_contraction_slope_is_small(k15):
    slope = recursions.contraction_slope(k15["state"])
    assert abs(slope) < 15 ** 2 / mp.mpf(2) ** 15 * 4


def test_d_of_q_inverts_the_recursion(k15):
    state = k15["state"]
    with mp.workprec(state.bits):
        assert abs(recursions.d_of_q(15, state.q, bits=state.bits) - state.d) < mp.mpf("1e-6")


def test_d_of_q_domain():
    with pytest.raises(DomainError):
        recursions.d_of_q(15, 1)
    with pytest.raises(DomainError):
        recursions.d_of_q(15, 0)


def test_input_validation():
    with pytest.raises(InputError):
        recursions.iterate_qv(2, 10)
    with pytest.raises(InputError):
        recursions.iterate_qv(5, 1)
    with pytest.raises(DomainError):
        recursions.iterate_qv(5, 10, q0=2)


def test_non_convergence_is_reported():
    with pytest.raises(NonConvergenceError):
        recursions.iterate_qv(15, 170000, max_iter=1)


def test_rf_law_is_a_bethe_fixed_point(k15):
    rf = recursions.rf_law_from_scalar(k15["state"])
    with mp.workprec(rf.bits):
        assert mp.almosteq(sum(rf.gdot.values()), 1, abs_eps=mp.mpf(10) ** -30)
        assert mp.almosteq(sum(rf.ghat.values()), 1, abs_eps=mp.mpf(10) ** -30)
        assert rf.residual < default_tol(15) * recursions.CONSISTENCY_FACTOR


def test_zof_law_is_a_bethe_fixed_point(k15):
    law = k15["law"]
    with mp.workprec(law.bits):
        assert recursions.bethe_residual(15, k15["d"], law) < default_tol(15) * recursions.CONSISTENCY_FACTOR
        assert mp.almosteq(sum(law.hdot), 1, abs_eps=mp.mpf(10) ** -30)
        assert mp.almosteq(sum(law.hhat), 1, abs_eps=mp.mpf(10) ** -30)
        # закон симметричен относительно 0 <-> 1
        flipped = law.relabeled()
        for s in SPINS:
            assert mp.almosteq(flipped.dot(s), law.dot(s), abs_eps=mp.mpf(10) ** -35)
            assert mp.almosteq(flipped.hat(s), law.hat(s), abs_eps=mp.mpf(10) ** -35)


def test_uniform_law_is_not_a_fixed_point():
    with mp.workprec(124):
        u = tuple(mp.mpf(1) / 7 for _ in SPINS)
        law = recursions.MessageLaw(k=15, d=mp.mpf(170000), hdot=u, hhat=u, zdot=mp.one, zhat=mp.one,
                                    residual=mp.nan, bits=124)
    assert recursions.bethe_residual(15, 170000, law) > mp.mpf("1e-3")


def test_product_state_is_a_pair_fixed_point(k15):
    state = k15["state"]
    product = recursions.product_pair_state(state)
    with mp.workprec(state.bits):
        new = recursions.pair_variable_map(15, state.d, recursions.pair_clause_map(15, product.qdot))
        assert max(abs(new[s] - product.qdot[s]) for s in recursions.PAIR_LETTERS) < mp.mpf(10) ** -30
        assert mp.almosteq(sum(product.qdot.values()), 1, abs_eps=mp.mpf(10) ** -30)


def test_pair_iteration_returns_to_product(k15):
    state = k15["state"]
    start = recursions.perturbed_pair_state(state)
    assert start.regime_ok
    fixed = recursions.pair_iterate(15, k15["d"], start)
    target = recursions.product_pair_state(state)
    assert fixed.converged
    with mp.workprec(state.bits):
        assert max(abs(fixed.qdot[s] - target.qdot[s]) for s in recursions.PAIR_LETTERS) < mp.mpf("1e-20")


def test_regime_tag():
    assert recursions.regime_of(9) == "qualitative"
    assert recursions.regime_of(10) == "proven"

import itertools

import pytest
from mpmath import mp

from app.services import moments, recursions
from app.services.auxiliary import SPINS, clause_factor
from app.services.errors import DomainError, InputError, SizeGuardError
from app.services.numeric import default_tol
from app.services.recursions import MessageLaw

TIGHT = mp.mpf("1e-20")
LOOSE = default_tol(15) * recursions.CONSISTENCY_FACTOR


# ====== Первый момент и границы ======

@pytest.mark.parametrize("k", [3, 10, 20])
def test_working_bounds_are_ordered(k):
    th = moments.thresholds(k)
    assert th.d_lbd < th.d_fm < th.d_ubd


def test_phi_vanishes_at_first_moment_threshold():
    th = moments.thresholds(12)
    assert abs(moments.phi_first(12, th.d_fm)) < mp.mpf("1e-12")


@pytest.mark.parametrize("k", range(10, 31, 4))
def test_d_star_lies_between_bounds(k):
    th = moments.thresholds(k)
    d_star = moments.find_d_star(k)
    assert th.d_lbd < d_star < th.d_ubd
    assert abs(moments.phi_star(k, d_star)) < mp.mpf("1e-6")


def test_d_star_asymptotic_trend():
    ratios = []
    for k in range(15, 31, 3):
        gap = abs(moments.find_d_star(k) - moments.d_star_asymptotic(k))
        ratios.append(gap * mp.mpf(2) ** k / k ** 3)
    assert max(ratios) < 50


def test_d_star_needs_k_at_least_three():
    with pytest.raises(InputError):
        moments.find_d_star(2)


@pytest.mark.parametrize("k", [15, 20, 25, 30])
def test_frozen_gap_identity(k):
    d = moments.find_d_star(k)
    gap = moments.frozen_gap(k, d)
    assert abs(gap) <= 10 * mp.mpf(k) ** 2 / mp.mpf(4) ** k


def test_phi_star_decreases_with_slope_of_phi():
    k = 15
    th = moments.thresholds(k)
    target = -mp.mpf(2) / (mp.mpf(2) ** k * k)
    h = mp.mpf("0.01")
    for i in range(50):
        d = th.d_lbd + (th.d_ubd - th.d_lbd) * (i + mp.mpf(1) / 2) / 50
        slope = (moments.phi_star(k, d + h) - moments.phi_star(k, d - h)) / (2 * h)
        assert slope < 0
        assert target / 2 < slope < target * 2


# ====== Второй момент ======

def test_abar_maximized_at_half():
    k = 20
    d = moments.thresholds(k).d_lbd
    with mp.workprec(160):
        top = moments.abar(k, d, mp.mpf(1) / 2)
        assert mp.almosteq(top, moments.phi_first(k, d), abs_eps=mp.mpf(10) ** -40)
        for i in range(1, 1000):
            assert moments.abar(k, d, mp.mpf(i) / 1000) <= top + mp.mpf(10) ** -40


def test_gamma_star_maximizes_a_full():
    k, d = 12, moments.thresholds(12).d_lbd
    with mp.workprec(160):
        for alpha in (mp.mpf("0.1"), mp.mpf("0.37"), mp.mpf("0.5")):
            g = moments.gamma_star(k, alpha)
            best = moments.a_full(k, d, alpha, g)
            assert mp.almosteq(best, moments.abar(k, d, alpha), abs_eps=mp.mpf(10) ** -35)
            for shift in (mp.mpf("1e-6"), -mp.mpf("1e-6")):
                assert moments.a_full(k, d, alpha, g + shift) < best


def test_second_moment_domain():
    with pytest.raises(DomainError):
        moments.abar(10, 3000, 0)
    with pytest.raises(DomainError):
        moments.a_full(10, 3000, mp.mpf("0.5"), 1)


# ====== Плотность свободных ======

def test_free_density_tilt_solves_the_mean_equation():
    k = 15
    beta = mp.ldexp(mp.one, -(k + 1))
    u, c = moments.free_density_tilt(k, beta)
    with mp.workprec(4 * k + 64):
        p = moments._free_density_weights(k, mp.mpf(beta))
        mean = sum(j * p[j] * u ** j for j in range(k + 1)) / c
        assert mp.almosteq(mean, k * beta, rel_eps=mp.mpf(10) ** -25)


def test_free_density_exponent_argmax():
    k = 15
    d = mp.nint(moments.find_d_star(k))
    grid = [mp.ldexp(mp.one, -(k + 6)) * mp.mpf(2) ** (mp.mpf(i) / 8) for i in range(0, 81)]
    values = [moments.free_density_exponent(k, d, b) for b in grid]
    best = grid[max(range(len(grid)), key=lambda i: values[i])]
    ref = mp.ldexp(mp.one, -(k + 1))
    assert ref / 2 <= best <= 2 * ref


def test_free_density_domain():
    with pytest.raises(DomainError):
        moments.free_density_tilt(10, mp.mpf("0.5"))


def test_fixed_point_free_density_within_cap(k15):
    check = moments.fixed_point_free_density(k15["state"])
    assert check.within_cap
    assert 0 < check.value < check.beta_max


# ====== Мера и функционал Бете ======

def test_three_way_exponent_agreement(k15):
    state, measure = k15["state"], k15["measure"]
    point = moments.phi_bethe(15, k15["d"], measure)
    star = moments.phi_star_of_state(state)
    with mp.workprec(state.bits):
        assert abs(star - point.explicit) < TIGHT
        assert abs(star - point.value) < TIGHT
        assert point.regime == "proven"


def test_explicit_normalizers_match_measure(k15):
    norms = moments.explicit_normalizers(k15["state"])
    measure = k15["measure"]
    with mp.workprec(measure.bits):
        assert mp.almosteq(norms.zdot_bar, measure.zdot_bar, rel_eps=LOOSE)
        assert mp.almosteq(norms.zhat_bar, measure.zhat_bar, rel_eps=LOOSE)
        assert mp.almosteq(norms.z_bar, measure.z_bar, rel_eps=LOOSE)
        for a, b in zip(moments.explicit_vh(k15["state"]), measure.vh):
            assert abs(a - b) < LOOSE


def test_measure_marginals_and_symmetry(k15):
    measure = k15["measure"]
    with mp.workprec(measure.bits):
        assert mp.almosteq(sum(measure.vh), 1, abs_eps=mp.mpf(10) ** -30)
        for a, b in zip(measure.variable_marginal(), measure.vh):
            assert abs(a - b) < LOOSE
        for a, b in zip(measure.clause_marginal(), measure.vh):
            assert abs(a - b) < LOOSE
        flipped = measure.relabeled()
        for a, b in zip(flipped.vh, measure.vh):
            assert abs(a - b) < LOOSE
        assert measure.identity_residual < LOOSE


def test_prefactor_reported_only_without_truncation(k15):
    point = moments.phi_bethe(15, k15["d"], k15["measure"])
    if k15["measure"].truncated:
        assert point.log_prefactor is None
    else:
        assert point.dimension > 0
        assert point.log_prefactor is not None


def test_small_untruncated_measure_has_prefactor():
    k, d = 10, 4
    _, law = recursions.fixed_point_law(k, d)
    measure = moments.empirical_from_law(k, d, law)
    assert not measure.truncated
    point = moments.phi_bethe(k, d, measure)
    assert point.dimension == (
        sum(c.mult for c in measure.variable) + sum(c.mult for c in measure.clause) - len(SPINS) - 1
    )
    assert mp.isfinite(point.log_prefactor)


def test_kernel_perturbation_lowers_the_functional(k15):
    """Сдвиг масс xx^j, j = 2, 3, 4, на (+ε, -2ε, +ε) сохраняет маргиналы и уменьшает Φ̄."""
    measure = k15["measure"]
    base = moments.phi_bethe(15, k15["d"], measure).value
    with mp.workprec(measure.bits):
        variable = list(measure.variable)
        xx = SPINS.index("00")
        idx = {c.counts[xx]: i for i, c in enumerate(variable) if c.counts[xx] >= 2}
        eps = min(variable[idx[j]].mass for j in (2, 3, 4)) * mp.mpf("1e-6")
        for j, sign in ((2, 1), (3, -2), (4, 1)):
            c = variable[idx[j]]
            variable[idx[j]] = moments.SpinClass(counts=c.counts, mult=c.mult, psi=c.psi, mass=c.mass + sign * eps)
        shifted = moments.EmpiricalMeasure(
            k=measure.k, d=measure.d, variable=variable, clause=measure.clause,
            clause_zero=measure.clause_zero, vh=measure.vh, zdot_bar=measure.zdot_bar,
            zhat_bar=measure.zhat_bar, z_bar=measure.z_bar, truncated=measure.truncated, bits=measure.bits,
        )
        assert moments.phi_bethe(15, k15["d"], shifted).value < base


def test_empirical_measure_needs_integer_degree(k15):
    with pytest.raises(InputError):
        moments.empirical_from_law(15, mp.mpf(k15["d"]) + mp.mpf("0.5"), k15["law"])


# ====== Парная модель ======

def _random_law(k: int) -> MessageLaw:
    with mp.workprec(120):
        raw = [mp.mpf(i + 2) / 17 for i in range(len(SPINS))]
        raw2 = [mp.mpf(len(SPINS) - i) / 19 for i in range(len(SPINS))]
        hdot = tuple(x / sum(raw) for x in raw)
        hhat = tuple(x / sum(raw2) for x in raw2)
        return MessageLaw(k=k, d=mp.mpf(5), hdot=hdot, hhat=hhat, zdot=mp.one, zhat=mp.one, residual=mp.nan, bits=120)


@pytest.mark.parametrize("k", [3, 4])
def test_pair_clause_term_matches_oracle(k):
    law = _random_law(k)
    fast = moments.pair_clause_term(k, law)
    slow = moments.pair_clause_oracle(k, law)
    with mp.workprec(120):
        assert mp.almosteq(fast.log_zhat_pair, slow.log_zhat_pair, abs_eps=mp.mpf(10) ** -25)
        assert mp.almosteq(fast.expected_log, slow.expected_log, abs_eps=mp.mpf(10) ** -25)


def test_pair_oracle_size_guard():
    with pytest.raises(SizeGuardError):
        moments.pair_clause_oracle(5, _random_law(5))


def test_pair_rate_at_the_two_maximizers(k15):
    rate = moments.pair_rate(15, k15["d"])
    with mp.workprec(k15["state"].bits):
        assert abs(rate.product - 2 * rate.phi_star) < TIGHT
        assert abs(rate.identical - rate.phi_star) < TIGHT
        assert rate.zhat_pair_defect < TIGHT
        assert rate.diagonal_defect < TIGHT


def _diagonal_by_enumeration(k: int, law: MessageLaw):
    with mp.workprec(law.bits):
        h = dict(zip(SPINS, law.hdot))
        z = mp.zero
        acc = mp.zero
        for L in itertools.product((0, 1), repeat=k):
            for spins in itertools.product(SPINS, repeat=k):
                if not clause_factor(spins, L):
                    continue
                w = mp.one
                for s in spins:
                    w *= h[s]
                z += w
                acc += w * sum(mp.log(h[s]) for s in spins)
        scale = mp.ldexp(mp.one, -k)
        return mp.log(z * scale), acc / z


def test_diagonal_clause_term_matches_enumeration():
    law = _random_law(3)
    term = moments.diagonal_clause_term(3, law)
    log_z, expected = _diagonal_by_enumeration(3, law)
    with mp.workprec(120):
        assert mp.almosteq(term.log_zhat_pair, log_z, abs_eps=mp.mpf(10) ** -25)
        assert mp.almosteq(term.expected_log, expected, abs_eps=mp.mpf(10) ** -25)
        assert mp.almosteq(term.value, log_z - expected, abs_eps=mp.mpf(10) ** -25)


def test_identical_rate_uses_the_diagonal_clause_term(k15, monkeypatch):
    base = moments.pair_rate(15, k15["d"])
    original = moments.diagonal_clause_term

    def shifted(k, law):
        term = original(k, law)
        term.value += 1
        return term

    monkeypatch.setattr(moments, "diagonal_clause_term", shifted)
    moved = moments.pair_rate(15, k15["d"])
    with mp.workprec(k15["state"].bits):
        assert abs(moved.identical - base.identical - mp.mpf(k15["d"]) / 15) < TIGHT
        assert moved.product == base.product

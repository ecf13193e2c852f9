from fractions import Fraction

import pytest

from app.services.errors import InputError, NotASolutionError
from app.services.frozen import (
    FREE,
    FrozenConfig,
    TruncationPolicy,
    cluster_preimage,
    coarsen,
    enumerate_frozen,
    forcing_slots,
    free_density,
    is_valid_frozen,
    parse_eta,
)
from app.services.graphs import FactorGraph
from app.services.naesat_core import count_solutions, is_nae_solution


def test_parse_eta_and_str():
    eta = parse_eta("01f")
    assert eta == (0, 1, FREE)
    assert str(FrozenConfig(eta=eta)) == "01f"
    assert free_density(eta) == Fraction(1, 3)
    with pytest.raises(InputError):
        parse_eta("01x")


def test_truncation_policy():
    assert TruncationPolicy.for_k(3).cap(8) == 7
    assert TruncationPolicy.unrestricted().cap(5) == 5
    with pytest.raises(InputError):
        TruncationPolicy(beta_max=Fraction(0))


def test_coarsen_rejects_non_solution():
    g = FactorGraph(n=3, m=1, d=1, k=3, var_of_slot=(0, 1, 2))
    with pytest.raises(NotASolutionError):
        coarsen(g, (0, 0, 0), (1, 1, 1))


def test_single_clause_coarsens_to_free():
    # освобождение переменной 0 снимает форсирование переменной 2
    g = FactorGraph(n=3, m=1, d=1, k=3, var_of_slot=(0, 1, 2))
    L = (0, 0, 0)
    x = (0, 0, 1)
    assert forcing_slots(g, L, x) == [2]
    eta = coarsen(g, L, x)
    assert eta.eta == (FREE, FREE, FREE)
    assert is_valid_frozen(g, L, eta.eta)


def test_one_free_slot_with_constant_rigid_part_is_invalid():
    g = FactorGraph(n=3, m=1, d=1, k=3, var_of_slot=(0, 1, 2))
    assert not is_valid_frozen(g, (0, 0, 0), (0, 0, FREE))
    assert not is_valid_frozen(g, (0, 0, 0), (0, 0, 0))
    assert not is_valid_frozen(g, (0, 0, 0), (0, 1))


def test_every_coarsening_is_valid(oracle_instances):
    for g, L in oracle_instances:
        if g.n > 8:
            continue
        for x in count_solutions(g, L, keep_solutions=True).solutions:
            eta = coarsen(g, L, x)
            assert is_valid_frozen(g, L, eta.eta)
            # жёсткие значения совпадают с x
            assert all(e == FREE or e == b for e, b in zip(eta.eta, x))


def test_cluster_preimages_partition_solutions(small_instances):
    policy = TruncationPolicy.unrestricted()
    for g, L in small_instances:
        sols = set(count_solutions(g, L, keep_solutions=True).solutions)
        frozen = enumerate_frozen(g, L, policy)
        assert len(set(frozen)) == len(frozen)
        covered = set()
        for c in frozen:
            pre = cluster_preimage(g, L, c.eta)
            assert not (pre & covered)
            covered |= pre
        assert covered == sols
        # образ каждого решения лежит в перечислении
        listed = {c.eta for c in frozen}
        assert all(coarsen(g, L, x).eta in listed for x in sols)


def test_enumerate_frozen_respects_cap(small_instances):
    for g, L in small_instances[:20]:
        policy = TruncationPolicy(beta_max=Fraction(1, 3))
        cap = policy.cap(g.n)
        for c in enumerate_frozen(g, L, policy):
            assert c.free_count <= cap
            assert is_valid_frozen(g, L, c.eta)


def test_preimage_of_invalid_configuration_is_empty():
    g = FactorGraph(n=3, m=1, d=1, k=3, var_of_slot=(0, 1, 2))
    assert cluster_preimage(g, (0, 0, 0), (0, 0, 0)) == set()
    assert is_nae_solution(g, (0, 0, 0), (0, 0, 1))

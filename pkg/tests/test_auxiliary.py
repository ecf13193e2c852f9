import itertools

import pytest

from app.services import auxiliary
from app.services.auxiliary import (
    PROJECTION,
    SPINS,
    AuxConfig,
    aux_partition,
    aux_to_frozen,
    clause_factor,
    clause_rule,
    complete_to_solution,
    enumerate_aux,
    factor_weight,
    flip_spin,
    frozen_to_aux,
    is_valid_aux,
    literal_average_clause_weight,
    local_variable_configs,
    variable_factor,
    vertex_rule,
)
from app.services.errors import InputError, InvalidConfigurationError
from app.services.frozen import FREE, TruncationPolicy, coarsen, enumerate_frozen
from app.services.graphs import FactorGraph
from app.services.naesat_core import count_solutions, is_nae_solution


def test_message_rules():
    assert vertex_rule(["f", "f"]) == "f"
    assert vertex_rule(["0", "f"]) == "0"
    assert vertex_rule(["0", "1"]) == "UNSAT"
    # остальные слоты дают оценку 1, значит цель получает 0
    assert clause_rule(["1", "1"], (0, 0, 0), 2) == "0"
    assert clause_rule(["1", "0"], (0, 0, 0), 2) == "f"
    assert clause_rule(["f", "1"], (0, 0, 0), 2) == "f"
    with pytest.raises(InputError):
        clause_rule(["1"], (0, 0, 0), 2)


def test_flip_spin():
    assert flip_spin("0f") == "1f"
    assert flip_spin("f1") == "f0"
    assert flip_spin("ff") == "ff"


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_local_variable_configs_are_the_support(d):
    support = {c for c in itertools.product(SPINS, repeat=d) if variable_factor(c)}
    assert set(local_variable_configs(d)) == support


@pytest.mark.parametrize("d", [2, 3])
def test_variable_table_matches_rules(d):
    for spins in itertools.product(SPINS, repeat=d):
        assert factor_weight("variable", spins) == variable_factor(spins)


@pytest.mark.parametrize("k", [3, 4])
def test_clause_zero_table_matches_rules(k):
    for spins in itertools.product(SPINS, repeat=k):
        assert factor_weight("clause_zero", spins) == clause_factor(spins, (0,) * k)


def test_averaged_clause_table_matches_literal_average():
    for spins in itertools.product(SPINS, repeat=3):
        assert factor_weight("clause", spins) == literal_average_clause_weight(spins)


def test_averaged_clause_depends_on_projection_only():
    for spins in itertools.product(SPINS, repeat=3):
        rf = tuple(PROJECTION[s] for s in spins)
        assert factor_weight("clause", spins) == factor_weight("clause_rf", rf)


def test_factor_weight_rejects_unknown_input():
    with pytest.raises(InputError):
        factor_weight("edge", ("ff",))
    with pytest.raises(InputError):
        factor_weight("variable", ("zz",))
    with pytest.raises(InputError):
        factor_weight("variable_rf", ("0f",))


def test_frozen_and_aux_counts_agree(small_instances):
    policy = TruncationPolicy.unrestricted()
    for g, L in small_instances:
        frozen = enumerate_frozen(g, L, policy)
        aux = enumerate_aux(g, L, policy)
        assert len(frozen) == len(aux) == aux_partition(g, L, policy)
        images = {frozen_to_aux(g, L, c.eta) for c in frozen}
        assert images == set(aux)
        for sigma in aux:
            assert is_valid_aux(g, L, sigma)
            eta = aux_to_frozen(g, sigma, L)
            assert frozen_to_aux(g, L, eta.eta) == sigma


def test_truncated_counts_agree(small_instances):
    for g, L in small_instances[:30]:
        policy = TruncationPolicy.for_k(g.k)
        assert len(enumerate_frozen(g, L, policy)) == len(enumerate_aux(g, L, policy))


def test_bijection_rejects_invalid_input():
    g = FactorGraph(n=3, m=1, d=1, k=3, var_of_slot=(0, 1, 2))
    with pytest.raises(InvalidConfigurationError):
        frozen_to_aux(g, (0, 0, 0), (0, 0, 0))
    with pytest.raises(InvalidConfigurationError):
        aux_to_frozen(g, AuxConfig(spins=("00", "11", "ff")), (0, 0, 0))


def test_completion_oracle(oracle_instances):
    checked = 0
    for g, L in oracle_instances:
        if g.n > 8:
            continue
        sols = count_solutions(g, L, keep_solutions=True).solutions
        for eta in {coarsen(g, L, x).eta for x in sols}:
            result = complete_to_solution(g, L, eta, seed=checked)
            simple = all(c.cycles <= 1 for c in result.components)
            assert result.ok == simple
            if result.ok:
                checked += 1
                assert is_nae_solution(g, L, result.assignment)
                assert all(e == FREE or e == b for e, b in zip(eta, result.assignment))
            else:
                assert result.failed_component.cycles >= 2
    assert checked > 0


def test_completion_is_reproducible(oracle_instances):
    for g, L in oracle_instances[:40]:
        x = count_solutions(g, L, keep_solutions=True).solutions
        if not x:
            continue
        eta = coarsen(g, L, x[0]).eta
        assert complete_to_solution(g, L, eta, 5) == complete_to_solution(g, L, eta, 5)


def test_completion_reports_violated_clause_as_failure(monkeypatch, caplog):
    g = FactorGraph(n=3, m=1, d=1, k=3, var_of_slot=(0, 1, 2))
    L = (0, 0, 0)
    eta = coarsen(g, L, (0, 0, 1)).eta
    assert complete_to_solution(g, L, eta, 1).ok

    monkeypatch.setattr(auxiliary, "evaluate_clause", lambda g, L, x, a: (0,) * g.k)
    with caplog.at_level("ERROR", logger="app.services.auxiliary"):
        result = complete_to_solution(g, L, eta, 1)
    assert not result.ok
    assert result.assignment is None
    assert result.failed_component.clauses == (0,)
    assert "violated clause 0" in caplog.text

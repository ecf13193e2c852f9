import pytest

from app.services import experiments
from app.services.errors import InputError


def test_trial_seeds_are_deterministic_and_distinct():
    a = experiments.trial_seeds(7, 0, 0)
    assert a == experiments.trial_seeds(7, 0, 0)
    assert len(a) == 3
    others = {experiments.trial_seeds(7, r, t) for r in range(3) for t in range(5)}
    assert len(others) == 15
    assert experiments.trial_seeds(8, 0, 0) != a
    assert len(experiments.trial_seeds(7, 0, 0, words=1)) == 1


def test_sweep_is_reproducible():
    first = experiments.sat_sweep(3, [2, 3], n=6, trials=8, seed=11, n_jobs=1)
    second = experiments.sat_sweep(3, [2, 3], n=6, trials=8, seed=11, n_jobs=1)
    assert first.model_dump() == second.model_dump()
    assert first.regime == "qualitative"
    assert "wall_time" not in first.model_dump()["rows"][0]
    for row in first.rows:
        assert row.budget_exhausted == 0
        assert 0 <= row.sat <= row.trials
        # для маленьких n доля выполнимых совпадает с долей Z > 0
        assert row.mean_Z is not None


def test_sweep_rejects_bad_sizes():
    with pytest.raises(InputError):
        experiments.sat_sweep(3, [2], n=7, trials=2, seed=0)
    with pytest.raises(InputError):
        experiments.sat_sweep(3, [3], n=6, trials=0, seed=0)
    with pytest.raises(InputError):
        experiments.sat_sweep(2, [2], n=6, trials=2, seed=0)


def test_free_density_histogram():
    hist = experiments.free_density_histogram(3, 3, 6, trials=10, seed=3, bins=5, n_jobs=1)
    assert len(hist.counts) == 5
    assert len(hist.edges) == 6
    assert sum(hist.counts) == hist.samples
    assert hist.empty == (hist.samples == 0)
    assert hist.reference == 2.0 ** -4
    if hist.samples:
        assert 0 <= hist.mean_beta <= 1


def test_survival():
    out = experiments.simulate_coarsening_survival(10, 12, 50, 0.1, trials=20, seed=5, n_jobs=1)
    assert 0 <= out.probability <= 1
    assert out.steps_required == 5
    again = experiments.simulate_coarsening_survival(10, 12, 50, 0.1, trials=20, seed=5, n_jobs=1)
    assert again.model_dump() == out.model_dump()


def test_survival_bound_at_zero():
    assert experiments.survival_log_bound(10, 12, 50, 0.0) == 0.0
    assert experiments.survival_theta(3) == 1.0


def test_survival_rejects_bad_target():
    with pytest.raises(InputError):
        experiments.simulate_coarsening_survival(10, 12, 50, 1.5, trials=2, seed=0)


def test_ez_without_clauses_is_exact():
    out = experiments.sample_EZ(3, 0, 5, trials=4, seed=0, n_jobs=1)
    assert out.mean == out.expected == 32
    assert out.std_error == 0.0
    assert out.covered


def test_ez_rejects_bad_confidence():
    with pytest.raises(InputError):
        experiments.sample_EZ(3, 3, 6, trials=4, seed=0, confidence=1.0)


@pytest.mark.slow
def test_ez_interval_calibration():
    covered = sum(
        experiments.sample_EZ(3, 3, 8, trials=400, seed=r, n_jobs=1).covered
        for r in range(30)
    )
    assert covered >= 24

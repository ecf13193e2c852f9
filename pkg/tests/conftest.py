from pathlib import Path

import pytest
from mpmath import mp

from app.services import moments, recursions, spectral
from app.services.graphs import generate_graph, generate_literals

DATA = Path(__file__).resolve().parents[1] / "data"

# (n, d, k): n·d делится на k, n ≤ 10
TINY_SHAPES = [
    (3, 2, 3), (6, 2, 3), (9, 2, 3), (4, 3, 3), (5, 3, 3), (6, 3, 3), (7, 3, 3), (8, 3, 3),
    (4, 2, 4), (6, 2, 4), (8, 2, 4), (4, 3, 4), (8, 3, 4), (4, 4, 4), (5, 4, 4), (6, 4, 4),
]


def tiny_instances(count: int, max_n: int = 10, max_d: int = 4):
    shapes = [s for s in TINY_SHAPES if s[0] <= max_n and s[1] <= max_d]
    out = []
    seed = 0
    while len(out) < count:
        n, d, k = shapes[seed % len(shapes)]
        g = generate_graph(n, d, k, seed)
        out.append((g, generate_literals(g, seed + 10_000)))
        seed += 1
    return out


@pytest.fixture(scope="session")
def oracle_instances():
    return tiny_instances(200)


@pytest.fixture(scope="session")
def small_instances():
    return tiny_instances(60, max_n=6, max_d=3)


@pytest.fixture(scope="session")
def contradiction_path():
    return DATA / "contradiction.naesat"


@pytest.fixture(scope="session")
def k15():
    """k = 15, d = round(d*): неподвижная точка, мера и матрицы перехода."""
    k = 15
    d_star = moments.find_d_star(k)
    d = int(mp.nint(d_star))
    state, law = recursions.fixed_point_law(k, d)
    measure = moments.empirical_from_law(k, d, law)
    report = spectral.transition_matrices(measure, pair=False)
    return {
        "k": k, "d": d, "d_star": d_star, "state": state, "law": law,
        "measure": measure, "report": report,
    }

"""Seeded property suites; each runs at least 100 random instances."""

import numpy as np
import pytest

from nlqc import bounds, protocols, qcore
from nlqc import gardenhose as gh
from nlqc.qcore import binary_entropy

COUNT = 100


def nearby_pair(d, rng):
    rho = qcore.random_density(d, rng, rank=int(rng.integers(1, d + 1)))
    t = rng.random() * 10.0 ** -rng.integers(0, 4)
    sigma = (1 - t) * rho + t * qcore.random_density(d, rng)
    return rho, sigma


def mi_bound(eps, n_a):
    return 4 * n_a * eps + (1 + 2 * eps) * binary_entropy(2 * eps / (1 + 2 * eps))


def test_mutual_information_continuity():
    rng = np.random.default_rng(100)
    violations = 0
    for _ in range(COUNT):
        na, nb = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        dims = (2**na, 2**nb)
        rho, sigma = nearby_pair(dims[0] * dims[1], rng)
        eps = qcore.trace_distance(rho, sigma)
        gap = abs(qcore.mutual_information(rho, [0], [1], dims) - qcore.mutual_information(sigma, [0], [1], dims))
        violations += gap > mi_bound(eps, na) + 1e-10
    assert violations == 0


def test_entropy_continuity():
    rng = np.random.default_rng(101)
    violations = 0
    for _ in range(COUNT):
        d = int(rng.integers(2, 9))
        rho, sigma = nearby_pair(d, rng)
        t = qcore.trace_distance(rho, sigma) / 2
        gap = abs(qcore.von_neumann_entropy(rho) - qcore.von_neumann_entropy(sigma))
        violations += gap > t * np.log2(d - 1) + binary_entropy(t) + 1e-10 if d > 2 else gap > binary_entropy(t) + 1e-10
    assert violations == 0


def test_fuchs_van_de_graaf():
    rng = np.random.default_rng(102)
    violations = 0
    for _ in range(COUNT):
        d = int(rng.integers(2, 7))
        rho = qcore.random_density(d, rng, rank=int(rng.integers(1, d + 1)))
        sigma = qcore.random_density(d, rng, rank=int(rng.integers(1, d + 1)))
        f = qcore.fidelity(rho, sigma)
        half = qcore.trace_distance(rho, sigma) / 2
        violations += not (1 - np.sqrt(f) - 1e-9 <= half <= np.sqrt(max(0.0, 1 - f)) + 1e-9)
    assert violations == 0


def random_two_qubit(rng):
    kind = rng.integers(3)
    if kind == 0:
        return qcore.random_density(4, rng, rank=int(rng.integers(1, 5)))
    if kind == 1:
        # separable mixture of product states
        k = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(k))
        return sum(wi * np.kron(qcore.random_density(2, rng), qcore.random_density(2, rng)) for wi in w)
    # Werner-like family straddling the separability threshold
    p = rng.random()
    return p * bounds.PSI_PLUS + (1 - p) * np.eye(4) / 4


def test_ef_faithful_against_ppt():
    rng = np.random.default_rng(103)
    violations = 0
    for _ in range(3 * COUNT):
        rho = random_two_qubit(rng)
        ef = bounds.entanglement_of_formation(rho)
        pt_min = np.linalg.eigvalsh(qcore.partial_transpose(rho, (2, 2), 1)).min()
        if abs(pt_min) < 1e-9:
            continue  # boundary: both tests are numerically ambiguous
        violations += (ef > 1e-9) != (pt_min < 0)
    assert violations == 0


def random_qubit_channel(rng):
    k = int(rng.integers(1, 4))
    v = qcore.haar_unitary(2 * k, rng)[:, :2]
    return [v[2 * i:2 * i + 2, :] for i in range(k)]


def test_ef_data_processing():
    rng = np.random.default_rng(104)
    violations = 0
    for _ in range(COUNT):
        rho = random_two_qubit(rng)
        kraus = random_qubit_channel(rng)
        out = sum(np.kron(np.eye(2), k) @ rho @ np.kron(np.eye(2), k).conj().T for k in kraus)
        violations += bounds.entanglement_of_formation(out) > bounds.entanglement_of_formation(rho) + 1e-9
    assert violations == 0


def random_correct_programs(rng, count):
    progs = []
    while len(progs) < count:
        progs.append(gh.random_program(1, int(rng.integers(1, 4)), rng))
    return progs


def test_decoupling_biconditional():
    """For perfectly correct f-routing, the structure function vanishes exactly on f = 0."""
    rng = np.random.default_rng(105)
    checked = violations = 0
    for prog in random_correct_programs(rng, 30):
        f = gh.function_of(prog)
        p = gh.to_quantum(prog)
        if max(gh.routing_residuals(p, f).values()) > 1e-9:
            violations += 1
            continue
        for x, y in f.inputs():
            g = bounds.structure_function(p, x, y)
            violations += (g > 1e-9) != bool(f(x, y))
            checked += 1
    assert checked >= COUNT and violations == 0


def random_protocols(rng):
    yield protocols.routing_protocol()
    yield protocols.bb84_measure_protocol()
    yield protocols.clifford_nlqc(protocols.random_clifford(2, rng))
    while True:
        yield gh.to_quantum(gh.random_program(1, int(rng.integers(1, 4)), rng))


def test_left_marginal_independent_of_right_input():
    rng = np.random.default_rng(106)
    checked = violations = 0
    gen = random_protocols(rng)
    while checked < COUNT:
        p = next(gen)
        for x in (0, 1):
            a = protocols.first_round_marginal(p, x, 0)
            b = protocols.first_round_marginal(p, x, 1)
            violations += a.shape != b.shape or np.max(np.abs(a - b)) > 1e-10
            checked += 1
    assert violations == 0


@pytest.mark.parametrize("seed", range(3))
def test_garden_hose_routing_matches_function(seed):
    rng = np.random.default_rng(seed)
    for prog in random_correct_programs(rng, 10):
        f = gh.function_of(prog)
        assert max(gh.routing_residuals(gh.to_quantum(prog), f).values()) <= 1e-9

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize

from nlqc import bounds, qcore
from nlqc import gardenhose as gh

BETA = np.cos(np.pi / 8) ** 2


def ensemble_ef(rho, rng, restarts=3):
    """Independent oracle: minimize the average pure-state entanglement over 4-term ensembles."""
    w, v = np.linalg.eigh(rho)
    base = v * np.sqrt(np.clip(w, 0, None))
    iu, iu1 = np.triu_indices(4), np.triu_indices(4, 1)

    def cost(t):
        h = np.zeros((4, 4), complex)
        h[iu] = t[:10]
        h[iu1] += 1j * t[10:]
        u = expm(1j * (h + h.conj().T))
        total = 0.0
        for i in range(4):
            psi = base @ u[i]
            p = np.vdot(psi, psi).real
            if p > 1e-14:
                s = np.linalg.svd(psi.reshape(2, 2) / np.sqrt(p), compute_uv=False) ** 2
                total += p * qcore.binary_entropy(s[0])
        return total

    return min(minimize(cost, rng.standard_normal(16), method="BFGS").fun for _ in range(restarts))


# ---------------------------------------------------------------- entanglement of formation


def test_ef_examples():
    assert bounds.entanglement_of_formation(bounds.PSI_PLUS) == pytest.approx(1.0)
    assert bounds.entanglement_of_formation(bounds.RHO_CC) == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(0)
    prod = np.kron(qcore.random_density(2, rng), qcore.random_density(2, rng))
    assert bounds.entanglement_of_formation(prod) == pytest.approx(0.0, abs=1e-9)


def test_ef_wrong_dimension():
    with pytest.raises(ValueError):
        bounds.entanglement_of_formation(np.eye(3) / 3)


def test_ef_matches_ensemble_oracle():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(50):
        rho = qcore.random_density(4, rng, rank=int(rng.integers(1, 5)))
        worst = max(worst, abs(bounds.entanglement_of_formation(rho) - ensemble_ef(rho, rng)))
    assert worst <= 1e-4


def test_concurrence_batched():
    rng = np.random.default_rng(1)
    rhos = np.array([qcore.random_density(4, rng) for _ in range(5)])
    batch = bounds.concurrence(rhos)
    single = [bounds.concurrence(r) for r in rhos]
    assert np.allclose(batch, single)


# ---------------------------------------------------------------- gate library


def test_gates_unitary():
    for name, u in bounds.GATES.items():
        assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12), name


def test_rxx_is_exponential():
    assert np.allclose(bounds.GATES["RXX"], expm(-1j * np.pi / 4 * np.kron(qcore.X, qcore.X)))


def test_sqrt_swap_squares_to_swap():
    s = bounds.GATES["sqrtSWAP"]
    assert np.allclose(s @ s, qcore.SWAP)


# ---------------------------------------------------------------- controllable correlation


def test_cnot_witness_exact():
    u = bounds.oriented(bounds.GATES["CNOT"])
    zero, mixed = np.diag([1.0, 0.0]).astype(complex), np.eye(2) / 2
    l1, l2 = bounds.cc_lambdas(u, bounds.RHO_CC, zero, mixed)
    assert l1 == pytest.approx(1.0, abs=1e-12)
    assert l2 == pytest.approx(0.0, abs=1e-12)


def test_cnot_psi_plus_witness():
    # control on A: |+> on B keeps Q:A maximally entangled, |0> leaves it classically correlated
    u = qcore.CNOT
    plus = np.full((2, 2), 0.5, dtype=complex)
    zero = np.diag([1.0, 0.0]).astype(complex)
    l1, l2 = bounds.cc_lambdas(u, bounds.PSI_PLUS, plus, zero)
    assert (l1, l2) == (pytest.approx(2.0), pytest.approx(1.0))


def test_parallel_lift_doubles_lambdas():
    u = bounds.oriented(bounds.GATES["CNOT"])
    zero, mixed = np.diag([1.0, 0.0]).astype(complex), np.eye(2) / 2
    l1, l2 = bounds.cc_lambdas(u, bounds.RHO_CC, zero, mixed)
    m1, m2 = bounds.parallel_lambdas(u, bounds.RHO_CC, zero, mixed)
    assert m1 == pytest.approx(2 * l1, abs=1e-10)
    assert m2 == pytest.approx(2 * l2, abs=1e-10)


@pytest.mark.parametrize("name", ["SWAP", "I"])
def test_not_controllably_correlated(name):
    r = bounds.controllable_correlation(bounds.GATES[name], restarts=4)
    assert r.bound == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("name,expected", [("CT", 0.12), ("CS", 0.30), ("Sycamore", 0.48), ("CNOT", 0.5)])
def test_cc_examples(name, expected):
    r = bounds.controllable_correlation(bounds.GATES[name], restarts=8)
    assert abs(r.bound - expected) <= 0.01
    assert r.lambda1 >= r.lambda2 >= -1e-12


def test_cc_result_reproduces_its_lambdas():
    u = bounds.GATES["CS"]
    r = bounds.controllable_correlation(u, restarts=4)
    l1, l2 = bounds.cc_lambdas(bounds.oriented(u), bounds.REFERENCES[r.reference], r.phi1, r.phi2)
    assert l1 == pytest.approx(r.lambda1, abs=1e-9)
    assert l2 == pytest.approx(r.lambda2, abs=1e-9)


def test_cc_rejects_non_unitary():
    with pytest.raises(ValueError):
        bounds.controllable_correlation(np.ones((4, 4)))


def test_psi_plus_values_orientation_free():
    # with a maximally entangled reference the value depends only on the local class of the gate
    rng = np.random.default_rng(8)
    u = qcore.haar_unitary(4, rng)
    a = bounds.controllable_correlation(u, refs=("psi_plus",), order="AB", restarts=4).bound
    b = bounds.controllable_correlation(u, refs=("psi_plus",), order="BA", restarts=4).bound
    assert a == pytest.approx(b, abs=1e-6)


def test_local_unitaries_do_not_change_ce():
    rng = np.random.default_rng(9)
    loc = np.kron(qcore.haar_unitary(2, rng), qcore.haar_unitary(2, rng))
    u = bounds.GATES["B"]
    a = bounds.controllable_entanglement(u, restarts=4)[0]
    b = bounds.controllable_entanglement(loc @ u, restarts=4)[0]
    assert a == pytest.approx(b, abs=1e-4)


# ---------------------------------------------------------------- controllable entanglement


def test_ce_examples():
    assert bounds.controllable_entanglement(bounds.GATES["CNOT"], restarts=8)[0] == pytest.approx(1.0, abs=1e-3)
    assert bounds.controllable_entanglement(bounds.GATES["B"], restarts=8)[0] == pytest.approx(0.601, abs=0.005)
    for name in ("iSWAP", "CS", "CT", "SWAP"):
        assert bounds.controllable_entanglement(bounds.GATES[name], restarts=8)[0] <= 1e-3


# ---------------------------------------------------------------- histogram


def test_histogram_deterministic():
    a = bounds.cc_histogram(4, seed=3)
    b = bounds.cc_histogram(4, seed=3)
    assert np.array_equal(a["values"], b["values"])
    assert a["counts"].sum() == 4
    assert np.all(a["values"] >= 0)


def test_histogram_needs_samples():
    with pytest.raises(ValueError):
        bounds.cc_histogram(0)


# ---------------------------------------------------------------- delta


def test_delta_error():
    assert bounds.delta_error(0, 3) == 0.0
    xs = np.linspace(0, 1, 101)
    vals = [bounds.delta_error(x, 2) for x in xs]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    xs = np.linspace(0, 0.5, 101)
    vals = np.array([bounds.delta_error(x, 2) for x in xs])
    assert np.all(vals[:-2] - 2 * vals[1:-1] + vals[2:] <= 1e-12)
    with pytest.raises(ValueError):
        bounds.delta_error(-0.1, 1)


# ---------------------------------------------------------------- structure function and nrank


def test_eq_structure_matrix():
    f = gh.builtin("EQ")
    value, rank, g = bounds.rank_bound(gh.garden_hose_routing(f), f)
    assert rank == 2 and value == pytest.approx(0.25)
    assert np.array_equal(g > 1e-9, np.eye(2, dtype=bool))


def test_and_structure_pattern():
    f = gh.builtin("AND")
    g = bounds.structure_matrix(gh.garden_hose_routing(f), f)
    assert np.array_equal(g > 1e-9, f.matrix() == 1)


def test_constant_zero_routing_has_zero_bound():
    f = gh.constant(1, 0)
    p = gh.to_quantum(gh.universal_program(f))
    value, rank, g = bounds.rank_bound(p, f)
    assert value == 0.0 and rank == 0 and np.allclose(g, 0)


@pytest.mark.parametrize("name,n,method", [("EQ", 3, "diagonal"), ("GT", 2, "triangular"), ("DISJ", 2, "anti-triangular")])
def test_nrank_certificates(name, n, method):
    cert = bounds.nrank_certificate(gh.builtin(name, n))
    assert cert["lower"] == 2**n and cert["method"] == method


def test_nrank_permuted():
    f = gh.builtin("EQ", 2)
    shuffled = gh.BooleanFunctionTable(2, f.matrix()[[2, 0, 3, 1]])
    cert = bounds.nrank_certificate(shuffled)
    assert cert["lower"] == 4 and cert["method"] == "permuted-triangular"


def test_nrank_trivial():
    cert = bounds.nrank_certificate(gh.constant(2, 1))
    assert cert == {"lower": 1, "method": "trivial"}


# ---------------------------------------------------------------- monogamy and closed forms


def test_breidbart_value():
    assert bounds.moe_breidbart() == pytest.approx(BETA, abs=1e-9)


def test_moe_bound():
    assert bounds.moe_bound(1, 0.0) == pytest.approx(BETA)
    assert bounds.moe_bound(4, 0.0) == pytest.approx(BETA**4)
    with pytest.raises(ValueError):
        bounds.moe_bound(1, 1.2)
    game = bounds.MoEGame(3, 0.1)
    assert game.bound() == pytest.approx(bounds.moe_bound(3, 0.1))
    with pytest.raises(ValueError):
        bounds.MoEGame(3, 0.6)


def test_product_measure_bound():
    assert bounds.product_measure_bound() == pytest.approx(0.89, abs=0.005)


def test_robustness_bound():
    v = bounds.robustness_bound(100, 0.0, 0.0)
    assert v.value == pytest.approx(22.85, abs=0.01) and not v.vacuous
    gammas = [0.0, 0.5, 0.9, 0.999]
    vals = [bounds.robustness_bound(10, 0.01, g).value for g in gammas]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert bounds.robustness_bound(10, 0.2, 0.0).vacuous


def test_rel_entropy_bound():
    v = bounds.rel_entropy_bound(100, 0.0, 0.0)
    assert v.value == pytest.approx(100 * -np.log2(BETA) - 1)
    assert bounds.rel_entropy_bound(100, 0.0, 0.0).vacuous  # needs eps < delta
    assert bounds.rel_entropy_bound(100, 0.2, 0.01).vacuous


# ---------------------------------------------------------------- convexity


def test_convexity_trivial():
    u = qcore.H
    assert bounds.convexity_check_unitary(u, [qcore.unitary_channel(u)] * 2, [0.5, 0.5])


def test_convexity_sampled():
    rng = np.random.default_rng(21)
    for _ in range(200):
        u = qcore.haar_unitary(2, rng)
        chans = []
        for _ in range(3):
            noise = qcore.depolarizing_channel(1 - 0.2 * rng.random(), 2)
            kick = qcore.unitary_channel(expm(-1j * 0.1 * rng.random() * qcore.X))
            chans.append(qcore.compose(qcore.unitary_channel(u), qcore.compose(kick, noise)))
        assert bounds.convexity_check_unitary(u, chans, rng.dirichlet(np.ones(3)))


def test_convexity_rejects_bad_weights():
    ch = qcore.identity_channel(2)
    with pytest.raises(ValueError):
        bounds.convexity_check_unitary(np.eye(2), [ch, ch], [0.7, 0.7])

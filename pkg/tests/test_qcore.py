import numpy as np
import pytest

from nlqc import qcore
from nlqc.qcore import CNOT, H, X, Z


def test_bell_state_reduced_is_maximally_mixed():
    psi = qcore.bell_state(0, 0)
    red = qcore.partial_trace(psi, [0])
    assert np.allclose(red.data, np.eye(2) / 2)


def test_partial_trace_keep_order():
    rng = np.random.default_rng(1)
    a = qcore.random_density(2, rng)
    b = qcore.random_density(3, rng)
    rho = np.kron(a, b)
    assert np.allclose(qcore.ptrace_matrix(rho, (2, 3), [1]), b)
    assert np.allclose(qcore.ptrace_matrix(rho, (2, 3), [0]), a)
    swapped = qcore.ptrace_matrix(rho, (2, 3), [1, 0])
    assert np.allclose(swapped, np.kron(b, a))


def test_partial_trace_bad_index():
    with pytest.raises(IndexError):
        qcore.partial_trace(np.eye(4) / 4, [2], dims=(2, 2))


def test_dimension_cap():
    with pytest.raises(qcore.DimensionCapError):
        qcore.check_dim(qcore.MAX_DIM * 2)


def test_entropies():
    assert qcore.von_neumann_entropy(np.eye(4) / 4) == pytest.approx(2.0)
    assert qcore.von_neumann_entropy(qcore.bell_state(1, 1)) == 0.0
    phi = qcore.max_entangled(2).matrix()
    assert qcore.mutual_information(phi, [0], [1], (2, 2)) == pytest.approx(2.0)
    cc = qcore.classically_correlated(2)
    assert qcore.mutual_information(cc, [0], [1]) == pytest.approx(1.0)


def test_binary_entropy_inverse():
    assert qcore.binary_entropy(0.5) == 1.0
    for y in (0.1, 0.5, 0.9):
        p = qcore.inverse_binary_entropy(y)
        assert 0 <= p <= 0.5
        assert qcore.binary_entropy(p) == pytest.approx(y, abs=1e-9)


def test_trace_distance_and_fidelity_extremes():
    zero = np.diag([1.0, 0.0])
    one = np.diag([0.0, 1.0])
    assert qcore.trace_distance(zero, one) == pytest.approx(2.0)
    assert qcore.fidelity(zero, one) == pytest.approx(0.0)
    assert qcore.fidelity(zero, zero) == pytest.approx(1.0)
    assert qcore.purified_distance(zero, one) == pytest.approx(1.0)


def test_haar_unitary_is_unitary_and_seeded():
    u = qcore.haar_unitary(4, np.random.default_rng(7))
    v = qcore.haar_unitary(4, np.random.default_rng(7))
    assert np.allclose(u.conj().T @ u, np.eye(4))
    assert np.array_equal(u, v)


def test_haar_first_moment():
    # E|U_00|^2 = 1/d for Haar measure
    rng = np.random.default_rng(3)
    vals = [abs(qcore.haar_unitary(4, rng)[0, 0]) ** 2 for _ in range(4000)]
    assert np.mean(vals) == pytest.approx(0.25, abs=0.01)


def test_channel_identity_and_depolarizing():
    ident = qcore.identity_channel(2)
    rng = np.random.default_rng(0)
    rho = qcore.random_density(2, rng)
    assert np.allclose(ident.apply(rho), rho)
    dep = qcore.depolarizing_channel(0.3, 2)
    assert np.allclose(dep.apply(rho), 0.3 * rho + 0.7 * np.eye(2) / 2)
    assert dep.is_valid()


def test_compose_unitaries():
    a = qcore.unitary_channel(H)
    b = qcore.unitary_channel(Z)
    c = qcore.compose(b, a)
    ok, res = qcore.channels_equal(c, qcore.unitary_channel(Z @ H))
    assert ok and res < 1e-12
    ok, _ = qcore.channels_equal(c, qcore.unitary_channel(H @ Z))
    assert not ok


def test_channels_equal_ignores_global_phase():
    ok, _ = qcore.channels_equal(qcore.unitary_channel(1j * X), qcore.unitary_channel(X))
    assert ok


def test_entanglement_fidelity_of_depolarizing():
    p = 0.6
    f = qcore.entanglement_fidelity(qcore.depolarizing_channel(p, 2), qcore.identity_channel(2))
    assert f == pytest.approx(p + (1 - p) / 4)


def test_circuit_teleportation_is_identity():
    ops = [
        qcore.prepare(["a", "b"], qcore.max_entangled(2).data),
        qcore.unitary(CNOT, "in", "a"),
        qcore.unitary(H, "in"),
        qcore.measure("in", "a"),
        qcore.controlled(lambda m, n: np.linalg.matrix_power(Z, m) @ np.linalg.matrix_power(X, n), ["b"], ["in", "a"]),
    ]
    ch = qcore.channel_from_circuit([("in", 2)], ops, ["b"])
    ok, res = qcore.channels_equal(ch, qcore.identity_channel(2))
    assert ok, res


def test_classical_register_cannot_be_targeted():
    st = qcore.RegisterState()
    st.prepare("a")
    st.measure(["a"])
    with pytest.raises(ValueError):
        st.apply(X, ["a"])


def test_dense_operator_json_roundtrip():
    op = qcore.bell_state(1, 0)
    back = qcore.DenseOperator.from_json(op.to_json())
    assert np.allclose(back.data, op.data) and back.dims == op.dims


def test_partial_transpose_detects_bell():
    phi = qcore.max_entangled(2).matrix()
    ev = np.linalg.eigvalsh(qcore.partial_transpose(phi, (2, 2), 1))
    assert ev.min() == pytest.approx(-0.5)

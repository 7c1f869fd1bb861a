import numpy as np
import pytest

from nlqc import gardenhose, protocols, qcore
from nlqc.protocols import NlqcProtocol, WiringError, epr


IDENT = qcore.identity_channel((2,))


@pytest.mark.parametrize("b", [0, 1])
def test_routing_exact(b):
    p = protocols.routing_protocol()
    side = ("R",) if b else ("L",)
    assert protocols.residual(p, 0, b, IDENT, side) <= 1e-9


def test_routing_wrong_side_is_flagged():
    p = protocols.routing_protocol()
    assert protocols.residual(p, 0, 0, IDENT, ("R",)) == float("inf")


def test_product_routing_is_half():
    assert protocols.product_routing_success() == 0.5


@pytest.mark.parametrize("x,q", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_bb84_measure_exact(x, q):
    p = protocols.bb84_measure_protocol()
    assert protocols.residual(p, x, q, protocols.bb84_target(q), ("L", "R")) <= 1e-9


def test_bb84_outputs_differ_by_basis():
    # measuring in Z is not the same channel as measuring in X
    p = protocols.bb84_measure_protocol()
    assert protocols.residual(p, 0, 0, protocols.bb84_target(1), ("L", "R")) > 0.1


@pytest.mark.parametrize("gate", [qcore.CNOT, qcore.CZ, qcore.SWAP])
def test_clifford_nlqc_exact(gate):
    p = protocols.clifford_nlqc(gate)
    assert protocols.residual(p, 0, 0, qcore.unitary_channel(gate, (2, 2)), ("L", "R")) <= 1e-9


def test_random_clifford_nlqc_exact():
    c = protocols.random_clifford(2, np.random.default_rng(11))
    assert protocols.is_clifford(c)
    p = protocols.clifford_nlqc(c)
    assert protocols.residual(p, 0, 0, qcore.unitary_channel(c, (2, 2)), ("L", "R")) <= 1e-9


def test_non_clifford_rejected():
    ct = np.diag([1, 1, 1, np.exp(1j * np.pi / 4)])
    assert not protocols.is_clifford(ct)
    with pytest.raises(ValueError):
        protocols.clifford_nlqc(ct)


def test_pauli_decompose():
    labels, phase = protocols.pauli_decompose(-1j * qcore.pauli_string("XZ"))
    assert labels == "XZ" and phase == pytest.approx(-1j)
    assert protocols.pauli_decompose(qcore.pauli_string("XZ") + qcore.pauli_string("YY")) is None


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_port_teleport_methods_agree(N):
    pgm = protocols.port_teleport_fidelity(2, N, "pgm")
    assert protocols.port_teleport_fidelity(2, N, "formula") == pytest.approx(pgm, abs=1e-9)
    assert protocols.port_teleport_fidelity(2, N, "simulate") == pytest.approx(pgm, abs=1e-9)


def test_single_port_gives_maximally_mixed_output():
    assert protocols.port_teleport_fidelity(2, 1) == pytest.approx(0.25)


def test_port_teleport_fidelity_increases():
    vals = [protocols.port_teleport_fidelity(2, N) for N in (2, 4, 8, 16)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_port_teleport_channel_matches_circuit():
    a = protocols.port_teleport_channel(2, 3)
    b = protocols.port_teleport_circuit_channel(2, 3)
    ok, res = qcore.channels_equal(a, b)
    assert ok, res


def test_port_composite_is_covariant():
    comp, fe = protocols.port_teleport_composite(qcore.CNOT, 2)
    brute, fe_brute = protocols.port_teleport_composite(qcore.CNOT, 2, "brute")
    assert fe == pytest.approx(fe_brute, abs=1e-9)
    assert qcore.channels_equal(comp, brute)[0]


@pytest.mark.parametrize("step", protocols.REDUCTION_STEPS)
def test_reduction_steps_and(step):
    res = protocols.reduction_residuals(step, gardenhose.builtin("AND"))
    assert max(res.values()) <= 1e-9


def test_ideal_fbb84_oracle():
    f = gardenhose.builtin("OR")
    p = protocols.ideal_fbb84(f)
    for x, y in f.inputs():
        assert protocols.residual(p, x, y, protocols.bb84_target(f(x, y)), ("L", "R")) <= 1e-9


def test_wiring_error_on_foreign_register():
    def r1_right(side, y):
        side.apply(qcore.X, "Q")

    p = NlqcProtocol(left_inputs=(("Q", 2),), round1_right=r1_right)
    with pytest.raises(WiringError):
        protocols.execute(p, 0, 0)


def test_quantum_register_not_readable_as_control():
    def r1_left(side, x):
        side.controlled(lambda b: qcore.X, ["eL"], ["Q"])

    p = NlqcProtocol(left_inputs=(("Q", 2),), resource=(epr("eL", "eR"),), round1_left=r1_left)
    with pytest.raises(WiringError):
        protocols.execute(p, 0, 0)


def test_midprotocol_state_is_normalized():
    p = protocols.routing_protocol()
    rho, dims, names = protocols.midprotocol_state(p, 0, 1, "R")
    assert names[0].startswith("~")
    assert np.trace(rho).real == pytest.approx(1.0)


def test_protocol_json_lists_resource():
    text = protocols.routing_protocol().to_json()
    assert '"eL"' in text and '"eR"' in text

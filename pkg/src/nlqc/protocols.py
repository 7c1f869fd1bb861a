"""Two-round non-local quantum computation: execution engine and protocols.

A protocol is a resource state shared between Alice (left, ``'L'``) and Bob
(right, ``'R'``), a first round of local operations ending with each side
choosing which of its systems to send across, and a second round of local
operations in which both classical inputs are known.  Every classical
register measured in the first round is broadcast, so both sides may use
it as a control in the second round.

Round functions receive a ``Side`` handle that only lets them touch
systems located on that side; anything else raises ``WiringError``.
"""

from dataclasses import dataclass, field
import itertools
from typing import Callable

import numpy as np

from . import qcore
from .qcore import (
    BELL_BASIS,
    CNOT,
    H,
    QuantumChannel,
    RegisterState,
    S,
    X,
    Z,
    check_dim,
    paulix_z,
)


class WiringError(ValueError):
    """A round function touched a system it does not hold, or moved one twice."""


@dataclass(frozen=True)
class ResourcePiece:
    """Part of the resource state: ``vector`` over ``names`` held at ``sides``."""

    names: tuple
    vector: np.ndarray
    dims: tuple
    sides: tuple


def epr(left, right):
    return ResourcePiece((left, right), qcore.max_entangled(2).data, (2, 2), ("L", "R"))


def _noop1(side, inp):
    return None


def _noop2(side, x, y):
    return []


@dataclass(frozen=True)
class NlqcProtocol:
    """Description of a two-round protocol.

    ``round1_left(side, x)`` / ``round1_right(side, y)`` act locally and call
    ``side.send`` for systems crossing over.  ``round2_left(side, x, y)`` and
    ``round2_right(side, x, y)`` return the list of output registers.
    """

    left_inputs: tuple = ()
    right_inputs: tuple = ()
    resource: tuple = ()
    round1_left: Callable = _noop1
    round1_right: Callable = _noop1
    round2_left: Callable = _noop2
    round2_right: Callable = _noop2
    name: str = "protocol"
    info: dict = field(default_factory=dict, compare=False)

    @property
    def in_dims(self):
        return tuple(d for _, d in self.left_inputs) + tuple(d for _, d in self.right_inputs)

    def resource_qubits(self):
        return sum(int(np.log2(np.prod(p.dims))) for p in self.resource)

    def to_json(self):
        import json

        return json.dumps(
            {
                "name": self.name,
                "left_inputs": [list(p) for p in self.left_inputs],
                "right_inputs": [list(p) for p in self.right_inputs],
                "resource": [
                    {
                        "names": list(p.names),
                        "dims": list(p.dims),
                        "sides": list(p.sides),
                        "state": qcore.DenseOperator(p.vector, p.dims, "state-vector").to_json(),
                    }
                    for p in self.resource
                ],
            }
        )


# ---------------------------------------------------------------- execution


class _Run:
    """Mutable execution record for one (x, y) pair."""

    def __init__(self, protocol):
        self.state = RegisterState()
        self.loc = {}
        self.round = 0
        self.broadcast = set()
        self.dest = {}
        self.oracles = []
        self.refs = []
        inputs = [(n, d, "L") for n, d in protocol.left_inputs]
        inputs += [(n, d, "R") for n, d in protocol.right_inputs]
        for name, d, side in inputs:
            self.refs += qcore.entangle_with_reference(self.state, [(name, d)])
            self.loc[name] = side
        for piece in protocol.resource:
            self.state.add(list(piece.names), piece.vector, list(piece.dims))
            for n, s in zip(piece.names, piece.sides):
                self.loc[n] = s


class Side:
    """Local view of one party during one round."""

    def __init__(self, run, side):
        self._run = run
        self.side = side
        # purified mode: measurements stay coherent and discards are kept
        self.coherent = False

    # access rules
    @property
    def round(self):
        return self._run.round

    def holds(self, name):
        return self._run.loc.get(name) == self.side

    def _need(self, names):
        for n in names:
            if n not in self._run.loc:
                raise KeyError(f"no register named {n!r}")
            if self._run.loc[n] != self.side:
                raise WiringError(f"side {self.side} does not hold {n!r}")

    def _readable(self, names):
        for n in names:
            if n in self._run.broadcast and self._run.round == 2:
                continue
            if not self.coherent and n not in self._run.state.classical:
                raise WiringError(f"{n!r} is not a classical register")
            self._need([n])

    def _new(self, names):
        for n in names:
            self._run.loc[n] = self.side

    # operations
    def apply(self, u, *targets):
        self._need(targets)
        self._run.state.apply(u, targets)

    def measure(self, *targets, basis=None):
        self._need(targets)
        if self.coherent:
            if basis is not None:
                self._run.state.apply(np.asarray(basis, dtype=complex).conj().T, targets)
            return
        self._run.state.measure(targets, basis)

    def bell_measure(self, a, b):
        """Bell measurement; outcome (s1, s2) needs correction X^s1 Z^s2."""
        self.measure(a, b, basis=BELL_BASIS)

    def controlled(self, fn, targets, controls):
        targets, controls = list(targets), list(controls)
        self._need(targets)
        self._readable(controls)
        self._run.state.controlled(fn, targets, controls, coherent=self.coherent)

    def compute(self, name, fn, controls, dim=2):
        self._readable(controls)
        self._run.state.compute(name, fn, list(controls), dim, coherent=self.coherent)
        self._new([name])

    def update(self, name, fn, controls):
        """Add ``fn(controls)`` to a classical register this side produced and has not broadcast."""
        self._need([name])
        if name in self._run.broadcast:
            raise WiringError(f"{name!r} was broadcast; copy it with compute instead")
        self._readable(controls)
        self._run.state.xor_into(name, fn, list(controls))

    def prepare(self, name, dim=2, index=0):
        self._run.state.prepare(name, dim, index)
        self._new([name])

    def prepare_state(self, names, vector, dims=None):
        names = [names] if isinstance(names, str) else list(names)
        self._run.state.add(names, vector, dims)
        self._new(names)

    def povm(self, name, kraus, targets):
        self._need(targets)
        self._run.state.povm(name, kraus, targets)
        self._new([name])

    def discard(self, *targets):
        self._need(targets)
        if not self.coherent:
            self._run.state.discard(targets)

    def send(self, *targets, to=None):
        """Move systems to the other side (or the oracle box) at the end of round 1."""
        if self._run.round != 1:
            raise WiringError("systems can only be sent in the first round")
        self._need(targets)
        other = "R" if self.side == "L" else "L"
        for t in targets:
            if t in self._run.dest:
                raise WiringError(f"{t!r} is already being moved")
            self._run.dest[t] = other if to is None else to

    def destination(self, target):
        return self._run.dest.get(target)

    def unsend(self, target):
        self._run.dest.pop(target, None)

    def sending(self, target):
        return target in self._run.dest

    def oracle(self, callback):
        """Register an ideal oracle stage run between the rounds.

        ``callback(ctx, x, y)`` acts on systems sent to ``'O'`` and delivers them.
        """
        if self._run.round != 1:
            raise WiringError("oracles are invoked in the first round")
        self._run.oracles.append(callback)

    def registers(self):
        return [n for n, s in self._run.loc.items() if s == self.side]

    def is_classical(self, name):
        return name in self._run.state.classical


class OracleContext:
    """Unrestricted handle used by ideal oracles on systems sent to ``'O'``."""

    side = "O"

    def __init__(self, run):
        self._run = run

    def _need(self, names):
        for n in names:
            if self._run.loc.get(n) != "O":
                raise WiringError(f"oracle does not hold {n!r}")

    def apply(self, u, *targets):
        self._need(targets)
        self._run.state.apply(u, targets)

    def measure(self, *targets, basis=None):
        self._need(targets)
        self._run.state.measure(targets, basis)

    def compute(self, name, fn, controls, dim=2):
        self._need(controls)
        self._run.state.compute(name, fn, list(controls), dim)
        self._run.loc[name] = "O"

    def deliver(self, name, side):
        self._need([name])
        self._run.loc[name] = side
        if name in self._run.state.classical:
            self._run.broadcast.add(name)


class Scoped:
    """Name-translating proxy so a sub-protocol can be inlined in another.

    Register ``n`` of the sub-protocol becomes ``aliases.get(n, prefix + n)``.
    """

    def __init__(self, inner, prefix, aliases=None):
        self._inner = inner
        self._prefix = prefix
        self._aliases = dict(aliases or {})
        self.side = inner.side

    def real(self, name):
        if isinstance(name, (list, tuple)):
            return [self.real(n) for n in name]
        return self._aliases.get(name, self._prefix + name)

    def __getattr__(self, attr):
        return getattr(self._inner, attr)

    @property
    def round(self):
        return self._inner.round

    def holds(self, name):
        return self._inner.holds(self.real(name))

    def apply(self, u, *targets):
        self._inner.apply(u, *self.real(list(targets)))

    def measure(self, *targets, basis=None):
        self._inner.measure(*self.real(list(targets)), basis=basis)

    def bell_measure(self, a, b):
        self._inner.bell_measure(self.real(a), self.real(b))

    def controlled(self, fn, targets, controls):
        self._inner.controlled(fn, self.real(list(targets)), self.real(list(controls)))

    def compute(self, name, fn, controls, dim=2):
        self._inner.compute(self.real(name), fn, self.real(list(controls)), dim)

    def update(self, name, fn, controls):
        self._inner.update(self.real(name), fn, self.real(list(controls)))

    def prepare(self, name, dim=2, index=0):
        self._inner.prepare(self.real(name), dim, index)

    def prepare_state(self, names, vector, dims=None):
        names = [names] if isinstance(names, str) else list(names)
        self._inner.prepare_state(self.real(names), vector, dims)

    def povm(self, name, kraus, targets):
        self._inner.povm(self.real(name), kraus, self.real(list(targets)))

    def discard(self, *targets):
        self._inner.discard(*self.real(list(targets)))

    def send(self, *targets, to=None):
        self._inner.send(*self.real(list(targets)), to=to)

    def destination(self, target):
        return self._run.dest.get(target)

    def unsend(self, target):
        self._inner.unsend(self.real(target))

    def sending(self, target):
        return self._inner.sending(self.real(target))

    def deliver(self, name, side):
        self._inner.deliver(self.real(name), side)

    def oracle(self, callback):
        prefix, aliases = self._prefix, self._aliases
        self._inner.oracle(lambda ctx, x, y: callback(Scoped(ctx, prefix, aliases), x, y))

    def is_classical(self, name):
        return self._inner.is_classical(self.real(name))

    def registers(self):
        # registers of this scope that the side holds, in sub-protocol names
        inv = {v: k for k, v in self._aliases.items()}
        out = []
        for n in self._inner.registers():
            if n in inv:
                out.append(inv[n])
            elif n.startswith(self._prefix) and self._prefix:
                out.append(n[len(self._prefix):])
        return out


@dataclass(frozen=True)
class Inlined:
    """A sub-protocol embedded with renamed registers."""

    protocol: NlqcProtocol
    prefix: str
    aliases: dict

    def resource(self):
        out = []
        for p in self.protocol.resource:
            names = tuple(self.aliases.get(n, self.prefix + n) for n in p.names)
            out.append(ResourcePiece(names, p.vector, p.dims, p.sides))
        return tuple(out)

    def round1_left(self, side, x):
        self.protocol.round1_left(Scoped(side, self.prefix, self.aliases), x)

    def round1_right(self, side, y):
        self.protocol.round1_right(Scoped(side, self.prefix, self.aliases), y)

    def round2_left(self, side, x, y):
        sc = Scoped(side, self.prefix, self.aliases)
        return sc.real(list(self.protocol.round2_left(sc, x, y)))

    def round2_right(self, side, x, y):
        sc = Scoped(side, self.prefix, self.aliases)
        return sc.real(list(self.protocol.round2_right(sc, x, y)))


def inline(protocol, prefix, aliases=None):
    return Inlined(protocol, prefix, dict(aliases or {}))


def _run_protocol(p, x, y, stop=None):
    run = _Run(p)
    run.round = 1
    left, right = Side(run, "L"), Side(run, "R")
    p.round1_left(left, x)
    p.round1_right(right, y)
    if stop == "round1":
        return run
    run.broadcast = set(run.state.classical)
    for name, d in run.dest.items():
        run.loc[name] = d
    run.dest = {}
    ctx = OracleContext(run)
    for oracle in run.oracles:
        oracle(ctx, x, y)
    stray = [n for n, s in run.loc.items() if s == "O"]
    if stray:
        raise WiringError(f"oracle did not deliver {stray}")
    if stop == "mid":
        return run
    run.round = 2
    out_l = list(p.round2_left(left, x, y) or [])
    out_r = list(p.round2_right(right, x, y) or [])
    for names, side in ((out_l, "L"), (out_r, "R")):
        for n in names:
            if run.loc.get(n) != side:
                raise WiringError(f"output {n!r} is not held by side {side}")
    run.outputs = (out_l, out_r)
    return run


def execute(p, x=0, y=0):
    """Channel induced by the protocol on classical inputs ``(x, y)``.

    Outputs are ordered left outputs first; ``out_sides`` records where each
    output factor ends.  Classical output registers are dephased.
    """
    run = _run_protocol(p, x, y)
    out_l, out_r = run.outputs
    outs = out_l + out_r
    choi = qcore.choi_from_state(run.state, outs, run.refs)
    return QuantumChannel(
        choi,
        p.in_dims,
        tuple(run.state.dim(o) for o in outs),
        out_sides=tuple(["L"] * len(out_l) + ["R"] * len(out_r)),
        classical_out=tuple(o for o in outs if o in run.state.classical),
    )


def first_round_marginal(p, x, y):
    """State on (references, left-kept systems) right after the first round."""
    run = _run_protocol(p, x, y, stop="round1")
    kept = [n for n, s in run.loc.items() if s == "L" and n not in run.dest
            and n not in run.state.discarded and not n.startswith("~")]
    kept.sort()
    return run.state.reduced(run.refs + kept)


def midprotocol_state(p, x, y, side="R"):
    """Mid-protocol state on (references, systems held by ``side``).

    Taken after the communication round and before the second round.
    Broadcast classical registers are included (they are held by both sides).
    Returns ``(rho, dims, names)``.
    """
    run = _run_protocol(p, x, y, stop="mid")
    held = [n for n, s in run.loc.items() if s == side and n not in run.state.discarded
            and not n.startswith("~")]
    held += [n for n in run.broadcast if run.loc.get(n) != side and n not in run.state.discarded]
    held = sorted(set(held))
    names = run.refs + held
    return run.state.reduced(names), tuple(run.state.dim(n) for n in names), names


def residual(p, x, y, target, sides=None):
    """Choi residual of ``execute(p, x, y)`` against ``target``.

    When ``sides`` is given, the output sides must match it exactly
    (a mismatch returns ``inf``).
    """
    ch = execute(p, x, y)
    if sides is not None and tuple(ch.out_sides) != tuple(sides):
        return float("inf")
    return qcore.channels_equal(ch, target)[1]


# ---------------------------------------------------------------- Paulis and Cliffords

PAULIS = {"I": qcore.I2, "X": X, "Y": qcore.Y, "Z": Z}


def pauli_decompose(m, tol=1e-9):
    """Return (labels, phase) if ``m`` equals phase * Pauli string, else None."""
    m = np.asarray(m, dtype=complex)
    n = int(round(np.log2(m.shape[0])))
    # locate the string from the matrix support: X part from the nonzero pattern of row 0
    col = int(np.argmax(np.abs(m[:, 0])))
    xbits = [(col >> (n - 1 - k)) & 1 for k in range(n)]
    best = None
    for zbits in itertools.product((0, 1), repeat=n):
        labels = "".join(
            {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[(xb, zb)]
            for xb, zb in zip(xbits, zbits)
        )
        p = qcore.pauli_string(labels)
        c = np.trace(p.conj().T @ m) / m.shape[0]
        if abs(abs(c) - 1) < tol:
            best = (labels, c)
            break
    if best is None:
        return None
    labels, c = best
    if np.max(np.abs(m - c * qcore.pauli_string(labels))) > tol:
        return None
    return best


def is_clifford(u, tol=1e-9):
    """Conjugate every single-qubit X_i and Z_i and test for Pauli strings."""
    u = np.asarray(u, dtype=complex)
    n = int(round(np.log2(u.shape[0])))
    if 2**n != u.shape[0]:
        return False
    for k in range(n):
        for g in "XZ":
            labels = "I" * k + g + "I" * (n - k - 1)
            conj = u @ qcore.pauli_string(labels) @ u.conj().T
            if pauli_decompose(conj, tol) is None:
                return False
    return True


def conjugated_pauli(c, labels):
    """Pauli string of C P C^dagger (phase dropped)."""
    res = pauli_decompose(c @ qcore.pauli_string(labels) @ c.conj().T)
    if res is None:
        raise ValueError("conjugation did not produce a Pauli string")
    return res[0]


def correction_labels(bits):
    """Pauli labels for corrections X^s1 Z^s2 on consecutive qubits."""
    table = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
    return "".join(table[(bits[2 * i], bits[2 * i + 1])] for i in range(len(bits) // 2))


def random_clifford(n, rng, depth=None):
    """Random Clifford from a random word in H, S and CNOT."""
    depth = 10 * n * n + 10 if depth is None else depth
    u = np.eye(2**n, dtype=complex)
    for _ in range(depth):
        kind = rng.integers(3) if n > 1 else rng.integers(2)
        if kind == 0:
            g = _embed(H, [int(rng.integers(n))], n)
        elif kind == 1:
            g = _embed(S, [int(rng.integers(n))], n)
        else:
            a, b = rng.choice(n, size=2, replace=False)
            g = _embed(CNOT, [int(a), int(b)], n)
        u = g @ u
    return u


def _embed(gate, qubits, n):
    """Gate acting on the listed qubits of an n-qubit register."""
    k = len(qubits)
    t = gate.reshape([2] * (2 * k))
    full = np.eye(2**n, dtype=complex).reshape([2] * (2 * n))
    out = np.tensordot(t, full, axes=(list(range(k, 2 * k)), qubits))
    out = np.moveaxis(out, list(range(k)), qubits)
    return out.reshape(2**n, 2**n)


# ---------------------------------------------------------------- routing


def routing_protocol():
    """Route Alice's qubit ``Q`` to the side named by Bob's bit ``y``.

    Alice teleports* ``Q`` into the shared pair; Bob sends his half left
    when ``y = 0`` and keeps it when ``y = 1``.
    """

    def r1_left(side, x):
        side.bell_measure("Q", "eL")

    def r1_right(side, y):
        if y == 0:
            side.send("eR")

    def fix(side):
        side.controlled(lambda s1, s2: paulix_z(s1, s2), ["eR"], ["Q", "eL"])
        return ["eR"]

    def r2_left(side, x, y):
        return fix(side) if y == 0 else []

    def r2_right(side, x, y):
        return fix(side) if y == 1 else []

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        resource=(epr("eL", "eR"),),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=r2_left,
        round2_right=r2_right,
        name="routing",
    )


def product_routing_success():
    """Best average success of routing with no shared entanglement.

    With a product resource Alice must commit to keeping or sending ``Q``
    before seeing ``y``.  Each deterministic strategy is executed and counted
    as a success for ``y`` when ``Q`` ends on side ``y``.
    """

    def strategy(keep):
        def r1_left(side, x):
            if not keep:
                side.send("Q")

        def r2(where):
            return lambda side, x, y: ["Q"] if side.holds("Q") and where == side.side else []

        return NlqcProtocol(
            left_inputs=(("Q", 2),), round1_left=r1_left, round2_left=r2("L"), round2_right=r2("R")
        )

    best = 0.0
    for keep in (True, False):
        p = strategy(keep)
        wins = sum(execute(p, 0, y).out_sides == (("L",) if y == 0 else ("R",)) for y in (0, 1))
        best = max(best, wins / 2)
    return best


# ---------------------------------------------------------------- BB84 measurement


def bb84_measure_protocol():
    """Measure Alice's qubit in the basis chosen by Bob's bit ``q``.

    Alice Bell-measures ``Q`` with her half of an EPR pair; Bob measures his
    half in basis ``H^q``.  Both sides then output ``b' + s1`` (q = 0) or
    ``b' + s2`` (q = 1).
    """

    def r1_left(side, x):
        side.bell_measure("Q", "eL")

    def r1_right(side, q):
        side.measure("eR", basis=H if q else None)

    def out(name):
        def r2(side, x, q):
            side.compute(name, lambda s1, s2, b: b ^ (s2 if q else s1), ["Q", "eL", "eR"])
            return [name]

        return r2

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        resource=(epr("eL", "eR"),),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=out("zL"),
        round2_right=out("zR"),
        name="bb84-measure",
    )


def bb84_target(q):
    return qcore.measurement_copy_channel(H if q else np.eye(2), 2)


# ---------------------------------------------------------------- Clifford NLQC


def clifford_nlqc(c, n=1):
    """NLQC for a Clifford ``c`` on n + n qubits using n EPR pairs.

    Bob teleports* his n qubits to Alice, Alice applies ``c`` and sends the
    second half back.  The teleportation Pauli, pushed through ``c``, is
    again a Pauli; each side undoes its part in the second round.
    """
    c = np.asarray(c, dtype=complex)
    if c.shape != (4**n, 4**n):
        raise ValueError("Clifford must act on 2n qubits")
    if not is_clifford(c):
        raise ValueError("unitary is not a Clifford: a conjugated Pauli is not a Pauli string")
    a_names = [f"A{i}" for i in range(n)]
    b_names = [f"B{i}" for i in range(n)]
    el = [f"eL{i}" for i in range(n)]
    er = [f"eR{i}" for i in range(n)]
    table = {}
    for bits in itertools.product((0, 1), repeat=2 * n):
        table[bits] = conjugated_pauli(c, "I" * n + correction_labels(bits))

    def r1_left(side, x):
        side.apply(c, *a_names, *el)
        side.send(*el)

    def r1_right(side, y):
        for b, e in zip(b_names, er):
            side.bell_measure(b, e)

    controls = [r for pair in zip(b_names, er) for r in pair]

    def fix(side, targets, offset):
        for i, t in enumerate(targets):
            side.controlled(
                lambda *bits, i=i: PAULIS[table[bits][offset + i]], [t], controls
            )
        return list(targets)

    return NlqcProtocol(
        left_inputs=tuple((a, 2) for a in a_names),
        right_inputs=tuple((b, 2) for b in b_names),
        resource=tuple(epr(a, b) for a, b in zip(el, er)),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=lambda side, x, y: fix(side, a_names, 0),
        round2_right=lambda side, x, y: fix(side, el, n),
        name="clifford",
        info={"epr_pairs": n},
    )


# ---------------------------------------------------------------- port teleportation


def _port_sigmas(d, N):
    """sigma^k = Psi+_{A_k B'} (x) I/d^(N-1) on A_1..A_N B' (as matrices)."""
    phi = qcore.max_entangled(d).data
    proj = np.outer(phi, phi.conj())
    sig = []
    dims = [d] * (N + 1)
    for k in range(N):
        m = np.kron(proj, np.eye(d ** (N - 1)) / d ** (N - 1))
        # factor order of m is (A_k, B', rest...); move to (A_1..A_N, B')
        order_now = [k, N] + [i for i in range(N) if i != k]
        inv = np.argsort(order_now)
        sig.append(qcore.permute_factors(m, dims, inv))
    return sig


def pgm(states, clamp=1e-12):
    """Pretty good measurement for an ensemble of (unnormalized) states."""
    sigma = sum(states)
    w, v = np.linalg.eigh((sigma + sigma.conj().T) / 2)
    inv_sqrt = np.where(w > clamp, 1 / np.sqrt(np.where(w > clamp, w, 1)), 0.0)
    root = (v * inv_sqrt) @ v.conj().T
    support = (v * (w > clamp)) @ v.conj().T
    return [root @ s @ root for s in states], support


def completed_pgm(states, clamp=1e-12):
    """PGM with the complement of the support spread evenly, so it sums to identity."""
    lam, support = pgm(states, clamp)
    rest = (np.eye(support.shape[0]) - support) / len(lam)
    return [l + rest for l in lam]


def _pbt_pgm_fidelity(d, N):
    check_dim(d ** (N + 1))
    sig = _port_sigmas(d, N)
    lam, _ = pgm(sig)
    guess = sum(np.trace(l @ s).real for l, s in zip(lam, sig)) / N
    return N / d**2 * guess


def _hook_dim(shape):
    """Dimension of the symmetric-group irrep (hook length formula)."""
    n = sum(shape)
    cols = [sum(1 for r in shape if r > j) for j in range(shape[0])] if shape else []
    prod = 1
    for i, r in enumerate(shape):
        for j in range(r):
            prod *= (r - j - 1) + (cols[j] - i - 1) + 1
    from math import factorial

    return factorial(n) // prod


def _unitary_irrep_dim(shape, d):
    """Dimension of the U(d) irrep (hook content formula)."""
    from fractions import Fraction

    cols = [sum(1 for r in shape if r > j) for j in range(shape[0])] if shape else []
    val = Fraction(1)
    for i, r in enumerate(shape):
        for j in range(r):
            hook = (r - j - 1) + (cols[j] - i - 1) + 1
            val *= Fraction(d + j - i, hook)
    return int(val)


def _partitions(n, max_rows):
    def gen(n, maxpart, rows):
        if n == 0:
            yield ()
            return
        if rows == 0:
            return
        for p in range(min(n, maxpart), 0, -1):
            for rest in gen(n - p, p, rows - 1):
                yield (p,) + rest

    return list(gen(n, n, max_rows))


def _add_box(shape, d):
    out = []
    shape = list(shape)
    for i in range(len(shape) + 1):
        if i == len(shape):
            if len(shape) < d:
                out.append(tuple(shape + [1]))
        elif i == 0 or shape[i - 1] > shape[i]:
            new = shape.copy()
            new[i] += 1
            out.append(tuple(new))
    return out


def _pbt_formula_fidelity(d, N):
    total = 0.0
    for alpha in _partitions(N - 1, d):
        s = sum(np.sqrt(_hook_dim(mu) * _unitary_irrep_dim(mu, d)) for mu in _add_box(alpha, d))
        total += s * s
    return total / d ** (N + 2)


def port_teleport_circuit_channel(d, N):
    """Port-teleportation channel built by simulating the full circuit.

    The PGM is applied to (A_1..A_N, A') as a Kraus measurement with
    operators sqrt(Lambda^k); Bob then keeps port B_k.
    """
    check_dim(d ** (2 * N + 2))
    sig = _port_sigmas(d, N)
    kraus = [qcore.psd_sqrt(l) for l in completed_pgm(sig)]
    ops = []
    for i in range(N):
        ops.append(qcore.prepare([f"A{i}", f"B{i}"], qcore.max_entangled(d)))
    ops.append(qcore.povm("k", kraus, [f"A{i}" for i in range(N)] + ["in"]))
    ops.append(qcore.prepare("out", np.eye(d)[0]))
    swap = np.eye(d * d).reshape(d, d, d, d).transpose(1, 0, 2, 3).reshape(d * d, d * d)
    for i in range(N):
        ops.append(qcore.controlled(lambda k, i=i: swap if k == i else None, [f"B{i}", "out"], ["k"]))
    return qcore.channel_from_circuit([("in", d)], ops, ["out"])


def port_teleport_channel(d, N):
    """Port-teleportation channel from the explicit sigma^k / Lambda^k contraction."""
    check_dim(d ** (N + 1))
    sig = _port_sigmas(d, N)
    lam = completed_pgm(sig)
    D = d**N
    j = np.zeros((d, d, d, d), dtype=complex)
    # T(rho) = sum_k tr_{A A'}[Lambda^k_{A A'} (sigma^k_{A B'} (x) rho_{A'})]
    for l, s in zip(lam, sig):
        lt = l.reshape(D, d, D, d)  # (A, A') x (A, A')
        st = s.reshape(D, d, D, d)  # (A, B') x (A, B')
        # Choi: rho -> |i><j| on A', output indices on B'
        j += np.einsum("csar,abce->bres", lt, st)
    choi = j.reshape(d * d, d * d)
    return QuantumChannel(choi, (d,), (d,))


def port_teleport_fidelity(d, N, method="auto"):
    """Entanglement fidelity of PGM port teleportation with N ports of dimension d.

    ``method``: ``'pgm'`` evaluates (N/d^2) times the PGM guessing probability
    with explicit matrices, ``'formula'`` uses the Young-diagram expression
    for the same quantity, ``'simulate'`` builds the channel from the full
    circuit and evaluates its fidelity with the identity.
    """
    if d < 2 or N < 1:
        raise ValueError("need d >= 2 and N >= 1")
    if method == "auto":
        method = "pgm" if d ** (N + 1) <= 1024 else "formula"
    if method == "pgm":
        return float(_pbt_pgm_fidelity(d, N))
    if method == "formula":
        return float(_pbt_formula_fidelity(d, N))
    if method == "simulate":
        ch = port_teleport_circuit_channel(d, N)
        return float(qcore.entanglement_fidelity(ch, qcore.identity_channel((d,))))
    raise ValueError(f"unknown method {method!r}")


def port_teleport_protocol(target, N):
    """NLQC for a unitary ``target`` on one qubit per side via port teleportation.

    Alice teleports ``AL`` into Bob's half of an EPR pair; Bob port-teleports
    that qubit together with ``AR`` (port dimension 4) to Alice; Alice undoes
    the first teleportation's Pauli and applies ``target`` to every port,
    then sends the right half of every port to Bob, and Bob broadcasts the
    port index.  Both keep the selected port.
    """
    target = np.asarray(target, dtype=complex)
    d = 4
    sig = _port_sigmas(d, N)
    kraus = [qcore.psd_sqrt(l) for l in completed_pgm(sig)]
    resource = [epr("fL", "fR")]
    for k in range(N):
        for half in "ab":
            resource.append(epr(f"p{k}{half}L", f"p{k}{half}R"))

    def r1_left(side, x):
        side.bell_measure("AL", "fL")
        for k in range(N):
            side.controlled(
                lambda s1, s2: np.kron(paulix_z(s1, s2), np.eye(2)),
                [f"p{k}aL", f"p{k}bL"],
                ["AL", "fL"],
            )
            side.apply(target, f"p{k}aL", f"p{k}bL")
            side.send(f"p{k}bL")

    def r1_right(side, y):
        # port k is the qubit pair (a, b); Kraus operators act on ports then input
        ports = [r for k in range(N) for r in (f"p{k}aR", f"p{k}bR")]
        side.povm("j", kraus, ports + ["fR", "AR"])

    def pick(half):
        def r2(side, x, y):
            side.prepare("out" + half)
            for k in range(N):
                side.controlled(
                    lambda j, k=k: qcore.SWAP if j == k else None, [f"p{k}{half}L", "out" + half], ["j"]
                )
            return ["out" + half]

        return r2

    return NlqcProtocol(
        left_inputs=(("AL", 2),),
        right_inputs=(("AR", 2),),
        resource=tuple(resource),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=pick("a"),
        round2_right=pick("b"),
        name="port-teleport",
        info={"ports": N, "port_dim": d},
    )


def port_teleport_composite(target, N, method="auto"):
    """Composite channel of the port-teleportation NLQC without full simulation.

    The PGM port-teleportation channel is unitarily covariant, hence
    depolarizing with weight fixed by its entanglement fidelity F:
    T = p id + (1 - p) I/d tr, F = p + (1 - p)/d^2.  The composite is
    target o T.  Returns (channel, entanglement fidelity vs target).
    """
    d = 4
    if method == "brute":
        t = port_teleport_channel(d, N)
    else:
        f = port_teleport_fidelity(d, N, method)
        p = (f - 1 / d**2) / (1 - 1 / d**2)
        t = qcore.depolarizing_channel(p, d)
    u = qcore.unitary_channel(target, (4,))
    comp = qcore.compose(u, t)
    comp = QuantumChannel(comp.choi, (2, 2), (2, 2))
    return comp, qcore.entanglement_fidelity(comp, qcore.unitary_channel(target, (2, 2)))


# ---------------------------------------------------------------- reduction chain


def measurement_target(basis):
    return qcore.measurement_copy_channel(basis, 2)


def ideal_fbb84(f):
    """Ideal f-BB84 oracle: Alice's ``Q`` is measured in basis H^f(x,y)."""

    def r1_left(side, x):
        side.send("Q", to="O")

        def oracle(ctx, x, y):
            ctx.measure("Q", basis=H if f(x, y) else None)
            ctx.compute("zL", lambda b: b, ["Q"])
            ctx.compute("zR", lambda b: b, ["Q"])
            ctx.deliver("zL", "L")
            ctx.deliver("zR", "R")
            ctx.deliver("Q", "L")

        side.oracle(oracle)

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        round1_left=r1_left,
        round2_left=lambda side, x, y: ["zL"],
        round2_right=lambda side, x, y: ["zR"],
        name="ideal-f-bb84",
    )


def ideal_measure_oracle(f, bases, n_qubits, name="ideal-f-measure", copies=True):
    """Ideal oracle measuring Alice's qubits in ``bases[f(x, y)]``.

    The outcome registers are broadcast.  With ``copies`` each side outputs
    its own copy of the outcome; without, both rounds return the shared
    outcome registers, which is only meaningful when the oracle is inlined
    and its outcomes are used as controls.
    """
    qs = [f"Q{i}" for i in range(n_qubits)]

    def r1_left(side, x):
        side.send(*qs, to="O")

        def oracle(ctx, x, y):
            ctx.measure(*qs, basis=bases[f(x, y)])
            for q in qs:
                ctx.deliver(q, "L")

        side.oracle(oracle)

    def out(tag):
        def r2(side, x, y):
            if not copies:
                return list(qs)
            for i, q in enumerate(qs):
                side.compute(f"{tag}{i}", lambda b: b, [q])
            return [f"{tag}{i}" for i in range(n_qubits)]

        return r2

    return NlqcProtocol(
        left_inputs=tuple((q, 2) for q in qs),
        round1_left=r1_left,
        round2_left=out("zL"),
        round2_right=out("zR"),
        name=name,
    )


def ideal_fclifford(f, c0, c1):
    """Ideal f-Clifford oracle on Alice's ``A`` and Bob's ``B`` (one qubit each)."""

    def r1_left(side, x):
        side.send("A", to="O")

        def oracle(ctx, x, y):
            ctx.apply(c1 if f(x, y) else c0, "A", "B")
            ctx.deliver("A", "L")
            ctx.deliver("B", "R")

        side.oracle(oracle)

    def r1_right(side, y):
        side.send("B", to="O")

    return NlqcProtocol(
        left_inputs=(("A", 2),),
        right_inputs=(("B", 2),),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=lambda side, x, y: ["A"],
        round2_right=lambda side, x, y: ["B"],
        name="ideal-f-clifford",
    )


def negated_routing(p):
    """Same resource, but each side sends exactly the quantum systems it would have kept.

    Turns an f-routing protocol into a (not f)-routing protocol; the second
    round is run by the opposite party.
    """

    def flip(side):
        for n in side.registers():
            if side.is_classical(n):
                continue
            if side.sending(n):
                side.unsend(n)
            else:
                side.send(n)

    def r1_left(side, x):
        p.round1_left(side, x)
        flip(side)

    def r1_right(side, y):
        p.round1_right(side, y)
        flip(side)

    return NlqcProtocol(
        left_inputs=p.left_inputs,
        right_inputs=p.right_inputs,
        resource=p.resource,
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=lambda side, x, y: p.round2_right(side, x, y),
        round2_right=lambda side, x, y: p.round2_left(side, x, y),
        name="not-" + p.name,
    )


def _copy_prep(side, src, dst):
    """Copy ``src`` in the computational basis into a fresh qubit ``dst``."""
    side.prepare(dst)
    side.apply(CNOT, src, dst)


def _hadamard_copy(side, src, dst):
    """Copy ``src`` in the Hadamard basis into a fresh qubit ``dst``."""
    side.prepare(dst)
    side.apply(H, src)
    side.apply(CNOT, src, dst)
    side.apply(H, src)
    side.apply(H, dst)


def route_to_bb84(f, route, not_route):
    """f-BB84 from one f-route and one (not f)-route instance.

    Alice copies ``Q`` into C (computational basis), then Q into B and C
    into D (Hadamard basis).  B is f-routed, C is (not f)-routed, D is sent
    to Bob.  Each side measures its two qubits in basis H^f and outputs the
    parity.
    """
    r1 = inline(route, "r1.", {route.left_inputs[0][0]: "B"})
    r2 = inline(not_route, "r2.", {not_route.left_inputs[0][0]: "C"})

    def r1_left(side, x):
        _copy_prep(side, "Q", "C")
        _hadamard_copy(side, "Q", "B")
        _hadamard_copy(side, "C", "D")
        side.send("D")
        r1.round1_left(side, x)
        r2.round1_left(side, x)

    def r1_right(side, y):
        r1.round1_right(side, y)
        r2.round1_right(side, y)

    def finish(side, pair, x, y):
        side.measure(*pair, basis=np.kron(H, H) if f(x, y) else None)
        side.update(pair[0], lambda b: b, [pair[1]])
        return [pair[0]]

    def r2_left(side, x, y):
        got = r1.round2_left(side, x, y) + r2.round2_left(side, x, y)
        if len(got) != 1:
            raise WiringError("left side should hold exactly one routed qubit")
        return finish(side, ["Q", got[0]], x, y)

    def r2_right(side, x, y):
        got = r1.round2_right(side, x, y) + r2.round2_right(side, x, y)
        if len(got) != 1:
            raise WiringError("right side should hold exactly one routed qubit")
        return finish(side, ["D", got[0]], x, y)

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        resource=r1.resource() + r2.resource(),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=r2_left,
        round2_right=r2_right,
        name="route->bb84",
    )


def bb84_to_bell(f, fbb84):
    """f-Bell from one f-BB84 instance.

    CNOT on the input pair, f-BB84 on the first qubit, computational
    measurement of the second.  With f = 0 the outcome is (m1, m1 + m2); with
    f = 1 the Bell label is (m2, m1).
    """
    sub = inline(fbb84, "b.", {fbb84.left_inputs[0][0]: "Q0"})

    def r1_left(side, x):
        side.apply(CNOT, "Q0", "Q1")
        side.measure("Q1")
        sub.round1_left(side, x)

    def outputs(side, got, x, y, tag):
        z = got[0]
        side.compute(tag, lambda m: m, ["Q1"])
        if f(x, y):
            return [tag, z]
        side.update(tag, lambda m1: m1, [z])
        return [z, tag]

    return NlqcProtocol(
        left_inputs=(("Q0", 2), ("Q1", 2)),
        resource=sub.resource(),
        round1_left=r1_left,
        round1_right=lambda side, y: sub.round1_right(side, y),
        round2_left=lambda side, x, y: outputs(side, sub.round2_left(side, x, y), x, y, "zL"),
        round2_right=lambda side, x, y: outputs(side, sub.round2_right(side, x, y), x, y, "zR"),
        name="bb84->bell",
    )


def bell_target(fval):
    return measurement_target(BELL_BASIS if fval else np.eye(4))


def bell_to_clifford_measure(f, fbell, c0, c1):
    """f-Clifford-measure on one qubit from one f-Bell instance.

    Alice prepares Psi+ on (B, C), applies c0^dagger to the input A and
    c1^dagger c0 to C, and measures C.  The f-Bell oracle acts on (A, B).
    With f = 0 the output is the oracle's reading of A; with f = 1, A was
    teleported into C and the Pauli pushed through c1^dagger c0 flips the
    recorded bit.
    """
    c0 = np.asarray(c0, dtype=complex)
    c1 = np.asarray(c1, dtype=complex)
    v = c1.conj().T @ c0
    flip = {}
    for s1, s2 in itertools.product((0, 1), repeat=2):
        labels = conjugated_pauli(v, correction_labels((s1, s2)))
        flip[(s1, s2)] = 1 if labels in ("X", "Y") else 0
    sub = inline(fbell, "o.", {fbell.left_inputs[0][0]: "A", fbell.left_inputs[1][0]: "Bq"})

    def r1_left(side, x):
        side.prepare_state(["Bq", "C"], qcore.max_entangled(2).data, [2, 2])
        side.apply(c0.conj().T, "A")
        side.apply(v, "C")
        side.measure("C")
        sub.round1_left(side, x)

    def outputs(side, got, x, y, tag):
        za, zb = got
        if f(x, y):
            side.compute(tag, lambda c, a, b: c ^ flip[(a, b)], ["C", za, zb])
        else:
            side.compute(tag, lambda a: a, [za])
        return [tag]

    return NlqcProtocol(
        left_inputs=(("A", 2),),
        resource=sub.resource(),
        round1_left=r1_left,
        round1_right=lambda side, y: sub.round1_right(side, y),
        round2_left=lambda side, x, y: outputs(side, sub.round2_left(side, x, y), x, y, "zL"),
        round2_right=lambda side, x, y: outputs(side, sub.round2_right(side, x, y), x, y, "zR"),
        name="bell->clifford-measure",
    )


def _bell_pairs_basis(n_pairs, extra):
    """Basis change measuring consecutive qubit pairs in the Bell basis, the rest computationally."""
    m = np.ones((1, 1), dtype=complex)
    for _ in range(n_pairs):
        m = np.kron(m, BELL_BASIS)
    return np.kron(m, np.eye(2**extra))


def clifford_measure_to_clifford(f, fcm_factory, c0, c1):
    """f-Clifford on (A, B) from one f-Clifford-measure instance on six qubits.

    Bob teleports* B to Alice's ``e``.  Alice prepares, for i = 0, 1, two
    EPR pairs (a'_i, a''_i), (b'_i, b''_i), applies c_i to (a''_i, b''_i) and
    sends b''_i to Bob.  The oracle measures (A, e, a'_0, b'_0, a'_1, b'_1)
    with the Clifford pair that Bell-measures (A, a'_i), (e, b'_i), which
    teleports the input into the doubly primed pair i = f(x, y).
    ``fcm_factory(bases)`` returns the oracle protocol for the two bases.
    """
    c0 = np.asarray(c0, dtype=complex)
    c1 = np.asarray(c1, dtype=complex)
    cs = (c0, c1)
    # oracle qubit order: A, a0', e, b0', a1', b1'  (for i = 0: Bell on (A,a0'), (e,b0'))
    order = ["A", "a0p", "e", "b0p", "a1p", "b1p"]
    base0 = _bell_pairs_basis(2, 2)
    # for i = 1 the Bell pairs are (A, a1') and (e, b1'): permute factors
    perm1 = [0, 4, 2, 5, 1, 3]  # position in 'order' of each factor of base0's layout
    base1 = _permuted_basis(base0, perm1)
    oracle = fcm_factory((base0, base1))
    sub = inline(oracle, "m.", {f"Q{i}": order[i] for i in range(6)})
    tables = []
    for c in cs:
        t = {}
        for bits in itertools.product((0, 1), repeat=4):
            t[bits] = conjugated_pauli(c, correction_labels(bits))
        tables.append(t)

    def r1_left(side, x):
        for i in range(2):
            side.prepare_state([f"a{i}p", f"a{i}pp"], qcore.max_entangled(2).data, [2, 2])
            side.prepare_state([f"b{i}p", f"b{i}pp"], qcore.max_entangled(2).data, [2, 2])
            side.apply(cs[i], f"a{i}pp", f"b{i}pp")
            side.send(f"b{i}pp")
        sub.round1_left(side, x)

    def r1_right(side, y):
        side.bell_measure("B", "eR")
        sub.round1_right(side, y)

    def fix(side, x, y, which):
        got = (sub.round2_left if side.side == "L" else sub.round2_right)(side, x, y)
        i = f(x, y)
        # Bell labels sit on (A, a_i') and (e, b_i')
        ctrl = [got[0], got[1 + 3 * i], got[2], got[3 + 2 * i], "B", "eR"]
        target = f"{which}{i}pp"
        pos = 0 if which == "a" else 1
        table = tables[i]

        def pauli(s1, s2, s3, s4, t1, t2):
            bits = (s1, s2, s3 ^ t1, s4 ^ t2)
            return PAULIS[table[bits][pos]]

        side.controlled(pauli, [target], ctrl)
        return [target]

    return NlqcProtocol(
        left_inputs=(("A", 2),),
        right_inputs=(("B", 2),),
        resource=(ResourcePiece(("e", "eR"), qcore.max_entangled(2).data, (2, 2), ("L", "R")),)
        + sub.resource(),
        round1_left=r1_left,
        round1_right=r1_right,
        round2_left=lambda side, x, y: fix(side, x, y, "a"),
        round2_right=lambda side, x, y: fix(side, x, y, "b"),
        name="clifford-measure->clifford",
    )


def _permuted_basis(basis, perm):
    """Basis with qubit factor j moved to position perm[j], outcome bits included."""
    return qcore.permute_factors(basis, [2] * len(perm), np.argsort(perm))


def swap_to_route(f, fswap):
    """f-route from one f-SWAP instance: Bob inserts a fresh |0> as the partner."""
    sub = inline(fswap, "s.", {fswap.left_inputs[0][0]: "Q", fswap.right_inputs[0][0]: "anc"})

    def r1_right(side, y):
        side.prepare("anc")
        sub.round1_right(side, y)

    def out(side, got, x, y, want):
        if f(x, y) == want:
            return [got[0]]
        side.discard(got[0])
        return []

    return NlqcProtocol(
        left_inputs=(("Q", 2),),
        resource=sub.resource(),
        round1_left=lambda side, x: sub.round1_left(side, x),
        round1_right=r1_right,
        round2_left=lambda side, x, y: out(side, sub.round2_left(side, x, y), x, y, 0),
        round2_right=lambda side, x, y: out(side, sub.round2_right(side, x, y), x, y, 1),
        name="swap->route",
    )


REDUCTION_STEPS = (
    "route->BB84",
    "BB84->Bell",
    "Bell->CliffordMeasure",
    "CliffordMeasure->Clifford",
    "SWAP->route",
)

DEFAULT_MEASURE_PAIR = (H, S @ H)
DEFAULT_CLIFFORD_PAIR = (CNOT, qcore.SWAP)


def reduce_chain(step, f, oracle="auto", cliffords=None):
    """Protocol for one reduction step, with the oracle inlined.

    ``f`` is a ``BooleanFunctionTable``.  ``oracle`` selects how the
    sub-task is realized: ``'protocol'`` inlines a concrete protocol built
    from garden-hose f-routing (and the earlier steps), ``'ideal'`` uses an
    exact oracle stage between the rounds.  ``'auto'`` uses concrete
    protocols for the first three steps and ideal oracles for the last two.
    Returns ``(protocol, target)`` where ``target(x, y)`` gives
    ``(channel, sides)`` for the residual check.
    """
    from .gardenhose import garden_hose_routing

    fv = f.value
    if step not in REDUCTION_STEPS:
        raise ValueError(f"unknown reduction step {step!r}")
    concrete = oracle == "protocol" or (oracle == "auto" and step in REDUCTION_STEPS[:3])

    def fbb84():
        if concrete:
            route = garden_hose_routing(f)
            return route_to_bb84(fv, route, negated_routing(route))
        return ideal_fbb84(fv)

    def fbell():
        if concrete:
            return bb84_to_bell(fv, fbb84())
        return ideal_measure_oracle(fv, (np.eye(4), BELL_BASIS), 2, "ideal-f-bell")

    if step == "route->BB84":
        route = garden_hose_routing(f)
        p = route_to_bb84(fv, route, negated_routing(route))
        return p, lambda x, y: (bb84_target(fv(x, y)), ("L", "R"))
    if step == "BB84->Bell":
        p = bb84_to_bell(fv, fbb84())
        return p, lambda x, y: (bell_target(fv(x, y)), ("L", "L", "R", "R"))
    if step == "Bell->CliffordMeasure":
        c0, c1 = cliffords or DEFAULT_MEASURE_PAIR
        p = bell_to_clifford_measure(fv, fbell(), c0, c1)
        return p, lambda x, y: (measurement_target(c1 if fv(x, y) else c0), ("L", "R"))
    if step == "CliffordMeasure->Clifford":
        c0, c1 = cliffords or DEFAULT_CLIFFORD_PAIR
        if concrete:
            raise qcore.DimensionCapError(
                "a concrete six-qubit f-Clifford-measure protocol exceeds the dimension cap"
            )
        p = clifford_measure_to_clifford(
            fv, lambda bases: ideal_measure_oracle(fv, bases, 6, "ideal-f-clifford-measure", copies=False), c0, c1
        )
        return p, lambda x, y: (qcore.unitary_channel(c1 if fv(x, y) else c0, (2, 2)), ("L", "R"))
    # SWAP->route
    if concrete:
        raise qcore.DimensionCapError("a concrete f-SWAP protocol exceeds the dimension cap")
    p = swap_to_route(fv, ideal_fclifford(fv, np.eye(4), qcore.SWAP))
    return p, lambda x, y: (qcore.identity_channel((2,)), ("R",) if fv(x, y) else ("L",))


def reduction_residuals(step, f, oracle="auto", cliffords=None):
    """Residual for every (x, y); returns a dict keyed by (x, y).

    With ``oracle='auto'`` a step whose concrete sub-protocol exceeds the
    dimension cap is rerun with the ideal oracle.
    """
    if oracle == "auto":
        try:
            return reduction_residuals(step, f, "protocol" if step in REDUCTION_STEPS[:3] else "ideal", cliffords)
        except qcore.DimensionCapError:
            return reduction_residuals(step, f, "ideal", cliffords)
    p, target = reduce_chain(step, f, oracle, cliffords)
    out = {}
    for x in range(2**f.n):
        for y in range(2**f.n):
            ch, sides = target(x, y)
            out[(x, y)] = residual(p, x, y, ch, sides)
    return out
